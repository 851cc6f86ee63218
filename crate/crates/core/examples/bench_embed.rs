use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use wrdpg_core::model::{sample_sbm_graph, MomentProvider, SbmSpec};
use wrdpg_core::spectral::{embed_moments, NegativePolicy};

fn main() {
    let spec = SbmSpec {
        communities: 1,
        pi: vec![1.0],
        b: vec![vec![0.5]],
        dists: vec![vec![MomentProvider::Normal { mean: 1.0, std_dev: 0.1 }]],
        n: None,
        seed: None,
    };
    let assignments = spec.assignments(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t0 = Instant::now();
    let g = sample_sbm_graph(&spec, &assignments, &mut rng).unwrap();
    println!("sample: {:?}", t0.elapsed());
    let t0 = Instant::now();
    let e = embed_moments(&g, 1, 6, NegativePolicy::Clamp).unwrap();
    println!("embed K=6: {:?} (eigs {:?})", t0.elapsed(), e.iter().map(|x| x.eigvals()[0]).collect::<Vec<_>>());
    // per-k timing
    for k in 1..=6 {
        let t0 = Instant::now();
        let m = g.hadamard_power(k).unwrap();
        let t1 = t0.elapsed();
        let t0 = Instant::now();
        let _ = wrdpg_core::spectral::ase(&m, 1, NegativePolicy::Clamp).unwrap();
        println!("k={k}: hadamard {t1:?} ase {:?}", t0.elapsed());
    }
}
