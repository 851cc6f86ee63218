use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use wrdpg_core::generator::{replicate, GeneratorOptions, ModelKind};
use wrdpg_core::model::{sample_sbm_graph, MomentProvider, SbmSpec};

fn main() {
    let values: Vec<f64> = (1..=10).map(|v| v as f64).collect();
    let probs: Vec<f64> = (1..=10).map(|v| if v == 5 { 0.5 } else { 1.0 / 18.0 }).collect();
    let d = MomentProvider::Discrete { values, probs };
    let spec = SbmSpec {
        communities: 2,
        pi: vec![0.7, 0.3],
        b: vec![vec![0.7, 0.2], vec![0.2, 0.5]],
        dists: vec![vec![d.clone(), d.clone()], vec![d.clone(), d]],
        n: None,
        seed: None,
    };
    let assignments = spec.assignments(200);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let g = sample_sbm_graph(&spec, &assignments, &mut rng).unwrap();
    let t0 = Instant::now();
    let reps = replicate(&g, 2, 2, &ModelKind::Mixed { support: None }, 2, 818,
        &GeneratorOptions::for_estimated_moments()).unwrap();
    println!("replicate n=200 K=2 mixed reps=2: {:?} ({} graphs)", t0.elapsed(), reps.len());
}
