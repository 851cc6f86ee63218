use std::time::Instant;
use wrdpg_core::generator::{fit_edge_model, GeneratorOptions, ModelKind};
use wrdpg_core::model::MomentSequence;

fn main() {
    // typical estimated pair moments for the 4.1 SBM at K = 2
    let m = MomentSequence::new(vec![1.0, 3.71, 22.9]).unwrap();
    let opts = GeneratorOptions::for_estimated_moments();
    let kind = ModelKind::Mixed { support: None };
    let t0 = Instant::now();
    let iters = 200;
    for i in 0..iters {
        let p0 = 0.28 + (i as f64) * 1e-4;
        let _ = fit_edge_model(&m, p0, &kind, Some(10.0), &opts).unwrap();
    }
    println!("mixed fit: {:?} per fit", t0.elapsed() / iters);
}
