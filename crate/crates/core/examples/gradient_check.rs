// Compares the hand-written reverse pass against central differences for
// every parameter group, including the fractional order.

use std::error::Error;

use nalgebra::DMatrix;
use num_complex::Complex64;
use sffp::data::WindowBatch;
use sffp::model::{ModelConfig, SffpModel};
use sffp::train::gradient_check;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut cfg = ModelConfig::new(8, 4, 2);
    cfg.init_alpha = 0.83;
    cfg.lowpass_cutoff = Some(3);
    cfg.random_high_count = Some(2);
    let mut model = SffpModel::new(&cfg)?;
    for (i, w) in model.filter_weights.iter_mut().enumerate() {
        *w = Complex64::new(1.0 + 0.1 * i as f64, -0.05 * i as f64);
    }
    model.revin_gamma = vec![1.2, 0.8];
    model.revin_beta = vec![0.1, -0.2];

    let batch = WindowBatch {
        inputs: (0..3)
            .map(|k| DMatrix::from_fn(8, 2, |t, b| ((t + 3 * k) as f64 * 0.9 + b as f64).sin()))
            .collect(),
        targets: (0..3)
            .map(|k| DMatrix::from_fn(4, 2, |t, b| ((t + 3 * k) as f64 * 0.5 - b as f64).cos()))
            .collect(),
        origin_indices: vec![0, 1, 2],
    };
    let report = gradient_check(&model, &batch, 1e-6, 1e-4)?;
    for g in &report.groups {
        println!("{:<16} {:.2e}", g.group, g.max_rel_error);
    }
    println!("passed: {}", report.passed);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
