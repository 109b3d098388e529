// Random-only, low-pass-only and hybrid bin selection over a range of
// cutoffs. At a cutoff equal to the input length all three keep every bin.

use std::error::Error;

use sffp::data::{synth_chirp, ChirpSpec};
use sffp::eval::{run_filter_sweep, ExperimentConfig, FilterStrategy};
use sffp::model::ModelConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (panel, _) = synth_chirp(&ChirpSpec {
        t_len: 400,
        noise_sigma: 0.3,
        trend_slope: 0.002,
        ..Default::default()
    })?;
    let m = 16;
    let mut cfg = ExperimentConfig {
        model: ModelConfig::new(m, 4, panel.bands()),
        repeats: 1,
        ..Default::default()
    };
    cfg.train.max_epochs = 3;
    cfg.train.patience = 2;
    let sweeps = run_filter_sweep(&panel, &[2, 4, m], &FilterStrategy::ALL, &cfg)?;
    for s in &sweeps {
        let row: Vec<String> = s.reports.iter().map(|r| format!("{:.5}", r.mse)).collect();
        println!("{:<13} {}", s.strategy, row.join("  "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
