// Test error as a function of a frozen fractional order, with the order an
// adaptive run settles on.

use std::error::Error;

use sffp::data::{synth_chirp, ChirpSpec};
use sffp::eval::{run_alpha_sweep, ExperimentConfig};
use sffp::fracfourier::order_grid;
use sffp::model::ModelConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (panel, oracle) = synth_chirp(&ChirpSpec {
        t_len: 400,
        chirp_rate: 1e-3,
        noise_sigma: 0.2,
        oracle_window: 16,
        ..Default::default()
    })?;
    println!("most concentrated order of the clean chirp: {oracle:.2}");
    let mut cfg = ExperimentConfig {
        model: ModelConfig::new(16, 4, panel.bands()),
        repeats: 1,
        ..Default::default()
    };
    cfg.train.max_epochs = 3;
    cfg.train.patience = 2;
    cfg.train.learning_rate = 5e-3;
    let sweep = run_alpha_sweep(&panel, &order_grid(-2.0, 2.0, 0.5), &cfg)?;
    let mut csv = Vec::new();
    sweep.write_plot_csv(&mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    println!("grid minimum {}  adaptive {:.3}", sweep.argmin(), sweep.learned_alpha.unwrap_or(f64::NAN));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
