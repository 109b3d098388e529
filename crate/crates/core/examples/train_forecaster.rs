// Trains a forecaster on a synthetic trend panel with early stopping and
// reports test metrics and the learned order.

use std::error::Error;

use sffp::data::{synth_trend_noise, TrendSpec};
use sffp::eval::evaluate;
use sffp::model::{ModelConfig, SffpModel};
use sffp::train::{train_on_windows, SplitWindows, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let panel = synth_trend_noise(&TrendSpec {
        t_len: 600,
        f_bands: 2,
        slope: 0.01,
        ar1_phi: 0.8,
        noise_sigma: 0.2,
        seed: 3,
        ..Default::default()
    })?;
    let (m, p) = (24, 6);
    let windows = SplitWindows::from_panel(&panel, m, p, 1)?;
    let model = SffpModel::new(&ModelConfig::new(m, p, panel.bands()))?;
    let cfg = TrainConfig {
        learning_rate: 5e-3,
        alpha_learning_rate: 5e-2,
        max_epochs: 8,
        patience: 3,
        ..Default::default()
    };
    let outcome = train_on_windows(model, &windows.train, &windows.val, &cfg)?;
    for r in &outcome.history.records {
        println!(
            "epoch {:>2}  train {:.5}  val {:.5}  alpha {:+.4}",
            r.epoch, r.train_mse, r.val_mse, r.alpha
        );
    }
    let report = evaluate(&outcome.model, &windows.test)?;
    println!(
        "best epoch {}  test mse {:.5}  mae {:.5}  over {} windows",
        outcome.best_epoch, report.mse, report.mae, report.n_windows
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
