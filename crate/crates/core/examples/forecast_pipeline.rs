// One forward pass through the pipeline, the identity configuration and a
// checkpoint round-trip followed by a CSV-style forecast.

use std::error::Error;

use nalgebra::DMatrix;
use sffp::cli::forecast_panel;
use sffp::data::SeriesPanel;
use sffp::model::{forward, revin_denormalize, revin_normalize, ModelConfig, SffpModel};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (m, p, f) = (16, 4, 3);
    let x = DMatrix::from_fn(m, f, |t, b| 10.0 * b as f64 + (0.4 * t as f64 + b as f64).sin());

    let mut cfg = ModelConfig::new(m, p, f);
    cfg.init_alpha = 0.6;
    let model = SffpModel::new(&cfg)?;
    let out = forward(&x, &model)?;
    println!("forecast {}x{} at order {:.2}", out.values.nrows(), out.values.ncols(), out.alpha);
    println!("largest discarded imaginary part {:.3e}", out.max_imag_residual);

    let (z, stats) = revin_normalize(&x, &model);
    let back = revin_denormalize(&z.rows(0, m).into_owned(), &stats, &model)?;
    println!("revin round-trip error {:.2e}", (back - &x).amax());

    let identity = SffpModel::identity_path(m, p, f, m - p)?;
    let copy = forward(&x, &identity)?;
    println!(
        "identity path reproduces the last {p} rows: error {:.2e}",
        (copy.values - x.rows(m - p, p)).amax()
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("checkpoint.json");
    model.save(&path)?;
    let restored = SffpModel::load(&path)?;
    println!("checkpoint round-trip exact: {}", restored == model);

    let panel = SeriesPanel::from_values(x, 60);
    let forecast = forecast_panel(&restored, &panel)?;
    println!("forecast timestamps {:?}", forecast.timestamps);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
