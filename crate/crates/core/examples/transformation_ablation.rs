// Time domain versus Fourier versus learned fractional input under the same
// seeds, splits and epoch budget.

use std::error::Error;

use sffp::data::{synth_chirp, ChirpSpec};
use sffp::eval::{run_transformation_ablation, write_report, ExperimentConfig, ReportFormat, Transformation};
use sffp::model::ModelConfig;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (panel, _) = synth_chirp(&ChirpSpec {
        t_len: 500,
        chirp_rate: 2e-4,
        f0: 0.05,
        noise_sigma: 0.3,
        trend_slope: 0.005,
        ..Default::default()
    })?;
    let mut cfg = ExperimentConfig {
        model: ModelConfig::new(16, 4, panel.bands()),
        repeats: 1,
        dataset_tag: "chirp".into(),
        ..Default::default()
    };
    cfg.train.max_epochs = 4;
    cfg.train.patience = 2;
    cfg.train.learning_rate = 5e-3;
    let reports = run_transformation_ablation(&panel, &cfg, &Transformation::ALL)?;
    let mut csv = Vec::new();
    write_report(&reports, ReportFormat::Csv, &mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
