//! Metrics and experiment runners: transformation ablation, order sweep and
//! filter-strategy sweep.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SeriesPanel, WindowBatch};
use crate::error::{Result, SffpError};
use crate::model::{forward_with, FilterConfig, ModelConfig, SffpModel, Transforms};
use crate::train::{train_on_windows, SplitWindows, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_tag: String,
    pub dataset_tag: String,
    pub p: usize,
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
    pub runtime_seconds: f64,
    /// Maximum epochs each training run was allowed.
    pub epoch_budget: usize,
    /// Standard deviation over repeats (0 for a single run).
    pub mse_std: f64,
    pub mae_std: f64,
}

impl MetricReport {
    pub fn satisfies_invariants(&self) -> bool {
        self.mse >= 0.0 && self.mae >= 0.0 && self.mae <= self.mse.sqrt() * (1.0 + 1e-12)
    }
}

/// Pooled MSE and MAE over every window, horizon step and channel.
pub fn evaluate(model: &SffpModel, test: &WindowBatch) -> Result<MetricReport> {
    if test.is_empty() {
        return Err(SffpError::InsufficientData("empty test set".into()));
    }
    let start = Instant::now();
    let tf = Transforms::new(model)?;
    let sums: Vec<(f64, f64, usize)> = test
        .inputs
        .par_iter()
        .zip(&test.targets)
        .map(|(x, y)| {
            let pred = forward_with(x, model, &tf)?.values;
            if pred.shape() != y.shape() {
                return Err(SffpError::shape(
                    format!("{}x{}", pred.nrows(), pred.ncols()),
                    format!("{}x{}", y.nrows(), y.ncols()),
                ));
            }
            let (mut se, mut ae) = (0.0, 0.0);
            for (a, b) in pred.iter().zip(y.iter()) {
                se += (a - b) * (a - b);
                ae += (a - b).abs();
            }
            Ok((se, ae, y.len()))
        })
        .collect::<Result<_>>()?;
    let (se, ae, n) = sums
        .iter()
        .fold((0.0, 0.0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    Ok(MetricReport {
        model_tag: "sffp".into(),
        dataset_tag: String::new(),
        p: model.p,
        mse: se / n as f64,
        mae: ae / n as f64,
        n_windows: test.len(),
        runtime_seconds: start.elapsed().as_secs_f64(),
        epoch_budget: 0,
        mse_std: 0.0,
        mae_std: 0.0,
    })
}

/// Shared settings of every experiment runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Independent repeats per variant; each shifts every seed by the repeat index.
    pub repeats: usize,
    pub dataset_tag: String,
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            repeats: 5,
            dataset_tag: "dataset".into(),
            record_timing: false,
        }
    }
}

/// How a variant overrides the base model and training settings.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Variant {
    alpha: f64,
    learn_alpha: bool,
    /// `None` means all-pass.
    filter: Option<(usize, usize)>,
}

fn run_variant(
    windows: &SplitWindows,
    cfg: &ExperimentConfig,
    variant: Variant,
    tag: &str,
) -> Result<(MetricReport, Vec<f64>)> {
    let start = Instant::now();
    let repeats = cfg.repeats.max(1);
    let mut runs = Vec::with_capacity(repeats);
    let mut learned = Vec::with_capacity(repeats);
    for r in 0..repeats as u64 {
        let mut mcfg = cfg.model.clone();
        mcfg.init_alpha = variant.alpha;
        mcfg.init_seed = cfg.model.init_seed.wrapping_add(r);
        mcfg.sampling_seed = cfg.model.sampling_seed.wrapping_add(r);
        if let Some((c, s)) = variant.filter {
            mcfg.lowpass_cutoff = Some(c);
            mcfg.random_high_count = Some(s);
        }
        let mut model = SffpModel::new(&mcfg)?;
        if variant.filter.is_none() {
            model.filter = FilterConfig::all_pass(mcfg.m);
        }
        let tcfg = TrainConfig {
            learn_alpha: variant.learn_alpha,
            seed: cfg.train.seed.wrapping_add(r),
            ..cfg.train.clone()
        };
        let out = train_on_windows(model, &windows.train, &windows.val, &tcfg)?;
        learned.push(out.model.canonical_alpha());
        runs.push(evaluate(&out.model, &windows.test)?);
    }
    let n = runs.len() as f64;
    let mse = runs.iter().map(|r| r.mse).sum::<f64>() / n;
    let mae = runs.iter().map(|r| r.mae).sum::<f64>() / n;
    let std = |f: fn(&MetricReport) -> f64, mean: f64| {
        (runs.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    Ok((
        MetricReport {
            model_tag: tag.to_string(),
            dataset_tag: cfg.dataset_tag.clone(),
            p: cfg.model.p,
            mse,
            mae,
            n_windows: windows.test.len(),
            runtime_seconds: if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
            epoch_budget: cfg.train.max_epochs,
            mse_std: std(|r| r.mse, mse),
            mae_std: std(|r| r.mae, mae),
        },
        learned,
    ))
}

fn prepare(panel: &SeriesPanel, cfg: &ExperimentConfig) -> Result<(SplitWindows, ExperimentConfig)> {
    let mut cfg = cfg.clone();
    cfg.model.f = panel.bands();
    let windows = SplitWindows::from_panel(panel, cfg.model.m, cfg.model.p, cfg.train.stride)?;
    Ok((windows, cfg))
}

/// Input-transformation variants compared by the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transformation {
    /// Time domain: order fixed at 0, all-pass filter.
    No,
    /// Order fixed at 1 with the configured filter.
    Fft,
    /// Learned order with the configured filter.
    Frft,
}

impl Transformation {
    pub const ALL: [Transformation; 3] = [Transformation::No, Transformation::Fft, Transformation::Frft];

    pub fn tag(self) -> &'static str {
        match self {
            Transformation::No => "no",
            Transformation::Fft => "fft",
            Transformation::Frft => "frft",
        }
    }
}

/// Trains each transformation variant with identical seeds, splits and
/// epoch budget, and reports test metrics.
pub fn run_transformation_ablation(
    panel: &SeriesPanel,
    cfg: &ExperimentConfig,
    variants: &[Transformation],
) -> Result<Vec<MetricReport>> {
    if variants.is_empty() {
        return Err(SffpError::Config("no transformations requested".into()));
    }
    let (windows, cfg) = prepare(panel, cfg)?;
    let default_filter = Some((cfg.model.effective_cutoff(), cfg.model.effective_random_count()));
    variants
        .par_iter()
        .map(|t| {
            let v = match t {
                Transformation::No => Variant {
                    alpha: 0.0,
                    learn_alpha: false,
                    filter: None,
                },
                Transformation::Fft => Variant {
                    alpha: 1.0,
                    learn_alpha: false,
                    filter: default_filter,
                },
                Transformation::Frft => Variant {
                    alpha: cfg.model.init_alpha,
                    learn_alpha: true,
                    filter: default_filter,
                },
            };
            run_variant(&windows, &cfg, v, t.tag()).map(|r| r.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_label: String,
    pub axis_values: Vec<f64>,
    pub reports: Vec<MetricReport>,
    pub strategy: String,
    /// Canonical order reached by the adaptive run, when one was trained.
    pub learned_alpha: Option<f64>,
    pub adaptive: Option<MetricReport>,
}

impl SweepResult {
    /// Axis value with the lowest MSE.
    pub fn argmin(&self) -> f64 {
        let (i, _) = self
            .reports
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, r)| {
                if r.mse < bv {
                    (i, r.mse)
                } else {
                    (bi, bv)
                }
            });
        self.axis_values[i]
    }

    /// Two-column `axis,mse` file, followed by the adaptive row when present.
    pub fn write_plot_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},mse", self.axis_label)?;
        for (a, r) in self.axis_values.iter().zip(&self.reports) {
            writeln!(w, "{a},{}", r.mse)?;
        }
        if let (Some(a), Some(r)) = (self.learned_alpha, &self.adaptive) {
            writeln!(w, "{a},{}", r.mse)?;
        }
        Ok(())
    }

    pub fn save_plot_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_plot_csv(&mut buf).map_err(|e| SffpError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| SffpError::io(path, e))
    }
}

/// Trains one frozen-order model per grid value plus one adaptive model.
pub fn run_alpha_sweep(
    panel: &SeriesPanel,
    alpha_grid: &[f64],
    cfg: &ExperimentConfig,
) -> Result<SweepResult> {
    if alpha_grid.is_empty() {
        return Err(SffpError::Config("empty order grid".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(-2.0..=2.0).contains(*a)) {
        return Err(SffpError::Config(format!("order {a} outside [-2, 2]")));
    }
    let (windows, cfg) = prepare(panel, cfg)?;
    let filter = Some((cfg.model.effective_cutoff(), cfg.model.effective_random_count()));
    let reports = alpha_grid
        .par_iter()
        .map(|&a| {
            let v = Variant {
                alpha: a,
                learn_alpha: false,
                filter,
            };
            run_variant(&windows, &cfg, v, &format!("alpha={a}")).map(|r| r.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let adaptive_variant = Variant {
        alpha: cfg.model.init_alpha,
        learn_alpha: true,
        filter,
    };
    let (adaptive, learned) = run_variant(&windows, &cfg, adaptive_variant, "adaptive")?;
    let learned_alpha = learned.iter().sum::<f64>() / learned.len() as f64;
    Ok(SweepResult {
        axis_label: "alpha".into(),
        axis_values: alpha_grid.to_vec(),
        reports,
        strategy: "fixed-alpha".into(),
        learned_alpha: Some(learned_alpha),
        adaptive: Some(adaptive),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterStrategy {
    RandomOnly,
    LowpassOnly,
    Hybrid,
}

impl FilterStrategy {
    pub const ALL: [FilterStrategy; 3] = [
        FilterStrategy::RandomOnly,
        FilterStrategy::LowpassOnly,
        FilterStrategy::Hybrid,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FilterStrategy::RandomOnly => "random-only",
            FilterStrategy::LowpassOnly => "lowpass-only",
            FilterStrategy::Hybrid => "hybrid",
        }
    }

    /// `(lowpass cutoff, random count)` for cutoff `c`.
    pub fn filter(self, c: usize, default_random: usize) -> (usize, usize) {
        match self {
            FilterStrategy::RandomOnly => (0, c),
            FilterStrategy::LowpassOnly => (c, 0),
            FilterStrategy::Hybrid => (c, default_random),
        }
    }
}

impl fmt::Display for FilterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FilterStrategy {
    type Err = SffpError;

    fn from_str(s: &str) -> Result<Self> {
        FilterStrategy::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| SffpError::Config(format!("unknown filter strategy {s:?}")))
    }
}

/// One sweep per strategy over absolute low-pass cutoffs (in bins).
pub fn run_filter_sweep(
    panel: &SeriesPanel,
    cutoff_grid: &[usize],
    strategies: &[FilterStrategy],
    cfg: &ExperimentConfig,
) -> Result<Vec<SweepResult>> {
    if cutoff_grid.is_empty() || strategies.is_empty() {
        return Err(SffpError::Config("empty cutoff grid or strategy list".into()));
    }
    let (windows, cfg) = prepare(panel, cfg)?;
    if let Some(c) = cutoff_grid.iter().find(|&&c| c > cfg.model.m) {
        return Err(SffpError::Config(format!(
            "cutoff {c} exceeds input length {}",
            cfg.model.m
        )));
    }
    let default_random = cfg.model.effective_random_count();
    let jobs: Vec<(FilterStrategy, usize)> = strategies
        .iter()
        .flat_map(|&s| cutoff_grid.iter().map(move |&c| (s, c)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(s, c)| {
            let v = Variant {
                alpha: cfg.model.init_alpha,
                learn_alpha: true,
                filter: Some(s.filter(c, default_random)),
            };
            run_variant(&windows, &cfg, v, &format!("{}@{c}", s.tag())).map(|r| r.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(strategies
        .iter()
        .enumerate()
        .map(|(i, s)| SweepResult {
            axis_label: "cutoff".into(),
            axis_values: cutoff_grid.iter().map(|&c| c as f64).collect(),
            reports: reports[i * cutoff_grid.len()..(i + 1) * cutoff_grid.len()].to_vec(),
            strategy: s.tag().into(),
            learned_alpha: None,
            adaptive: None,
        })
        .collect())
}

/// True when every report was trained under the same epoch budget.
pub fn budgets_equal(reports: &[MetricReport]) -> bool {
    reports.windows(2).all(|w| w[0].epoch_budget == w[1].epoch_budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "model_tag",
    "dataset_tag",
    "p",
    "mse",
    "mae",
    "n_windows",
    "runtime_seconds",
    "epoch_budget",
    "mse_std",
    "mae_std",
];

fn sorted(reports: &[MetricReport]) -> Vec<MetricReport> {
    let mut out = reports.to_vec();
    out.sort_by(|a, b| a.model_tag.cmp(&b.model_tag).then(a.p.cmp(&b.p)));
    out
}

pub fn write_report<W: Write>(reports: &[MetricReport], format: ReportFormat, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| SffpError::io("<report>", e);
    let rows = sorted(reports);
    match format {
        ReportFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(REPORT_COLUMNS)
                .map_err(|e| SffpError::Config(e.to_string()))?;
            for r in &rows {
                out.write_record([
                    r.model_tag.clone(),
                    r.dataset_tag.clone(),
                    r.p.to_string(),
                    r.mse.to_string(),
                    r.mae.to_string(),
                    r.n_windows.to_string(),
                    r.runtime_seconds.to_string(),
                    r.epoch_budget.to_string(),
                    r.mse_std.to_string(),
                    r.mae_std.to_string(),
                ])
                .map_err(|e| SffpError::Config(e.to_string()))?;
            }
            out.flush().map_err(io)
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &rows)
                .map_err(|e| SffpError::Config(e.to_string()))?;
            writeln!(w).map_err(io)
        }
    }
}

/// Writes reports sorted by `(model_tag, p)`.
pub fn emit_report(reports: &[MetricReport], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    if reports.is_empty() {
        return Err(SffpError::Config("no reports to write".into()));
    }
    let mut buf = Vec::new();
    write_report(reports, format, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| SffpError::io(path, e))
}

pub fn read_json_report(path: impl AsRef<Path>) -> Result<Vec<MetricReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SffpError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SffpError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ComplexLinear;
    use nalgebra::DMatrix;

    fn report(tag: &str, p: usize, mse: f64) -> MetricReport {
        MetricReport {
            model_tag: tag.into(),
            dataset_tag: "synthetic".into(),
            p,
            mse,
            mae: mse.sqrt() * 0.8,
            n_windows: 10,
            runtime_seconds: 0.0,
            epoch_budget: 3,
            mse_std: 0.0,
            mae_std: 0.0,
        }
    }

    #[test]
    fn perfect_copy_model_scores_zero() {
        let mut cfg = ModelConfig::new(8, 4, 1);
        cfg.init_alpha = 0.0;
        let mut model = SffpModel::new(&cfg).unwrap();
        model.filter = FilterConfig::all_pass(8);
        model.heads[0] = ComplexLinear::zeros(4, 8);
        for i in 0..4 {
            model.heads[0].real[(i, i)] = 1.0;
        }
        let mut batch = WindowBatch::default();
        for k in 0..5 {
            let x = DMatrix::from_fn(8, 1, |r, _| ((r + k) as f64).sin());
            batch.targets.push(x.rows(0, 4).into_owned());
            batch.inputs.push(x);
            batch.origin_indices.push(k);
        }
        let r = evaluate(&model, &batch).unwrap();
        assert!(r.mse < 1e-20 && r.mae < 1e-10);
        assert!(evaluate(&model, &WindowBatch::default()).is_err());
    }

    #[test]
    fn csv_report_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_report(&[report("frft", 24, 0.5)], &path, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("model_tag,dataset_tag,p,mse,mae,n_windows,runtime_seconds"));
        assert!(emit_report(&[], &path, ReportFormat::Csv).is_err());
    }

    #[test]
    fn json_report_round_trips_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let reports = vec![report("no", 48, 0.7), report("fft", 24, 0.6), report("no", 24, 0.5)];
        emit_report(&reports, &path, ReportFormat::Json).unwrap();
        let back = read_json_report(&path).unwrap();
        let keys: Vec<(String, usize)> = back.iter().map(|r| (r.model_tag.clone(), r.p)).collect();
        assert_eq!(
            keys,
            vec![("fft".into(), 24), ("no".into(), 24), ("no".into(), 48)]
        );
        assert_eq!(back[0], reports[1]);
    }

    #[test]
    fn missing_directory_error_names_path() {
        let err = emit_report(&[report("a", 1, 0.1)], "/nonexistent/dir/r.csv", ReportFormat::Csv)
            .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/r.csv"));
    }

    #[test]
    fn budget_check() {
        let mut a = report("a", 1, 0.1);
        let b = report("b", 1, 0.1);
        assert!(budgets_equal(&[a.clone(), b.clone()]));
        a.epoch_budget = 9;
        assert!(!budgets_equal(&[a, b]));
    }

    #[test]
    fn strategy_filters() {
        assert_eq!(FilterStrategy::RandomOnly.filter(6, 3), (0, 6));
        assert_eq!(FilterStrategy::LowpassOnly.filter(6, 3), (6, 0));
        assert_eq!(FilterStrategy::Hybrid.filter(6, 3), (6, 3));
        assert_eq!("hybrid".parse::<FilterStrategy>().unwrap(), FilterStrategy::Hybrid);
        assert!("bogus".parse::<FilterStrategy>().is_err());
    }
}
