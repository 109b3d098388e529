//! Command-line driver. Every subcommand resolves a [`RunConfig`] from
//! defaults, an optional TOML file and flags (in that order of precedence),
//! writes the effective config into its output directory and then runs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, periodogram, save_csv, synth_chirp, synth_trend_noise, ChirpSpec, SeriesPanel,
    TrendSpec,
};
use crate::error::{Result, SffpError};
use crate::eval::{
    emit_report, evaluate, run_alpha_sweep, run_filter_sweep, run_transformation_ablation,
    ExperimentConfig, FilterStrategy, MetricReport, ReportFormat, Transformation,
};
use crate::fracfourier::{concentration_profile, most_concentrated_order, order_grid};
use crate::model::{forward, ModelConfig, SffpModel};
use crate::train::{gradient_check, train_on_windows, SplitWindows, TrainConfig};

/// Environment variable naming the directory under which runs without an
/// explicit output directory are written.
pub const OUTPUT_ROOT_ENV: &str = "SFFP_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";
pub const CONFIG_FILE: &str = "config.toml";

/// Where the panel comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf },
    Chirp(ChirpSpec),
    Trend(TrendSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Chirp(ChirpSpec::default())
    }
}

impl DataSource {
    pub fn load(&self) -> Result<SeriesPanel> {
        match self {
            DataSource::Csv { path } => Ok(load_csv(path)?.0),
            DataSource::Chirp(spec) => Ok(synth_chirp(spec)?.0),
            DataSource::Trend(spec) => synth_trend_noise(spec),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            DataSource::Csv { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            DataSource::Chirp(_) => "chirp".into(),
            DataSource::Trend(_) => "trend".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub alpha_grid: Vec<f64>,
    /// Empty means `M/8, M/4, M/2, M`.
    pub cutoffs: Vec<usize>,
    pub strategies: Vec<FilterStrategy>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            alpha_grid: order_grid(-2.0, 2.0, 0.5),
            cutoffs: Vec::new(),
            strategies: FilterStrategy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PredictSettings {
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the configured data source.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeSettings {
    /// Step of the order grid for the concentration profile.
    pub profile_step: f64,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings { profile_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckSettings {
    pub step: f64,
    pub tolerance: f64,
    /// Number of leading training windows in the checked batch.
    pub windows: usize,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            step: 1e-6,
            tolerance: 1e-4,
            windows: 4,
        }
    }
}

/// Everything a run needs. Serialized verbatim as `config.toml` in the run
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    /// Defaults to the data source name.
    pub dataset_tag: Option<String>,
    pub repeats: usize,
    pub record_timing: bool,
    pub report_format: ReportFormat,
    pub data: DataSource,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepSettings,
    pub predict: PredictSettings,
    pub analyze: AnalyzeSettings,
    pub gradcheck: GradcheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: None,
            dataset_tag: None,
            repeats: 1,
            record_timing: false,
            report_format: ReportFormat::Csv,
            data: DataSource::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepSettings::default(),
            predict: PredictSettings::default(),
            analyze: AnalyzeSettings::default(),
            gradcheck: GradcheckSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SffpError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| SffpError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| SffpError::Config(e.to_string()))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: self.model.clone(),
            train: TrainConfig {
                record_timing: self.record_timing,
                ..self.train.clone()
            },
            repeats: self.repeats,
            dataset_tag: self.dataset_tag.clone().unwrap_or_else(|| self.data.tag()),
            record_timing: self.record_timing,
        }
    }

    /// `output_dir`, or `$SFFP_OUTPUT_ROOT/<command>` (`runs/<command>` when
    /// the variable is unset).
    pub fn resolve_output_dir(&self, command: &str) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
                .join(command)
        })
    }

    fn cutoffs(&self) -> Vec<usize> {
        if !self.sweep.cutoffs.is_empty() {
            return self.sweep.cutoffs.clone();
        }
        let m = self.model.m;
        let mut c: Vec<usize> = [m / 8, m / 4, m / 2, m].into_iter().filter(|&c| c > 0).collect();
        c.dedup();
        c
    }
}

#[derive(Debug, Parser)]
#[command(name = "sffp", version, about = "Fractional Fourier forecaster for spectrum measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a forecaster and write checkpoint, history and test metrics.
    Train(CommonArgs),
    /// Forecast the next P rows after the last M rows of a CSV.
    Predict(PredictArgs),
    /// Compare time-domain, Fourier and fractional inputs.
    Ablate(CommonArgs),
    /// Train one frozen-order model per grid point plus an adaptive one.
    SweepAlpha(SweepAlphaArgs),
    /// Compare filter strategies over low-pass cutoffs.
    SweepFilter(SweepFilterArgs),
    /// Write periodograms and fractional concentration profiles.
    Analyze(AnalyzeArgs),
    /// Check analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Ablate(_) => "ablate",
            Command::SweepAlpha(_) => "sweep-alpha",
            Command::SweepFilter(_) => "sweep-filter",
            Command::Analyze(_) => "analyze",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Train(c) | Command::Ablate(c) => c,
            Command::Predict(a) => &a.common,
            Command::SweepAlpha(a) => &a.common,
            Command::SweepFilter(a) => &a.common,
            Command::Analyze(a) => &a.common,
            Command::Gradcheck(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Panel CSV (timestamp column, then one column per band).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: $SFFP_OUTPUT_ROOT/<command>].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Input length M.
    #[arg(long)]
    pub input_len: Option<usize>,
    /// Forecast horizon P.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seed for initialisation, bin sampling and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    /// Windows per optimiser step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate for the weights
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam learning rate for the order
    #[arg(long)]
    pub alpha_lr: Option<f64>,
    /// Initial transform order
    #[arg(long, allow_hyphen_values = true)]
    pub init_alpha: Option<f64>,
    /// Keep the order at its initial value.
    #[arg(long)]
    pub freeze_alpha: bool,
    /// Low-pass cutoff in bins.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Randomly retained high bins.
    #[arg(long)]
    pub random_bins: Option<usize>,
    /// One head per channel instead of a shared head.
    #[arg(long)]
    pub per_channel: bool,
    /// Step between consecutive windows
    #[arg(long)]
    pub stride: Option<usize>,
    /// Independent repeats per variant
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report format
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Record wall-clock times (makes outputs run-dependent).
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CSV whose last M rows form the input window.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepAlphaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated orders in [-2, 2].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepFilterArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// Comma-separated subset of random-only, lowpass-only, hybrid.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<FilterStrategy>>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub profile_step: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub windows: Option<usize>,
}

fn apply_common(cfg: &mut RunConfig, a: &CommonArgs) {
    if let Some(path) = &a.data {
        cfg.data = DataSource::Csv { path: path.clone() };
    }
    if let Some(v) = &a.output {
        cfg.output_dir = Some(v.clone());
    }
    if let Some(v) = a.input_len {
        cfg.model.m = v;
    }
    if let Some(v) = a.horizon {
        cfg.model.p = v;
    }
    if let Some(v) = a.seed {
        cfg.model.init_seed = v;
        cfg.model.sampling_seed = v;
        cfg.train.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.max_epochs = v;
        if a.patience.is_none() {
            cfg.train.patience = cfg.train.patience.min(v.max(1));
        }
    }
    if let Some(v) = a.patience {
        cfg.train.patience = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.alpha_lr {
        cfg.train.alpha_learning_rate = v;
    }
    if let Some(v) = a.init_alpha {
        cfg.model.init_alpha = v;
    }
    if a.freeze_alpha {
        cfg.train.learn_alpha = false;
    }
    if let Some(v) = a.cutoff {
        cfg.model.lowpass_cutoff = Some(v);
    }
    if let Some(v) = a.random_bins {
        cfg.model.random_high_count = Some(v);
    }
    if a.per_channel {
        cfg.model.channel_shared = false;
    }
    if let Some(v) = a.stride {
        cfg.train.stride = v;
    }
    if let Some(v) = a.repeats {
        cfg.repeats = v;
    }
    if let Some(v) = a.threads {
        cfg.train.threads = v;
    }
    if let Some(v) = a.format {
        cfg.report_format = match v {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        };
    }
    if a.record_timing {
        cfg.record_timing = true;
    }
}

/// Merges defaults, the config file named by the command and its flags.
pub fn resolve_config(command: &Command) -> Result<RunConfig> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_common(&mut cfg, common);
    match command {
        Command::Predict(a) => {
            if let Some(v) = &a.checkpoint {
                cfg.predict.checkpoint = Some(v.clone());
            }
            if let Some(v) = &a.input {
                cfg.predict.input = Some(v.clone());
            }
        }
        Command::SweepAlpha(a) => {
            if let Some(v) = &a.grid {
                cfg.sweep.alpha_grid = v.clone();
            }
        }
        Command::SweepFilter(a) => {
            if let Some(v) = &a.cutoffs {
                cfg.sweep.cutoffs = v.clone();
            }
            if let Some(v) = &a.strategies {
                cfg.sweep.strategies = v.clone();
            }
        }
        Command::Analyze(a) => {
            if let Some(v) = a.profile_step {
                cfg.analyze.profile_step = v;
            }
        }
        Command::Gradcheck(a) => {
            if let Some(v) = a.step {
                cfg.gradcheck.step = v;
            }
            if let Some(v) = a.tolerance {
                cfg.gradcheck.tolerance = v;
            }
            if let Some(v) = a.windows {
                cfg.gradcheck.windows = v;
            }
        }
        Command::Train(_) | Command::Ablate(_) => {}
    }
    if matches!(command, Command::SweepFilter(_)) {
        cfg.sweep.cutoffs = cfg.cutoffs();
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| SffpError::io(path, e))
}

fn report_name(cfg: &RunConfig, stem: &str) -> String {
    match cfg.report_format {
        ReportFormat::Csv => format!("{stem}.csv"),
        ReportFormat::Json => format!("{stem}.json"),
    }
}

fn print_reports(reports: &[MetricReport]) {
    for r in reports {
        println!(
            "{:<20} p={:<4} mse={:.6} mae={:.6} windows={}",
            r.model_tag, r.p, r.mse, r.mae, r.n_windows
        );
    }
}

/// Runs a resolved command, writing into `out`.
pub fn execute(command: &Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| SffpError::io(out, e))?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml()?)?;
    let run = || match command {
        Command::Train(_) => cmd_train(cfg, out),
        Command::Predict(_) => cmd_predict(cfg, out),
        Command::Ablate(_) => cmd_ablate(cfg, out),
        Command::SweepAlpha(_) => cmd_sweep_alpha(cfg, out),
        Command::SweepFilter(_) => cmd_sweep_filter(cfg, out),
        Command::Analyze(_) => cmd_analyze(cfg, out),
        Command::Gradcheck(_) => cmd_gradcheck(cfg, out),
    };
    if cfg.train.threads == 0 {
        return run();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.train.threads)
        .build()
        .map_err(|e| SffpError::Config(format!("thread pool: {e}")))?
        .install(run)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let panel = cfg.data.load()?;
    let exp = cfg.experiment();
    let mut mcfg = exp.model.clone();
    mcfg.f = panel.bands();
    let windows = SplitWindows::from_panel(&panel, mcfg.m, mcfg.p, exp.train.stride)?;
    let model = SffpModel::new(&mcfg)?;
    let outcome = train_on_windows(model, &windows.train, &windows.val, &exp.train)?;
    outcome.model.save(out.join("checkpoint.json"))?;
    outcome.history.save_csv(out.join("history.csv"))?;
    let finish = |mut r: MetricReport, tag: &str| {
        r.model_tag = tag.into();
        r.dataset_tag = exp.dataset_tag.clone();
        r.epoch_budget = exp.train.max_epochs;
        if !cfg.record_timing {
            r.runtime_seconds = 0.0;
        }
        r
    };
    let val = finish(evaluate(&outcome.model, &windows.val)?, "sffp-val");
    let test = finish(evaluate(&outcome.model, &windows.test)?, "sffp-test");
    emit_report(
        &[val.clone(), test.clone()],
        out.join(report_name(cfg, "report")),
        cfg.report_format,
    )?;
    println!(
        "epochs={} best_epoch={} alpha={:.4}",
        outcome.epochs_run,
        outcome.best_epoch,
        outcome.model.canonical_alpha()
    );
    println!("val  mse={:.6} mae={:.6}", val.mse, val.mae);
    println!("test mse={:.6} mae={:.6}", test.mse, test.mae);
    Ok(())
}

pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> Result<()> {
    let checkpoint = cfg
        .predict
        .checkpoint
        .as_ref()
        .ok_or_else(|| SffpError::Config("predict needs a checkpoint".into()))?;
    let model = SffpModel::load(checkpoint)?;
    let panel = match &cfg.predict.input {
        Some(path) => load_csv(path)?.0,
        None => cfg.data.load()?,
    };
    let forecast = forecast_panel(&model, &panel)?;
    let path = out.join("forecast.csv");
    save_csv(&forecast, &path)?;
    println!("wrote {} ({} rows x {} bands)", path.display(), forecast.len(), forecast.bands());
    Ok(())
}

/// Forecasts the `P` rows after the last `M` rows of `panel`, with
/// timestamps continuing at the panel's sample interval.
pub fn forecast_panel(model: &SffpModel, panel: &SeriesPanel) -> Result<SeriesPanel> {
    if panel.bands() != model.f {
        return Err(SffpError::Config(format!(
            "checkpoint expects {} bands, input has {}",
            model.f,
            panel.bands()
        )));
    }
    if panel.len() < model.m {
        return Err(SffpError::InsufficientData(format!(
            "input has {} rows, model needs {}",
            panel.len(),
            model.m
        )));
    }
    let window = panel.tail(model.m);
    let pred = forward(&window.values, model)?;
    let last = *window.timestamps.last().expect("window is non-empty");
    Ok(SeriesPanel {
        values: pred.values,
        timestamps: (1..=model.p as i64).map(|k| last + k * panel.sample_interval).collect(),
        band_labels: panel.band_labels.clone(),
        sample_interval: panel.sample_interval,
        time_format: panel.time_format,
    })
}

pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let panel = cfg.data.load()?;
    let reports = run_transformation_ablation(&panel, &cfg.experiment(), &Transformation::ALL)?;
    emit_report(&reports, out.join(report_name(cfg, "report")), cfg.report_format)?;
    print_reports(&reports);
    Ok(())
}

pub fn cmd_sweep_alpha(cfg: &RunConfig, out: &Path) -> Result<()> {
    let panel = cfg.data.load()?;
    let sweep = run_alpha_sweep(&panel, &cfg.sweep.alpha_grid, &cfg.experiment())?;
    sweep.save_plot_csv(out.join("alpha_sweep.csv"))?;
    let mut reports = sweep.reports.clone();
    reports.extend(sweep.adaptive.clone());
    emit_report(&reports, out.join(report_name(cfg, "report")), cfg.report_format)?;
    print_reports(&reports);
    println!("grid minimum at alpha={}", sweep.argmin());
    if let Some(a) = sweep.learned_alpha {
        println!("adaptive alpha={a:.4}");
    }
    Ok(())
}

pub fn cmd_sweep_filter(cfg: &RunConfig, out: &Path) -> Result<()> {
    let panel = cfg.data.load()?;
    let sweeps = run_filter_sweep(&panel, &cfg.sweep.cutoffs, &cfg.sweep.strategies, &cfg.experiment())?;
    let mut reports = Vec::new();
    for s in &sweeps {
        s.save_plot_csv(out.join(format!("filter_{}.csv", s.strategy)))?;
        reports.extend(s.reports.iter().cloned());
    }
    emit_report(&reports, out.join(report_name(cfg, "report")), cfg.report_format)?;
    print_reports(&reports);
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> Result<()> {
    let panel = cfg.data.load()?;
    let mut grams = Vec::with_capacity(panel.bands());
    for b in 0..panel.bands() {
        grams.push(periodogram(&panel, b)?);
    }
    let mut text = format!("frequency,{}\n", panel.band_labels.join(","));
    for (k, f) in grams[0].frequencies.iter().enumerate() {
        text.push_str(&f.to_string());
        for g in &grams {
            text.push(',');
            text.push_str(&g.power[k].to_string());
        }
        text.push('\n');
    }
    write_file(&out.join("periodogram.csv"), text)?;

    let window = cfg.model.m.min(panel.len());
    if window < 2 {
        return Err(SffpError::InsufficientData("analysis needs at least 2 rows".into()));
    }
    if !(cfg.analyze.profile_step > 0.0) {
        return Err(SffpError::Config("profile_step must be positive".into()));
    }
    let orders = order_grid(-2.0, 2.0, cfg.analyze.profile_step);
    let mut profiles = Vec::with_capacity(panel.bands());
    let mut best = Vec::with_capacity(panel.bands());
    for b in 0..panel.bands() {
        let x: Vec<Complex64> = (0..window)
            .map(|t| Complex64::new(panel.values[(t, b)], 0.0))
            .collect();
        profiles.push(concentration_profile(&x, &orders)?);
        best.push(most_concentrated_order(&x, &orders)?);
    }
    let mut text = format!("order,{}\n", panel.band_labels.join(","));
    for (i, a) in orders.iter().enumerate() {
        text.push_str(&a.to_string());
        for p in &profiles {
            text.push(',');
            text.push_str(&p[i].to_string());
        }
        text.push('\n');
    }
    write_file(&out.join("profile.csv"), text)?;

    for (b, g) in grams.iter().enumerate() {
        println!(
            "{:<12} peak_frequency={:.6} peak_power={:.4} median_power={:.4} concentrated_order={}",
            panel.band_labels[b],
            g.frequencies[g.peak_bin()],
            g.power[g.peak_bin()],
            g.median_power(),
            best[b]
        );
    }
    Ok(())
}

pub fn cmd_gradcheck(cfg: &RunConfig, out: &Path) -> Result<()> {
    let panel = cfg.data.load()?;
    let mut mcfg = cfg.model.clone();
    mcfg.f = panel.bands();
    let model = SffpModel::new(&mcfg)?;
    let windows = SplitWindows::from_panel(&panel, mcfg.m, mcfg.p, cfg.train.stride)?;
    let n = cfg.gradcheck.windows.clamp(1, windows.train.len());
    let batch = windows.train.subset(&(0..n).collect::<Vec<_>>());
    let report = gradient_check(&model, &batch, cfg.gradcheck.step, cfg.gradcheck.tolerance)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| SffpError::Config(e.to_string()))?;
    write_file(&out.join("gradcheck.json"), json + "\n")?;
    for g in &report.groups {
        println!(
            "{:<16} max_rel_error={:.3e} {}",
            g.group,
            g.max_rel_error,
            if g.passed { "ok" } else { "FAIL" }
        );
    }
    if !report.passed {
        return Err(SffpError::GradientMismatch {
            max_rel_error: report.max_rel_error,
            group: report.worst_group,
        });
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = resolve_config(&cli.command).and_then(|cfg| {
        let out = cfg.resolve_output_dir(cli.command.name());
        execute(&cli.command, &cfg, &out)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
