use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use sffp::data::{load_csv, save_csv, SeriesPanel};
use sffp::model::SffpModel;

const TINY: [&str; 8] = [
    "--input-len",
    "16",
    "--horizon",
    "4",
    "--epochs",
    "2",
    "--seed",
    "11",
];

fn sffp(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sffp"))
        .args(args)
        .env("SFFP_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn with_tiny<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(TINY).collect()
}

fn small_chirp_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "[data]\nkind = \"chirp\"\nt_len = 300\nnoise_sigma = 0.2\n\n[train]\nmax_epochs = 3\npatience = 2\n",
    )
    .unwrap();
    path
}

#[test]
fn train_writes_a_complete_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = sffp(&with_tiny(&["train"]), dir.path());
    ok(&out);
    let run = dir.path().join("train");
    for f in ["checkpoint.json", "history.csv", "config.toml", "report.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("val  mse="));
    assert!(stdout.contains("test mse="));
    let model = SffpModel::load(run.join("checkpoint.json")).unwrap();
    assert_eq!((model.m, model.p, model.f), (16, 4, 2));
}

#[test]
fn missing_dataset_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_panel.csv");
    let out = sffp(&["train", "--data", missing.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_panel.csv"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&sffp(&with_tiny(&["train", "--output", a.to_str().unwrap()]), dir.path()));
    ok(&sffp(&with_tiny(&["train", "--output", b.to_str().unwrap()]), dir.path()));
    for f in ["history.csv", "report.csv", "checkpoint.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_chirp_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&sffp(
        &["train", "--config", config.to_str().unwrap(), "--input-len", "16", "--horizon", "4", "--output", a.to_str().unwrap()],
        dir.path(),
    ));
    let saved = a.join("config.toml");
    ok(&sffp(
        &["train", "--config", saved.to_str().unwrap(), "--output", b.to_str().unwrap()],
        dir.path(),
    ));
    assert_eq!(fs::read(a.join("history.csv")).unwrap(), fs::read(b.join("history.csv")).unwrap());
    assert_eq!(fs::read(a.join("report.csv")).unwrap(), fs::read(b.join("report.csv")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_chirp_config(dir.path());
    let out = dir.path().join("run");
    ok(&sffp(
        &[
            "train", "--config", config.to_str().unwrap(), "--input-len", "16", "--horizon", "4",
            "--epochs", "1", "--output", out.to_str().unwrap(),
        ],
        dir.path(),
    ));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let effective = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(effective.contains("max_epochs = 1"));
    assert!(effective.contains("t_len = 300"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sffp(&with_tiny(&["gradcheck"]), dir.path()));
    assert!(dir.path().join("gradcheck").join("gradcheck.json").exists());
}

fn panel_file(dir: &Path, rows: usize, bands: usize) -> std::path::PathBuf {
    let path = dir.join(format!("panel_{rows}x{bands}.csv"));
    let mut panel = SeriesPanel::from_values(
        DMatrix::from_fn(rows, bands, |t, b| (t as f64 * 0.3 + b as f64).sin() - 80.0),
        900,
    );
    for ts in &mut panel.timestamps {
        *ts += 1_700_000_000;
    }
    save_csv(&panel, &path).unwrap();
    path
}

#[test]
fn predict_with_identity_checkpoint_repeats_the_last_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (m, p, f) = (12, 5, 3);
    let checkpoint = dir.path().join("identity.json");
    SffpModel::identity_path(m, p, f, m - p).unwrap().save(&checkpoint).unwrap();
    let input = panel_file(dir.path(), 30, f);
    let out = dir.path().join("pred");
    ok(&sffp(
        &[
            "predict", "--checkpoint", checkpoint.to_str().unwrap(), "--input", input.to_str().unwrap(),
            "--output", out.to_str().unwrap(),
        ],
        dir.path(),
    ));
    let (source, _) = load_csv(&input).unwrap();
    let (forecast, _) = load_csv(out.join("forecast.csv")).unwrap();
    assert_eq!((forecast.len(), forecast.bands()), (p, f));
    assert_eq!(forecast.band_labels, source.band_labels);
    let last = *source.timestamps.last().unwrap();
    let expected: Vec<i64> = (1..=p as i64).map(|k| last + 900 * k).collect();
    assert_eq!(forecast.timestamps, expected);
    let tail = source.values.rows(30 - p, p);
    assert!((forecast.values - tail).amax() < 1e-10);
}

#[test]
fn predict_rejects_short_or_mismatched_input() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("identity.json");
    SffpModel::identity_path(12, 4, 2, 0).unwrap().save(&checkpoint).unwrap();
    let short = panel_file(dir.path(), 11, 2);
    let out = sffp(
        &["predict", "--checkpoint", checkpoint.to_str().unwrap(), "--input", short.to_str().unwrap()],
        dir.path(),
    );
    assert!(!out.status.success());
    let wide = panel_file(dir.path(), 40, 3);
    let out = sffp(
        &["predict", "--checkpoint", checkpoint.to_str().unwrap(), "--input", wide.to_str().unwrap()],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bands"));
}

#[test]
fn ablate_reports_three_transformations() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sffp(&with_tiny(&["ablate"]), dir.path()));
    let report = fs::read_to_string(dir.path().join("ablate").join("report.csv")).unwrap();
    let tags: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(tags, ["fft", "frft", "no"]);
}

#[test]
fn sweep_alpha_writes_grid_plus_adaptive_rows() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    ok(&sffp(&with_tiny(&["sweep-alpha", "--format", "json"]), dir.path()));
    assert!(start.elapsed().as_secs() < 120);
    let run = dir.path().join("sweep-alpha");
    let plot = fs::read_to_string(run.join("alpha_sweep.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 9 + 1);
    let reports = sffp::eval::read_json_report(run.join("report.json")).unwrap();
    assert_eq!(reports.len(), 10);
}

#[test]
fn sweep_filter_strategies_meet_at_full_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sffp(&with_tiny(&["sweep-filter", "--cutoffs", "2,16"]), dir.path()));
    let run = dir.path().join("sweep-filter");
    let last_mse = |name: &str| {
        let text = fs::read_to_string(run.join(format!("filter_{name}.csv"))).unwrap();
        text.lines().last().unwrap().split(',').nth(1).unwrap().to_string()
    };
    let hybrid = last_mse("hybrid");
    assert_eq!(hybrid, last_mse("lowpass-only"));
    assert_eq!(hybrid, last_mse("random-only"));
}

#[test]
fn analyze_finds_a_single_tone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.csv");
    let panel = SeriesPanel::from_values(
        DMatrix::from_fn(256, 1, |t, _| (2.0 * std::f64::consts::PI * 0.0625 * t as f64).cos()),
        1,
    );
    save_csv(&panel, &path).unwrap();
    ok(&sffp(&["analyze", "--data", path.to_str().unwrap(), "--input-len", "32"], dir.path()));
    let text = fs::read_to_string(dir.path().join("analyze").join("periodogram.csv")).unwrap();
    let power: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    assert_eq!(power.iter().filter(|&&p| p > 1e-6 * peak).count(), 1);
    assert_eq!(power.iter().position(|&p| p == peak), Some(16));
    assert!(dir.path().join("analyze").join("profile.csv").exists());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sffp(&["fly"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
