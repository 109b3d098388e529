//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status if any criterion fails. Pass a substring as the first
//! argument to run a subset, e.g. `cargo test --test acceptance -- chirp`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sffp::data::{save_csv, synth_chirp, synth_trend_noise, ChirpSpec, TimeFormat, TrendSpec, WindowBatch};
use sffp::eval::{
    budgets_equal, run_alpha_sweep, run_filter_sweep, run_transformation_ablation,
    ExperimentConfig, FilterStrategy, MetricReport, Transformation,
};
use sffp::fracfourier::{dft_matrix, most_concentrated_order, order_grid, FrftOperator};
use sffp::model::{complex_linear, forward, revin_denormalize, revin_normalize, ComplexLinear, ModelConfig, SffpModel};
use sffp::train::gradient_check;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn frob(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn frft_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 5];
    for n in [8usize, 24, 96] {
        let eye = DMatrix::<Complex64>::identity(n, n);
        let dft = dft_matrix(n);
        let parity = DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(if (i + j) % n == 0 { 1.0 } else { 0.0 }, 0.0)
        });
        let special = [
            frob(&(FrftOperator::new(n, 0.0).map_err(|e| e.to_string())?.kernel() - &eye)),
            frob(&(FrftOperator::new(n, 1.0).map_err(|e| e.to_string())?.kernel() - &dft)),
            frob(&(FrftOperator::new(n, 2.0).map_err(|e| e.to_string())?.kernel() - &parity)),
            frob(&(FrftOperator::new(n, -1.0).map_err(|e| e.to_string())?.kernel() - dft.adjoint())),
        ];
        worst[2] = special.iter().cloned().fold(worst[2], f64::max);
        for _ in 0..100 {
            let a = rng.random_range(-2.0..2.0);
            let b = rng.random_range(-2.0..2.0);
            let x = random_signal(&mut rng, n);
            let fa = FrftOperator::new(n, a).map_err(|e| e.to_string())?;
            let fb = FrftOperator::new(n, b).map_err(|e| e.to_string())?;
            let fab = FrftOperator::new(n, a + b).map_err(|e| e.to_string())?;
            let fa4 = FrftOperator::new(n, a + 4.0).map_err(|e| e.to_string())?;
            let y = fa.apply(&x).map_err(|e| e.to_string())?;
            let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let ny = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            worst[0] = worst[0].max((nx - ny).abs());
            worst[1] = worst[1].max(frob(&(fa.kernel() * fb.kernel() - fab.kernel())));
            worst[3] = worst[3].max(frob(&(fa.kernel() - fa4.kernel())));
            let back = fa.apply_inverse(&y).map_err(|e| e.to_string())?;
            let rt = x.iter().zip(&back).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
            worst[4] = worst[4].max(rt);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst[0] < 1e-10
            && worst[1] < 1e-8
            && worst[2] < 1e-8
            && worst[3] < 1e-8
            && worst[4] < 1e-9
            && elapsed < Duration::from_secs(30),
        format!(
            "unitarity {:.1e}, additivity {:.1e}, special orders {:.1e}, period-4 {:.1e}, round-trip {:.1e}, {:.1}s",
            worst[0], worst[1], worst[2], worst[3], worst[4], elapsed.as_secs_f64()
        ),
    )
}

fn random_tiny_model(rng: &mut ChaCha8Rng, seed: u64) -> SffpModel {
    let mut cfg = ModelConfig::new(8, 4, 2);
    cfg.init_seed = seed;
    cfg.sampling_seed = seed;
    cfg.lowpass_cutoff = Some(rng.random_range(1..=8));
    cfg.random_high_count = Some(rng.random_range(0..=4));
    cfg.channel_shared = rng.random_bool(0.5);
    cfg.init_alpha = rng.random_range(-2.0..2.0);
    let mut model = SffpModel::new(&cfg).expect("valid tiny config");
    for w in &mut model.filter_weights {
        *w = Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
    }
    for head in &mut model.heads {
        for b in head.bias_real.iter_mut().chain(head.bias_imag.iter_mut()) {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    for g in &mut model.revin_gamma {
        *g = rng.random_range(0.6..1.4);
    }
    for b in &mut model.revin_beta {
        *b = rng.random_range(-0.3..0.3);
    }
    model
}

fn random_batch(rng: &mut ChaCha8Rng, windows: usize, m: usize, p: usize, f: usize) -> WindowBatch {
    WindowBatch {
        inputs: (0..windows)
            .map(|_| DMatrix::from_fn(m, f, |_, _| rng.random_range(-2.0..2.0)))
            .collect(),
        targets: (0..windows)
            .map(|_| DMatrix::from_fn(p, f, |_, _| rng.random_range(-2.0..2.0)))
            .collect(),
        origin_indices: (0..windows).collect(),
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    for trial in 0..100u64 {
        let model = random_tiny_model(&mut rng, trial);
        let batch = random_batch(&mut rng, 3, 8, 4, 2);
        let report = gradient_check(&model, &batch, 1e-6, 1e-4).map_err(|e| e.to_string())?;
        if !report.passed {
            failures += 1;
        }
        if report.max_rel_error > worst.0 {
            worst = (report.max_rel_error, report.worst_group.clone());
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0 && elapsed < Duration::from_secs(120),
        format!(
            "100 instances, {failures} failed, worst relative error {:.2e} ({}), {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn complex_linear_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for trial in 0..1000u64 {
        let m = rng.random_range(2..20);
        let p = rng.random_range(2..12);
        let mut cfg = ModelConfig::new(m, p, 1);
        cfg.init_seed = trial;
        let mut model = SffpModel::new(&cfg).map_err(|e| e.to_string())?;
        let mut head = ComplexLinear::zeros(p, m);
        for v in head.real.iter_mut().chain(head.imag.iter_mut()) {
            *v = rng.random_range(-3.0..3.0);
        }
        for v in head.bias_real.iter_mut().chain(head.bias_imag.iter_mut()) {
            *v = rng.random_range(-3.0..3.0);
        }
        model.heads = vec![head.clone()];
        let x = random_signal(&mut rng, m);
        let got = complex_linear(&x, &model, 0).map_err(|e| e.to_string())?;
        for (row, g) in got.iter().enumerate() {
            let mut acc = Complex64::new(head.bias_real[row], head.bias_imag[row]);
            for (col, xv) in x.iter().enumerate() {
                acc += Complex64::new(head.real[(row, col)], head.imag[(row, col)]) * xv;
            }
            worst = worst.max((acc - g).norm());
        }
    }
    check(worst < 1e-12, format!("1000 instances, max deviation {worst:.1e}"))
}

/// Panel for the order-recovery criterion.
fn chirp_panel_spec() -> ChirpSpec {
    ChirpSpec {
        t_len: 700,
        f_bands: 2,
        chirp_rate: 0.0007306703446463606,
        f0: 0.05116616362616542,
        noise_sigma: 0.03893256834222397,
        trend_slope: 0.0,
        seed: 43,
        oracle_window: 24,
    }
}

fn chirp_experiment() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        model: ModelConfig::new(24, 4, 2),
        repeats: 1,
        dataset_tag: "chirp".into(),
        ..Default::default()
    };
    cfg.train.max_epochs = 10;
    cfg.train.patience = 5;
    cfg.train.learning_rate = 1e-2;
    cfg.train.alpha_learning_rate = 1e-1;
    cfg
}

fn chirp_order_recovery() -> Outcome {
    let start = Instant::now();
    let spec = chirp_panel_spec();
    let (panel, oracle) = synth_chirp(&spec).map_err(|e| e.to_string())?;
    let window: Vec<Complex64> = (0..spec.oracle_window)
        .map(|t| Complex64::new(panel.values[(t, 0)], 0.0))
        .collect();
    let sweep_min = most_concentrated_order(&window, &order_grid(-2.0, 2.0, 0.05))
        .map_err(|e| e.to_string())?;
    let part_a = (sweep_min - oracle).abs() <= 0.1;

    let sweep = run_alpha_sweep(&panel, &order_grid(-2.0, 2.0, 0.5), &chirp_experiment())
        .map_err(|e| e.to_string())?;
    let learned = sweep.learned_alpha.ok_or("sweep has no adaptive run")?;
    let grid_min = sweep.argmin();
    let part_b = (learned - grid_min).abs() <= 0.25;
    let elapsed = start.elapsed();
    check(
        part_a && part_b && elapsed < Duration::from_secs(300),
        format!(
            "(a) noisy-panel profile minimum {sweep_min:.2} vs clean oracle {oracle:.2}; \
             (b) adaptive order {learned:.3} vs grid minimum {grid_min}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Panel shared by the ablation and filter-strategy criteria.
fn chirp_trend_spec() -> ChirpSpec {
    ChirpSpec {
        t_len: 400,
        f_bands: 2,
        chirp_rate: 0.00013502304766502786,
        f0: 0.29242126506315874,
        noise_sigma: 0.058522725281569175,
        trend_slope: 0.005118534219511775,
        seed: 246,
        oracle_window: 16,
    }
}

fn chirp_trend_experiment() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        model: ModelConfig::new(16, 8, 2),
        repeats: 1,
        dataset_tag: "chirp-trend".into(),
        ..Default::default()
    };
    cfg.train.max_epochs = 20;
    cfg.train.patience = 5;
    cfg.train.learning_rate = 3e-3;
    cfg.train.alpha_learning_rate = 1e-1;
    cfg
}

fn ablation_ordering() -> Outcome {
    let (panel, _) = synth_chirp(&chirp_trend_spec()).map_err(|e| e.to_string())?;
    let reports = run_transformation_ablation(&panel, &chirp_trend_experiment(), &Transformation::ALL)
        .map_err(|e| e.to_string())?;
    let mse = |tag: &str| reports.iter().find(|r| r.model_tag == tag).map(|r| r.mse).unwrap_or(f64::NAN);
    let (no, fft, frft) = (mse("no"), mse("fft"), mse("frft"));
    check(
        budgets_equal(&reports) && frft <= fft && frft <= no,
        format!("test mse no {no:.5}, fft {fft:.5}, frft {frft:.5}"),
    )
}

fn filter_ordering() -> Outcome {
    let (panel, _) = synth_chirp(&chirp_trend_spec()).map_err(|e| e.to_string())?;
    let cfg = chirp_trend_experiment();
    let m = cfg.model.m;
    let cutoffs = [m / 8, m / 4, m / 2, m];
    let sweeps = run_filter_sweep(&panel, &cutoffs, &FilterStrategy::ALL, &cfg)
        .map_err(|e| e.to_string())?;
    let find = |s: FilterStrategy| sweeps.iter().find(|r| r.strategy == s.tag()).ok_or("missing strategy");
    let random = find(FilterStrategy::RandomOnly)?;
    let lowpass = find(FilterStrategy::LowpassOnly)?;
    let hybrid = find(FilterStrategy::Hybrid)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for i in 0..2 {
        let (r, l, h) = (random.reports[i].mse, lowpass.reports[i].mse, hybrid.reports[i].mse);
        ok &= h <= l && h <= r;
        detail.push(format!("c={}: hybrid {h:.5}, lowpass {l:.5}, random {r:.5}", cutoffs[i]));
    }
    let full = cutoffs.len() - 1;
    let metrics = |r: &MetricReport| (r.mse, r.mae, r.mse_std, r.mae_std, r.epoch_budget, r.n_windows);
    let coincide = metrics(&random.reports[full]) == metrics(&lowpass.reports[full])
        && metrics(&lowpass.reports[full]) == metrics(&hybrid.reports[full]);
    detail.push(format!("c=M identical: {coincide}"));
    check(ok && coincide, detail.join("; "))
}

fn rss_csv(path: &Path) -> Result<(), String> {
    let mut panel = synth_trend_noise(&TrendSpec {
        t_len: 10_000,
        f_bands: 6,
        slope: 2e-4,
        ar1_phi: 0.9,
        noise_sigma: 1.5,
        seed: 7,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    panel.values.apply(|v| *v -= 95.0);
    panel.band_labels = (0..6).map(|b| format!("{}MHz", 700 + 100 * b)).collect();
    panel.sample_interval = 900;
    panel.timestamps = (0..10_000).map(|t| 1_700_000_000 + 900 * t).collect();
    panel.time_format = TimeFormat::Iso;
    save_csv(&panel, path).map_err(|e| e.to_string())
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sffp"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn report_windows(dir: &Path) -> Result<Vec<(String, usize)>, String> {
    let text = std::fs::read_to_string(dir.join("report.csv")).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[0].to_string(), cols[5].parse().unwrap_or(0))
        })
        .collect())
}

fn protocol_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("rss.csv");
    rss_csv(&csv)?;
    let csv = csv.to_str().ok_or("non-utf8 path")?;
    let mut detail = Vec::new();
    let mut ok = true;
    for p in [24usize, 48, 96] {
        let out = dir.path().join(format!("p{p}"));
        let horizon = p.to_string();
        let mut args = vec![
            "train", "--data", csv, "--input-len", "96", "--horizon", &horizon,
            "--output", out.to_str().ok_or("non-utf8 path")?,
        ];
        if p != 24 {
            args.extend(["--epochs", "1"]);
        }
        let start = Instant::now();
        let stdout = run_cli(&args)?;
        let elapsed = start.elapsed();
        let model = SffpModel::load(out.join("checkpoint.json")).map_err(|e| e.to_string())?;
        let expected = 1000 - 96 - p + 1;
        let windows = report_windows(&out)?;
        let split_ok = windows.iter().all(|(_, n)| *n == expected);
        let printed = stdout.contains("val  mse=") && stdout.contains("test mse=");
        ok &= model.m == 96 && model.p == p && model.f == 6 && split_ok && printed;
        if p == 24 {
            ok &= elapsed < Duration::from_secs(600);
            let epochs = std::fs::read_to_string(out.join("history.csv"))
                .map_err(|e| e.to_string())?
                .lines()
                .count()
                - 1;
            detail.push(format!("P=24 full run {epochs} epochs in {:.0}s", elapsed.as_secs_f64()));
        } else {
            detail.push(format!("P={p} protocol run"));
        }
        detail.push(format!("{expected} val/test windows: {split_ok}"));
    }
    check(ok, detail.join(", "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut same = true;
    let mut compared = 0;
    for (command, files) in [
        ("train", &["history.csv", "report.csv", "checkpoint.json"][..]),
        ("ablate", &["report.csv"][..]),
        ("sweep-alpha", &["report.csv", "alpha_sweep.csv"][..]),
    ] {
        let runs: Vec<_> = ["1", "1", "3"]
            .iter()
            .enumerate()
            .map(|(i, threads)| {
                let out = dir.path().join(format!("{command}-{i}"));
                run_cli(&[
                    command, "--input-len", "16", "--horizon", "4", "--epochs", "3", "--seed", "5",
                    "--threads", threads, "--output", out.to_str().unwrap_or_default(),
                ])
                .map(|_| out)
            })
            .collect::<Result<_, _>>()?;
        for f in files {
            let first = std::fs::read(runs[0].join(f)).map_err(|e| e.to_string())?;
            for r in &runs[1..] {
                same &= std::fs::read(r.join(f)).map_err(|e| e.to_string())? == first;
                compared += 1;
            }
        }
    }
    check(same, format!("{compared} file pairs byte-identical across reruns and thread counts: {same}"))
}

fn revin_and_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut rt, mut id) = (0.0f64, 0.0f64);
    for trial in 0..200u64 {
        let (m, p, f) = (rng.random_range(4..40), rng.random_range(2..4), rng.random_range(1..5));
        let mut model = SffpModel::new(&ModelConfig { init_seed: trial, ..ModelConfig::new(m, p, f) })
            .map_err(|e| e.to_string())?;
        for g in &mut model.revin_gamma {
            *g = rng.random_range(0.2..3.0);
        }
        for b in &mut model.revin_beta {
            *b = rng.random_range(-2.0..2.0);
        }
        let scale = rng.random_range(0.01..100.0);
        let x = DMatrix::from_fn(m, f, |_, _| scale * rng.random_range(-1.0..1.0) - 90.0);
        let (z, stats) = revin_normalize(&x, &model);
        let back = revin_denormalize(&z, &stats, &model).map_err(|e| e.to_string())?;
        rt = rt.max((back - &x).amax());

        let identity = SffpModel::identity_path(m, p, f, 0).map_err(|e| e.to_string())?;
        let y = forward(&x, &identity).map_err(|e| e.to_string())?.values;
        id = id.max((y - x.rows(0, p)).amax());
    }
    check(
        rt < 1e-10 && id < 1e-10,
        format!("round-trip error {rt:.1e}, identity path error {id:.1e}"),
    )
}

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "frft algebra", frft_algebra),
        (2, "gradient oracle", gradient_oracle),
        (3, "complex linear oracle", complex_linear_oracle),
        (4, "chirp order recovery", chirp_order_recovery),
        (5, "ablation ordering", ablation_ordering),
        (6, "filter strategy ordering", filter_ordering),
        (7, "protocol fidelity", protocol_fidelity),
        (8, "determinism", determinism),
        (9, "revin round-trip and identity path", revin_and_identity),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if let Some(f) = &filter {
            if !name.contains(f.as_str()) {
                continue;
            }
        }
        match run() {
            Ok(detail) => println!("criterion {id} ({name}): PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL - {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
