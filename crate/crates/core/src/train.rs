//! Loss, analytic gradients, Adam and the training loop.
//!
//! Gradients are written by hand for the fixed pipeline. Complex parameters
//! carry their gradient as `∂L/∂re + i·∂L/∂im`, which is what a central
//! difference on each real component measures.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sliding_windows, SeriesPanel, Split, WindowBatch};
use crate::error::{Result, SffpError};
use crate::model::{
    forward_traced, ChannelTrace, ComplexLinear, ModelConfig, SffpModel, Transforms,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub alpha_learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// When false the order stays at its initial value.
    pub learn_alpha: bool,
    /// Row step between consecutive training windows.
    pub stride: usize,
    /// Worker threads for per-window gradients; 0 uses the global pool.
    pub threads: usize,
    /// Record wall-clock seconds in the history. Off by default so that
    /// repeated runs produce identical files.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            alpha_learning_rate: 1e-2,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            learn_alpha: true,
            stride: 1,
            threads: 0,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("alpha_learning_rate", self.alpha_learning_rate),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SffpError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.stride == 0 {
            return Err(SffpError::Config(
                "batch_size, max_epochs, patience and stride must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(SffpError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(SffpError::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Gradient of the loss with respect to every parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub d_alpha: f64,
    pub d_filter_weights: Vec<Complex64>,
    /// Same layout as [`SffpModel::heads`].
    pub d_heads: Vec<ComplexLinear>,
    pub d_revin_gamma: Vec<f64>,
    pub d_revin_beta: Vec<f64>,
}

impl GradientTape {
    pub fn zeros_like(model: &SffpModel) -> Self {
        GradientTape {
            d_alpha: 0.0,
            d_filter_weights: vec![Complex64::new(0.0, 0.0); model.m],
            d_heads: vec![ComplexLinear::zeros(model.p, model.m); model.heads.len()],
            d_revin_gamma: vec![0.0; model.f],
            d_revin_beta: vec![0.0; model.f],
        }
    }

    pub fn reset(&mut self) {
        self.d_alpha = 0.0;
        self.d_filter_weights.fill(Complex64::new(0.0, 0.0));
        for h in &mut self.d_heads {
            h.real.fill(0.0);
            h.imag.fill(0.0);
            h.bias_real.fill(0.0);
            h.bias_imag.fill(0.0);
        }
        self.d_revin_gamma.fill(0.0);
        self.d_revin_beta.fill(0.0);
    }

    pub fn accumulate(&mut self, other: &GradientTape) {
        self.d_alpha += other.d_alpha;
        for (a, b) in self.d_filter_weights.iter_mut().zip(&other.d_filter_weights) {
            *a += b;
        }
        for (a, b) in self.d_heads.iter_mut().zip(&other.d_heads) {
            a.real += &b.real;
            a.imag += &b.imag;
            for (x, y) in a.bias_real.iter_mut().zip(&b.bias_real) {
                *x += y;
            }
            for (x, y) in a.bias_imag.iter_mut().zip(&b.bias_imag) {
                *x += y;
            }
        }
        for (a, b) in self.d_revin_gamma.iter_mut().zip(&other.d_revin_gamma) {
            *a += b;
        }
        for (a, b) in self.d_revin_beta.iter_mut().zip(&other.d_revin_beta) {
            *a += b;
        }
    }

    /// Gradients in the order of [`SffpModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![self.d_alpha];
        for w in &self.d_filter_weights {
            out.push(w.re);
            out.push(w.im);
        }
        for h in &self.d_heads {
            out.extend(h.real.iter());
            out.extend(h.imag.iter());
            out.extend(&h.bias_real);
            out.extend(&h.bias_imag);
        }
        out.extend(&self.d_revin_gamma);
        out.extend(&self.d_revin_beta);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// `‖pred − truth‖² / (P·F)`.
pub fn mse_loss(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(SffpError::shape(
            format!("{}x{}", truth.nrows(), truth.ncols()),
            format!("{}x{}", pred.nrows(), pred.ncols()),
        ));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

fn check_batch(model: &SffpModel, batch: &WindowBatch) -> Result<()> {
    if batch.is_empty() {
        return Err(SffpError::InsufficientData("empty batch".into()));
    }
    if batch.inputs.len() != batch.targets.len() {
        return Err(SffpError::shape(
            format!("{} targets", batch.inputs.len()),
            batch.targets.len(),
        ));
    }
    for t in &batch.targets {
        if t.shape() != (model.p, model.f) {
            return Err(SffpError::shape(
                format!("{}x{} target", model.p, model.f),
                format!("{}x{}", t.nrows(), t.ncols()),
            ));
        }
    }
    Ok(())
}

/// Mean per-window loss over the batch.
pub fn batch_loss(model: &SffpModel, batch: &WindowBatch) -> Result<f64> {
    check_batch(model, batch)?;
    let tf = Transforms::new(model)?;
    let losses: Vec<f64> = batch
        .inputs
        .par_iter()
        .zip(&batch.targets)
        .map(|(x, y)| {
            let traces = forward_traced(model, &tf, x)?;
            Ok(window_loss(&traces, y))
        })
        .collect::<Result<_>>()?;
    let loss = losses.iter().sum::<f64>() / batch.len() as f64;
    if !loss.is_finite() {
        return Err(SffpError::Diverged { stage: "loss" });
    }
    Ok(loss)
}

fn window_loss(traces: &[ChannelTrace], target: &DMatrix<f64>) -> f64 {
    let mut sum = 0.0;
    for (ch, t) in traces.iter().enumerate() {
        for (r, v) in t.forecast.iter().enumerate() {
            let d = v - target[(r, ch)];
            sum += d * d;
        }
    }
    sum / target.len() as f64
}

/// Accumulates the gradient of `weight · window_loss` into `tape`.
fn backward_window(
    model: &SffpModel,
    tf: &Transforms,
    traces: &[ChannelTrace],
    target: &DMatrix<f64>,
    weight: f64,
    tape: &mut GradientTape,
) {
    let scale = 2.0 * weight / target.len() as f64;
    let in_basis = &tf.input_basis;
    let out_basis = &tf.output_basis;
    let in_dphase = in_basis.phase_derivatives(model.alpha);
    let out_dphase = out_basis.phase_derivatives(-model.alpha);

    for (ch, t) in traces.iter().enumerate() {
        let g = model.revin_gamma[ch];
        let b = model.revin_beta[ch];
        let s = t.std;

        // Denormalisation.
        let mut gy = vec![0.0; model.p];
        for r in 0..model.p {
            let g_out = scale * (t.forecast[r] - target[(r, ch)]);
            gy[r] = g_out * s / g;
            tape.d_revin_beta[ch] -= g_out * s / g;
            tape.d_revin_gamma[ch] -= g_out * (t.time_domain[r].re - b) * s / (g * g);
        }

        // Inverse transform of order -alpha, realised by the real part.
        let r_coeffs = out_basis.analyze_real(&gy);
        for k in 0..model.p {
            // d/dalpha of exp(+iπak/2) is minus the phase derivative at -alpha.
            let dpsi = -out_dphase[k];
            tape.d_alpha += r_coeffs[k] * (dpsi * t.output_coeffs[k]).re;
        }
        let back: Vec<Complex64> = r_coeffs
            .iter()
            .zip(&tf.inverse_phase)
            .map(|(r, psi)| psi.conj() * *r)
            .collect();
        let g_head_out = out_basis.synthesize(&back);

        // Complex linear head.
        let head = model.head(ch);
        let d_head = &mut tape.d_heads[model.head_index(ch)];
        let mut g_filtered = vec![Complex64::new(0.0, 0.0); model.m];
        for p in 0..model.p {
            let gp = g_head_out[p];
            d_head.bias_real[p] += gp.re;
            d_head.bias_imag[p] += gp.im;
            for q in 0..model.m {
                let xq = t.filtered[q];
                // gp · conj(xq)
                d_head.real[(p, q)] += gp.re * xq.re + gp.im * xq.im;
                d_head.imag[(p, q)] += gp.im * xq.re - gp.re * xq.im;
                let a = Complex64::new(head.real[(p, q)], head.imag[(p, q)]);
                g_filtered[q] += a.conj() * gp;
            }
        }

        // Filter.
        let mut g_transformed = vec![Complex64::new(0.0, 0.0); model.m];
        for q in 0..model.m {
            if model.filter.keep_mask[q] {
                tape.d_filter_weights[q] += g_filtered[q] * t.transformed[q].conj();
                g_transformed[q] = model.filter_weights[q].conj() * g_filtered[q];
            }
        }

        // Forward transform of order alpha applied to a real input.
        let w = in_basis.analyze(&g_transformed);
        let mut g_coeffs = vec![0.0; model.m];
        for k in 0..model.m {
            let u = t.input_coeffs[k];
            tape.d_alpha += (w[k].conj() * in_dphase[k]).re * u;
            g_coeffs[k] = (w[k].conj() * tf.forward_phase[k]).re;
        }
        let g_norm = in_basis.synthesize_real(&g_coeffs);

        // Normalisation.
        for (n, gz) in g_norm.iter().enumerate() {
            tape.d_revin_beta[ch] += gz;
            tape.d_revin_gamma[ch] += gz * (t.normalized[n] - b) / g;
        }
    }
}

/// Fills `tape` with the gradient of the mean batch loss and returns the loss.
pub fn backward(model: &SffpModel, batch: &WindowBatch, tape: &mut GradientTape) -> Result<f64> {
    check_batch(model, batch)?;
    let tf = Transforms::new(model)?;
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, GradientTape)> = batch
        .inputs
        .par_iter()
        .zip(&batch.targets)
        .map(|(x, y)| {
            let traces = forward_traced(model, &tf, x)?;
            let mut local = GradientTape::zeros_like(model);
            backward_window(model, &tf, &traces, y, weight, &mut local);
            Ok((window_loss(&traces, y), local))
        })
        .collect::<Result<_>>()?;
    tape.reset();
    let mut loss = 0.0;
    // Merge in window order so the result does not depend on scheduling.
    for (l, part) in &parts {
        loss += l;
        tape.accumulate(part);
    }
    loss *= weight;
    if !loss.is_finite() || !tape.is_finite() {
        return Err(SffpError::Diverged { stage: "backward" });
    }
    Ok(loss)
}

/// First and second moment estimates, flattened like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &SffpModel) -> Self {
        let n = model.parameters().len();
        AdamState {
            step: 0,
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }
}

/// One Adam update. The order (index 0) uses `alpha_learning_rate` and is
/// left untouched when `learn_alpha` is false.
pub fn adam_step(
    model: &mut SffpModel,
    tape: &GradientTape,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let grads = tape.flatten();
    let mut params = model.parameters();
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(SffpError::shape(
            format!("{} gradients", params.len()),
            grads.len(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.adam_beta1.powi(t);
    let c2 = 1.0 - cfg.adam_beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
        if i == 0 && !cfg.learn_alpha {
            continue;
        }
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
        *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
        let lr = if i == 0 {
            cfg.alpha_learning_rate
        } else {
            cfg.learning_rate
        };
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
    }
    model.set_parameters(&params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Canonical order after the epoch.
    pub alpha: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn alpha_trajectory(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_mse,val_mse,alpha,wall_time")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch, r.train_mse, r.val_mse, r.alpha, r.wall_time
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| SffpError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| SffpError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: SffpModel,
    pub history: History,
    pub best_epoch: usize,
    pub initial_val_mse: f64,
    pub epochs_run: usize,
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SffpError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains `model` on prepared windows with early stopping on `val`.
pub fn train_on_windows(
    model: SffpModel,
    train: &WindowBatch,
    val: &WindowBatch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(SffpError::InsufficientData(
            "training and validation need at least one window each".into(),
        ));
    }
    with_threads(cfg.threads, || fit(model, train, val, cfg))?
}

fn fit(
    mut model: SffpModel,
    train: &WindowBatch,
    val: &WindowBatch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model);
    let mut tape = GradientTape::zeros_like(&model);
    let initial_val_mse = batch_loss(&model, val)?;
    let mut best = (initial_val_mse, model.clone(), 0usize);
    let mut history = History::default();
    let mut waited = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.subset(chunk);
            let loss = backward(&model, &batch, &mut tape)?;
            weighted += loss * chunk.len() as f64;
            adam_step(&mut model, &tape, &mut state, cfg)?;
        }
        let train_mse = weighted / train.len() as f64;
        let val_mse = batch_loss(&model, val)?;
        history.records.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            alpha: model.canonical_alpha(),
            wall_time: if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        if val_mse < best.0 || epoch == 1 {
            best = (val_mse, model.clone(), epoch);
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                break;
            }
        }
    }
    let epochs_run = history.records.len();
    Ok(TrainOutcome {
        model: best.1,
        history,
        best_epoch: best.2,
        initial_val_mse,
        epochs_run,
    })
}

/// Windows for all three splits.
#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub train: WindowBatch,
    pub val: WindowBatch,
    pub test: WindowBatch,
}

impl SplitWindows {
    pub fn from_panel(panel: &SeriesPanel, m: usize, p: usize, stride: usize) -> Result<Self> {
        Ok(SplitWindows {
            train: sliding_windows(panel, m, p, stride, Split::Train)?,
            // Validation and test always use every window.
            val: sliding_windows(panel, m, p, 1, Split::Val)?,
            test: sliding_windows(panel, m, p, 1, Split::Test)?,
        })
    }
}

/// Builds a model for `panel` and trains it on the chronological splits.
pub fn train(
    panel: &SeriesPanel,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut cfg = model_cfg.clone();
    cfg.f = panel.bands();
    let windows = SplitWindows::from_panel(panel, cfg.m, cfg.p, train_cfg.stride)?;
    let model = SffpModel::new(&cfg)?;
    train_on_windows(model, &windows.train, &windows.val, train_cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub group: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_group: String,
    pub groups: Vec<GroupError>,
    pub passed: bool,
}

/// Relative error with an absolute floor of `1e-6` on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of [`batch_loss`].
pub fn compare_gradients(
    model: &SffpModel,
    batch: &WindowBatch,
    analytic: &GradientTape,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    compare_with_loss(model, analytic, h, tol, |m| batch_loss(m, batch))
}

/// Same as [`compare_gradients`] with a caller-supplied loss.
pub fn compare_with_loss(
    model: &SffpModel,
    analytic: &GradientTape,
    h: f64,
    tol: f64,
    loss: impl Fn(&SffpModel) -> Result<f64>,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(SffpError::Config(format!("step {h} outside (0, 1e-3]")));
    }
    let grads = analytic.flatten();
    let mut probe = model.clone();
    let mut groups: Vec<GroupError> = Vec::new();
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for (i, g) in grads.iter().enumerate() {
        let orig = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = orig + h;
        let plus = loss(&probe)?;
        *probe.parameter_mut(i) = orig - h;
        let minus = loss(&probe)?;
        *probe.parameter_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = relative_error(*g, numeric);
        if rel > worst.0 {
            worst = (rel, i);
        }
        let name = model.parameter_group(i);
        match groups.iter_mut().find(|e| e.group == name) {
            Some(e) => e.max_rel_error = e.max_rel_error.max(rel),
            None => groups.push(GroupError {
                group: name.to_string(),
                max_rel_error: rel,
                passed: true,
            }),
        }
    }
    for e in &mut groups {
        e.passed = e.max_rel_error < tol;
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        worst_group: model.parameter_group(worst.1).to_string(),
        passed: groups.iter().all(|e| e.passed),
        groups,
    })
}

/// Runs [`backward`] and checks every scalar against central differences.
pub fn gradient_check(
    model: &SffpModel,
    batch: &WindowBatch,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut tape = GradientTape::zeros_like(model);
    backward(model, batch, &mut tape)?;
    compare_gradients(model, batch, &tape, h, tol)
}
