//! The forecasting pipeline: instance normalisation, fractional Fourier
//! transform, hybrid filter, complex linear head, inverse transform and
//! denormalisation.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SffpError};
use crate::fracfourier::{build_eigenbasis, canonical_order, Eigenbasis};

pub const CHECKPOINT_FORMAT: &str = "sffp-checkpoint/1";

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Retained fractional-frequency bins: a two-sided low band plus a frozen
/// random sample of the remaining bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub lowpass_cutoff: usize,
    pub random_high_count: usize,
    pub sampling_seed: u64,
    pub keep_mask: Vec<bool>,
}

impl FilterConfig {
    /// Builds the mask for `m` bins. `random_high_count` is clamped to the
    /// bins left over by the low band.
    pub fn new(m: usize, lowpass_cutoff: usize, random_high_count: usize, seed: u64) -> Result<Self> {
        if lowpass_cutoff > m {
            return Err(SffpError::Config(format!(
                "low-pass cutoff {lowpass_cutoff} exceeds input length {m}"
            )));
        }
        let mut keep_mask = vec![false; m];
        for i in low_band(m, lowpass_cutoff) {
            keep_mask[i] = true;
        }
        let complement: Vec<usize> = (0..m).filter(|&i| !keep_mask[i]).collect();
        let s = random_high_count.min(complement.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in index::sample(&mut rng, complement.len(), s) {
            keep_mask[complement[j]] = true;
        }
        Ok(FilterConfig {
            lowpass_cutoff,
            random_high_count: s,
            sampling_seed: seed,
            keep_mask,
        })
    }

    pub fn all_pass(m: usize) -> Self {
        FilterConfig {
            lowpass_cutoff: m,
            random_high_count: 0,
            sampling_seed: 0,
            keep_mask: vec![true; m],
        }
    }

    pub fn retained(&self) -> Vec<usize> {
        (0..self.keep_mask.len()).filter(|&i| self.keep_mask[i]).collect()
    }
}

/// Indices `{0..⌈c/2⌉-1} ∪ {M-⌊c/2⌋..M-1}`.
pub fn low_band(m: usize, c: usize) -> Vec<usize> {
    let head = c.div_ceil(2);
    let tail = c / 2;
    (0..head).chain(m - tail..m).collect()
}

/// Complex affine map `A x + b` with `A = real + i·imag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexLinear {
    pub real: DMatrix<f64>,
    pub imag: DMatrix<f64>,
    pub bias_real: Vec<f64>,
    pub bias_imag: Vec<f64>,
}

impl ComplexLinear {
    pub fn zeros(p: usize, m: usize) -> Self {
        ComplexLinear {
            real: DMatrix::zeros(p, m),
            imag: DMatrix::zeros(p, m),
            bias_real: vec![0.0; p],
            bias_imag: vec![0.0; p],
        }
    }

    pub fn outputs(&self) -> usize {
        self.real.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.real.ncols()
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.inputs() {
            return Err(SffpError::shape(
                format!("head input of length {}", self.inputs()),
                format!("length {}", x.len()),
            ));
        }
        Ok((0..self.outputs())
            .map(|p| {
                let mut re = self.bias_real[p];
                let mut im = self.bias_imag[p];
                for (q, v) in x.iter().enumerate() {
                    let (ar, ai) = (self.real[(p, q)], self.imag[(p, q)]);
                    re += ar * v.re - ai * v.im;
                    im += ar * v.im + ai * v.re;
                }
                Complex64::new(re, im)
            })
            .collect())
    }
}

/// Per-channel mean and (floored) standard deviation of one input window.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Hyperparameters fixed at model construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub m: usize,
    pub p: usize,
    pub f: usize,
    /// Defaults to `⌊M/4⌋`.
    pub lowpass_cutoff: Option<usize>,
    /// Defaults to `⌊M/8⌋`.
    pub random_high_count: Option<usize>,
    pub sampling_seed: u64,
    pub init_alpha: f64,
    pub init_seed: u64,
    pub channel_shared: bool,
    pub revin_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            m: 96,
            p: 24,
            f: 1,
            lowpass_cutoff: None,
            random_high_count: None,
            sampling_seed: 0,
            init_alpha: 0.5,
            init_seed: 0,
            channel_shared: true,
            revin_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn new(m: usize, p: usize, f: usize) -> Self {
        ModelConfig {
            m,
            p,
            f,
            ..Default::default()
        }
    }

    pub fn effective_cutoff(&self) -> usize {
        self.lowpass_cutoff.unwrap_or(self.m / 4)
    }

    pub fn effective_random_count(&self) -> usize {
        self.random_high_count.unwrap_or(self.m / 8)
    }
}

/// All trainable parameters of the forecaster plus its filter structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SffpModel {
    pub m: usize,
    pub p: usize,
    pub f: usize,
    /// Unconstrained order; see [`SffpModel::canonical_alpha`].
    pub alpha: f64,
    pub filter: FilterConfig,
    pub filter_weights: Vec<Complex64>,
    /// One shared head, or one head per channel.
    pub heads: Vec<ComplexLinear>,
    pub revin_gamma: Vec<f64>,
    pub revin_beta: Vec<f64>,
    pub revin_eps: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: SffpModel,
}

impl SffpModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        if cfg.m < 2 || cfg.p < 2 || cfg.f == 0 {
            return Err(SffpError::Config(format!(
                "need m >= 2, p >= 2, f >= 1 (got m={}, p={}, f={})",
                cfg.m, cfg.p, cfg.f
            )));
        }
        if !(cfg.revin_eps > 0.0) {
            return Err(SffpError::Config("revin_eps must be positive".into()));
        }
        let filter = FilterConfig::new(
            cfg.m,
            cfg.effective_cutoff(),
            cfg.effective_random_count(),
            cfg.sampling_seed,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let bound = 1.0 / (cfg.m as f64).sqrt();
        let head_count = if cfg.channel_shared { 1 } else { cfg.f };
        let heads = (0..head_count)
            .map(|_| {
                let mut head = ComplexLinear::zeros(cfg.p, cfg.m);
                for v in head.real.iter_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
                for v in head.imag.iter_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
                head
            })
            .collect();
        Ok(SffpModel {
            m: cfg.m,
            p: cfg.p,
            f: cfg.f,
            alpha: cfg.init_alpha,
            filter,
            filter_weights: vec![Complex64::new(1.0, 0.0); cfg.m],
            heads,
            revin_gamma: vec![1.0; cfg.f],
            revin_beta: vec![0.0; cfg.f],
            revin_eps: cfg.revin_eps,
        })
    }

    /// A model whose forecast copies input rows `offset..offset + p`: order 0,
    /// all-pass filter and a selection head.
    pub fn identity_path(m: usize, p: usize, f: usize, offset: usize) -> Result<Self> {
        if offset + p > m {
            return Err(SffpError::Config(format!(
                "identity path needs offset + p <= m (got {offset} + {p} > {m})"
            )));
        }
        let mut cfg = ModelConfig::new(m, p, f);
        cfg.init_alpha = 0.0;
        cfg.lowpass_cutoff = Some(m);
        cfg.random_high_count = Some(0);
        let mut model = SffpModel::new(&cfg)?;
        let mut head = ComplexLinear::zeros(p, m);
        for i in 0..p {
            head.real[(i, offset + i)] = 1.0;
        }
        model.heads = vec![head];
        Ok(model)
    }

    /// The order mapped to `[-2, 2)`.
    pub fn canonical_alpha(&self) -> f64 {
        canonical_order(self.alpha)
    }

    pub fn head(&self, channel: usize) -> &ComplexLinear {
        if self.heads.len() == 1 {
            &self.heads[0]
        } else {
            &self.heads[channel]
        }
    }

    pub fn head_index(&self, channel: usize) -> usize {
        if self.heads.len() == 1 {
            0
        } else {
            channel
        }
    }

    pub fn channel_shared(&self) -> bool {
        self.heads.len() == 1
    }

    /// Checks shapes and finiteness of every parameter.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SffpError::Config(format!("invalid model: {what}")));
        if self.m < 2 || self.p < 2 || self.f == 0 {
            return bad("dimensions");
        }
        if self.filter.keep_mask.len() != self.m || self.filter_weights.len() != self.m {
            return bad("filter length");
        }
        if self.heads.len() != 1 && self.heads.len() != self.f {
            return bad("head count");
        }
        for h in &self.heads {
            if h.real.shape() != (self.p, self.m)
                || h.imag.shape() != (self.p, self.m)
                || h.bias_real.len() != self.p
                || h.bias_imag.len() != self.p
            {
                return bad("head shape");
            }
        }
        if self.revin_gamma.len() != self.f || self.revin_beta.len() != self.f {
            return bad("revin length");
        }
        let finite = self.alpha.is_finite()
            && self.filter_weights.iter().all(|w| w.re.is_finite() && w.im.is_finite())
            && self.heads.iter().all(|h| {
                h.real.iter().chain(h.imag.iter()).all(|v| v.is_finite())
                    && h.bias_real.iter().chain(&h.bias_imag).all(|v| v.is_finite())
            })
            && self.revin_gamma.iter().chain(&self.revin_beta).all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        Ok(())
    }

    /// Every trainable scalar in a fixed order; used by finite-difference
    /// checks and by tests comparing models.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = vec![self.alpha];
        for w in &self.filter_weights {
            out.push(w.re);
            out.push(w.im);
        }
        for h in &self.heads {
            out.extend(h.real.iter());
            out.extend(h.imag.iter());
            out.extend(&h.bias_real);
            out.extend(&h.bias_imag);
        }
        out.extend(&self.revin_gamma);
        out.extend(&self.revin_beta);
        out
    }

    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        let mut i = index;
        if i == 0 {
            return &mut self.alpha;
        }
        i -= 1;
        if i < 2 * self.m {
            let w = &mut self.filter_weights[i / 2];
            return if i % 2 == 0 { &mut w.re } else { &mut w.im };
        }
        i -= 2 * self.m;
        let pm = self.p * self.m;
        let per_head = 2 * pm + 2 * self.p;
        if i < per_head * self.heads.len() {
            let h = &mut self.heads[i / per_head];
            let j = i % per_head;
            return if j < pm {
                &mut h.real.as_mut_slice()[j]
            } else if j < 2 * pm {
                &mut h.imag.as_mut_slice()[j - pm]
            } else if j < 2 * pm + self.p {
                &mut h.bias_real[j - 2 * pm]
            } else {
                &mut h.bias_imag[j - 2 * pm - self.p]
            };
        }
        i -= per_head * self.heads.len();
        if i < self.f {
            return &mut self.revin_gamma[i];
        }
        &mut self.revin_beta[i - self.f]
    }

    /// Inverse of [`SffpModel::parameters`].
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.parameters().len();
        if values.len() != expected {
            return Err(SffpError::shape(
                format!("{expected} parameters"),
                format!("{}", values.len()),
            ));
        }
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("length checked");
        self.alpha = next();
        for w in &mut self.filter_weights {
            w.re = next();
            w.im = next();
        }
        for h in &mut self.heads {
            for v in h.real.iter_mut() {
                *v = next();
            }
            for v in h.imag.iter_mut() {
                *v = next();
            }
            for v in h.bias_real.iter_mut() {
                *v = next();
            }
            for v in h.bias_imag.iter_mut() {
                *v = next();
            }
        }
        for v in &mut self.revin_gamma {
            *v = next();
        }
        for v in &mut self.revin_beta {
            *v = next();
        }
        Ok(())
    }

    /// Name of the parameter group holding scalar `index`.
    pub fn parameter_group(&self, index: usize) -> &'static str {
        let pm = self.p * self.m;
        let per_head = 2 * pm + 2 * self.p;
        let filter_end = 1 + 2 * self.m;
        let heads_end = filter_end + per_head * self.heads.len();
        if index == 0 {
            "alpha"
        } else if index < filter_end {
            "filter_weights"
        } else if index < heads_end {
            match (index - filter_end) % per_head {
                j if j < pm => "lin_real",
                j if j < 2 * pm => "lin_imag",
                j if j < 2 * pm + self.p => "bias_real",
                _ => "bias_imag",
            }
        } else if index < heads_end + self.f {
            "revin_gamma"
        } else {
            "revin_beta"
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| SffpError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| SffpError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SffpError::io(path, e))?;
        let doc: Checkpoint = serde_json::from_str(&text).map_err(|e| SffpError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(SffpError::Format {
                path: path.to_path_buf(),
                message: format!("unsupported checkpoint format {:?}", doc.format),
            });
        }
        doc.model.validate()?;
        Ok(doc.model)
    }
}

pub fn revin_normalize(x: &DMatrix<f64>, model: &SffpModel) -> (DMatrix<f64>, InstanceStats) {
    let mut z = x.clone();
    let mut mean = Vec::with_capacity(x.ncols());
    let mut std = Vec::with_capacity(x.ncols());
    for (ch, mut col) in z.column_iter_mut().enumerate() {
        let (mu, sd) = channel_stats(col.as_slice(), model.revin_eps);
        let (g, b) = (model.revin_gamma[ch], model.revin_beta[ch]);
        for v in col.iter_mut() {
            *v = g * (*v - mu) / sd + b;
        }
        mean.push(mu);
        std.push(sd);
    }
    (z, InstanceStats { mean, std })
}

pub fn revin_denormalize(
    y: &DMatrix<f64>,
    stats: &InstanceStats,
    model: &SffpModel,
) -> Result<DMatrix<f64>> {
    if y.ncols() != stats.mean.len() || y.ncols() != model.f {
        return Err(SffpError::shape(
            format!("{} channels", model.f),
            format!("{} channels", y.ncols()),
        ));
    }
    let mut out = y.clone();
    for (ch, mut col) in out.column_iter_mut().enumerate() {
        let g = model.revin_gamma[ch];
        if g == 0.0 {
            return Err(SffpError::DegenerateAffine { channel: ch });
        }
        let b = model.revin_beta[ch];
        for v in col.iter_mut() {
            *v = (*v - b) / g * stats.std[ch] + stats.mean[ch];
        }
    }
    Ok(out)
}

/// Population mean and standard deviation floored at `eps`.
pub(crate) fn channel_stats(x: &[f64], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(eps))
}

pub fn apply_filter(x_fr: &[Complex64], model: &SffpModel) -> Result<Vec<Complex64>> {
    if x_fr.len() != model.m {
        return Err(SffpError::shape(
            format!("filter input of length {}", model.m),
            format!("length {}", x_fr.len()),
        ));
    }
    Ok(x_fr
        .iter()
        .zip(&model.filter_weights)
        .zip(&model.filter.keep_mask)
        .map(|((x, w), &keep)| if keep { w * x } else { ZERO })
        .collect())
}

/// Applies the head used for `channel` (the shared head when channels share one).
pub fn complex_linear(x_f: &[Complex64], model: &SffpModel, channel: usize) -> Result<Vec<Complex64>> {
    model.head(channel).apply(x_f)
}

/// Eigenbases and phases for one value of the order, reused across windows.
#[derive(Debug, Clone)]
pub struct Transforms {
    pub(crate) input_basis: Arc<Eigenbasis>,
    pub(crate) output_basis: Arc<Eigenbasis>,
    /// `exp(-iπak/2)` for the length-M forward transform.
    pub(crate) forward_phase: Vec<Complex64>,
    /// `exp(+iπak/2)` for the length-P inverse transform.
    pub(crate) inverse_phase: Vec<Complex64>,
}

impl Transforms {
    pub fn new(model: &SffpModel) -> Result<Self> {
        let input_basis = build_eigenbasis(model.m)?;
        let output_basis = build_eigenbasis(model.p)?;
        let forward_phase = input_basis.phases(model.alpha);
        let inverse_phase = output_basis.phases(-model.alpha);
        Ok(Transforms {
            input_basis,
            output_basis,
            forward_phase,
            inverse_phase,
        })
    }
}

/// Intermediate values of one channel's forward pass.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub mean: f64,
    pub std: f64,
    /// Normalised input (length M).
    pub normalized: Vec<f64>,
    /// Eigen-coefficients `Vᵀ z` of the normalised input.
    pub input_coeffs: Vec<f64>,
    /// Fractional-domain representation (length M).
    pub transformed: Vec<Complex64>,
    pub filtered: Vec<Complex64>,
    /// Head output in the fractional domain (length P).
    pub head_out: Vec<Complex64>,
    /// Eigen-coefficients `Vᵀ Y` of the head output.
    pub output_coeffs: Vec<Complex64>,
    /// Complex time-domain prediction before taking the real part.
    pub time_domain: Vec<Complex64>,
    /// Denormalised real forecast (length P).
    pub forecast: Vec<f64>,
}

pub(crate) fn forward_channel(
    model: &SffpModel,
    tf: &Transforms,
    x: &[f64],
    channel: usize,
) -> Result<ChannelTrace> {
    let (mean, std) = channel_stats(x, model.revin_eps);
    let (g, b) = (model.revin_gamma[channel], model.revin_beta[channel]);
    if g == 0.0 {
        return Err(SffpError::DegenerateAffine { channel });
    }
    let normalized: Vec<f64> = x.iter().map(|v| g * (v - mean) / std + b).collect();
    let input_coeffs = tf.input_basis.analyze_real(&normalized);
    let rotated: Vec<Complex64> = input_coeffs
        .iter()
        .zip(&tf.forward_phase)
        .map(|(u, ph)| ph * *u)
        .collect();
    let transformed = tf.input_basis.synthesize(&rotated);
    let filtered = apply_filter(&transformed, model)?;
    let head_out = complex_linear(&filtered, model, channel)?;
    let output_coeffs = tf.output_basis.analyze(&head_out);
    let rotated_out: Vec<Complex64> = output_coeffs
        .iter()
        .zip(&tf.inverse_phase)
        .map(|(q, ph)| ph * q)
        .collect();
    let time_domain = tf.output_basis.synthesize(&rotated_out);
    let forecast: Vec<f64> = time_domain
        .iter()
        .map(|y| (y.re - b) / g * std + mean)
        .collect();
    if forecast.iter().any(|v| !v.is_finite()) {
        return Err(SffpError::Diverged { stage: "forecast" });
    }
    Ok(ChannelTrace {
        mean,
        std,
        normalized,
        input_coeffs,
        transformed,
        filtered,
        head_out,
        output_coeffs,
        time_domain,
        forecast,
    })
}

/// Result of [`forward`].
#[derive(Debug, Clone)]
pub struct Forecast {
    /// P×F prediction.
    pub values: DMatrix<f64>,
    /// Largest `|Im|` discarded when realising the inverse transform.
    pub max_imag_residual: f64,
    pub alpha: f64,
}

fn check_window(model: &SffpModel, x: &DMatrix<f64>) -> Result<()> {
    if x.shape() != (model.m, model.f) {
        return Err(SffpError::shape(
            format!("{}x{} input window", model.m, model.f),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SffpError::Diverged { stage: "input" });
    }
    Ok(())
}

pub(crate) fn forward_traced(
    model: &SffpModel,
    tf: &Transforms,
    x: &DMatrix<f64>,
) -> Result<Vec<ChannelTrace>> {
    check_window(model, x)?;
    (0..model.f)
        .map(|ch| forward_channel(model, tf, x.column(ch).as_slice(), ch))
        .collect()
}

/// Forecasts the next P rows from an M×F input window.
pub fn forward(x: &DMatrix<f64>, model: &SffpModel) -> Result<Forecast> {
    let tf = Transforms::new(model)?;
    forward_with(x, model, &tf)
}

pub fn forward_with(x: &DMatrix<f64>, model: &SffpModel, tf: &Transforms) -> Result<Forecast> {
    let traces = forward_traced(model, tf, x)?;
    let mut values = DMatrix::zeros(model.p, model.f);
    let mut max_imag_residual: f64 = 0.0;
    for (ch, t) in traces.iter().enumerate() {
        for (r, v) in t.forecast.iter().enumerate() {
            values[(r, ch)] = *v;
        }
        for y in &t.time_domain {
            max_imag_residual = max_imag_residual.max(y.im.abs());
        }
    }
    Ok(Forecast {
        values,
        max_imag_residual,
        alpha: model.canonical_alpha(),
    })
}
