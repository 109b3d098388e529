//! Panel ingestion, chronological splits, sliding windows and synthetic
//! generators.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SffpError};
use crate::fracfourier::{most_concentrated_order, order_grid};

/// How timestamps were written in the source file; saving reuses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    #[default]
    Epoch,
    Iso,
}

/// A T×F panel of measurements, one column per band.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    pub values: DMatrix<f64>,
    /// Seconds since the Unix epoch, strictly increasing.
    pub timestamps: Vec<i64>,
    pub band_labels: Vec<String>,
    /// Seconds between consecutive rows.
    pub sample_interval: i64,
    pub time_format: TimeFormat,
}

impl SeriesPanel {
    /// Builds a panel with timestamps `0, interval, 2·interval, …`.
    pub fn from_values(values: DMatrix<f64>, sample_interval: i64) -> Self {
        let t = values.nrows();
        let f = values.ncols();
        SeriesPanel {
            values,
            timestamps: (0..t as i64).map(|i| i * sample_interval).collect(),
            band_labels: (0..f).map(|b| format!("band_{b}")).collect(),
            sample_interval,
            time_format: TimeFormat::Epoch,
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn bands(&self) -> usize {
        self.values.ncols()
    }

    pub fn format_timestamp(&self, ts: i64) -> String {
        match self.time_format {
            TimeFormat::Epoch => ts.to_string(),
            TimeFormat::Iso => DateTime::from_timestamp(ts, 0)
                .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
                .unwrap_or_else(|| ts.to_string()),
        }
    }

    /// Last `rows` rows as a new panel.
    pub fn tail(&self, rows: usize) -> SeriesPanel {
        let start = self.len().saturating_sub(rows);
        let n = self.len() - start;
        SeriesPanel {
            values: self.values.rows(start, n).into_owned(),
            timestamps: self.timestamps[start..].to_vec(),
            band_labels: self.band_labels.clone(),
            sample_interval: self.sample_interval,
            time_format: self.time_format,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: usize,
    pub repaired_cells: usize,
}

fn parse_timestamp(field: &str, line: usize) -> Result<(i64, TimeFormat)> {
    let field = field.trim();
    if let Ok(v) = field.parse::<i64>() {
        return Ok((v, TimeFormat::Epoch));
    }
    if let Ok(d) = DateTime::parse_from_rfc3339(field) {
        return Ok((d.timestamp(), TimeFormat::Iso));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(d) = NaiveDateTime::parse_from_str(field, fmt) {
            return Ok((d.and_utc().timestamp(), TimeFormat::Iso));
        }
    }
    Err(SffpError::Parse {
        line,
        message: format!("unrecognised timestamp {field:?}"),
    })
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("nan") || f.eq_ignore_ascii_case("na")
}

/// Reads a panel: header row, timestamp column, then one column per band.
/// Missing cells are forward-filled; a leading gap takes the column's first
/// observed value.
pub fn read_csv<R: Read>(reader: R) -> Result<(SeriesPanel, ParseReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| SffpError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 {
        return Err(SffpError::Parse {
            line: 1,
            message: "header needs a timestamp column and at least one band".into(),
        });
    }
    let bands = header.len() - 1;
    let band_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut timestamps = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut format = TimeFormat::Epoch;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| SffpError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != bands + 1 {
            return Err(SffpError::Parse {
                line,
                message: format!("expected {} fields, found {}", bands + 1, record.len()),
            });
        }
        let (ts, fmt) = parse_timestamp(&record[0], line)?;
        if let Some(&prev) = timestamps.last() {
            if ts <= prev {
                return Err(SffpError::Ordering { line });
            }
        }
        format = fmt;
        timestamps.push(ts);
        let row = record
            .iter()
            .skip(1)
            .map(|field| {
                if is_missing(field) {
                    Ok(None)
                } else {
                    field.parse::<f64>().map(Some).map_err(|_| SffpError::Parse {
                        line,
                        message: format!("invalid number {field:?}"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = row.iter().flatten().find(|v| !v.is_finite()) {
            return Err(SffpError::Parse {
                line,
                message: format!("non-finite value {bad}"),
            });
        }
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(SffpError::InsufficientData("csv has no data rows".into()));
    }

    let t = cells.len();
    let mut values = DMatrix::zeros(t, bands);
    let mut repaired = 0;
    for b in 0..bands {
        let first = cells.iter().find_map(|r| r[b]).ok_or_else(|| SffpError::Parse {
            line: 1,
            message: format!("band {:?} has no observed values", band_labels[b]),
        })?;
        let mut last = first;
        for (i, row) in cells.iter().enumerate() {
            match row[b] {
                Some(v) => last = v,
                None => repaired += 1,
            }
            values[(i, b)] = last;
        }
    }
    let sample_interval = timestamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .min()
        .unwrap_or(1);
    Ok((
        SeriesPanel {
            values,
            timestamps,
            band_labels,
            sample_interval,
            time_format: format,
        },
        ParseReport {
            rows: t,
            repaired_cells: repaired,
        },
    ))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<(SeriesPanel, ParseReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| SffpError::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

pub fn write_csv<W: Write>(panel: &SeriesPanel, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(panel.band_labels.iter().cloned());
    w.write_record(&header)?;
    for (i, ts) in panel.timestamps.iter().enumerate() {
        let mut row = vec![panel.format_timestamp(*ts)];
        row.extend(panel.values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn save_csv(panel: &SeriesPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| SffpError::io(path, e))?;
    write_csv(panel, std::io::BufWriter::new(file)).map_err(|e| SffpError::io(path, e))
}

/// Chronological 8:1:1 partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// Row range `[start, end)` of this split in a panel of `t` rows.
    pub fn bounds(self, t: usize) -> (usize, usize) {
        let a = 8 * t / 10;
        let b = 9 * t / 10;
        match self {
            Split::Train => (0, a),
            Split::Val => (a, b),
            Split::Test => (b, t),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Paired input/target windows drawn from one split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowBatch {
    /// M×F windows.
    pub inputs: Vec<DMatrix<f64>>,
    /// P×F windows immediately following each input.
    pub targets: Vec<DMatrix<f64>>,
    /// Panel row of each input's first sample.
    pub origin_indices: Vec<usize>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> WindowBatch {
        WindowBatch {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            origin_indices: indices.iter().map(|&i| self.origin_indices[i]).collect(),
        }
    }
}

/// Number of windows of `m + p` rows at the given stride in `len` rows.
pub fn window_count(len: usize, m: usize, p: usize, stride: usize) -> usize {
    if len < m + p || stride == 0 {
        0
    } else {
        (len - m - p) / stride + 1
    }
}

pub fn sliding_windows(
    panel: &SeriesPanel,
    m: usize,
    p: usize,
    stride: usize,
    split: Split,
) -> Result<WindowBatch> {
    if stride == 0 {
        return Err(SffpError::Config("stride must be positive".into()));
    }
    let (start, end) = split.bounds(panel.len());
    let count = window_count(end - start, m, p, stride);
    if count == 0 {
        return Err(SffpError::InsufficientData(format!(
            "{split} split has {} rows, need at least m + p = {}",
            end - start,
            m + p
        )));
    }
    let mut batch = WindowBatch::default();
    for w in 0..count {
        let origin = start + w * stride;
        batch.inputs.push(panel.values.rows(origin, m).into_owned());
        batch.targets.push(panel.values.rows(origin + m, p).into_owned());
        batch.origin_indices.push(origin);
    }
    Ok(batch)
}

/// Parameters of the chirp + trend generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpSpec {
    pub t_len: usize,
    pub f_bands: usize,
    /// Frequency slope in cycles per sample².
    pub chirp_rate: f64,
    /// Starting frequency in cycles per sample.
    pub f0: f64,
    pub noise_sigma: f64,
    pub trend_slope: f64,
    pub seed: u64,
    /// Length of the window used for the concentration oracle.
    pub oracle_window: usize,
}

impl Default for ChirpSpec {
    fn default() -> Self {
        ChirpSpec {
            t_len: 2000,
            f_bands: 2,
            chirp_rate: 0.0,
            f0: 0.1,
            noise_sigma: 0.1,
            trend_slope: 0.0,
            seed: 0,
            oracle_window: 96,
        }
    }
}

fn band_phase(band: usize, bands: usize) -> f64 {
    2.0 * PI * band as f64 / bands as f64
}

fn chirp_value(spec: &ChirpSpec, band: usize, t: usize) -> f64 {
    let t = t as f64;
    (PI * spec.chirp_rate * t * t + 2.0 * PI * spec.f0 * t + band_phase(band, spec.f_bands)).cos()
        + spec.trend_slope * t
}

/// Generates the chirp panel and the order at which the noiseless first
/// band's leading `oracle_window` samples are most concentrated (step 0.01).
pub fn synth_chirp(spec: &ChirpSpec) -> Result<(SeriesPanel, f64)> {
    if spec.t_len < 32 {
        return Err(SffpError::Config(format!(
            "chirp panel needs t_len >= 32, got {}",
            spec.t_len
        )));
    }
    if spec.f_bands == 0 {
        return Err(SffpError::Config("chirp panel needs at least one band".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = DMatrix::zeros(spec.t_len, spec.f_bands);
    for b in 0..spec.f_bands {
        for t in 0..spec.t_len {
            let noise: f64 = rng.sample(StandardNormal);
            values[(t, b)] = chirp_value(spec, b, t) + spec.noise_sigma * noise;
        }
    }
    let window = spec.oracle_window.clamp(2, spec.t_len);
    let clean: Vec<Complex64> = (0..window)
        .map(|t| Complex64::new(chirp_value(spec, 0, t), 0.0))
        .collect();
    let oracle = most_concentrated_order(&clean, &order_grid(-2.0, 2.0, 0.01))?;
    Ok((SeriesPanel::from_values(values, 1), oracle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    #[default]
    Linear,
    Quadratic,
}

/// Parameters of the trend + AR(1) generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendSpec {
    pub t_len: usize,
    pub f_bands: usize,
    pub kind: TrendKind,
    /// Linear: increment per sample. Quadratic: value reached at `t_len`.
    pub slope: f64,
    pub ar1_phi: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TrendSpec {
    fn default() -> Self {
        TrendSpec {
            t_len: 2000,
            f_bands: 2,
            kind: TrendKind::Linear,
            slope: 0.01,
            ar1_phi: 0.5,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

/// Trend (offset by the band index) plus AR(1) noise.
pub fn synth_trend_noise(spec: &TrendSpec) -> Result<SeriesPanel> {
    if !(spec.ar1_phi.abs() < 1.0) {
        return Err(SffpError::Config(format!(
            "AR(1) coefficient must satisfy |phi| < 1, got {}",
            spec.ar1_phi
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = DMatrix::zeros(spec.t_len, spec.f_bands);
    let stationary = 1.0 / (1.0 - spec.ar1_phi * spec.ar1_phi).sqrt();
    for b in 0..spec.f_bands {
        let mut e = 0.0;
        for t in 0..spec.t_len {
            let shock: f64 = rng.sample(StandardNormal);
            e = if t == 0 {
                spec.noise_sigma * stationary * shock
            } else {
                spec.ar1_phi * e + spec.noise_sigma * shock
            };
            let tf = t as f64;
            let trend = match spec.kind {
                TrendKind::Linear => spec.slope * tf,
                TrendKind::Quadratic => spec.slope * tf * tf / spec.t_len.max(1) as f64,
            };
            values[(t, b)] = b as f64 + trend + e;
        }
    }
    Ok(SeriesPanel::from_values(values, 1))
}

/// One-sided power spectrum of a mean-removed band.
#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// Bin frequency in cycles per second of panel time.
    pub frequencies: Vec<f64>,
    /// `|DFT|² / T` for bins `0..=T/2`.
    pub power: Vec<f64>,
}

impl Periodogram {
    pub fn peak_bin(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    }

    pub fn median_power(&self) -> f64 {
        let mut p = self.power.clone();
        p.sort_by(f64::total_cmp);
        let n = p.len();
        if n % 2 == 1 {
            p[n / 2]
        } else {
            0.5 * (p[n / 2 - 1] + p[n / 2])
        }
    }
}

pub fn periodogram(panel: &SeriesPanel, band: usize) -> Result<Periodogram> {
    if band >= panel.bands() {
        return Err(SffpError::Index {
            what: "bands",
            index: band,
            len: panel.bands(),
        });
    }
    let t = panel.len();
    if t == 0 {
        return Err(SffpError::InsufficientData("empty panel".into()));
    }
    let col = panel.values.column(band);
    let mean = col.mean();
    let mut buf: Vec<Complex64> = col.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(t).process(&mut buf);
    let bins = t / 2 + 1;
    let dt = panel.sample_interval.max(1) as f64;
    Ok(Periodogram {
        frequencies: (0..bins).map(|k| k as f64 / (t as f64 * dt)).collect(),
        power: buf[..bins].iter().map(|c| c.norm_sqr() / t as f64).collect(),
    })
}

impl FromStr for Split {
    type Err = SffpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(SffpError::Config(format!("unknown split {other:?}"))),
        }
    }
}
