//! Discrete fractional Fourier transform built from an eigendecomposition of
//! the unitary DFT.
//!
//! The DFT matrix commutes with the nearly tridiagonal matrix `S` whose
//! diagonal is `2cos(2πn/N) - 4` and whose off-diagonal (including the two
//! wrap-around corners) is 1. Eigenvectors of `S` are discrete analogues of
//! the Hermite-Gaussian functions, so assigning each one a Hermite index `k`
//! gives
//!
//! ```text
//! F^a = Σ_k exp(-iπak/2) v_k v_kᵀ
//! ```
//!
//! which is exactly unitary, additive in the order and 4-periodic. The
//! eigenvectors are computed separately in the even and odd subspaces of `S`
//! so that every eigenvalue inside a block is simple and the ordering is
//! stable.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Result, SffpError};

/// Real orthogonal basis diagonalising the N-point unitary DFT.
#[derive(Debug, Clone)]
pub struct Eigenbasis {
    n: usize,
    /// Column `j` is the eigenvector with Hermite index `hermite[j]`.
    vectors: DMatrix<f64>,
    hermite: Vec<usize>,
}

impl Eigenbasis {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn hermite_indices(&self) -> &[usize] {
        &self.hermite
    }

    /// `exp(-iπ·order·k/2)` for every column.
    pub fn phases(&self, order: f64) -> Vec<Complex64> {
        self.hermite.iter().map(|&k| order_phase(order, k)).collect()
    }

    /// Derivative of [`Eigenbasis::phases`] with respect to the order.
    pub fn phase_derivatives(&self, order: f64) -> Vec<Complex64> {
        self.hermite
            .iter()
            .map(|&k| Complex64::new(0.0, -PI * k as f64 / 2.0) * order_phase(order, k))
            .collect()
    }

    /// `Vᵀ x` for a real vector.
    pub fn analyze_real(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            let col = self.vectors.column(j);
            *o = col.iter().zip(x).map(|(v, x)| v * x).sum();
        }
        out
    }

    /// `Vᵀ x` for a complex vector.
    pub fn analyze(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (j, o) in out.iter_mut().enumerate() {
            let col = self.vectors.column(j);
            *o = col.iter().zip(x).map(|(v, x)| x * *v).sum();
        }
        out
    }

    /// `V c` for a complex coefficient vector.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (j, c) in coeffs.iter().enumerate() {
            let col = self.vectors.column(j);
            for (o, v) in out.iter_mut().zip(col.iter()) {
                *o += c * *v;
            }
        }
        out
    }

    /// `V c` for a real coefficient vector.
    pub fn synthesize_real(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (j, c) in coeffs.iter().enumerate() {
            let col = self.vectors.column(j);
            for (o, v) in out.iter_mut().zip(col.iter()) {
                *o += c * v;
            }
        }
        out
    }

    fn weighted_outer_sum(&self, weights: &[Complex64]) -> DMatrix<Complex64> {
        let n = self.n;
        let v = &self.vectors;
        DMatrix::from_fn(n, n, |r, c| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, w) in weights.iter().enumerate() {
                acc += w * (v[(r, j)] * v[(c, j)]);
            }
            acc
        })
    }
}

fn order_phase(order: f64, k: usize) -> Complex64 {
    // Reduce before multiplying so operator(a) and operator(a + 4) share phases.
    let turns = (order.rem_euclid(4.0) * k as f64).rem_euclid(4.0);
    Complex64::from_polar(1.0, -PI * turns / 2.0)
}

/// Maps an order onto the canonical interval `[-2, 2)`.
pub fn canonical_order(order: f64) -> f64 {
    (order + 2.0).rem_euclid(4.0) - 2.0
}

/// The matrix `S` that commutes with the N-point DFT.
pub fn commuting_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(SffpError::InvalidLength(n));
    }
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] += 2.0 * (2.0 * PI * i as f64 / n as f64).cos() - 4.0;
        s[(i, (i + 1) % n)] += 1.0;
        s[((i + 1) % n, i)] += 1.0;
    }
    Ok(s)
}

/// Orthogonal change of basis separating even and odd sequences.
fn parity_split(n: usize) -> DMatrix<f64> {
    let r = n / 2;
    let even = n % 2 == 0;
    let mut p = DMatrix::zeros(n, n);
    p[(0, 0)] = 1.0;
    for i in 1..=(r - usize::from(even)) {
        p[(i, i)] = FRAC_1_SQRT_2;
        p[(i, n - i)] = FRAC_1_SQRT_2;
    }
    if even {
        p[(r, r)] = 1.0;
    }
    for i in (r + 1)..n {
        p[(i, i)] = -FRAC_1_SQRT_2;
        p[(i, n - i)] = FRAC_1_SQRT_2;
    }
    p
}

/// Number of sign changes of a sequence centred at index 0, read in the
/// order `-⌊(N-1)/2⌋ … ⌊N/2⌋`. Entries below `tol` are skipped.
pub fn zero_crossings(v: &[f64], tol: f64) -> usize {
    let n = v.len();
    let half = (n - 1) / 2;
    let mut last = 0.0_f64;
    let mut count = 0;
    for i in 0..n {
        let idx = (i + n - half) % n;
        let x = v[idx];
        if x.abs() <= tol {
            continue;
        }
        if last != 0.0 && x.signum() != last.signum() {
            count += 1;
        }
        last = x;
    }
    count
}

fn sorted_block_vectors(
    block: DMatrix<f64>,
    p: &DMatrix<f64>,
    offset: usize,
) -> Vec<DVector<f64>> {
    let size = block.nrows();
    if size == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(block);
    let mut order: Vec<usize> = (0..size).collect();
    // Descending eigenvalue of S corresponds to ascending Hermite index.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let n = p.nrows();
    order
        .into_iter()
        .map(|j| {
            let mut q = DVector::zeros(n);
            for i in 0..size {
                q[offset + i] = eig.eigenvectors[(i, j)];
            }
            let mut v = p * q;
            let norm = v.norm();
            v /= norm;
            let scale = v.amax();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * scale).copied() {
                if first < 0.0 {
                    v.neg_mut();
                }
            }
            v
        })
        .collect()
}

fn compute_eigenbasis(n: usize) -> Result<Eigenbasis> {
    let s = commuting_matrix(n)?;
    let p = parity_split(n);
    let cs = &p * &s * p.transpose();
    let r = n / 2;
    let even_size = r + 1;
    let odd_size = n - even_size;
    let even_block = cs.view((0, 0), (even_size, even_size)).into_owned();
    let odd_block = cs
        .view((even_size, even_size), (odd_size, odd_size))
        .into_owned();

    let even_vecs = sorted_block_vectors(even_block, &p, 0);
    let odd_vecs = sorted_block_vectors(odd_block, &p, even_size);

    let mut columns = Vec::with_capacity(n);
    let mut hermite = Vec::with_capacity(n);
    for (i, v) in even_vecs.into_iter().enumerate() {
        // For even N the even block has N/2 + 1 vectors, so the last one takes
        // index N and N-1 is skipped.
        hermite.push(2 * i);
        columns.push(v);
    }
    for (i, v) in odd_vecs.into_iter().enumerate() {
        hermite.push(2 * i + 1);
        columns.push(v);
    }

    // Order columns by Hermite index.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&j| hermite[j]);
    let vectors = DMatrix::from_fn(n, n, |row, col| columns[idx[col]][row]);
    let hermite = idx.iter().map(|&j| hermite[j]).collect();
    Ok(Eigenbasis {
        n,
        vectors,
        hermite,
    })
}

fn cache() -> &'static RwLock<HashMap<usize, Arc<Eigenbasis>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Eigenbasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Returns the (cached) DFT eigenbasis for length `n`.
pub fn build_eigenbasis(n: usize) -> Result<Arc<Eigenbasis>> {
    if n < 2 {
        return Err(SffpError::InvalidLength(n));
    }
    if let Some(b) = cache().read().expect("eigenbasis cache poisoned").get(&n) {
        return Ok(Arc::clone(b));
    }
    let basis = Arc::new(compute_eigenbasis(n)?);
    let mut guard = cache().write().expect("eigenbasis cache poisoned");
    Ok(Arc::clone(guard.entry(n).or_insert(basis)))
}

/// The discrete fractional Fourier transform of one length and order.
#[derive(Debug, Clone)]
pub struct FrftOperator {
    order: f64,
    basis: Arc<Eigenbasis>,
    kernel: DMatrix<Complex64>,
}

impl FrftOperator {
    pub fn new(n: usize, order: f64) -> Result<Self> {
        if !order.is_finite() {
            return Err(SffpError::Config(format!("non-finite order {order}")));
        }
        let basis = build_eigenbasis(n)?;
        let kernel = basis.weighted_outer_sum(&basis.phases(order));
        Ok(FrftOperator {
            order,
            basis,
            kernel,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.n
    }

    pub fn is_empty(&self) -> bool {
        self.basis.n == 0
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn basis(&self) -> &Eigenbasis {
        &self.basis
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.basis.vectors
    }

    pub fn hermite_indices(&self) -> &[usize] {
        &self.basis.hermite
    }

    pub fn kernel(&self) -> &DMatrix<Complex64> {
        &self.kernel
    }

    /// `dF^a/da = Σ_k (-iπk/2) exp(-iπak/2) v_k v_kᵀ`.
    pub fn order_derivative(&self) -> DMatrix<Complex64> {
        self.basis
            .weighted_outer_sum(&self.basis.phase_derivatives(self.order))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(SffpError::shape(
                format!("vector of length {}", self.len()),
                format!("length {len}"),
            ));
        }
        Ok(())
    }

    /// Applies the kernel.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        Ok(matvec(&self.kernel, x))
    }

    /// Applies the conjugate-transpose kernel, i.e. the transform of order `-a`.
    pub fn apply_inverse(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        let n = self.len();
        let k = &self.kernel;
        Ok((0..n)
            .map(|r| (0..n).map(|c| k[(c, r)].conj() * x[c]).sum())
            .collect())
    }
}

fn matvec(m: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|r| x.iter().enumerate().map(|(c, x)| m[(r, c)] * x).sum())
        .collect()
}

/// Convenience wrapper for [`FrftOperator::new`].
pub fn build_operator(n: usize, order: f64) -> Result<FrftOperator> {
    FrftOperator::new(n, order)
}

pub fn frft(x: &[Complex64], op: &FrftOperator) -> Result<Vec<Complex64>> {
    op.apply(x)
}

pub fn ifrft(x: &[Complex64], op: &FrftOperator) -> Result<Vec<Complex64>> {
    op.apply_inverse(x)
}

pub fn operator_order_derivative(op: &FrftOperator) -> DMatrix<Complex64> {
    op.order_derivative()
}

/// Unitary DFT matrix `W[m, n] = exp(-2πimn/N)/√N`.
pub fn dft_matrix(n: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |r, c| {
        let turns = ((r * c) % n) as f64 / n as f64;
        Complex64::from_polar(scale, -2.0 * PI * turns)
    })
}

/// Permutation `x[n] -> x[(-n) mod N]`.
pub fn parity_matrix(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |r, c| {
        if (r + c) % n == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Shannon entropy of `|x|²/‖x‖²`, normalised by `ln N`.
pub fn spectral_entropy(x: &[Complex64]) -> Result<f64> {
    let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if energy <= 0.0 || !energy.is_finite() {
        return Err(SffpError::ZeroEnergy);
    }
    let h: f64 = x
        .iter()
        .map(|v| v.norm_sqr() / energy)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(h / (x.len() as f64).ln())
}

/// Normalised spectral entropy of `frft(x, a)` for each order `a`.
pub fn concentration_profile(x: &[Complex64], orders: &[f64]) -> Result<Vec<f64>> {
    if orders.is_empty() {
        return Err(SffpError::Config("empty order list".into()));
    }
    let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if energy <= 0.0 {
        return Err(SffpError::ZeroEnergy);
    }
    let basis = build_eigenbasis(x.len())?;
    let coeffs = basis.analyze(x);
    orders
        .iter()
        .map(|&a| {
            let rotated: Vec<Complex64> = coeffs
                .iter()
                .zip(basis.phases(a))
                .map(|(c, p)| c * p)
                .collect();
            spectral_entropy(&basis.synthesize(&rotated))
        })
        .collect()
}

/// Order with the lowest entropy among `orders`.
///
/// Orders whose entropy is within `1e-9` of the minimum count as ties; the
/// tie with the smallest magnitude wins, positive before negative. Real
/// inputs have a profile symmetric in the order, so this reports the
/// non-negative minimiser.
pub fn most_concentrated_order(x: &[Complex64], orders: &[f64]) -> Result<f64> {
    let profile = concentration_profile(x, orders)?;
    let min = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let best = orders
        .iter()
        .zip(&profile)
        .filter(|(_, &h)| h <= min + 1e-9)
        .map(|(&a, _)| a)
        .fold(f64::NAN, |best, a| {
            if best.is_nan()
                || a.abs() < best.abs() - 1e-12
                || ((a.abs() - best.abs()).abs() <= 1e-12 && a > best)
            {
                a
            } else {
                best
            }
        });
    Ok(best)
}

/// Evenly spaced grid from `start` to `end` inclusive.
pub fn order_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step).round() as usize;
    (0..=count).map(|i| start + step * i as f64).collect()
}
