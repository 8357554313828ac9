//! Hermitization `H^z = [[0, X - z], [(X - z)*, 0]]` and its resolvent at `w = i eta`.
//!
//! The resolvent is evaluated through one SVD `X - z = U S V*`, computed once per
//! `(X, z)` and shared by every `eta`. The eigenpairs of `H^z` are `+-s_k` with
//! eigenvectors `(u_k, +-v_k)/sqrt(2)`, so every power `G^p` is diagonal in that basis.

use faer::{c64, Mat, MatRef};
use std::sync::{Arc, OnceLock};

use crate::ensemble::RandomMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Block selectors `E1 = diag(1, 0)` and `E2 = diag(0, 1)` acting on `2x2` block structure.
pub const E1: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 0.0]];
pub const E2: [[f64; 2]; 2] = [[0.0, 0.0], [0.0, 1.0]];

/// Largest `N` for which [`spectrum`] runs a dense eigensolve.
pub const SPECTRUM_MAX_N: usize = 2048;
/// Largest `N` for which dense observables are accepted.
pub const DENSE_OBSERVABLE_MAX_N: usize = 512;
/// Sanity cap on the norm of an observable.
pub const OBSERVABLE_NORM_CAP: f64 = 1e3;
/// Tolerance on the unit-norm check of probe vectors.
pub const UNIT_TOL: f64 = 1e-12;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// SVD of `X - z`, the factorization behind every resolvent evaluation.
#[derive(Debug)]
pub struct SpectralFactor {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

/// The Hermitized matrix for one `z`.
#[derive(Debug)]
pub struct Hermitization {
    z: c64,
    n: usize,
    shifted: Mat<c64>,
    h: Mat<c64>,
    factor: OnceLock<Arc<SpectralFactor>>,
}

/// Assemble `H^z` from a sampled matrix.
pub fn hermitize(x: &RandomMatrix, z: c64) -> Hermitization {
    hermitize_entries(x.entries(), z)
}

/// Assemble `H^z` from raw entries.
pub fn hermitize_entries(x: MatRef<'_, c64>, z: c64) -> Hermitization {
    let n = x.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| if i == j { x[(i, j)] - z } else { x[(i, j)] });
    let mut h = Mat::<c64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let y = shifted[(i, j)];
            h[(i, n + j)] = y;
            h[(n + j, i)] = y.conj();
        }
    }
    Hermitization { z, n, shifted, h, factor: OnceLock::new() }
}

impl Hermitization {
    pub fn z(&self) -> c64 {
        self.z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The `2N x 2N` matrix `H^z`.
    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.h.as_ref()
    }

    /// `X - z`.
    pub fn shifted(&self) -> MatRef<'_, c64> {
        self.shifted.as_ref()
    }

    /// SVD of `X - z`, computed on first use.
    pub fn factor(&self) -> Result<Arc<SpectralFactor>> {
        if let Some(f) = self.factor.get() {
            return Ok(f.clone());
        }
        let d = linalg::svd(self.shifted.as_ref())?;
        if d.s.iter().any(|s| !s.is_finite()) {
            return Err(Error::numerical("hermitization", "non-finite singular value"));
        }
        let f = Arc::new(SpectralFactor { u: d.u, s: d.s, v: d.v });
        Ok(self.factor.get_or_init(|| f).clone())
    }

    /// Resolvent `(H^z - i eta)^{-1}`.
    pub fn resolvent(&self, eta: f64) -> Result<ResolventHandle> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::Argument(format!("eta must be positive, got {eta}")));
        }
        Ok(ResolventHandle { factor: self.factor()?, z: self.z, eta, n: self.n })
    }
}

/// Dense oracle: `(H - i eta)^{-1}` through LU.
pub fn dense_resolvent_lu(h: &Hermitization, eta: f64) -> Mat<c64> {
    let d = 2 * h.n;
    let a = Mat::from_fn(d, d, |i, j| if i == j { h.h[(i, j)] - c64::new(0.0, eta) } else { h.h[(i, j)] });
    linalg::inverse(a.as_ref())
}

/// Structured or dense observable `B` on `C^{2N}`.
#[derive(Clone, Debug)]
pub enum Observable {
    Zero,
    Identity,
    E1,
    E2,
    /// `B = x y*`.
    RankOne { x: Vec<c64>, y: Vec<c64> },
    Dense(Mat<c64>),
}

impl Observable {
    pub fn descriptor(&self) -> String {
        match self {
            Observable::Zero => "zero".into(),
            Observable::Identity => "identity".into(),
            Observable::E1 => "E1".into(),
            Observable::E2 => "E2".into(),
            Observable::RankOne { .. } => "rank-one".into(),
            Observable::Dense(_) => "dense".into(),
        }
    }

    /// Selector `E_i`, `i` in `{1, 2}`.
    pub fn selector(i: usize) -> Observable {
        if i == 1 {
            Observable::E1
        } else {
            Observable::E2
        }
    }

    /// Operator norm, or a cheap upper bound for it when that already passes `cap`.
    fn norm_within(&self, cap: f64) -> Result<f64> {
        Ok(match self {
            Observable::Zero => 0.0,
            Observable::Identity | Observable::E1 | Observable::E2 => 1.0,
            Observable::RankOne { x, y } => linalg::norm(x) * linalg::norm(y),
            Observable::Dense(b) => {
                let f = linalg::frobenius(b.as_ref());
                if f <= cap {
                    f
                } else {
                    linalg::operator_norm(b.as_ref())?
                }
            }
        })
    }

    pub fn operator_norm(&self) -> Result<f64> {
        match self {
            Observable::Dense(b) => linalg::operator_norm(b.as_ref()),
            other => other.norm_within(f64::INFINITY),
        }
    }

    /// Validate dimension and norm against a `2N`-dimensional space.
    pub fn check(&self, n: usize, cap: f64) -> Result<()> {
        let d = 2 * n;
        match self {
            Observable::RankOne { x, y } if x.len() != d || y.len() != d => {
                return Err(Error::Argument(format!("rank-one observable has length {}/{}, expected {d}", x.len(), y.len())))
            }
            Observable::Dense(b) if b.nrows() != d || b.ncols() != d => {
                return Err(Error::Argument(format!("dense observable is {}x{}, expected {d}x{d}", b.nrows(), b.ncols())))
            }
            Observable::Dense(_) if n > DENSE_OBSERVABLE_MAX_N => {
                return Err(Error::Argument(format!("dense observables need N <= {DENSE_OBSERVABLE_MAX_N}, got {n}")))
            }
            _ => {}
        }
        let norm = self.norm_within(cap)?;
        if norm > cap {
            return Err(Error::Argument(format!("observable norm {norm:e} exceeds cap {cap:e}")));
        }
        Ok(())
    }

    /// Dense `2N x 2N` expansion.
    pub fn dense(&self, n: usize) -> Mat<c64> {
        let d = 2 * n;
        match self {
            Observable::Zero => Mat::zeros(d, d),
            Observable::Identity => Mat::identity(d, d),
            Observable::E1 => Mat::from_fn(d, d, |i, j| if i == j && i < n { c64::new(1.0, 0.0) } else { ZERO }),
            Observable::E2 => Mat::from_fn(d, d, |i, j| if i == j && i >= n { c64::new(1.0, 0.0) } else { ZERO }),
            Observable::RankOne { x, y } => Mat::from_fn(d, d, |i, j| x[i] * y[j].conj()),
            Observable::Dense(b) => b.clone(),
        }
    }
}

/// Coefficients of `G^p` (or `(G*)^p` when `adjoint`) in the singular basis:
/// diagonal blocks carry `d_k`, off-diagonal blocks carry `o_k`.
fn power_coefficients(s: &[f64], eta: f64, p: i32, adjoint: bool) -> (Vec<c64>, Vec<c64>) {
    let w = if adjoint { c64::new(0.0, -eta) } else { c64::new(0.0, eta) };
    s.iter()
        .map(|&sk| {
            let alpha = (c64::new(sk, 0.0) - w).powi(-p);
            let beta = (c64::new(-sk, 0.0) - w).powi(-p);
            ((alpha + beta) * 0.5, (alpha - beta) * 0.5)
        })
        .unzip()
}

fn scaled_product(a: MatRef<'_, c64>, coeff: &[c64], b: MatRef<'_, c64>) -> Mat<c64> {
    let scaled = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * coeff[j]);
    &scaled * b.adjoint()
}

/// The four `N x N` blocks of a resolvent power.
#[derive(Clone, Debug)]
pub struct Blocks {
    pub b11: Mat<c64>,
    pub b12: Mat<c64>,
    pub b21: Mat<c64>,
    pub b22: Mat<c64>,
}

impl Blocks {
    pub fn get(&self, i: usize, j: usize) -> &Mat<c64> {
        match (i, j) {
            (1, 1) => &self.b11,
            (1, 2) => &self.b12,
            (2, 1) => &self.b21,
            _ => &self.b22,
        }
    }

    pub fn assemble(&self) -> Mat<c64> {
        let n = self.b11.nrows();
        Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.b11[(i, j)],
            (true, false) => self.b12[(i, j - n)],
            (false, true) => self.b21[(i - n, j)],
            (false, false) => self.b22[(i - n, j - n)],
        })
    }
}

/// Resolvent at `w = i eta` sharing the SVD of its Hermitization.
#[derive(Clone, Debug)]
pub struct ResolventHandle {
    factor: Arc<SpectralFactor>,
    z: c64,
    eta: f64,
    n: usize,
}

impl ResolventHandle {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn z(&self) -> c64 {
        self.z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.factor.s
    }

    /// `G^p y`, or `(G*)^p y` when `adjoint`.
    pub fn apply_power(&self, p: i32, y: &[c64], adjoint: bool) -> Vec<c64> {
        let n = self.n;
        let f = &self.factor;
        let (d, o) = power_coefficients(&f.s, self.eta, p, adjoint);
        let a = linalg::adjoint_matvec(f.u.as_ref(), &y[..n]);
        let b = linalg::adjoint_matvec(f.v.as_ref(), &y[n..]);
        let top: Vec<c64> = (0..n).map(|k| d[k] * a[k] + o[k] * b[k]).collect();
        let bot: Vec<c64> = (0..n).map(|k| o[k] * a[k] + d[k] * b[k]).collect();
        let mut out = linalg::matvec(f.u.as_ref(), &top);
        out.extend(linalg::matvec(f.v.as_ref(), &bot));
        out
    }

    /// `G y`.
    pub fn apply(&self, y: &[c64]) -> Vec<c64> {
        self.apply_power(1, y, false)
    }

    /// `G^t y = conj(G* conj(y))`.
    pub fn apply_transpose(&self, y: &[c64]) -> Vec<c64> {
        linalg::conj(&self.apply_power(1, &linalg::conj(y), true))
    }

    /// `<x, G y>` without the unit-norm check.
    pub fn quadratic_form(&self, x: &[c64], y: &[c64]) -> c64 {
        linalg::dot(x, &self.apply(y))
    }

    /// `<x, G y>` for unit vectors `x`, `y`.
    pub fn iso_entry(&self, x: &[c64], y: &[c64]) -> Result<c64> {
        let d = 2 * self.n;
        for (name, v) in [("x", x), ("y", y)] {
            if v.len() != d {
                return Err(Error::Argument(format!("{name} has length {}, expected {d}", v.len())));
            }
            let nv = linalg::norm(v);
            if (nv - 1.0).abs() > UNIT_TOL {
                return Err(Error::Argument(format!("{name} is not a unit vector (norm {nv})")));
            }
        }
        Ok(self.quadratic_form(x, y))
    }

    /// `<G^p>`.
    pub fn trace_power(&self, p: i32) -> c64 {
        let (d, _) = power_coefficients(&self.factor.s, self.eta, p, false);
        d.iter().sum::<c64>() / self.n as f64
    }

    /// `<G>`.
    pub fn trace(&self) -> c64 {
        self.trace_power(1)
    }

    /// `<Im G>`.
    pub fn im_trace(&self) -> f64 {
        self.trace().im
    }

    /// `<G G*>` from the spectral representation.
    pub fn trace_g_gstar(&self) -> f64 {
        let e2 = self.eta * self.eta;
        self.factor.s.iter().map(|s| 1.0 / (s * s + e2)).sum::<f64>() / self.n as f64
    }

    /// Blocks of `G^p`, or of `(G*)^p` when `adjoint`.
    pub fn power_blocks(&self, p: i32, adjoint: bool) -> Blocks {
        let f = &self.factor;
        let (d, o) = power_coefficients(&f.s, self.eta, p, adjoint);
        Blocks {
            b11: scaled_product(f.u.as_ref(), &d, f.u.as_ref()),
            b12: scaled_product(f.u.as_ref(), &o, f.v.as_ref()),
            b21: scaled_product(f.v.as_ref(), &o, f.u.as_ref()),
            b22: scaled_product(f.v.as_ref(), &d, f.v.as_ref()),
        }
    }

    /// Off-diagonal blocks `(G^p)_{12}`, `(G^p)_{21}` only.
    pub fn off_diagonal_blocks(&self, p: i32) -> (Mat<c64>, Mat<c64>) {
        let f = &self.factor;
        let (_, o) = power_coefficients(&f.s, self.eta, p, false);
        (scaled_product(f.u.as_ref(), &o, f.v.as_ref()), scaled_product(f.v.as_ref(), &o, f.u.as_ref()))
    }

    /// Dense `G^p` (or `(G*)^p`).
    pub fn dense_power(&self, p: i32, adjoint: bool) -> Mat<c64> {
        self.power_blocks(p, adjoint).assemble()
    }

    pub fn dense(&self) -> Mat<c64> {
        self.dense_power(1, false)
    }

    /// `<G B> = (2N)^{-1} Tr(G B)`.
    pub fn averaged_trace(&self, b: &Observable) -> Result<c64> {
        b.check(self.n, OBSERVABLE_NORM_CAP)?;
        let n2 = 2.0 * self.n as f64;
        Ok(match b {
            Observable::Zero => ZERO,
            Observable::Identity => self.trace(),
            Observable::E1 | Observable::E2 => self.trace() * 0.5,
            Observable::RankOne { x, y } => self.quadratic_form(y, x) / n2,
            Observable::Dense(bm) => {
                let g = self.dense();
                let d = 2 * self.n;
                let mut s = ZERO;
                for j in 0..d {
                    for i in 0..d {
                        s += g[(i, j)] * bm[(j, i)];
                    }
                }
                s / n2
            }
        })
    }
}

/// Sorted eigenvalues of `H^z` with the `+-` pairing.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: Vec<f64>,
    n: usize,
}

impl Spectrum {
    /// All `2N` eigenvalues, increasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `lambda_i`, `i = 1..=N`, the non-negative half in increasing order.
    pub fn positive(&self, i: usize) -> f64 {
        self.values[self.n + i - 1]
    }

    /// `lambda_{-i} = `values[N - i]`.
    pub fn negative(&self, i: usize) -> f64 {
        self.values[self.n - i]
    }

    /// `max_i |lambda_i + lambda_{-i}|`.
    pub fn pairing_defect(&self) -> f64 {
        (1..=self.n).map(|i| (self.positive(i) + self.negative(i)).abs()).fold(0.0, f64::max)
    }

    /// `||H||`.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Smallest `|lambda|`.
    pub fn min_abs(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Dense Hermitian eigensolve of `H^z`.
pub fn spectrum(h: &Hermitization) -> Result<Spectrum> {
    if h.n > SPECTRUM_MAX_N {
        return Err(Error::Argument(format!("spectrum needs N <= {SPECTRUM_MAX_N}, got {}", h.n)));
    }
    let values = linalg::hermitian_eigenvalues(h.h.as_ref())?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("hermitization", "eigensolver returned non-finite values"));
    }
    Ok(Spectrum { values, n: h.n })
}

/// `x = (0, x1)` embedding of an `N`-vector into the lower block.
pub fn embed_lower(x1: &[c64]) -> Vec<c64> {
    let mut v = vec![ZERO; x1.len()];
    v.extend_from_slice(x1);
    v
}

/// `x = (x1, 0)` embedding into the upper block.
pub fn embed_upper(x1: &[c64]) -> Vec<c64> {
    let mut v = x1.to_vec();
    v.extend(std::iter::repeat_n(ZERO, x1.len()));
    v
}

/// Standard basis vector `e_k` of length `d`.
pub fn basis_vector(d: usize, k: usize) -> Vec<c64> {
    let mut v = vec![ZERO; d];
    v[k] = c64::new(1.0, 0.0);
    v
}
