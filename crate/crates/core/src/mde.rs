//! Scalar Matrix Dyson Equation at `w = i eta` and its derived quantities.
//!
//! With `m = i a` the equation `-1/m = i eta + m - |z|^2 / (i eta + m)` clears to the
//! real cubic `a^3 + 2 eta a^2 + (eta^2 + |z|^2 - 1) a - eta = 0`, whose coefficient
//! signs admit exactly one positive root.

use faer::{c64, Mat};

use crate::error::{Error, Result};

/// Largest `|z|` accepted by [`SpectralPoint`].
pub const Z_MAX: f64 = 10.0;
/// Upper end of the product range served by [`solve_eta_for_product`].
pub const A_STAR: f64 = 1e-2;
/// Two-sided factor used for every asymptotic envelope.
pub const ENVELOPE_FACTOR: f64 = 10.0;

/// Spectral location `z` and imaginary spectral parameter `eta > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    z: c64,
    eta: f64,
}

impl SpectralPoint {
    pub fn new(z: c64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::OutOfRange(format!("eta must be positive and finite, got {eta}")));
        }
        if !(z.norm() <= Z_MAX) {
            return Err(Error::OutOfRange(format!("|z| = {} exceeds {Z_MAX}", z.norm())));
        }
        Ok(SpectralPoint { z, eta })
    }

    pub fn real(z: f64, eta: f64) -> Result<Self> {
        Self::new(c64::new(z, 0.0), eta)
    }

    pub fn z(&self) -> c64 {
        self.z
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn abs_z(&self) -> f64 {
        self.z.norm()
    }
}

/// Solution of the MDE at a spectral point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdeSolution {
    pub point: SpectralPoint,
    /// `m = i a`.
    pub a: f64,
    pub u: f64,
    pub rho: f64,
    /// `<M'>`, the normalized trace of `dM/dw`.
    pub m_prime_trace: f64,
    /// `|(i eta + m) + m (i eta + m)^2 - |z|^2 m|`, the equation with denominators cleared.
    pub residual: f64,
}

impl MdeSolution {
    pub fn m(&self) -> c64 {
        c64::new(0.0, self.a)
    }

    /// Relative defect of `-u = m^2 - |z|^2 u^2`.
    pub fn self_consistency_defect(&self) -> f64 {
        let z2 = self.point.abs_z().powi(2);
        let terms = [self.u, self.a * self.a, z2 * self.u * self.u];
        let scale = terms.iter().fold(0.0f64, |s, t| s.max(t.abs()));
        (self.u - terms[1] - terms[2]).abs() / scale
    }
}

/// `a^3 + 2 eta a^2 + (eta^2 + |z|^2 - 1) a - eta`.
pub fn cubic(a: f64, eta: f64, abs_z: f64) -> f64 {
    let c1 = eta * eta + (abs_z - 1.0) * (abs_z + 1.0);
    ((a + 2.0 * eta) * a + c1) * a - eta
}

fn positive_root(eta: f64, abs_z: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, 2.0 + eta);
    if !(cubic(lo, eta, abs_z) < 0.0 && cubic(hi, eta, abs_z) > 0.0) {
        return Err(Error::numerical(
            "mde",
            format!("no sign change of the cubic on [0, 2 + eta] at eta = {eta}, |z| = {abs_z}"),
        ));
    }
    for _ in 0..4096 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cubic(mid, eta, abs_z) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if cubic(hi, eta, abs_z).abs() < cubic(lo, eta, abs_z).abs() { hi } else { lo };
    if !(root > 0.0) {
        return Err(Error::numerical("mde", format!("bisection returned non-positive root at eta = {eta}, |z| = {abs_z}")));
    }
    Ok(root)
}

/// Number of sign changes of the cubic on a 64-point scan of `[0, 2 + eta]`.
pub fn root_scan_sign_changes(eta: f64, abs_z: f64) -> usize {
    let hi = 2.0 + eta;
    let vals: Vec<f64> = (0..=64).map(|k| cubic(hi * k as f64 / 64.0, eta, abs_z)).collect();
    vals.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
}

fn m_prime_from(a: f64, u: f64, eta: f64, abs_z: f64) -> Result<f64> {
    let z2 = abs_z * abs_z;
    let d = 1.0 + u - 2.0 * z2 * u * u;
    if d.abs() < 1e-14 {
        return Err(Error::numerical(
            "mde",
            format!("singular denominator 1 + u - 2|z|^2 u^2 = {d:e} at eta = {eta}, |z| = {abs_z}, a = {a}"),
        ));
    }
    // -1 + 1/d written without the cancellation at small u.
    Ok(-u * (1.0 - 2.0 * z2 * u) / d)
}

/// `u (1 + 2|z|^2 u) / |1 + u - 2|z|^2 u^2|`, the size of the two terms whose
/// difference is `<M'>`. Relative errors of `<M'>` are measured against it, since
/// `<M'>` itself crosses zero on `|z| = 1`.
pub fn m_prime_scale(sol: &MdeSolution) -> f64 {
    let (u, z2) = (sol.u, sol.point.abs_z().powi(2));
    u * (1.0 + 2.0 * z2 * u) / (1.0 + u - 2.0 * z2 * u * u).abs()
}

/// Unique solution with `eta Im m > 0`.
pub fn solve_mde(point: SpectralPoint) -> Result<MdeSolution> {
    let (eta, abs_z) = (point.eta, point.abs_z());
    let a = positive_root(eta, abs_z)?;
    if root_scan_sign_changes(eta, abs_z) != 1 {
        return Err(Error::numerical("mde", format!("cubic has more than one positive root at eta = {eta}, |z| = {abs_z}")));
    }
    let u = a / (eta + a);
    let m_prime_trace = m_prime_from(a, u, eta, abs_z)?;
    Ok(MdeSolution { point, a, u, rho: a, m_prime_trace, residual: cubic(a, eta, abs_z).abs() })
}

/// `<M'>` recomputed from a solution.
pub fn m_prime_trace(sol: &MdeSolution) -> Result<f64> {
    m_prime_from(sol.a, sol.u, sol.point.eta, sol.point.abs_z())
}

/// `rho` at a point, the common case.
pub fn rho(z: c64, eta: f64) -> Result<f64> {
    Ok(solve_mde(SpectralPoint::new(z, eta)?)?.rho)
}

/// Centered Richardson-extrapolated difference of `a(eta)`, which equals `<M'>`.
///
/// The step is `eta / 100`; the extrapolation removes the `h^2` term.
pub fn m_prime_finite_difference(point: SpectralPoint) -> Result<f64> {
    let eta = point.eta;
    let a = |e: f64| -> Result<f64> { Ok(solve_mde(SpectralPoint::new(point.z, e)?)?.a) };
    let d = |h: f64| -> Result<f64> { Ok((a(eta + h)? - a(eta - h)?) / (2.0 * h)) };
    let h = 1e-2 * eta;
    Ok((4.0 * d(h / 2.0)? - d(h)?) / 3.0)
}

/// Centre of the asymptotic `rho` profile.
pub fn rho_envelope_center(point: SpectralPoint) -> f64 {
    let (eta, r) = (point.eta, point.abs_z());
    if r <= 1.0 {
        eta.cbrt() + (1.0 - r).sqrt()
    } else {
        eta / (r - 1.0 + eta.powf(2.0 / 3.0))
    }
}

/// `(center / F, center * F)` with `F` = [`ENVELOPE_FACTOR`].
pub fn rho_envelope(point: SpectralPoint) -> Result<(f64, f64)> {
    if point.eta >= 1.0 {
        return Err(Error::OutOfRange(format!("envelope needs eta < 1, got {}", point.eta)));
    }
    let c = rho_envelope_center(point);
    Ok((c / ENVELOPE_FACTOR, c * ENVELOPE_FACTOR))
}

/// Asymptotic centres of `(eta, eta/rho, rho)` at a prescribed product `eta rho = A`.
pub fn product_envelope_centers(abs_z: f64, a: f64) -> (f64, f64, f64) {
    if abs_z <= 1.0 {
        let d = 1.0 - abs_z;
        (a / (d.sqrt() + a.powf(0.25)), a / (d + a.sqrt()), a.powf(0.25) + d.sqrt())
    } else {
        let d = abs_z - 1.0;
        (a.sqrt() * (d.sqrt() + a.powf(0.25)), d + a.sqrt(), a.sqrt() / (d.sqrt() + a.powf(0.25)))
    }
}

/// `eta * rho^z(i eta)`.
pub fn eta_rho(z: c64, eta: f64) -> Result<f64> {
    Ok(eta * rho(z, eta)?)
}

/// Solve `eta rho^z(i eta) = target` for `eta` in `(0, 1)` by bisection in `log eta`.
///
/// No cap on `target` beyond the bracket: any value below `eta rho` at `eta = 1` is reachable.
pub fn invert_eta_rho(z: c64, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::OutOfRange(format!("target product must be positive, got {target}")));
    }
    if target >= 1.0 {
        return Err(Error::OutOfRange(format!(
            "eta rho = {target} is unreachable: eta Im m(i eta) < 1 for every eta"
        )));
    }
    SpectralPoint::new(z, 1.0)?;
    let top = eta_rho(z, 1.0)?;
    if top <= target {
        return Err(Error::numerical(
            "mde",
            format!("bracket failure: eta rho at eta = 1 is {top:.6e} <= target {target:.6e} (|z| = {})", z.norm()),
        ));
    }
    // Walk the lower end down geometrically; eta rho is increasing in eta.
    let mut hi = 0.0f64;
    let mut lo = target.ln().min(-1.0);
    loop {
        if eta_rho(z, lo.exp())? < target {
            break;
        }
        hi = lo;
        lo *= 2.0;
        if lo < -700.0 {
            return Err(Error::numerical("mde", format!("bracket failure: target {target:e} not reached above eta = e^-700")));
        }
    }
    let mut best = hi;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let p = eta_rho(z, mid.exp())?;
        best = mid;
        if (p - target).abs() <= 1e-14 * target {
            break;
        }
        if mid <= lo || mid >= hi {
            break;
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = best.exp();
    let achieved = eta_rho(z, eta)?;
    if (achieved - target).abs() > 1e-12 * target {
        return Err(Error::numerical("mde", format!("inversion stalled: eta rho = {achieved:e} vs target {target:e}")));
    }
    Ok(eta)
}

/// Unique `eta` in `(0, 1)` with `eta rho = A` for `0 < A < A_STAR`.
pub fn solve_eta_for_product(z: c64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::OutOfRange(format!("product A must be positive, got {a}")));
    }
    if a >= A_STAR {
        return Err(Error::OutOfRange(format!("product A = {a:e} is not below A* = {A_STAR:e}")));
    }
    invert_eta_rho(z, a)
}

/// The deterministic approximation `M^z(i eta)` in its `2x2`-block form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockM {
    pub m: c64,
    /// `-z u`, upper-right block coefficient.
    pub off_upper: c64,
    /// `-conj(z) u`, lower-left block coefficient.
    pub off_lower: c64,
    pub n: usize,
}

pub fn build_m(sol: &MdeSolution, n: usize) -> BlockM {
    let z = sol.point.z();
    BlockM { m: sol.m(), off_upper: -z * sol.u, off_lower: -z.conj() * sol.u, n }
}

impl BlockM {
    /// `<M>`.
    pub fn trace(&self) -> c64 {
        self.m
    }

    /// `<Im M>`.
    pub fn im_trace(&self) -> f64 {
        self.m.im
    }

    /// Dense `2N x 2N` expansion.
    pub fn expand(&self) -> Mat<c64> {
        let n = self.n;
        Mat::from_fn(2 * n, 2 * n, |i, j| self.entry(i, j))
    }

    pub fn entry(&self, i: usize, j: usize) -> c64 {
        let n = self.n;
        match (i < n, j < n) {
            (true, true) | (false, false) if i == j => self.m,
            (true, false) if j - n == i => self.off_upper,
            (false, true) if i - n == j => self.off_lower,
            _ => c64::new(0.0, 0.0),
        }
    }

    /// `M x` for a vector of length `2N`.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let n = self.n;
        let (top, bot) = x.split_at(n);
        let mut out = Vec::with_capacity(2 * n);
        out.extend(top.iter().zip(bot).map(|(t, b)| self.m * t + self.off_upper * b));
        out.extend(top.iter().zip(bot).map(|(t, b)| self.off_lower * t + self.m * b));
        out
    }

    /// `<x, M y>`.
    pub fn quadratic_form(&self, x: &[c64], y: &[c64]) -> c64 {
        crate::linalg::dot(x, &self.apply(y))
    }
}
