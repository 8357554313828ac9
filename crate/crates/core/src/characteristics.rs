//! Characteristic curves `d eta/dt = -rho - eta/2`, `dz/dt = -z/2`, integrated
//! backward from a prescribed end point, with the landmark times and the
//! propagator used along them.
//!
//! `z` follows its closed form `z_t = z_0 e^{-t/2}`; `eta` is integrated with an
//! adaptive Dormand-Prince 5(4) pair in the reversed time `s = T - t`.

use faer::c64;

use crate::error::{Error, Result};
use crate::mde::{self, SpectralPoint, ENVELOPE_FACTOR};

/// Per-step relative error tolerance of the integrator.
pub const RK_TOLERANCE: f64 = 1e-10;
/// Upper end of the admissible `xi` range.
pub const XI_MAX: f64 = 0.01;

/// One stored point of a characteristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharSample {
    pub t: f64,
    pub z: c64,
    pub eta: f64,
    pub rho: f64,
    /// `<M'>` at `(z_t, i eta_t)`.
    pub m_prime: f64,
    /// Whether the sample sits on the uniform output grid.
    pub on_grid: bool,
}

impl CharSample {
    /// `d eta / dt`.
    pub fn eta_slope(&self) -> f64 {
        -self.rho - self.eta / 2.0
    }

    pub fn point(&self) -> SpectralPoint {
        SpectralPoint::new(self.z, self.eta).expect("stored samples are valid points")
    }
}

/// An integrated characteristic on `[0, T]`.
#[derive(Clone, Debug)]
pub struct Characteristic {
    samples: Vec<CharSample>,
    horizon: f64,
    z0: c64,
    end: SpectralPoint,
    t_star: f64,
    kappa0: f64,
    rejected_steps: usize,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate backward from `end` over `[0, horizon]`, storing `steps + 1` uniform
/// samples plus every accepted integrator point.
pub fn integrate_backward(end: SpectralPoint, horizon: f64, steps: usize) -> Result<Characteristic> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Argument(format!("horizon T must be positive, got {horizon}")));
    }
    if steps == 0 {
        return Err(Error::Argument("steps must be positive".into()));
    }
    let z0 = end.z() * (horizon / 2.0).exp();
    let z_at = |t: f64| z0 * (-t / 2.0).exp();
    let rhs = |s: f64, y: f64| -> Result<f64> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::numerical("characteristics", format!("eta left (0, inf) at s = {s}: {y}")));
        }
        Ok(mde::rho(z_at(horizon - s), y)? + y / 2.0)
    };
    let sample = |t: f64, y: f64, on_grid: bool| -> Result<CharSample> {
        let sol = mde::solve_mde(SpectralPoint::new(z_at(t), y)?)?;
        Ok(CharSample { t, z: z_at(t), eta: y, rho: sol.rho, m_prime: sol.m_prime_trace, on_grid })
    };

    let mut out = vec![sample(horizon, end.eta(), true)?];
    let mut s = 0.0f64;
    let mut y = end.eta();
    let mut k1 = rhs(s, y)?;
    let mut h = (0.01 * y / k1).min(horizon / steps as f64);
    let mut rejected = 0usize;
    for g in 1..=steps {
        let target = horizon * (g as f64 / steps as f64);
        while s < target {
            let last = s + h >= target - 1e-9 * (horizon / steps as f64);
            let step = if last { target - s } else { h };
            let mut k = [0.0f64; 7];
            k[0] = k1;
            for i in 1..7 {
                let yi = y + step * (0..i).map(|j| A[i][j] * k[j]).sum::<f64>();
                k[i] = rhs(s + C[i] * step, yi)?;
            }
            let y_new = y + step * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
            let err_abs = step * (0..7).map(|j| E[j] * k[j]).sum::<f64>();
            let err = err_abs.abs() / (RK_TOLERANCE * y.abs().max(y_new.abs()));
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && y_new.is_finite() && y_new > 0.0 {
                s = if last { target } else { s + step };
                y = y_new;
                k1 = k[6];
                let t = if last && g == steps { 0.0 } else { horizon - s };
                out.push(sample(t, y, last)?);
                if !last {
                    h = step * factor;
                }
            } else {
                rejected += 1;
                h = step * factor.min(1.0);
                if h < 1e-300 {
                    return Err(Error::numerical("characteristics", format!("step size underflow at s = {s}")));
                }
            }
        }
    }
    out.reverse();
    if out.windows(2).any(|w| !(w[0].t < w[1].t && w[0].eta > w[1].eta)) {
        return Err(Error::numerical("characteristics", "samples are not strictly ordered with eta decreasing"));
    }
    let eta0 = out[0].eta;
    let r0 = z0.norm();
    let kappa0 = (r0 - 1.0).max(0.0).powf(1.5) + eta0;
    let t_star = entry_time(z0, horizon);
    Ok(Characteristic { samples: out, horizon, z0, end, t_star, kappa0, rejected_steps: rejected })
}

/// First `t >= 0` with `|z0| e^{-t/2} <= 1`, by bisection on the ray.
fn entry_time(z0: c64, horizon: f64) -> f64 {
    let r0 = z0.norm();
    if r0 <= 1.0 {
        return 0.0;
    }
    let f = |t: f64| r0 * (-t / 2.0).exp() - 1.0;
    let mut hi = horizon.max(1e-12);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

impl Characteristic {
    /// Samples in increasing `t`.
    pub fn samples(&self) -> &[CharSample] {
        &self.samples
    }

    /// Samples on the uniform output grid, increasing `t`.
    pub fn grid(&self) -> Vec<CharSample> {
        self.samples.iter().copied().filter(|s| s.on_grid).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn z0(&self) -> c64 {
        self.z0
    }

    /// The prescribed end point `(z_T, eta_T)`.
    pub fn end(&self) -> SpectralPoint {
        self.end
    }

    pub fn start(&self) -> &CharSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &CharSample {
        self.samples.last().expect("non-empty")
    }

    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected_steps
    }

    /// `z_0 e^{-t/2}`.
    pub fn z_at(&self, t: f64) -> c64 {
        self.z0 * (-t / 2.0).exp()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::Argument(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// `eta_t` by cubic Hermite interpolation between stored samples.
    pub fn eta_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let k = self.samples.partition_point(|s| s.t <= t);
        if k == 0 {
            return Ok(self.samples[0].eta);
        }
        if k == self.samples.len() {
            return Ok(self.last().eta);
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        if t == a.t {
            return Ok(a.eta);
        }
        let h = b.t - a.t;
        let x = (t - a.t) / h;
        let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
        let h10 = x * (1.0 - x) * (1.0 - x);
        let h01 = x * x * (3.0 - 2.0 * x);
        let h11 = x * x * (x - 1.0);
        Ok(h00 * a.eta + h10 * h * a.eta_slope() + h01 * b.eta + h11 * h * b.eta_slope())
    }

    /// Full sample (with `rho` and `<M'>`) at an arbitrary time.
    pub fn sample_at(&self, t: f64) -> Result<CharSample> {
        let eta = self.eta_at(t)?;
        let z = self.z_at(t);
        let sol = mde::solve_mde(SpectralPoint::new(z, eta)?)?;
        Ok(CharSample { t, z, eta, rho: sol.rho, m_prime: sol.m_prime_trace, on_grid: false })
    }

    /// Largest relative deviation of `(eta/rho + 1) e^t` from its value at `T`.
    pub fn conservation_defect(&self) -> f64 {
        let inv = |s: &CharSample| (s.eta / s.rho + 1.0) * s.t.exp();
        let c = inv(self.last());
        self.samples.iter().map(|s| ((inv(s) - c) / c).abs()).fold(0.0, f64::max)
    }

    /// Largest `|z_t - z_0 e^{-t/2}|` over stored samples.
    pub fn z_ray_defect(&self) -> f64 {
        self.samples.iter().map(|s| (s.z - self.z_at(s.t)).norm()).fold(0.0, f64::max)
    }

    /// `rho_0 / rho_T`.
    pub fn rho_ratio(&self) -> f64 {
        self.start().rho / self.last().rho
    }

    /// `p_{s,t} = exp(int_s^t (1/2 + <M'_r>) dr)` by the trapezoid rule on stored samples.
    pub fn propagator(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::Argument(format!("propagator needs s <= t, got s = {s}, t = {t}")));
        }
        self.check_time(s)?;
        self.check_time(t)?;
        if s == t {
            return Ok(1.0);
        }
        let phi = |c: &CharSample| 0.5 + c.m_prime;
        let first = self.sample_at(s)?;
        let last = self.sample_at(t)?;
        let mut nodes = vec![(first.t, phi(&first))];
        nodes.extend(self.samples.iter().filter(|c| c.t > s && c.t < t).map(|c| (c.t, phi(c))));
        nodes.push((last.t, phi(&last)));
        let integral: f64 = nodes.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
        Ok(integral.exp())
    }

    /// Extremes over the grid of `eta_t rho_t` divided by its asymptotic profile
    /// `eta_T rho_T + (T - t) Gamma`, with `Gamma` depending on the side of the unit circle.
    pub fn eta_rho_profile_ratio(&self) -> (f64, f64) {
        let end = self.last();
        let a = end.eta * end.rho;
        let r = end.z.norm();
        let gamma = if r > 1.0 { a / (r - 1.0 + a.sqrt()) } else { a.sqrt() + (1.0 - r) };
        self.samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
            let ratio = s.eta * s.rho / (a + (self.horizon - s.t) * gamma);
            (lo.min(ratio), hi.max(ratio))
        })
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi > 0.0 && xi <= XI_MAX) {
        return Err(Error::Precondition(format!("xi must lie in (0, {XI_MAX}], got {xi}")));
    }
    Ok(())
}

/// Landmark times for a given `N` (which may be far beyond any matrix size).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmarks {
    pub t_star: f64,
    pub kappa0: f64,
    /// `T - N^{5 xi} / (N rho_T^2)` clamped to `[0, T]`.
    pub s1: f64,
    /// `T - (log N)^3 / (N rho_T^2)` clamped to `[0, T]`.
    pub s2: f64,
    pub s1_raw: f64,
    pub s2_raw: f64,
    pub s1_clamped: bool,
    pub s2_clamped: bool,
}

impl Landmarks {
    /// `S1 < S2 < T` on the unclamped values.
    pub fn ordered(&self, horizon: f64) -> bool {
        self.s1_raw < self.s2_raw && self.s2_raw < horizon
    }
}

pub fn landmark_times(ch: &Characteristic, xi: f64, n: f64) -> Result<Landmarks> {
    check_xi(xi)?;
    if !(n > 1.0) {
        return Err(Error::Argument(format!("N must exceed 1, got {n}")));
    }
    let t = ch.horizon;
    let nr2 = n * ch.last().rho.powi(2);
    let s1_raw = t - n.powf(5.0 * xi) / nr2;
    let s2_raw = t - n.ln().powi(3) / nr2;
    let clamp = |v: f64| v.clamp(0.0, t);
    Ok(Landmarks {
        t_star: ch.t_star,
        kappa0: ch.kappa0,
        s1: clamp(s1_raw),
        s2: clamp(s2_raw),
        s1_raw,
        s2_raw,
        s1_clamped: clamp(s1_raw) != s1_raw,
        s2_clamped: clamp(s2_raw) != s2_raw,
    })
}

/// Direction of an audit inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// Pass iff `value >= reference / F`.
    AtLeast,
    /// Pass iff `value <= reference * F`.
    AtMost,
    /// Pass iff `reference / F <= value <= reference * F`.
    Comparable,
}

/// One audited inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub bound: Bound,
    /// The inequality ranges over an empty time interval.
    pub vacuous: bool,
}

impl AuditCheck {
    pub fn ratio(&self) -> f64 {
        self.value / self.reference
    }

    pub fn pass(&self) -> bool {
        if self.vacuous {
            return true;
        }
        let r = self.ratio();
        let f = ENVELOPE_FACTOR;
        match self.bound {
            Bound::AtLeast => r >= 1.0 / f,
            Bound::AtMost => r <= f,
            Bound::Comparable => (1.0 / f..=f).contains(&r),
        }
    }
}

/// Outcome of the characteristic audit.
#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub n: f64,
    pub xi: f64,
    pub landmarks: Landmarks,
    pub checks: Vec<AuditCheck>,
    pub ordered: bool,
}

impl LemmaReport {
    pub fn items_pass(&self) -> bool {
        self.checks.iter().all(AuditCheck::pass)
    }

    pub fn all_pass(&self) -> bool {
        self.items_pass() && self.ordered
    }
}

/// Audit items (i)-(iii) of the characteristic lemma at synthetic size `n`.
pub fn check_lemma_chars(ch: &Characteristic, xi: f64, n: f64) -> Result<LemmaReport> {
    check_xi(xi)?;
    if !(n > 1.0) {
        return Err(Error::Precondition(format!("N must exceed 1, got {n}")));
    }
    let end = ch.last();
    let a = end.eta * end.rho;
    let r = end.z.norm();
    let edge = 1.0 + n.powf(-10.0 * xi);
    if r > edge * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("|z_T| = {r} exceeds 1 + N^(-10 xi) = {edge}")));
    }
    let (a_lo, a_hi) = (1.0 / n, n.powf(-20.0 * xi));
    if a < a_lo * (1.0 - 1e-9) || a > a_hi * (1.0 + 1e-9) {
        return Err(Error::Precondition(format!("A = eta_T rho_T = {a:e} outside [N^-1, N^(-20 xi)] = [{a_lo:e}, {a_hi:e}]")));
    }
    let t_expected = n.powf(-xi);
    if (ch.horizon - t_expected).abs() > 1e-9 * t_expected {
        return Err(Error::Precondition(format!("T = {} differs from N^(-xi) = {t_expected}", ch.horizon)));
    }
    let lm = landmark_times(ch, xi, n)?;
    let logn = n.ln();
    let start = ch.start();
    // Infimum of N eta rho over (0, s_end); `None` when the interval is empty.
    let min_product_until = |s_end: f64| -> Result<Option<f64>> {
        if s_end <= 0.0 {
            return Ok(None);
        }
        let at_end = ch.eta_at(s_end)? * ch.sample_at(s_end)?.rho;
        Ok(Some(ch.samples.iter().filter(|c| c.t <= s_end).map(|c| c.eta * c.rho).fold(at_end, f64::min) * n))
    };
    let check = |name, value: Option<f64>, reference, bound| AuditCheck {
        name,
        value: value.unwrap_or(f64::NAN),
        reference,
        bound,
        vacuous: value.is_none(),
    };
    let eta_s1 = ch.eta_at(lm.s1)?;
    let eta_s2 = ch.eta_at(lm.s2)?;
    let checks = vec![
        check("(i) eta0/rho0 ~ N^-xi", Some(start.eta / start.rho), n.powf(-xi), Bound::Comparable),
        check("(ii) N eta rho >~ N^5xi on (0,S1)", min_product_until(lm.s1_raw)?, n.powf(5.0 * xi), Bound::AtLeast),
        check("(ii) N eta rho >~ (log N)^3 on (0,S2)", min_product_until(lm.s2_raw)?, logn.powi(3), Bound::AtLeast),
        check("(iii) eta0/etaT >~ N^9xi", Some(start.eta / end.eta), n.powf(9.0 * xi), Bound::AtLeast),
        check("(iii) eta_S2/etaT <~ (log N)^3", Some(eta_s2 / end.eta), logn.powi(3), Bound::AtMost),
        check("(iii) eta0/eta_S1 >~ N^4xi", Some(start.eta / eta_s1), n.powf(4.0 * xi), Bound::AtLeast),
    ];
    Ok(LemmaReport { n, xi, ordered: lm.ordered(ch.horizon), landmarks: lm, checks })
}
