//! Local-law errors `<(G - M) B>` and `<x, (G - M) y>`, their normalized forms,
//! the spectral domain predicate, and the deterministic Schwarz-type bounds.

use faer::{c64, Mat};
use rayon::prelude::*;

use crate::ensemble::{self, Field, RandomMatrix};
use crate::error::{Error, Result};
use crate::hermitization::{self, hermitize, Observable, ResolventHandle};
use crate::linalg;
use crate::mde::{self, build_m, BlockM, MdeSolution, SpectralPoint};
use crate::rng::Stream;

/// Parameters `(C, xi, N)` of the spectral domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainParams {
    c: f64,
    xi: f64,
    n: u64,
}

impl DomainParams {
    pub fn new(c: f64, xi: f64, n: u64) -> Result<Self> {
        if !(c >= 1.0) {
            return Err(Error::Config(format!("domain constant C must be >= 1, got {c}")));
        }
        if !(xi > 0.0 && xi <= 0.01) {
            return Err(Error::Config(format!("domain xi must lie in (0, 0.01], got {xi}")));
        }
        if n < 2 {
            return Err(Error::Config(format!("domain N must be at least 2, got {n}")));
        }
        Ok(DomainParams { c, xi, n })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

/// Per-condition outcome of the domain predicate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainVerdict {
    pub inside: bool,
    /// `0 < eta < 1`.
    pub eta_in_unit: bool,
    /// `N eta rho >= 100 C^2 log N`.
    pub local_scale: bool,
    /// `eta / rho <= N^{-xi}`.
    pub eta_over_rho: bool,
    /// `|z| <= 1 + N^{-xi}`.
    pub near_disc: bool,
    pub rho: f64,
    pub n_eta_rho: f64,
    pub eta_over_rho_value: f64,
}

pub fn in_domain(point: SpectralPoint, p: &DomainParams) -> Result<DomainVerdict> {
    let rho = mde::solve_mde(point)?.rho;
    let n = p.n as f64;
    let eta = point.eta();
    let n_eta_rho = n * eta * rho;
    let eta_over_rho_value = eta / rho;
    let eta_in_unit = eta < 1.0;
    let local_scale = n_eta_rho >= 100.0 * p.c * p.c * n.ln();
    let eta_over_rho = eta_over_rho_value <= n.powf(-p.xi);
    let near_disc = point.abs_z() <= 1.0 + n.powf(-p.xi);
    Ok(DomainVerdict {
        inside: eta_in_unit && local_scale && eta_over_rho && near_disc,
        eta_in_unit,
        local_scale,
        eta_over_rho,
        near_disc,
        rho,
        n_eta_rho,
        eta_over_rho_value,
    })
}

/// A labelled unit vector in `C^{2N}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub label: String,
    pub vector: Vec<c64>,
}

impl Probe {
    pub fn new(label: impl Into<String>, vector: Vec<c64>) -> Result<Self> {
        let nv = linalg::norm(&vector);
        if (nv - 1.0).abs() > hermitization::UNIT_TOL {
            return Err(Error::Argument(format!("probe vector is not unit (norm {nv})")));
        }
        Ok(Probe { label: label.into(), vector })
    }

    /// `(0, e_k)`: coordinate `k` of the lower block.
    pub fn lower_coordinate(n: usize, k: usize) -> Self {
        Probe { label: format!("lower e{k}"), vector: hermitization::embed_lower(&hermitization::basis_vector(n, k)) }
    }

    /// `(e_k, 0)`.
    pub fn upper_coordinate(n: usize, k: usize) -> Self {
        Probe { label: format!("upper e{k}"), vector: hermitization::embed_upper(&hermitization::basis_vector(n, k)) }
    }

    /// Uniform random unit vector in `C^{2N}`.
    pub fn random(n: usize, stream: Stream) -> Self {
        let mut rng = stream.rng();
        let mut v: Vec<c64> = (0..2 * n).map(|_| ensemble::atom(ensemble::Distribution::Gaussian, Field::Complex, &mut rng)).collect();
        linalg::normalize(&mut v);
        Probe { label: format!("random {:016x}", stream.key()), vector: v }
    }

    pub fn conj(&self) -> Probe {
        Probe { label: format!("conj {}", self.label), vector: linalg::conj(&self.vector) }
    }
}

/// Random Hermitian observable normalized to operator norm one.
pub fn random_hermitian_observable(n: usize, stream: Stream) -> Result<Observable> {
    let mut rng = stream.rng();
    let g = ensemble::standard_gaussian(2 * n, Field::Complex, &mut rng);
    let h = Mat::from_fn(2 * n, 2 * n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5);
    let norm = linalg::operator_norm(h.as_ref())?;
    Ok(Observable::Dense(Mat::from_fn(2 * n, 2 * n, |i, j| h[(i, j)] / norm)))
}

/// `<M B>` for the block-constant deterministic approximation.
pub fn m_averaged_trace(m: &BlockM, b: &Observable) -> c64 {
    let n = m.n;
    let n2 = 2.0 * n as f64;
    match b {
        Observable::Zero => c64::new(0.0, 0.0),
        Observable::Identity => m.m,
        Observable::E1 | Observable::E2 => m.m * 0.5,
        Observable::RankOne { x, y } => m.quadratic_form(y, x) / n2,
        Observable::Dense(bm) => {
            let mut s = c64::new(0.0, 0.0);
            for i in 0..2 * n {
                s += m.m * bm[(i, i)];
            }
            for i in 0..n {
                s += m.off_upper * bm[(n + i, i)] + m.off_lower * bm[(i, n + i)];
            }
            s / n2
        }
    }
}

/// Raw and normalized local-law errors at one spectral point.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLawSample {
    pub point: SpectralPoint,
    pub n: usize,
    pub rho: f64,
    /// `<(G - M) B>`.
    pub avg_err: c64,
    /// `<x, (G - M) y>`.
    pub iso_err: c64,
    /// `N eta avg_err`.
    pub z1: c64,
    /// `sqrt(N eta / rho) iso_err`.
    pub z2: c64,
    pub observable: String,
    pub x: String,
    pub y: String,
    pub domain: Option<DomainVerdict>,
}

impl LocalLawSample {
    pub fn z1_scale(&self) -> f64 {
        self.n as f64 * self.point.eta()
    }

    pub fn z2_scale(&self) -> f64 {
        (self.n as f64 * self.point.eta() / self.rho).sqrt()
    }
}

/// Errors from an existing resolvent and MDE solution.
pub fn sample_from_resolvent(
    r: &ResolventHandle,
    sol: &MdeSolution,
    b: &Observable,
    x: &Probe,
    y: &Probe,
) -> Result<LocalLawSample> {
    let n = r.n();
    let m = build_m(sol, n);
    let avg_err = r.averaged_trace(b)? - m_averaged_trace(&m, b);
    let iso_err = r.iso_entry(&x.vector, &y.vector)? - m.quadratic_form(&x.vector, &y.vector);
    let eta = sol.point.eta();
    let z1 = avg_err * (n as f64 * eta);
    let z2 = iso_err * (n as f64 * eta / sol.rho).sqrt();
    Ok(LocalLawSample {
        point: sol.point,
        n,
        rho: sol.rho,
        avg_err,
        iso_err,
        z1,
        z2,
        observable: b.descriptor(),
        x: x.label.clone(),
        y: y.label.clone(),
        domain: None,
    })
}

pub fn sample_errors(x: &RandomMatrix, point: SpectralPoint, b: &Observable, xp: &Probe, yp: &Probe) -> Result<LocalLawSample> {
    let sol = mde::solve_mde(point)?;
    let r = hermitize(x, point.z()).resolvent(point.eta())?;
    sample_from_resolvent(&r, &sol, b, xp, yp)
}

/// How `eta` is chosen at each `z` of a scan.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaRule {
    Fixed(Vec<f64>),
    /// `eta rho = c log N / N`.
    Product { c: f64 },
}

/// A grid point the scan could not evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct Skipped {
    pub z: c64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct GridScan {
    pub samples: Vec<LocalLawSample>,
    pub skipped: Vec<Skipped>,
}

/// Evaluate every `(z, eta)` of the grid in `z`-major order. One SVD per `z`.
pub fn grid_scan(
    x: &RandomMatrix,
    p: &DomainParams,
    z_grid: &[c64],
    rule: &EtaRule,
    b: &Observable,
    xp: &Probe,
    yp: &Probe,
) -> GridScan {
    let n = x.n() as f64;
    let per_z: Vec<(Vec<LocalLawSample>, Vec<Skipped>)> = z_grid
        .par_iter()
        .map(|&z| {
            let mut out = (Vec::new(), Vec::new());
            let etas: Vec<Result<f64>> = match rule {
                EtaRule::Fixed(list) => list.iter().map(|&e| Ok(e)).collect(),
                EtaRule::Product { c } => vec![mde::invert_eta_rho(z, c * n.ln() / n)],
            };
            let h = hermitize(x, z);
            for eta in etas {
                let res = eta.and_then(|eta| {
                    let point = SpectralPoint::new(z, eta)?;
                    let sol = mde::solve_mde(point)?;
                    let r = h.resolvent(eta)?;
                    let mut s = sample_from_resolvent(&r, &sol, b, xp, yp)?;
                    s.domain = Some(in_domain(point, p)?);
                    Ok(s)
                });
                match res {
                    Ok(s) => out.0.push(s),
                    Err(e) => out.1.push(Skipped { z, reason: e.to_string() }),
                }
            }
            out
        })
        .collect();
    let mut scan = GridScan::default();
    for (s, k) in per_z {
        scan.samples.extend(s);
        scan.skipped.extend(k);
    }
    scan
}

/// One deterministic inequality `value <= bound`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub label: String,
    pub value: f64,
    pub bound: f64,
}

impl BoundCheck {
    /// Holds with slack factor one, up to rounding in the last digits.
    pub fn holds(&self) -> bool {
        self.value <= self.bound * (1.0 + 1e-10)
    }

    pub fn slack(&self) -> f64 {
        self.bound / self.value
    }
}

/// Result of a gated family of checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    NotApplicable,
    Holds,
    Violated,
}

#[derive(Clone, Debug)]
pub struct SchwarzReport {
    pub p: i32,
    pub q: i32,
    pub rho: f64,
    pub im_trace: f64,
    /// `<Im G> <= 2 rho`.
    pub averaged_event: bool,
    pub averaged: Vec<BoundCheck>,
    /// `max |(G - M)_{ww}|` over `w` in `{u, v, conj u, conj v}`.
    pub isotropic_deviation: f64,
    /// `isotropic_deviation <= rho`.
    pub isotropic_event: bool,
    pub isotropic: Vec<BoundCheck>,
}

impl SchwarzReport {
    fn verdict(event: bool, checks: &[BoundCheck]) -> Verdict {
        match (event, checks.iter().all(BoundCheck::holds)) {
            (false, _) => Verdict::NotApplicable,
            (true, true) => Verdict::Holds,
            (true, false) => Verdict::Violated,
        }
    }

    pub fn averaged_verdict(&self) -> Verdict {
        Self::verdict(self.averaged_event, &self.averaged)
    }

    pub fn isotropic_verdict(&self) -> Verdict {
        Self::verdict(self.isotropic_event, &self.isotropic)
    }

    /// Smallest `bound / value` among applicable checks.
    pub fn min_slack(&self) -> f64 {
        let mut s = f64::INFINITY;
        if self.averaged_event {
            s = self.averaged.iter().map(BoundCheck::slack).fold(s, f64::min);
        }
        if self.isotropic_event {
            s = self.isotropic.iter().map(BoundCheck::slack).fold(s, f64::min);
        }
        s
    }
}

fn select(v: &[c64], block: usize) -> Vec<c64> {
    let n = v.len() / 2;
    v.iter()
        .enumerate()
        .map(|(k, a)| if (k < n) == (block == 1) { *a } else { c64::new(0.0, 0.0) })
        .collect()
}

/// Averaged and isotropic Schwarz-type bounds at one resolvent.
pub fn schwarz_checks(
    r: &ResolventHandle,
    sol: &MdeSolution,
    b: &Observable,
    u: &Probe,
    v: &Probe,
    p: i32,
    q: i32,
) -> Result<SchwarzReport> {
    if p < 1 || q < 1 || p + q > 4 {
        return Err(Error::Argument(format!("powers must satisfy p, q >= 1 and p + q <= 4, got ({p}, {q})")));
    }
    let n = r.n();
    b.check(n, hermitization::OBSERVABLE_NORM_CAP)?;
    let bn = b.operator_norm()?;
    if bn > 1.0 + 1e-12 {
        return Err(Error::Argument(format!("observable norm {bn} exceeds 1")));
    }
    let eta = r.eta();
    let rho = sol.rho;
    let m = build_m(sol, n);
    let im_trace = r.im_trace();

    let gp_b = &r.dense_power(p, false) * &b.dense(n);
    let gq = r.power_blocks(q, false);
    let n2 = 2.0 * n as f64;
    let avg_bound = 2.0 * rho / eta.powi(p + q - 1);
    let mut averaged = Vec::with_capacity(4);
    for i in 1..=2usize {
        for j in 1..=2usize {
            // Tr(P E_i Q^t E_j) = sum over a in block j, c in block i of P[a, c] Q[a, c].
            let gq_ji = gq.get(j, i);
            let (ro, co) = ((j - 1) * n, (i - 1) * n);
            let mut s = c64::new(0.0, 0.0);
            for c in 0..n {
                for a in 0..n {
                    s += gp_b[(ro + a, co + c)] * gq_ji[(a, c)];
                }
            }
            averaged.push(BoundCheck {
                label: format!("<G^{p} B E{i} (G^{q})^t E{j}>"),
                value: (s / n2).norm(),
                bound: avg_bound,
            });
        }
    }

    let probes = [u.clone(), v.clone(), u.conj(), v.conj()];
    let isotropic_deviation = probes
        .iter()
        .map(|w| (r.quadratic_form(&w.vector, &w.vector) - m.quadratic_form(&w.vector, &w.vector)).norm())
        .fold(0.0, f64::max);
    let (uu, vv) = (&u.vector, &v.vector);
    let gv = r.apply(vv);
    let mut isotropic = vec![BoundCheck {
        label: "(G^2)_uv".into(),
        value: linalg::dot(uu, &r.apply_power(2, vv, false)).norm(),
        bound: 2.0 * rho / eta,
    }];
    for i in 1..=2usize {
        for j in 1..=2usize {
            let w = r.apply(&select(&r.apply_transpose(&select(&gv, j)), i));
            isotropic.push(BoundCheck {
                label: format!("(G E{i} G^t E{j} G)_uv"),
                value: linalg::dot(uu, &w).norm(),
                bound: 2.0 * rho / (eta * eta),
            });
        }
    }
    isotropic.push(BoundCheck {
        label: "(G G^t)_uv".into(),
        value: linalg::dot(uu, &r.apply(&r.apply_transpose(vv))).norm(),
        bound: 2.0 * rho / eta,
    });

    Ok(SchwarzReport {
        p,
        q,
        rho,
        im_trace,
        averaged_event: im_trace <= 2.0 * rho,
        averaged,
        isotropic_deviation,
        isotropic_event: isotropic_deviation <= rho,
        isotropic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_iid, Distribution, EnsembleSpec};

    fn ginibre(n: usize, seed: u64) -> RandomMatrix {
        sample_iid(&EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, seed).unwrap()).unwrap()
    }

    #[test]
    fn domain_arithmetic() {
        let p = DomainParams::new(1.0, 0.01, 512).unwrap();
        let n = 512f64;
        let v = in_domain(SpectralPoint::real(0.0, 200.0 * n.ln() / n).unwrap(), &p).unwrap();
        assert!(!v.inside);
        assert!(!v.eta_over_rho);
        let far = 1.0 + 2.0 * n.powf(-0.01);
        let v = in_domain(SpectralPoint::real(far, 0.1).unwrap(), &p).unwrap();
        assert!(!v.near_disc && !v.inside);
        let p = DomainParams::new(1.0, 0.01, 100_000).unwrap();
        let n = 1e5f64;
        let v = in_domain(SpectralPoint::real(0.0, 200.0 * n.ln() / n).unwrap(), &p).unwrap();
        assert!(v.inside, "{v:?}");
        assert!(DomainParams::new(0.5, 0.01, 10).is_err());
        assert!(DomainParams::new(1.0, 0.02, 10).is_err());
    }

    #[test]
    fn zero_observable_and_roundtrip() {
        let x = ginibre(16, 2);
        let pt = SpectralPoint::real(0.3, 0.2).unwrap();
        let xp = Probe::lower_coordinate(16, 0);
        let s = sample_errors(&x, pt, &Observable::Zero, &xp, &xp).unwrap();
        assert_eq!(s.avg_err, c64::new(0.0, 0.0));
        assert_eq!(s.z1, c64::new(0.0, 0.0));
        let s = sample_errors(&x, pt, &Observable::Identity, &xp, &xp).unwrap();
        assert!((s.z1 / s.z1_scale() - s.avg_err).norm() <= 1e-15 * s.avg_err.norm());
        assert!((s.z2 / s.z2_scale() - s.iso_err).norm() <= 1e-15 * s.iso_err.norm());
    }

    #[test]
    fn dense_m_trace_matches_expansion() {
        let sol = mde::solve_mde(SpectralPoint::new(c64::new(0.4, -0.3), 0.1).unwrap()).unwrap();
        let m = build_m(&sol, 3);
        let b = random_hermitian_observable(3, Stream::root(9)).unwrap();
        let Observable::Dense(bm) = &b else { unreachable!() };
        let mb = &m.expand() * bm;
        let direct: c64 = (0..6).map(|i| mb[(i, i)]).sum::<c64>() / 6.0;
        assert!((direct - m_averaged_trace(&m, &b)).norm() < 1e-14);
    }

    #[test]
    fn empty_grid() {
        let x = ginibre(8, 1);
        let p = DomainParams::new(1.0, 0.01, 8).unwrap();
        let xp = Probe::lower_coordinate(8, 0);
        let scan = grid_scan(&x, &p, &[], &EtaRule::Fixed(vec![0.1]), &Observable::Identity, &xp, &xp);
        assert!(scan.samples.is_empty() && scan.skipped.is_empty());
    }

    #[test]
    fn null_matrix_gates_averaged_checks() {
        let zero = RandomMatrix::from_entries(Mat::zeros(4, 4), Field::Complex, "zero").unwrap();
        let eta = 0.5;
        let r = hermitize(&zero, c64::new(0.0, 0.0)).resolvent(eta).unwrap();
        let sol = mde::solve_mde(SpectralPoint::real(0.0, eta).unwrap()).unwrap();
        let u = Probe::lower_coordinate(4, 0);
        let rep = schwarz_checks(&r, &sol, &Observable::Identity, &u, &u, 1, 1).unwrap();
        // G = (i/eta) I, so <Im G> = 1/eta exceeds 2 rho and <G E_i G^t E_j> = -delta_ij / (2 eta^2).
        assert_eq!(rep.averaged_verdict(), Verdict::NotApplicable);
        let vals: Vec<f64> = rep.averaged.iter().map(|c| c.value).collect();
        let d = 1.0 / (2.0 * eta * eta);
        assert!((vals[0] - d).abs() < 1e-12 && vals[1] < 1e-15 && vals[2] < 1e-15 && (vals[3] - d).abs() < 1e-12, "{vals:?}");
        assert!(schwarz_checks(&r, &sol, &Observable::Identity, &u, &u, 2, 3).is_err());
    }
}
