//! Left/right eigenvectors of a non-Hermitian matrix and their sup-norm statistics.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{c64, Mat, MatRef, Par};
use rayon::prelude::*;

use crate::ensemble::{self, EnsembleSpec, Field, RandomMatrix};
use crate::error::{Error, Result};
use crate::hermitization::{embed_lower, embed_upper, hermitize, Observable};
use crate::linalg;
use crate::locallaw::{self, Probe};
use crate::mde::{self, SpectralPoint, Z_MAX};
use crate::rng::{lane, Stream};
use crate::stats;

pub const DECOMPOSE_MAX_N: usize = 1024;
/// Residuals are accepted up to this multiple of `||X||`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Eigenvalues closer than this multiple of `max(1, ||X||)` are flagged.
pub const DEGENERACY_GAP: f64 = 1e-8;
/// `|<l, r>|` below this marks a (near-)defective eigenvalue.
pub const DEFECT_OVERLAP: f64 = 1e-8;
pub const BASIS_TOL: f64 = 1e-10;
/// Allowed excess of the spectral bound's left side over its right side.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub sigma: c64,
    pub r: Vec<c64>,
    pub l: Vec<c64>,
    pub right_residual: f64,
    pub left_residual: f64,
    /// `|<l, r>|`; the reciprocal is the eigenvalue condition number.
    pub overlap: f64,
    pub near_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectedPair {
    pub index: usize,
    pub sigma: c64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Accepted pairs sorted by `|sigma|`.
    pub pairs: Vec<EigenPair>,
    pub rejected: Vec<RejectedPair>,
    /// Operator norm of `X`.
    pub norm: f64,
}

impl Decomposition {
    pub fn near_degenerate(&self) -> usize {
        self.pairs.iter().filter(|p| p.near_degenerate).count()
    }
}

fn residual(a: MatRef<'_, c64>, v: &[c64], lambda: c64) -> f64 {
    let av = linalg::matvec(a, v);
    av.iter().zip(v).map(|(x, y)| (x - lambda * y).norm_sqr()).sum::<f64>().sqrt()
}

/// Dense eigendecomposition of `X` with residual screening.
///
/// Pairs with residuals above `RESIDUAL_TOL ||X||`, non-finite entries, or a
/// vanishing left/right overlap (a defective direction) are moved to `rejected`.
pub fn eigen_decompose(x: &RandomMatrix) -> Result<Decomposition> {
    let n = x.n();
    if n > DECOMPOSE_MAX_N {
        return Err(Error::Argument(format!("eigendecomposition needs N <= {DECOMPOSE_MAX_N}, got {n}")));
    }
    linalg::sequential();
    let a = x.entries();
    let mut s = Mat::<c64>::zeros(n, 1);
    let mut ul = Mat::<c64>::zeros(n, n);
    let mut ur = Mat::<c64>::zeros(n, n);
    let req = evd::evd_scratch::<c64>(n, ComputeEigenvectors::Yes, ComputeEigenvectors::Yes, Par::Seq, Default::default());
    let mut buf = MemBuffer::new(req);
    evd::evd_cplx(
        a,
        s.as_mut().col_mut(0).as_diagonal_mut(),
        Some(ul.as_mut()),
        Some(ur.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::numerical("deloc", format!("eigensolver did not converge: {e:?}")))?;

    let norm = linalg::operator_norm(a)?;
    let adj = a.adjoint().to_owned();
    let sigmas: Vec<c64> = (0..n).map(|i| s[(i, 0)]).collect();
    let gap_tol = DEGENERACY_GAP * norm.max(1.0);
    let mut pairs = Vec::with_capacity(n);
    let mut rejected = Vec::new();
    for i in 0..n {
        let sigma = sigmas[i];
        let mut r = linalg::column(ur.as_ref(), i);
        let mut l = linalg::column(ul.as_ref(), i);
        let finite = sigma.re.is_finite() && sigma.im.is_finite() && r.iter().chain(&l).all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite || linalg::norm(&r) == 0.0 || linalg::norm(&l) == 0.0 {
            rejected.push(RejectedPair { index: i, sigma, reason: "non-finite or zero eigenvector".into() });
            continue;
        }
        linalg::normalize(&mut r);
        linalg::normalize(&mut l);
        let right_residual = residual(a, &r, sigma);
        let left_residual = residual(adj.as_ref(), &l, sigma.conj());
        let overlap = linalg::dot(&l, &r).norm();
        let near_degenerate = sigmas.iter().enumerate().any(|(j, t)| j != i && (t - sigma).norm() < gap_tol);
        let reason = if right_residual > RESIDUAL_TOL * norm || left_residual > RESIDUAL_TOL * norm {
            Some(format!("residuals {right_residual:.3e}, {left_residual:.3e} exceed {:.3e}", RESIDUAL_TOL * norm))
        } else if overlap < DEFECT_OVERLAP {
            Some(format!("defective direction: |<l, r>| = {overlap:.3e}"))
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push(RejectedPair { index: i, sigma, reason }),
            None => pairs.push(EigenPair { sigma, r, l, right_residual, left_residual, overlap, near_degenerate }),
        }
    }
    pairs.sort_by(|p, q| p.sigma.norm().total_cmp(&q.sigma.norm()).then(p.sigma.arg().total_cmp(&q.sigma.arg())));
    Ok(Decomposition { pairs, rejected, norm })
}

/// Probe vectors `x` for `|<x, v>|`.
#[derive(Clone, Debug)]
pub enum ProbeBasis {
    Coordinate,
    /// Columns form a Haar-random orthonormal basis drawn from the stream key.
    Random { q: Mat<c64>, key: u64 },
    User { q: Mat<c64>, label: String },
}

impl ProbeBasis {
    pub fn random(n: usize, stream: Stream) -> Self {
        let g = ensemble::standard_gaussian(n, Field::Complex, &mut stream.rng());
        ProbeBasis::Random { q: linalg::haar_unitary(g.as_ref()), key: stream.key() }
    }

    pub fn user(q: Mat<c64>, label: impl Into<String>) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::Argument("probe basis must be square".into()));
        }
        let d = linalg::orthonormality_defect(q.as_ref());
        if !(d <= BASIS_TOL) {
            return Err(Error::Argument(format!("probe basis is not orthonormal: defect {d:.3e}")));
        }
        Ok(ProbeBasis::User { q, label: label.into() })
    }

    pub fn descriptor(&self) -> String {
        match self {
            ProbeBasis::Coordinate => "coordinate".into(),
            ProbeBasis::Random { key, .. } => format!("random:{key:016x}"),
            ProbeBasis::User { label, .. } => format!("user:{label}"),
        }
    }

    fn max_overlap(&self, v: &[c64]) -> f64 {
        match self {
            ProbeBasis::Coordinate => v.iter().map(|c| c.norm()).fold(0.0, f64::max),
            ProbeBasis::Random { q, .. } | ProbeBasis::User { q, .. } => {
                linalg::adjoint_matvec(q.as_ref(), v).iter().map(|c| c.norm()).fold(0.0, f64::max)
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            ProbeBasis::Coordinate => Ok(()),
            ProbeBasis::Random { q, .. } | ProbeBasis::User { q, .. } => {
                if q.nrows() != n || q.ncols() != n {
                    return Err(Error::Argument(format!("probe basis has shape {}x{}, expected {n}x{n}", q.nrows(), q.ncols())));
                }
                let d = linalg::orthonormality_defect(q.as_ref());
                if d <= BASIS_TOL {
                    Ok(())
                } else {
                    Err(Error::Argument(format!("probe basis is not orthonormal: defect {d:.3e}")))
                }
            }
        }
    }
}

/// `sqrt(N / log N)`.
pub fn deloc_scale(n: usize) -> f64 {
    let n = n as f64;
    (n / n.ln()).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelocReport {
    pub n: usize,
    pub basis: String,
    /// Per pair, `max_x |<x, r>|`.
    pub right_max: Vec<f64>,
    /// Per pair, `max_x |<x, l>|`.
    pub left_max: Vec<f64>,
    /// `sqrt(N / log N) max_pairs (left_max + right_max)`.
    pub statistic: f64,
    pub worst_pair: usize,
}

impl DelocReport {
    pub fn recompute(&self) -> f64 {
        let worst = self.left_max.iter().zip(&self.right_max).map(|(a, b)| a + b).fold(0.0, f64::max);
        deloc_scale(self.n) * worst
    }
}

pub fn deloc_statistic(pairs: &[EigenPair], basis: &ProbeBasis, n: usize) -> Result<DelocReport> {
    if n < 2 {
        return Err(Error::Argument("delocalization statistic needs N >= 2".into()));
    }
    basis.check(n)?;
    if pairs.iter().any(|p| p.r.len() != n || p.l.len() != n) {
        return Err(Error::Argument("eigenvector length differs from N".into()));
    }
    let right_max: Vec<f64> = pairs.iter().map(|p| basis.max_overlap(&p.r)).collect();
    let left_max: Vec<f64> = pairs.iter().map(|p| basis.max_overlap(&p.l)).collect();
    let mut worst_pair = 0;
    let mut worst = 0.0;
    for (i, (a, b)) in left_max.iter().zip(&right_max).enumerate() {
        if a + b > worst {
            worst = a + b;
            worst_pair = i;
        }
    }
    Ok(DelocReport { n, basis: basis.descriptor(), right_max, left_max, statistic: deloc_scale(n) * worst, worst_pair })
}

/// One trial of the delocalization experiment.
#[derive(Clone, Debug)]
pub struct DelocTrial {
    pub trial: usize,
    pub key: u64,
    pub coordinate: DelocReport,
    pub random: DelocReport,
    pub rejected: usize,
    pub near_degenerate: usize,
}

/// Trial `i` samples from `spec.stream().child(TRIAL).child(i)` and draws its
/// random basis from the `PROBE` lane of the same stream.
pub fn deloc_trials(spec: &EnsembleSpec, trials: usize) -> Result<Vec<DelocTrial>> {
    let root = spec.stream().child(lane::TRIAL);
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = root.child(i as u64);
            let x = ensemble::sample_iid_with(spec, s)?;
            let dec = eigen_decompose(&x)?;
            let n = x.n();
            let coordinate = deloc_statistic(&dec.pairs, &ProbeBasis::Coordinate, n)?;
            let random = deloc_statistic(&dec.pairs, &ProbeBasis::random(n, s.child(lane::PROBE)), n)?;
            Ok(DelocTrial {
                trial: i,
                key: s.key(),
                coordinate,
                random,
                rejected: dec.rejected.len(),
                near_degenerate: dec.near_degenerate(),
            })
        })
        .collect()
}

/// Choice of `eta` at an eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaChoice {
    /// `N eta rho = 100 c^2 log N`, through the gated product solver.
    ProductRule { c: f64 },
    /// `eta rho = a`, ungated.
    Product(f64),
    Fixed(f64),
}

impl EtaChoice {
    pub fn eta(&self, sigma: c64, n: usize) -> Result<f64> {
        match *self {
            EtaChoice::ProductRule { c } => {
                if !(c >= 1.0) {
                    return Err(Error::Argument(format!("constant C must be >= 1, got {c}")));
                }
                let nf = n as f64;
                mde::solve_eta_for_product(sigma, 100.0 * c * c * nf.ln() / nf)
            }
            EtaChoice::Product(a) => mde::invert_eta_rho(sigma, a),
            EtaChoice::Fixed(eta) => {
                SpectralPoint::new(sigma, eta)?;
                Ok(eta)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundSide {
    /// `|<x1, v>|^2 / ||v||^2`.
    pub lhs: f64,
    /// `eta <x, Im G x>`.
    pub rhs: f64,
}

impl BoundSide {
    pub fn holds(&self) -> bool {
        self.lhs - self.rhs <= BOUND_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBoundReport {
    pub sigma: c64,
    pub eta: f64,
    pub rho: f64,
    pub right: BoundSide,
    pub left: BoundSide,
}

impl SpectralBoundReport {
    pub fn holds(&self) -> bool {
        self.right.holds() && self.left.holds()
    }

    /// `rhs / lhs` on the tighter side (infinite if both sides vanish).
    pub fn slack(&self) -> f64 {
        let s = |b: &BoundSide| if b.lhs > 0.0 { b.rhs / b.lhs } else { f64::INFINITY };
        s(&self.right).min(s(&self.left))
    }
}

fn bound_with_norm(x: &RandomMatrix, pair: &EigenPair, x1: &[c64], choice: EtaChoice, norm: f64) -> Result<SpectralBoundReport> {
    let n = x.n();
    if x1.len() != n || pair.r.len() != n {
        return Err(Error::Argument("probe and eigenvectors must have length N".into()));
    }
    if (linalg::norm(x1) - 1.0).abs() > 1e-12 {
        return Err(Error::Argument("probe x1 must be a unit vector".into()));
    }
    if pair.sigma.norm() > Z_MAX {
        return Err(Error::OutOfRange(format!("|sigma| = {} exceeds {Z_MAX}", pair.sigma.norm())));
    }
    if !(pair.right_residual <= RESIDUAL_TOL * norm && pair.left_residual <= RESIDUAL_TOL * norm) {
        return Err(Error::Precondition(format!("eigenpair at sigma = {} fails the residual policy", pair.sigma)));
    }
    let eta = choice.eta(pair.sigma, n)?;
    let sol = mde::solve_mde(SpectralPoint::new(pair.sigma, eta)?)?;
    let g = hermitize(x, pair.sigma).resolvent(eta)?;
    let side = |v: &[c64], probe: Vec<c64>| BoundSide {
        lhs: linalg::dot(x1, v).norm_sqr() / linalg::norm(v).powi(2),
        rhs: eta * g.quadratic_form(&probe, &probe).im,
    };
    // (0, r) spans part of ker H^sigma when X r = sigma r, (l, 0) when X* l = conj(sigma) l.
    let right = side(&pair.r, embed_lower(x1));
    let left = side(&pair.l, embed_upper(x1));
    Ok(SpectralBoundReport { sigma: pair.sigma, eta, rho: sol.rho, right, left })
}

/// `|<x1, r>|^2 / ||r||^2 <= eta <x, Im G^sigma(i eta) x>` with `x = (0, x1)`, and the
/// same for the left vector with `x = (x1, 0)`.
pub fn spectral_bound_check(x: &RandomMatrix, pair: &EigenPair, x1: &[c64], choice: EtaChoice) -> Result<SpectralBoundReport> {
    let norm = linalg::operator_norm(x.entries())?;
    bound_with_norm(x, pair, x1, choice, norm)
}

/// [`spectral_bound_check`] at every accepted eigenvalue with `|sigma| <= max_abs`.
pub fn spectral_bound_scan(
    x: &RandomMatrix,
    dec: &Decomposition,
    x1: &[c64],
    choice: EtaChoice,
    max_abs: f64,
) -> Result<Vec<SpectralBoundReport>> {
    dec.pairs
        .iter()
        .filter(|p| p.sigma.norm() <= max_abs)
        .map(|p| bound_with_norm(x, p, x1, choice, dec.norm))
        .collect()
}

/// One ensemble of a comparison; `variance_scale` multiplies the entry variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub spec: EnsembleSpec,
    pub variance_scale: f64,
}

impl Arm {
    pub fn new(spec: EnsembleSpec) -> Self {
        Arm { spec, variance_scale: 1.0 }
    }

    fn sample(&self, stream: Stream) -> Result<RandomMatrix> {
        let x = ensemble::sample_iid_with(&self.spec, stream)?;
        if self.variance_scale == 1.0 {
            return Ok(x);
        }
        let s = self.variance_scale.sqrt();
        let label = format!("{} x{}", x.label(), self.variance_scale);
        RandomMatrix::from_entries(Mat::from_fn(x.n(), x.n(), |i, j| x.entries()[(i, j)] * s), x.field(), label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub label: String,
    pub z1: Vec<c64>,
    pub z2: Vec<c64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub point: SpectralPoint,
    pub trials: usize,
    pub arms: [ArmSummary; 2],
    /// KS distance of `Im Z1` and of `Im Z2` between the arms.
    pub ks_z1: f64,
    pub ks_z2: f64,
    /// Differences of the means and variances of `Im Z1`.
    pub mean_gap: f64,
    pub variance_gap: f64,
}

impl ComparisonReport {
    pub fn ks(&self) -> f64 {
        self.ks_z1.max(self.ks_z2)
    }
}

/// Empirical laws of `Z1 = N eta <G - M>` and `Z2 = sqrt(N eta / rho) (G - M)_xy` for two
/// ensembles at one spectral point. Trial `t` of arm `a` draws from
/// `Stream::root(seed_a).child(ARM).child(a).child(t)`, so identical specs still use
/// disjoint streams.
pub fn ensemble_comparison(arms: [Arm; 2], trials: usize, point: SpectralPoint, x: &Probe, y: &Probe) -> Result<ComparisonReport> {
    let n = arms[0].spec.n;
    if arms[1].spec.n != n || arms[0].spec.field != arms[1].spec.field {
        return Err(Error::Argument("compared ensembles must share N and field".into()));
    }
    if trials < 2 {
        return Err(Error::Argument("comparison needs at least two trials".into()));
    }
    for a in &arms {
        a.spec.validate()?;
        if !(a.variance_scale > 0.0) {
            return Err(Error::Argument("variance scale must be positive".into()));
        }
    }
    let run = |idx: usize| -> Result<ArmSummary> {
        let arm = arms[idx];
        let root = Stream::root(arm.spec.seed).child(lane::ARM).child(idx as u64);
        let samples: Vec<(c64, c64)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let m = arm.sample(root.child(t as u64))?;
                let s = locallaw::sample_errors(&m, point, &Observable::Identity, x, y)?;
                Ok((s.z1, s.z2))
            })
            .collect::<Result<_>>()?;
        let label = format!("{}/{}/x{}", arm.spec.field, arm.spec.distribution, arm.variance_scale);
        Ok(ArmSummary { label, z1: samples.iter().map(|s| s.0).collect(), z2: samples.iter().map(|s| s.1).collect() })
    };
    let a = run(0)?;
    let b = run(1)?;
    let im = |v: &[c64]| v.iter().map(|c| c.im).collect::<Vec<f64>>();
    let (a1, b1) = (im(&a.z1), im(&b.z1));
    let ks_z1 = stats::ks_distance(&a1, &b1);
    let ks_z2 = stats::ks_distance(&im(&a.z2), &im(&b.z2));
    let mean_gap = stats::mean(&a1) - stats::mean(&b1);
    let variance_gap = stats::variance(&a1) - stats::variance(&b1);
    Ok(ComparisonReport { point, trials, arms: [a, b], ks_z1, ks_z2, mean_gap, variance_gap })
}
