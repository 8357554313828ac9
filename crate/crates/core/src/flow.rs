//! Ornstein-Uhlenbeck matrix flow evaluated along a characteristic.
//!
//! At every recorded time the resolvent `G_t = G^{z_t}(i eta_t)` of the current
//! matrix is compared with `M_t`, and the martingale increments
//! `dN = -N^{-1/2} <G^2 dB>`, `dN^ = -N^{-1/2} <G^3 dB>`, `dN~ = -N^{-1/2} (G dB G)_xy`
//! are recorded from the same Brownian increment that moves the matrix.
//! (The noise part of `d<G^2>` is `2 dN^`; the increment is stored as defined.)

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use std::sync::Arc;

use crate::characteristics::{CharSample, Characteristic};
use crate::ensemble::{self, EnsembleSpec, RandomMatrix};
use crate::error::{Error, Result};
use crate::hermitization::{hermitize, ResolventHandle};
use crate::linalg;
use crate::locallaw::Probe;
use crate::mde::{build_m, MdeSolution};
use crate::rng::{lane, Stream};
use crate::stats;

/// Largest matrix dimension accepted by [`simulate_flow`].
pub const FLOW_MAX_N: usize = 256;
/// Smallest ensemble accepted by [`drift_consistency`].
pub const MIN_ENSEMBLE: usize = 100;
/// Window length, in steps, of the realized-variation check.
pub const QV_WINDOW: usize = 32;
/// Slack on the windowed realized variation.
pub const QV_SLACK: f64 = 5.0;

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Step size rule `min(1e-3, 10 eta^2)`.
pub fn default_dt(eta: f64) -> f64 {
    (10.0 * eta * eta).min(1e-3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    On,
    /// Brownian increments forced to zero: the flow is the deterministic drift.
    Off,
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub dt: f64,
    pub noise: Noise,
    /// Probes for the isotropic entry `(G - M)_xy`.
    pub x: Probe,
    pub y: Probe,
}

/// Everything recorded at one time of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowStep {
    pub t: f64,
    pub z: c64,
    pub eta: f64,
    pub rho: f64,
    pub m_prime: f64,
    /// `<G - M>`.
    pub x1: c64,
    /// `<G^2 - M'>`.
    pub x2: c64,
    /// `(G - M)_xy`.
    pub xiso: c64,
    pub g_trace: c64,
    pub g2_trace: c64,
    pub g3_trace: c64,
    /// `N^{-1} sum_{(i,j) in {(1,2),(2,1)}} <G^2 E_i G^t E_j>`, the real-symmetry drift term.
    pub beta_term: c64,
    /// Quadratic-variation integrand of `N`, as the trace expression with the real-case term.
    pub qv_integrand: f64,
    /// Same for `N^` with cubes.
    pub qv_hat_integrand: f64,
    /// `|<G - M>| <= rho`.
    pub gate: bool,
    /// `N * mean |X_ab|^2`.
    pub second_moment: f64,
    /// Increments over `[t, t + dt]`; zero at the final time.
    pub dn: c64,
    pub dn_hat: c64,
    pub dn_tilde: c64,
}

impl FlowStep {
    /// `Phi = 1/2 + <M'>`.
    pub fn phi(&self) -> f64 {
        0.5 + self.m_prime
    }

    /// Drift of `<G - M>`: `Phi X1 + X1 X2 + beta_term` (the last only when requested).
    pub fn full_drift(&self, with_beta_term: bool) -> c64 {
        let b = if with_beta_term { self.beta_term } else { ZERO };
        self.x1 * self.phi() + self.x1 * self.x2 + b
    }

    /// Drift without Brownian motion: `X1 / 2 - m <G^2>`.
    pub fn transport_drift(&self) -> c64 {
        self.x1 * 0.5 - c64::new(0.0, self.rho) * self.g2_trace
    }
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub char: Arc<Characteristic>,
    pub steps: Vec<FlowStep>,
    pub dt: f64,
    pub n: usize,
    pub beta: u8,
    pub noise: Noise,
    pub stream: Stream,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t).collect()
    }
}

fn flow_times(ch: &Characteristic, dt: f64) -> Result<Vec<CharSample>> {
    let grid = ch.grid();
    let steps = grid.len() - 1;
    let spacing = ch.horizon() / steps as f64;
    let stride = (dt / spacing).round();
    if stride < 1.0 || (stride * spacing - dt).abs() > 1e-9 * dt || !steps.is_multiple_of(stride as usize) {
        return Err(Error::Argument(format!(
            "dt = {dt} must be a whole multiple of the characteristic grid spacing {spacing} dividing T"
        )));
    }
    Ok(grid.into_iter().step_by(stride as usize).collect())
}

fn sum_elementwise(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

/// `sum_{a,c} A[a, c] conj(B[c, a])`.
fn sum_against_conj_transpose(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = ZERO;
    for c in 0..a.ncols() {
        for r in 0..a.nrows() {
            s += a[(r, c)] * b[(c, r)].conj();
        }
    }
    s
}

fn frob2(a: MatRef<'_, c64>) -> f64 {
    linalg::frobenius(a).powi(2)
}

/// `<G^p dB>` with `dB = [[0, db], [db*, 0]]`, from the off-diagonal blocks of `G^p`.
fn trace_against_noise(b12: MatRef<'_, c64>, b21: MatRef<'_, c64>, db: MatRef<'_, c64>) -> c64 {
    let n = db.nrows();
    let mut s = ZERO;
    for j in 0..n {
        for i in 0..n {
            s += b12[(i, j)] * db[(i, j)].conj() + b21[(j, i)] * db[(i, j)];
        }
    }
    s / (2.0 * n as f64)
}

struct Evaluation {
    step: FlowStep,
    g2_12: Mat<c64>,
    g2_21: Mat<c64>,
    g3_12: Mat<c64>,
    g3_21: Mat<c64>,
    r: ResolventHandle,
}

fn evaluate(x: &RandomMatrix, cs: &CharSample, opts: &FlowOptions, beta: u8) -> Result<Evaluation> {
    let n = x.n();
    let nf = n as f64;
    let r = hermitize(x, cs.z).resolvent(cs.eta)?;
    let sol = MdeSolution {
        point: cs.point(),
        a: cs.rho,
        u: cs.rho / (cs.eta + cs.rho),
        rho: cs.rho,
        m_prime_trace: cs.m_prime,
        residual: 0.0,
    };
    let m = build_m(&sol, n);
    let g_trace = r.trace();
    let g2_trace = r.trace_power(2);
    let g3_trace = r.trace_power(3);
    let x1 = g_trace - m.m;
    let x2 = g2_trace - cs.m_prime;
    let xiso = r.quadratic_form(&opts.x.vector, &opts.y.vector) - m.quadratic_form(&opts.x.vector, &opts.y.vector);
    let (g1_12, g1_21) = r.off_diagonal_blocks(1);
    let (g2_12, g2_21) = r.off_diagonal_blocks(2);
    let (g3_12, g3_21) = r.off_diagonal_blocks(3);
    let two_n = 2.0 * nf;
    let beta_term = (sum_elementwise(g2_21.as_ref(), g1_21.as_ref()) + sum_elementwise(g2_12.as_ref(), g1_12.as_ref())) / (two_n * nf);
    let real_case = if beta == 1 { 1.0 } else { 0.0 };
    let qv = |b12: &Mat<c64>, b21: &Mat<c64>| -> f64 {
        let plain = frob2(b21.as_ref()) + frob2(b12.as_ref());
        let transposed = 2.0 * sum_against_conj_transpose(b21.as_ref(), b12.as_ref()).re;
        (plain + real_case * transposed) / (two_n * nf * nf)
    };
    let step = FlowStep {
        t: cs.t,
        z: cs.z,
        eta: cs.eta,
        rho: cs.rho,
        m_prime: cs.m_prime,
        x1,
        x2,
        xiso,
        g_trace,
        g2_trace,
        g3_trace,
        beta_term,
        qv_integrand: qv(&g2_12, &g2_21),
        qv_hat_integrand: qv(&g3_12, &g3_21),
        gate: x1.norm() <= cs.rho,
        second_moment: x.second_moment(),
        dn: ZERO,
        dn_hat: ZERO,
        dn_tilde: ZERO,
    };
    Ok(Evaluation { step, g2_12, g2_21, g3_12, g3_21, r })
}

fn isotropic_increment(r: &ResolventHandle, x: &[c64], y: &[c64], db: MatRef<'_, c64>) -> c64 {
    let n = db.nrows();
    let a = r.apply_power(1, x, true);
    let b = r.apply(y);
    let (a_top, a_bot) = a.split_at(n);
    let (b_top, b_bot) = b.split_at(n);
    let mut s = ZERO;
    for j in 0..n {
        for i in 0..n {
            let d = db[(i, j)];
            s += a_top[i].conj() * d * b_bot[j] + a_bot[j].conj() * d.conj() * b_top[i];
        }
    }
    s
}

/// Euler-Maruyama OU flow from `x0` along `ch`, recording resolvent statistics at
/// every `dt`. The Brownian increment of step `k` comes from `stream.child(NOISE).child(k)`.
pub fn simulate_flow(x0: &RandomMatrix, ch: &Arc<Characteristic>, opts: &FlowOptions, stream: Stream) -> Result<FlowTrajectory> {
    let n = x0.n();
    if n > FLOW_MAX_N {
        return Err(Error::Argument(format!("flow simulation needs N <= {FLOW_MAX_N}, got {n}")));
    }
    if opts.x.vector.len() != 2 * n || opts.y.vector.len() != 2 * n {
        return Err(Error::Argument("probe length must be 2N".into()));
    }
    let times = flow_times(ch, opts.dt)?;
    let beta = x0.beta();
    let sqrt_dt = opts.dt.sqrt();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let noise_root = stream.child(lane::NOISE);
    let mut x = x0.clone();
    let mut steps = Vec::with_capacity(times.len());
    for (k, cs) in times.iter().enumerate() {
        let ev = evaluate(&x, cs, opts, beta).map_err(|e| match e {
            Error::Numerical { module, detail } => Error::Numerical { module, detail: format!("flow step {k}: {detail}") },
            other => other,
        })?;
        let mut step = ev.step;
        if k + 1 < times.len() {
            let xi = match opts.noise {
                Noise::On => Some(ensemble::standard_gaussian(n, x.field(), &mut noise_root.child(k as u64).rng())),
                Noise::Off => None,
            };
            if let Some(xi) = &xi {
                let db = Mat::from_fn(n, n, |i, j| xi[(i, j)] * sqrt_dt);
                step.dn = -trace_against_noise(ev.g2_12.as_ref(), ev.g2_21.as_ref(), db.as_ref()) * inv_sqrt_n;
                step.dn_hat = -trace_against_noise(ev.g3_12.as_ref(), ev.g3_21.as_ref(), db.as_ref()) * inv_sqrt_n;
                step.dn_tilde = -isotropic_increment(&ev.r, &opts.x.vector, &opts.y.vector, db.as_ref()) * inv_sqrt_n;
            }
            x = ensemble::ou_step_with(&x, opts.dt, xi.as_ref().map(|m| m.as_ref()))?;
        }
        steps.push(step);
    }
    Ok(FlowTrajectory { char: ch.clone(), steps, dt: opts.dt, n, beta, noise: opts.noise, stream })
}

/// Independent trajectories from i.i.d. starts; trial `i` uses `root.child(TRIAL).child(i)`.
pub fn simulate_ensemble(
    spec: &EnsembleSpec,
    ch: &Arc<Characteristic>,
    opts: &FlowOptions,
    trials: usize,
) -> Result<Vec<FlowTrajectory>> {
    let root = spec.stream().child(lane::TRIAL);
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = root.child(i as u64);
            let x0 = ensemble::sample_iid_with(spec, s)?;
            simulate_flow(&x0, ch, opts, s)
        })
        .collect()
}

/// Drift against which finite differences are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriftModel {
    /// `Phi X1 + X1 X2`, plus the real-symmetry term when `beta_term` is set.
    Full { beta_term: bool },
    /// `X1 / 2 - m <G^2>`, the drift of the noise-free flow.
    Transport,
}

impl DriftModel {
    fn eval(&self, s: &FlowStep) -> c64 {
        match *self {
            DriftModel::Full { beta_term } => s.full_drift(beta_term),
            DriftModel::Transport => s.transport_drift(),
        }
    }
}

/// Ensemble comparison at one recorded time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftPoint {
    pub t: f64,
    pub mean_difference: f64,
    pub mean_drift: c64,
    /// Mean of `(dX1 - dN)/dt - drift` (real, imaginary).
    pub residual: c64,
    pub se: (f64, f64),
    /// `max(|Re r|/se_re, |Im r|/se_im)`.
    pub z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct DriftReport {
    pub model: DriftModel,
    pub trajectories: usize,
    pub points: Vec<DriftPoint>,
    /// `10 dt max_t |mean drift|`.
    pub allowance: f64,
    pub max_z: f64,
    pub pass: bool,
}

fn check_ensemble(trajs: &[FlowTrajectory]) -> Result<()> {
    let first = trajs.first().ok_or_else(|| Error::Argument("empty ensemble".into()))?;
    for t in trajs {
        if t.n != first.n || t.dt != first.dt || t.steps.len() != first.steps.len() || t.beta != first.beta || t.noise != first.noise {
            return Err(Error::Argument("trajectories differ in N, dt, length, symmetry or noise mode".into()));
        }
        if !Arc::ptr_eq(&t.char, &first.char) && t.times() != first.times() {
            return Err(Error::Argument("trajectories follow different characteristics".into()));
        }
    }
    Ok(())
}

/// Finite differences of `<G - M>` against a drift model, ensemble-averaged.
///
/// The recorded increment `dN` is subtracted from each difference (it has mean zero
/// and carries most of the per-step variance), so the residual isolates the drift.
pub fn drift_consistency(trajs: &[FlowTrajectory], model: DriftModel) -> Result<DriftReport> {
    check_ensemble(trajs)?;
    if trajs.len() < MIN_ENSEMBLE {
        return Err(Error::Argument(format!("drift check needs at least {MIN_ENSEMBLE} trajectories, got {}", trajs.len())));
    }
    let dt = trajs[0].dt;
    let len = trajs[0].steps.len();
    let mut raw = Vec::with_capacity(len - 1);
    for k in 0..len - 1 {
        let mut re = Vec::with_capacity(trajs.len());
        let mut im = Vec::with_capacity(trajs.len());
        let mut fd = Vec::with_capacity(trajs.len());
        let mut drift = ZERO;
        for tr in trajs {
            let (a, b) = (&tr.steps[k], &tr.steps[k + 1]);
            let d = model.eval(a);
            let r = (b.x1 - a.x1 - a.dn) / dt - d;
            re.push(r.re);
            im.push(r.im);
            fd.push(((b.x1 - a.x1) / dt).norm());
            drift += d;
        }
        raw.push((trajs[0].steps[k].t, re, im, stats::mean(&fd), drift / trajs.len() as f64));
    }
    let scale = raw.iter().map(|r| r.4.norm()).fold(0.0, f64::max);
    let allowance = 10.0 * dt * scale;
    let points: Vec<DriftPoint> = raw
        .into_iter()
        .map(|(t, re, im, fd, drift)| {
            let residual = c64::new(stats::mean(&re), stats::mean(&im));
            let se = (stats::std_err(&re), stats::std_err(&im));
            let zr = if se.0 > 0.0 { residual.re.abs() / se.0 } else { 0.0 };
            let zi = if se.1 > 0.0 { residual.im.abs() / se.1 } else { 0.0 };
            let pass = residual.re.abs() <= 3.0 * se.0 + allowance && residual.im.abs() <= 3.0 * se.1 + allowance;
            DriftPoint { t, mean_difference: fd, mean_drift: drift, residual, se, z: zr.max(zi), pass }
        })
        .collect();
    let max_z = points.iter().map(|p| p.z).fold(0.0, f64::max);
    let pass = points.iter().all(|p| p.pass);
    Ok(DriftReport { model, trajectories: trajs.len(), points, allowance, max_z, pass })
}

/// Largest `|(X1(t+dt) - X1(t))/dt - drift|` along one trajectory.
pub fn deterministic_drift_error(traj: &FlowTrajectory, model: DriftModel) -> f64 {
    traj.steps
        .windows(2)
        .map(|w| ((w[1].x1 - w[0].x1) / traj.dt - model.eval(&w[0])).norm())
        .fold(0.0, f64::max)
}

/// Ensemble means of the recorded increments against zero.
#[derive(Clone, Debug)]
pub struct MartingaleReport {
    pub tests: usize,
    pub exceedances: usize,
    pub max_z: f64,
}

impl MartingaleReport {
    /// At most 1% of the per-step, per-component tests beyond 3 SE and none beyond 4.5 SE.
    pub fn pass(&self) -> bool {
        self.exceedances as f64 <= 0.01 * self.tests as f64 && self.max_z <= 4.5
    }
}

pub fn martingale_check(trajs: &[FlowTrajectory]) -> Result<MartingaleReport> {
    check_ensemble(trajs)?;
    let len = trajs[0].steps.len();
    let mut tests = 0;
    let mut exceedances = 0;
    let mut max_z = 0.0f64;
    let pick: [fn(&FlowStep) -> c64; 3] = [|s| s.dn, |s| s.dn_hat, |s| s.dn_tilde];
    for k in 0..len - 1 {
        for f in pick {
            for part in [0, 1] {
                let xs: Vec<f64> = trajs.iter().map(|t| if part == 0 { f(&t.steps[k]).re } else { f(&t.steps[k]).im }).collect();
                let se = stats::std_err(&xs);
                if !(se > 0.0) {
                    continue;
                }
                let z = stats::mean(&xs).abs() / se;
                tests += 1;
                if z > 3.0 {
                    exceedances += 1;
                }
                max_z = max_z.max(z);
            }
        }
    }
    Ok(MartingaleReport { tests, exceedances, max_z })
}

/// Quadratic-variation checks along one trajectory.
#[derive(Clone, Debug, Default)]
pub struct QvReport {
    pub gated_steps: usize,
    pub excluded_steps: usize,
    /// Worst `integrand / (8 rho / (N^2 eta^3))` over gated steps.
    pub integrand_ratio: f64,
    /// Worst `integrand_hat / (20 rho / (N^2 eta^5))`.
    pub integrand_hat_ratio: f64,
    pub windows: usize,
    pub windows_within: usize,
    pub windows_hat_within: usize,
    /// Worst realized / envelope over windows.
    pub window_ratio: f64,
    pub window_hat_ratio: f64,
}

impl QvReport {
    pub fn integrands_hold(&self) -> bool {
        self.integrand_ratio <= 1.0 && self.integrand_hat_ratio <= 1.0
    }

    /// Pool several reports.
    pub fn merge(reports: &[QvReport]) -> QvReport {
        reports.iter().fold(QvReport::default(), |a, r| QvReport {
            gated_steps: a.gated_steps + r.gated_steps,
            excluded_steps: a.excluded_steps + r.excluded_steps,
            integrand_ratio: a.integrand_ratio.max(r.integrand_ratio),
            integrand_hat_ratio: a.integrand_hat_ratio.max(r.integrand_hat_ratio),
            windows: a.windows + r.windows,
            windows_within: a.windows_within + r.windows_within,
            windows_hat_within: a.windows_hat_within + r.windows_hat_within,
            window_ratio: a.window_ratio.max(r.window_ratio),
            window_hat_ratio: a.window_hat_ratio.max(r.window_hat_ratio),
        })
    }

    pub fn window_fraction(&self) -> f64 {
        if self.windows == 0 {
            return 1.0;
        }
        self.windows_within.min(self.windows_hat_within) as f64 / self.windows as f64
    }
}

fn qv_bounds(s: &FlowStep, n: f64) -> (f64, f64) {
    (8.0 * s.rho / (n * n * s.eta.powi(3)), 20.0 * s.rho / (n * n * s.eta.powi(5)))
}

pub fn qv_bound_check(traj: &FlowTrajectory) -> QvReport {
    let n = traj.n as f64;
    let active = &traj.steps[..traj.steps.len().saturating_sub(1)];
    let mut rep = QvReport::default();
    for s in active {
        if !s.gate {
            rep.excluded_steps += 1;
            continue;
        }
        rep.gated_steps += 1;
        let (b, bh) = qv_bounds(s, n);
        rep.integrand_ratio = rep.integrand_ratio.max(s.qv_integrand / b);
        rep.integrand_hat_ratio = rep.integrand_hat_ratio.max(s.qv_hat_integrand / bh);
    }
    for w in active.chunks_exact(QV_WINDOW) {
        let gated: Vec<&FlowStep> = w.iter().filter(|s| s.gate).collect();
        if gated.is_empty() {
            continue;
        }
        let realized: f64 = gated.iter().map(|s| s.dn.norm_sqr()).sum();
        let realized_hat: f64 = gated.iter().map(|s| s.dn_hat.norm_sqr()).sum();
        let envelope: f64 = gated.iter().map(|s| qv_bounds(s, n).0 * traj.dt).sum::<f64>() * QV_SLACK;
        let envelope_hat: f64 = gated.iter().map(|s| qv_bounds(s, n).1 * traj.dt).sum::<f64>() * QV_SLACK;
        rep.windows += 1;
        rep.windows_within += usize::from(realized <= envelope);
        rep.windows_hat_within += usize::from(realized_hat <= envelope_hat);
        rep.window_ratio = rep.window_ratio.max(realized / envelope);
        rep.window_hat_ratio = rep.window_hat_ratio.max(realized_hat / envelope_hat);
    }
    rep
}

/// `max_k N eta_k |sum_{j<k} p_{t_j, t_k} dN_j|`, the normalized stochastic integral
/// controlled by the martingale estimate.
pub fn martingale_integral_sup(traj: &FlowTrajectory) -> Result<f64> {
    let n = traj.n as f64;
    let mut best = 0.0f64;
    for k in 1..traj.steps.len() {
        let tk = traj.steps[k].t;
        let mut acc = ZERO;
        for j in 0..k {
            acc += traj.steps[j].dn * traj.char.propagator(traj.steps[j].t, tk)?;
        }
        best = best.max(n * traj.steps[k].eta * acc.norm());
    }
    Ok(best)
}
