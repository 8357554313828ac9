use std::sync::Arc;

use rayon::prelude::*;

use super::{Criterion, Experiment, ExperimentConfig, Outcome};
use crate::characteristics::{self, Characteristic};
use crate::deloc::{self, Arm, EtaChoice};
use crate::ensemble::{self, EnsembleSpec};
use crate::error::{Error, Result};
use crate::flow::{self, DriftModel, FlowOptions, Noise};
use crate::hermitization::{basis_vector, Observable};
use crate::locallaw::{self, DomainParams, EtaRule, Probe};
use crate::mde::{self, SpectralPoint, Z_MAX};
use crate::rng::lane;
use crate::{c64, stats};

pub(super) fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::MdeScan => mde_scan(cfg),
        Experiment::CharAudit => char_audit(cfg),
        Experiment::LocallawScan => locallaw_scan(cfg),
        Experiment::FlowDrift => flow_drift(cfg),
        Experiment::FlowQv => flow_qv(cfg),
        Experiment::Deloc => deloc_run(cfg),
        Experiment::Impbound => impbound(cfg),
        Experiment::EnsembleCompare => ensemble_compare(cfg),
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn at_most(name: &str, value: f64, threshold: f64) -> Criterion {
    Criterion { name: name.into(), value, threshold, pass: value <= threshold }
}

fn at_least(name: &str, value: f64, threshold: f64) -> Criterion {
    Criterion { name: name.into(), value, threshold, pass: value >= threshold }
}

fn spec(cfg: &ExperimentConfig, n: usize) -> Result<EnsembleSpec> {
    EnsembleSpec::new(n, cfg.field, cfg.distribution, cfg.seed)
}

fn single_n(cfg: &ExperimentConfig) -> usize {
    cfg.n.list()[0]
}

fn z_list(cfg: &ExperimentConfig, default: &[f64]) -> Vec<c64> {
    if cfg.z.is_empty() {
        default.iter().map(|&x| c64::new(x, 0.0)).collect()
    } else {
        cfg.z.iter().map(|z| z.value()).collect()
    }
}

/// `eta rho` from `a`, else `c log N / N`, else `default_c log N / N`.
fn product(cfg: &ExperimentConfig, n: f64, default_c: f64) -> f64 {
    cfg.a.unwrap_or_else(|| cfg.c.unwrap_or(default_c) * n.ln() / n)
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn logspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), k).into_iter().map(f64::exp).collect()
}

fn mde_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let zs: Vec<f64> = if cfg.z.is_empty() { linspace(0.0, 1.5, 40) } else { cfg.z.iter().map(|z| z.value().norm()).collect() };
    let etas = if cfg.eta.is_empty() { logspace(1e-8, 0.5, 40) } else { cfg.eta.clone() };
    let f = cfg.thresholds.envelope_factor;
    let mut rows = Vec::new();
    let (mut worst_res, mut worst_env, mut worst_fd, mut branch) = (0.0f64, 1.0f64, 0.0f64, 0usize);
    for &r in &zs {
        for &eta in &etas {
            let p = SpectralPoint::real(r, eta)?;
            let sol = mde::solve_mde(p)?;
            let fd = mde::m_prime_finite_difference(p)?;
            let fd_rel = (fd - sol.m_prime_trace).abs() / mde::m_prime_scale(&sol);
            // 0 marks points where the envelope is not defined.
            let env = if eta < 1.0 {
                let c = mde::rho_envelope_center(p);
                (sol.rho / c).max(c / sol.rho)
            } else {
                0.0
            };
            if !(sol.rho > 0.0 && sol.u > 0.0 && sol.u < 1.0) {
                branch += 1;
            }
            worst_res = worst_res.max(sol.residual);
            worst_env = worst_env.max(env);
            worst_fd = worst_fd.max(fd_rel);
            rows.push(vec![r, eta, sol.a, sol.u, sol.rho, sol.m_prime_trace, fd_rel, sol.residual, env]);
        }
    }
    Ok(Outcome {
        columns: cols(&["abs_z", "eta", "a", "u", "rho", "m_prime", "m_prime_fd_rel", "residual", "envelope_ratio"]),
        rows,
        criteria: vec![
            at_most("mde residual", worst_res, 1e-12),
            at_most("branch violations", branch as f64, 0.0),
            at_most("rho envelope ratio", worst_env, f),
            at_most("<M'> finite difference relative error", worst_fd, 1e-4),
        ],
        notes: vec![],
    })
}

fn char_audit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.synthetic_n.expect("validated");
    let horizon = n.powf(-cfg.xi);
    let a = product(cfg, n, 1.0);
    let ends = z_list(cfg, &[0.9, 1.0, 1.0 + n.powf(-10.0 * cfg.xi)]);
    let mut rows = Vec::new();
    let (mut items, mut ordered, mut conservation) = (true, true, 0.0f64);
    let mut notes = Vec::new();
    for z in ends {
        let end = SpectralPoint::new(z, mde::invert_eta_rho(z, a)?)?;
        let ch = characteristics::integrate_backward(end, horizon, cfg.steps)?;
        let rep = characteristics::check_lemma_chars(&ch, cfg.xi, n)?;
        items &= rep.items_pass();
        ordered &= rep.ordered;
        conservation = conservation.max(ch.conservation_defect());
        for c in rep.checks.iter().filter(|c| c.vacuous) {
            notes.push(format!("|z_T| = {:.6}: {} is vacuous", z.norm(), c.name));
        }
        for c in rep.checks.iter().filter(|c| !c.pass()) {
            notes.push(format!("|z_T| = {:.6}: {} ratio {:.3e}", z.norm(), c.name, c.ratio()));
        }
        let lm = &rep.landmarks;
        let mut row = vec![
            z.norm(),
            end.eta(),
            ch.start().eta,
            lm.t_star,
            lm.kappa0,
            lm.s1_raw,
            lm.s2_raw,
            f64::from(u8::from(rep.ordered)),
            ch.conservation_defect(),
        ];
        // Vacuous items (empty time interval) are stored as ratio 0.
        row.extend(rep.checks.iter().map(|c| if c.vacuous { 0.0 } else { c.ratio() }));
        rows.push(row);
    }
    Ok(Outcome {
        columns: cols(&[
            "abs_z_t", "eta_t", "eta_0", "t_star", "kappa0", "s1", "s2", "ordered", "conservation_defect", "ratio_i", "ratio_ii_s1",
            "ratio_ii_s2", "ratio_iii_eta", "ratio_iii_s2", "ratio_iii_s1",
        ]),
        rows,
        criteria: vec![
            at_least("lemma items within factor", f64::from(u8::from(items)), 1.0),
            at_least("S1 < S2 < T", f64::from(u8::from(ordered)), 1.0),
            at_most("conservation defect", conservation, 1e-8),
        ],
        notes,
    })
}

fn locallaw_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = single_n(cfg);
    let nf = n as f64;
    let sp = spec(cfg, n)?;
    let zs = z_list(cfg, &[0.0, 0.5, 0.9]);
    let rule = if cfg.eta.is_empty() { EtaRule::Product { c: product(cfg, nf, 200.0) * nf / nf.ln() } } else { EtaRule::Fixed(cfg.eta.clone()) };
    let dp = DomainParams::new(1.0, cfg.xi, n as u64)?;
    let probe = Probe::random(n, sp.stream().child(lane::PROBE));
    let root = sp.stream().child(lane::TRIAL);
    let scans: Vec<locallaw::GridScan> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let x = ensemble::sample_iid_with(&sp, root.child(t as u64))?;
            Ok(locallaw::grid_scan(&x, &dp, &zs, &rule, &Observable::Identity, &probe, &probe))
        })
        .collect::<Result<_>>()?;
    let (z1_cap, z2_cap) = (10.0 * nf.ln(), 10.0 * nf.ln().sqrt());
    let (mut attempted, mut ok1, mut ok2, mut skipped) = (0usize, 0usize, 0usize, 0usize);
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (t, scan) in scans.iter().enumerate() {
        attempted += scan.samples.len() + scan.skipped.len();
        skipped += scan.skipped.len();
        if t == 0 {
            notes.extend(scan.skipped.iter().map(|s| format!("skipped z = {}: {}", s.z, s.reason)));
        }
        for s in &scan.samples {
            ok1 += usize::from(s.z1.norm() <= z1_cap);
            ok2 += usize::from(s.z2.norm() <= z2_cap);
            let inside = s.domain.as_ref().map(|d| d.inside).unwrap_or(false);
            let z = s.point.z();
            rows.push(vec![t as f64, z.re, z.im, s.point.eta(), s.rho, s.z1.re, s.z1.im, s.z2.re, s.z2.im, f64::from(u8::from(inside))]);
        }
    }
    if skipped > 0 {
        notes.push(format!("{skipped} of {attempted} evaluations skipped; counted as failures"));
    }
    let frac = |k: usize| if attempted == 0 { 0.0 } else { k as f64 / attempted as f64 };
    let cov = cfg.thresholds.coverage;
    Ok(Outcome {
        columns: cols(&["trial", "z_re", "z_im", "eta", "rho", "z1_re", "z1_im", "z2_re", "z2_im", "in_domain"]),
        rows,
        criteria: vec![at_least("|N eta <G-M>| <= 10 log N coverage", frac(ok1), cov), at_least("|Z2| <= 10 sqrt(log N) coverage", frac(ok2), cov)],
        notes,
    })
}

struct FlowSetup {
    spec: EnsembleSpec,
    ch: Arc<Characteristic>,
    opts: FlowOptions,
}

/// The characteristic grid is twice as fine as the flow so `dt / 2` is also admissible.
fn flow_setup(cfg: &ExperimentConfig) -> Result<FlowSetup> {
    let n = single_n(cfg);
    let sp = spec(cfg, n)?;
    let z = z_list(cfg, &[0.0])[0];
    let a = cfg.a.or_else(|| cfg.c.map(|c| c * (n as f64).ln() / n as f64)).unwrap_or(0.1);
    let end = SpectralPoint::new(z, mde::invert_eta_rho(z, a)?)?;
    let dt = cfg.dt.unwrap_or_else(|| flow::default_dt(end.eta()));
    let ch = Arc::new(characteristics::integrate_backward(end, dt * cfg.steps as f64, 2 * cfg.steps)?);
    let probe = Probe::random(n, sp.stream().child(lane::PROBE));
    Ok(FlowSetup { spec: sp, ch, opts: FlowOptions { dt, noise: Noise::On, x: probe.clone(), y: probe } })
}

fn flow_drift(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = flow_setup(cfg)?;
    let x0 = ensemble::sample_iid_with(&s.spec, s.spec.stream().child(lane::TRIAL).child(0))?;
    let quiet = FlowOptions { noise: Noise::Off, ..s.opts.clone() };
    let half = FlowOptions { dt: s.opts.dt / 2.0, ..quiet.clone() };
    let e1 = flow::deterministic_drift_error(&flow::simulate_flow(&x0, &s.ch, &quiet, s.spec.stream())?, DriftModel::Transport);
    let e2 = flow::deterministic_drift_error(&flow::simulate_flow(&x0, &s.ch, &half, s.spec.stream())?, DriftModel::Transport);
    let order = (e1 / e2).log2();

    let trajs = flow::simulate_ensemble(&s.spec, &s.ch, &s.opts, cfg.trials)?;
    let real = s.spec.beta() == 1;
    let rep = flow::drift_consistency(&trajs, DriftModel::Full { beta_term: real })?;
    let control = flow::drift_consistency(&trajs, DriftModel::Full { beta_term: !real })?;
    let mart = flow::martingale_check(&trajs)?;
    let k = trajs.len() as f64;
    let rows = rep
        .points
        .iter()
        .zip(&control.points)
        .enumerate()
        .map(|(i, (p, c))| {
            let st = &trajs[0].steps[i];
            let mean_x1 = trajs.iter().map(|t| t.steps[i].x1).sum::<c64>() / k;
            vec![p.t, st.eta, st.rho, mean_x1.re, mean_x1.im, p.mean_drift.re, p.mean_drift.im, p.residual.re, p.residual.im, p.se.0, p.se.1, p.z, c.z]
        })
        .collect();
    let failing = rep.points.iter().filter(|p| !p.pass).count();
    let control_failing = control.points.iter().filter(|p| !p.pass).count();
    Ok(Outcome {
        columns: cols(&[
            "t", "eta", "rho", "mean_re_x1", "mean_im_x1", "mean_re_drift", "mean_im_drift", "residual_re", "residual_im", "se_re", "se_im", "z",
            "control_z",
        ]),
        rows,
        criteria: vec![
            at_least("noise-off observed order", order, 0.9),
            at_most("times outside 3 SE", failing as f64, 0.0),
            at_least("martingale increments centred", f64::from(u8::from(mart.pass())), 1.0),
        ],
        notes: vec![
            format!("noise-off errors {e1:.6e} (dt) and {e2:.6e} (dt/2)"),
            format!(
                "control with the real-symmetry term {}: {control_failing} of {} times outside 3 SE, max z {:.3}",
                if real { "removed" } else { "added" },
                control.points.len(),
                control.max_z
            ),
            format!("martingale: {} of {} tests beyond 3 SE, max z {:.3}", mart.exceedances, mart.tests, mart.max_z),
        ],
    })
}

fn flow_qv(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = flow_setup(cfg)?;
    let trajs = flow::simulate_ensemble(&s.spec, &s.ch, &s.opts, cfg.trials)?;
    let reports: Vec<flow::QvReport> = trajs.iter().map(flow::qv_bound_check).collect();
    let rows = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i as f64,
                r.gated_steps as f64,
                r.excluded_steps as f64,
                r.integrand_ratio,
                r.integrand_hat_ratio,
                r.windows as f64,
                r.windows_within.min(r.windows_hat_within) as f64,
                r.window_ratio,
            ]
        })
        .collect();
    let all = flow::QvReport::merge(&reports);
    let mut notes = vec![format!("{} gated steps, {} excluded by the gate", all.gated_steps, all.excluded_steps)];
    if all.windows == 0 {
        notes.push(format!("no complete window of {} steps; increase steps", flow::QV_WINDOW));
    }
    Ok(Outcome {
        columns: cols(&["trial", "gated_steps", "excluded_steps", "integrand_ratio", "integrand_hat_ratio", "windows", "windows_within", "window_ratio"]),
        rows,
        criteria: vec![
            at_most("QV integrand / (8 rho / N^2 eta^3)", all.integrand_ratio, 1.0),
            at_least("windows within 5x envelope", all.window_fraction(), cfg.thresholds.coverage),
        ],
        notes,
    })
}

fn deloc_run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sizes = cfg.n.list();
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    let mut worst = 0.0f64;
    let mut rejected = 0usize;
    for &n in &sizes {
        let runs = deloc::deloc_trials(&spec(cfg, n)?, cfg.trials)?;
        let coord: Vec<f64> = runs.iter().map(|r| r.coordinate.statistic).collect();
        medians.push(stats::median(&coord));
        for r in &runs {
            worst = worst.max(r.coordinate.statistic).max(r.random.statistic);
            rejected += r.rejected;
            rows.push(vec![n as f64, r.trial as f64, r.coordinate.statistic, r.random.statistic, r.rejected as f64, r.near_degenerate as f64]);
        }
    }
    let mut criteria = vec![at_most("max statistic", worst, cfg.thresholds.statistic_cap)];
    if sizes.len() > 1 {
        let growth = medians[medians.len() - 1] / medians[0] - 1.0;
        criteria.push(at_most("median growth smallest to largest N", growth, 0.2));
    }
    Ok(Outcome {
        columns: cols(&["n", "trial", "coordinate", "random", "rejected", "near_degenerate"]),
        rows,
        criteria,
        notes: vec![format!("{rejected} eigenpairs rejected by the residual policy")],
    })
}

fn impbound(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = single_n(cfg);
    let sp = spec(cfg, n)?;
    let choice = if let Some(&eta) = cfg.eta.first() {
        EtaChoice::Fixed(eta)
    } else if let Some(a) = cfg.a {
        EtaChoice::Product(a)
    } else {
        EtaChoice::ProductRule { c: cfg.c.unwrap_or(1.0) }
    };
    let x1 = basis_vector(n, 0);
    let root = sp.stream().child(lane::TRIAL);
    let per: Vec<Vec<deloc::SpectralBoundReport>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let x = ensemble::sample_iid_with(&sp, root.child(t as u64))?;
            let dec = deloc::eigen_decompose(&x)?;
            deloc::spectral_bound_scan(&x, &dec, &x1, choice, Z_MAX)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut violations = 0usize;
    for (t, reps) in per.iter().enumerate() {
        for r in reps {
            violations += usize::from(!r.holds());
            rows.push(vec![t as f64, r.sigma.re, r.sigma.im, r.eta, r.right.lhs, r.right.rhs, r.left.lhs, r.left.rhs]);
        }
    }
    if rows.is_empty() {
        return Err(Error::numerical("deloc", "no eigenvalue passed the residual policy"));
    }
    Ok(Outcome {
        columns: cols(&["trial", "sigma_re", "sigma_im", "eta", "right_lhs", "right_rhs", "left_lhs", "left_rhs"]),
        rows,
        criteria: vec![at_most("spectral bound violations", violations as f64, 0.0)],
        notes: vec![format!("eta rule {choice:?}")],
    })
}

fn ensemble_compare(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = single_n(cfg);
    let a_spec = spec(cfg, n)?;
    let b_spec = EnsembleSpec { distribution: cfg.compare_distribution.unwrap_or(cfg.distribution), ..a_spec };
    let z = z_list(cfg, &[0.5])[0];
    let nf = n as f64;
    let point = SpectralPoint::new(z, mde::invert_eta_rho(z, product(cfg, nf, 10.0))?)?;
    let probe = Probe::random(n, a_spec.stream().child(lane::PROBE));
    let arms = [Arm::new(a_spec), Arm { spec: b_spec, variance_scale: cfg.variance_scale }];
    let rep = deloc::ensemble_comparison(arms, cfg.trials, point, &probe, &probe)?;
    let [a, b] = &rep.arms;
    let rows = (0..cfg.trials)
        .map(|t| vec![t as f64, a.z1[t].re, a.z1[t].im, a.z2[t].re, a.z2[t].im, b.z1[t].re, b.z1[t].im, b.z2[t].re, b.z2[t].im])
        .collect();
    let ks = rep.ks();
    let cap = cfg.thresholds.ks_cap;
    let criterion = if cfg.expect_difference {
        Criterion { name: "KS distance exceeds cap".into(), value: ks, threshold: cap, pass: ks > cap }
    } else {
        at_most("KS distance", ks, cap)
    };
    Ok(Outcome {
        columns: cols(&["trial", "a_z1_re", "a_z1_im", "a_z2_re", "a_z2_im", "b_z1_re", "b_z1_im", "b_z2_re", "b_z2_im"]),
        rows,
        criteria: vec![criterion],
        notes: vec![
            format!("{} vs {} at z = {z}, eta = {:.6e}", a.label, b.label, point.eta()),
            format!("KS(Im Z1) {:.4}, KS(Im Z2) {:.4}, mean gap {:.4e}, variance gap {:.4e}", rep.ks_z1, rep.ks_z2, rep.mean_gap, rep.variance_gap),
        ],
    })
}
