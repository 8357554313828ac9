use std::sync::Arc;

use rmt_lab::c64;
use rmt_lab::characteristics::integrate_backward;
use rmt_lab::ensemble::{Distribution, EnsembleSpec, Field};
use rmt_lab::flow::{self, DriftModel, FlowOptions, Noise};
use rmt_lab::locallaw::Probe;
use rmt_lab::mde::{self, SpectralPoint};

fn characteristic(z: c64, a: f64, horizon: f64, steps: usize) -> Arc<rmt_lab::characteristics::Characteristic> {
    let end = SpectralPoint::new(z, mde::invert_eta_rho(z, a).unwrap()).unwrap();
    Arc::new(integrate_backward(end, horizon, steps).unwrap())
}

#[test]
fn average_error_stays_bounded() {
    let n = 128;
    let ch = characteristic(c64::new(0.0, 0.0), 5e-3, 0.005, 20);
    let dt = ch.horizon() / 20.0;
    assert!(dt <= flow::default_dt(ch.last().eta) + 1e-15);
    let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Rademacher, 21).unwrap();
    let opts = FlowOptions { dt, noise: Noise::On, x: Probe::lower_coordinate(n, 0), y: Probe::lower_coordinate(n, 0) };
    let trajs = flow::simulate_ensemble(&spec, &ch, &opts, 20).unwrap();
    let nf = n as f64;
    let good = trajs
        .iter()
        .filter(|tr| tr.steps.iter().all(|s| s.x1.norm() <= 10.0 * nf.ln() / (nf * s.eta)))
        .count();
    assert!(good >= 18, "{good}/20");
    for tr in &trajs {
        assert_eq!(tr.steps.len(), 21);
        assert!(tr.steps.windows(2).all(|w| w[1].eta < w[0].eta));
        let m2 = tr.steps.last().unwrap().second_moment;
        assert!((m2 - 1.0).abs() < 0.1, "{m2}");
    }
}

#[test]
fn trajectories_are_reproducible() {
    let n = 16;
    let ch = characteristic(c64::new(0.3, 0.1), 0.05, 0.01, 10);
    let spec = EnsembleSpec::new(n, Field::Real, Distribution::Gaussian, 4).unwrap();
    let opts = FlowOptions { dt: 1e-3, noise: Noise::On, x: Probe::random(n, spec.stream()), y: Probe::upper_coordinate(n, 2) };
    let a = flow::simulate_ensemble(&spec, &ch, &opts, 3).unwrap();
    let b = flow::simulate_ensemble(&spec, &ch, &opts, 3).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.steps, q.steps);
    }
    assert_ne!(a[0].steps[1].x1, a[1].steps[1].x1);
}

#[test]
fn noise_free_flow_follows_transport() {
    let n = 32;
    let ch = characteristic(c64::new(0.2, 0.0), 0.1, 0.02, 40);
    let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, 8).unwrap();
    let mk = |dt| FlowOptions { dt, noise: Noise::Off, x: Probe::lower_coordinate(n, 0), y: Probe::lower_coordinate(n, 0) };
    let coarse = flow::simulate_ensemble(&spec, &ch, &mk(1e-3), 1).unwrap();
    let fine = flow::simulate_ensemble(&spec, &ch, &mk(5e-4), 1).unwrap();
    let e1 = flow::deterministic_drift_error(&coarse[0], DriftModel::Transport);
    let e2 = flow::deterministic_drift_error(&fine[0], DriftModel::Transport);
    // First-order scheme: halving dt roughly halves the finite-difference error.
    assert!(e2 < 0.75 * e1, "{e1} {e2}");
}

#[test]
fn quadratic_variation_integrands() {
    let n = 64;
    let ch = characteristic(c64::new(0.0, 0.0), 0.05, 0.02, 20);
    let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, 30).unwrap();
    let opts = FlowOptions { dt: 1e-3, noise: Noise::On, x: Probe::lower_coordinate(n, 0), y: Probe::lower_coordinate(n, 0) };
    let trajs = flow::simulate_ensemble(&spec, &ch, &opts, 4).unwrap();
    let rep = flow::QvReport::merge(&trajs.iter().map(flow::qv_bound_check).collect::<Vec<_>>());
    assert!(rep.gated_steps > 0);
    assert!(rep.integrands_hold(), "{rep:?}");
}
