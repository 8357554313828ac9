//! Simulate the OU flow along a characteristic and compare finite differences of
//! `<G - M>` with the drift, for real and complex entries.
//!
//! cargo run --release --example ou_flow_drift -- [N] [trajectories]

use std::sync::Arc;

use rmt_lab::c64;
use rmt_lab::characteristics::integrate_backward;
use rmt_lab::ensemble::{self, Distribution, EnsembleSpec, Field};
use rmt_lab::flow::{self, DriftModel, FlowOptions, Noise};
use rmt_lab::locallaw::Probe;
use rmt_lab::mde::{self, SpectralPoint};
use rmt_lab::rng::Stream;

fn main() -> rmt_lab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(64);
    let trials = args.get(1).copied().unwrap_or(100);

    let z = c64::new(0.3, 0.2);
    let end = SpectralPoint::new(z, mde::invert_eta_rho(z, 0.1)?)?;
    let dt = flow::default_dt(end.eta());
    let steps = 40;
    let ch = Arc::new(integrate_backward(end, dt * steps as f64, steps)?);
    println!("z_T = {z}, eta_T = {:.4}, eta_0 = {:.4}, dt = {dt}", end.eta(), ch.start().eta);

    // Deterministic flow: observed order under halving dt.
    let fine = Arc::new(integrate_backward(end, dt * steps as f64, 2 * steps)?);
    let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, 11)?;
    let x0 = ensemble::sample_iid(&spec)?;
    let probe = |n| Probe::lower_coordinate(n, 0);
    let coarse_opts = FlowOptions { dt, noise: Noise::Off, x: probe(n), y: probe(n) };
    let fine_opts = FlowOptions { dt: dt / 2.0, ..coarse_opts.clone() };
    let e1 = flow::deterministic_drift_error(&flow::simulate_flow(&x0, &fine, &coarse_opts, Stream::root(0))?, DriftModel::Transport);
    let e2 = flow::deterministic_drift_error(&flow::simulate_flow(&x0, &fine, &fine_opts, Stream::root(0))?, DriftModel::Transport);
    println!("noise off: error {e1:.3e} -> {e2:.3e}, order {:.3}", (e1 / e2).log2());

    for field in [Field::Real, Field::Complex] {
        let spec = EnsembleSpec::new(n, field, Distribution::Gaussian, 12)?;
        let opts = FlowOptions { dt, noise: Noise::On, x: probe(n), y: probe(n) };
        let trajs = flow::simulate_ensemble(&spec, &ch, &opts, trials)?;
        for beta_term in [true, false] {
            let rep = flow::drift_consistency(&trajs, DriftModel::Full { beta_term })?;
            let worst = rep.points.iter().filter(|p| !p.pass).count();
            println!(
                "{field:>7} beta_term={beta_term:<5} max z = {:6.2} failing times {worst}/{} pass {}",
                rep.max_z,
                rep.points.len(),
                rep.pass
            );
        }
        let mart = flow::martingale_check(&trajs)?;
        let qv = flow::QvReport::merge(&trajs.iter().map(flow::qv_bound_check).collect::<Vec<_>>());
        println!(
            "{field:>7} martingale: {}/{} beyond 3 SE, max z {:.2}; qv integrand ratio {:.3}, windows within {}/{}",
            mart.exceedances, mart.tests, mart.max_z, qv.integrand_ratio, qv.windows_within, qv.windows
        );
        let m2: Vec<f64> = trajs.iter().map(|t| t.steps.last().unwrap().second_moment).collect();
        println!("{field:>7} second moment at T: {:.4}", rmt_lab::stats::mean(&m2));
    }
    Ok(())
}
