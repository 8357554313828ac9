//! Deterministic Schwarz-type bounds on products of resolvents, checked on the
//! event where the local law holds.
//!
//! cargo run --release --example schwarz_inequalities -- [N] [trials]

use rmt_lab::c64;
use rmt_lab::ensemble::{self, Distribution, EnsembleSpec, Field};
use rmt_lab::hermitization::hermitize;
use rmt_lab::locallaw::{self, Probe, Verdict};
use rmt_lab::mde::{self, SpectralPoint};
use rmt_lab::rng::Stream;

fn main() -> rmt_lab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(128);
    let trials = args.get(1).copied().unwrap_or(10);
    let nf = n as f64;
    let z = c64::new(0.4, 0.1);
    let point = SpectralPoint::new(z, mde::invert_eta_rho(z, 10.0 * nf.ln() / nf)?)?;
    let sol = mde::solve_mde(point)?;
    println!("z = {z}, eta = {:.4e}, rho = {:.4}", point.eta(), sol.rho);
    for (p, q) in [(1, 1), (1, 2), (2, 2)] {
        let (mut held, mut gated, mut min_slack) = (0, 0, f64::INFINITY);
        for t in 0..trials {
            let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, 100 + t as u64)?;
            let x = ensemble::sample_iid(&spec)?;
            let r = hermitize(&x, z).resolvent(point.eta())?;
            let b = locallaw::random_hermitian_observable(n, Stream::root(t as u64))?;
            let (u, v) = (Probe::random(n, Stream::root(1000 + t as u64)), Probe::random(n, Stream::root(2000 + t as u64)));
            let rep = locallaw::schwarz_checks(&r, &sol, &b, &u, &v, p, q)?;
            for verdict in [rep.averaged_verdict(), rep.isotropic_verdict()] {
                match verdict {
                    Verdict::Holds => held += 1,
                    Verdict::Violated => {}
                    Verdict::NotApplicable => gated += 1,
                }
            }
            min_slack = min_slack.min(rep.min_slack());
        }
        println!("(p, q) = ({p}, {q}): {held} of {} families hold, {gated} outside the event, min slack {min_slack:.3}", 2 * trials);
    }
    Ok(())
}
