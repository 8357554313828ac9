//! Two-sample KS distances of local-law statistics between ensembles.
//!
//! cargo run --release --example ensemble_compare -- [N] [trials]

use rmt_lab::c64;
use rmt_lab::deloc::{self, Arm};
use rmt_lab::ensemble::{Distribution, EnsembleSpec, Field};
use rmt_lab::locallaw::Probe;
use rmt_lab::mde::{self, SpectralPoint};
use rmt_lab::rng::Stream;

fn main() -> rmt_lab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(256);
    let trials = args.get(1).copied().unwrap_or(200);
    let nf = n as f64;
    let z = c64::new(0.5, 0.0);
    let point = SpectralPoint::new(z, mde::invert_eta_rho(z, 10.0 * nf.ln() / nf)?)?;
    let x = Probe::random(n, Stream::root(99));
    let y = x.clone();

    let gin = EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, 1)?;
    let rad = EnsembleSpec::new(n, Field::Complex, Distribution::Rademacher, 2)?;
    let cases = [
        ("same law", [Arm::new(gin), Arm::new(gin)]),
        ("gaussian vs rademacher", [Arm::new(gin), Arm::new(rad)]),
        ("variance x2", [Arm::new(gin), Arm { spec: gin, variance_scale: 2.0 }]),
    ];
    println!("z = {z}, eta = {:.4e}", point.eta());
    for (name, arms) in cases {
        let rep = deloc::ensemble_comparison(arms, trials, point, &x, &y)?;
        println!(
            "{name:>24}: KS(Im Z1) {:.3}  KS(Im Z2) {:.3}  mean gap {:+.3}  variance gap {:+.3}",
            rep.ks_z1, rep.ks_z2, rep.mean_gap, rep.variance_gap
        );
    }
    Ok(())
}
