//! Normalized local-law errors on a grid of spectral parameters for one matrix.
//!
//! cargo run --release --example local_law_scan -- [N]

use rmt_lab::c64;
use rmt_lab::ensemble::{self, Distribution, EnsembleSpec, Field};
use rmt_lab::hermitization::Observable;
use rmt_lab::locallaw::{self, DomainParams, EtaRule, Probe};
use rmt_lab::rng::Stream;

fn main() -> rmt_lab::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(256);
    let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Rademacher, 31)?;
    let x = ensemble::sample_iid(&spec)?;
    let params = DomainParams::new(1.0, 0.01, n as u64)?;
    let zs: Vec<c64> = [0.0, 0.5, 0.9, 1.0, 1.2].iter().map(|&r| c64::new(r, 0.0)).collect();
    let probe = Probe::random(n, Stream::root(5));
    let logn = (n as f64).ln();
    for (label, rule) in [("fixed eta", EtaRule::Fixed(vec![0.3, 0.1, 0.03])), ("eta rho = 10 log N / N", EtaRule::Product { c: 10.0 })] {
        println!("{label}");
        let scan = locallaw::grid_scan(&x, &params, &zs, &rule, &Observable::Identity, &probe, &probe);
        for s in &scan.samples {
            println!(
                "  z = {:4.2} eta = {:.3e} rho = {:.3e}  |Z1| = {:7.3} (/log N {:.3})  |Z2| = {:7.3}",
                s.point.z().re,
                s.point.eta(),
                s.rho,
                s.z1.norm(),
                s.z1.norm() / logn,
                s.z2.norm()
            );
        }
        for k in &scan.skipped {
            println!("  skipped z = {}: {}", k.z, k.reason);
        }
    }
    Ok(())
}
