//! Sup-norm statistic of left and right eigenvectors across N, in the coordinate
//! basis and in one random orthonormal basis per trial.
//!
//! cargo run --release --example delocalization -- [trials]

use rmt_lab::deloc;
use rmt_lab::ensemble::{Distribution, EnsembleSpec, Field};
use rmt_lab::stats;

fn main() -> rmt_lab::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    for distribution in [Distribution::Gaussian, Distribution::Rademacher] {
        for n in [128, 256, 512] {
            let spec = EnsembleSpec::new(n, Field::Complex, distribution, 2024)?;
            let runs = deloc::deloc_trials(&spec, trials)?;
            let coord: Vec<f64> = runs.iter().map(|r| r.coordinate.statistic).collect();
            let random: Vec<f64> = runs.iter().map(|r| r.random.statistic).collect();
            let rejected: usize = runs.iter().map(|r| r.rejected).sum();
            println!(
                "{distribution:>10} N={n:4}  coordinate median {:.3} max {:.3} | random basis median {:.3} max {:.3} | rejected {rejected}",
                stats::median(&coord),
                coord.iter().cloned().fold(0.0, f64::max),
                stats::median(&random),
                random.iter().cloned().fold(0.0, f64::max),
            );
        }
    }
    Ok(())
}
