//! The spectral-theorem bound `|<x1, r>|^2 <= eta <x, Im G x>` at every eigenvalue.
//!
//! cargo run --release --example spectral_bound -- [N]

use rmt_lab::deloc::{self, EtaChoice};
use rmt_lab::ensemble::{self, Distribution, EnsembleSpec, Field};
use rmt_lab::hermitization::basis_vector;

fn main() -> rmt_lab::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(128);
    let spec = EnsembleSpec::new(n, Field::Complex, Distribution::Gaussian, 7)?;
    let x = ensemble::sample_iid(&spec)?;
    let dec = deloc::eigen_decompose(&x)?;
    let x1 = basis_vector(n, 0);

    // The literal scale N eta rho = 100 log N needs eta rho < 1, i.e. N / log N > 100.
    match deloc::spectral_bound_check(&x, &dec.pairs[0], &x1, EtaChoice::ProductRule { c: 1.0 }) {
        Ok(r) => println!("product rule: eta = {:.3e}", r.eta),
        Err(e) => println!("product rule at N = {n}: {e}"),
    }

    let nf = n as f64;
    for choice in [EtaChoice::Product(nf.ln() / nf), EtaChoice::Fixed(1e-3)] {
        let reports = deloc::spectral_bound_scan(&x, &dec, &x1, choice, 1.1)?;
        let violations = reports.iter().filter(|r| !r.holds()).count();
        let worst = reports.iter().map(|r| (r.right.lhs - r.right.rhs).max(r.left.lhs - r.left.rhs)).fold(f64::MIN, f64::max);
        println!("{choice:?}: {} eigenvalues, {violations} violations, max(lhs - rhs) = {worst:.3e}", reports.len());
    }

    // Taking x1 = r makes the left side 1; the right side is then at least 1.
    let p = &dec.pairs[0];
    let r = deloc::spectral_bound_check(&x, p, &p.r, EtaChoice::Fixed(1e-6))?;
    println!("x1 = r at sigma = {:.4}: lhs {:.6} rhs {:.6}", p.sigma, r.right.lhs, r.right.rhs);
    Ok(())
}
