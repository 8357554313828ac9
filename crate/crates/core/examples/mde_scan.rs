//! Solve the scalar Dyson equation across `|z|` and `eta`, compare `rho` with its
//! asymptotic profile and invert `eta rho = A`.
//!
//! cargo run --release --example mde_scan

use rmt_lab::c64;
use rmt_lab::mde::{self, SpectralPoint};

fn main() -> rmt_lab::Result<()> {
    println!("{:>6} {:>10} {:>14} {:>14} {:>12} {:>10}", "|z|", "eta", "rho", "<M'>", "residual", "env ratio");
    for r in [0.0, 0.5, 0.9, 1.0, 1.1, 1.5] {
        for eta in [1e-6, 1e-3, 1e-1] {
            let p = SpectralPoint::real(r, eta)?;
            let sol = mde::solve_mde(p)?;
            let ratio = sol.rho / mde::rho_envelope_center(p);
            println!(
                "{r:6.2} {eta:10.1e} {:14.8e} {:14.6e} {:12.2e} {ratio:10.3}",
                sol.rho, sol.m_prime_trace, sol.residual
            );
        }
    }

    println!();
    let n = 4096f64;
    for r in [0.0, 0.9, 1.0, 1.05] {
        let z = c64::new(r, 0.0);
        let a = 10.0 * n.ln() / n;
        let eta = mde::invert_eta_rho(z, a)?;
        let (eta_c, _, rho_c) = mde::product_envelope_centers(r, a);
        println!("|z| = {r:4.2}: eta rho = {a:.3e} at eta = {eta:.4e} (profile {eta_c:.3e}), rho = {:.4e} (profile {rho_c:.3e})", mde::rho(z, eta)?);
    }
    // eta rho < 1 always, so the product can never reach 1.
    println!("eta rho = 1: {}", mde::invert_eta_rho(c64::new(0.0, 0.0), 1.0).unwrap_err());
    Ok(())
}
