//! Integrate characteristics backward from endpoints near the unit circle and audit
//! their landmark times and scale ratios at a synthetic matrix size.
//!
//! cargo run --release --example characteristic_audit -- [N]

use rmt_lab::c64;
use rmt_lab::characteristics::{check_lemma_chars, integrate_backward};
use rmt_lab::mde::{self, SpectralPoint};

fn main() -> rmt_lab::Result<()> {
    let n: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1e6);
    let xi = 0.01;
    let horizon = n.powf(-xi);
    let a = n.ln() / n;
    for r in [0.9, 1.0, 1.0 + n.powf(-10.0 * xi)] {
        let z = c64::new(r, 0.0);
        let end = SpectralPoint::new(z, mde::invert_eta_rho(z, a)?)?;
        let ch = integrate_backward(end, horizon, 400)?;
        println!(
            "|z_T| = {r:.4}: eta_0 = {:.4e}, eta_T = {:.4e}, |z_0| = {:.4}, t* = {:.4}, conservation defect {:.1e}, {} rejected steps",
            ch.start().eta,
            end.eta(),
            ch.z0().norm(),
            ch.t_star(),
            ch.conservation_defect(),
            ch.rejected_steps()
        );
        let p = ch.propagator(0.0, horizon)?;
        println!("  p_(0,T) = {p:.4} vs eta_0 / eta_T = {:.4}", ch.start().eta / end.eta());
        let rep = check_lemma_chars(&ch, xi, n)?;
        let lm = &rep.landmarks;
        println!("  S1 = {:.6}, S2 = {:.6}, T = {horizon:.6}, ordered: {}", lm.s1_raw, lm.s2_raw, rep.ordered);
        for c in &rep.checks {
            let state = if c.vacuous { "vacuous".to_string() } else { format!("ratio {:.3e}", c.ratio()) };
            println!("  {:<40} {state:<20} {}", c.name, if c.pass() { "ok" } else { "FAIL" });
        }
    }
    Ok(())
}
