use faer::Mat;
use proptest::prelude::*;
use rmt_lab::c64;
use rmt_lab::mde::{self, SpectralPoint};

/// Largest positive real root of the cubic from the eigenvalues of its companion matrix.
fn companion_root(eta: f64, r: f64) -> f64 {
    let (c2, c1, c0) = (2.0 * eta, eta * eta + r * r - 1.0, -eta);
    let m = Mat::from_fn(3, 3, |i, j| match (i, j) {
        (0, 0) => -c2,
        (0, 1) => -c1,
        (0, 2) => -c0,
        (1, 0) | (2, 1) => 1.0,
        _ => 0.0,
    });
    let ev = m.eigenvalues().unwrap();
    ev.iter().filter(|e| e.im.abs() < 1e-7 && e.re > 0.0).map(|e| e.re).fold(0.0, f64::max)
}

#[test]
fn z_zero_quadratic_oracle() {
    for eta in [1e-6, 1e-2, 0.3, 1.0, 4.0] {
        let sol = mde::solve_mde(SpectralPoint::real(0.0, eta).unwrap()).unwrap();
        // m^2 + i eta m + 1 = 0 on the upper branch.
        let expect = (-eta + (eta * eta + 4.0).sqrt()) / 2.0;
        assert!((sol.rho - expect).abs() <= 1e-14 * expect, "eta {eta}: {} vs {expect}", sol.rho);
    }
    let one = mde::solve_mde(SpectralPoint::real(0.0, 1.0).unwrap()).unwrap();
    assert!((one.m() - c64::new(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-15);
    let tiny = mde::solve_mde(SpectralPoint::real(0.0, 1e-12).unwrap()).unwrap();
    assert!((tiny.rho - 1.0).abs() < 1e-11 && (tiny.u - 1.0).abs() < 1e-11);
}

#[test]
fn z_zero_m_prime_closed_form() {
    for eta in [1e-4, 0.1, 0.7] {
        let sol = mde::solve_mde(SpectralPoint::real(0.0, eta).unwrap()).unwrap();
        let expect = -1.0 + 1.0 / (1.0 + sol.u);
        assert!((sol.m_prime_trace - expect).abs() < 1e-14);
    }
    let sol = mde::solve_mde(SpectralPoint::real(0.0, 1e-10).unwrap()).unwrap();
    assert!((sol.m_prime_trace + 0.5).abs() < 1e-9);
}

#[test]
fn asymptotic_profiles() {
    let at = |r: f64, eta: f64| mde::solve_mde(SpectralPoint::real(r, eta).unwrap()).unwrap().rho;
    let edge = at(1.0, 1e-6);
    assert!((0.5e-2..=2e-2).contains(&edge), "{edge}");
    let outside = at(2.0, 1e-6);
    assert!((0.25e-6..=4e-6).contains(&outside), "{outside}");
    assert!((mde::rho_envelope_center(SpectralPoint::real(1.0, 1e-6).unwrap()) - 1e-2).abs() < 1e-12);
    let c = mde::rho_envelope_center(SpectralPoint::real(1.5, 1e-3).unwrap());
    assert!((c - 1e-3 / (0.5 + 1e-2)).abs() < 1e-15);
}

#[test]
fn product_inversion_examples() {
    let eta = mde::solve_eta_for_product(c64::new(0.0, 0.0), 1e-4).unwrap();
    assert!((eta / 1e-4 - 1.0).abs() < 0.1);
    let eta = mde::solve_eta_for_product(c64::new(1.0, 0.0), 1e-8).unwrap();
    assert!((0.25e-6..=4e-6).contains(&eta), "{eta}");
    assert!(mde::solve_eta_for_product(c64::new(0.5, 0.0), 2e-2).is_err());
    assert!(mde::invert_eta_rho(c64::new(0.5, 0.0), 1.0).is_err());
}

#[test]
fn m_prime_bound_in_the_interior() {
    for r in [0.0, 0.3, 0.6, 0.9, 0.99] {
        for eta in [1e-8, 1e-6, 1e-4, 1e-3] {
            let sol = mde::solve_mde(SpectralPoint::real(r, eta).unwrap()).unwrap();
            let q = eta / sol.rho;
            if q <= 1e-2 {
                let bound = (1.0 + 10.0 * q) / (2.0 * sol.rho * sol.rho + q);
                assert!(sol.m_prime_trace.abs() <= bound, "|z| {r} eta {eta}: {} > {bound}", sol.m_prime_trace);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn root_matches_companion_eigenvalue(r in 0.0f64..3.0, log_eta in -8.0f64..0.5) {
        let eta = 10f64.powf(log_eta);
        let sol = mde::solve_mde(SpectralPoint::real(r, eta).unwrap()).unwrap();
        let oracle = companion_root(eta, r);
        prop_assert!((sol.a - oracle).abs() <= 1e-8 * oracle.max(1e-300) + 1e-15, "{} vs {}", sol.a, oracle);
        prop_assert!(sol.rho > 0.0 && sol.u > 0.0 && sol.u < 1.0);
        prop_assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn product_is_increasing(r in 0.0f64..1.5, log_a in -8.0f64..-2.5) {
        let z = c64::new(r, 0.0);
        let a = 10f64.powf(log_a);
        let e1 = mde::solve_eta_for_product(z, a).unwrap();
        let e2 = mde::solve_eta_for_product(z, 2.0 * a).unwrap();
        prop_assert!(e1 < e2);
        prop_assert!((mde::eta_rho(z, e1).unwrap() / a - 1.0).abs() < 1e-10);
    }

    #[test]
    fn m_prime_matches_finite_difference(r in 0.0f64..2.0, log_eta in -6.0f64..0.0) {
        let p = SpectralPoint::real(r, 10f64.powf(log_eta)).unwrap();
        let sol = mde::solve_mde(p).unwrap();
        let fd = mde::m_prime_finite_difference(p).unwrap();
        prop_assert!((fd - sol.m_prime_trace).abs() <= 1e-4 * mde::m_prime_scale(&sol));
    }

    #[test]
    fn dependence_on_modulus_only(r in 0.0f64..2.0, phase in 0.0f64..std::f64::consts::TAU, log_eta in -6.0f64..0.0) {
        let eta = 10f64.powf(log_eta);
        let a = mde::solve_mde(SpectralPoint::real(r, eta).unwrap()).unwrap();
        let b = mde::solve_mde(SpectralPoint::new(c64::from_polar(r, phase), eta).unwrap()).unwrap();
        prop_assert!((a.rho - b.rho).abs() <= 1e-13 * a.rho);
    }
}
