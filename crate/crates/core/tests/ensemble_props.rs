use proptest::prelude::*;
use rmt_lab::ensemble::{self, Distribution, EnsembleSpec, Field};
use rmt_lab::rng::Stream;
use rmt_lab::stats;

fn entries(x: &rmt_lab::ensemble::RandomMatrix) -> Vec<rmt_lab::c64> {
    let n = x.n();
    (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| x.entries()[(i, j)]).collect()
}

#[test]
fn normalization_at_512() {
    for (field, dist) in [(Field::Complex, Distribution::Gaussian), (Field::Real, Distribution::Rademacher), (Field::Complex, Distribution::Uniform)] {
        let x = ensemble::sample_iid(&EnsembleSpec::new(512, field, dist, 4).unwrap()).unwrap();
        let e = entries(&x);
        let n = 512.0;
        let mean = e.iter().sum::<rmt_lab::c64>() / e.len() as f64;
        assert!(mean.norm() <= 5.0 / n, "{field} {dist}: mean {mean}");
        assert!((x.second_moment() - 1.0).abs() <= 0.05, "{field} {dist}: {}", x.second_moment());
    }
}

/// `N^2 E|x|^4` of the divisible mixture with Ginibre weight `1 - e^{-T}`.
fn mixture_fourth(t: f64, gauss4: f64, atom4: f64, cross: f64) -> f64 {
    let (g, a) = (1.0 - (-t).exp(), (-t).exp());
    g * g * gauss4 + a * a * atom4 + cross * g * a
}

#[test]
fn divisible_fourth_moment_interpolates() {
    // Complex: E|g|^4 = 2, |atom| = 1, cross term 4 E|g|^2 E|a|^2 (circular entries).
    // Real: E g^4 = 3, atom^4 = 1, cross term 6.
    for (field, g4, cross) in [(Field::Complex, 2.0, 4.0), (Field::Real, 3.0, 6.0)] {
        let spec = EnsembleSpec::new(512, field, Distribution::Rademacher, 8).unwrap();
        let x = ensemble::sample_gaussian_divisible(&spec, 0.1).unwrap();
        let n2 = 512.0f64 * 512.0;
        let m4 = stats::mean(&entries(&x).iter().map(|c| c.norm_sqr().powi(2) * n2).collect::<Vec<_>>());
        let expect = mixture_fourth(0.1, g4, 1.0, cross);
        assert!(m4 > 1.0 && m4 < g4, "{field}: {m4}");
        assert!((m4 - expect).abs() < 0.03, "{field}: {m4} vs {expect}");
        assert!((x.second_moment() - 1.0).abs() < 0.05);
    }
}

#[test]
fn gaussian_stays_gaussian_under_division() {
    let spec = EnsembleSpec::new(512, Field::Complex, Distribution::Gaussian, 9).unwrap();
    let x = ensemble::sample_gaussian_divisible(&spec, 0.7).unwrap();
    assert!((x.second_moment() - 1.0).abs() < 0.05);
    let n2 = 512.0f64 * 512.0;
    let m4 = stats::mean(&entries(&x).iter().map(|c| c.norm_sqr().powi(2) * n2).collect::<Vec<_>>());
    assert!((m4 - 2.0).abs() < 0.05, "{m4}");
}

#[test]
fn ou_flow_preserves_second_moment() {
    let spec = EnsembleSpec::new(256, Field::Complex, Distribution::Rademacher, 10).unwrap();
    let mut x = ensemble::sample_iid(&spec).unwrap();
    let mut rng = Stream::root(77).rng();
    for k in 0..100 {
        x = ensemble::ou_step(&x, 1e-3, &mut rng).unwrap();
        if k % 10 == 9 {
            assert!((x.second_moment() - 1.0).abs() < 0.1, "step {k}: {}", x.second_moment());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), n in 2usize..12) {
        let spec = EnsembleSpec::new(n, Field::Real, Distribution::Uniform, seed).unwrap();
        let a = ensemble::sample_iid(&spec).unwrap();
        let b = ensemble::sample_iid(&spec).unwrap();
        prop_assert_eq!(entries(&a), entries(&b));
        prop_assert!(entries(&a).iter().all(|c| c.im == 0.0));
    }
}
