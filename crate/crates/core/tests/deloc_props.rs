use faer::Mat;
use proptest::prelude::*;
use rmt_lab::c64;
use rmt_lab::deloc::{self, EtaChoice, ProbeBasis};
use rmt_lab::ensemble::{self, Distribution, EnsembleSpec, Field, RandomMatrix};
use rmt_lab::linalg;
use rmt_lab::rng::Stream;

fn sample(n: usize, field: Field, seed: u64) -> RandomMatrix {
    ensemble::sample_iid(&EnsembleSpec::new(n, field, Distribution::Gaussian, seed).unwrap()).unwrap()
}

#[test]
fn residuals_at_256() {
    let x = sample(256, Field::Complex, 1);
    let dec = deloc::eigen_decompose(&x).unwrap();
    assert!(dec.pairs.len() + dec.rejected.len() == 256);
    assert!(dec.rejected.is_empty());
    for p in &dec.pairs {
        assert!(p.right_residual <= 1e-8 * dec.norm && p.left_residual <= 1e-8 * dec.norm);
        assert!((linalg::norm(&p.r) - 1.0).abs() < 1e-12 && (linalg::norm(&p.l) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn left_and_right_are_biorthogonal() {
    let x = sample(64, Field::Real, 2);
    let dec = deloc::eigen_decompose(&x).unwrap();
    for (i, a) in dec.pairs.iter().enumerate() {
        for b in dec.pairs.iter().skip(i + 1) {
            if (a.sigma - b.sigma).norm() > 1e-3 {
                assert!(linalg::dot(&a.l, &b.r).norm() < 1e-6 && linalg::dot(&b.l, &a.r).norm() < 1e-6);
            }
        }
    }
}

#[test]
fn coordinate_statistic_is_max_entry() {
    let n = 48;
    let x = sample(n, Field::Complex, 3);
    let dec = deloc::eigen_decompose(&x).unwrap();
    let rep = deloc::deloc_statistic(&dec.pairs, &ProbeBasis::Coordinate, n).unwrap();
    let inf = |v: &[c64]| v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let direct = dec.pairs.iter().map(|p| inf(&p.r) + inf(&p.l)).fold(0.0, f64::max) * ((n as f64) / (n as f64).ln()).sqrt();
    assert_eq!(rep.statistic, direct);
    assert_eq!(rep.recompute(), rep.statistic);
}

#[test]
fn random_basis_is_unitary_and_reproducible() {
    let a = ProbeBasis::random(32, Stream::root(9));
    let b = ProbeBasis::random(32, Stream::root(9));
    match (&a, &b) {
        (ProbeBasis::Random { q, .. }, ProbeBasis::Random { q: q2, .. }) => {
            assert!(linalg::orthonormality_defect(q.as_ref()) < 1e-12);
            assert_eq!(q, q2);
        }
        _ => unreachable!(),
    }
    assert!(ProbeBasis::user(Mat::from_fn(3, 3, |i, j| if i == j { c64::new(2.0, 0.0) } else { c64::new(0.0, 0.0) }), "x").is_err());
}

#[test]
fn spectral_bound_at_128() {
    let n = 128;
    let x = sample(n, Field::Complex, 4);
    let dec = deloc::eigen_decompose(&x).unwrap();
    let x1 = deloc_basis_vector(n, 0);
    let reports = deloc::spectral_bound_scan(&x, &dec, &x1, EtaChoice::Product(0.05), 1.1).unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r.holds()));
}

#[test]
fn spectral_bound_degenerates_for_orthogonal_probe() {
    // A diagonal matrix: e_1 is orthogonal to the eigenvectors of the other eigenvalues.
    let n = 6;
    let d = Mat::from_fn(n, n, |i, j| if i == j { c64::new(0.1 * i as f64, 0.05) } else { c64::new(0.0, 0.0) });
    let x = RandomMatrix::from_entries(d, Field::Complex, "diag").unwrap();
    let dec = deloc::eigen_decompose(&x).unwrap();
    let e0 = deloc_basis_vector(n, 0);
    for p in &dec.pairs {
        let rep = deloc::spectral_bound_check(&x, p, &e0, EtaChoice::Fixed(0.01)).unwrap();
        assert!(rep.holds());
        if p.r[0].norm() < 1e-12 {
            assert!(rep.right.lhs < 1e-20);
        }
    }
}

fn deloc_basis_vector(n: usize, k: usize) -> Vec<c64> {
    rmt_lab::hermitization::basis_vector(n, k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn statistic_ignores_phases(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
        let n = 12;
        let x = sample(n, Field::Complex, seed);
        let dec = deloc::eigen_decompose(&x).unwrap();
        let basis = ProbeBasis::random(n, Stream::root(seed ^ 1));
        let a = deloc::deloc_statistic(&dec.pairs, &basis, n).unwrap();
        let rot = c64::from_polar(1.0, theta);
        let turned: Vec<_> = dec.pairs.iter().cloned().map(|mut p| {
            p.r.iter_mut().for_each(|c| *c *= rot);
            p.l.iter_mut().for_each(|c| *c *= rot.conj());
            p
        }).collect();
        let b = deloc::deloc_statistic(&turned, &basis, n).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-12 * a.statistic);
    }

    #[test]
    fn statistic_is_at_least_the_flat_value(seed in any::<u64>()) {
        let n = 10;
        let dec = deloc::eigen_decompose(&sample(n, Field::Real, seed)).unwrap();
        let rep = deloc::deloc_statistic(&dec.pairs, &ProbeBasis::Coordinate, n).unwrap();
        // A unit vector has an entry of size at least N^{-1/2}.
        prop_assert!(rep.statistic >= 2.0 / (n as f64).ln().sqrt() - 1e-12);
    }
}
