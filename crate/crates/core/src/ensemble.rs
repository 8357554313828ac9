//! Seeded samplers for i.i.d. matrices, Gaussian-divisible mixtures and
//! Ornstein-Uhlenbeck steps.

use faer::{c64, Mat, MatRef};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{lane, Rng, Stream};

/// Largest explicit Euler-Maruyama step accepted by [`ou_step`].
pub const MAX_OU_DT: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    /// Symmetry class: 1 for real, 2 for complex entries.
    pub fn beta(self) -> u8 {
        match self {
            Field::Real => 1,
            Field::Complex => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gaussian,
    Rademacher,
    Uniform,
}

impl FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(Error::Config(format!("unsupported field `{other}` (expected real|complex)"))),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Distribution::Gaussian),
            "rademacher" => Ok(Distribution::Rademacher),
            "uniform" => Ok(Distribution::Uniform),
            other => Err(Error::Config(format!(
                "unsupported distribution `{other}` (expected gaussian|rademacher|uniform)"
            ))),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Real => "real",
            Field::Complex => "complex",
        })
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Rademacher => "rademacher",
            Distribution::Uniform => "uniform",
        })
    }
}

/// Reproducible description of an `N x N` i.i.d. matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub field: Field,
    pub distribution: Distribution,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(n: usize, field: Field, distribution: Distribution, seed: u64) -> Result<Self> {
        let spec = EnsembleSpec { n, field, distribution, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("dimension N must be at least 2, got {}", self.n)));
        }
        Ok(())
    }

    pub fn stream(&self) -> Stream {
        Stream::root(self.seed)
    }

    pub fn beta(&self) -> u8 {
        self.field.beta()
    }
}

/// A realized matrix together with its provenance.
#[derive(Clone, Debug)]
pub struct RandomMatrix {
    entries: Mat<c64>,
    field: Field,
    spec: Option<EnsembleSpec>,
    label: String,
}

impl RandomMatrix {
    /// Wrap explicit entries, e.g. a deterministic test matrix.
    pub fn from_entries(entries: Mat<c64>, field: Field, label: impl Into<String>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Argument(format!(
                "matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if field == Field::Real && (0..entries.ncols()).any(|j| (0..entries.nrows()).any(|i| entries[(i, j)].im != 0.0)) {
            return Err(Error::Argument("real-field matrix has non-zero imaginary parts".into()));
        }
        Ok(RandomMatrix { entries, field, spec: None, label: label.into() })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> MatRef<'_, c64> {
        self.entries.as_ref()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn beta(&self) -> u8 {
        self.field.beta()
    }

    pub fn spec(&self) -> Option<&EnsembleSpec> {
        self.spec.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `N * mean |X_ab|^2`, which concentrates at 1.
    pub fn second_moment(&self) -> f64 {
        let n = self.n() as f64;
        let mut s = 0.0;
        for j in 0..self.n() {
            for i in 0..self.n() {
                s += self.entries[(i, j)].norm_sqr();
            }
        }
        s / n
    }
}

fn real_atom(distribution: Distribution, rng: &mut Rng) -> f64 {
    match distribution {
        Distribution::Gaussian => rng.sample(StandardNormal),
        Distribution::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        Distribution::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
    }
}

/// One draw of the atom variable: mean 0, `E|chi|^2 = 1`, and `E chi^2 = 0` in the complex case.
pub fn atom(distribution: Distribution, field: Field, rng: &mut Rng) -> c64 {
    match field {
        Field::Real => c64::new(real_atom(distribution, rng), 0.0),
        Field::Complex => {
            let a = real_atom(distribution, rng);
            let b = real_atom(distribution, rng);
            c64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
        }
    }
}

/// Matrix of unscaled atoms, filled column by column.
pub fn atom_matrix(n: usize, distribution: Distribution, field: Field, rng: &mut Rng) -> Mat<c64> {
    let mut m = Mat::<c64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] = atom(distribution, field, rng);
        }
    }
    m
}

/// Standard real or complex Gaussian matrix without the `1/sqrt(N)` scaling.
pub fn standard_gaussian(n: usize, field: Field, rng: &mut Rng) -> Mat<c64> {
    atom_matrix(n, Distribution::Gaussian, field, rng)
}

/// I.i.d. matrix with entries `chi / sqrt(N)` drawn from `stream`.
pub fn sample_iid_with(spec: &EnsembleSpec, stream: Stream) -> Result<RandomMatrix> {
    spec.validate()?;
    let mut rng = stream.child(lane::ENTRIES).rng();
    let scale = 1.0 / (spec.n as f64).sqrt();
    let atoms = atom_matrix(spec.n, spec.distribution, spec.field, &mut rng);
    let entries = Mat::from_fn(spec.n, spec.n, |i, j| atoms[(i, j)] * scale);
    Ok(RandomMatrix { entries, field: spec.field, spec: Some(*spec), label: "iid".into() })
}

pub fn sample_iid(spec: &EnsembleSpec) -> Result<RandomMatrix> {
    sample_iid_with(spec, spec.stream())
}

/// `(1 - e^{-T})^{1/2} G + e^{-T/2} Y` with `G` Gaussian and `Y` drawn from `spec`.
pub fn sample_gaussian_divisible_with(spec: &EnsembleSpec, t: f64, stream: Stream) -> Result<RandomMatrix> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Config(format!("Gaussian-divisible time T must lie in (0,1), got {t}")));
    }
    let y = sample_iid_with(spec, stream)?;
    let mut rng = stream.child(lane::GINIBRE).rng();
    let g = standard_gaussian(spec.n, spec.field, &mut rng);
    let (cg, cy) = gaussian_divisible_weights(t);
    let cg = cg / (spec.n as f64).sqrt();
    let entries = Mat::from_fn(spec.n, spec.n, |i, j| g[(i, j)] * cg + y.entries[(i, j)] * cy);
    Ok(RandomMatrix { entries, field: spec.field, spec: Some(*spec), label: format!("gauss-divisible T={t}") })
}

pub fn sample_gaussian_divisible(spec: &EnsembleSpec, t: f64) -> Result<RandomMatrix> {
    sample_gaussian_divisible_with(spec, t, spec.stream())
}

/// Mixing weights `((1 - e^{-T})^{1/2}, e^{-T/2})`.
pub fn gaussian_divisible_weights(t: f64) -> (f64, f64) {
    ((-(-t).exp_m1()).sqrt(), (-t / 2.0).exp())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("OU step dt must be positive, got {dt}")));
    }
    if dt > MAX_OU_DT {
        return Err(Error::Config(format!("OU step dt = {dt} exceeds the stability cap {MAX_OU_DT}")));
    }
    Ok(())
}

/// `X' = (1 - dt/2) X + sqrt(dt/N) xi`. With `xi = None` only the drift is applied.
pub fn ou_step_with(x: &RandomMatrix, dt: f64, xi: Option<MatRef<'_, c64>>) -> Result<RandomMatrix> {
    check_dt(dt)?;
    let n = x.n();
    let decay = 1.0 - dt / 2.0;
    let entries = match xi {
        Some(xi) => {
            if xi.nrows() != n || xi.ncols() != n {
                return Err(Error::Argument("noise matrix dimension mismatch".into()));
            }
            let s = (dt / n as f64).sqrt();
            Mat::from_fn(n, n, |i, j| x.entries[(i, j)] * decay + xi[(i, j)] * s)
        }
        None => Mat::from_fn(n, n, |i, j| x.entries[(i, j)] * decay),
    };
    Ok(RandomMatrix { entries, field: x.field, spec: x.spec, label: "ou".into() })
}

/// One Euler-Maruyama step of the OU flow with fresh Gaussian noise.
pub fn ou_step(x: &RandomMatrix, dt: f64, rng: &mut Rng) -> Result<RandomMatrix> {
    check_dt(dt)?;
    let xi = standard_gaussian(x.n(), x.field, rng);
    ou_step_with(x, dt, Some(xi.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, field: Field, d: Distribution) -> EnsembleSpec {
        EnsembleSpec::new(n, field, d, 11).unwrap()
    }

    #[test]
    fn rademacher_entries_at_n2() {
        let x = sample_iid(&spec(2, Field::Real, Distribution::Rademacher)).unwrap();
        for j in 0..2 {
            for i in 0..2 {
                let e = x.entries()[(i, j)];
                assert_eq!(e.im, 0.0);
                assert_eq!(e.re.abs(), 1.0 / 2f64.sqrt());
            }
        }
    }

    #[test]
    fn determinism() {
        let s = spec(16, Field::Complex, Distribution::Uniform);
        let a = sample_iid(&s).unwrap();
        let b = sample_iid(&s).unwrap();
        assert!(a.entries() == b.entries());
    }

    #[test]
    fn spec_gates() {
        assert!(matches!(EnsembleSpec::new(1, Field::Real, Distribution::Gaussian, 0), Err(Error::Config(_))));
        assert!(matches!("cauchy".parse::<Distribution>(), Err(Error::Config(_))));
        let s = spec(4, Field::Real, Distribution::Gaussian);
        assert!(sample_gaussian_divisible(&s, 0.0).is_err());
        assert!(sample_gaussian_divisible(&s, 1.0).is_err());
        let x = sample_iid(&s).unwrap();
        assert!(matches!(ou_step_with(&x, 0.0, None), Err(Error::Config(_))));
        assert!(matches!(ou_step_with(&x, 0.02, None), Err(Error::Config(_))));
    }

    #[test]
    fn drift_only_step() {
        let s = spec(8, Field::Complex, Distribution::Gaussian);
        let x = sample_iid(&s).unwrap();
        let y = ou_step_with(&x, 1e-3, None).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                assert_eq!(y.entries()[(i, j)], x.entries()[(i, j)] * (1.0 - 0.5e-3));
            }
        }
    }

    #[test]
    fn weights_limit() {
        let (g, y) = gaussian_divisible_weights(1e-12);
        assert!(g < 2e-6);
        assert!((y - 1.0).abs() < 1e-12);
        let (g, y) = gaussian_divisible_weights(0.3);
        assert!((g * g + y * y - 1.0).abs() < 1e-15);
    }
}
