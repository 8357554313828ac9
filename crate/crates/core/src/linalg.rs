//! Thin helpers over faer: dense decompositions and vector arithmetic on `&[c64]`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat, MatRef, Par, Side};
use std::sync::Once;

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

/// Pin faer to a single thread. Parallelism lives at the trial level, which keeps
/// every decomposition bitwise reproducible.
pub fn sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// `<x, y> = sum conj(x_i) y_i`.
pub fn dot(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(x: &mut [c64]) {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|a| *a /= n);
    }
}

pub fn conj(x: &[c64]) -> Vec<c64> {
    x.iter().map(|a| a.conj()).collect()
}

pub fn column(a: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

/// `A x`.
pub fn matvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == c64::new(0.0, 0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * xj;
        }
    }
    out
}

/// `A* x`.
pub fn adjoint_matvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].conj() * x[i]).sum())
        .collect()
}

pub fn frobenius(a: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Thin SVD `A = U diag(s) V*` with singular values in decreasing order.
pub struct Svd {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

pub fn svd(a: MatRef<'_, c64>) -> Result<Svd> {
    sequential();
    let d = a
        .thin_svd()
        .map_err(|e| Error::numerical("linalg", format!("svd failed: {e:?}")))?;
    let s = d.S().column_vector().iter().map(|x| x.re).collect();
    Ok(Svd { u: d.U().to_owned(), s, v: d.V().to_owned() })
}

pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    sequential();
    a.singular_values()
        .map_err(|e| Error::numerical("linalg", format!("singular values failed: {e:?}")))
}

pub fn operator_norm(a: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(a)?.into_iter().fold(0.0, f64::max))
}

/// Eigenvalues of a Hermitian matrix in increasing order.
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    sequential();
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical("linalg", format!("hermitian eigensolve failed: {e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Hermitian eigendecomposition, eigenvalues increasing, eigenvectors as columns.
pub fn hermitian_eigen(a: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    sequential();
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical("linalg", format!("hermitian eigensolve failed: {e:?}")))?;
    let vals = e.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, e.U().to_owned()))
}

/// Dense inverse through partial-pivoting LU.
pub fn inverse(a: MatRef<'_, c64>) -> Mat<c64> {
    sequential();
    a.partial_piv_lu().inverse()
}

/// Haar-distributed unitary from the QR of a complex Gaussian matrix.
pub fn haar_unitary(g: MatRef<'_, c64>) -> Mat<c64> {
    sequential();
    let qr = g.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64::new(1.0, 0.0) };
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Largest deviation of `Q* Q` from the identity.
pub fn orthonormality_defect(q: MatRef<'_, c64>) -> f64 {
    let g = q.adjoint() * q;
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }
    worst
}
