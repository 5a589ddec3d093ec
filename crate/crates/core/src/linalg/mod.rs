//! Dense numerical kernels shared by the solvers.
//!
//! Everything here works on `nalgebra` dynamic matrices. Row vectors
//! (probability vectors, density coefficients) are `RowDVector`s so that
//! products read left to right as in the matrix-analytic literature.

mod expm;
mod riccati;
mod schur;
mod solvent;
mod stationary;
mod sylvester;

pub use expm::{expm_integral, matrix_exponential};
pub use riccati::{fixed_point_riccati, solve_riccati_min_nonneg, Direction, RiccatiEquation};
pub use schur::OrderedSchur;
pub use solvent::{quadratic_residual, quadratic_solvent, solvent_pair, RootSelection, SolventPair};
pub use stationary::{is_irreducible, stationary_vector};
pub use sylvester::SylvesterSolver;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

/// Condition numbers above this are reported through `log::warn!`.
pub const COND_WARN: f64 = 1e12;

pub(crate) fn check_finite(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// One norm (max absolute column sum).
pub fn norm_one(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves `A X = B` by LU with partial pivoting.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let x = a.clone().lu().solve(b).ok_or(Error::SingularSystem(what))?;
    check_finite(&x, what).map_err(|_| Error::SingularSystem(what))?;
    Ok(x)
}

/// Solves `X A = B`.
pub(crate) fn solve_right(b: &DMatrix<f64>, a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(solve(&a.transpose(), &b.transpose(), what)?.transpose())
}

pub(crate) fn inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    solve(a, &DMatrix::identity(a.nrows(), a.ncols()), what)
}

/// 1-norm condition number given the matrix and its inverse.
pub fn condition_one(a: &DMatrix<f64>, a_inv: &DMatrix<f64>) -> f64 {
    norm_one(a) * norm_one(a_inv)
}

pub(crate) fn warn_if_ill_conditioned(cond: f64, what: &str) {
    if !(cond < COND_WARN) {
        log::warn!("IllConditioned: condition number of {what} is {cond:e}");
    }
}

/// Assembles `[[a, b], [c, d]]`.
pub fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let (r1, c1) = (a.nrows(), a.ncols());
    let (r2, c2) = (d.nrows(), d.ncols());
    debug_assert_eq!(b.shape(), (r1, c2));
    debug_assert_eq!(c.shape(), (r2, c1));
    let mut out = DMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

/// Block diagonal `diag(a, d)`.
pub fn block_diag(a: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    block2(
        a,
        &DMatrix::zeros(a.nrows(), d.ncols()),
        &DMatrix::zeros(d.nrows(), a.ncols()),
        d,
    )
}

/// Copies the `(r, c)`-offset block of shape `(nr, nc)`.
pub fn sub(a: &DMatrix<f64>, r: usize, c: usize, nr: usize, nc: usize) -> DMatrix<f64> {
    a.view((r, c), (nr, nc)).into_owned()
}

/// `diag(s) * a`.
pub(crate) fn scale_rows(s: &DVector<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= s[i];
    }
    out
}

/// `a * diag(s)`.
pub(crate) fn scale_cols(a: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

pub(crate) fn ones_row(n: usize) -> RowDVector<f64> {
    RowDVector::from_element(n, 1.0)
}

/// Spectral radius via the eigenvalues of the real Schur form.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().fold(0.0, |m, z| m.max(z.norm()))
}
