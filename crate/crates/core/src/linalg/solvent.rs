use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{norm_inf, scale_rows, OrderedSchur};
use crate::error::{Error, Result};
use crate::model::MmbmModel;

/// Relative tolerance (against the linearization's norm) under which a
/// latent root counts as the structural zero root.
pub const ZERO_ROOT_TOL: f64 = 1e-8;

const SUBSPACE_COND_MAX: f64 = 1e12;

/// Which latent roots of `1/2 V z^2 + D z + Q` a solvent is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootSelection {
    /// Roots with negative real part, plus the zero root if `with_zero`.
    Left { with_zero: bool },
    /// Roots with positive real part, plus the zero root if `with_zero`.
    Right { with_zero: bool },
}

/// The two subgenerator solvents of `1/2 V X^2 + D X + Q = 0`.
///
/// `lam_minus` governs downward first passage and `lam_plus` upward first
/// passage; `X = lam_minus` and `X = -lam_plus` both solve the quadratic.
#[derive(Debug, Clone)]
pub struct SolventPair {
    pub lam_minus: DMatrix<f64>,
    pub lam_plus: DMatrix<f64>,
    /// `Theta * lam_minus`, the first-order term of `Psi_eps`.
    pub psi1: DMatrix<f64>,
    /// `Theta * lam_plus`, the first-order term of `Psi*_eps`.
    pub psi1_star: DMatrix<f64>,
}

/// Solvent of `1/2 diag(v) X^2 + diag(d) X + q = 0` spanned by the selected
/// latent roots, taken from an ordered Schur form of the companion
/// linearization `[[0, I], [-2 V^-1 Q, -2 V^-1 D]]`.
pub fn quadratic_solvent(
    v: &DVector<f64>,
    d: &DVector<f64>,
    q: &DMatrix<f64>,
    selection: RootSelection,
) -> Result<DMatrix<f64>> {
    let m = q.nrows();
    let two_inv_v = v.map(|x| 2.0 / x);
    let mut lin = DMatrix::zeros(2 * m, 2 * m);
    lin.view_mut((0, m), (m, m)).fill_with_identity();
    lin.view_mut((m, 0), (m, m)).copy_from(&(-scale_rows(&two_inv_v, q)));
    for i in 0..m {
        lin[(m + i, m + i)] = -two_inv_v[i] * d[i];
    }

    let tol = ZERO_ROOT_TOL * norm_inf(&lin).max(1.0);
    let mut schur = OrderedSchur::new(&lin);
    if schur
        .eigenvalues()
        .any(|z| z.norm() > tol && z.re.abs() <= tol)
    {
        // A nonzero root on the imaginary axis cannot be split.
        return Err(Error::SubspaceIllConditioned);
    }
    let pick = move |z: Complex64| {
        let zero = z.norm() <= tol;
        match selection {
            RootSelection::Left { with_zero } => (zero && with_zero) || (!zero && z.re < 0.0),
            RootSelection::Right { with_zero } => (zero && with_zero) || (!zero && z.re > 0.0),
        }
    };
    let count = schur.reorder(pick);
    if count != m {
        return Err(Error::SubspaceIllConditioned);
    }

    let z = schur.unitary();
    let w1 = z.view((0, 0), (m, m)).into_owned();
    let w2 = z.view((m, 0), (m, m)).into_owned();
    let w1_inv = w1
        .clone()
        .try_inverse()
        .ok_or(Error::SubspaceIllConditioned)?;
    let cond = complex_norm_one(&w1) * complex_norm_one(&w1_inv);
    if !(cond < SUBSPACE_COND_MAX) {
        return Err(Error::SubspaceIllConditioned);
    }
    let x = w2 * w1_inv;
    let imag = x.iter().fold(0.0f64, |acc, c| acc.max(c.im.abs()));
    let real = x.map(|c| c.re);
    if imag > 1e-8 * (1.0 + super::max_abs(&real)) {
        return Err(Error::SubspaceIllConditioned);
    }
    Ok(real)
}

fn complex_norm_one(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Builds `Lambda-` and `Lambda+` for a validated model. The zero latent root
/// goes to `Lambda-` when the mean drift is negative (downward passage is
/// certain) and to `-Lambda+` when it is positive.
pub fn solvent_pair(model: &MmbmModel) -> Result<SolventPair> {
    let drift = model.mean_drift();
    if drift == 0.0 {
        return Err(Error::ZeroMeanDrift(drift));
    }
    let v = model.sigma2();
    let d = model.mu();
    let q = model.q();
    let lam_minus = quadratic_solvent(v, d, q, RootSelection::Left { with_zero: drift < 0.0 })?;
    let lam_plus = -quadratic_solvent(v, d, q, RootSelection::Right { with_zero: drift > 0.0 })?;
    let theta = model.theta();
    let psi1 = scale_rows(&theta, &lam_minus);
    let psi1_star = scale_rows(&theta, &lam_plus);
    Ok(SolventPair {
        lam_minus,
        lam_plus,
        psi1,
        psi1_star,
    })
}

/// `1/2 V X^2 + D X + Q`.
pub fn quadratic_residual(
    v: &DVector<f64>,
    d: &DVector<f64>,
    q: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> DMatrix<f64> {
    scale_rows(&(v * 0.5), &(x * x)) + scale_rows(d, x) + q
}
