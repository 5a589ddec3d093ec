//! Closed-form stationary density of the two-sided reflected MMBM, obtained
//! as the zero-ε limit of the fluid family, and the independent
//! time-reversed representation used to cross-check it.
//!
//! The density is `c* nu0 N0^-1 [e^{K0 x} Θ^-1 ; e^{K0*(b-x)} Θ^-1]`, where
//! `K0`, `K0*` do not depend on `b` and `nu0` is the null vector of the
//! first-order term `G1(b)` of the two-sided exit matrix.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{
    block2, block_diag, condition_one, expm_integral, inverse, matrix_exponential, scale_cols,
    scale_rows, solvent_pair, spectral_radius, stationary_vector, warn_if_ill_conditioned,
    SolventPair,
};
use crate::model::MmbmModel;

/// `b`-independent generators and the first-order exit blocks.
#[derive(Debug, Clone)]
pub struct LimitMatrices {
    pub solvents: SolventPair,
    /// `Ψ1 Θ^-1 + 2 V^-1 D`
    pub k0: DMatrix<f64>,
    /// `Ψ1* Θ^-1 - 2 V^-1 D`
    pub k0_star: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub l1_tilde: DMatrix<f64>,
    pub p1: DMatrix<f64>,
    pub p1_tilde: DMatrix<f64>,
    /// `[[I, e^{K0 b}], [e^{K0* b}, I]]`
    pub n0: DMatrix<f64>,
    pub b: f64,
}

impl LimitMatrices {
    /// `G1(b) = [[L1, P1], [P1~, L1~]]`.
    pub fn g1(&self) -> DMatrix<f64> {
        block2(&self.l1, &self.p1, &self.p1_tilde, &self.l1_tilde)
    }

    /// `J G1(b) = [[P1~, L1~], [L1, P1]]`, an irreducible generator.
    pub fn jg1(&self) -> DMatrix<f64> {
        block2(&self.p1_tilde, &self.l1_tilde, &self.l1, &self.p1)
    }

    /// Spectral radius of `e^{K0 b} e^{K0* b}`; below 1 when `N0` is invertible.
    pub fn coupling_radius(&self) -> f64 {
        let m = self.k0.nrows();
        let ek = self.n0.view((0, m), (m, m)).into_owned();
        let eks = self.n0.view((m, 0), (m, m)).into_owned();
        spectral_radius(&(ek * eks))
    }
}

/// `K0 = Ψ1 Θ^-1 + 2 V^-1 D` and `K0* = Ψ1* Θ^-1 - 2 V^-1 D`.
fn k_pair(model: &MmbmModel, s: &SolventPair) -> (DMatrix<f64>, DMatrix<f64>) {
    let inv_theta = model.theta().map(|t| 1.0 / t);
    let drift_term = DMatrix::from_diagonal(&model.mu().zip_map(model.sigma2(), |m, v| 2.0 * m / v));
    let k0 = scale_cols(&s.psi1, &inv_theta) + &drift_term;
    let k0_star = scale_cols(&s.psi1_star, &inv_theta) - &drift_term;
    (k0, k0_star)
}

/// Builds the limit matrices for the model's buffer height.
pub fn limit_matrices(model: &MmbmModel) -> Result<LimitMatrices> {
    let m = model.phases();
    let b = model.b();
    let solvents = solvent_pair(model)?;
    let (k0, k0_star) = k_pair(model, &solvents);

    let e_minus = matrix_exponential(&(&solvents.lam_minus * b))?;
    let e_plus = matrix_exponential(&(&solvents.lam_plus * b))?;
    let id = DMatrix::<f64>::identity(m, m);
    let pm = &e_plus * &e_minus;
    let mp = &e_minus * &e_plus;
    let inv_pm = inverse(&(&id - &pm), "I - e^{L+b} e^{L-b}").map_err(|_| Error::SingularBlock)?;
    let inv_mp = inverse(&(&id - &mp), "I - e^{L-b} e^{L+b}").map_err(|_| Error::SingularBlock)?;
    let psi1 = &solvents.psi1;
    let psi1s = &solvents.psi1_star;
    let p1 = (psi1s * &pm + psi1) * inv_pm;
    let p1_tilde = (psi1 * &mp + psi1s) * inv_mp;
    let l1 = (psi1 - &p1) * matrix_exponential(&(&solvents.lam_minus * -b))?;
    let l1_tilde = (psi1s - &p1_tilde) * matrix_exponential(&(&solvents.lam_plus * -b))?;

    let n0 = block2(
        &id,
        &matrix_exponential(&(&k0 * b))?,
        &matrix_exponential(&(&k0_star * b))?,
        &id,
    );
    Ok(LimitMatrices {
        solvents,
        k0,
        k0_star,
        l1,
        l1_tilde,
        p1,
        p1_tilde,
        n0,
        b,
    })
}

/// Probability vector with `nu0 G1(b) = 0`.
pub fn nu0(lm: &LimitMatrices) -> Result<RowDVector<f64>> {
    // x J G1 = 0 with x = nu0 J; J swaps the two halves.
    let x = stationary_vector(&lm.jg1())?;
    let m = lm.k0.nrows();
    Ok(RowDVector::from_fn(2 * m, |_, j| x[(j + m) % (2 * m)]))
}

/// Stationary law of the two-sided reflected MMBM. There are no boundary
/// masses; the law is the density on `[0, b]`.
#[derive(Debug, Clone)]
pub struct MmbmSolution {
    pub lm: LimitMatrices,
    pub nu0: RowDVector<f64>,
    /// Normalizing constant.
    pub cstar: f64,
    /// `c* nu0 N0^-1`
    pub coeff: RowDVector<f64>,
    pub cond_n0: f64,
    inv_theta: DVector<f64>,
    alpha: RowDVector<f64>,
}

/// Closed-form stationary density of the model.
pub fn stationary_density(model: &MmbmModel) -> Result<MmbmSolution> {
    let lm = limit_matrices(model)?;
    let nu = nu0(&lm)?;
    let n0_inv = inverse(&lm.n0, "N0").map_err(|_| Error::SingularN)?;
    let cond_n0 = condition_one(&lm.n0, &n0_inv);
    warn_if_ill_conditioned(cond_n0, "N0");
    let inv_theta = model.theta().map(|t| 1.0 / t);
    let raw = &nu * &n0_inv;
    let b = model.b();
    let ik = expm_integral(&lm.k0, b)?;
    let iks = expm_integral(&lm.k0_star, b)?;
    let m = model.phases();
    let stacked = DVector::from_iterator(2 * m, inv_theta.iter().chain(inv_theta.iter()).copied());
    let w = block_diag(&ik, &iks) * stacked;
    let total = (&raw * w)[0];
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::SingularSystem("limit normalization"));
    }
    let cstar = 1.0 / total;
    Ok(MmbmSolution {
        lm,
        nu0: nu,
        cstar,
        coeff: raw * cstar,
        cond_n0,
        inv_theta,
        alpha: model.alpha().as_row().clone(),
    })
}

impl MmbmSolution {
    pub fn b(&self) -> f64 {
        self.lm.b
    }

    pub fn phases(&self) -> usize {
        self.lm.k0.nrows()
    }

    fn check(&self, x: f64) -> Result<()> {
        if (0.0..=self.b()).contains(&x) {
            Ok(())
        } else {
            Err(Error::OutOfRange { x, lo: 0.0, hi: self.b() })
        }
    }

    fn halves(&self) -> (RowDVector<f64>, RowDVector<f64>) {
        let m = self.phases();
        (
            self.coeff.columns(0, m).into_owned(),
            self.coeff.columns(m, m).into_owned(),
        )
    }

    /// Joint density `d/dx P(level <= x, phase = i)` at `0 <= x <= b`.
    pub fn density(&self, x: f64) -> Result<RowDVector<f64>> {
        self.check(x)?;
        let (lo, hi) = self.halves();
        let v = lo * matrix_exponential(&(&self.lm.k0 * x))?
            + hi * matrix_exponential(&(&self.lm.k0_star * (self.b() - x)))?;
        Ok(scale_cols_row(&v, &self.inv_theta))
    }

    /// Density of the level, summed over phases.
    pub fn level_density(&self, x: f64) -> Result<f64> {
        Ok(self.density(x)?.sum())
    }

    /// Joint CDF `P(level <= x, phase = i)`.
    pub fn cdf(&self, x: f64) -> Result<RowDVector<f64>> {
        self.check(x)?;
        let m = self.phases();
        if x == 0.0 {
            return Ok(RowDVector::zeros(m));
        }
        let (lo, hi) = self.halves();
        let ik = expm_integral(&self.lm.k0, x)?;
        // ∫_0^x e^{K0*(b-u)} du = e^{K0*(b-x)} ∫_0^x e^{K0* w} dw
        let iks = matrix_exponential(&(&self.lm.k0_star * (self.b() - x)))?
            * expm_integral(&self.lm.k0_star, x)?;
        let v = lo * ik + hi * iks;
        Ok(scale_cols_row(&v, &self.inv_theta))
    }

    /// CDF of the level.
    pub fn level_cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf(x)?.sum())
    }

    /// Mass at 0 per phase; identically zero.
    pub fn mass0(&self) -> RowDVector<f64> {
        RowDVector::zeros(self.phases())
    }

    /// Mass at `b` per phase; identically zero.
    pub fn massb(&self) -> RowDVector<f64> {
        RowDVector::zeros(self.phases())
    }

    /// `∫_0^b density_i`, which equals the phase law α.
    pub fn phase_marginals(&self) -> Result<RowDVector<f64>> {
        self.cdf(self.b())
    }

    pub fn alpha(&self) -> &RowDVector<f64> {
        &self.alpha
    }
}

fn scale_cols_row(v: &RowDVector<f64>, s: &DVector<f64>) -> RowDVector<f64> {
    RowDVector::from_fn(v.len(), |_, j| v[j] * s[j])
}

/// Time-reversed representation: `Ω+`, `Ω-` are first-passage generators of
/// the time-reversed unbounded MMBM, obtained from `K0`, `K0*` by the
/// similarity `Ω^T = Δα Θ K Θ^-1 Δ(1/α)`.
#[derive(Debug, Clone)]
pub struct TimeReversedForm {
    pub omega_plus: DMatrix<f64>,
    pub omega_minus: DMatrix<f64>,
    pub alpha: RowDVector<f64>,
    pub b: f64,
    // Ω+ w and Ω- e^{bΩ+} w with w = (I - e^{bΩ-} e^{bΩ+})^-1 1.
    v_plus: DVector<f64>,
    v_minus: DVector<f64>,
}

/// `(Δα Θ K Θ^-1 Δ(1/α))^T`.
pub fn similarity_image(k: &DMatrix<f64>, theta: &DVector<f64>, alpha: &RowDVector<f64>) -> DMatrix<f64> {
    let left = theta.zip_map(&alpha.transpose(), |t, a| t * a);
    let right = theta.zip_map(&alpha.transpose(), |t, a| 1.0 / (t * a));
    scale_cols(&scale_rows(&left, k), &right).transpose()
}

pub fn time_reversed_density(model: &MmbmModel) -> Result<TimeReversedForm> {
    let alpha = model.alpha().as_row().clone();
    if alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::NotIrreducible);
    }
    let solvents = solvent_pair(model)?;
    let (k0, k0_star) = k_pair(model, &solvents);
    let theta = model.theta();
    let omega_plus = similarity_image(&k0, &theta, &alpha);
    let omega_minus = similarity_image(&k0_star, &theta, &alpha);

    let b = model.b();
    let m = model.phases();
    let ep = matrix_exponential(&(&omega_plus * b))?;
    let em = matrix_exponential(&(&omega_minus * b))?;
    let a = DMatrix::identity(m, m) - &em * &ep;
    let w = a
        .lu()
        .solve(&DVector::from_element(m, 1.0))
        .ok_or(Error::SingularBlock)?;
    let v_plus = &omega_plus * &w;
    let v_minus = &omega_minus * (&ep * &w);
    Ok(TimeReversedForm {
        omega_plus,
        omega_minus,
        alpha,
        b,
        v_plus,
        v_minus,
    })
}

impl TimeReversedForm {
    /// Conditional density `f(x)`: `[f(x)]_i = d/dx P(level <= x | phase i)`.
    pub fn conditional(&self, x: f64) -> Result<RowDVector<f64>> {
        if !(0.0..=self.b).contains(&x) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: self.b });
        }
        let col = matrix_exponential(&(&self.omega_plus * x))? * &self.v_plus
            + matrix_exponential(&(&self.omega_minus * (self.b - x)))? * &self.v_minus;
        Ok(-col.transpose())
    }

    /// Joint density `f(x) Δα`.
    pub fn joint(&self, x: f64) -> Result<RowDVector<f64>> {
        let f = self.conditional(x)?;
        Ok(f.component_mul(&self.alpha))
    }
}

/// Number of interior points used by [`cross_check`] and the default grids.
pub const GRID_POINTS: usize = 1000;

/// Interior grid `b (k + 1/2) / n`, `k = 0..n`.
pub fn interior_grid(b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| b * (k as f64 + 0.5) / n as f64)
}

/// Largest entrywise gap between the closed-form density and the
/// time-reversed joint density over the default interior grid.
pub fn cross_check(model: &MmbmModel) -> Result<f64> {
    let sol = stationary_density(model)?;
    let tr = time_reversed_density(model)?;
    let mut worst = 0.0f64;
    for x in interior_grid(model.b(), GRID_POINTS) {
        let d = sol.density(x)? - tr.joint(x)?;
        worst = worst.max(d.amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::quadratic_residual;
    use nalgebra::{dmatrix, dvector};

    fn m1(mu: f64) -> MmbmModel {
        MmbmModel::new(dmatrix![0.0], dvector![mu], dvector![1.0], 1.0).unwrap()
    }

    fn m2() -> MmbmModel {
        MmbmModel::new(
            dmatrix![-1.0, 1.0; 1.0, -1.0],
            dvector![1.0, -2.0],
            dvector![1.0, 1.0],
            1.0,
        )
        .unwrap()
    }

    fn m3() -> MmbmModel {
        MmbmModel::new(
            dmatrix![-1.5, 1.0, 0.5; 0.3, -0.8, 0.5; 1.0, 1.0, -2.0],
            dvector![0.7, -1.2, 0.4],
            dvector![0.6, 1.5, 1.1],
            1.7,
        )
        .unwrap()
    }

    fn rbm(x: f64) -> f64 {
        2.0 * libm::exp(-2.0 * x) / (1.0 - libm::exp(-2.0))
    }

    #[test]
    fn scalar_limit_matrices() {
        let lm = limit_matrices(&m1(-1.0)).unwrap();
        let e2 = libm::exp(-2.0);
        let d = 1.0 - e2;
        assert!((lm.k0[(0, 0)] + 2.0).abs() < 1e-13);
        assert!(lm.k0_star[(0, 0)].abs() < 1e-13);
        assert!((lm.p1[(0, 0)] + 2.0 * e2 / d).abs() < 1e-12);
        assert!((lm.p1_tilde[(0, 0)] + 2.0 / d).abs() < 1e-12);
        assert!((lm.l1[(0, 0)] - 2.0 * e2 / d).abs() < 1e-12);
        assert!((lm.l1_tilde[(0, 0)] - 2.0 / d).abs() < 1e-12);
        for r in lm.jg1().row_iter() {
            assert!(r.sum().abs() <= 1e-12);
        }
    }

    #[test]
    fn drift_reversal_swaps_k_pair() {
        let a = limit_matrices(&m1(-1.0)).unwrap();
        let b = limit_matrices(&m1(1.0)).unwrap();
        assert!((&a.k0 - &b.k0_star).amax() < 1e-13);
        assert!((&a.k0_star - &b.k0).amax() < 1e-13);
    }

    #[test]
    fn scalar_nu0() {
        let lm = limit_matrices(&m1(-1.0)).unwrap();
        let nu = nu0(&lm).unwrap();
        let e2 = libm::exp(-2.0);
        assert!((nu[0] - 1.0 / (1.0 + e2)).abs() < 1e-12);
        assert!((nu[1] - e2 / (1.0 + e2)).abs() < 1e-12);
        assert!((nu[0] - 0.880797).abs() < 1e-6);
    }

    #[test]
    fn nu0_residual_and_generator_structure() {
        for model in [m2(), m3()] {
            let lm = limit_matrices(&model).unwrap();
            let nu = nu0(&lm).unwrap();
            assert!((&nu * lm.g1()).amax() <= 1e-11);
            assert!((nu.sum() - 1.0).abs() < 1e-14);
            let jg = lm.jg1();
            for (i, r) in jg.row_iter().enumerate() {
                assert!(r.sum().abs() <= 1e-9);
                for (j, v) in r.iter().enumerate() {
                    if i != j {
                        assert!(*v >= -1e-12);
                    }
                }
            }
            assert!(lm.coupling_radius() < 1.0);
        }
    }

    #[test]
    fn scalar_density_is_reflected_brownian_motion() {
        let sol = stationary_density(&m1(-1.0)).unwrap();
        assert!((sol.density(0.0).unwrap()[0] - 2.313035).abs() < 1e-6);
        assert!((sol.density(1.0).unwrap()[0] - 0.313035).abs() < 1e-6);
        for x in interior_grid(1.0, GRID_POINTS) {
            assert!((sol.density(x).unwrap()[0] - rbm(x)).abs() <= 1e-9);
        }
        let cdf = |x: f64| (1.0 - libm::exp(-2.0 * x)) / (1.0 - libm::exp(-2.0));
        for x in [0.0, 0.3, 0.9, 1.0] {
            assert!((sol.level_cdf(x).unwrap() - cdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_marginals_and_positivity() {
        for model in [m2(), m3()] {
            let sol = stationary_density(&model).unwrap();
            assert!((sol.level_cdf(model.b()).unwrap() - 1.0).abs() < 1e-10);
            assert!((sol.phase_marginals().unwrap() - model.alpha().as_row()).amax() < 1e-8);
            assert_eq!(sol.mass0().sum(), 0.0);
            for x in interior_grid(model.b(), GRID_POINTS) {
                assert!(sol.density(x).unwrap().iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn k0_does_not_depend_on_buffer() {
        let base = m3();
        let ks: std::vec::Vec<_> = [0.5, 1.0, 2.0]
            .iter()
            .map(|b| limit_matrices(&base.with_buffer(*b).unwrap()).unwrap())
            .collect();
        for lm in &ks[1..] {
            assert_eq!(lm.k0, ks[0].k0);
            assert_eq!(lm.k0_star, ks[0].k0_star);
        }
    }

    #[test]
    fn scalar_time_reversed() {
        let tr = time_reversed_density(&m1(-1.0)).unwrap();
        assert!((tr.omega_plus[(0, 0)] + 2.0).abs() < 1e-13);
        assert!(tr.omega_minus[(0, 0)].abs() < 1e-13);
        for x in [0.0, 0.25, 1.0] {
            assert!((tr.conditional(x).unwrap()[0] - rbm(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_plus_solves_reversed_quadratic() {
        // Second oracle: Ω+ solves ½VX² - DX + Δ(1/α) Q^T Δα = 0,
        // Ω- solves ½VX² + DX + Δ(1/α) Q^T Δα = 0.
        for model in [m2(), m3()] {
            let tr = time_reversed_density(&model).unwrap();
            let a = model.alpha().as_row().transpose();
            let inv_a = a.map(|v| 1.0 / v);
            let q_rev = scale_cols(&scale_rows(&inv_a, &model.q().transpose()), &a);
            let v = model.sigma2();
            let r_plus = quadratic_residual(v, &(-model.mu()), &q_rev, &tr.omega_plus);
            let r_minus = quadratic_residual(v, model.mu(), &q_rev, &tr.omega_minus);
            assert!(r_plus.amax() < 1e-10, "{r_plus}");
            assert!(r_minus.amax() < 1e-10, "{r_minus}");
            for om in [&tr.omega_plus, &tr.omega_minus] {
                for i in 0..om.nrows() {
                    for j in 0..om.ncols() {
                        if i != j {
                            assert!(om[(i, j)] >= -1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn representations_agree() {
        assert!(cross_check(&m1(-1.0)).unwrap() <= 1e-10);
        assert!(cross_check(&m1(0.7)).unwrap() <= 1e-10);
        assert!(cross_check(&m2()).unwrap() <= 1e-6);
        assert!(cross_check(&m3()).unwrap() <= 1e-6);
    }

    #[test]
    fn mirror_reflects_density() {
        let model = m3();
        let a = stationary_density(&model).unwrap();
        let b = stationary_density(&model.mirrored()).unwrap();
        for x in [0.0, 0.4, 1.1, 1.7] {
            let da = a.density(x).unwrap();
            let db = b.density(model.b() - x).unwrap();
            assert!((&da - &db).amax() < 1e-10);
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let sol = stationary_density(&m2()).unwrap();
        assert!(matches!(sol.density(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(sol.cdf(1.01), Err(Error::OutOfRange { .. })));
    }
}
