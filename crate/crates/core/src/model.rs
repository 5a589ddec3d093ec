//! Markov-modulated Brownian motion on `[0, b]` and its approximating
//! family of doubled-phase fluid queues.

use alloc::format;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{is_irreducible, stationary_vector, sub};

/// Mean drifts with `|alpha D 1| <= DRIFT_TOL * max|mu|` are rejected.
pub const DRIFT_TOL: f64 = 1e-9;

const GENERATOR_TOL: f64 = 1e-9;

/// Stationary law `alpha` of the phase process.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDistribution(RowDVector<f64>);

impl PhaseDistribution {
    pub fn as_row(&self) -> &RowDVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> RowDVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `alpha D 1` for the drift vector `mu`.
    pub fn mean_of(&self, mu: &DVector<f64>) -> f64 {
        self.0.iter().zip(mu.iter()).map(|(a, m)| a * m).sum()
    }
}

impl core::ops::Index<usize> for PhaseDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_generator(q: &DMatrix<f64>) -> Result<()> {
    let m = q.nrows();
    if q.ncols() != m || m == 0 {
        return Err(Error::DimensionMismatch(format!(
            "generator must be square and nonempty, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("generator"));
    }
    let scale = q.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m {
        for j in 0..m {
            if i != j && q[(i, j)] < 0.0 {
                return Err(Error::NotAGenerator(format!(
                    "negative off-diagonal entry at ({i}, {j})"
                )));
            }
        }
        let s = q.row(i).sum();
        if s.abs() > GENERATOR_TOL * scale {
            return Err(Error::NotAGenerator(format!("row {i} sums to {s:e}")));
        }
    }
    Ok(())
}

/// Stationary distribution of an irreducible generator.
pub fn stationary_phase_distribution(q: &DMatrix<f64>) -> Result<PhaseDistribution> {
    check_generator(q)?;
    if !is_irreducible(q.nrows(), |i, j| q[(i, j)] > 0.0) {
        return Err(Error::NotIrreducible);
    }
    Ok(PhaseDistribution(stationary_vector(q)?))
}

/// A validated two-sided reflected MMBM: generator `Q`, drifts `mu`,
/// variances `sigma2` and buffer height `b`.
///
/// Instances are only produced by [`MmbmModel::new`] and never mutated.
#[derive(Debug, Clone, PartialEq)]
pub struct MmbmModel {
    q: DMatrix<f64>,
    mu: DVector<f64>,
    sigma2: DVector<f64>,
    b: f64,
    alpha: PhaseDistribution,
}

/// Validates raw parameters; same as [`MmbmModel::new`].
pub fn validate_model(q: DMatrix<f64>, mu: DVector<f64>, sigma2: DVector<f64>, b: f64) -> Result<MmbmModel> {
    MmbmModel::new(q, mu, sigma2, b)
}

impl MmbmModel {
    /// Validates the model. Errors name the first violated condition.
    pub fn new(q: DMatrix<f64>, mu: DVector<f64>, sigma2: DVector<f64>, b: f64) -> Result<Self> {
        let m = q.nrows();
        if mu.len() != m || sigma2.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "Q is {m}x{}, mu has {} entries, sigma2 has {}",
                q.ncols(),
                mu.len(),
                sigma2.len()
            )));
        }
        check_generator(&q)?;
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mu"));
        }
        if let Some(i) = sigma2.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::ZeroVariance(i));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::BadBuffer(b));
        }
        let alpha = stationary_phase_distribution(&q)?;
        let drift = alpha.mean_of(&mu);
        let mu_max = mu.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(drift.abs() > DRIFT_TOL * mu_max) {
            return Err(Error::ZeroMeanDrift(drift));
        }
        Ok(Self { q, mu, sigma2, b, alpha })
    }

    pub fn phases(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma2(&self) -> &DVector<f64> {
        &self.sigma2
    }

    /// Standard deviations, the diagonal of `Theta = sqrt(V)`.
    pub fn theta(&self) -> DVector<f64> {
        self.sigma2.map(libm::sqrt)
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn alpha(&self) -> &PhaseDistribution {
        &self.alpha
    }

    /// `alpha D 1`.
    pub fn mean_drift(&self) -> f64 {
        self.alpha.mean_of(&self.mu)
    }

    /// Same dynamics with a different buffer height.
    pub fn with_buffer(&self, b: f64) -> Result<Self> {
        Self::new(self.q.clone(), self.mu.clone(), self.sigma2.clone(), b)
    }

    /// The model seen through `x -> b - x`: drifts change sign.
    pub fn mirrored(&self) -> Self {
        Self {
            mu: -&self.mu,
            ..self.clone()
        }
    }

    /// Largest admissible `eps` for the fluid approximation: `min sigma_i / |mu_i|`.
    pub fn eps_bound(&self) -> f64 {
        self.mu
            .iter()
            .zip(self.sigma2.iter())
            .filter(|(m, _)| **m != 0.0)
            .map(|(m, s)| libm::sqrt(*s) / m.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// A fluid queue with phases ordered so that all positive rates come first.
///
/// Members of the approximating family carry `eps` and the original phase
/// count; the first `m` phases are copy 1 (rates `D + Theta/eps`) and the
/// last `m` are copy 2 (rates `D - Theta/eps`).
#[derive(Debug, Clone, PartialEq)]
pub struct FluidModel {
    t: DMatrix<f64>,
    c: DVector<f64>,
    n_plus: usize,
    eps: Option<f64>,
    alpha: Option<PhaseDistribution>,
}

impl FluidModel {
    /// A general fluid queue from its generator and nonzero rates, positive
    /// rates first.
    pub fn from_parts(t: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if t.nrows() != c.len() {
            return Err(Error::DimensionMismatch(format!(
                "T is {}x{}, C has {} rates",
                t.nrows(),
                t.ncols(),
                c.len()
            )));
        }
        check_generator(&t)?;
        if !is_irreducible(t.nrows(), |i, j| t[(i, j)] > 0.0) {
            return Err(Error::NotIrreducible);
        }
        let n_plus = c.iter().take_while(|v| **v > 0.0).count();
        if n_plus == 0 || n_plus == c.len() || c.iter().skip(n_plus).any(|v| !(*v < 0.0)) {
            return Err(Error::BadRates(
                "rates must be nonzero, positive ones first, with both signs present".into(),
            ));
        }
        Ok(Self { t, c, n_plus, eps: None, alpha: None })
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn n_minus(&self) -> usize {
        self.c.len() - self.n_plus
    }

    pub fn states(&self) -> usize {
        self.c.len()
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    /// `1 / eps^2` for members of the approximating family.
    pub fn lambda(&self) -> Option<f64> {
        self.eps.map(|e| 1.0 / (e * e))
    }

    /// Phase count of the approximated MMBM.
    pub fn base_phases(&self) -> Option<usize> {
        self.eps.map(|_| self.n_plus)
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn t_pp(&self) -> DMatrix<f64> {
        sub(&self.t, 0, 0, self.n_plus, self.n_plus)
    }

    pub fn t_pm(&self) -> DMatrix<f64> {
        sub(&self.t, 0, self.n_plus, self.n_plus, self.n_minus())
    }

    pub fn t_mp(&self) -> DMatrix<f64> {
        sub(&self.t, self.n_plus, 0, self.n_minus(), self.n_plus)
    }

    pub fn t_mm(&self) -> DMatrix<f64> {
        sub(&self.t, self.n_plus, self.n_plus, self.n_minus(), self.n_minus())
    }

    pub fn c_plus(&self) -> DVector<f64> {
        self.c.rows(0, self.n_plus).into_owned()
    }

    pub fn c_minus(&self) -> DVector<f64> {
        self.c.rows(self.n_plus, self.n_minus()).into_owned()
    }

    /// Stationary phase law; `gamma ⊗ alpha` for the approximating family.
    pub fn phase_distribution(&self) -> Result<RowDVector<f64>> {
        match &self.alpha {
            Some(alpha) => {
                let a = alpha.as_row();
                let m = a.len();
                Ok(RowDVector::from_fn(2 * m, |_, j| 0.5 * a[j % m]))
            }
            None => stationary_vector(&self.t),
        }
    }

    /// Stationary mean rate of the level.
    pub fn mean_drift(&self) -> Result<f64> {
        let p = self.phase_distribution()?;
        Ok(p.iter().zip(self.c.iter()).map(|(a, c)| a * c).sum())
    }
}

/// Member of the fluid family approximating `model`, with `lambda = 1/eps^2`:
/// `T = [[Q - lambda I, lambda I], [lambda I, Q - lambda I]]` and
/// `C = diag(D + Theta/eps, D - Theta/eps)`.
pub fn build_fluid_approximation(model: &MmbmModel, eps: f64) -> Result<FluidModel> {
    let bound = model.eps_bound();
    if !(eps.is_finite() && eps > 0.0 && eps < bound) {
        return Err(Error::EpsTooLarge { eps, bound });
    }
    let m = model.phases();
    let lambda = 1.0 / (eps * eps);
    let mut t = DMatrix::zeros(2 * m, 2 * m);
    let shifted = model.q() - DMatrix::identity(m, m) * lambda;
    t.view_mut((0, 0), (m, m)).copy_from(&shifted);
    t.view_mut((m, m), (m, m)).copy_from(&shifted);
    for i in 0..m {
        t[(i, m + i)] = lambda;
        t[(m + i, i)] = lambda;
    }
    let theta = model.theta();
    let c = DVector::from_fn(2 * m, |k, _| {
        let i = k % m;
        let spread = theta[i] / eps;
        if k < m {
            model.mu()[i] + spread
        } else {
            model.mu()[i] - spread
        }
    });
    if c.iter().take(m).any(|v| !(*v > 0.0)) || c.iter().skip(m).any(|v| !(*v < 0.0)) {
        return Err(Error::EpsTooLarge { eps, bound });
    }
    Ok(FluidModel {
        t,
        c,
        n_plus: m,
        eps: Some(eps),
        alpha: Some(model.alpha().clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn m2() -> MmbmModel {
        MmbmModel::new(
            dmatrix![-1.0, 1.0; 1.0, -1.0],
            dvector![1.0, -2.0],
            dvector![1.0, 1.0],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn validate_examples() {
        let m1 = MmbmModel::new(dmatrix![0.0], dvector![-1.0], dvector![1.0], 1.0).unwrap();
        assert_eq!(m1.mean_drift(), -1.0);
        let m = m2();
        assert!((m.alpha()[0] - 0.5).abs() < 1e-15);
        assert!((m.mean_drift() + 0.5).abs() < 1e-15);
        let e = MmbmModel::new(
            dmatrix![-1.0, 1.0; 1.0, -1.0],
            dvector![1.0, -1.0],
            dvector![1.0, 1.0],
            1.0,
        );
        assert!(matches!(e, Err(Error::ZeroMeanDrift(_))));
    }

    #[test]
    fn validate_errors() {
        let q = dmatrix![-1.0, 1.0; 1.0, -1.0];
        let bad_q = dmatrix![-1.0, 2.0; 1.0, -1.0];
        let neg_q = dmatrix![1.0, -1.0; 1.0, -1.0];
        let red_q = dmatrix![-1.0, 1.0; 0.0, 0.0];
        let mu = dvector![1.0, -2.0];
        let s = dvector![1.0, 1.0];
        assert_eq!(
            MmbmModel::new(bad_q, mu.clone(), s.clone(), 1.0).unwrap_err().code(),
            "NotAGenerator"
        );
        assert_eq!(
            MmbmModel::new(neg_q, mu.clone(), s.clone(), 1.0).unwrap_err().code(),
            "NotAGenerator"
        );
        assert_eq!(
            MmbmModel::new(red_q, mu.clone(), s.clone(), 1.0).unwrap_err(),
            Error::NotIrreducible
        );
        assert_eq!(
            MmbmModel::new(q.clone(), mu.clone(), dvector![1.0, 0.0], 1.0).unwrap_err(),
            Error::ZeroVariance(1)
        );
        assert_eq!(
            MmbmModel::new(q.clone(), mu.clone(), s.clone(), 0.0).unwrap_err(),
            Error::BadBuffer(0.0)
        );
        assert_eq!(
            MmbmModel::new(q.clone(), mu.clone(), s.clone(), f64::INFINITY).unwrap_err().code(),
            "BadBuffer"
        );
        assert_eq!(
            MmbmModel::new(q, dvector![1.0], s, 1.0).unwrap_err().code(),
            "DimensionMismatch"
        );
    }

    #[test]
    fn stationary_phase_examples() {
        let (a, c) = (0.7, 0.2);
        let al = stationary_phase_distribution(&dmatrix![-a, a; c, -c]).unwrap();
        assert!((al[0] - c / (a + c)).abs() < 1e-15 && (al[1] - a / (a + c)).abs() < 1e-15);
        let al = stationary_phase_distribution(&dmatrix![-1.0, 1.0; 1.0, -1.0]).unwrap();
        assert_eq!(al.as_row().as_slice(), &[0.5, 0.5]);
        let al = stationary_phase_distribution(&dmatrix![0.0]).unwrap();
        assert_eq!(al[0], 1.0);
    }

    #[test]
    fn fluid_scalar_example() {
        let m1 = MmbmModel::new(dmatrix![0.0], dvector![-1.0], dvector![1.0], 1.0).unwrap();
        let f = build_fluid_approximation(&m1, 0.1).unwrap();
        let t = f.t();
        assert!((t[(0, 0)] + 100.0).abs() < 1e-12 && (t[(0, 1)] - 100.0).abs() < 1e-12);
        assert!((t[(1, 0)] - 100.0).abs() < 1e-12 && (t[(1, 1)] + 100.0).abs() < 1e-12);
        assert!((f.c()[0] - 9.0).abs() < 1e-12 && (f.c()[1] + 11.0).abs() < 1e-12);
        assert_eq!(f.lambda().map(|l| (l - 100.0).abs() < 1e-9), Some(true));
    }

    #[test]
    fn fluid_eps_too_large() {
        let m1 = MmbmModel::new(dmatrix![0.0], dvector![-1.0], dvector![1.0], 1.0).unwrap();
        assert!(matches!(
            build_fluid_approximation(&m1, 1.5),
            Err(Error::EpsTooLarge { .. })
        ));
        assert!(build_fluid_approximation(&m1, -0.1).is_err());
    }

    #[test]
    fn fluid_mean_drift_is_preserved() {
        let m = m2();
        for eps in [0.3, 0.1, 0.01] {
            let f = build_fluid_approximation(&m, eps).unwrap();
            assert!((f.mean_drift().unwrap() - m.mean_drift()).abs() < 1e-12);
            for i in 0..4 {
                assert_eq!(f.t().row(i).sum(), 0.0);
            }
        }
    }

    #[test]
    fn from_parts_requires_sign_partition() {
        assert!(FluidModel::from_parts(dmatrix![-1.0, 1.0; 1.0, -1.0], dvector![-1.0, 1.0]).is_err());
        assert!(FluidModel::from_parts(dmatrix![-1.0, 1.0; 1.0, -1.0], dvector![1.0, 1.0]).is_err());
        let f = FluidModel::from_parts(dmatrix![-1.0, 1.0; 2.0, -2.0], dvector![1.0, -1.0]).unwrap();
        assert_eq!((f.n_plus(), f.n_minus()), (1, 1));
    }
}
