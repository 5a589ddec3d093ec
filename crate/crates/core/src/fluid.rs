//! Stationary distribution of a finite-buffer fluid queue on `[0, b]` with
//! general (not unit) rates.
//!
//! Two routes are provided. [`finite_buffer_solution`] goes through the
//! censored chain at the boundaries: `nu` is the stationary vector of `H`,
//! masses are `c nu G(b) diag(-T++^-1, -T--^-1)` and the density coefficient
//! is `c nu N^-1`. [`alt_solution`] solves the boundary balance equations
//! `(p+(b), p-(0)) W = 0` directly. Both share the first-return matrices and
//! the two-sided exit matrix `G(b)`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg::{
    block2, block_diag, condition_one, expm_integral, inverse, matrix_exponential, ones_row,
    scale_cols, scale_rows, solve_riccati_min_nonneg, solve_right, stationary_vector, sub,
    warn_if_ill_conditioned, Direction,
};
use crate::model::FluidModel;

/// First-return matrices and the generators built from them.
///
/// `psi` is `n+ x n-`, `psi_star` is `n- x n+`; `u` and `k_star` act on the
/// minus phases, `u_star` and `k` on the plus phases.
#[derive(Debug, Clone)]
pub struct FirstPassageSet {
    pub psi: DMatrix<f64>,
    pub psi_star: DMatrix<f64>,
    /// `|C-|^-1 T-- + |C-|^-1 T-+ Psi`
    pub u: DMatrix<f64>,
    /// `C+^-1 T++ + C+^-1 T+- Psi*`
    pub u_star: DMatrix<f64>,
    /// `C+^-1 T++ + Psi |C-|^-1 T-+`
    pub k: DMatrix<f64>,
    /// `|C-|^-1 T-- + Psi* C+^-1 T+-`
    pub k_star: DMatrix<f64>,
}

/// Computes `Psi`, `Psi*` and `U, U*, K, K*` for a fluid queue.
pub fn first_passage_set(fluid: &FluidModel) -> Result<FirstPassageSet> {
    let psi = solve_riccati_min_nonneg(fluid, Direction::Down)?;
    let psi_star = solve_riccati_min_nonneg(fluid, Direction::Up)?;
    let inv_cp = fluid.c_plus().map(|v| 1.0 / v);
    let inv_cm = fluid.c_minus().map(|v| 1.0 / v.abs());
    let pp = scale_rows(&inv_cp, &fluid.t_pp());
    let pm = scale_rows(&inv_cp, &fluid.t_pm());
    let mp = scale_rows(&inv_cm, &fluid.t_mp());
    let mm = scale_rows(&inv_cm, &fluid.t_mm());
    Ok(FirstPassageSet {
        u: &mm + &mp * &psi,
        u_star: &pp + &pm * &psi_star,
        k: &pp + &psi * &mp,
        k_star: &mm + &psi_star * &pm,
        psi,
        psi_star,
    })
}

/// Two-sided exit probabilities of the fluid started at a boundary.
///
/// `lpp[i][j]`: from level 0 in plus phase `i`, reach `b` before returning
/// to 0, in phase `j`. `ppm`: from 0, return to 0 first. `pmp`: from `b` in a
/// minus phase, return to `b` first. `lmm`: from `b`, reach 0 first.
#[derive(Debug, Clone)]
pub struct GbMatrix {
    pub lpp: DMatrix<f64>,
    pub ppm: DMatrix<f64>,
    pub pmp: DMatrix<f64>,
    pub lmm: DMatrix<f64>,
}

impl GbMatrix {
    pub fn full(&self) -> DMatrix<f64> {
        block2(&self.lpp, &self.ppm, &self.pmp, &self.lmm)
    }
}

/// Solves `G(b) [[I, Psi e^{Ub}], [Psi* e^{U*b}, I]] = [[e^{U*b}, Psi], [Psi*, e^{Ub}]]`.
pub fn solve_gb(fp: &FirstPassageSet, b: f64) -> Result<GbMatrix> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::BadBuffer(b));
    }
    let np = fp.psi.nrows();
    let nm = fp.psi.ncols();
    let eu = matrix_exponential(&(&fp.u * b))?;
    let eus = matrix_exponential(&(&fp.u_star * b))?;
    let lhs = block2(
        &DMatrix::identity(np, np),
        &(&fp.psi * &eu),
        &(&fp.psi_star * &eus),
        &DMatrix::identity(nm, nm),
    );
    let rhs = block2(&eus, &fp.psi, &fp.psi_star, &eu);
    let g = solve_right(&rhs, &lhs, "G(b) system")?;
    Ok(GbMatrix {
        lpp: sub(&g, 0, 0, np, np),
        ppm: sub(&g, 0, np, np, nm),
        pmp: sub(&g, np, 0, nm, np),
        lmm: sub(&g, np, np, nm, nm),
    })
}

/// `diag(-T++^-1, -T--^-1)`: expected sojourn in each sign class.
fn sojourn_matrix(fluid: &FluidModel) -> Result<DMatrix<f64>> {
    let ip = inverse(&(-fluid.t_pp()), "T++")?;
    let im = inverse(&(-fluid.t_mm()), "T--")?;
    Ok(block_diag(&ip, &im))
}

/// `[[0, T+-], [T-+, 0]]`.
fn switching_matrix(fluid: &FluidModel) -> DMatrix<f64> {
    let (np, nm) = (fluid.n_plus(), fluid.n_minus());
    block2(
        &DMatrix::zeros(np, np),
        &fluid.t_pm(),
        &fluid.t_mp(),
        &DMatrix::zeros(nm, nm),
    )
}

/// `H = G(b) diag(-T++^-1, -T--^-1) [[0, T+-], [T-+, 0]]`.
pub fn censored_matrix(gb: &GbMatrix, fluid: &FluidModel) -> Result<DMatrix<f64>> {
    Ok(gb.full() * sojourn_matrix(fluid)? * switching_matrix(fluid))
}

/// Stationary vector of the boundary-censored chain `H`.
pub fn censored_nu(gb: &GbMatrix, fluid: &FluidModel) -> Result<RowDVector<f64>> {
    stationary_vector(&censored_matrix(gb, fluid)?)
}

/// Which formula produced a [`FiniteBufferSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Stationary vector of the censored chain, then normalization.
    CensoredChain,
    /// Null vector of the boundary balance matrix `W`.
    BoundaryBalance,
}

/// Stationary law of the finite-buffer fluid: density on `(0, b)` and
/// probability masses at the two boundaries.
#[derive(Debug, Clone)]
pub struct FiniteBufferSolution {
    pub route: Route,
    pub fluid: FluidModel,
    pub b: f64,
    pub fp: FirstPassageSet,
    pub gb: GbMatrix,
    /// Censored-chain vector; absent on the boundary-balance route.
    pub nu: Option<RowDVector<f64>>,
    /// Density coefficient row vector (`c nu N^-1`).
    pub y: RowDVector<f64>,
    pub n_inv: DMatrix<f64>,
    /// Normalizing constant (`c`); on the boundary-balance route, the scale
    /// applied to the unit-sum null vector.
    pub c: f64,
    /// Mass at level 0, indexed by minus phase.
    pub p0_minus: RowDVector<f64>,
    /// Mass at level `b`, indexed by plus phase.
    pub pb_plus: RowDVector<f64>,
    pub cond_n: f64,
    // [[C+^-1, Psi |C-|^-1], [Psi* C+^-1, |C-|^-1]]
    right: DMatrix<f64>,
}

/// Density at one level, over all fluid phases and summed over copies.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidDensity {
    pub full: RowDVector<f64>,
    pub collapsed: Option<RowDVector<f64>>,
}

struct Shared {
    fp: FirstPassageSet,
    gb: GbMatrix,
    n: DMatrix<f64>,
    n_inv: DMatrix<f64>,
    right: DMatrix<f64>,
    // ∫_0^b blockdiag(e^{Kx}, e^{K*(b-x)}) dx · right · 1
    integral_weights: DVector<f64>,
}

fn shared(fluid: &FluidModel, b: f64) -> Result<Shared> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::BadBuffer(b));
    }
    // A driftless fluid makes the G(b) system singular (Psi, Psi* both
    // stochastic with U, U* conservative).
    let drift = fluid.mean_drift()?;
    let scale = fluid.c().amax().max(f64::MIN_POSITIVE);
    if !(drift.abs() > 1e-9 * scale) {
        return Err(Error::SingularSystem("G(b) system: fluid has zero mean drift"));
    }
    let fp = first_passage_set(fluid)?;
    let gb = solve_gb(&fp, b)?;
    let (np, nm) = (fluid.n_plus(), fluid.n_minus());
    let ek = matrix_exponential(&(&fp.k * b))?;
    let eks = matrix_exponential(&(&fp.k_star * b))?;
    let n = block2(
        &DMatrix::identity(np, np),
        &(&ek * &fp.psi),
        &(&eks * &fp.psi_star),
        &DMatrix::identity(nm, nm),
    );
    let n_inv = inverse(&n, "N").map_err(|_| Error::SingularN)?;
    let inv_cp = fluid.c_plus().map(|v| 1.0 / v);
    let inv_cm = fluid.c_minus().map(|v| 1.0 / v.abs());
    let right = block2(
        &DMatrix::from_diagonal(&inv_cp),
        &scale_cols(&fp.psi, &inv_cm),
        &scale_cols(&fp.psi_star, &inv_cp),
        &DMatrix::from_diagonal(&inv_cm),
    );
    let ik = expm_integral(&fp.k, b)?;
    let iks = expm_integral(&fp.k_star, b)?;
    let integral_weights = block_diag(&ik, &iks) * &right * DVector::from_element(np + nm, 1.0);
    Ok(Shared {
        fp,
        gb,
        n,
        n_inv,
        right,
        integral_weights,
    })
}

/// Stationary law through the censored boundary chain.
pub fn finite_buffer_solution(fluid: &FluidModel, b: f64) -> Result<FiniteBufferSolution> {
    let s = shared(fluid, b)?;
    let np = fluid.n_plus();
    let nu = censored_nu(&s.gb, fluid)?;
    let masses = &nu * s.gb.full() * sojourn_matrix(fluid)?;
    let coeff = &nu * &s.n_inv;
    let total = masses.sum() + (&coeff * &s.integral_weights)[0];
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::SingularSystem("normalization"));
    }
    let c = 1.0 / total;
    finish(fluid, b, s, Route::CensoredChain, Some(nu), coeff * c, masses * c, c, np)
}

/// `W = diag(T++, T--) + [[0, T+-], [T-+, 0]] G(b)`.
pub fn boundary_balance_matrix(fluid: &FluidModel, gb: &GbMatrix) -> DMatrix<f64> {
    block_diag(&fluid.t_pp(), &fluid.t_mm()) + switching_matrix(fluid) * gb.full()
}

/// Relative threshold on singular values of `W` for a one-dimensional left
/// null space.
const NULL_GAP: f64 = 1e-9;

/// Singular values of `W`, ascending.
pub fn boundary_balance_singular_values(fluid: &FluidModel, gb: &GbMatrix) -> DVector<f64> {
    let w = boundary_balance_matrix(fluid, gb);
    let mut sv: alloc::vec::Vec<f64> = w.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(sv)
}

/// Stationary law by solving the boundary balance equations directly.
pub fn alt_solution(fluid: &FluidModel, b: f64) -> Result<FiniteBufferSolution> {
    let s = shared(fluid, b)?;
    let np = fluid.n_plus();
    let n = fluid.states();
    let w = boundary_balance_matrix(fluid, &s.gb);

    // The singular values decide the rank. W has zero row sums and
    // nonnegative off-diagonals, so the null vector itself comes from GTH;
    // the SVD's singular vectors are far less accurate than its values.
    let sv = boundary_balance_singular_values(fluid, &s.gb);
    let smax = sv[n - 1];
    if !(sv[0] <= NULL_GAP * smax) || (n > 1 && !(sv[1] > NULL_GAP * smax)) {
        return Err(Error::SingularSystem("W null space is not one-dimensional"));
    }
    let p = stationary_vector(&w).map_err(|_| Error::SingularSystem("W null space"))?;
    let y = &p * switching_matrix(fluid) * &s.n_inv;
    let total = p.sum() + (&y * &s.integral_weights)[0];
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::SingularSystem("normalization"));
    }
    let c = 1.0 / total;
    finish(fluid, b, s, Route::BoundaryBalance, None, y * c, p * c, c, np)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    fluid: &FluidModel,
    b: f64,
    s: Shared,
    route: Route,
    nu: Option<RowDVector<f64>>,
    y: RowDVector<f64>,
    masses: RowDVector<f64>,
    c: f64,
    np: usize,
) -> Result<FiniteBufferSolution> {
    let nm = masses.len() - np;
    let cond_n = condition_one(&s.n, &s.n_inv);
    warn_if_ill_conditioned(cond_n, "N");
    Ok(FiniteBufferSolution {
        route,
        fluid: fluid.clone(),
        b,
        fp: s.fp,
        gb: s.gb,
        nu,
        y,
        n_inv: s.n_inv,
        c,
        pb_plus: masses.columns(0, np).into_owned(),
        p0_minus: masses.columns(np, nm).into_owned(),
        cond_n,
        right: s.right,
    })
}

impl FiniteBufferSolution {
    fn kernel(&self, x: f64) -> Result<DMatrix<f64>> {
        let ek = matrix_exponential(&(&self.fp.k * x))?;
        let eks = matrix_exponential(&(&self.fp.k_star * (self.b - x)))?;
        Ok(block_diag(&ek, &eks))
    }

    fn collapse(&self, v: &RowDVector<f64>) -> Option<RowDVector<f64>> {
        let m = self.fluid.base_phases()?;
        Some(RowDVector::from_fn(m, |_, i| v[i] + v[m + i]))
    }

    /// Density over all `n+ + n-` phases at `0 < x < b`, plus its sum over
    /// the two copies when the fluid approximates an MMBM.
    pub fn density_at(&self, x: f64) -> Result<FluidDensity> {
        if !(x > 0.0 && x < self.b) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: self.b });
        }
        let full = &self.y * self.kernel(x)? * &self.right;
        let collapsed = self.collapse(&full);
        Ok(FluidDensity { full, collapsed })
    }

    /// Boundary masses over all phases: `p(0)` (zero on plus phases) and
    /// `p(b)` (zero on minus phases).
    pub fn boundary_masses(&self) -> (RowDVector<f64>, RowDVector<f64>) {
        let np = self.fluid.n_plus();
        let n = self.fluid.states();
        let mut p0 = RowDVector::zeros(n);
        let mut pb = RowDVector::zeros(n);
        p0.columns_mut(np, n - np).copy_from(&self.p0_minus);
        pb.columns_mut(0, np).copy_from(&self.pb_plus);
        (p0, pb)
    }

    /// Joint CDF `P(level <= x, phase)` over all phases, `0 <= x <= b`.
    pub fn cdf_full(&self, x: f64) -> Result<RowDVector<f64>> {
        if !(0.0..=self.b).contains(&x) {
            return Err(Error::OutOfRange { x, lo: 0.0, hi: self.b });
        }
        let (p0, pb) = self.boundary_masses();
        let mut out = p0;
        if x > 0.0 {
            let ik = expm_integral(&self.fp.k, x)?;
            // ∫_0^x e^{K*(b-u)} du = e^{K*(b-x)} ∫_0^x e^{K* w} dw
            let iks = matrix_exponential(&(&self.fp.k_star * (self.b - x)))?
                * expm_integral(&self.fp.k_star, x)?;
            out += &self.y * block_diag(&ik, &iks) * &self.right;
        }
        if x >= self.b {
            out += pb;
        }
        Ok(out)
    }

    /// CDF summed over copies, per original phase.
    pub fn cdf_collapsed(&self, x: f64) -> Result<RowDVector<f64>> {
        let full = self.cdf_full(x)?;
        self.collapse(&full)
            .ok_or_else(|| Error::InvalidConfig("fluid does not approximate an MMBM".into()))
    }

    /// Mass at 0 per original phase.
    pub fn mass0_collapsed(&self) -> Option<RowDVector<f64>> {
        self.fluid.base_phases().map(|_| self.p0_minus.clone())
    }

    /// Mass at `b` per original phase.
    pub fn massb_collapsed(&self) -> Option<RowDVector<f64>> {
        self.fluid.base_phases().map(|_| self.pb_plus.clone())
    }

    /// Boundary masses plus the closed-form integral of the density.
    pub fn total_mass(&self) -> Result<f64> {
        let n = self.fluid.states();
        let ik = expm_integral(&self.fp.k, self.b)?;
        let iks = expm_integral(&self.fp.k_star, self.b)?;
        let integral = (&self.y * block_diag(&ik, &iks) * &self.right * ones_row(n).transpose())[0];
        Ok(self.p0_minus.sum() + self.pb_plus.sum() + integral)
    }
}
