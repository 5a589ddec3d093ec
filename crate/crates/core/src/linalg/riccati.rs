use nalgebra::DMatrix;

use super::{check_finite, norm_inf, scale_rows, SylvesterSolver};
use crate::error::{Error, Result};
use crate::model::FluidModel;

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 200;
const FIXED_POINT_MAX_ITER: usize = 100_000;

/// Which first-return matrix of a fluid queue to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `Psi`: return to the initial level from above.
    Down,
    /// `Psi*`: return to the initial level from below.
    Up,
}

/// Nonsymmetric algebraic Riccati equation `B + A X + X D + X C X = 0`.
#[derive(Debug, Clone)]
pub struct RiccatiEquation {
    pub b: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl RiccatiEquation {
    /// The equation for `Psi` (down) or `Psi*` (up) of a fluid queue.
    pub fn for_fluid(fluid: &FluidModel, direction: Direction) -> Self {
        let inv_cp = fluid.c_plus().map(|v| 1.0 / v);
        let inv_cm = fluid.c_minus().map(|v| 1.0 / v.abs());
        let pp = scale_rows(&inv_cp, &fluid.t_pp());
        let pm = scale_rows(&inv_cp, &fluid.t_pm());
        let mp = scale_rows(&inv_cm, &fluid.t_mp());
        let mm = scale_rows(&inv_cm, &fluid.t_mm());
        match direction {
            Direction::Down => Self { b: pm, a: pp, d: mm, c: mp },
            Direction::Up => Self { b: mp, a: mm, d: pp, c: pm },
        }
    }

    pub fn residual(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.b + &self.a * x + x * &self.d + x * &self.c * x
    }

    fn scale(&self) -> f64 {
        norm_inf(&self.b) + norm_inf(&self.a) + norm_inf(&self.d) + norm_inf(&self.c)
    }

    /// Newton's method from zero; converges monotonically to the minimal
    /// nonnegative solution. Falls back to the fixed-point iteration.
    pub fn solve_minimal(&self) -> Result<DMatrix<f64>> {
        match self.newton() {
            Ok(x) => Ok(x),
            Err(e) => {
                log::warn!("NewtonFallback: Newton iteration failed ({e}); using fixed-point iteration");
                self.fixed_point(NEWTON_TOL, FIXED_POINT_MAX_ITER)
            }
        }
    }

    pub fn newton(&self) -> Result<DMatrix<f64>> {
        let scale = self.scale().max(f64::MIN_POSITIVE);
        let mut x = DMatrix::zeros(self.b.nrows(), self.b.ncols());
        let mut res = self.residual(&x);
        for it in 0..NEWTON_MAX_ITER {
            let r = norm_inf(&res);
            if r <= NEWTON_TOL * scale {
                return Ok(x);
            }
            let solver = SylvesterSolver::new(&(&self.a + &x * &self.c), &(&self.d + &self.c * &x));
            let h = solver.solve(&(-&res)).map_err(|_| Error::NoConvergence {
                iterations: it,
                residual: r,
            })?;
            x += &h;
            check_finite(&x, "Riccati iterate").map_err(|_| Error::NoConvergence {
                iterations: it,
                residual: f64::INFINITY,
            })?;
            res = self.residual(&x);
            // Near a double root the residual stalls at rounding level.
            if norm_inf(&h) <= 1e-15 * (1.0 + norm_inf(&x)) {
                let r = norm_inf(&res);
                return if r <= 1e-10 * scale {
                    Ok(x)
                } else {
                    Err(Error::NoConvergence { iterations: it + 1, residual: r })
                };
            }
        }
        Err(Error::NoConvergence {
            iterations: NEWTON_MAX_ITER,
            residual: norm_inf(&res),
        })
    }

    /// `A X_{k+1} + X_{k+1} D = -B - X_k C X_k` from `X_0 = 0`.
    pub fn fixed_point(&self, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
        let scale = self.scale().max(f64::MIN_POSITIVE);
        let solver = SylvesterSolver::new(&self.a, &self.d);
        let mut x = DMatrix::zeros(self.b.nrows(), self.b.ncols());
        for it in 0..max_iter {
            let next = solver.solve(&(-&self.b - &x * &self.c * &x))?;
            let step = norm_inf(&(&next - &x));
            x = next;
            if step <= tol * (1.0 + norm_inf(&x)) {
                let r = norm_inf(&self.residual(&x));
                if r <= 1e-10 * scale {
                    return Ok(x);
                }
                return Err(Error::NoConvergence { iterations: it + 1, residual: r });
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: norm_inf(&self.residual(&x)),
        })
    }
}

/// Minimal nonnegative solution of the fluid Riccati equation: `Psi` for
/// [`Direction::Down`], `Psi*` for [`Direction::Up`].
pub fn solve_riccati_min_nonneg(fluid: &FluidModel, direction: Direction) -> Result<DMatrix<f64>> {
    RiccatiEquation::for_fluid(fluid, direction).solve_minimal()
}

/// Plain fixed-point iteration from zero, kept as the minimality oracle.
pub fn fixed_point_riccati(
    fluid: &FluidModel,
    direction: Direction,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    RiccatiEquation::for_fluid(fluid, direction).fixed_point(tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn fluid(t: DMatrix<f64>, c: [f64; 2]) -> FluidModel {
        FluidModel::from_parts(t, dvector![c[0], c[1]]).unwrap()
    }

    #[test]
    fn scalar_transient_root() {
        // 2 psi^2 - 3 psi + 1 = 0, minimal root 1/2.
        let f = fluid(dmatrix![-1.0, 1.0; 2.0, -2.0], [1.0, -1.0]);
        let psi = solve_riccati_min_nonneg(&f, Direction::Down).unwrap();
        assert!((psi[(0, 0)] - 0.5).abs() < 1e-14);
        let psi_star = solve_riccati_min_nonneg(&f, Direction::Up).unwrap();
        assert!((psi_star[(0, 0)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn scalar_stochastic_root() {
        // roots {1, 2}, minimal 1
        let f = fluid(dmatrix![-2.0, 2.0; 1.0, -1.0], [1.0, -1.0]);
        let psi = solve_riccati_min_nonneg(&f, Direction::Down).unwrap();
        assert!((psi[(0, 0)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn scalar_double_root() {
        // (psi - 1)^2 = 0: convergence is linear, accuracy ~ sqrt(eps).
        let f = fluid(dmatrix![-1.0, 1.0; 1.0, -1.0], [1.0, -1.0]);
        let psi = solve_riccati_min_nonneg(&f, Direction::Down).unwrap();
        assert!((psi[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(psi[(0, 0)] <= 1.0);
    }

    #[test]
    fn newton_matches_fixed_point() {
        let f = fluid(dmatrix![-1.0, 1.0; 2.0, -2.0], [1.0, -1.0]);
        let eq = RiccatiEquation::for_fluid(&f, Direction::Down);
        let n = eq.newton().unwrap();
        let fp = eq.fixed_point(1e-15, 10_000).unwrap();
        assert!((n[(0, 0)] - fp[(0, 0)]).abs() < 1e-12);
    }
}
