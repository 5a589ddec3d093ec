//! Independent oracles and convergence studies.
//!
//! * [`discretization_oracle`]: a birth-death CTMC on an `n`-cell grid per
//!   phase, solved by linear level reduction (block-tridiagonal, O(n m³)).
//! * [`lambda_sweep`]: sup-CDF distance between the fluid family and the
//!   limit as ε shrinks, with a log-log slope.
//! * [`expansion_check`]: residuals of the small-ε expansions of the
//!   first-passage matrices and of `G(b)`.
//! * [`random_model_set`]: reproducible random models for property checks.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fluid::{finite_buffer_solution, first_passage_set, solve_gb};
use crate::limit::{interior_grid, limit_matrices, stationary_density, GRID_POINTS};
use crate::linalg::{block2, inverse, norm_inf, scale_cols, scale_rows, stationary_vector, solvent_pair};
use crate::model::{build_fluid_approximation, MmbmModel};

/// Per-phase density on the cell centres `(k + 1/2) h`, `h = b / n`.
#[derive(Debug, Clone)]
pub struct DiscretizedDensity {
    pub h: f64,
    /// `n x m`, row `k` is the density at cell centre `k`.
    pub density: DMatrix<f64>,
}

impl DiscretizedDensity {
    pub fn cells(&self) -> usize {
        self.density.nrows()
    }

    pub fn centre(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }

    /// Total probability (cell masses summed); 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.density.sum() * self.h
    }
}

/// Stationary law of the CTMC that moves between neighbouring cells of
/// width `h = b/n` at rates `σ²/(2h²) ± μ/(2h)` within each phase and
/// switches phase according to `Q`. The end cells reflect.
pub fn discretization_oracle(model: &MmbmModel, n: usize) -> Result<DiscretizedDensity> {
    if n < 50 {
        return Err(Error::InvalidConfig("discretization needs at least 50 cells".into()));
    }
    let m = model.phases();
    let h = model.b() / n as f64;
    let mu = model.mu();
    let s2 = model.sigma2();
    let worst = (0..m).map(|i| libm::fabs(mu[i]) * h / s2[i]).fold(0.0, f64::max);
    if worst >= 1.0 {
        // Smallest n with |μ| h / σ² < 1 in every phase.
        let need = (0..m)
            .map(|i| libm::floor(libm::fabs(mu[i]) * model.b() / s2[i]) as usize + 1)
            .max()
            .unwrap_or(n);
        return Err(Error::NegativeRate { cells: need });
    }
    let up = DVector::from_fn(m, |i, _| s2[i] / (2.0 * h * h) + mu[i] / (2.0 * h));
    let down = DVector::from_fn(m, |i, _| s2[i] / (2.0 * h * h) - mu[i] / (2.0 * h));
    let local = |k: usize| {
        let mut l = model.q().clone();
        for i in 0..m {
            let mut out = 0.0;
            if k + 1 < n {
                out += up[i];
            }
            if k > 0 {
                out += down[i];
            }
            l[(i, i)] -= out;
        }
        l
    };

    // Censor onto ever higher levels: M_k = L_k + D (-M_{k-1})^{-1} U.
    // The factors R_k = D (-M_{k-1})^{-1} give pi_{k-1} = pi_k R_k.
    let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut mk = local(0);
    for k in 1..n {
        let inv = inverse(&(-&mk), "level reduction")?;
        let r = scale_rows(&down, &inv);
        mk = local(k) + scale_cols(&r, &up);
        factors.push(r);
    }
    let top = stationary_vector(&mk)?;
    let mut levels: Vec<RowDVector<f64>> = Vec::with_capacity(n);
    levels.push(top);
    for r in factors.iter().rev() {
        let next = levels.last().unwrap() * r;
        levels.push(next);
    }
    levels.reverse();
    let total: f64 = levels.iter().map(|v| v.sum()).sum();
    let density = DMatrix::from_fn(n, m, |k, i| levels[k][i] / (total * h));
    Ok(DiscretizedDensity { h, density })
}

/// One ε of a [`SweepReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub eps: f64,
    /// Sup over levels and phases of the joint-CDF gap, fluid atoms included.
    pub distance: f64,
    pub mass0: f64,
    pub massb: f64,
    pub cond_n: f64,
    /// `‖K_ε - K0‖∞`.
    pub k_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Sorted by strictly decreasing ε.
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `ln distance` on `ln ε` over the last three
    /// points; `None` with fewer than two points.
    pub slope: Option<f64>,
    /// The input list was not already in decreasing order.
    pub resorted: bool,
}

impl SweepReport {
    /// Whether each distance is at most `(1 + tol)` times the previous one.
    pub fn monotone(&self, tol: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].distance <= (1.0 + tol) * w[0].distance)
    }

    /// Successive ratios of total boundary mass.
    pub fn mass_ratios(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].mass0 + w[1].massb) / (w[0].mass0 + w[0].massb))
            .collect()
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Sorts, deduplicates and validates an ε list; reports whether it was
/// reordered.
pub fn normalize_eps_list(eps: &[f64]) -> Result<(Vec<f64>, bool)> {
    if eps.is_empty() {
        return Err(Error::InvalidConfig("empty eps list".into()));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidConfig("eps values must be positive".into()));
    }
    let resorted = eps.windows(2).any(|w| !(w[0] > w[1]));
    let mut v = eps.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    Ok((v, resorted))
}

/// Distance between the fluid family and its limit for each ε.
pub fn lambda_sweep(model: &MmbmModel, eps_list: &[f64]) -> Result<SweepReport> {
    let (eps_list, resorted) = normalize_eps_list(eps_list)?;
    if resorted {
        log::warn!("UnsortedEpsList: eps list was not in decreasing order; sorted");
    }
    let limit = stationary_density(model)?;
    let b = model.b();
    let mut xs: Vec<f64> = Vec::with_capacity(GRID_POINTS + 2);
    xs.push(0.0);
    xs.extend(interior_grid(b, GRID_POINTS));
    xs.push(b);
    let limit_cdf: Vec<RowDVector<f64>> = xs.iter().map(|x| limit.cdf(*x)).collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(eps_list.len());
    for eps in eps_list {
        let fluid = build_fluid_approximation(model, eps)?;
        let sol = finite_buffer_solution(&fluid, b)?;
        let top = sol.massb_collapsed().unwrap_or_else(|| RowDVector::zeros(model.phases()));
        let mut distance = 0.0f64;
        for (x, lc) in xs.iter().zip(&limit_cdf) {
            let mut fc = sol.cdf_collapsed(*x)?;
            if *x == b {
                // Left limit at b: the limit law has no atom there.
                fc -= &top;
            }
            distance = distance.max((fc - lc).amax());
        }
        points.push(SweepPoint {
            eps,
            distance,
            mass0: sol.p0_minus.sum(),
            massb: sol.pb_plus.sum(),
            cond_n: sol.cond_n,
            k_error: norm_inf(&(&sol.fp.k - &limit.lm.k0)),
        });
    }
    let tail = &points[points.len().saturating_sub(3)..];
    let lx: Vec<f64> = tail.iter().map(|p| libm::log(p.eps)).collect();
    let ly: Vec<f64> = tail.iter().map(|p| libm::log(p.distance)).collect();
    Ok(SweepReport {
        slope: fit_slope(&lx, &ly),
        points,
        resorted,
    })
}

/// Residuals of one expansion across the ε list.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionRow {
    pub name: String,
    /// Power of ε the residual is divided by.
    pub power: i32,
    /// `‖X_ε - expansion(ε)‖∞`.
    pub raw: Vec<f64>,
    /// `raw / ε^power`.
    pub scaled: Vec<f64>,
    /// `scaled[k+1] / scaled[k]`; `None` where both residuals sit below the
    /// noise floor.
    pub ratios: Vec<Option<f64>>,
}

impl ExpansionRow {
    /// Ratios in `[lo, hi]` (noise-floor entries count as passing).
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.ratios
            .iter()
            .all(|r| r.is_none_or(|v| (lo..=hi).contains(&v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTable {
    pub eps: Vec<f64>,
    pub rows: Vec<ExpansionRow>,
}

impl ExpansionTable {
    pub fn row(&self, name: &str) -> Option<&ExpansionRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Residuals below `NOISE_FLOOR * max(1, ‖X_ε‖, 1/ε)` are treated as exact:
/// the expansion holds to rounding (the blocks of `U`, `K` are built from
/// terms of size 1/ε) and the ratio carries no signal.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Checks the small-ε expansions, each divided by the power of ε its
/// remainder should have:
///
/// | row | expansion | power |
/// |---|---|---|
/// | `Psi`, `PsiStar` | `I + εΨ1`, `I + εΨ1*` | 2 |
/// | `K`, `KStar` | `K0`, `K0*` | 1 |
/// | `U`, `UStar` | `Λ-`, `Λ+` | 1 |
/// | `UStated` | `Λ- + ε(Θ^-1 Q + V^-1 D Ψ1)` | 2 |
/// | `UStarStated` | `Λ+ + ε(Θ^-1 Q - V^-1 D Ψ1)` | 2 |
/// | `Gb` | `J + εG1(b)` | 2 |
///
/// The two `Stated` rows carry first-order coefficients that leave out the
/// `Θ^-1 Ψ2` (resp. `Θ^-1 Ψ2*`) contribution, so in general their remainder
/// is only O(ε) and their ratios settle near 2.
pub fn expansion_check(model: &MmbmModel, eps_list: &[f64]) -> Result<ExpansionTable> {
    let (eps, _) = normalize_eps_list(eps_list)?;
    if eps.len() < 4 {
        return Err(Error::InvalidConfig("expansion check needs at least three halvings".into()));
    }
    let m = model.phases();
    let b = model.b();
    let s = solvent_pair(model)?;
    let lm = limit_matrices(model)?;
    let inv_theta = model.theta().map(|t| 1.0 / t);
    let theta_inv_q = scale_rows(&inv_theta, model.q());
    let dv = model.mu().zip_map(model.sigma2(), |d, v| d / v);
    let vd_psi1 = scale_rows(&dv, &s.psi1);
    let u1 = &theta_inv_q + &vd_psi1;
    let us1 = &theta_inv_q - &vd_psi1;
    let id = DMatrix::<f64>::identity(m, m);
    let zero = DMatrix::<f64>::zeros(m, m);
    let j = block2(&zero, &id, &id, &zero);
    let g1 = lm.g1();

    let names = ["Psi", "PsiStar", "K", "KStar", "U", "UStar", "UStated", "UStarStated", "Gb"];
    let powers = [2, 2, 1, 1, 1, 1, 2, 2, 2];
    let mut raw: Vec<Vec<f64>> = (0..names.len()).map(|_| Vec::new()).collect();
    let mut floors: Vec<Vec<f64>> = (0..names.len()).map(|_| Vec::new()).collect();
    for &e in &eps {
        let fluid = build_fluid_approximation(model, e)?;
        let fp = first_passage_set(&fluid)?;
        let gb = solve_gb(&fp, b)?.full();
        let pairs: [(DMatrix<f64>, DMatrix<f64>); 9] = [
            (fp.psi.clone(), &id + &s.psi1 * e),
            (fp.psi_star.clone(), &id + &s.psi1_star * e),
            (fp.k.clone(), lm.k0.clone()),
            (fp.k_star.clone(), lm.k0_star.clone()),
            (fp.u.clone(), s.lam_minus.clone()),
            (fp.u_star.clone(), s.lam_plus.clone()),
            (fp.u.clone(), &s.lam_minus + &u1 * e),
            (fp.u_star.clone(), &s.lam_plus + &us1 * e),
            (gb, &j + &g1 * e),
        ];
        for (k, (actual, stated)) in pairs.iter().enumerate() {
            raw[k].push(norm_inf(&(actual - stated)));
            floors[k].push(NOISE_FLOOR * norm_inf(actual).max(1.0).max(1.0 / e));
        }
    }
    let rows = names
        .iter()
        .zip(powers)
        .enumerate()
        .map(|(k, (name, p))| {
            let scaled: Vec<f64> = raw[k]
                .iter()
                .zip(&eps)
                .map(|(r, e)| r / libm::pow(*e, p as f64))
                .collect();
            let ratios = (1..eps.len())
                .map(|i| {
                    if raw[k][i] <= floors[k][i] && raw[k][i - 1] <= floors[k][i - 1] {
                        None
                    } else {
                        Some(scaled[i] / scaled[i - 1])
                    }
                })
                .collect();
            ExpansionRow {
                name: String::from(*name),
                power: p,
                raw: raw[k].clone(),
                scaled,
                ratios,
            }
        })
        .collect();
    Ok(ExpansionTable { eps, rows })
}

/// Reproducible random models: `m` in {2, 3, 4}, dense `Q` with
/// off-diagonal rates in `[0.1, 2]`, `σ²` in `[0.5, 2]`, `|μ| <= 2`,
/// `b` in `[0.5, 2]`, and `|αD1| >= 0.1` (by rejection).
pub fn random_model_set(seed: u64, count: usize) -> Result<Vec<MmbmModel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let m = rng.random_range(2..=4usize);
        let mut q = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    q[(i, j)] = rng.random_range(0.1..=2.0);
                }
            }
            let s: f64 = q.row(i).sum();
            q[(i, i)] = -s;
        }
        let mu = DVector::from_fn(m, |_, _| rng.random_range(-2.0..=2.0));
        let sigma2 = DVector::from_fn(m, |_, _| rng.random_range(0.5..=2.0));
        let b = rng.random_range(0.5..=2.0);
        let model = MmbmModel::new(q, mu, sigma2, b)?;
        if libm::fabs(model.mean_drift()) >= 0.1 {
            out.push(model);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    const SWEEP: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

    #[test]
    fn oracle_scalar_reflected_brownian_motion() {
        let d = discretization_oracle(&m1(-1.0), 2000).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        let worst = (0..d.cells())
            .map(|k| {
                let x = d.centre(k);
                (d.density[(k, 0)] - 2.0 * libm::exp(-2.0 * x) / (1.0 - libm::exp(-2.0))).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 5e-6, "{worst}");
    }

    #[test]
    fn oracle_small_drift_is_nearly_uniform() {
        let d = discretization_oracle(&m1(-1e-3), 200).unwrap();
        assert!(d.density.iter().all(|v| (v - 1.0).abs() <= 2e-3));
    }

    #[test]
    fn oracle_rejects_coarse_grid() {
        let model = MmbmModel::new(dmatrix![0.0], dvector![-100.0], dvector![1.0], 1.0).unwrap();
        assert!(matches!(
            discretization_oracle(&model, 60),
            Err(Error::NegativeRate { cells: 101 })
        ));
        assert!(matches!(discretization_oracle(&m2(), 10), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn oracle_agrees_with_closed_form_on_two_phases() {
        let sol = stationary_density(&m2()).unwrap();
        let d = discretization_oracle(&m2(), 2000).unwrap();
        let mut worst = 0.0f64;
        for k in 0..d.cells() {
            let exact = sol.density(d.centre(k)).unwrap();
            for i in 0..2 {
                worst = worst.max((d.density[(k, i)] - exact[i]).abs());
            }
        }
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn sweep_first_order_convergence() {
        for model in [m1(-1.0), m2()] {
            let r = lambda_sweep(&model, &SWEEP).unwrap();
            assert!(!r.resorted);
            assert!(r.monotone(0.1), "{r:?}");
            let slope = r.slope.unwrap();
            assert!((0.7..=1.3).contains(&slope), "{slope}");
            for ratio in r.mass_ratios() {
                assert!((0.3..=0.7).contains(&ratio), "{ratio}");
            }
            for w in r.points.windows(2) {
                assert!(w[1].k_error < w[0].k_error);
            }
        }
    }

    #[test]
    fn sweep_single_eps_and_sorting() {
        let r = lambda_sweep(&m1(-1.0), &[0.1]).unwrap();
        assert!(r.slope.is_none());
        assert_eq!(r.points.len(), 1);
        let r = lambda_sweep(&m1(-1.0), &[0.05, 0.2, 0.1]).unwrap();
        assert!(r.resorted);
        let eps: Vec<f64> = r.points.iter().map(|p| p.eps).collect();
        assert_eq!(eps, [0.2, 0.1, 0.05]);
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0];
        assert!((fit_slope(&x, &[1.0, 3.0, 5.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn expansions_on_scalar_model() {
        let t = expansion_check(&m1(-1.0), &SWEEP).unwrap();
        for r in &t.rows {
            assert!(r.within(0.2, 5.0), "{}: {:?}", r.name, r);
        }
        // Ψ1 = 0 and Ψ_ε = 1 exactly: residual is pure rounding.
        let psi = t.row("Psi").unwrap();
        assert!(psi.raw.iter().all(|r| *r < 1e-10));
        assert!(psi.ratios.iter().all(|r| r.is_none()));
    }

    #[test]
    fn expansions_on_two_phase_model() {
        let t = expansion_check(&m2(), &SWEEP).unwrap();
        for name in ["Psi", "PsiStar", "K", "KStar", "U", "UStar", "Gb"] {
            assert!(t.row(name).unwrap().within(0.2, 5.0), "{name}: {:?}", t.row(name));
        }
        // The stated first-order coefficients of U, U* miss a term: the
        // remainder is O(ε), so dividing by ε² doubles at every halving.
        for name in ["UStated", "UStarStated"] {
            let r = t.row(name).unwrap();
            let last = r.ratios.last().unwrap().unwrap();
            assert!((1.8..=2.2).contains(&last), "{name}: {r:?}");
        }
    }

    #[test]
    fn random_models_are_valid_and_reproducible() {
        let a = random_model_set(11, 20).unwrap();
        let b = random_model_set(11, 20).unwrap();
        assert_eq!(a.len(), 20);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.q(), y.q());
            assert!(x.mean_drift().abs() >= 0.1);
            assert!((2..=4).contains(&x.phases()));
        }
    }
}
