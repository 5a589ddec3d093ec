use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, RowDVector};

use super::{check_finite, norm_inf};
use crate::error::{Error, Result};

const BALANCE_TOL: f64 = 1e-8;

/// Strong connectivity of the directed graph with an edge `i -> j` whenever
/// `edge(i, j)` holds (`i != j`).
pub fn is_irreducible<F: Fn(usize, usize) -> bool>(n: usize, edge: F) -> bool {
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                let e = if forward { edge(i, j) } else { edge(j, i) };
                if i != j && e && !*s {
                    *s = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(true) && reach(false)
}

/// Stationary probability row vector of an irreducible generator (zero row
/// sums) or of an irreducible stochastic matrix (unit row sums).
///
/// Uses the Grassmann-Taksar-Heyman state reduction, which never subtracts
/// and therefore returns a nonnegative vector. Negative off-diagonal noise is
/// treated as zero.
pub fn stationary_vector(g: &DMatrix<f64>) -> Result<RowDVector<f64>> {
    check_finite(g, "stationary vector input")?;
    let n = g.nrows();
    if n != g.ncols() || n == 0 {
        return Err(Error::DimensionMismatch("stationary vector needs a nonempty square matrix".into()));
    }
    let scale = norm_inf(g).max(1.0);
    let sums: Vec<f64> = g.row_iter().map(|r| r.sum()).collect();
    let generator = sums.iter().all(|s| s.abs() <= BALANCE_TOL * scale);
    let stochastic = sums.iter().all(|s| (s - 1.0).abs() <= BALANCE_TOL * scale);
    if !generator && !stochastic {
        return Err(Error::NotBalanced);
    }
    if !is_irreducible(n, |i, j| g[(i, j)] > 0.0) {
        return Err(Error::NotIrreducible);
    }

    let mut p = g.map(|v| v.max(0.0));
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| p[(k, j)]).sum();
        if !(s > 0.0) {
            return Err(Error::NotIrreducible);
        }
        for i in 0..k {
            p[(i, k)] /= s;
        }
        for i in 0..k {
            let pik = p[(i, k)];
            if pik == 0.0 {
                continue;
            }
            for j in 0..k {
                if i != j {
                    p[(i, j)] += pik * p[(k, j)];
                }
            }
        }
    }
    let mut x = RowDVector::zeros(n);
    x[0] = 1.0;
    for j in 1..n {
        x[j] = (0..j).map(|i| x[i] * p[(i, j)]).sum();
    }
    let total = x.sum();
    Ok(x / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn close(a: &RowDVector<f64>, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn symmetric_generator() {
        let v = stationary_vector(&dmatrix![-1.0, 1.0; 1.0, -1.0]).unwrap();
        assert!(close(&v, &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn two_state_balance() {
        let (a, c) = (0.3, 2.0);
        let v = stationary_vector(&dmatrix![-a, a; c, -c]).unwrap();
        assert!(close(&v, &[c / (a + c), a / (a + c)], 1e-15));
    }

    #[test]
    fn stochastic_flip() {
        let v = stationary_vector(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert!(close(&v, &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn residual_small_for_larger_generator() {
        let g = dmatrix![
            -3.0, 1.0, 2.0, 0.0;
            0.5, -1.0, 0.0, 0.5;
            0.0, 4.0, -5.0, 1.0;
            1.0, 1.0, 1.0, -3.0
        ];
        let v = stationary_vector(&g).unwrap();
        let r = &v * &g;
        assert!(r.iter().all(|x| x.abs() < 1e-14));
        assert!((v.sum() - 1.0).abs() < 1e-15);
        assert!(v.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn reducible_and_unbalanced_rejected() {
        assert_eq!(
            stationary_vector(&dmatrix![-1.0, 1.0; 0.0, 0.0]),
            Err(Error::NotIrreducible)
        );
        assert_eq!(
            stationary_vector(&dmatrix![-1.0, 2.0; 1.0, -1.0]),
            Err(Error::NotBalanced)
        );
    }

    #[test]
    fn one_state() {
        let v = stationary_vector(&dmatrix![0.0]).unwrap();
        assert_eq!(v[0], 1.0);
    }
}
