use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::schur::OrderedSchur;
use crate::error::{Error, Result};

/// Bartels-Stewart solver for `A X + X D = R`, with the Schur forms of `A`
/// and `D` computed once and reused across right-hand sides.
#[derive(Debug, Clone)]
pub struct SylvesterSolver {
    a: OrderedSchur,
    d: OrderedSchur,
}

impl SylvesterSolver {
    pub fn new(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Self {
        Self {
            a: OrderedSchur::new(a),
            d: OrderedSchur::new(d),
        }
    }

    pub fn solve(&self, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ua = self.a.unitary();
        let ta = self.a.triangular();
        let ud = self.d.unitary();
        let td = self.d.triangular();
        let (p, q) = (ta.nrows(), td.nrows());
        assert_eq!(r.shape(), (p, q));

        let rc = r.map(|v| Complex64::new(v, 0.0));
        let f = ua.adjoint() * rc * ud;
        let mut y = DMatrix::<Complex64>::zeros(p, q);
        let scale = ta.iter().chain(td.iter()).fold(0.0f64, |m, v| m.max(v.norm()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

        for j in 0..q {
            let mut rhs: DVector<Complex64> = f.column(j).into_owned();
            for k in 0..j {
                let coef = td[(k, j)];
                if coef != Complex64::new(0.0, 0.0) {
                    rhs -= y.column(k) * coef;
                }
            }
            // Back substitution with (Ta + td_jj I).
            let shift = td[(j, j)];
            for i in (0..p).rev() {
                let mut s = rhs[i];
                for l in (i + 1)..p {
                    s -= ta[(i, l)] * y[(l, j)];
                }
                let diag = ta[(i, i)] + shift;
                if diag.norm() <= tiny {
                    return Err(Error::SingularSystem("Sylvester equation"));
                }
                y[(i, j)] = s / diag;
            }
        }
        let x = ua * y * ud.adjoint();
        let out = x.map(|v| v.re);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::SingularSystem("Sylvester equation"))
        }
    }
}
