use nalgebra::DMatrix;

use super::{check_finite, norm_one, solve, sub};
use crate::error::Result;

// Coefficients of the [13/13] Padé approximant to exp.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the unscaled [13/13] approximant meets unit roundoff.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
///
/// No balancing is applied.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(a, "matrix exponential input")?;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix exponential needs a square matrix");
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let norm = norm_one(a);
    let squarings = if norm > THETA13 {
        libm::ceil(libm::log2(norm / THETA13)) as i32
    } else {
        0
    };
    let a = a * libm::ldexp(1.0, -squarings);

    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let mut r = solve(&(&v - &u), &(&v + &u), "Pade denominator")?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    check_finite(&r, "matrix exponential")?;
    Ok(r)
}

/// `∫_0^b exp(K x) dx`, read off the upper-right block of `exp([[K, I], [0, 0]] b)`.
///
/// Works for singular `K`.
pub fn expm_integral(k: &DMatrix<f64>, b: f64) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(k * b));
    big.view_mut((0, n), (n, n)).fill_with_identity();
    big.view_mut((0, n), (n, n)).scale_mut(b);
    let e = matrix_exponential(&big)?;
    Ok(sub(&e, 0, n, n, n))
}
