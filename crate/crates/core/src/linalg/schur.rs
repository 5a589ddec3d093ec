use nalgebra::DMatrix;
use num_complex::Complex64;

/// Complex Schur form `A = Z T Z^H` with support for moving a selected
/// set of eigenvalues to the leading block.
#[derive(Debug, Clone)]
pub struct OrderedSchur {
    z: DMatrix<Complex64>,
    t: DMatrix<Complex64>,
}

impl OrderedSchur {
    pub fn new(a: &DMatrix<f64>) -> Self {
        Self::new_complex(a.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn new_complex(a: DMatrix<Complex64>) -> Self {
        let (z, mut t) = nalgebra::Schur::new(a).unpack();
        let n = t.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        Self { z, t }
    }

    pub fn eigenvalues(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.t.nrows()).map(move |i| self.t[(i, i)])
    }

    pub fn unitary(&self) -> &DMatrix<Complex64> {
        &self.z
    }

    pub fn triangular(&self) -> &DMatrix<Complex64> {
        &self.t
    }

    /// Reorders so that eigenvalues accepted by `select` come first.
    /// Returns how many were selected.
    pub fn reorder<F: Fn(Complex64) -> bool>(&mut self, select: F) -> usize {
        let n = self.t.nrows();
        let mut placed = 0;
        for k in 0..n {
            if select(self.t[(k, k)]) {
                let mut pos = k;
                while pos > placed {
                    self.swap_adjacent(pos - 1);
                    pos -= 1;
                }
                placed += 1;
            }
        }
        placed
    }

    // Exchanges diagonal entries k and k+1 with a unitary rotation.
    fn swap_adjacent(&mut self, k: usize) {
        let n = self.t.nrows();
        let t11 = self.t[(k, k)];
        let t22 = self.t[(k + 1, k + 1)];
        let t12 = self.t[(k, k + 1)];
        // Eigenvector of the 2x2 block for t22.
        let x = t12;
        let y = t22 - t11;
        let r = libm::hypot(x.norm(), y.norm());
        if r == 0.0 {
            return;
        }
        let (a, b) = (x / r, y / r);
        // G = [[a, -conj(b)], [b, conj(a)]], first column the eigenvector.
        let g11 = a;
        let g12 = -b.conj();
        let g21 = b;
        let g22 = a.conj();

        // Rows: T <- G^H T
        for j in 0..n {
            let r1 = self.t[(k, j)];
            let r2 = self.t[(k + 1, j)];
            self.t[(k, j)] = g11.conj() * r1 + g21.conj() * r2;
            self.t[(k + 1, j)] = g12.conj() * r1 + g22.conj() * r2;
        }
        // Columns: T <- T G, Z <- Z G
        for i in 0..n {
            let c1 = self.t[(i, k)];
            let c2 = self.t[(i, k + 1)];
            self.t[(i, k)] = c1 * g11 + c2 * g21;
            self.t[(i, k + 1)] = c1 * g12 + c2 * g22;
            let z1 = self.z[(i, k)];
            let z2 = self.z[(i, k + 1)];
            self.z[(i, k)] = z1 * g11 + z2 * g21;
            self.z[(i, k + 1)] = z1 * g12 + z2 * g22;
        }
        self.t[(k + 1, k)] = Complex64::new(0.0, 0.0);
        self.t[(k, k)] = t22;
        self.t[(k + 1, k + 1)] = t11;
    }
}
