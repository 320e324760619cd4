use nalgebra::Schur;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CMat, Mat};
use crate::error::{Error, Result};

/// Complex Schur form `A = Z T Z^H` with `T` upper triangular and `Z` unitary.
///
/// Working over the complex field keeps `T` strictly triangular, so moving an
/// eigenvalue is a single 2×2 rotation instead of the real-arithmetic block
/// exchange.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub z: CMat,
    pub t: CMat,
}

impl ComplexSchur {
    pub fn new(a: &Mat) -> Result<Self> {
        assert!(a.is_square(), "Schur form of a non-square matrix");
        let n = a.nrows().max(1);
        // Deflation at machine precision can stall on tightly clustered
        // eigenvalues (Kronecker-structured closed loops); relax it in steps.
        for (eps, iters) in [(f64::EPSILON, 3 * n + 30), (1e-12, 100 * n), (1e-10, 100 * n)] {
            if let Some(s) = Self::attempt(a, eps, iters) {
                return Ok(s);
            }
        }
        // Shifted QR can also stall on exactly structured inputs (e.g.
        // nilpotent shift matrices); an orthogonal similarity breaks the structure.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5c4u64);
        for _ in 0..4 {
            let q = Mat::from_fn(a.nrows(), a.nrows(), |_, _| rng.random_range(-1.0..1.0)).qr().q();
            if let Some(mut s) = Self::attempt(&(q.transpose() * a * &q), 1e-12, 100 * n) {
                s.z = q.map(|x| Complex64::new(x, 0.0)) * s.z;
                return Ok(s);
            }
        }
        Err(Error::SchurFailed)
    }

    fn attempt(a: &Mat, eps: f64, iters: usize) -> Option<Self> {
        let n = a.nrows();
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let schur = Schur::try_new(ac, eps, iters)?;
        let (z, mut t) = schur.unpack();
        let scale = t.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
        for j in 0..n {
            for i in j + 1..n {
                if t[(i, j)].norm() > 1e-8 * scale {
                    return None;
                }
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        Some(Self { z, t })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.t[(i, i)]).collect()
    }

    /// Moves every eigenvalue satisfying `select` to the leading diagonal
    /// positions, preserving relative order. Returns how many were selected.
    pub fn reorder(&mut self, select: impl Fn(Complex64) -> bool) -> usize {
        let n = self.dim();
        let mut head = 0;
        for k in 0..n {
            if select(self.t[(k, k)]) {
                for pos in (head..k).rev() {
                    self.swap_adjacent(pos);
                }
                head += 1;
            }
        }
        head
    }

    /// Exchanges the diagonal entries at `k` and `k + 1` with a unitary rotation.
    fn swap_adjacent(&mut self, k: usize) {
        let n = self.dim();
        let a = self.t[(k, k)];
        let b = self.t[(k + 1, k + 1)];
        let c = self.t[(k, k + 1)];
        // [c, b - a] is the eigenvector of the 2×2 block for eigenvalue b.
        let v0 = c;
        let v1 = b - a;
        let nv = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        if nv == 0.0 {
            return;
        }
        let x = v0 / nv;
        let y = v1 / nv;
        // G = [[x, -conj(y)], [y, conj(x)]]
        let g00 = x;
        let g01 = -y.conj();
        let g10 = y;
        let g11 = x.conj();
        for i in 0..n {
            let tk = self.t[(i, k)];
            let tk1 = self.t[(i, k + 1)];
            self.t[(i, k)] = tk * g00 + tk1 * g10;
            self.t[(i, k + 1)] = tk * g01 + tk1 * g11;
            let zk = self.z[(i, k)];
            let zk1 = self.z[(i, k + 1)];
            self.z[(i, k)] = zk * g00 + zk1 * g10;
            self.z[(i, k + 1)] = zk * g01 + zk1 * g11;
        }
        for j in 0..n {
            let tk = self.t[(k, j)];
            let tk1 = self.t[(k + 1, j)];
            self.t[(k, j)] = g00.conj() * tk + g10.conj() * tk1;
            self.t[(k + 1, j)] = g01.conj() * tk + g11.conj() * tk1;
        }
        self.t[(k + 1, k)] = Complex64::new(0.0, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(s: &ComplexSchur) -> CMat {
        &s.z * &s.t * s.z.adjoint()
    }

    #[test]
    fn triangular_and_reconstructs() {
        let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 2.0, 0.5, -3.0, -0.2]);
        let s = ComplexSchur::new(&a).unwrap();
        let err = (reconstruct(&s) - a.map(|x| Complex64::new(x, 0.0))).norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn reorder_moves_stable_block_first() {
        let a = Mat::from_row_slice(
            4,
            4,
            &[
                2.0, 1.0, 0.3, 0.0, //
                0.0, -1.0, 4.0, 1.0, //
                1.0, 0.0, 0.5, -2.0, //
                0.0, 3.0, 0.0, -4.0,
            ],
        );
        let mut s = ComplexSchur::new(&a).unwrap();
        let before = s.eigenvalues();
        let k = s.reorder(|z| z.re < 0.0);
        assert_eq!(k, before.iter().filter(|z| z.re < 0.0).count());
        let after = s.eigenvalues();
        assert!(after[..k].iter().all(|z| z.re < 0.0));
        assert!(after[k..].iter().all(|z| z.re >= 0.0));
        let err = (reconstruct(&s) - a.map(|x| Complex64::new(x, 0.0))).norm();
        assert!(err < 1e-12, "{err}");
        let unitary = (s.z.adjoint() * &s.z - CMat::identity(4, 4)).norm();
        assert!(unitary < 1e-13);
    }

    #[test]
    fn nilpotent_shift_matrices() {
        let up = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        for a in [up.clone(), up.transpose()] {
            let s = ComplexSchur::new(&a).unwrap();
            let err = (reconstruct(&s) - a.map(|x| Complex64::new(x, 0.0))).norm();
            assert!(err < 1e-12, "{err}");
            assert!(s.eigenvalues().iter().all(|z| z.norm() < 1e-4));
        }
    }
}
