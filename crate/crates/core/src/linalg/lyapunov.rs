use num_complex::Complex64;

use super::{symmetrize, CMat, ComplexSchur, Mat, Tolerances};
use crate::error::{Error, Result};

/// Solves `A X + X A^T + W = 0` for Hurwitz `A` (Bartels-Stewart on the
/// complex Schur form).
pub fn solve_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    solve_lyapunov_with(a, w, &Tolerances::default())
}

pub fn solve_lyapunov_with(a: &Mat, w: &Mat, tol: &Tolerances) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || w.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "lyapunov: A is {:?}, W is {:?}",
            a.shape(),
            w.shape()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let schur = ComplexSchur::new(a)?;
    let abscissa = schur
        .eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= -tol.lyapunov_margin {
        return Err(Error::NotHurwitz { abscissa });
    }
    let z = &schur.z;
    let t = &schur.t;
    let wc = w.map(|x| Complex64::new(x, 0.0));
    // T Y + Y T^H = -Z^H W Z
    let rhs = -(z.adjoint() * wc * z);
    let mut y = CMat::zeros(n, n);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut acc = rhs[(i, j)];
            for k in i + 1..n {
                acc -= t[(i, k)] * y[(k, j)];
            }
            for k in j + 1..n {
                acc -= y[(i, k)] * t[(j, k)].conj();
            }
            y[(i, j)] = acc / (t[(i, i)] + t[(j, j)].conj());
        }
    }
    let x = (z * y * z.adjoint()).map(|c| c.re);
    Ok(symmetrize(&x))
}

/// Direct solve of the vectorized equation `(I⊗A + A⊗I) vec(X) = -vec(W)`.
/// Intended for small problems as an independent cross-check.
pub fn solve_lyapunov_kronecker(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n > 30 {
        return Err(Error::DimensionMismatch(format!(
            "Kronecker Lyapunov solve limited to n <= 30, got {n}"
        )));
    }
    let eye = Mat::identity(n, n);
    let k = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(w.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotHurwitz { abscissa: f64::NAN })?;
    Ok(Mat::from_column_slice(n, n, sol.as_slice()))
}
