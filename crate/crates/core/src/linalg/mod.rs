//! Dense linear-algebra kernels: complex Schur with eigenvalue reordering,
//! Hamiltonian Riccati solvers, Bartels-Stewart Lyapunov solver, system norms
//! and stability tests.
//!
//! Every threshold lives in [`Tolerances`]; the plain entry points use
//! `Tolerances::default()` and the `*_with` variants accept an explicit set.

mod lyapunov;
mod norms;
mod riccati;
mod schur;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use lyapunov::{solve_lyapunov, solve_lyapunov_kronecker, solve_lyapunov_with};
pub use norms::{freq_response_sigma, h2_norm, hinf_norm};
pub use riccati::{
    solve_care_standard, solve_care_standard_with, solve_filter_riccati,
    solve_filter_riccati_with, StableSubspaceResult,
};
pub use schur::ComplexSchur;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Numerical thresholds shared by the solvers. All are relative to problem
/// scale unless the field name says otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// |Re λ| < imag_axis·(1+‖H‖₂) counts as an imaginary-axis eigenvalue.
    pub imag_axis: f64,
    /// Lyapunov solver rejects A when some Re λ ≥ -lyapunov_margin (absolute).
    pub lyapunov_margin: f64,
    /// Residual bound factor for A^T P + PA - PBB^T P + I = 0, times (1+‖A‖₂)².
    pub care_residual: f64,
    /// Residual bound factor for the filter Riccati equation, times (1+‖A‖₂)².
    pub filter_residual: f64,
    /// Singular values below rank·σ_max are treated as zero.
    pub rank: f64,
    /// Smallest eigenvalue must exceed pd·‖X‖₂ for X ≻ 0.
    pub pd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            imag_axis: 1e-9,
            lyapunov_margin: 1e-12,
            care_residual: 1e-10,
            filter_residual: 1e-8,
            rank: 1e-9,
            pd: 1e-12,
        }
    }
}

/// Rejects matrices holding NaN or infinite entries.
pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Singular values in descending order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .cloned()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with threshold `rel_tol·σ_max`.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input".into()));
    }
    // Spectrum only: balanced real QR is several times cheaper than the
    // complex Schur form and copes with the wide scaling of filter gains.
    let n = m.nrows().max(1);
    let mut balanced = m.clone();
    nalgebra::linalg::balancing::balance_parlett_reinsch(&mut balanced);
    for (eps, iters) in [(f64::EPSILON, 3 * n + 30), (1e-12, 100 * n)] {
        if let Some(schur) = nalgebra::Schur::try_new(balanced.clone(), eps, iters) {
            let eigs = schur.complex_eigenvalues();
            if eigs.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Ok(eigs.iter().copied().collect());
            }
        }
    }
    Ok(ComplexSchur::new(m)?.eigenvalues())
}

/// Eigenvalues with numerically split clusters replaced by their centroid.
///
/// A defective eigenvalue of multiplicity k is only computed to about
/// eps^(1/k), but the mean of its cluster is accurate to O(eps). Eigenvalues
/// closer than `radius` (transitively) are averaged.
pub fn eigenvalues_clustered(m: &Mat, radius: f64) -> Result<Vec<Complex64>> {
    let eigs = eigenvalues(m)?;
    let n = eigs.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() < radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[rj] = ri;
                }
            }
        }
    }
    let mut out = eigs.clone();
    for i in 0..n {
        let r = find(&mut label, i);
        let members: Vec<usize> = (0..n).filter(|&k| find(&mut label, k) == r).collect();
        let sum: Complex64 = members.iter().map(|&k| eigs[k]).sum();
        out[i] = sum / members.len() as f64;
    }
    Ok(out)
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Hurwitz test; returns the spectrum alongside the verdict.
pub fn is_hurwitz(m: &Mat) -> Result<(bool, Vec<Complex64>)> {
    let eigs = eigenvalues(m)?;
    let ok = eigs.iter().all(|z| z.re < 0.0);
    Ok((ok, eigs))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Builds a block matrix from rows of blocks; all blocks in a block row share
/// their row count and all blocks in a block column their column count.
pub fn block(rows: &[&[&Mat]]) -> Mat {
    let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
    let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
    let mut out = Mat::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (bi, row) in rows.iter().enumerate() {
        let mut c0 = 0;
        for (bj, blk) in row.iter().enumerate() {
            assert_eq!(blk.nrows(), heights[bi], "block row height");
            assert_eq!(blk.ncols(), widths[bj], "block column width");
            out.view_mut((r0, c0), (blk.nrows(), blk.ncols()))
                .copy_from(*blk);
            c0 += widths[bj];
        }
        r0 += heights[bi];
    }
    out
}
