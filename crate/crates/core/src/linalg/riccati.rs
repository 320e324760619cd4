use nalgebra::SVD;
use num_complex::Complex64;

use super::{
    block, ensure_finite, is_hurwitz, min_sym_eigenvalue, norm2, solve_lyapunov, symmetrize,
    ComplexSchur, Mat, Tolerances,
};
use crate::error::{Error, Result};

/// Stabilizing solution of a continuous-time algebraic Riccati equation with
/// its certificates.
#[derive(Debug, Clone)]
pub struct StableSubspaceResult {
    pub solution: Mat,
    /// Induced 2-norm of the Riccati residual at `solution`.
    pub residual_norm: f64,
    /// Spectrum of the associated closed-loop (or filter) matrix.
    pub closed_loop_spectrum: Vec<Complex64>,
}

/// `A^T P + P A - P B B^T P + I = 0`, with `A - B B^T P` Hurwitz and `P ≻ 0`.
pub fn solve_care_standard(a: &Mat, b: &Mat) -> Result<StableSubspaceResult> {
    solve_care_standard_with(a, b, &Tolerances::default())
}

pub fn solve_care_standard_with(a: &Mat, b: &Mat, tol: &Tolerances) -> Result<StableSubspaceResult> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "care: A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    let r = b * b.transpose();
    let g = Mat::identity(n, n);
    let bound = tol.care_residual * (1.0 + norm2(a)).powi(2);
    let (p, residual_norm) = solve_refined(a, &r, &g, bound, tol)?;

    let (stable, spectrum) = is_hurwitz(&(a - &r * &p))?;
    if !stable {
        return Err(Error::NoStabilizingSolution {
            reason: "A - BB^T P is not Hurwitz".into(),
            eigenvalues: spectrum,
        });
    }
    check_positive_definite(&p, tol)?;
    Ok(StableSubspaceResult {
        solution: p,
        residual_norm,
        closed_loop_spectrum: spectrum,
    })
}

/// `Q A^T + A Q + E E^T - δ^-2 Q C^T C Q + ρ² Q² = 0`, with `Q ≻ 0` and the
/// filter matrix `A - δ^-2 Q C^T C` Hurwitz.
///
/// The quadratic weight `δ^-2 C^T C - ρ² I` is indefinite; the equation is
/// solved as a standard Riccati equation in `Q` with state matrix `A^T`.
pub fn solve_filter_riccati(
    a: &Mat,
    e: &Mat,
    c: &Mat,
    rho: f64,
    delta: f64,
) -> Result<StableSubspaceResult> {
    solve_filter_riccati_with(a, e, c, rho, delta, &Tolerances::default())
}

pub fn solve_filter_riccati_with(
    a: &Mat,
    e: &Mat,
    c: &Mat,
    rho: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<StableSubspaceResult> {
    let n = a.nrows();
    if !a.is_square() || e.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "filter riccati: A is {:?}, E is {:?}, C is {:?}",
            a.shape(),
            e.shape(),
            c.shape()
        )));
    }
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::RhoOutOfRange(rho));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::ConfigInvalid(format!("delta must be positive, got {delta}")));
    }
    ensure_finite(a, "A")?;
    ensure_finite(e, "E")?;
    ensure_finite(c, "C")?;

    let inv_d2 = delta.powi(-2);
    let ctc = c.transpose() * c;
    let r = &ctc * inv_d2 - Mat::identity(n, n) * (rho * rho);
    let g = e * e.transpose();
    let a_hat = a.transpose();
    let bound = tol.filter_residual * (1.0 + norm2(a)).powi(2);
    let (q, residual_norm) = solve_refined(&a_hat, &r, &g, bound, tol)?;

    check_positive_definite(&q, tol)?;
    let (stable, spectrum) = is_hurwitz(&(a - &q * &ctc * inv_d2))?;
    if !stable {
        return Err(Error::NoStabilizingSolution {
            reason: "filter matrix A - δ^-2 Q C^T C is not Hurwitz".into(),
            eigenvalues: spectrum,
        });
    }
    Ok(StableSubspaceResult {
        solution: q,
        residual_norm,
        closed_loop_spectrum: spectrum,
    })
}

fn check_positive_definite(x: &Mat, tol: &Tolerances) -> Result<()> {
    let min_eigenvalue = min_sym_eigenvalue(x);
    if min_eigenvalue > 0.0 && min_eigenvalue > tol.pd * norm2(x) {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { min_eigenvalue })
    }
}

/// Residual of `Â^T X + X Â - X R X + G`.
pub(crate) fn care_residual(a_hat: &Mat, r: &Mat, g: &Mat, x: &Mat) -> Mat {
    a_hat.transpose() * x + x * a_hat - x * r * x + g
}

/// Stabilizing solution via the ordered Schur form, followed by one Newton
/// (Kleinman) step when the residual exceeds `bound`.
fn solve_refined(a_hat: &Mat, r: &Mat, g: &Mat, bound: f64, tol: &Tolerances) -> Result<(Mat, f64)> {
    let mut x = stabilizing_solution(a_hat, r, g, tol)?;
    let mut res = norm2(&care_residual(a_hat, r, g, &x));
    if res > bound {
        let closed = a_hat - r * &x;
        let w = &x * r * &x + g;
        if let Ok(next) = solve_lyapunov(&closed.transpose(), &w) {
            let next = symmetrize(&next);
            let next_res = norm2(&care_residual(a_hat, r, g, &next));
            if next_res < res {
                x = next;
                res = next_res;
            }
        }
    }
    if res > bound {
        return Err(Error::ResidualTooLarge { residual: res, bound });
    }
    Ok((x, res))
}

/// `X` solving `Â^T X + X Â - X R X + G = 0` with `Â - R X` Hurwitz, taken from
/// the stable invariant subspace of `H = [[Â, -R], [-G, -Â^T]]`.
fn stabilizing_solution(a_hat: &Mat, r: &Mat, g: &Mat, tol: &Tolerances) -> Result<Mat> {
    // X = S X̃ S with Â' = S Â S⁻¹, R' = S R S, G' = S⁻¹ G S⁻¹
    let s = balancing_scale(a_hat, r, g);
    let a_s = Mat::from_fn(a_hat.nrows(), a_hat.ncols(), |i, j| a_hat[(i, j)] * s[i] / s[j]);
    let r_s = Mat::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] * s[i] * s[j]);
    let g_s = Mat::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (s[i] * s[j]));
    let x = stabilizing_solution_unscaled(&a_s, &r_s, &g_s, tol)?;
    Ok(Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * s[i] * s[j]))
}

/// Power-of-two diagonal `S` equilibrating the Hamiltonian under the
/// symplectic similarity `diag(S, S⁻¹)` (Osborne-style sweeps).
fn balancing_scale(a_hat: &Mat, r: &Mat, g: &Mat) -> Vec<f64> {
    let n = a_hat.nrows();
    let mut s = vec![1.0f64; n];
    for _ in 0..20 {
        let mut changed = false;
        for i in 0..n {
            // entries growing with s_i: row i of Â, row/col i of R; shrinking: col i of Â, row/col i of G
            let (mut up, mut down) = (0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                up += (a_hat[(i, j)] * s[i] / s[j]).powi(2);
                down += (a_hat[(j, i)] * s[j] / s[i]).powi(2);
                up += 2.0 * (r[(i, j)] * s[i] * s[j]).powi(2);
                down += 2.0 * (g[(i, j)] / (s[i] * s[j])).powi(2);
            }
            up += (r[(i, i)] * s[i] * s[i]).powi(2) / 2.0;
            down += (g[(i, i)] / (s[i] * s[i])).powi(2) / 2.0;
            if up == 0.0 || down == 0.0 {
                continue;
            }
            let f = (down / up).powf(0.25);
            let step = f.log2().round();
            if step != 0.0 && (f < 0.5 || f > 2.0) {
                s[i] *= 2f64.powi(step as i32);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    s
}

fn stabilizing_solution_unscaled(a_hat: &Mat, r: &Mat, g: &Mat, tol: &Tolerances) -> Result<Mat> {
    let n = a_hat.nrows();
    let h = block(&[&[a_hat, &(-r)], &[&(-g), &(-a_hat.transpose())]]);
    let band = tol.imag_axis * (1.0 + norm2(&h));
    let mut schur = ComplexSchur::new(&h)?;
    let eigs = schur.eigenvalues();
    let on_axis: Vec<Complex64> = eigs.iter().cloned().filter(|z| z.re.abs() < band).collect();
    if !on_axis.is_empty() {
        return Err(Error::NoStabilizingSolution {
            reason: "Hamiltonian matrix has eigenvalues on the imaginary axis".into(),
            eigenvalues: on_axis,
        });
    }
    let k = schur.reorder(|z| z.re < 0.0);
    if k != n {
        return Err(Error::NoStabilizingSolution {
            reason: format!("stable invariant subspace has dimension {k}, expected {n}"),
            eigenvalues: eigs,
        });
    }
    let u1 = schur.z.view((0, 0), (n, n)).into_owned();
    let u2 = schur.z.view((n, 0), (n, n)).into_owned();
    let sv = SVD::new(u1.clone(), false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-12 * smax) {
        return Err(Error::NoStabilizingSolution {
            reason: "stable invariant subspace is not complementary to span[0; I]".into(),
            eigenvalues: eigs[..0].to_vec(),
        });
    }
    // X U1 = U2  <=>  U1^T X^T = U2^T
    let xt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| Error::NoStabilizingSolution {
            reason: "singular U1 block".into(),
            eigenvalues: Vec::new(),
        })?;
    let x = xt.transpose();
    Ok(symmetrize(&x.map(|c| c.re)))
}
