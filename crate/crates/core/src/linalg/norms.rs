use nalgebra::SVD;
use num_complex::Complex64;

use super::{block, eigenvalues, norm2, solve_lyapunov, CMat, Mat, Tolerances};
use crate::error::{Error, Result};

fn check_system(a: &Mat, b: &Mat, c: &Mat) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "system (A, B, C) has shapes {:?}, {:?}, {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    Ok(())
}

/// H₂ norm of `C (sI - A)^-1 B` from the controllability Gramian.
pub fn h2_norm(a: &Mat, b: &Mat, c: &Mat) -> Result<f64> {
    check_system(a, b, c)?;
    let x = solve_lyapunov(a, &(b * b.transpose()))?;
    Ok((c * x * c.transpose()).trace().max(0.0).sqrt())
}

/// Largest singular value of `C (jωI - A)^-1 B`.
pub fn freq_response_sigma(a: &Mat, b: &Mat, c: &Mat, omega: f64) -> f64 {
    let n = a.nrows();
    let jw = CMat::identity(n, n) * Complex64::new(0.0, omega);
    let m = jw - a.map(|x| Complex64::new(x, 0.0));
    let bc = b.map(|x| Complex64::new(x, 0.0));
    let Some(sol) = m.lu().solve(&bc) else {
        return f64::INFINITY;
    };
    let g = c.map(|x| Complex64::new(x, 0.0)) * sol;
    if g.is_empty() {
        return 0.0;
    }
    SVD::new(g, false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// H∞ norm from the imaginary-axis eigenvalue test on
/// `H(γ) = [[A, γ^-2 BB^T], [-C^T C, -A^T]]`: a level-set iteration that lifts
/// γ to the peak gain between crossing frequencies, with bisection as the
/// fallback when it stalls.
///
/// Returns a certified upper bound within relative `tol` of the norm.
pub fn hinf_norm(a: &Mat, b: &Mat, c: &Mat, tol: f64) -> Result<f64> {
    check_system(a, b, c)?;
    let poles = eigenvalues(a)?;
    let abscissa = poles.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= -Tolerances::default().lyapunov_margin {
        return Err(Error::NotHurwitz { abscissa });
    }
    if b.iter().all(|&x| x == 0.0) || c.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let tol = tol.max(1e-14);

    let mut lo = freq_response_sigma(a, b, c, 0.0);
    let mut omegas: Vec<f64> = poles.iter().map(|z| z.norm()).filter(|w| *w > 0.0).collect();
    omegas.sort_by(|x, y| x.total_cmp(y));
    omegas.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * x.abs());
    for w in omegas {
        lo = lo.max(freq_response_sigma(a, b, c, w));
    }
    if lo == 0.0 {
        lo = f64::MIN_POSITIVE;
    }

    // Level-set iteration: lift γ to the largest gain at the midpoints of the
    // crossing intervals; quadratic once the peak is bracketed.
    for _ in 0..40 {
        let gamma = lo * (1.0 + tol);
        match imaginary_axis_frequencies(a, b, c, gamma)? {
            None => return Ok(gamma),
            Some(ws) => {
                let next = peak_at(a, b, c, &ws);
                if next <= gamma {
                    break;
                }
                lo = next;
            }
        }
    }

    let mut hi = 2.0 * lo;
    let mut guard = 0;
    loop {
        match imaginary_axis_frequencies(a, b, c, hi)? {
            None => break,
            Some(ws) => {
                lo = lo.max(peak_at(a, b, c, &ws)).max(hi);
                hi *= 2.0;
            }
        }
        guard += 1;
        if guard > 200 {
            return Err(Error::NoStabilizingSolution {
                reason: "H-infinity upper bracket search did not terminate".into(),
                eigenvalues: Vec::new(),
            });
        }
    }

    for _ in 0..200 {
        if hi - lo <= tol * hi {
            break;
        }
        let gamma = 0.5 * (lo + hi);
        match imaginary_axis_frequencies(a, b, c, gamma)? {
            None => hi = gamma,
            Some(ws) => lo = lo.max(gamma).max(peak_at(a, b, c, &ws).min(hi)),
        }
    }
    Ok(hi)
}

/// Max σ over the given frequencies, the midpoints between them and ω = 0.
fn peak_at(a: &Mat, b: &Mat, c: &Mat, ws: &[f64]) -> f64 {
    let mut best = freq_response_sigma(a, b, c, 0.0);
    for (i, &w) in ws.iter().enumerate() {
        best = best.max(freq_response_sigma(a, b, c, w));
        if let Some(&next) = ws.get(i + 1) {
            best = best.max(freq_response_sigma(a, b, c, 0.5 * (w + next)));
        }
    }
    best
}

/// Nonnegative frequencies ω with jω an eigenvalue of H(γ), or `None` when the
/// spectrum stays off the axis.
fn imaginary_axis_frequencies(a: &Mat, b: &Mat, c: &Mat, gamma: f64) -> Result<Option<Vec<f64>>> {
    let h = block(&[
        &[a, &(b * b.transpose() / (gamma * gamma))],
        &[&(-(c.transpose() * c)), &(-a.transpose())],
    ]);
    let band = Tolerances::default().imag_axis * (1.0 + norm2(&h));
    let mut ws: Vec<f64> = eigenvalues(&h)?
        .into_iter()
        .filter(|z| z.re.abs() < band)
        .map(|z| z.im.abs())
        .collect();
    if ws.is_empty() {
        return Ok(None);
    }
    ws.sort_by(|x, y| x.total_cmp(y));
    Ok(Some(ws))
}
