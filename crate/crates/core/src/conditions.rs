//! Executable solvability checks for the full-state and partial-state
//! synchronization problems.
//!
//! Full-state coupling (`C = I`) requires
//!   (a) `(A, B)` stabilizable, (b) `σ(A)` in the closed left half plane,
//!   (c) a directed spanning tree, (d) `im E ⊆ im B`.
//! Partial-state coupling requires
//!   (a) `(A, B)` stabilizable and `(C, A)` detectable, (b) as above,
//!   (c) `(A, E, C, 0)` minimum phase and left invertible,
//!   (d) a directed spanning tree, (e) `im E ⊆ im B`.

use std::fmt::Write as _;

use nalgebra::SVD;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::linalg::{block, eigenvalues, eigenvalues_clustered, norm2, CMat, Mat, Tolerances};
use crate::model::{AgentModel, CouplingKind};

const RANK_TOL: f64 = 1e-9;
/// Eigenvalues closer than this (relative to `1 + ‖A‖₂`) are judged by their
/// centroid: a size-k Jordan block hit by a perturbation ε splits by ε^(1/k),
/// about 1e-4 for k = 3 and ε = 1e-12, while the centroid moves by O(ε).
const CLUSTER_RADIUS: f64 = 1e-3;

/// Which of the two problem statements a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    FullState,
    PartialState,
}

impl Theorem {
    pub fn number(self) -> u8 {
        match self {
            Theorem::FullState => 1,
            Theorem::PartialState => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolvabilityReport {
    pub theorem: Theorem,
    pub stabilizable: bool,
    pub detectable: bool,
    pub clhp_eigs: bool,
    pub spanning_tree: bool,
    /// 0-based agents from which all others are reachable.
    pub spanning_tree_roots: Vec<usize>,
    pub disturbance_matched: bool,
    /// Least-squares `X` with `E ≈ BX`.
    pub disturbance_map: Mat,
    /// `None` for full-state coupling, where the condition does not apply.
    pub minphase_leftinv: Option<bool>,
    pub invariant_zeros: Vec<Complex64>,
    pub overall: bool,
}

/// PBH test: `rank [λI - A, B] = n` for every eigenvalue with `Re λ ≥ 0`.
pub fn check_stabilizable(a: &Mat, b: &Mat) -> Result<bool> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch("stabilizability: B rows".into()));
    }
    let scale = 1.0 + norm2(a);
    let eigs = eigenvalues_clustered(a, CLUSTER_RADIUS * scale)?;
    let band = Tolerances::default().imag_axis * scale;
    for lam in eigs.iter().filter(|z| z.re >= -band) {
        let shifted = CMat::identity(n, n) * *lam - to_complex(a);
        let m = CMat::from_fn(n, n + b.ncols(), |i, j| {
            if j < n {
                shifted[(i, j)]
            } else {
                Complex64::new(b[(i, j - n)], 0.0)
            }
        });
        if complex_rank(&m, RANK_TOL, 0.0) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dual PBH test on `(C, A)`.
pub fn check_detectable(a: &Mat, c: &Mat) -> Result<bool> {
    check_stabilizable(&a.transpose(), &c.transpose())
}

/// Spectral abscissa at most `1e-9·(1+‖A‖₂)`.
pub fn check_clhp(a: &Mat) -> Result<bool> {
    let scale = 1.0 + norm2(a);
    let eigs = eigenvalues_clustered(a, CLUSTER_RADIUS * scale)?;
    Ok(eigs.iter().all(|z| z.re <= 1e-9 * scale))
}

/// `im E ⊆ im B`, decided from the least-squares residual of `BX = E`.
pub fn check_disturbance_match(b: &Mat, e: &Mat) -> Result<(bool, Mat)> {
    if b.nrows() != e.nrows() {
        return Err(Error::DimensionMismatch("disturbance match: B and E rows".into()));
    }
    let x = if b.ncols() == 0 {
        Mat::zeros(0, e.ncols())
    } else {
        let svd = SVD::new(b.clone(), true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        svd.pseudo_inverse(RANK_TOL * smax.max(f64::MIN_POSITIVE))
            .map_err(|m| Error::DimensionMismatch(m.to_string()))?
            * e
    };
    let residual = if b.ncols() == 0 { norm2(e) } else { norm2(&(b * &x - e)) };
    Ok((residual <= 1e-9 * (1.0 + norm2(e)), x))
}

/// Left invertibility (normal rank of the Rosenbrock pencil equals `n + w`),
/// invariant zeros, and minimum phase (all finite zeros with `Re < -1e-9`).
///
/// Returns `(minimum_phase_and_left_invertible, zeros)`.
pub fn check_minphase_leftinv(a: &Mat, e: &Mat, c: &Mat) -> Result<(bool, Vec<Complex64>)> {
    let n = a.nrows();
    let w = e.ncols();
    if e.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch("Rosenbrock pencil".into()));
    }
    if normal_rank(a, e, c)? < n + w {
        return Err(Error::RankDeficientEverywhere);
    }
    let d = Mat::zeros(c.nrows(), w);
    let zeros = invariant_zeros(a, e, c, &d)?;
    let minphase = zeros.iter().all(|z| z.re < -1e-9);
    Ok((minphase, zeros))
}

/// Rank of `[[sI - A, -E], [C, 0]]` at two pseudo-random points `1 ≤ |s| ≤ 10`
/// kept at least 1e-3 away from `σ(A)`; the larger rank is the normal rank.
pub fn normal_rank(a: &Mat, e: &Mat, c: &Mat) -> Result<usize> {
    let n = a.nrows();
    let w = e.ncols();
    let p = c.nrows();
    let poles = eigenvalues(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2a11);
    let mut best = 0;
    let mut drawn = 0;
    while drawn < 2 {
        let radius = rng.random_range(1.0..10.0);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let s = Complex64::from_polar(radius, angle);
        if poles.iter().any(|z| (z - s).norm() < 1e-3) {
            continue;
        }
        drawn += 1;
        let pencil = CMat::from_fn(n + p, n + w, |i, j| match (i < n, j < n) {
            (true, true) => {
                let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
                diag - a[(i, j)]
            }
            (true, false) => Complex64::new(-e[(i, j - n)], 0.0),
            (false, true) => Complex64::new(c[(i - n, j)], 0.0),
            (false, false) => Complex64::new(0.0, 0.0),
        });
        best = best.max(complex_rank(&pencil, RANK_TOL, 0.0));
    }
    Ok(best)
}

/// Finite invariant zeros of `(A, B, C, D)` for a left-invertible system.
///
/// Infinite zeros are deflated by repeated orthogonal compressions of the
/// system matrix (each step removes the state directions the outputs see
/// without delay); what remains is a standard eigenproblem.
pub fn invariant_zeros(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<Vec<Complex64>> {
    let scale = 1.0 + norm2(&block(&[&[a, b], &[c, d]]));
    let thresh = RANK_TOL * scale;
    let (mut a, mut b, mut c, mut d) = (a.clone(), b.clone(), c.clone(), d.clone());
    loop {
        let n = a.nrows();
        if n == 0 {
            return Ok(Vec::new());
        }
        if b.ncols() == 0 {
            // pencil [A - sI; C]: zeros are the unobservable modes of (C, A)
            let (k, v) = column_compress(&c, thresh);
            if k == 0 {
                return eigenvalues(&a);
            }
            let at = v.transpose() * &a * &v;
            let n1 = n - k;
            c = at.view((n1, 0), (k, n1)).into_owned();
            a = at.view((0, 0), (n1, n1)).into_owned();
            b = Mat::zeros(n1, 0);
            d = Mat::zeros(k, 0);
            continue;
        }
        let m = b.ncols();
        let (r, u) = row_compress(&d, thresh);
        let ud = u.transpose() * &d;
        let uc = u.transpose() * &c;
        let d1 = ud.rows(0, r).into_owned();
        let c1 = uc.rows(0, r).into_owned();
        let c2 = uc.rows(r, uc.nrows() - r).into_owned();
        if r == m {
            let d1_inv = d1
                .try_inverse()
                .ok_or(Error::RankDeficientEverywhere)?;
            a = &a - &b * d1_inv * &c1;
            b = Mat::zeros(n, 0);
            d = Mat::zeros(c2.nrows(), 0);
            c = c2;
            continue;
        }
        let (k, v) = column_compress(&c2, thresh);
        if k == 0 {
            return Err(Error::RankDeficientEverywhere);
        }
        let at = v.transpose() * &a * &v;
        let bt = v.transpose() * &b;
        let c1t = &c1 * &v;
        let n1 = n - k;
        let a11 = at.view((0, 0), (n1, n1)).into_owned();
        let a21 = at.view((n1, 0), (k, n1)).into_owned();
        let b1 = bt.rows(0, n1).into_owned();
        let b2 = bt.rows(n1, k).into_owned();
        let c11 = c1t.columns(0, n1).into_owned();
        c = block(&[&[&a21], &[&c11]]);
        d = block(&[&[&b2], &[&d1]]);
        a = a11;
        b = b1;
    }
}

/// Orthogonal `V` with `M V = [0, M₂]`, `M₂` of full column rank `k`.
fn column_compress(m: &Mat, thresh: f64) -> (usize, Mat) {
    let cols = m.ncols();
    let rows = m.nrows().max(cols);
    let mut padded = Mat::zeros(rows, cols);
    padded.rows_mut(0, m.nrows()).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.iter().filter(|&&s| s > thresh).count();
    // columns: null-space directions first, then the row space
    let mut v = Mat::zeros(cols, cols);
    for j in 0..cols {
        let src = if j < cols - k { k + j } else { j - (cols - k) };
        v.set_column(j, &vt.row(src).transpose());
    }
    (k, v)
}

/// Orthogonal `U` with `U^T M = [M₁; 0]`, `M₁` of full row rank `r`.
fn row_compress(m: &Mat, thresh: f64) -> (usize, Mat) {
    let (r, v) = column_compress(&m.transpose(), thresh);
    // column_compress puts the range last; flip to range-first
    let rows = m.nrows();
    let mut u = Mat::zeros(rows, rows);
    for j in 0..rows {
        let src = if j < r { rows - r + j } else { j - r };
        u.set_column(j, &v.column(src));
    }
    (r, u)
}

fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Rank with threshold `max(rel·σ_max, abs)`.
fn complex_rank(m: &CMat, rel: f64, abs: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let t = (rel * smax).max(abs);
    sv.iter().filter(|&&s| s > t).count()
}

/// Evaluates every condition that applies to the model's coupling kind.
pub fn full_report(model: &AgentModel, g: &CommGraph) -> Result<SolvabilityReport> {
    let theorem = match model.coupling() {
        CouplingKind::FullState => Theorem::FullState,
        CouplingKind::PartialState => Theorem::PartialState,
    };
    let stabilizable = check_stabilizable(&model.a, &model.b)?;
    let detectable = check_detectable(&model.a, &model.c)?;
    let clhp_eigs = check_clhp(&model.a)?;
    let tree = g.spanning_tree();
    let (disturbance_matched, disturbance_map) = check_disturbance_match(&model.b, &model.e)?;
    let (minphase_leftinv, invariant_zeros) = match theorem {
        Theorem::FullState => (None, Vec::new()),
        Theorem::PartialState => match check_minphase_leftinv(&model.a, &model.e, &model.c) {
            Ok((ok, z)) => (Some(ok), z),
            Err(Error::RankDeficientEverywhere) => (Some(false), Vec::new()),
            Err(other) => return Err(other),
        },
    };
    let mut report = SolvabilityReport {
        theorem,
        stabilizable,
        detectable,
        clhp_eigs,
        spanning_tree: tree.exists(),
        spanning_tree_roots: tree.roots,
        disturbance_matched,
        disturbance_map,
        minphase_leftinv,
        invariant_zeros,
        overall: false,
    };
    report.overall = report.failed_conditions().is_empty();
    Ok(report)
}

impl SolvabilityReport {
    /// Violated conditions as `(label, description)`, labelled per theorem.
    pub fn failed_conditions(&self) -> Vec<(char, &'static str)> {
        let mut out = Vec::new();
        match self.theorem {
            Theorem::FullState => {
                if !self.stabilizable {
                    out.push(('a', "(A,B) is not stabilizable"));
                }
                if !self.clhp_eigs {
                    out.push(('b', "A has eigenvalues in the open right half plane"));
                }
                if !self.spanning_tree {
                    out.push(('c', "graph has no directed spanning tree"));
                }
                if !self.disturbance_matched {
                    out.push(('d', "im E is not contained in im B"));
                }
            }
            Theorem::PartialState => {
                if !self.stabilizable || !self.detectable {
                    out.push(('a', "(A,B) not stabilizable or (C,A) not detectable"));
                }
                if !self.clhp_eigs {
                    out.push(('b', "A has eigenvalues in the open right half plane"));
                }
                if self.minphase_leftinv != Some(true) {
                    out.push(('c', "(A,E,C,0) is not minimum phase and left invertible"));
                }
                if !self.spanning_tree {
                    out.push(('d', "graph has no directed spanning tree"));
                }
                if !self.disturbance_matched {
                    out.push(('e', "im E is not contained in im B"));
                }
            }
        }
        out
    }

    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(&mut s, "theorem", self.theorem.number().to_string());
        kv(
            &mut s,
            "coupling",
            match self.theorem {
                Theorem::FullState => "full-state",
                Theorem::PartialState => "partial-state",
            }
            .into(),
        );
        kv(&mut s, "stabilizable", self.stabilizable.to_string());
        kv(&mut s, "detectable", self.detectable.to_string());
        kv(&mut s, "clhp_eigs", self.clhp_eigs.to_string());
        kv(&mut s, "spanning_tree", self.spanning_tree.to_string());
        let roots: Vec<String> = self.spanning_tree_roots.iter().map(|r| (r + 1).to_string()).collect();
        kv(&mut s, "spanning_tree_roots", roots.join(" "));
        kv(&mut s, "disturbance_matched", self.disturbance_matched.to_string());
        let x = &self.disturbance_map;
        let entries: Vec<String> = (0..x.nrows())
            .flat_map(|i| (0..x.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| format!("{:e}", x[(i, j)]))
            .collect();
        kv(&mut s, "disturbance_map", format!("{}x{} {}", x.nrows(), x.ncols(), entries.join(" ")));
        kv(
            &mut s,
            "minphase_leftinv",
            self.minphase_leftinv.map_or("n/a".to_string(), |b| b.to_string()),
        );
        let zeros: Vec<String> = self
            .invariant_zeros
            .iter()
            .map(|z| format!("{:e}{:+e}i", z.re, z.im))
            .collect();
        kv(&mut s, "invariant_zeros", zeros.join(" "));
        kv(&mut s, "overall", self.overall.to_string());
        let failed: Vec<String> = self
            .failed_conditions()
            .iter()
            .map(|(c, d)| format!("({c}) {d}"))
            .collect();
        kv(&mut s, "failed_conditions", failed.join("; "));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    #[test]
    fn stabilizability_scalars() {
        assert!(check_stabilizable(&m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap());
        assert!(!check_stabilizable(&m(1, 1, &[1.0]), &m(1, 1, &[0.0])).unwrap());
        assert!(check_detectable(&m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap());
        assert!(!check_detectable(&m(1, 1, &[1.0]), &m(1, 1, &[0.0])).unwrap());
    }

    #[test]
    fn triple_integrator_controllable_and_observable() {
        let t = cases::triple_integrator();
        // oracle: controllability / observability matrices have rank 3
        let ctrb = block(&[&[&t.b, &(&t.a * &t.b), &(&t.a * &t.a * &t.b)]]);
        let obsv = block(&[&[&t.c], &[&(&t.c * &t.a)], &[&(&t.c * &t.a * &t.a)]]);
        assert_eq!(crate::linalg::rank(&ctrb, 1e-12), 3);
        assert_eq!(crate::linalg::rank(&obsv, 1e-12), 3);
        assert!(check_stabilizable(&t.a, &t.b).unwrap());
        assert!(check_detectable(&t.a, &t.c).unwrap());
        assert!(check_clhp(&t.a).unwrap());
    }

    #[test]
    fn clhp_cases() {
        assert!(check_clhp(&Mat::zeros(3, 3)).unwrap());
        assert!(!check_clhp(&m(1, 1, &[1.0])).unwrap());
    }

    #[test]
    fn disturbance_match_cases() {
        let (ok, x) = check_disturbance_match(&m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap();
        assert!(ok);
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
        let (ok, _) = check_disturbance_match(&m(2, 1, &[0.0, 1.0]), &m(2, 1, &[1.0, 0.0])).unwrap();
        assert!(!ok);
        let t = cases::triple_integrator();
        let (ok, x) = check_disturbance_match(&t.b, &t.e).unwrap();
        assert!(ok);
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triple_integrator_has_no_finite_zeros() {
        let t = cases::triple_integrator();
        let (ok, zeros) = check_minphase_leftinv(&t.a, &t.e, &t.c).unwrap();
        assert!(ok);
        assert!(zeros.is_empty(), "{zeros:?}");
    }

    #[test]
    fn nonminimum_phase_zero_at_one() {
        // C (sI - A)^-1 E = (1 - s) / s²
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = m(2, 1, &[0.0, 1.0]);
        let c = m(1, 2, &[1.0, -1.0]);
        let (ok, zeros) = check_minphase_leftinv(&a, &e, &c).unwrap();
        assert!(!ok);
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn minimum_phase_zero_in_lhp() {
        // C (sI - A)^-1 E = (s + 2) / (s (s + 1))
        let a = m(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        let e = m(2, 1, &[0.0, 1.0]);
        let c = m(1, 2, &[2.0, 1.0]);
        let (ok, zeros) = check_minphase_leftinv(&a, &e, &c).unwrap();
        assert!(ok);
        assert!((zeros[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-12, "{zeros:?}");
    }

    #[test]
    fn zeros_of_tall_system() {
        // two outputs sharing the zero at -3: y = [(s+3)/((s+1)(s+2)), (s+3)/(s+1)]
        // realization with states x1' = -x1 + w, x2' = -2 x2 + w
        //   (s+3)/((s+1)(s+2)) = 2/(s+1) - 1/(s+2)
        //   (s+3)/(s+1)        = 1 + 2/(s+1)  -> has feedthrough, so use D
        let a = m(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = m(2, 1, &[1.0, 1.0]);
        let c = m(2, 2, &[2.0, -1.0, 2.0, 0.0]);
        let d = m(2, 1, &[0.0, 1.0]);
        let zeros = invariant_zeros(&a, &b, &c, &d).unwrap();
        assert_eq!(zeros.len(), 1, "{zeros:?}");
        assert!((zeros[0] - Complex64::new(-3.0, 0.0)).norm() < 1e-10, "{zeros:?}");
    }

    #[test]
    fn zero_disturbance_is_not_left_invertible() {
        let t = cases::triple_integrator();
        assert!(matches!(
            check_minphase_leftinv(&t.a, &Mat::zeros(3, 1), &t.c),
            Err(Error::RankDeficientEverywhere)
        ));
    }

    #[test]
    fn report_for_example_network() {
        let r = full_report(&cases::triple_integrator(), &cases::case1_graph()).unwrap();
        assert!(r.overall, "{}", r.to_text());
        assert_eq!(r.theorem, Theorem::PartialState);
        assert_eq!(r.spanning_tree_roots, vec![0]);
        assert!(r.to_text().contains("overall = true"));
    }

    #[test]
    fn report_failures_name_conditions() {
        let t = cases::triple_integrator();
        let split = CommGraph::from_edges(4, &[(1, 0, 1.0), (3, 2, 1.0)]).unwrap();
        let r = full_report(&t, &split).unwrap();
        assert!(!r.overall);
        assert_eq!(r.failed_conditions().iter().map(|c| c.0).collect::<Vec<_>>(), vec!['d']);

        let unstable = AgentModel::new(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let r = full_report(&unstable, &cases::case1_graph()).unwrap();
        assert_eq!(r.theorem, Theorem::FullState);
        assert_eq!(r.failed_conditions().iter().map(|c| c.0).collect::<Vec<_>>(), vec!['b']);
    }
}
