//! Networked closed loop from the stacked disturbances `ω = (ω₁,…,ω_N)` to the
//! synchronization errors `x̄ᵢ = xᵢ − x_N`.
//!
//! Two assemblies are provided. The error-coordinate form uses
//! `e = x̄ − χ̄` (and, for protocol 2, `ē = (L̄⊗I)x̄ − x̃` with `x̃` the stacked
//! filter differences); it is block triangular, which makes stability
//! transparent. The stacked form wires the agent and controller equations
//! together verbatim and is kept as an independent check of the first.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{CommGraph, LaplacianPair};
use crate::linalg::{block, h2_norm, hinf_norm, kron, norm2, spectral_abscissa, Mat};
use crate::model::AgentModel;
use crate::protocol::{synthesize, ProtocolKind, ProtocolRealization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinates {
    /// `(x̄, e)` or `(x̄, ē, e)`.
    ErrorForm,
    /// Differences of the raw per-agent `(xᵢ, x_{c,i})` with respect to agent N.
    StackedForm,
}

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub n_agents: usize,
    pub coordinates: Coordinates,
    /// Names of the state blocks, in order.
    pub labels: Vec<&'static str>,
}

impl ClosedLoop {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        spectral_abscissa(&self.a)
    }
}

fn check_dims(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair, want: ProtocolKind) -> Result<()> {
    if real.kind != want {
        return Err(Error::DimensionMismatch(format!(
            "expected a {want} realization, got {}",
            real.kind
        )));
    }
    let n = model.n();
    if real.p.shape() != (n, n) || real.q.as_ref().is_some_and(|q| q.shape() != (n, n)) {
        return Err(Error::DimensionMismatch(format!(
            "realization is for n = {}, model has n = {n}",
            real.p.nrows()
        )));
    }
    if lp.l.nrows() < 2 {
        return Err(Error::DimensionMismatch("at least two agents are required".into()));
    }
    Ok(())
}

/// Protocol 1 in `(x̄, e)`:
///
/// ```text
/// x̄̇ = [I⊗(A − ρBBᵀP)]x̄ + ρ(I⊗BBᵀP)e + (Π⊗E)ω
/// ė = (I⊗A − ρL̄⊗I)e + (Π⊗E)ω
/// ```
pub fn assemble_p1(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair) -> Result<ClosedLoop> {
    check_dims(model, real, lp, ProtocolKind::P1)?;
    let n = model.n();
    let m1 = lp.l_reduced.nrows();
    let eye = Mat::identity(m1, m1);
    let bbtp = &model.b * model.b.transpose() * &real.p;
    let a_lqr = &model.a - &bbtp * real.rho;
    let a_e = kron(&eye, &model.a) - kron(&lp.l_reduced, &Mat::identity(n, n)) * real.rho;
    let a = block(&[
        &[&kron(&eye, &a_lqr), &(kron(&eye, &bbtp) * real.rho)],
        &[&Mat::zeros(m1 * n, m1 * n), &a_e],
    ]);
    let pe = kron(&lp.pi, &model.e);
    let b = block(&[&[&pe], &[&pe]]);
    Ok(ClosedLoop {
        c: selector(m1 * n, a.nrows()),
        a,
        b,
        n_agents: m1 + 1,
        coordinates: Coordinates::ErrorForm,
        labels: vec!["x̄", "e"],
    })
}

/// Protocol 2 in `(x̄, ē, e)`:
///
/// ```text
/// x̄̇ = [I⊗(A − ρBBᵀP)]x̄ + ρ(I⊗BBᵀP)e + (Π⊗E)ω
/// ē̇ = [I⊗(A − δ⁻²QCᵀC)]ē + (L̄Π⊗E)ω
/// ė = (I⊗A − ρL̄⊗I)e + ρē + (Π⊗E)ω
/// ```
pub fn assemble_p2(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair) -> Result<ClosedLoop> {
    check_dims(model, real, lp, ProtocolKind::P2)?;
    let n = model.n();
    let m1 = lp.l_reduced.nrows();
    let k = m1 * n;
    let rho = real.rho;
    let eye = Mat::identity(m1, m1);
    let bbtp = &model.b * model.b.transpose() * &real.p;
    let a_lqr = &model.a - &bbtp * rho;
    let gain = real
        .filter_gain(model)
        .ok_or_else(|| Error::DimensionMismatch("protocol 2 realization without filter".into()))?;
    let a_filter = &model.a - gain * &model.c;
    let a_e = kron(&eye, &model.a) - kron(&lp.l_reduced, &Mat::identity(n, n)) * rho;
    let z = Mat::zeros(k, k);
    let a = block(&[
        &[&kron(&eye, &a_lqr), &z, &(kron(&eye, &bbtp) * rho)],
        &[&z, &kron(&eye, &a_filter), &z],
        &[&z, &(Mat::identity(k, k) * rho), &a_e],
    ]);
    let pe = kron(&lp.pi, &model.e);
    let lpe = kron(&(&lp.l_reduced * &lp.pi), &model.e);
    let b = block(&[&[&pe], &[&lpe], &[&pe]]);
    Ok(ClosedLoop {
        c: selector(k, a.nrows()),
        a,
        b,
        n_agents: m1 + 1,
        coordinates: Coordinates::ErrorForm,
        labels: vec!["x̄", "ē", "e"],
    })
}

pub fn assemble(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair) -> Result<ClosedLoop> {
    match real.kind {
        ProtocolKind::P1 => assemble_p1(model, real, lp),
        ProtocolKind::P2 => assemble_p2(model, real, lp),
    }
}

/// `[I_k, 0]` with `cols` columns.
fn selector(k: usize, cols: usize) -> Mat {
    Mat::from_fn(k, cols, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Raw network matrices `(A_raw, B_raw)` over `(x₁, x_{c,1}, …, x_N, x_{c,N})`
/// with `ζ = (L⊗C)x` and `ζ̂ = (L⊗H_c)x_c`:
///
/// ```text
/// A_raw = I⊗[[A, BF_c], [0, A_c]] + L⊗[[0, 0], [B_c C, C_c H_c]],   B_raw = I⊗[E; 0]
/// ```
pub fn stacked_network(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair) -> Result<(Mat, Mat)> {
    check_dims(model, real, lp, real.kind)?;
    let n = model.n();
    let nc = real.controller_state_dim;
    let cm = real.controller_matrices(model);
    let agent = block(&[
        &[&model.a, &(&model.b * &cm.fc)],
        &[&Mat::zeros(nc, n), &cm.ac],
    ]);
    let coupling = block(&[
        &[&Mat::zeros(n, n), &Mat::zeros(n, nc)],
        &[&(&cm.bc * &model.c), &(&cm.cc * &cm.hc)],
    ]);
    let big_n = lp.l.nrows();
    let eye = Mat::identity(big_n, big_n);
    let a_raw = kron(&eye, &agent) + kron(&lp.l, &coupling);
    let b_raw = kron(&eye, &block(&[&[&model.e], &[&Mat::zeros(nc, model.w())]]));
    Ok((a_raw, b_raw))
}

/// The raw network reduced to differences with respect to agent N.
///
/// Because the rows of `L` sum to zero, `(Π⊗I)` maps the raw dynamics onto
/// `(Π⊗I) A_raw (S⊗I)` with `S = [I; 0]`.
pub fn assemble_stacked(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair) -> Result<ClosedLoop> {
    let (a_raw, b_raw) = stacked_network(model, real, lp)?;
    let n = model.n();
    let nc = real.controller_state_dim;
    let big_n = lp.l.nrows();
    let blk = n + nc;
    let pi = kron(&lp.pi, &Mat::identity(blk, blk));
    let s = selector((big_n - 1) * blk, big_n * blk).transpose();
    let a = &pi * a_raw * &s;
    let b = &pi * b_raw;
    let c = kron(
        &Mat::identity(big_n - 1, big_n - 1),
        &block(&[&[&Mat::identity(n, n), &Mat::zeros(n, nc)]]),
    );
    Ok(ClosedLoop {
        a,
        b,
        c,
        n_agents: big_n,
        coordinates: Coordinates::StackedForm,
        labels: vec!["raw"],
    })
}

/// `‖T_{ωx̄}‖_{H₂}`.
pub fn error_h2(cl: &ClosedLoop) -> Result<f64> {
    h2_norm(&cl.a, &cl.b, &cl.c)
}

/// Relative difference of the H₂ norms from the two assembly paths.
pub fn cross_check(model: &AgentModel, real: &ProtocolRealization, lp: &LaplacianPair) -> Result<(f64, f64, f64)> {
    let h_err = error_h2(&assemble(model, real, lp)?)?;
    let h_raw = error_h2(&assemble_stacked(model, real, lp)?)?;
    let rel = (h_err - h_raw).abs() / h_err.abs().max(h_raw.abs()).max(f64::MIN_POSITIVE);
    Ok((h_err, h_raw, if h_err == 0.0 && h_raw == 0.0 { 0.0 } else { rel }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub rho: f64,
    pub delta: Option<f64>,
    pub h2: f64,
    pub rho_times_h2: f64,
    pub spectral_abscissa: f64,
}

/// Synthesizes, assembles and measures the H₂ norm for every ρ; rows are
/// returned sorted by ρ.
pub fn rho_scaling_probe(
    model: &AgentModel,
    g: &CommGraph,
    kind: ProtocolKind,
    rhos: &[f64],
    delta_hint: Option<f64>,
) -> Result<Vec<ProbeRow>> {
    if rhos.is_empty() {
        return Err(Error::ConfigInvalid("empty rho list".into()));
    }
    if !g.has_spanning_tree() {
        return Err(Error::PreconditionFailed {
            condition: match kind {
                ProtocolKind::P1 => 'c',
                ProtocolKind::P2 => 'd',
            },
            description: "graph has no directed spanning tree".into(),
        });
    }
    let lp = g.laplacian();
    let mut rows = rhos
        .par_iter()
        .map(|&rho| {
            let real = synthesize(model, kind, rho, delta_hint)?;
            let cl = assemble(model, &real, &lp)?;
            let h2 = error_h2(&cl)?;
            Ok(ProbeRow {
                rho,
                delta: real.delta,
                h2,
                rho_times_h2: rho * h2,
                spectral_abscissa: cl.spectral_abscissa()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    Ok(rows)
}

pub const PROBE_CSV_HEADER: &str = "rho,h2,rho_times_h2,spectral_abscissa";

pub fn probe_csv(rows: &[ProbeRow]) -> String {
    let mut s = String::from(PROBE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e}\n",
            r.rho, r.h2, r.rho_times_h2, r.spectral_abscissa
        ));
    }
    s
}

/// `‖(sI − I⊗A + ρL̄⊗I)⁻¹‖_{H∞}`: the map into the `e` block.
pub fn t2_inverse_hinf(model: &AgentModel, lp: &LaplacianPair, rho: f64, tol: f64) -> Result<f64> {
    let n = model.n();
    let m1 = lp.l_reduced.nrows();
    let a = kron(&Mat::identity(m1, m1), &model.a) - kron(&lp.l_reduced, &Mat::identity(n, n)) * rho;
    let eye = Mat::identity(m1 * n, m1 * n);
    hinf_norm(&a, &eye, &eye, tol)
}

/// `‖T_{ωē}‖_{H∞}` for protocol 2 together with the bound `‖L̄‖₂‖Π‖₂/ρ`.
pub fn t_omega_ebar_hinf(
    model: &AgentModel,
    real: &ProtocolRealization,
    lp: &LaplacianPair,
    tol: f64,
) -> Result<(f64, f64)> {
    let gain = real
        .filter_gain(model)
        .ok_or_else(|| Error::DimensionMismatch("protocol 2 realization required".into()))?;
    let m1 = lp.l_reduced.nrows();
    let n = model.n();
    let a = kron(&Mat::identity(m1, m1), &(&model.a - gain * &model.c));
    let b = kron(&(&lp.l_reduced * &lp.pi), &model.e);
    let value = hinf_norm(&a, &b, &Mat::identity(m1 * n, m1 * n), tol)?;
    let bound = norm2(&lp.l_reduced) * norm2(&lp.pi) / real.rho;
    Ok((value, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::linalg::is_hurwitz;
    use crate::protocol::{synthesize_p1, synthesize_p2};

    fn scalar_model(e: f64) -> AgentModel {
        let one = Mat::from_element(1, 1, 1.0);
        AgentModel::new(Mat::zeros(1, 1), one.clone(), one, Mat::from_element(1, 1, e)).unwrap()
    }

    fn pair() -> CommGraph {
        CommGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn scalar_pair_p1() {
        let m = scalar_model(1.0);
        let lp = pair().laplacian();
        for rho in [1.0, 3.0] {
            let real = synthesize_p1(&m, rho).unwrap();
            let cl = assemble_p1(&m, &real, &lp).unwrap();
            // P = 1, L̄ = [1]
            let want = Mat::from_row_slice(2, 2, &[-rho, rho, 0.0, -rho]);
            assert!(norm2(&(&cl.a - want)) < 1e-12);
            assert!(norm2(&(&cl.b - Mat::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]))) < 1e-15);
            // x̄ = (s + 2ρ)/(s + ρ)² (ω₁ − ω₂): impulse energy 5/(4ρ) per channel
            let h2 = error_h2(&cl).unwrap();
            assert!((h2 - (2.5 / rho).sqrt()).abs() < 1e-12, "{h2}");
        }
    }

    #[test]
    fn scalar_pair_p2_structure() {
        let m = scalar_model(1.0);
        let lp = pair().laplacian();
        let real = synthesize_p2(&m, 2.0, Some(0.1)).unwrap();
        let cl = assemble_p2(&m, &real, &lp).unwrap();
        assert_eq!(cl.a.shape(), (3, 3));
        let k = real.filter_gain(&m).unwrap()[(0, 0)];
        let want = Mat::from_row_slice(3, 3, &[-2.0, 0.0, 2.0, 0.0, -k, 0.0, 0.0, 2.0, -2.0]);
        assert!(norm2(&(&cl.a - want)) < 1e-12);
    }

    #[test]
    fn zero_disturbance() {
        let m = AgentModel::new(
            Mat::zeros(1, 1),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let real = synthesize_p1(&m, 2.0).unwrap();
        let cl = assemble_p1(&m, &real, &pair().laplacian()).unwrap();
        assert_eq!(error_h2(&cl).unwrap(), 0.0);
    }

    #[test]
    fn case1_dimensions_and_stability() {
        let m = cases::triple_integrator();
        let lp = cases::case1_graph().laplacian();
        let p1 = synthesize_p1(&m.with_full_state(), 4.0).unwrap();
        let cl = assemble_p1(&m.with_full_state(), &p1, &lp).unwrap();
        assert_eq!(cl.a.shape(), (12, 12));
        assert_eq!(cl.b.ncols(), 3);
        assert!(is_hurwitz(&cl.a).unwrap().0);
        let p2 = synthesize_p2(&m, 4.0, Some(cases::DELTA)).unwrap();
        let cl = assemble_p2(&m, &p2, &lp).unwrap();
        assert_eq!(cl.a.shape(), (18, 18));
        assert!(is_hurwitz(&cl.a).unwrap().0);
    }

    #[test]
    fn assembly_paths_agree() {
        let m = cases::triple_integrator();
        let lp = cases::case1_graph().laplacian();
        let p1 = synthesize_p1(&m.with_full_state(), 4.0).unwrap();
        let (_, _, rel) = cross_check(&m.with_full_state(), &p1, &lp).unwrap();
        assert!(rel < 1e-6, "{rel}");
        let p2 = synthesize_p2(&m, 4.0, Some(cases::DELTA)).unwrap();
        let (_, _, rel) = cross_check(&m, &p2, &lp).unwrap();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn probe_rejects_graph_without_spanning_tree() {
        let g = CommGraph::from_edges(4, &[(1, 0, 1.0), (3, 2, 1.0)]).unwrap();
        let r = rho_scaling_probe(&cases::triple_integrator(), &g, ProtocolKind::P2, &[4.0], None);
        assert!(matches!(r, Err(Error::PreconditionFailed { condition: 'd', .. })));
    }

    #[test]
    fn probe_csv_columns() {
        let rows = rho_scaling_probe(
            &cases::triple_integrator(),
            &cases::case1_graph(),
            ProtocolKind::P2,
            &[6.0, 4.0],
            Some(cases::DELTA),
        )
        .unwrap();
        assert_eq!(rows[0].rho, 4.0);
        let csv = probe_csv(&rows);
        assert!(csv.starts_with("rho,h2,rho_times_h2,spectral_abscissa\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
