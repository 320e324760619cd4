//! The triple-integrator example network: agent model, the two communication
//! topologies and the protocol parameters used to exercise them.

use crate::graph::CommGraph;
use crate::linalg::Mat;
use crate::model::AgentModel;

/// Filter Riccati parameter used for every ρ in the example.
pub const DELTA: f64 = 0.0004;

/// Protocol gains compared in the example.
pub const RHOS: [f64; 3] = [4.0, 6.0, 10.0];

/// `A` = triple integrator, `B = E = e₃`, `C = e₁^T`.
pub fn triple_integrator() -> AgentModel {
    let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let b = Mat::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
    let c = Mat::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    AgentModel::new(a, b.clone(), c, b).expect("valid model")
}

/// Case I: three agents, `a_21 = a_32 = 1`.
pub fn case1_graph() -> CommGraph {
    CommGraph::from_edges(3, &one_based(&[(2, 1), (3, 2)])).expect("valid graph")
}

/// Case II: twenty agents with unit weights.
pub fn case2_graph() -> CommGraph {
    const EDGES: [(usize, usize); 22] = [
        (1, 6),
        (2, 1),
        (3, 2),
        (4, 3),
        (5, 4),
        (6, 5),
        (7, 6),
        (8, 7),
        (9, 8),
        (10, 9),
        (11, 10),
        (12, 11),
        (13, 12),
        (13, 20),
        (14, 13),
        (15, 14),
        (15, 6),
        (16, 15),
        (17, 16),
        (18, 17),
        (19, 18),
        (20, 18),
    ];
    CommGraph::from_edges(20, &one_based(&EDGES)).expect("valid graph")
}

fn one_based(edges: &[(usize, usize)]) -> Vec<(usize, usize, f64)> {
    edges.iter().map(|&(i, j)| (i - 1, j - 1, 1.0)).collect()
}
