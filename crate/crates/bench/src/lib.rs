//! Fixtures shared by the benchmarks.

use h2sync::cases::{self, DELTA};
use h2sync::closedloop::{assemble, ClosedLoop};
use h2sync::protocol::synthesize_p2;

/// Protocol-2 closed loop in error coordinates for the twenty-agent case
/// (state dimension 171).
pub fn case2_loop(rho: f64) -> ClosedLoop {
    let m = cases::triple_integrator();
    let real = synthesize_p2(&m, rho, Some(DELTA)).expect("synthesis succeeds for the built-in case");
    assemble(&m, &real, &cases::case2_graph().laplacian()).expect("assembly succeeds")
}
