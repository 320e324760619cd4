pub mod cases;
pub mod closedloop;
pub mod conditions;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};
pub use graph::CommGraph;
pub use model::{AgentModel, CouplingKind};
pub use protocol::{ProtocolKind, ProtocolRealization};
