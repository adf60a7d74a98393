//! Distributed set-based state estimation over sensor networks.
//!
//! Every node keeps a zonotope that is guaranteed to contain the true state,
//! corrects it with bounded-noise measurements shared by its neighbors, and
//! fuses it with the neighbors' sets (the diffusion step).

pub mod error;
pub mod intersection;
pub mod metrics;
pub mod network;
pub mod observers;
pub mod plant;
pub mod simulation;
pub mod zonotope;

pub use error::{Error, Result};
pub use intersection::{DiffusionWeights, Strip, StripIntersectionGain};
pub use network::Topology;
pub use observers::{Dynamics, NodeState, ObserverConfig, ObserverKind};
pub use plant::{SystemModel, Trajectory};
pub use zonotope::Zonotope;
