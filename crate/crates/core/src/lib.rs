//! Deterministic round-based simulator of adaptive-security committee
//! scheduling (Composite and Dynamic layouts) over PBFT, SBFT and
//! proof-of-work committees.

pub mod adversary;
pub mod consensus;
pub mod error;
pub mod events;
pub mod experiment;
pub mod ledger;
pub mod metrics;
pub mod model;
pub mod net;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use sim::{run_simulation, SimConfig, SimOutput, Simulation};
