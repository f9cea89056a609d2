//! Discrete-event simulation of a merge-mined beacon and its shards.

pub mod config;
pub mod engine;
pub mod stats;

pub use config::{MinerConfig, MiningMode, ShardSubset, SimConfig, VotePolicy};
pub use engine::{mine_step, network_params, run, run_many, SimOutput};
pub use stats::{SimEvent, SimStats};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Runtime(String),
}
