//! Deterministic discrete-event simulation of several blockchains, their
//! miners and mempools, an external oracle, and a lock-manager chain.
//!
//! Time advances in ticks. Every `block_interval_ticks` each chain seals a
//! block from its mempool, contract chains first and the lock chain last.
//! Oracle responses and client actions that fall on the same tick happen
//! after mining, so they land in the next block. All randomness comes from
//! one seeded generator, drawn in a fixed order.

mod block;
mod config;
mod history;
mod lock;
mod random;
mod sim;

pub use block::{execute_entry, Block, BlockEntry, CallEvent, EventKind, GasPayment, LockEntry, LockOp, LockOpResult};
pub use config::{
    ChainSpec, ClientSpec, Deployment, OracleSpec, OracleValues, ScenarioConfig, SpanSpec, DEFAULT_LOCK_CHAIN,
};
pub use history::{export_history, ClientSpan, DeployedContract, History, ObjectSnapshot, ObservedRead, SpanEvent};
pub use lock::{LockError, LockItem, LockRecord, LockRegistry, LockStatus};
pub use random::random_scenario;
pub use sim::{compile_deployments, run, ChainLog, Simulation};

use thiserror::Error;

use crate::interp::ExecError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("cannot load `{file}`: {message}")]
    Contract { file: String, message: String },
    #[error("invalid history: {0}")]
    History(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("deployment of `{name}` failed: {reason}")]
    DeployFailed { name: String, reason: String },
    #[error("replay diverged on chain `{chain}` block {block}: {detail}")]
    ReplayMismatch { chain: String, block: u64, detail: String },
    #[error("lock safety violated: {0}")]
    LockSafety(String),
}
