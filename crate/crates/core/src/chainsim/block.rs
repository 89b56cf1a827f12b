use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lock::LockItem;
use crate::dsl::ast::ContractAst;
use crate::interp::{
    execute, CallContext, ExecError, ExecResult, ExternalRequest, Host, HostEffect, ObjectState, Outcome, TraceEntry,
    Transfer,
};
use crate::value::{Address, Bytes32, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    Deploy,
    Call,
    Callback,
}

/// A transaction waiting for, or included in, a contract-chain block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallEvent {
    pub kind: EventKind,
    pub chain: String,
    pub contract: String,
    pub function: String,
    pub ctx: CallContext,
    pub issued_at_tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callback_id: Option<Bytes32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GasPayment {
    pub payer: Address,
    pub miner: String,
    pub amount: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockEntry {
    pub event: CallEvent,
    pub outcome: Outcome,
    pub gas_used: u64,
    pub trace: Vec<TraceEntry>,
    /// Pre-state values of the function's static read set.
    pub read_snapshot: BTreeMap<String, Value>,
    pub transfers: Vec<Transfer>,
    pub effects: Vec<HostEffect>,
    pub external_requests: Vec<ExternalRequest>,
    pub gas: GasPayment,
    /// Position in the global commit order across all chains.
    pub commit_index: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum LockOp {
    Acquire { holder: Address, span_id: String, items: Vec<LockItem> },
    Release { lock_id: String },
    Forfeit { lock_id: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "camelCase")]
pub enum LockOpResult {
    Granted { lock_id: String },
    Denied,
    Done,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LockEntry {
    pub op: LockOp,
    pub result: LockOpResult,
    pub issued_at_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub chain: String,
    pub index: u64,
    pub tick: u64,
    pub miner: String,
    pub prev_digest: Bytes32,
    pub digest: Bytes32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<BlockEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lock_entries: Vec<LockEntry>,
}

impl Block {
    /// Seals the block: the digest covers every field but itself.
    pub fn seal(mut self) -> Self {
        self.digest = Bytes32::ZERO;
        let body = serde_json::to_vec(&self).expect("block serializes");
        self.digest = Bytes32::digest(&body);
        self
    }

    pub fn verify_digest(&self) -> bool {
        self.clone().seal().digest == self.digest
    }
}

/// Executes one included transaction against `state`. Gas is charged to
/// the sender and paid to `miner` whatever the outcome; `commit_index` is
/// left for the caller to assign.
pub fn execute_entry(
    ast: &ContractAst,
    read_set: &[String],
    state: &ObjectState,
    event: CallEvent,
    host: &dyn Host,
    miner: &str,
) -> Result<(BlockEntry, ExecResult), ExecError> {
    let read_snapshot = read_set.iter().filter_map(|a| state.get(a).map(|v| (a.clone(), v.clone()))).collect();
    let result = execute(ast, &event.function, state, &event.ctx, host)?;
    let entry = BlockEntry {
        gas: GasPayment { payer: event.ctx.sender.clone(), miner: miner.to_string(), amount: result.gas_used },
        event,
        outcome: result.outcome.clone(),
        gas_used: result.gas_used,
        trace: result.trace.clone(),
        read_snapshot,
        transfers: result.transfers.clone(),
        effects: result.effects.clone(),
        external_requests: result.external_requests.clone(),
        commit_index: 0,
    };
    Ok((entry, result))
}
