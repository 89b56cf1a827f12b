use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::block::EventKind;
use super::SimError;
use crate::interp::{CallContext, ObjectState, Outcome, TraceEntry, Transfer};
use crate::value::{Address, Bytes32, Value};

/// Everything the serializability checker needs from a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct History {
    pub spans: Vec<ClientSpan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contracts: Vec<DeployedContract>,
    /// Object states right after the genesis blocks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_state: Vec<ObjectSnapshot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub final_state: Vec<ObjectSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_address: Option<Address>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeployedContract {
    pub address: String,
    pub chain: String,
    /// Printed source of the code actually deployed.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObjectSnapshot {
    pub chain: String,
    pub address: String,
    pub state: ObjectState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClientSpan {
    pub span_id: String,
    pub client_id: String,
    #[serde(default)]
    pub observed_reads: Vec<ObservedRead>,
    #[serde(default)]
    pub events: Vec<SpanEvent>,
}

impl ClientSpan {
    pub fn any_committed(&self) -> bool {
        self.events.iter().any(|e| e.outcome.is_committed())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservedRead {
    pub chain: String,
    pub contract: String,
    pub attr: String,
    pub value: Value,
    pub tick: u64,
    /// Number of commits, over all chains, visible when the read happened.
    pub after_commit: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpanEvent {
    pub kind: EventKind,
    pub chain: String,
    pub contract: String,
    pub function: String,
    pub ctx: CallContext,
    pub block_index: u64,
    pub block_tick: u64,
    pub position: usize,
    pub commit_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callback_id: Option<Bytes32>,
    pub outcome: Outcome,
    pub gas_used: u64,
    pub trace: Vec<TraceEntry>,
    pub read_snapshot: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transfers: Vec<Transfer>,
}

impl History {
    pub fn contract(&self, address: &str) -> Option<&DeployedContract> {
        self.contracts.iter().find(|c| c.address == address)
    }

    pub fn span(&self, span_id: &str) -> Option<&ClientSpan> {
        self.spans.iter().find(|s| s.span_id == span_id)
    }

    pub fn from_json(text: &str) -> Result<History, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::History(e.to_string()))
    }
}

/// Canonical, pretty-printed JSON with a stable field order.
pub fn export_history(history: &History) -> String {
    serde_json::to_string_pretty(history).expect("history serializes")
}
