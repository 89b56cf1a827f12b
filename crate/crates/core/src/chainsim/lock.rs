use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Address;

/// One lockable attribute of a deployed object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LockItem {
    pub chain: String,
    pub contract: String,
    pub attr: String,
}

impl LockItem {
    pub fn new(chain: &str, contract: &str, attr: &str) -> Self {
        LockItem { chain: chain.into(), contract: contract.into(), attr: attr.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LockStatus {
    Held,
    Released,
    Forfeited,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LockRecord {
    pub lock_id: String,
    pub holder: Address,
    pub items: Vec<LockItem>,
    pub status: LockStatus,
    pub acquired_at: u64,
    pub released_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LockError {
    #[error("unknown lock `{0}`")]
    UnknownLock(String),
    #[error("lock `{0}` is no longer held")]
    AlreadyReleased(String),
    #[error("a release must end in Released or Forfeited")]
    NotTerminal,
}

/// Two-phase lock table kept by the lock-manager chain. Acquisition is
/// all-or-nothing over a set of items.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockRegistry {
    records: BTreeMap<u64, LockRecord>,
    next: u64,
}

impl LockRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Grants a fresh lock over `items`, or `None` when any item is held.
    pub fn acquire_locks(&mut self, holder: &Address, items: &[LockItem], tick: u64) -> Option<String> {
        if items.iter().any(|i| self.holder_of(i).is_some()) {
            return None;
        }
        self.next += 1;
        let lock_id = format!("lock-{}", self.next);
        let mut items = items.to_vec();
        items.sort();
        items.dedup();
        self.records.insert(
            self.next,
            LockRecord {
                lock_id: lock_id.clone(),
                holder: holder.clone(),
                items,
                status: LockStatus::Held,
                acquired_at: tick,
                released_at: None,
            },
        );
        Some(lock_id)
    }

    pub fn release_lock(&mut self, lock_id: &str, outcome: LockStatus, tick: u64) -> Result<(), LockError> {
        if outcome == LockStatus::Held {
            return Err(LockError::NotTerminal);
        }
        let rec = self.record_mut(lock_id).ok_or_else(|| LockError::UnknownLock(lock_id.to_string()))?;
        if rec.status != LockStatus::Held {
            return Err(LockError::AlreadyReleased(lock_id.to_string()));
        }
        rec.status = outcome;
        rec.released_at = Some(tick);
        Ok(())
    }

    pub fn get(&self, lock_id: &str) -> Option<&LockRecord> {
        Self::number(lock_id).and_then(|n| self.records.get(&n))
    }

    fn record_mut(&mut self, lock_id: &str) -> Option<&mut LockRecord> {
        Self::number(lock_id).and_then(|n| self.records.get_mut(&n))
    }

    fn number(lock_id: &str) -> Option<u64> {
        lock_id.strip_prefix("lock-")?.parse().ok()
    }

    pub fn holder_of(&self, item: &LockItem) -> Option<&LockRecord> {
        self.records.values().find(|r| r.status == LockStatus::Held && r.items.binary_search(item).is_ok())
    }

    /// Whether `lock_id` is held by `holder` and covers all of `items`.
    pub fn covers(&self, lock_id: &str, holder: &Address, items: &[LockItem]) -> bool {
        self.get(lock_id).is_some_and(|r| {
            r.status == LockStatus::Held
                && &r.holder == holder
                && items.iter().all(|i| r.items.binary_search(i).is_ok())
        })
    }

    pub fn records(&self) -> impl Iterator<Item = &LockRecord> {
        self.records.values()
    }
}
