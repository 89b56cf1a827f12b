//! Transactional smart contracts: a small contract language with
//! `start_tx` / `end_tx` markers, static read/write-set analysis, a
//! rewriting pass that enforces client-transaction isolation and
//! atomicity, a gas-metered interpreter, a deterministic multi-chain
//! simulator, and a serializability oracle for the histories it produces.

pub mod analysis;
pub mod chainsim;
pub mod corpus;
pub mod dsl;
pub mod interp;
pub mod sample;
pub mod serializability;
pub mod transform;
pub mod value;
