//! Hash-chained block log, key-versioned world state and commit-time
//! validation.

mod chain;
mod state;
mod store;
mod types;
mod validate;
mod verify;

pub use chain::{replay, CommitFailpoint, Ledger, LedgerError, TxLocation};
pub use state::{History, HistoryEntry, HistoryView, StateView, VersionedValue, WorldState};
pub use store::{LOG_FILE, SNAPSHOT_FILE};
pub use types::{
    body_bytes_of, compute_block_hash, compute_data_hash, Block, EndorsedAction, Namespace, ReadEntry, StateKey,
    TransactionEnvelope, ValidityFlag, Version, WriteEntry,
};
pub use validate::{validate_envelopes, EndorsementPolicy, PolicyError};
pub use verify::{parse_log, verify_blocks, verify_log_bytes, ChainProblem, ChainReport, ProblemKind};
