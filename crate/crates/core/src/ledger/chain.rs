use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::{History, HistoryEntry, HistoryView, StateView, VersionedValue, WorldState};
use super::store::{BlockStore, StoreFailpoint};
use super::types::{Block, StateKey, ValidityFlag, Version};
use super::validate::{validate_envelopes, EndorsementPolicy};
use super::verify::{verify_blocks, ChainReport};
use crate::canonical::Digest;
use crate::membership::MembershipRegistry;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("BAD_LINKAGE: expected block {expected_number} after tip, got {number}{}", if *.prev_hash_mismatch { " (prevHash mismatch)" } else { "" })]
    BadLinkage { expected_number: u64, number: u64, prev_hash_mismatch: bool },
    #[error("corrupt block log at block {block}: {reason}")]
    Corrupt { block: u64, reason: String },
    #[error("recovery failed: {0}")]
    Recovery(String),
    #[error("injected commit failure")]
    InjectedFailure,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a transaction landed and how it was flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxLocation {
    pub block_number: u64,
    pub tx_index: u32,
    pub flag: ValidityFlag,
}

/// Failure injection points inside [`Ledger::append_block`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitFailpoint {
    /// Abort after validation, before anything is written.
    BeforeLogAppend,
    /// Abort after writing part of the block line to the log.
    TornLogWrite,
}

/// A hash-chained block log with its materialized world state and per-key
/// history. Commits are serialized through `&mut self`.
#[derive(Debug)]
pub struct Ledger {
    blocks: Vec<Block>,
    tip_hash: Digest,
    state: WorldState,
    history: History,
    tx_index: HashMap<String, TxLocation>,
    store: Option<BlockStore>,
    failpoint: Option<CommitFailpoint>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// An in-memory ledger holding only the genesis block.
    pub fn new() -> Ledger {
        let genesis = Block::genesis();
        Ledger {
            tip_hash: genesis.hash(),
            blocks: vec![genesis],
            state: WorldState::new(),
            history: History::default(),
            tx_index: HashMap::new(),
            store: None,
            failpoint: None,
        }
    }

    /// Opens (or initializes) a persistent ledger in `dir`.
    ///
    /// The block log is verified end to end, world state and history are
    /// rebuilt by replay, and the state snapshot is reconciled against the
    /// replayed state from the snapshot's block onward.
    pub fn open(dir: &Path) -> Result<Ledger, LedgerError> {
        let (store, blocks, snapshot) = BlockStore::open(dir)?;
        let mut ledger = Ledger::new();
        if blocks.is_empty() {
            let mut store = store;
            store.append(&ledger.blocks[0])?;
            store.write_snapshot(&ledger.state, 0)?;
            ledger.store = Some(store);
            return Ok(ledger);
        }

        let report = verify_blocks(&blocks, None);
        if let Some(problem) = report.problems.first() {
            return Err(LedgerError::Corrupt { block: problem.block, reason: problem.detail.clone() });
        }

        let mut snapshot_state = None;
        for block in blocks.into_iter().skip(1) {
            if let Some((state, last)) = &snapshot {
                if block.number == *last + 1 {
                    snapshot_state = Some(state.clone());
                }
            }
            ledger.apply_committed(block);
            if let Some(state) = snapshot_state.as_mut() {
                let block = ledger.blocks.last().expect("just applied");
                apply_effects(state, None, block);
            }
        }

        if let Some((state, last)) = snapshot {
            if last > ledger.height() {
                return Err(LedgerError::Recovery(format!(
                    "snapshot at block {last} is ahead of the log tip {}",
                    ledger.height()
                )));
            }
            let reconciled = snapshot_state.unwrap_or(state);
            if reconciled.canonical_bytes() != ledger.state.canonical_bytes() {
                return Err(LedgerError::Recovery(format!(
                    "snapshot at block {last} does not replay to the log's state"
                )));
            }
        }

        let mut store = store;
        store.write_snapshot(&ledger.state, ledger.height())?;
        ledger.store = Some(store);
        Ok(ledger)
    }

    pub fn height(&self) -> u64 {
        self.blocks.last().map(|b| b.number).unwrap_or(0)
    }

    pub fn tip_hash(&self) -> Digest {
        self.tip_hash
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, number: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(number).ok()?)
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn get_state(&self, key: &StateKey) -> Option<&VersionedValue> {
        self.state.get_state(key)
    }

    pub fn get_history(&self, key: &StateKey) -> &[HistoryEntry] {
        self.history.get(key)
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn tx_location(&self, tx_id: &str) -> Option<TxLocation> {
        self.tx_index.get(tx_id).copied()
    }

    pub fn has_tx(&self, tx_id: &str) -> bool {
        self.tx_index.contains_key(tx_id)
    }

    pub fn is_persistent(&self) -> bool {
        self.store.is_some()
    }

    pub fn set_failpoint(&mut self, failpoint: Option<CommitFailpoint>) {
        self.failpoint = failpoint;
    }

    /// Validates and commits the next block.
    ///
    /// On success the block is returned with validity flags filled in. On
    /// error nothing is applied: state, history and the persisted log are
    /// exactly as before the call.
    pub fn append_block(
        &mut self,
        mut block: Block,
        policy: &EndorsementPolicy,
        registry: &MembershipRegistry,
    ) -> Result<&Block, LedgerError> {
        let expected_number = self.height() + 1;
        if block.number != expected_number || block.prev_hash != self.tip_hash {
            return Err(LedgerError::BadLinkage {
                expected_number,
                number: block.number,
                prev_hash_mismatch: block.prev_hash != self.tip_hash,
            });
        }

        let index = &self.tx_index;
        block.validity_flags =
            validate_envelopes(&self.state, block.number, &block.envelopes, policy, registry, &|tx: &str| {
                index.contains_key(tx)
            });

        if self.failpoint == Some(CommitFailpoint::BeforeLogAppend) {
            return Err(LedgerError::InjectedFailure);
        }

        if let Some(store) = self.store.as_mut() {
            let fp = (self.failpoint == Some(CommitFailpoint::TornLogWrite)).then_some(StoreFailpoint::TornWrite);
            store.append_with(&block, fp)?;
        }

        self.apply_committed(block);

        let height = self.height();
        if let Some(store) = self.store.as_mut() {
            // The log line is the commit point; a stale snapshot is repaired
            // by replay on the next open.
            store.write_snapshot(&self.state, height)?;
        }
        Ok(self.blocks.last().expect("block just committed"))
    }

    /// Applies an already-validated block (flags present) without
    /// re-validating it. Used for replay.
    fn apply_committed(&mut self, block: Block) {
        apply_effects(&mut self.state, Some(&mut self.history), &block);
        for (i, (env, flag)) in block.envelopes.iter().zip(&block.validity_flags).enumerate() {
            if matches!(flag, ValidityFlag::BadSignature | ValidityFlag::DuplicateTxid) {
                continue;
            }
            self.tx_index.entry(env.tx_id.clone()).or_insert(TxLocation {
                block_number: block.number,
                tx_index: i as u32,
                flag: *flag,
            });
        }
        self.tip_hash = block.hash();
        self.blocks.push(block);
    }

    /// Recomputes every link and data hash and checks that replaying the chain
    /// reproduces the live world state.
    pub fn verify_chain(&self) -> ChainReport {
        verify_blocks(&self.blocks, Some(&self.state))
    }

    /// The persisted form of the chain: one canonical line per block.
    pub fn log_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for block in &self.blocks {
            out.extend_from_slice(&block.canonical_bytes());
            out.push(b'\n');
        }
        out
    }
}

impl StateView for Ledger {
    fn get_state(&self, key: &StateKey) -> Option<&VersionedValue> {
        self.state.get_state(key)
    }
}

impl HistoryView for Ledger {
    fn get_history(&self, key: &StateKey) -> &[HistoryEntry] {
        self.history.get(key)
    }
}

/// Folds the valid writes of `block` into `state` (and `history`, if given).
pub(crate) fn apply_effects(state: &mut WorldState, mut history: Option<&mut History>, block: &Block) {
    for (i, env) in block.envelopes.iter().enumerate() {
        if !block.is_valid_at(i) {
            continue;
        }
        let version = Version::new(block.number, i as u32);
        for write in &env.write_set {
            state.apply(write, version);
            if let Some(history) = history.as_deref_mut() {
                history.record(write, version, &env.tx_id);
            }
        }
    }
}

/// Rebuilds world state and history from committed blocks.
pub fn replay(blocks: &[Block]) -> (WorldState, History) {
    let mut state = WorldState::new();
    let mut history = History::default();
    for block in blocks {
        apply_effects(&mut state, Some(&mut history), block);
    }
    (state, history)
}
