//! On-disk layout: `blocks.log` holds one canonical block per line and
//! `state.snapshot` holds the world state as of some block.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chain::LedgerError;
use super::state::WorldState;
use super::types::Block;
use super::verify::parse_log;
use crate::canonical;

pub const LOG_FILE: &str = "blocks.log";
pub const SNAPSHOT_FILE: &str = "state.snapshot";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StoreFailpoint {
    TornWrite,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Snapshot {
    last_block: u64,
    state: WorldState,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SnapshotRef<'a> {
    last_block: u64,
    state: &'a WorldState,
}

#[derive(Debug)]
pub(crate) struct BlockStore {
    dir: PathBuf,
    log: File,
    log_len: u64,
}

/// What [`BlockStore::open`] found on disk: the store, its blocks and the
/// snapshot (state, last block) if any.
pub(crate) type Opened = (BlockStore, Vec<Block>, Option<(WorldState, u64)>);

impl BlockStore {
    /// Opens the store, returning any blocks already in the log and the
    /// snapshot (state, last block) if present.
    pub(crate) fn open(dir: &Path) -> Result<Opened, LedgerError> {
        fs::create_dir_all(dir)?;
        let log_path = dir.join(LOG_FILE);
        let bytes = match fs::read(&log_path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let blocks = parse_log(&bytes).map_err(|p| LedgerError::Corrupt { block: p.block, reason: p.detail })?;

        let snapshot = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => {
                let snap: Snapshot = canonical::from_canonical_bytes(&bytes)
                    .map_err(|e| LedgerError::Recovery(format!("unreadable snapshot: {e}")))?;
                Some((snap.state, snap.last_block))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };

        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        let store = BlockStore { dir: dir.to_path_buf(), log, log_len: bytes.len() as u64 };
        Ok((store, blocks, snapshot))
    }

    pub(crate) fn append(&mut self, block: &Block) -> io::Result<()> {
        self.append_with(block, None).map_err(|e| match e {
            LedgerError::Io(e) => e,
            other => io::Error::other(other.to_string()),
        })
    }

    /// Appends one block line. On any failure the log is truncated back to its
    /// previous length, so a failed append leaves no partial line behind.
    pub(crate) fn append_with(&mut self, block: &Block, failpoint: Option<StoreFailpoint>) -> Result<(), LedgerError> {
        let mut line = block.canonical_bytes();
        line.push(b'\n');
        let result = match failpoint {
            Some(StoreFailpoint::TornWrite) => self
                .log
                .write_all(&line[..line.len() / 2])
                .and_then(|_| self.log.flush())
                .map_err(LedgerError::from)
                .and(Err(LedgerError::InjectedFailure)),
            None => self.log.write_all(&line).and_then(|_| self.log.sync_data()).map_err(LedgerError::from),
        };
        match result {
            Ok(()) => {
                self.log_len += line.len() as u64;
                Ok(())
            }
            Err(e) => {
                self.log.set_len(self.log_len)?;
                Err(e)
            }
        }
    }

    pub(crate) fn write_snapshot(&mut self, state: &WorldState, last_block: u64) -> io::Result<()> {
        let bytes = canonical::encode(&SnapshotRef { last_block, state });
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, self.dir.join(SNAPSHOT_FILE))
    }
}
