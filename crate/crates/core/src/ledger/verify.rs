//! Integrity checking for a chain, either in memory or as persisted bytes.

use serde::{Deserialize, Serialize};

use super::chain::replay;
use super::state::WorldState;
use super::types::{compute_data_hash, Block};
use crate::canonical::{self, DIGEST_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProblemKind {
    /// The bytes of a block line could not be read back as a canonical block.
    Structural,
    Number,
    PrevHash,
    DataHash,
    Flags,
    Genesis,
    State,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainProblem {
    pub block: u64,
    pub kind: ProblemKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainReport {
    pub ok: bool,
    /// Number of blocks examined, genesis included.
    pub blocks_checked: u64,
    pub first_bad_block: Option<u64>,
    pub problems: Vec<ChainProblem>,
}

impl ChainReport {
    fn from_problems(blocks_checked: u64, problems: Vec<ChainProblem>) -> Self {
        ChainReport {
            ok: problems.is_empty(),
            blocks_checked,
            first_bad_block: problems.iter().map(|p| p.block).min(),
            problems,
        }
    }
}

/// Splits a block log into blocks. Every line must be newline-terminated and
/// byte-identical to the canonical encoding of the block it decodes to.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<Block>, ChainProblem> {
    let mut blocks = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let index = blocks.len() as u64;
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(ChainProblem {
                block: index,
                kind: ProblemKind::Structural,
                detail: "truncated block line (no terminating newline)".into(),
            });
        };
        let line = &rest[..end];
        let block: Block = canonical::from_canonical_bytes_strict(line).map_err(|e| ChainProblem {
            block: index,
            kind: ProblemKind::Structural,
            detail: format!("unreadable block line: {e}"),
        })?;
        blocks.push(block);
        rest = &rest[end + 1..];
    }
    Ok(blocks)
}

/// Verifies persisted log bytes. See [`verify_blocks`].
pub fn verify_log_bytes(bytes: &[u8], live_state: Option<&WorldState>) -> ChainReport {
    match parse_log(bytes) {
        Ok(blocks) => verify_blocks(&blocks, live_state),
        Err(problem) => ChainReport::from_problems(problem.block, vec![problem]),
    }
}

/// Recomputes every block's data hash and back-link, checks flag counts, and,
/// when `live_state` is given, that replaying valid writes reproduces it.
pub fn verify_blocks(blocks: &[Block], live_state: Option<&WorldState>) -> ChainReport {
    let mut problems = Vec::new();
    let Some(genesis) = blocks.first() else {
        problems.push(ChainProblem {
            block: 0,
            kind: ProblemKind::Genesis,
            detail: "chain has no genesis block".into(),
        });
        return ChainReport::from_problems(0, problems);
    };
    if genesis != &Block::genesis() {
        problems.push(ChainProblem {
            block: 0,
            kind: ProblemKind::Genesis,
            detail: "genesis block differs from the fixed genesis".into(),
        });
    }

    let mut prev_hash = [0u8; DIGEST_LEN];
    for (i, block) in blocks.iter().enumerate() {
        let expected = i as u64;
        let mut fail = |kind, detail: String| problems.push(ChainProblem { block: expected, kind, detail });
        if block.number != expected {
            fail(ProblemKind::Number, format!("block at position {expected} claims number {}", block.number));
        }
        if block.prev_hash != prev_hash {
            fail(ProblemKind::PrevHash, "prevHash does not match hash of previous block".into());
        }
        if compute_data_hash(&block.envelopes) != block.data_hash {
            fail(ProblemKind::DataHash, "dataHash does not match envelopes".into());
        }
        if block.validity_flags.len() != block.envelopes.len() {
            fail(
                ProblemKind::Flags,
                format!("{} flags for {} envelopes", block.validity_flags.len(), block.envelopes.len()),
            );
        }
        prev_hash = block.hash();
    }

    if problems.is_empty() {
        if let Some(live) = live_state {
            let (replayed, _) = replay(blocks);
            if replayed.canonical_bytes() != live.canonical_bytes() {
                problems.push(ChainProblem {
                    block: blocks.len() as u64 - 1,
                    kind: ProblemKind::State,
                    detail: "replayed world state differs from live state".into(),
                });
            }
        }
    }
    ChainReport::from_problems(blocks.len() as u64, problems)
}
