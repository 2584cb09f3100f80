use serde::{Deserialize, Serialize};

use crate::canonical::Digest;
use crate::ledger::{Block, TransactionEnvelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OrdererConfig {
    pub max_batch_size: usize,
    pub batch_timeout_ticks: u64,
}

impl OrdererConfig {
    pub fn new(max_batch_size: usize, batch_timeout_ticks: u64) -> Result<Self, String> {
        if max_batch_size == 0 {
            return Err("maxBatchSize must be at least 1".into());
        }
        if batch_timeout_ticks == 0 {
            return Err("batchTimeoutTicks must be at least 1".into());
        }
        Ok(OrdererConfig { max_batch_size, batch_timeout_ticks })
    }
}

impl Default for OrdererConfig {
    fn default() -> Self {
        OrdererConfig { max_batch_size: 10, batch_timeout_ticks: 2 }
    }
}

/// Totally orders envelopes into hash-linked blocks.
pub trait OrderingService: Send {
    /// Accepts an envelope at logical time `tick`.
    fn broadcast(&mut self, envelope: TransactionEnvelope, tick: u64);
    /// Advances to `now` and returns every block cut since the last call.
    fn tick(&mut self, now: u64) -> Vec<Block>;
    fn pending(&self) -> usize;
}

/// Single-node FIFO orderer. A block is cut as soon as `max_batch_size`
/// envelopes are pending, or once `batch_timeout_ticks` have elapsed since
/// the oldest pending envelope arrived.
#[derive(Debug)]
pub struct SoloOrderer {
    config: OrdererConfig,
    next_number: u64,
    prev_hash: Digest,
    pending: Vec<TransactionEnvelope>,
    first_pending_tick: Option<u64>,
    cut: Vec<Block>,
}

impl SoloOrderer {
    /// An orderer whose next block follows `(tip_number, tip_hash)`.
    pub fn new(config: OrdererConfig, tip_number: u64, tip_hash: Digest) -> Self {
        SoloOrderer {
            config,
            next_number: tip_number + 1,
            prev_hash: tip_hash,
            pending: Vec::new(),
            first_pending_tick: None,
            cut: Vec::new(),
        }
    }

    pub fn config(&self) -> OrdererConfig {
        self.config
    }

    fn cut_block(&mut self) {
        let envelopes = std::mem::take(&mut self.pending);
        self.first_pending_tick = None;
        let block = Block::new(self.next_number, self.prev_hash, envelopes);
        self.prev_hash = block.hash();
        self.next_number += 1;
        self.cut.push(block);
    }
}

impl OrderingService for SoloOrderer {
    fn broadcast(&mut self, envelope: TransactionEnvelope, tick: u64) {
        self.first_pending_tick.get_or_insert(tick);
        self.pending.push(envelope);
        if self.pending.len() >= self.config.max_batch_size {
            self.cut_block();
        }
    }

    fn tick(&mut self, now: u64) -> Vec<Block> {
        if let Some(first) = self.first_pending_tick {
            if now.saturating_sub(first) >= self.config.batch_timeout_ticks {
                self.cut_block();
            }
        }
        std::mem::take(&mut self.cut)
    }

    fn pending(&self) -> usize {
        self.pending.len()
    }
}
