use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::ledger::ValidityFlag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", rename_all_fields = "camelCase")]
pub enum TraceEvent {
    IdentityRegistered { name: String, identity_id: String, role: String },
    ProposalSubmitted { tx_id: String, creator: String, operation: String },
    ProposalEndorsed { tx_id: String, endorsers: Vec<String> },
    ProposalRejected { tx_id: String, reason: String },
    QueryServed { peer: String, operation: String, outcome: String },
    FaultInjected { fault: String, target: String },
    BlockCut { number: u64, tx_ids: Vec<String> },
    BlockCommitted { peer: String, number: u64, flags: Vec<ValidityFlag> },
    GapDetected { peer: String, expected: u64, received: u64 },
    Backfilled { peer: String, from: u64, to: u64 },
    FlagDivergence { peer: String, number: u64 },
    StepSkipped { step: usize, reason: String },
}

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRecord {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

impl TraceRecord {
    pub fn to_line(&self) -> Vec<u8> {
        let mut line = canonical::encode(self);
        line.push(b'\n');
        line
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub(crate) fn push(&mut self, tick: u64, event: TraceEvent) {
        let seq = self.records.len() as u64 + 1;
        self.records.push(TraceRecord { seq, tick, event });
    }

    pub(crate) fn records(&self) -> &[TraceRecord] {
        &self.records
    }
}
