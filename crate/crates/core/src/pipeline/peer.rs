use std::collections::{BTreeMap, VecDeque};

use serde_json::Value;

use super::Proposal;
use crate::chaincode::{self, ChaincodeError, ExecContext};
use crate::ledger::{Block, EndorsedAction, EndorsementPolicy, Ledger, LedgerError, ReadEntry, WriteEntry};
use crate::membership::{MembershipRegistry, Signature};

/// Simulated effects of a proposal, signed by the endorsing peer.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedEffects {
    pub result: Value,
    pub read_set: Vec<ReadEntry>,
    pub write_set: Vec<WriteEntry>,
    pub signature: Signature,
}

impl SignedEffects {
    /// The endorsed payload without the signature; used to group agreeing
    /// endorsers.
    pub fn payload(&self, proposal: &Proposal) -> Vec<u8> {
        let tx_id = proposal.tx_id();
        EndorsedAction {
            tx_id: &tx_id,
            creator: &proposal.creator,
            operation: &proposal.operation,
            args: &proposal.args,
            result: &self.result,
            read_set: &self.read_set,
            write_set: &self.write_set,
        }
        .payload()
    }
}

/// One peer's answer to a proposal. Chaincode failures are carried inside the
/// endorsement rather than raised.
#[derive(Debug, Clone, PartialEq)]
pub struct Endorsement {
    pub peer_id: String,
    pub outcome: Result<SignedEffects, ChaincodeError>,
}

/// Result of delivering a block to a peer.
#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Committed(Vec<Block>),
    /// Block was ahead of the peer's tip and is held until the gap fills.
    Held {
        expected: u64,
        received: u64,
    },
    /// Block number at or below the peer's tip.
    Duplicate(u64),
}

#[derive(Debug)]
pub struct PeerNode {
    id: String,
    is_anchor: bool,
    ledger: Ledger,
    mailbox: VecDeque<Block>,
    held: BTreeMap<u64, Block>,
}

impl PeerNode {
    pub fn new(id: impl Into<String>, is_anchor: bool, ledger: Ledger) -> Self {
        PeerNode { id: id.into(), is_anchor, ledger, mailbox: VecDeque::new(), held: BTreeMap::new() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_anchor(&self) -> bool {
        self.is_anchor
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn height(&self) -> u64 {
        self.ledger.height()
    }

    pub fn mailbox_len(&self) -> usize {
        self.mailbox.len()
    }

    pub fn held_len(&self) -> usize {
        self.held.len()
    }

    /// Lowest block number this peer is missing, if any block is held.
    pub fn missing_range(&self) -> Option<(u64, u64)> {
        self.held.keys().next().map(|&first_held| (self.height() + 1, first_held))
    }

    /// Executes the proposal against this peer's committed state. Never
    /// mutates the peer.
    pub fn endorse(&self, proposal: &Proposal, registry: &MembershipRegistry) -> Endorsement {
        let tx_id = proposal.tx_id();
        let ctx = ExecContext { caller: &proposal.creator, tx_id: &tx_id, registry };
        let outcome = chaincode::execute(&ctx, self.ledger.state(), &proposal.operation, &proposal.args).map(|exec| {
            let payload = EndorsedAction {
                tx_id: &tx_id,
                creator: &proposal.creator,
                operation: &proposal.operation,
                args: &proposal.args,
                result: &exec.result,
                read_set: &exec.read_set,
                write_set: &exec.write_set,
            }
            .payload();
            let signature = registry.sign_as_node(&self.id, &payload).expect("peer is enrolled before it endorses");
            SignedEffects { result: exec.result, read_set: exec.read_set, write_set: exec.write_set, signature }
        });
        Endorsement { peer_id: self.id.clone(), outcome }
    }

    pub fn enqueue(&mut self, block: Block) {
        self.mailbox.push_back(block);
    }

    pub fn next_in_mailbox(&mut self) -> Option<Block> {
        self.mailbox.pop_front()
    }

    /// Validates and commits `block` if it is next; holds it if it is ahead.
    /// Flags carried by the block are discarded and recomputed locally.
    pub fn deliver(
        &mut self,
        block: Block,
        policy: &EndorsementPolicy,
        registry: &MembershipRegistry,
    ) -> Result<Delivery, LedgerError> {
        let next = self.height() + 1;
        if block.number < next {
            return Ok(Delivery::Duplicate(block.number));
        }
        if block.number > next {
            let received = block.number;
            self.held.insert(block.number, block);
            return Ok(Delivery::Held { expected: next, received });
        }
        let mut committed = vec![self.commit(block, policy, registry)?];
        while let Some(block) = self.held.remove(&(self.height() + 1)) {
            committed.push(self.commit(block, policy, registry)?);
        }
        let height = self.height();
        self.held.retain(|n, _| *n > height);
        Ok(Delivery::Committed(committed))
    }

    fn commit(
        &mut self,
        mut block: Block,
        policy: &EndorsementPolicy,
        registry: &MembershipRegistry,
    ) -> Result<Block, LedgerError> {
        block.validity_flags.clear();
        Ok(self.ledger.append_block(block, policy, registry)?.clone())
    }
}
