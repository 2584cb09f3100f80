use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::orderer::{OrdererConfig, OrderingService, SoloOrderer};
use super::peer::{Delivery, PeerNode};
use super::trace::{Trace, TraceEvent, TraceRecord};
use super::Proposal;
use crate::chaincode::{self, ChaincodeError};
use crate::ledger::{
    body_bytes_of, Block, EndorsedAction, EndorsementPolicy, Ledger, LedgerError, TransactionEnvelope, TxLocation,
};
use crate::membership::{MembershipError, MembershipRegistry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of peers; `peer0` is the anchor.
    pub peers: usize,
    /// Size n of the endorser set (the first n peers). Defaults to all peers.
    pub endorsers: Option<usize>,
    /// Agreeing endorsements required (m).
    pub required_endorsements: usize,
    pub max_batch_size: usize,
    pub batch_timeout_ticks: u64,
    /// Upper bound on random extra gossip latency, drawn from the run seed.
    pub gossip_jitter_ticks: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            peers: 1,
            endorsers: None,
            required_endorsements: 1,
            max_batch_size: 10,
            batch_timeout_ticks: 2,
            gossip_jitter_ticks: 0,
        }
    }
}

impl NetworkConfig {
    pub fn peer_ids(&self) -> Vec<String> {
        (0..self.peers).map(|i| format!("peer{i}")).collect()
    }

    pub fn policy(&self) -> Result<EndorsementPolicy, NetworkError> {
        if self.peers == 0 {
            return Err(NetworkError::Config("a network needs at least one peer".into()));
        }
        let n = self.endorsers.unwrap_or(self.peers);
        if n > self.peers {
            return Err(NetworkError::Config(format!("{n} endorsers but only {} peers", self.peers)));
        }
        let endorsers = self.peer_ids().into_iter().take(n).collect();
        EndorsementPolicy::new(self.required_endorsements, endorsers).map_err(|e| NetworkError::Config(e.to_string()))
    }

    pub fn orderer(&self) -> Result<OrdererConfig, NetworkError> {
        OrdererConfig::new(self.max_batch_size, self.batch_timeout_ticks).map_err(NetworkError::Config)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Injected misbehaviour of the gossip layer or of an endorser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "kebab-case", rename_all_fields = "camelCase")]
pub enum Fault {
    /// Delay gossip of the next `blocks` blocks to `target` by `ticks`.
    Delay {
        target: String,
        ticks: u64,
        #[serde(default = "one")]
        blocks: u32,
    },
    /// Deliver the next two blocks to `target` in swapped order.
    Reorder { target: String },
    /// Discard the next `count` endorsements produced by `target`.
    DropEndorsement {
        target: String,
        #[serde(default = "one")]
        count: u32,
    },
}

fn one() -> u32 {
    1
}

impl Fault {
    pub fn target(&self) -> &str {
        match self {
            Fault::Delay { target, .. } | Fault::Reorder { target } | Fault::DropEndorsement { target, .. } => target,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Fault::Delay { .. } => "delay",
            Fault::Reorder { .. } => "reorder",
            Fault::DropEndorsement { .. } => "drop-endorsement",
        }
    }
}

/// What happened to one endorser during a submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EndorserOutcome {
    Agreed,
    Diverged,
    Failed(String),
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmitError {
    #[error("BAD_SIGNATURE")]
    BadSignature,
    #[error("CHAINCODE_ERROR({0})")]
    Chaincode(ChaincodeError),
    #[error("ENDORSEMENT_SHORTFALL")]
    EndorsementShortfall { outcomes: Vec<(String, EndorserOutcome)> },
    #[error(transparent)]
    Membership(#[from] MembershipError),
    #[error("UNSUPPORTED_VALUE")]
    UnsupportedValue(String),
}

impl SubmitError {
    /// Code surfaced to clients: the chaincode error code for chaincode
    /// failures, otherwise the pipeline failure name.
    pub fn code(&self) -> String {
        match self {
            SubmitError::Chaincode(e) => e.code(),
            SubmitError::Membership(e) => e.code().to_string(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmitReceipt {
    pub tx_id: String,
    pub result: Value,
    pub endorsers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxStatus {
    Pending,
    Committed(TxLocation),
    Unknown,
}

#[derive(Debug)]
struct InFlight {
    deliver_at: u64,
    order: u64,
    peer: usize,
    block: Block,
}

#[derive(Debug, Default)]
struct Faults {
    delay: BTreeMap<usize, (u64, u32)>,
    reorder_armed: BTreeSet<usize>,
    reorder_stash: BTreeMap<usize, Block>,
    drop: BTreeMap<usize, u32>,
}

/// Client, endorsing peers, orderer and committing peers in one process.
///
/// The anchor peer (`peer0`) receives blocks straight from the orderer and
/// gossips them to every other peer. All scheduling is driven by [`tick`].
///
/// [`tick`]: Network::tick
pub struct Network {
    config: NetworkConfig,
    registry: MembershipRegistry,
    policy: EndorsementPolicy,
    peers: Vec<PeerNode>,
    orderer: Box<dyn OrderingService>,
    now: u64,
    in_flight: Vec<InFlight>,
    flight_seq: u64,
    faults: Faults,
    rng: ChaCha8Rng,
    trace: Trace,
    next_nonce: u64,
    pending: BTreeSet<String>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("config", &self.config)
            .field("now", &self.now)
            .field("heights", &self.peers.iter().map(PeerNode::height).collect::<Vec<_>>())
            .finish()
    }
}

impl Network {
    /// A fresh in-memory network.
    pub fn new(config: NetworkConfig, registry: MembershipRegistry, seed: u64) -> Result<Network, NetworkError> {
        Self::with_anchor_ledger(config, registry, seed, Ledger::new())
    }

    /// A network whose anchor peer uses `anchor` (typically a persistent
    /// ledger). Other peers are brought up to the same height by validating
    /// the anchor's blocks themselves.
    pub fn with_anchor_ledger(
        config: NetworkConfig,
        registry: MembershipRegistry,
        seed: u64,
        anchor: Ledger,
    ) -> Result<Network, NetworkError> {
        let policy = config.policy()?;
        let orderer_config = config.orderer()?;
        let ids = config.peer_ids();
        for id in &ids {
            registry.enroll_node(id);
        }
        let history: Vec<Block> = anchor.blocks()[1..].to_vec();
        let next_nonce = history.iter().flat_map(|b| b.envelopes.iter().map(|e| e.nonce + 1)).max().unwrap_or(1);
        let orderer = SoloOrderer::new(orderer_config, anchor.height(), anchor.tip_hash());

        let mut peers = vec![PeerNode::new(ids[0].clone(), true, anchor)];
        for id in &ids[1..] {
            let mut peer = PeerNode::new(id.clone(), false, Ledger::new());
            for block in &history {
                peer.deliver(block.clone(), &policy, &registry)?;
            }
            peers.push(peer);
        }

        Ok(Network {
            config,
            registry,
            policy,
            peers,
            orderer: Box::new(orderer),
            now: 0,
            in_flight: Vec::new(),
            flight_seq: 0,
            faults: Faults::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Trace::default(),
            next_nonce,
            pending: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn registry(&self) -> &MembershipRegistry {
        &self.registry
    }

    pub fn policy(&self) -> &EndorsementPolicy {
        &self.policy
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn peers(&self) -> &[PeerNode] {
        &self.peers
    }

    pub fn anchor(&self) -> &PeerNode {
        &self.peers[0]
    }

    pub fn peer(&self, id: &str) -> Option<&PeerNode> {
        self.peers.iter().find(|p| p.id() == id)
    }

    fn peer_index(&self, id: &str) -> Option<usize> {
        self.peers.iter().position(|p| p.id() == id)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.records()
    }

    pub fn trace_bytes(&self) -> Vec<u8> {
        self.trace.records().iter().flat_map(TraceRecord::to_line).collect()
    }

    pub(crate) fn record(&mut self, event: TraceEvent) {
        self.trace.push(self.now, event);
    }

    /// Takes the next client nonce. Nonces are network-wide and resume above
    /// the highest nonce already on the chain.
    pub fn take_nonce(&mut self) -> u64 {
        let nonce = self.next_nonce;
        self.next_nonce += 1;
        nonce
    }

    /// Signs a proposal on behalf of `creator` and submits it.
    pub fn submit(&mut self, creator: &str, operation: &str, args: Value) -> Result<SubmitReceipt, SubmitError> {
        let nonce = self.take_nonce();
        let proposal = Proposal::signed(&self.registry, creator, nonce, operation, args)?;
        self.submit_proposal(proposal)
    }

    /// Collects endorsements for `proposal` and, if enough agree, forwards the
    /// assembled envelope to the orderer.
    pub fn submit_proposal(&mut self, proposal: Proposal) -> Result<SubmitReceipt, SubmitError> {
        super::check_args(&proposal.args)?;
        let tx_id = proposal.tx_id();
        if !proposal.verify(&self.registry) {
            self.record(TraceEvent::ProposalRejected { tx_id, reason: "BAD_SIGNATURE".into() });
            return Err(SubmitError::BadSignature);
        }
        self.record(TraceEvent::ProposalSubmitted {
            tx_id: tx_id.clone(),
            creator: proposal.creator.clone(),
            operation: proposal.operation.clone(),
        });

        let required = self.policy.required_count();
        let mut outcomes: Vec<(String, EndorserOutcome)> = Vec::new();
        // Agreeing groups keyed by endorsed payload, in first-seen order.
        let mut groups: Vec<(Vec<u8>, Vec<usize>)> = Vec::new();
        let mut responses = Vec::new();
        let mut errors: Vec<ChaincodeError> = Vec::new();
        for endorser in self.policy.endorser_set().to_vec() {
            let idx = self.peer_index(&endorser).expect("endorsers are network peers");
            if let Some(left) = self.faults.drop.get_mut(&idx).filter(|left| **left > 0) {
                *left -= 1;
                outcomes.push((endorser, EndorserOutcome::Dropped));
                continue;
            }
            let endorsement = self.peers[idx].endorse(&proposal, &self.registry);
            match endorsement.outcome {
                Ok(effects) => {
                    let payload = effects.payload(&proposal);
                    let slot = responses.len();
                    responses.push((endorser.clone(), effects));
                    match groups.iter_mut().find(|(p, _)| *p == payload) {
                        Some((_, members)) => members.push(slot),
                        None => groups.push((payload, vec![slot])),
                    }
                    outcomes.push((endorser, EndorserOutcome::Diverged));
                }
                Err(err) => {
                    outcomes.push((endorser, EndorserOutcome::Failed(err.code())));
                    errors.push(err);
                }
            }
        }

        // Largest agreeing group; ties go to the group seen first.
        let best = groups
            .iter()
            .enumerate()
            .max_by_key(|(i, (_, members))| (members.len(), std::cmp::Reverse(*i)))
            .map(|(_, g)| g);

        match best {
            Some((_, members)) if members.len() >= required => {
                let agreed: BTreeSet<&str> = members.iter().map(|&slot| responses[slot].0.as_str()).collect();
                for (peer, outcome) in outcomes.iter_mut() {
                    if agreed.contains(peer.as_str()) {
                        *outcome = EndorserOutcome::Agreed;
                    }
                }
                let (_, effects) = &responses[members[0]];
                let endorsements: Vec<_> = members.iter().map(|&slot| responses[slot].1.signature.clone()).collect();
                let action = EndorsedAction {
                    tx_id: &tx_id,
                    creator: &proposal.creator,
                    operation: &proposal.operation,
                    args: &proposal.args,
                    result: &effects.result,
                    read_set: &effects.read_set,
                    write_set: &effects.write_set,
                };
                let body = body_bytes_of(&action, proposal.nonce, &endorsements);
                let client_signature = self.registry.sign_payload(&proposal.creator, &body)?;
                let envelope = TransactionEnvelope {
                    tx_id: tx_id.clone(),
                    nonce: proposal.nonce,
                    creator: proposal.creator.clone(),
                    operation: proposal.operation.clone(),
                    args: proposal.args.clone(),
                    result: effects.result.clone(),
                    read_set: effects.read_set.clone(),
                    write_set: effects.write_set.clone(),
                    endorsements,
                    client_signature,
                };
                let endorsers: Vec<String> = agreed.iter().map(|s| s.to_string()).collect();
                let result = envelope.result.clone();
                self.record(TraceEvent::ProposalEndorsed { tx_id: tx_id.clone(), endorsers: endorsers.clone() });
                self.broadcast(envelope);
                Ok(SubmitReceipt { tx_id, result, endorsers })
            }
            _ => {
                let err = most_common_error(&errors)
                    .filter(|(_, count)| *count >= required || groups.is_empty())
                    .map(|(err, _)| SubmitError::Chaincode(err))
                    .unwrap_or(SubmitError::EndorsementShortfall { outcomes });
                self.record(TraceEvent::ProposalRejected { tx_id, reason: err.code() });
                Err(err)
            }
        }
    }

    /// Hands a fully assembled envelope to the orderer. Normally called by
    /// [`submit_proposal`](Self::submit_proposal); exposed so tests can order
    /// envelopes that were built or tampered with by hand.
    pub fn broadcast(&mut self, envelope: TransactionEnvelope) {
        self.pending.insert(envelope.tx_id.clone());
        self.orderer.broadcast(envelope, self.now);
        let blocks = self.orderer.tick(self.now);
        self.dispatch(blocks);
    }

    /// Serves a read-only operation from the anchor peer without ordering.
    pub fn query(&mut self, operation: &str, args: &Value) -> Result<Value, ChaincodeError> {
        let outcome = chaincode::query(self.anchor().ledger(), operation, args);
        let peer = self.anchor().id().to_string();
        let label = match &outcome {
            Ok(_) => "OK".to_string(),
            Err(e) => e.code(),
        };
        self.record(TraceEvent::QueryServed { peer, operation: operation.to_string(), outcome: label });
        outcome
    }

    pub fn inject(&mut self, fault: Fault) -> Result<(), NetworkError> {
        let idx = self
            .peer_index(fault.target())
            .ok_or_else(|| NetworkError::Config(format!("unknown fault target {}", fault.target())))?;
        match &fault {
            Fault::Delay { ticks, blocks, .. } => {
                if idx == 0 {
                    return Err(NetworkError::Config("gossip faults cannot target the anchor peer".into()));
                }
                self.faults.delay.insert(idx, (*ticks, *blocks));
            }
            Fault::Reorder { .. } => {
                if idx == 0 {
                    return Err(NetworkError::Config("gossip faults cannot target the anchor peer".into()));
                }
                self.faults.reorder_armed.insert(idx);
            }
            Fault::DropEndorsement { count, .. } => {
                *self.faults.drop.entry(idx).or_default() += count;
            }
        }
        self.record(TraceEvent::FaultInjected { fault: fault.name().into(), target: fault.target().into() });
        Ok(())
    }

    /// Advances logical time by one tick: due gossip is delivered, then the
    /// orderer may cut a block on timeout.
    pub fn tick(&mut self) {
        self.now += 1;
        self.deliver_due();
        let blocks = self.orderer.tick(self.now);
        self.dispatch(blocks);
    }

    /// True when nothing is pending anywhere: no envelopes awaiting a block,
    /// no gossip in flight and no peer behind the anchor.
    pub fn is_idle(&self) -> bool {
        self.orderer.pending() == 0
            && self.in_flight.is_empty()
            && self.faults.reorder_stash.is_empty()
            && self.peers.iter().all(|p| p.mailbox_len() == 0 && p.held_len() == 0)
    }

    /// Ticks until idle or until `max_ticks` have passed. A reorder fault
    /// still waiting for its second block is released once nothing else is
    /// in flight. Returns whether the network became idle.
    pub fn run_until_idle(&mut self, max_ticks: u64) -> bool {
        let deadline = self.now + max_ticks;
        while !self.is_idle() && self.now < deadline {
            if self.orderer.pending() == 0 && self.in_flight.is_empty() {
                let stash = std::mem::take(&mut self.faults.reorder_stash);
                for (idx, block) in stash {
                    self.faults.reorder_armed.remove(&idx);
                    self.send(idx, block);
                }
            }
            self.tick();
        }
        self.is_idle()
    }

    pub fn tx_status(&self, tx_id: &str) -> TxStatus {
        if let Some(location) = self.anchor().ledger().tx_location(tx_id) {
            TxStatus::Committed(location)
        } else if self.pending.contains(tx_id) {
            TxStatus::Pending
        } else {
            TxStatus::Unknown
        }
    }

    /// True when every peer holds byte-identical chains and equal state.
    pub fn converged(&self) -> bool {
        let reference = self.anchor().ledger();
        let log = reference.log_bytes();
        let state = reference.state().canonical_bytes();
        self.peers[1..].iter().all(|p| p.ledger().log_bytes() == log && p.ledger().state().canonical_bytes() == state)
    }

    fn dispatch(&mut self, blocks: Vec<Block>) {
        for block in blocks {
            self.record(TraceEvent::BlockCut {
                number: block.number,
                tx_ids: block.envelopes.iter().map(|e| e.tx_id.clone()).collect(),
            });
            let committed = match self.peers[0].deliver(block, &self.policy, &self.registry) {
                Ok(Delivery::Committed(blocks)) => blocks,
                Ok(other) => panic!("anchor peer received out-of-sequence block from orderer: {other:?}"),
                Err(e) => panic!("anchor peer failed to commit: {e}"),
            };
            for block in committed {
                for env in &block.envelopes {
                    self.pending.remove(&env.tx_id);
                }
                self.record(TraceEvent::BlockCommitted {
                    peer: self.peers[0].id().to_string(),
                    number: block.number,
                    flags: block.validity_flags.clone(),
                });
                self.gossip(block);
            }
        }
    }

    fn gossip(&mut self, block: Block) {
        let mut targets: Vec<usize> = (1..self.peers.len()).collect();
        targets.shuffle(&mut self.rng);
        for idx in targets {
            if self.faults.reorder_armed.contains(&idx) {
                match self.faults.reorder_stash.remove(&idx) {
                    None => {
                        self.faults.reorder_stash.insert(idx, block.clone());
                    }
                    Some(earlier) => {
                        self.faults.reorder_armed.remove(&idx);
                        self.send(idx, block.clone());
                        self.send(idx, earlier);
                    }
                }
                continue;
            }
            self.send(idx, block.clone());
        }
    }

    fn send(&mut self, idx: usize, block: Block) {
        let mut latency = 0;
        if self.config.gossip_jitter_ticks > 0 {
            latency += self.rng.gen_range(0..=self.config.gossip_jitter_ticks);
        }
        if let Some((ticks, left)) = self.faults.delay.get_mut(&idx) {
            latency += *ticks;
            *left -= 1;
            if *left == 0 {
                self.faults.delay.remove(&idx);
            }
        }
        if latency == 0 {
            self.peers[idx].enqueue(block);
            self.process_mailbox(idx);
        } else {
            self.flight_seq += 1;
            self.in_flight.push(InFlight { deliver_at: self.now + latency, order: self.flight_seq, peer: idx, block });
        }
    }

    fn deliver_due(&mut self) {
        let now = self.now;
        let (mut due, rest): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.in_flight).into_iter().partition(|f| f.deliver_at <= now);
        self.in_flight = rest;
        due.sort_by_key(|f| (f.deliver_at, f.order));
        let mut touched = BTreeSet::new();
        for flight in due {
            self.peers[flight.peer].enqueue(flight.block);
            touched.insert(flight.peer);
        }
        for idx in touched {
            self.process_mailbox(idx);
        }
    }

    fn process_mailbox(&mut self, idx: usize) {
        while let Some(block) = self.peers[idx].next_in_mailbox() {
            let outcome = self.peers[idx].deliver(block, &self.policy, &self.registry);
            match outcome.expect("gossiped blocks are linked to the anchor chain") {
                Delivery::Committed(blocks) => self.after_commit(idx, blocks),
                Delivery::Duplicate(_) => {}
                Delivery::Held { expected, received } => {
                    let peer = self.peers[idx].id().to_string();
                    self.record(TraceEvent::GapDetected { peer: peer.clone(), expected, received });
                    // Synchronous backfill from the anchor.
                    let missing: Vec<Block> =
                        (expected..received).filter_map(|n| self.peers[0].ledger().block(n).cloned()).collect();
                    self.record(TraceEvent::Backfilled { peer, from: expected, to: received - 1 });
                    for block in missing {
                        match self.peers[idx].deliver(block, &self.policy, &self.registry) {
                            Ok(Delivery::Committed(blocks)) => self.after_commit(idx, blocks),
                            Ok(_) => {}
                            Err(e) => panic!("backfill from anchor failed: {e}"),
                        }
                    }
                }
            }
        }
    }

    fn after_commit(&mut self, idx: usize, blocks: Vec<Block>) {
        let peer = self.peers[idx].id().to_string();
        for block in blocks {
            let anchor_flags = self.peers[0].ledger().block(block.number).map(|b| b.validity_flags.clone());
            if anchor_flags.as_ref() != Some(&block.validity_flags) {
                self.record(TraceEvent::FlagDivergence { peer: peer.clone(), number: block.number });
            }
            self.record(TraceEvent::BlockCommitted {
                peer: peer.clone(),
                number: block.number,
                flags: block.validity_flags,
            });
        }
    }
}

fn most_common_error(errors: &[ChaincodeError]) -> Option<(ChaincodeError, usize)> {
    let mut counts: Vec<(&ChaincodeError, usize)> = Vec::new();
    for err in errors {
        match counts.iter_mut().find(|(e, _)| *e == err) {
            Some((_, n)) => *n += 1,
            None => counts.push((err, 1)),
        }
    }
    counts
        .into_iter()
        .enumerate()
        .max_by_key(|(i, (_, n))| (*n, std::cmp::Reverse(*i)))
        .map(|(_, (e, n))| (e.clone(), n))
}
