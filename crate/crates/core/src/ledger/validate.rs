//! Commit-time validation of an ordered batch of envelopes.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::StateView;
use super::types::{StateKey, TransactionEnvelope, ValidityFlag, Version};
use crate::membership::MembershipRegistry;

/// `required_count` of the peers in `endorser_set` must sign identical results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndorsementPolicy {
    required_count: usize,
    endorser_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("endorsement policy needs 1 <= m <= n, got m={required} n={available}")]
    OutOfRange { required: usize, available: usize },
    #[error("endorser {0} listed twice")]
    DuplicateEndorser(String),
}

impl EndorsementPolicy {
    pub fn new(required_count: usize, endorser_set: Vec<String>) -> Result<Self, PolicyError> {
        if required_count == 0 || required_count > endorser_set.len() {
            return Err(PolicyError::OutOfRange { required: required_count, available: endorser_set.len() });
        }
        let mut seen = HashSet::new();
        for peer in &endorser_set {
            if !seen.insert(peer) {
                return Err(PolicyError::DuplicateEndorser(peer.clone()));
            }
        }
        Ok(EndorsementPolicy { required_count, endorser_set })
    }

    pub fn required_count(&self) -> usize {
        self.required_count
    }

    pub fn endorser_set(&self) -> &[String] {
        &self.endorser_set
    }

    pub fn contains(&self, peer: &str) -> bool {
        self.endorser_set.iter().any(|p| p == peer)
    }

    /// True iff the envelope carries at least `required_count` endorsements
    /// from distinct members of the endorser set and every one of them
    /// verifies over the endorsement payload.
    pub fn is_satisfied_by(&self, envelope: &TransactionEnvelope, registry: &MembershipRegistry) -> bool {
        let payload = envelope.endorsement_payload();
        let mut signers = BTreeSet::new();
        for sig in &envelope.endorsements {
            if !self.contains(&sig.signer_id)
                || !signers.insert(sig.signer_id.as_str())
                || !registry.verify_node_signature(&sig.signer_id, &payload, sig)
            {
                return false;
            }
        }
        signers.len() >= self.required_count
    }
}

fn has_distinct_keys<'a>(keys: impl Iterator<Item = &'a StateKey>) -> bool {
    let mut seen = HashSet::new();
    keys.into_iter().all(|k| seen.insert(k))
}

/// Assigns a validity flag to every envelope in `envelopes`, in order.
///
/// Checks run in a fixed order and the first failure wins: client signature,
/// endorsement policy, duplicate txId, then read-version conflicts. Reads are
/// compared against `snapshot` overlaid with the writes of envelopes earlier in
/// this block that were already flagged valid.
pub fn validate_envelopes<S: StateView + ?Sized>(
    snapshot: &S,
    block_number: u64,
    envelopes: &[TransactionEnvelope],
    policy: &EndorsementPolicy,
    registry: &MembershipRegistry,
    committed_tx: &dyn Fn(&str) -> bool,
) -> Vec<ValidityFlag> {
    let mut in_block_writes: HashMap<&StateKey, Option<Version>> = HashMap::new();
    let mut in_block_tx: HashSet<&str> = HashSet::new();
    let mut flags = Vec::with_capacity(envelopes.len());

    for (index, env) in envelopes.iter().enumerate() {
        let flag = if !registry.verify_signature(&env.creator, &env.body_bytes(), &env.client_signature) {
            ValidityFlag::BadSignature
        } else if !has_distinct_keys(env.read_set.iter().map(|r| &r.key))
            || !has_distinct_keys(env.write_set.iter().map(|w| &w.key))
            || !policy.is_satisfied_by(env, registry)
        {
            ValidityFlag::BadEndorsement
        } else if committed_tx(&env.tx_id) || !in_block_tx.insert(env.tx_id.as_str()) {
            ValidityFlag::DuplicateTxid
        } else if env.read_set.iter().any(|read| {
            let current = match in_block_writes.get(&read.key) {
                Some(overlay) => *overlay,
                None => snapshot.get_state(&read.key).map(|v| v.version),
            };
            current != read.version
        }) {
            ValidityFlag::MvccConflict
        } else {
            ValidityFlag::Valid
        };

        if flag.is_valid() {
            let version = Version::new(block_number, index as u32);
            for write in &env.write_set {
                in_block_writes.insert(&write.key, write.value.as_ref().map(|_| version));
            }
        }
        flags.push(flag);
    }
    flags
}
