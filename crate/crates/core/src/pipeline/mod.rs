//! In-process execute-order-validate network.
//!
//! A client signs a [`Proposal`]; endorsing peers execute it against their own
//! committed state and sign the effects; once enough endorsers agree the
//! envelope goes to the orderer, which cuts blocks that the anchor peer
//! commits and gossips to the remaining peers. Time is a logical tick counter
//! so every run is reproducible.

mod network;
mod orderer;
mod peer;
pub mod scenario;
mod trace;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::membership::{MembershipRegistry, Signature};

pub use crate::ledger::EndorsementPolicy;
pub use network::{EndorserOutcome, Fault, Network, NetworkConfig, NetworkError, SubmitError, SubmitReceipt, TxStatus};
pub use orderer::{OrdererConfig, OrderingService, SoloOrderer};
pub use peer::{Delivery, Endorsement, PeerNode, SignedEffects};
pub use trace::{TraceEvent, TraceRecord};

/// A signed request to invoke a chaincode operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Proposal {
    pub creator: String,
    /// Client-chosen counter that makes otherwise identical proposals
    /// distinct transactions.
    pub nonce: u64,
    pub operation: String,
    pub args: Value,
    pub signature: Signature,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ProposalBody<'a> {
    creator: &'a str,
    nonce: u64,
    operation: &'a str,
    args: &'a Value,
}

impl Proposal {
    pub fn signed(
        registry: &MembershipRegistry,
        creator: &str,
        nonce: u64,
        operation: &str,
        args: Value,
    ) -> Result<Proposal, SubmitError> {
        check_args(&args)?;
        let body = proposal_bytes(creator, nonce, operation, &args);
        let signature = registry.sign_payload(creator, &body)?;
        Ok(Proposal { creator: creator.into(), nonce, operation: operation.into(), args, signature })
    }

    pub fn body_bytes(&self) -> Vec<u8> {
        proposal_bytes(&self.creator, self.nonce, &self.operation, &self.args)
    }

    /// Transaction id: hex digest of the signed proposal body.
    pub fn tx_id(&self) -> String {
        hex::encode(canonical::digest(&self.body_bytes()))
    }

    pub fn verify(&self, registry: &MembershipRegistry) -> bool {
        registry.verify_signature(&self.creator, &self.body_bytes(), &self.signature)
    }
}

/// Rejects arguments that have no canonical encoding (non-integer numbers).
pub(crate) fn check_args(args: &Value) -> Result<(), SubmitError> {
    canonical::canonical_value_bytes(args).map(drop).map_err(|e| SubmitError::UnsupportedValue(e.to_string()))
}

fn proposal_bytes(creator: &str, nonce: u64, operation: &str, args: &Value) -> Vec<u8> {
    canonical::encode(&ProposalBody { creator, nonce, operation, args })
}

#[cfg(test)]
mod tests;
