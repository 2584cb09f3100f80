//! Participant registry, request signing and role checks.
//!
//! Signing uses a keyed hash (HMAC-SHA256) with one key per principal derived
//! from a registry secret. The scheme sits behind [`SignatureScheme`] so a
//! public-key implementation can replace it without touching callers.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::canonical::{self, hex_bytes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Member,
    Auctioneer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Member => "MEMBER",
            Role::Auctioneer => "AUCTIONEER",
        }
    }

    pub fn parse(text: &str) -> Option<Role> {
        match text {
            "MEMBER" => Some(Role::Member),
            "AUCTIONEER" => Some(Role::Auctioneer),
            _ => None,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Identity {
    pub identity_id: String,
    pub display_name: String,
    pub role: Role,
    /// Public fingerprint of the signing key; the key itself never leaves the
    /// registry except through [`MembershipRegistry::signing_key`].
    pub key_ref: String,
    pub registered_at_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Signature {
    pub signer_id: String,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MembershipError {
    #[error("EMPTY_NAME")]
    EmptyName,
    #[error("UNKNOWN_IDENTITY: {0}")]
    UnknownIdentity(String),
    #[error("ROLE_MISMATCH: {caller} is not {required}")]
    RoleMismatch { caller: String, required: Role },
}

impl MembershipError {
    pub fn code(&self) -> &'static str {
        match self {
            MembershipError::EmptyName => "EMPTY_NAME",
            MembershipError::UnknownIdentity(_) => "UNKNOWN_IDENTITY",
            MembershipError::RoleMismatch { .. } => "ROLE_MISMATCH",
        }
    }
}

pub trait SignatureScheme: Send + Sync {
    fn sign(&self, key: &[u8], payload: &[u8]) -> Vec<u8>;
    fn verify(&self, key: &[u8], payload: &[u8], signature: &[u8]) -> bool;
}

/// HMAC-SHA256 over the payload.
#[derive(Debug, Default, Clone, Copy)]
pub struct KeyedHashScheme;

type HmacSha256 = Hmac<Sha256>;

impl SignatureScheme for KeyedHashScheme {
    fn sign(&self, key: &[u8], payload: &[u8]) -> Vec<u8> {
        let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
        mac.update(payload);
        mac.finalize().into_bytes().to_vec()
    }

    fn verify(&self, key: &[u8], payload: &[u8], signature: &[u8]) -> bool {
        let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
        mac.update(payload);
        mac.verify_slice(signature).is_ok()
    }
}

/// Signs `payload` with a raw key using the default scheme. Clients holding
/// their own key material use this to authenticate requests.
pub fn sign_with_key(key: &[u8], payload: &[u8]) -> Vec<u8> {
    KeyedHashScheme.sign(key, payload)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RegistryState {
    #[serde(with = "hex_bytes")]
    secret: Vec<u8>,
    identities: BTreeMap<String, Identity>,
    nodes: Vec<String>,
    last_seq: u64,
}

/// Serializable copy of a registry, used for persistence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegistrySnapshot(RegistryState);

/// Shared handle to the platform-wide identity registry.
///
/// Writes are serialized behind a lock; clones share the same registry.
#[derive(Clone)]
pub struct MembershipRegistry {
    state: Arc<RwLock<RegistryState>>,
    scheme: Arc<dyn SignatureScheme>,
}

impl std::fmt::Debug for MembershipRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let state = self.state.read().expect("registry lock poisoned");
        f.debug_struct("MembershipRegistry")
            .field("identities", &state.identities.len())
            .field("nodes", &state.nodes)
            .finish()
    }
}

impl MembershipRegistry {
    /// Creates an empty registry whose keys derive from `secret`.
    pub fn new(secret: &[u8]) -> Self {
        Self::with_scheme(secret, Arc::new(KeyedHashScheme))
    }

    pub fn with_scheme(secret: &[u8], scheme: Arc<dyn SignatureScheme>) -> Self {
        let state = RegistryState { secret: secret.to_vec(), ..Default::default() };
        MembershipRegistry { state: Arc::new(RwLock::new(state)), scheme }
    }

    pub fn from_snapshot(snapshot: RegistrySnapshot) -> Self {
        MembershipRegistry { state: Arc::new(RwLock::new(snapshot.0)), scheme: Arc::new(KeyedHashScheme) }
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        RegistrySnapshot(self.state.read().expect("registry lock poisoned").clone())
    }

    pub fn register_identity(&self, display_name: &str, role: Role) -> Result<Identity, MembershipError> {
        let name = display_name.trim();
        if name.is_empty() {
            return Err(MembershipError::EmptyName);
        }
        let mut state = self.state.write().expect("registry lock poisoned");
        let seq = state.last_seq + 1;
        let prefix = match role {
            Role::Member => "mem",
            Role::Auctioneer => "auc",
        };
        let identity_id = format!("{prefix}-{seq:04}");
        let key = derive_key(&state.secret, &identity_id);
        let identity = Identity {
            identity_id: identity_id.clone(),
            display_name: name.to_string(),
            role,
            key_ref: key_fingerprint(&key),
            registered_at_seq: seq,
        };
        state.last_seq = seq;
        state.identities.insert(identity_id, identity.clone());
        Ok(identity)
    }

    /// Enrolls an infrastructure node (a peer) so it can sign endorsements.
    /// Nodes are not participants and carry no role.
    pub fn enroll_node(&self, node_id: &str) {
        let mut state = self.state.write().expect("registry lock poisoned");
        if !state.nodes.iter().any(|n| n == node_id) {
            state.nodes.push(node_id.to_string());
        }
    }

    pub fn get(&self, identity_id: &str) -> Option<Identity> {
        self.state.read().expect("registry lock poisoned").identities.get(identity_id).cloned()
    }

    pub fn identities(&self) -> Vec<Identity> {
        let state = self.state.read().expect("registry lock poisoned");
        let mut all: Vec<_> = state.identities.values().cloned().collect();
        all.sort_by_key(|i| i.registered_at_seq);
        all
    }

    pub fn is_node(&self, node_id: &str) -> bool {
        self.state.read().expect("registry lock poisoned").nodes.iter().any(|n| n == node_id)
    }

    /// Raw key material for a registered identity (demo-grade key handout).
    pub fn signing_key(&self, identity_id: &str) -> Option<Vec<u8>> {
        let state = self.state.read().expect("registry lock poisoned");
        state.identities.contains_key(identity_id).then(|| derive_key(&state.secret, identity_id).to_vec())
    }

    pub fn sign_payload(&self, signer: &str, payload: &[u8]) -> Result<Signature, MembershipError> {
        let key = self.signing_key(signer).ok_or_else(|| MembershipError::UnknownIdentity(signer.to_string()))?;
        Ok(Signature { signer_id: signer.to_string(), bytes: self.scheme.sign(&key, payload) })
    }

    /// True iff `sig` was produced by `sign_payload(signer, payload)`. Unknown
    /// signers and signatures naming a different signer verify false.
    pub fn verify_signature(&self, signer: &str, payload: &[u8], sig: &Signature) -> bool {
        if sig.signer_id != signer {
            return false;
        }
        match self.signing_key(signer) {
            Some(key) => self.scheme.verify(&key, payload, &sig.bytes),
            None => false,
        }
    }

    pub fn sign_as_node(&self, node_id: &str, payload: &[u8]) -> Result<Signature, MembershipError> {
        let state = self.state.read().expect("registry lock poisoned");
        if !state.nodes.iter().any(|n| n == node_id) {
            return Err(MembershipError::UnknownIdentity(node_id.to_string()));
        }
        let key = derive_key(&state.secret, &node_key_label(node_id));
        Ok(Signature { signer_id: node_id.to_string(), bytes: self.scheme.sign(&key, payload) })
    }

    pub fn verify_node_signature(&self, node_id: &str, payload: &[u8], sig: &Signature) -> bool {
        if sig.signer_id != node_id {
            return false;
        }
        let state = self.state.read().expect("registry lock poisoned");
        if !state.nodes.iter().any(|n| n == node_id) {
            return false;
        }
        let key = derive_key(&state.secret, &node_key_label(node_id));
        self.scheme.verify(&key, payload, &sig.bytes)
    }

    pub fn require_role(&self, caller: &str, required: Role) -> Result<Identity, MembershipError> {
        let identity = self.get(caller).ok_or_else(|| MembershipError::UnknownIdentity(caller.to_string()))?;
        if identity.role != required {
            return Err(MembershipError::RoleMismatch { caller: caller.to_string(), required });
        }
        Ok(identity)
    }
}

fn node_key_label(node_id: &str) -> String {
    format!("node:{node_id}")
}

fn derive_key(secret: &[u8], principal: &str) -> [u8; 32] {
    let mut material = Vec::with_capacity(secret.len() + principal.len() + 12);
    material.extend_from_slice(b"tracer/key/");
    material.extend_from_slice(secret);
    material.push(0);
    material.extend_from_slice(principal.as_bytes());
    canonical::digest(&material)
}

fn key_fingerprint(key: &[u8]) -> String {
    hex::encode(&canonical::digest(key)[..8])
}
