use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;
use tracer_core::ledger::{Ledger, LedgerError};
use tracer_core::membership::{Identity, MembershipRegistry, RegistrySnapshot, Role, Signature};
use tracer_core::pipeline::{Network, NetworkConfig, NetworkError, SubmitError, SubmitReceipt};

use crate::events::{events_for_block, EventRecord};

/// Registry file kept next to the block log.
pub const IDENTITIES_FILE: &str = "identities.json";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("ledger corrupt at block {block}: {reason}")]
    Corrupt { block: u64, reason: String },
    #[error(transparent)]
    Ledger(LedgerError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("identity registry: {0}")]
    Registry(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LedgerError> for ServiceError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Corrupt { block, reason } => ServiceError::Corrupt { block, reason },
            other => ServiceError::Ledger(other),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub network: NetworkConfig,
    pub seed: u64,
    /// Persistent store; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
}

/// The platform behind the HTTP layer: the network, its identity registry
/// and the event log derived from the anchor peer's committed blocks.
#[derive(Debug)]
pub struct Service {
    network: Network,
    events: Vec<EventRecord>,
    synced_height: u64,
    data_dir: Option<PathBuf>,
}

impl Service {
    /// Opens a fresh or existing store. An existing block log is verified and
    /// replayed; a corrupt log is refused.
    pub fn open(config: ServiceConfig) -> Result<Service, ServiceError> {
        let (registry, anchor) = match &config.data_dir {
            None => (MembershipRegistry::new(&rand::random::<[u8; 32]>()), Ledger::new()),
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let anchor = Ledger::open(dir)?;
                (load_registry(dir, anchor.height())?, anchor)
            }
        };
        let network = Network::with_anchor_ledger(config.network, registry, config.seed, anchor)?;
        let mut service = Service { network, events: Vec::new(), synced_height: 0, data_dir: config.data_dir };
        if let Some(dir) = &service.data_dir {
            save_registry(dir, service.network.registry())?;
        }
        service.sync_events();
        Ok(service)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn registry(&self) -> &MembershipRegistry {
        self.network.registry()
    }

    /// Registers an identity and returns it with its hex signing key.
    pub fn register(&mut self, name: &str, role: Role) -> Result<(Identity, String), ServiceError> {
        let identity =
            self.registry().register_identity(name, role).map_err(|e| ServiceError::Registry(e.to_string()))?;
        if let Some(dir) = &self.data_dir {
            save_registry(dir, self.registry())?;
        }
        let key = self.registry().signing_key(&identity.identity_id).expect("just registered");
        Ok((identity, hex::encode(key)))
    }

    /// True iff `signature_hex` is the caller's signature over `body`.
    pub fn authenticate(&self, identity_id: &str, signature_hex: &str, body: &[u8]) -> bool {
        let Ok(bytes) = hex::decode(signature_hex) else { return false };
        let signature = Signature { signer_id: identity_id.to_string(), bytes };
        self.registry().verify_signature(identity_id, body, &signature)
    }

    /// Submits an operation on behalf of an authenticated caller.
    pub fn submit(&mut self, caller: &str, operation: &str, args: Value) -> Result<SubmitReceipt, SubmitError> {
        let receipt = self.network.submit(caller, operation, args);
        self.sync_events();
        receipt
    }

    pub fn tick(&mut self) {
        self.network.tick();
        self.sync_events();
    }

    /// Ticks until the network is idle or `max_ticks` have passed.
    pub fn settle(&mut self, max_ticks: u64) -> bool {
        let idle = self.network.run_until_idle(max_ticks);
        self.sync_events();
        idle
    }

    pub fn last_event_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.event_seq)
    }

    /// Events with `eventSeq > since`, in order.
    pub fn events_since(&self, since: u64) -> &[EventRecord] {
        let start = self.events.partition_point(|e| e.event_seq <= since);
        &self.events[start..]
    }

    fn sync_events(&mut self) {
        let ledger = self.network.anchor().ledger();
        while self.synced_height < ledger.height() {
            self.synced_height += 1;
            let block = ledger.block(self.synced_height).expect("below height");
            let next = self.events.last().map_or(1, |e| e.event_seq + 1);
            self.events.extend(events_for_block(block, next));
        }
    }
}

fn load_registry(dir: &Path, height: u64) -> Result<MembershipRegistry, ServiceError> {
    let path = dir.join(IDENTITIES_FILE);
    match fs::read(&path) {
        Ok(bytes) => {
            let snapshot: RegistrySnapshot = serde_json::from_slice(&bytes)
                .map_err(|e| ServiceError::Registry(format!("{}: {e}", path.display())))?;
            Ok(MembershipRegistry::from_snapshot(snapshot))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && height == 0 => {
            Ok(MembershipRegistry::new(&rand::random::<[u8; 32]>()))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ServiceError::Registry(format!("{} is missing but the log holds {height} blocks", path.display())))
        }
        Err(e) => Err(e.into()),
    }
}

/// Writes the registry next to a ledger so a later [`Service::open`] can
/// verify signatures made against it.
pub fn save_registry(dir: &Path, registry: &MembershipRegistry) -> Result<(), ServiceError> {
    let bytes = serde_json::to_vec(&registry.snapshot()).map_err(|e| ServiceError::Registry(e.to_string()))?;
    let tmp = dir.join(format!("{IDENTITIES_FILE}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, dir.join(IDENTITIES_FILE))?;
    Ok(())
}
