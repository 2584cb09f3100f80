//! Commodity, listing and auction operations.
//!
//! Every operation is a pure function of (caller, txId, args, state snapshot):
//! it records what it read and what it would write and never mutates the
//! snapshot. The pipeline turns the resulting read/write sets into envelopes.

mod error;
pub mod model;
mod ops;
mod provenance;

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::canonical;
use crate::ledger::{HistoryView, ReadEntry, StateKey, StateView, Version, WriteEntry};
use crate::membership::MembershipRegistry;

pub use error::ChaincodeError;
pub use provenance::get_provenance;

pub const INITIATE_AUCTION_ENVIRONMENT: &str = "initiate_auction_environment";
pub const CREATE_COMMODITY: &str = "create_commodity";
pub const CREATE_COMMODITY_LISTING: &str = "create_commodity_listing";
pub const MAKE_BID: &str = "make_bid";
pub const CLOSE_BIDDING: &str = "close_bidding";
pub const TRANSFER_ASSETS: &str = "transfer_assets";
pub const ADD_RENOVATION: &str = "add_renovation";
pub const GET_PROVENANCE: &str = "get_provenance";
pub const CLOSE_ENVIRONMENT: &str = "close_environment";

/// Operations that change state and therefore go through ordering.
pub const MUTATING_OPERATIONS: [&str; 8] = [
    INITIATE_AUCTION_ENVIRONMENT,
    CREATE_COMMODITY,
    CREATE_COMMODITY_LISTING,
    MAKE_BID,
    CLOSE_BIDDING,
    TRANSFER_ASSETS,
    ADD_RENOVATION,
    CLOSE_ENVIRONMENT,
];

pub fn is_query(operation: &str) -> bool {
    operation == GET_PROVENANCE
}

/// Who is invoking, under which transaction, against which participant set.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext<'a> {
    pub caller: &'a str,
    pub tx_id: &'a str,
    pub registry: &'a MembershipRegistry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub result: Value,
    pub read_set: Vec<ReadEntry>,
    pub write_set: Vec<WriteEntry>,
}

/// Runs a mutating operation against `state`.
pub fn execute<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    state: &S,
    operation: &str,
    args: &Value,
) -> Result<Execution, ChaincodeError> {
    let mut sim = TxSimulator::new(state);
    let result = match operation {
        INITIATE_AUCTION_ENVIRONMENT => ops::initiate_auction_environment(ctx, &mut sim, parse(args)?)?,
        CREATE_COMMODITY => ops::create_commodity(ctx, &mut sim, parse(args)?)?,
        CREATE_COMMODITY_LISTING => ops::create_commodity_listing(ctx, &mut sim, parse(args)?)?,
        MAKE_BID => ops::make_bid(ctx, &mut sim, parse(args)?)?,
        CLOSE_BIDDING => ops::close_bidding(ctx, &mut sim, parse(args)?)?,
        TRANSFER_ASSETS => ops::transfer_assets(ctx, &mut sim, parse(args)?)?,
        ADD_RENOVATION => ops::add_renovation(ctx, &mut sim, parse(args)?)?,
        CLOSE_ENVIRONMENT => ops::close_environment(ctx, &mut sim, parse(args)?)?,
        _ => return Err(ChaincodeError::UnknownOperation),
    };
    let (read_set, write_set) = sim.finish();
    Ok(Execution { result, read_set, write_set })
}

/// Runs a read-only operation. Queries need key history as well as state.
pub fn query<S: StateView + HistoryView + ?Sized>(
    state: &S,
    operation: &str,
    args: &Value,
) -> Result<Value, ChaincodeError> {
    match operation {
        GET_PROVENANCE => {
            let args: ops::ProvenanceArgs = parse(args)?;
            let provenance = get_provenance(state, &args.commodity_id)?;
            Ok(serde_json::to_value(provenance).expect("provenance is plain data"))
        }
        _ => Err(ChaincodeError::UnknownOperation),
    }
}

fn parse<T: DeserializeOwned>(args: &Value) -> Result<T, ChaincodeError> {
    serde_json::from_value(args.clone()).map_err(|e| ChaincodeError::BadArgs(e.to_string()))
}

/// Records reads and buffers writes against an immutable snapshot.
///
/// The first read of a key fixes the version recorded for it. Reads of a key
/// already written in this simulation see the buffered write.
pub struct TxSimulator<'a, S: StateView + ?Sized> {
    state: &'a S,
    reads: BTreeMap<StateKey, Option<Version>>,
    writes: BTreeMap<StateKey, Option<Vec<u8>>>,
}

impl<'a, S: StateView + ?Sized> TxSimulator<'a, S> {
    pub fn new(state: &'a S) -> Self {
        TxSimulator { state, reads: BTreeMap::new(), writes: BTreeMap::new() }
    }

    pub fn get<T: DeserializeOwned>(&mut self, key: &StateKey) -> Result<Option<T>, ChaincodeError> {
        if let Some(pending) = self.writes.get(key) {
            return pending.as_deref().map(|bytes| decode(key, bytes)).transpose();
        }
        let current = self.state.get_state(key);
        self.reads.entry(key.clone()).or_insert(current.map(|v| v.version));
        current.map(|v| decode(key, &v.value)).transpose()
    }

    pub fn put<T: Serialize>(&mut self, key: StateKey, value: &T) {
        self.writes.insert(key, Some(canonical::encode(value)));
    }

    pub fn delete(&mut self, key: StateKey) {
        self.writes.insert(key, None);
    }

    /// Read and write sets, each sorted by key.
    pub fn finish(self) -> (Vec<ReadEntry>, Vec<WriteEntry>) {
        let reads = self.reads.into_iter().map(|(key, version)| ReadEntry { key, version }).collect();
        let writes = self.writes.into_iter().map(|(key, value)| WriteEntry { key, value }).collect();
        (reads, writes)
    }
}

fn decode<T: DeserializeOwned>(key: &StateKey, bytes: &[u8]) -> Result<T, ChaincodeError> {
    canonical::from_canonical_bytes(bytes).map_err(|e| ChaincodeError::CorruptState(format!("{key}: {e}")))
}

/// Deterministic entity id derived from the creating transaction.
pub fn derive_id(prefix: &str, tx_id: &str) -> String {
    let digest = canonical::digest(format!("{prefix}:{tx_id}").as_bytes());
    format!("{prefix}-{}", hex::encode(&digest[..8]))
}
