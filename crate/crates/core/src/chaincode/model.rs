use serde::{Deserialize, Serialize};

use crate::ledger::{Namespace, StateKey, Version};

/// `viaListingId` of the first ownership record of every commodity.
pub const GENESIS: &str = "GENESIS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ListingState {
    ForSale,
    Sold,
    ReserveNotMet,
}

impl ListingState {
    pub fn as_str(self) -> &'static str {
        match self {
            ListingState::ForSale => "FOR_SALE",
            ListingState::Sold => "SOLD",
            ListingState::ReserveNotMet => "RESERVE_NOT_MET",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != ListingState::ForSale
    }
}

/// Creation-time application profile. Art does not track renovations; real
/// estate does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    #[serde(rename = "art")]
    Art,
    #[serde(rename = "real-estate")]
    RealEstate,
}

impl Profile {
    pub fn tracks_renovations(self) -> bool {
        self == Profile::RealEstate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OwnershipEntry {
    pub owner: String,
    pub via_listing_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Commodity {
    pub commodity_id: String,
    pub description: String,
    pub ideal_price: i64,
    pub owner: String,
    /// Append-only; the last entry's owner is always `owner`. Commit versions
    /// are not known at execution time and are recovered from key history by
    /// provenance queries.
    pub ownership_history: Vec<OwnershipEntry>,
    pub renovation_ids: Vec<String>,
    pub track_renovations: bool,
    /// Listing that currently holds the commodity: set while FOR_SALE and
    /// while SOLD but not yet transferred.
    pub active_listing: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Renovation {
    pub renovation_id: String,
    pub commodity_id: String,
    pub date: String,
    pub cost: i64,
    pub renovating_owner: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MaxBid {
    pub offer_id: String,
    pub bid_price: i64,
    pub member: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommodityListing {
    pub listing_id: String,
    pub exchange_name: String,
    pub commodity_id: String,
    pub seller_id: String,
    pub reserve_price: i64,
    pub offer_ids: Vec<String>,
    pub max_bid: Option<MaxBid>,
    pub state: ListingState,
    pub done_buyer: Option<String>,
    pub auction_id: String,
    /// Set once the sold commodity has changed hands.
    pub transferred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Offer {
    pub offer_id: String,
    pub listing_id: String,
    pub member: String,
    pub bid_price: i64,
    pub seq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuctionEnvironment {
    pub auction_id: String,
    pub active_buyers: Vec<String>,
    pub active_sellers: Vec<String>,
    pub active_auctioneer: String,
    pub open: bool,
    pub listing_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransferOutcome {
    Transferred,
    NoChange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OwnershipRecord {
    pub owner: String,
    pub acquired_at_version: Version,
    pub via_listing_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RenovationRecord {
    #[serde(flatten)]
    pub renovation: Renovation,
    pub version: Version,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProvenanceEvent {
    Ownership(OwnershipRecord),
    Renovation(RenovationRecord),
}

impl ProvenanceEvent {
    pub fn version(&self) -> Version {
        match self {
            ProvenanceEvent::Ownership(r) => r.acquired_at_version,
            ProvenanceEvent::Renovation(r) => r.version,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub commodity_id: String,
    pub description: String,
    pub owner: String,
    pub ownership_history: Vec<OwnershipRecord>,
    pub renovations: Vec<RenovationRecord>,
    /// Ownership changes and renovations merged in commit order.
    pub timeline: Vec<ProvenanceEvent>,
}

pub fn commodity_key(id: &str) -> StateKey {
    StateKey::new(Namespace::Commodity, id)
}

pub fn listing_key(id: &str) -> StateKey {
    StateKey::new(Namespace::Listing, id)
}

pub fn offer_key(id: &str) -> StateKey {
    StateKey::new(Namespace::Offer, id)
}

pub fn renovation_key(id: &str) -> StateKey {
    StateKey::new(Namespace::Renovation, id)
}

pub fn environment_key(id: &str) -> StateKey {
    StateKey::new(Namespace::Environment, id)
}
