use std::collections::HashSet;

use serde::Deserialize;
use serde_json::{json, Value};

use super::model::*;
use super::{derive_id, ChaincodeError, ExecContext, TxSimulator};
use crate::ledger::StateView;
use crate::membership::{Identity, Role};

type Sim<'a, 'b, S> = &'b mut TxSimulator<'a, S>;

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct InitiateArgs {
    buyers_lst: Vec<String>,
    sellers_lst: Vec<String>,
    #[serde(default)]
    auctioneer: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct CreateCommodityArgs {
    description: String,
    ideal_price: i64,
    #[serde(default)]
    track_renovations: Option<bool>,
    #[serde(default)]
    profile: Option<Profile>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct CreateListingArgs {
    exchange_name: String,
    commodity_id: String,
    seller_id: String,
    reserve_price: i64,
    auction_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct MakeBidArgs {
    listing_id: String,
    potential_buyer: String,
    bid_price: i64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct ListingArgs {
    listing_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct TransferArgs {
    listing_id: String,
    proposed_new_owner: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct RenovationArgs {
    commodity_id: String,
    date: String,
    cost: i64,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct ProvenanceArgs {
    pub(super) commodity_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub(super) struct EnvironmentArgs {
    auction_id: String,
}

fn registered(ctx: &ExecContext<'_>, id: &str) -> Result<Identity, ChaincodeError> {
    ctx.registry.get(id).ok_or(ChaincodeError::UnknownIdentity)
}

fn duplicate_free(ids: &[String]) -> bool {
    let mut seen = HashSet::new();
    ids.iter().all(|id| seen.insert(id))
}

fn load_listing<S: StateView + ?Sized>(sim: Sim<'_, '_, S>, id: &str) -> Result<CommodityListing, ChaincodeError> {
    sim.get(&listing_key(id))?.ok_or(ChaincodeError::UnknownListing)
}

fn load_commodity<S: StateView + ?Sized>(sim: Sim<'_, '_, S>, id: &str) -> Result<Commodity, ChaincodeError> {
    sim.get(&commodity_key(id))?.ok_or(ChaincodeError::UnknownCommodity)
}

fn load_environment<S: StateView + ?Sized>(
    sim: Sim<'_, '_, S>,
    id: &str,
) -> Result<AuctionEnvironment, ChaincodeError> {
    sim.get(&environment_key(id))?.ok_or(ChaincodeError::UnknownEnvironment)
}

/// Allocates a fresh id in `namespace`, failing if it is somehow taken.
fn fresh_id<S: StateView + ?Sized>(
    sim: Sim<'_, '_, S>,
    ctx: &ExecContext<'_>,
    prefix: &str,
    key_of: fn(&str) -> crate::ledger::StateKey,
) -> Result<String, ChaincodeError> {
    let id = derive_id(prefix, ctx.tx_id);
    if sim.get::<Value>(&key_of(&id))?.is_some() {
        return Err(ChaincodeError::DuplicateId);
    }
    Ok(id)
}

pub(super) fn initiate_auction_environment<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: InitiateArgs,
) -> Result<Value, ChaincodeError> {
    if args.buyers_lst.is_empty() {
        return Err(ChaincodeError::EmptyBuyers);
    }
    if args.sellers_lst.is_empty() {
        return Err(ChaincodeError::EmptySellers);
    }
    let auctioneer = match args.auctioneer {
        Some(a) if !a.trim().is_empty() => a,
        _ => return Err(ChaincodeError::NullAuctioneer),
    };
    if !duplicate_free(&args.buyers_lst) || !duplicate_free(&args.sellers_lst) {
        return Err(ChaincodeError::DuplicateParticipant);
    }
    registered(ctx, ctx.caller)?;
    if registered(ctx, &auctioneer)?.role != Role::Auctioneer {
        return Err(ChaincodeError::RoleMismatch);
    }
    for member in args.buyers_lst.iter().chain(&args.sellers_lst) {
        if registered(ctx, member)?.role != Role::Member {
            return Err(ChaincodeError::RoleMismatch);
        }
    }

    let auction_id = fresh_id(sim, ctx, "env", environment_key)?;
    let env = AuctionEnvironment {
        auction_id: auction_id.clone(),
        active_buyers: args.buyers_lst,
        active_sellers: args.sellers_lst,
        active_auctioneer: auctioneer,
        open: true,
        listing_ids: Vec::new(),
    };
    sim.put(environment_key(&auction_id), &env);
    Ok(json!({ "auctionId": auction_id }))
}

pub(super) fn create_commodity<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: CreateCommodityArgs,
) -> Result<Value, ChaincodeError> {
    registered(ctx, ctx.caller)?;
    if args.ideal_price < 0 {
        return Err(ChaincodeError::NegativePrice);
    }
    let track_renovations = match (args.track_renovations, args.profile) {
        (Some(flag), _) => flag,
        (None, Some(profile)) => profile.tracks_renovations(),
        (None, None) => return Err(ChaincodeError::BadArgs("one of trackRenovations or profile is required".into())),
    };

    let commodity_id = fresh_id(sim, ctx, "cmd", commodity_key)?;
    let commodity = Commodity {
        commodity_id: commodity_id.clone(),
        description: args.description,
        ideal_price: args.ideal_price,
        owner: ctx.caller.to_string(),
        ownership_history: vec![OwnershipEntry { owner: ctx.caller.to_string(), via_listing_id: GENESIS.to_string() }],
        renovation_ids: Vec::new(),
        track_renovations,
        active_listing: None,
    };
    sim.put(commodity_key(&commodity_id), &commodity);
    Ok(json!({ "commodityId": commodity_id }))
}

pub(super) fn create_commodity_listing<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: CreateListingArgs,
) -> Result<Value, ChaincodeError> {
    if args.exchange_name.trim().is_empty() {
        return Err(ChaincodeError::UnknownExchange);
    }
    let mut commodity = load_commodity(sim, &args.commodity_id)?;
    if args.reserve_price < 0 {
        return Err(ChaincodeError::NegativeReserve);
    }
    let mut env = load_environment(sim, &args.auction_id)?;
    if !env.open {
        return Err(ChaincodeError::EnvClosed);
    }
    if ctx.caller != args.seller_id || commodity.owner != args.seller_id {
        return Err(ChaincodeError::NotOwner);
    }
    if !env.active_sellers.contains(&args.seller_id) {
        return Err(ChaincodeError::NotActiveSeller);
    }
    if commodity.active_listing.is_some() {
        return Err(ChaincodeError::AlreadyListed);
    }

    let listing_id = fresh_id(sim, ctx, "lst", listing_key)?;
    let listing = CommodityListing {
        listing_id: listing_id.clone(),
        exchange_name: args.exchange_name,
        commodity_id: args.commodity_id,
        seller_id: args.seller_id,
        reserve_price: args.reserve_price,
        offer_ids: Vec::new(),
        max_bid: None,
        state: ListingState::ForSale,
        done_buyer: None,
        auction_id: args.auction_id,
        transferred: false,
    };
    commodity.active_listing = Some(listing_id.clone());
    env.listing_ids.push(listing_id.clone());
    sim.put(listing_key(&listing_id), &listing);
    sim.put(commodity_key(&commodity.commodity_id), &commodity);
    sim.put(environment_key(&env.auction_id), &env);
    Ok(json!({ "listingId": listing_id }))
}

pub(super) fn make_bid<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: MakeBidArgs,
) -> Result<Value, ChaincodeError> {
    let mut listing = load_listing(sim, &args.listing_id)?;
    if listing.state != ListingState::ForSale {
        return Err(ChaincodeError::ListingNotOpen);
    }
    if ctx.registry.get(&args.potential_buyer).is_none() {
        return Err(ChaincodeError::UnknownBuyer);
    }
    if ctx.caller != args.potential_buyer {
        return Err(ChaincodeError::CallerMismatch);
    }
    if args.potential_buyer == listing.seller_id {
        return Err(ChaincodeError::SelfBid);
    }
    let env = load_environment(sim, &listing.auction_id)?;
    if !env.active_buyers.contains(&args.potential_buyer) {
        return Err(ChaincodeError::NotActiveBuyer);
    }
    // Strictly above the standing bid; with no bids yet any positive price.
    let floor = listing.max_bid.as_ref().map_or(0, |m| m.bid_price);
    if args.bid_price <= floor {
        return Err(ChaincodeError::BidTooLow);
    }

    let offer_id = fresh_id(sim, ctx, "off", offer_key)?;
    let offer = Offer {
        offer_id: offer_id.clone(),
        listing_id: listing.listing_id.clone(),
        member: args.potential_buyer.clone(),
        bid_price: args.bid_price,
        seq: listing.offer_ids.len() as u32 + 1,
    };
    listing.offer_ids.push(offer_id.clone());
    listing.max_bid =
        Some(MaxBid { offer_id: offer_id.clone(), bid_price: args.bid_price, member: args.potential_buyer });
    sim.put(offer_key(&offer_id), &offer);
    sim.put(listing_key(&listing.listing_id), &listing);
    Ok(json!({ "offerId": offer_id, "bidPrice": args.bid_price, "seq": offer.seq }))
}

pub(super) fn close_bidding<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: ListingArgs,
) -> Result<Value, ChaincodeError> {
    let mut listing = load_listing(sim, &args.listing_id)?;
    let env = load_environment(sim, &listing.auction_id)?;
    let caller_is_auctioneer =
        ctx.caller == env.active_auctioneer && ctx.registry.get(ctx.caller).is_some_and(|i| i.role == Role::Auctioneer);
    if !caller_is_auctioneer {
        return Err(ChaincodeError::NotAuctioneer);
    }
    if listing.state != ListingState::ForSale {
        return Err(ChaincodeError::AlreadyClosed);
    }

    match &listing.max_bid {
        Some(max) if max.bid_price >= listing.reserve_price => {
            listing.state = ListingState::Sold;
            listing.done_buyer = Some(max.member.clone());
        }
        _ => {
            listing.state = ListingState::ReserveNotMet;
            // The commodity is free to be listed again.
            let mut commodity = load_commodity(sim, &listing.commodity_id)?;
            commodity.active_listing = None;
            sim.put(commodity_key(&commodity.commodity_id), &commodity);
        }
    }
    sim.put(listing_key(&listing.listing_id), &listing);
    Ok(json!({ "state": listing.state, "doneBuyer": listing.done_buyer }))
}

pub(super) fn transfer_assets<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: TransferArgs,
) -> Result<Value, ChaincodeError> {
    let mut listing = load_listing(sim, &args.listing_id)?;
    registered(ctx, &args.proposed_new_owner)?;

    let eligible = listing.state == ListingState::Sold
        && !listing.transferred
        && listing.done_buyer.as_deref() == Some(args.proposed_new_owner.as_str());
    if !eligible {
        return Ok(json!({ "outcome": TransferOutcome::NoChange }));
    }

    let mut commodity = load_commodity(sim, &listing.commodity_id)?;
    commodity.owner = args.proposed_new_owner.clone();
    commodity
        .ownership_history
        .push(OwnershipEntry { owner: args.proposed_new_owner, via_listing_id: listing.listing_id.clone() });
    commodity.active_listing = None;
    listing.transferred = true;
    sim.put(commodity_key(&commodity.commodity_id), &commodity);
    sim.put(listing_key(&listing.listing_id), &listing);
    Ok(json!({ "outcome": TransferOutcome::Transferred, "commodityId": commodity.commodity_id }))
}

fn is_iso_date(text: &str) -> bool {
    text.len() == 10 && chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d").is_ok()
}

pub(super) fn add_renovation<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: RenovationArgs,
) -> Result<Value, ChaincodeError> {
    let mut commodity = load_commodity(sim, &args.commodity_id)?;
    if !commodity.track_renovations {
        return Err(ChaincodeError::RenovationsDisabled);
    }
    if ctx.caller != commodity.owner {
        return Err(ChaincodeError::NotOwner);
    }
    if commodity.active_listing.is_some() {
        return Err(ChaincodeError::ListedCommodityFrozen);
    }
    if args.cost < 0 {
        return Err(ChaincodeError::NegativeCost);
    }
    if !is_iso_date(&args.date) {
        return Err(ChaincodeError::InvalidDate);
    }

    let renovation_id = fresh_id(sim, ctx, "ren", renovation_key)?;
    let renovation = Renovation {
        renovation_id: renovation_id.clone(),
        commodity_id: commodity.commodity_id.clone(),
        date: args.date,
        cost: args.cost,
        renovating_owner: commodity.owner.clone(),
        description: args.description,
    };
    commodity.renovation_ids.push(renovation_id.clone());
    sim.put(renovation_key(&renovation_id), &renovation);
    sim.put(commodity_key(&commodity.commodity_id), &commodity);
    Ok(json!({ "renovationId": renovation_id }))
}

pub(super) fn close_environment<S: StateView + ?Sized>(
    ctx: &ExecContext<'_>,
    sim: Sim<'_, '_, S>,
    args: EnvironmentArgs,
) -> Result<Value, ChaincodeError> {
    let mut env = load_environment(sim, &args.auction_id)?;
    if ctx.caller != env.active_auctioneer {
        return Err(ChaincodeError::NotAuctioneer);
    }
    if !env.open {
        return Err(ChaincodeError::EnvClosed);
    }
    for listing_id in env.listing_ids.clone() {
        if !load_listing(sim, &listing_id)?.state.is_terminal() {
            return Err(ChaincodeError::OpenListingsRemain);
        }
    }
    env.open = false;
    sim.put(environment_key(&env.auction_id), &env);
    Ok(json!({ "auctionId": env.auction_id, "open": false }))
}
