use serde_json::{json, Value};

use super::scenario::{run_scenario, Scenario, ScenarioError};
use super::*;
use crate::chaincode::{self, ChaincodeError};
use crate::ledger::ValidityFlag;
use crate::membership::Role;

struct Setup {
    net: Network,
    auctioneer: String,
    seller: String,
    buyer1: String,
    buyer2: String,
    listing: String,
    commodity: String,
}

fn config(peers: usize, m: usize) -> NetworkConfig {
    NetworkConfig { peers, required_endorsements: m, ..NetworkConfig::default() }
}

fn id_of(result: &Value, field: &str) -> String {
    result[field].as_str().unwrap().to_string()
}

fn committed(net: &Network, tx_id: &str) -> ValidityFlag {
    match net.tx_status(tx_id) {
        TxStatus::Committed(loc) => loc.flag,
        other => panic!("{tx_id} not committed: {other:?}"),
    }
}

/// Registers a cast and brings one listing to FOR_SALE.
fn setup(config: NetworkConfig) -> Setup {
    let registry = MembershipRegistry::new(b"pipeline-tests");
    let reg = |n, r| registry.register_identity(n, r).unwrap().identity_id;
    let (auctioneer, seller) = (reg("auc", Role::Auctioneer), reg("sel", Role::Member));
    let (buyer1, buyer2) = (reg("b1", Role::Member), reg("b2", Role::Member));
    let mut net = Network::new(config, registry, 7).unwrap();

    let env = net
        .submit(
            &auctioneer,
            chaincode::INITIATE_AUCTION_ENVIRONMENT,
            json!({ "buyersLst": [buyer1, buyer2], "sellersLst": [seller], "auctioneer": auctioneer }),
        )
        .unwrap();
    let commodity = net
        .submit(
            &seller,
            chaincode::CREATE_COMMODITY,
            json!({ "description": "vase", "idealPrice": 50, "profile": "art" }),
        )
        .unwrap();
    assert!(net.run_until_idle(100));
    let auction_id = id_of(&env.result, "auctionId");
    let commodity = id_of(&commodity.result, "commodityId");
    let listing = net
        .submit(
            &seller,
            chaincode::CREATE_COMMODITY_LISTING,
            json!({ "exchangeName": "x", "commodityId": commodity, "sellerId": seller, "reservePrice": 10, "auctionId": auction_id }),
        )
        .unwrap();
    assert!(net.run_until_idle(100));
    let listing = id_of(&listing.result, "listingId");
    Setup { net, auctioneer, seller, buyer1, buyer2, listing, commodity }
}

fn bid(net: &mut Network, buyer: &str, listing: &str, price: i64) -> Result<SubmitReceipt, SubmitError> {
    net.submit(buyer, chaincode::MAKE_BID, json!({ "listingId": listing, "potentialBuyer": buyer, "bidPrice": price }))
}

#[test]
fn single_peer_full_sale() {
    let Setup { mut net, auctioneer, seller, buyer1, listing, commodity, .. } = setup(config(1, 1));
    let r = bid(&mut net, &buyer1, &listing, 20).unwrap();
    assert_eq!(net.tx_status(&r.tx_id), TxStatus::Pending);
    net.run_until_idle(100);
    assert_eq!(committed(&net, &r.tx_id), ValidityFlag::Valid);
    net.submit(&auctioneer, chaincode::CLOSE_BIDDING, json!({ "listingId": listing })).unwrap();
    net.run_until_idle(100);
    net.submit(&seller, chaincode::TRANSFER_ASSETS, json!({ "listingId": listing, "proposedNewOwner": buyer1 }))
        .unwrap();
    net.run_until_idle(100);
    let prov = net.query(chaincode::GET_PROVENANCE, &json!({ "commodityId": commodity })).unwrap();
    assert_eq!(prov["owner"], json!(buyer1));
    assert_eq!(prov["ownershipHistory"].as_array().unwrap().len(), 2);
    assert!(net.anchor().ledger().verify_chain().ok);
}

#[test]
fn low_bid_rejected_before_ordering() {
    let Setup { mut net, buyer1, buyer2, listing, .. } = setup(config(3, 2));
    bid(&mut net, &buyer1, &listing, 20).unwrap();
    net.run_until_idle(100);
    let height = net.anchor().height();
    let err = bid(&mut net, &buyer2, &listing, 20).unwrap_err();
    assert_eq!(err, SubmitError::Chaincode(ChaincodeError::BidTooLow));
    assert_eq!(err.code(), "BID_TOO_LOW");
    net.run_until_idle(100);
    assert_eq!(net.anchor().height(), height);
}

#[test]
fn authorization_failures_never_reach_the_orderer() {
    let Setup { mut net, seller, buyer1, listing, .. } = setup(config(3, 3));
    let height = net.anchor().height();
    let close = net.submit(&buyer1, chaincode::CLOSE_BIDDING, json!({ "listingId": listing })).unwrap_err();
    assert_eq!(close.code(), "NOT_AUCTIONEER");
    let self_bid = bid(&mut net, &seller, &listing, 30).unwrap_err();
    assert_eq!(self_bid.code(), "SELF_BID");
    net.run_until_idle(100);
    assert_eq!(net.anchor().height(), height);
}

#[test]
fn forged_proposal_rejected() {
    let Setup { mut net, buyer1, listing, .. } = setup(config(1, 1));
    let nonce = net.take_nonce();
    let args = json!({ "listingId": listing, "potentialBuyer": buyer1, "bidPrice": 20 });
    let mut proposal = Proposal::signed(net.registry(), &buyer1, nonce, chaincode::MAKE_BID, args).unwrap();
    proposal.args["bidPrice"] = json!(2000);
    assert_eq!(net.submit_proposal(proposal).unwrap_err(), SubmitError::BadSignature);
}

#[test]
fn stale_endorser_is_outvoted() {
    let Setup { mut net, buyer1, buyer2, listing, .. } = setup(config(3, 2));
    net.inject(Fault::Delay { target: "peer2".into(), ticks: 50, blocks: 1 }).unwrap();
    bid(&mut net, &buyer1, &listing, 20).unwrap();
    net.tick();
    net.tick();
    assert_eq!(net.peer("peer2").unwrap().height() + 1, net.anchor().height());

    let r = bid(&mut net, &buyer2, &listing, 25).unwrap();
    assert_eq!(r.endorsers, vec!["peer0".to_string(), "peer1".to_string()]);
    net.run_until_idle(500);
    assert_eq!(committed(&net, &r.tx_id), ValidityFlag::Valid);
    assert!(net.converged());
}

#[test]
fn dropped_endorsements_cause_shortfall() {
    let Setup { mut net, buyer1, listing, .. } = setup(config(3, 3));
    net.inject(Fault::DropEndorsement { target: "peer1".into(), count: 1 }).unwrap();
    match bid(&mut net, &buyer1, &listing, 20).unwrap_err() {
        SubmitError::EndorsementShortfall { outcomes } => {
            assert_eq!(outcomes[1], ("peer1".to_string(), EndorserOutcome::Dropped));
            assert_eq!(outcomes[0].1, EndorserOutcome::Diverged);
        }
        other => panic!("unexpected {other:?}"),
    }
    // The fault is used up; the retry succeeds.
    bid(&mut net, &buyer1, &listing, 20).unwrap();
}

#[test]
fn racing_equal_bids_one_conflicts() {
    let Setup { mut net, buyer1, buyer2, listing, .. } = setup(config(3, 2));
    let a = bid(&mut net, &buyer1, &listing, 20).unwrap();
    let b = bid(&mut net, &buyer2, &listing, 20).unwrap();
    net.run_until_idle(100);
    assert_eq!(committed(&net, &a.tx_id), ValidityFlag::Valid);
    assert_eq!(committed(&net, &b.tx_id), ValidityFlag::MvccConflict);
    let retry = bid(&mut net, &buyer2, &listing, 21).unwrap();
    net.run_until_idle(100);
    assert_eq!(committed(&net, &retry.tx_id), ValidityFlag::Valid);
    assert!(net.converged());
}

#[test]
fn reordered_blocks_are_held_then_backfilled() {
    let cfg = NetworkConfig { max_batch_size: 1, ..config(3, 1) };
    let Setup { mut net, buyer1, listing, .. } = setup(cfg);
    net.inject(Fault::Reorder { target: "peer1".into() }).unwrap();
    bid(&mut net, &buyer1, &listing, 20).unwrap();
    bid(&mut net, &buyer1, &listing, 30).unwrap();
    net.run_until_idle(100);
    assert!(net.converged());
    let kinds: Vec<_> = net.trace().iter().map(|r| &r.event).collect();
    assert!(kinds.iter().any(|e| matches!(e, TraceEvent::GapDetected { peer, .. } if peer == "peer1")));
    assert!(kinds.iter().any(|e| matches!(e, TraceEvent::Backfilled { peer, .. } if peer == "peer1")));
    assert!(!kinds.iter().any(|e| matches!(e, TraceEvent::FlagDivergence { .. })));
}

#[test]
fn gossip_faults_cannot_target_anchor() {
    let mut net = Network::new(config(2, 1), MembershipRegistry::new(b"x"), 1).unwrap();
    assert!(net.inject(Fault::Reorder { target: "peer0".into() }).is_err());
    assert!(net.inject(Fault::Delay { target: "peer9".into(), ticks: 1, blocks: 1 }).is_err());
}

#[test]
fn network_config_bounds() {
    assert!(Network::new(config(0, 1), MembershipRegistry::new(b"x"), 1).is_err());
    assert!(Network::new(config(3, 4), MembershipRegistry::new(b"x"), 1).is_err());
    let cfg = NetworkConfig { endorsers: Some(4), ..config(3, 1) };
    assert!(Network::new(cfg, MembershipRegistry::new(b"x"), 1).is_err());
}

#[test]
fn jitter_keeps_convergence() {
    let cfg = NetworkConfig { gossip_jitter_ticks: 4, max_batch_size: 1, ..config(5, 2) };
    let Setup { mut net, buyer1, buyer2, listing, .. } = setup(cfg);
    for price in 1..=10 {
        let buyer = if price % 2 == 0 { &buyer1 } else { &buyer2 };
        let _ = bid(&mut net, buyer, &listing, price * 10);
        net.tick();
    }
    assert!(net.run_until_idle(1000));
    assert!(net.converged());
}

const SALE: &str = r#"{
  "name": "sale",
  "profile": "art",
  "network": { "peers": 3, "requiredEndorsements": 2 },
  "identities": [
    { "name": "auc", "role": "AUCTIONEER" },
    { "name": "sel", "role": "MEMBER" },
    { "name": "b1", "role": "MEMBER" },
    { "name": "b2", "role": "MEMBER" }
  ],
  "steps": [
    { "tick": 0, "actor": "auc", "operation": "initiate_auction_environment",
      "args": { "buyersLst": ["$b1", "$b2"], "sellersLst": ["$sel"], "auctioneer": "$auc" }, "bind": "env" },
    { "tick": 0, "actor": "sel", "operation": "create_commodity",
      "args": { "description": "vase", "idealPrice": 50 }, "bind": "vase" },
    { "tick": 3, "actor": "sel", "operation": "create_commodity_listing",
      "args": { "exchangeName": "x", "commodityId": "$vase", "sellerId": "$sel", "reservePrice": 10, "auctionId": "$env" },
      "bind": "lst" },
    { "tick": 4, "fault": "delay", "target": "peer2", "ticks": 5 },
    { "tick": 6, "actor": "b1", "operation": "make_bid",
      "args": { "listingId": "$lst", "potentialBuyer": "$b1", "bidPrice": 20 }, "expect": "VALID" },
    { "tick": 9, "actor": "b2", "operation": "make_bid",
      "args": { "listingId": "$lst", "potentialBuyer": "$b2", "bidPrice": 15 }, "expect": "BID_TOO_LOW" },
    { "tick": 10, "actor": "auc", "operation": "close_bidding", "args": { "listingId": "$lst" } },
    { "tick": 13, "actor": "b1", "operation": "transfer_assets",
      "args": { "listingId": "$lst", "proposedNewOwner": "$b1" } },
    { "tick": 16, "actor": "b1", "operation": "get_provenance", "args": { "commodityId": "$vase" }, "expect": "OK" }
  ],
  "expectations": {
    "listings": { "$lst": { "state": "SOLD", "doneBuyer": "$b1" } },
    "commodities": { "$vase": { "owner": "$b1", "ownershipHistoryLength": 2 } }
  }
}"#;

#[test]
fn scenario_runs_and_meets_expectations() {
    let scenario = Scenario::parse(SALE).unwrap();
    let run = run_scenario(&scenario, 3).unwrap();
    assert!(run.passed(), "{:?}", run.failures);
    assert!(run.idle);
    assert!(run.network.converged());
}

#[test]
fn scenario_trace_is_deterministic() {
    let scenario = Scenario::parse(SALE).unwrap();
    let a = run_scenario(&scenario, 11).unwrap().trace_bytes();
    let b = run_scenario(&scenario, 11).unwrap().trace_bytes();
    assert_eq!(a, b);
    assert!(!a.is_empty());
}

#[test]
fn wrong_winner_names_done_buyer() {
    let text = SALE.replace(r#""doneBuyer": "$b1""#, r#""doneBuyer": "$b2""#);
    let run = run_scenario(&Scenario::parse(&text).unwrap(), 3).unwrap();
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].field, "doneBuyer");
}

#[test]
fn scenario_parse_errors_carry_position() {
    let broken = SALE.replacen("\"steps\": [", "\"steps\": [,", 1);
    match Scenario::parse(&broken).unwrap_err() {
        ScenarioError::Parse { line, column, .. } => {
            let expected = broken.lines().position(|l| l.contains("\"steps\": [,")).unwrap() + 1;
            assert_eq!(line, expected);
            assert!(column > 0);
        }
        other => panic!("unexpected {other}"),
    }
    let unbound = SALE.replace("\"$vase\", \"sellerId\"", "\"$nope\", \"sellerId\"");
    let err = Scenario::parse(&unbound).unwrap_err();
    assert_eq!(err.code(), "SCENARIO_PARSE_ERROR");
    assert!(err.to_string().contains("$nope"));
    let anchor_fault = SALE.replace(r#""target": "peer2""#, r#""target": "peer0""#);
    assert!(Scenario::parse(&anchor_fault).is_err());
}

#[test]
fn fractional_arguments_are_refused() {
    let Setup { mut net, buyer1, listing, .. } = setup(config(1, 1));
    let err = net
        .submit(
            &buyer1,
            chaincode::MAKE_BID,
            json!({ "listingId": listing, "potentialBuyer": buyer1, "bidPrice": 20.5 }),
        )
        .unwrap_err();
    assert_eq!(err.code(), "UNSUPPORTED_VALUE");
}
