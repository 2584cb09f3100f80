use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracer_core::canonical;
use tracer_core::chaincode::{CLOSE_BIDDING, CREATE_COMMODITY_LISTING, MAKE_BID, TRANSFER_ASSETS};
use tracer_core::ledger::Block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    ListingCreated,
    BidAccepted,
    BidRejected,
    BiddingClosed,
    AssetTransferred,
    BlockCommitted,
}

/// One entry of the live event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventRecord {
    pub event_seq: u64,
    pub kind: EventKind,
    pub payload: Value,
}

impl EventRecord {
    /// Stream framing: `<eventSeq> <canonical record>\n`.
    pub fn to_line(&self) -> Vec<u8> {
        let mut line = format!("{} ", self.event_seq).into_bytes();
        line.extend(canonical::encode(self));
        line.push(b'\n');
        line
    }
}

/// Events for one committed block, in envelope order, followed by the block
/// itself. Sequence numbers start at `next_seq`.
pub fn events_for_block(block: &Block, next_seq: u64) -> Vec<EventRecord> {
    let mut out = Vec::new();
    let mut push = |kind, payload| {
        out.push(EventRecord { event_seq: next_seq + out.len() as u64, kind, payload });
    };
    for (i, env) in block.envelopes.iter().enumerate() {
        let flag = block.validity_flags.get(i).copied();
        let valid = block.is_valid_at(i);
        let base = |extra: Value| {
            let mut payload = json!({ "txId": env.tx_id, "blockNumber": block.number, "txIndex": i });
            if let (Some(map), Value::Object(extra)) = (payload.as_object_mut(), extra) {
                map.extend(extra);
            }
            payload
        };
        match env.operation.as_str() {
            CREATE_COMMODITY_LISTING if valid => push(
                EventKind::ListingCreated,
                base(json!({
                    "listingId": env.result["listingId"],
                    "commodityId": env.args["commodityId"],
                    "sellerId": env.args["sellerId"],
                    "reservePrice": env.args["reservePrice"],
                    "auctionId": env.args["auctionId"],
                })),
            ),
            MAKE_BID => {
                let detail = json!({
                    "listingId": env.args["listingId"],
                    "buyer": env.args["potentialBuyer"],
                    "bidPrice": env.args["bidPrice"],
                    "offerId": env.result["offerId"],
                });
                if valid {
                    push(EventKind::BidAccepted, base(detail));
                } else {
                    let mut payload = base(detail);
                    payload["flag"] = json!(flag);
                    push(EventKind::BidRejected, payload);
                }
            }
            CLOSE_BIDDING if valid => push(
                EventKind::BiddingClosed,
                base(json!({
                    "listingId": env.args["listingId"],
                    "state": env.result["state"],
                    "doneBuyer": env.result["doneBuyer"],
                })),
            ),
            TRANSFER_ASSETS if valid && env.result["outcome"] == "TRANSFERRED" => push(
                EventKind::AssetTransferred,
                base(json!({
                    "listingId": env.args["listingId"],
                    "commodityId": env.result["commodityId"],
                    "newOwner": env.args["proposedNewOwner"],
                })),
            ),
            _ => {}
        }
    }
    push(
        EventKind::BlockCommitted,
        json!({
            "number": block.number,
            "hash": hex::encode(block.hash()),
            "txCount": block.envelopes.len(),
            "flags": block.validity_flags,
        }),
    );
    out
}
