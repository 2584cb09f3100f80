//! Seeded random operation streams for soak and equivalence runs.
//!
//! The generator keeps a loose model of the ids it has seen created and draws
//! plausible operations against them. Many drawn operations still fail
//! (wrong role, closed listing, low bid); that is intended, since error paths
//! must behave identically everywhere too.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::chaincode::{
    ADD_RENOVATION, CLOSE_BIDDING, CLOSE_ENVIRONMENT, CREATE_COMMODITY, CREATE_COMMODITY_LISTING,
    INITIATE_AUCTION_ENVIRONMENT, MAKE_BID, TRANSFER_ASSETS,
};
use crate::membership::{MembershipRegistry, Role};

/// Identities taking part in a workload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cast {
    pub members: Vec<String>,
    pub auctioneers: Vec<String>,
}

impl Cast {
    /// Registers `members` members and `auctioneers` auctioneers.
    pub fn register(registry: &MembershipRegistry, members: usize, auctioneers: usize) -> Cast {
        let reg = |name: String, role| registry.register_identity(&name, role).expect("non-empty name").identity_id;
        Cast {
            members: (0..members).map(|i| reg(format!("member{i}"), Role::Member)).collect(),
            auctioneers: (0..auctioneers).map(|i| reg(format!("auctioneer{i}"), Role::Auctioneer)).collect(),
        }
    }
}

/// One operation to submit.
#[derive(Debug, Clone, PartialEq)]
pub struct Op {
    pub actor: String,
    pub operation: &'static str,
    pub args: Value,
}

#[derive(Debug, Clone)]
struct ListingInfo {
    id: String,
    commodity: String,
    env: String,
    seller: String,
}

#[derive(Debug)]
pub struct WorkloadGen {
    rng: ChaCha8Rng,
    cast: Cast,
    /// environment id -> (auctioneer, buyers)
    envs: BTreeMap<String, (String, Vec<String>)>,
    /// commodity id -> presumed owner
    commodities: BTreeMap<String, String>,
    listings: Vec<ListingInfo>,
    renovation_profile: bool,
}

impl WorkloadGen {
    pub fn new(seed: u64, cast: Cast) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let renovation_profile = rng.gen_bool(0.5);
        WorkloadGen {
            rng,
            cast,
            envs: BTreeMap::new(),
            commodities: BTreeMap::new(),
            listings: Vec::new(),
            renovation_profile,
        }
    }

    fn member(&mut self) -> String {
        self.cast.members.choose(&mut self.rng).expect("cast has members").clone()
    }

    fn anyone(&mut self) -> String {
        if self.rng.gen_bool(0.8) || self.cast.auctioneers.is_empty() {
            self.member()
        } else {
            self.cast.auctioneers.choose(&mut self.rng).expect("non-empty").clone()
        }
    }

    fn subset(&mut self) -> Vec<String> {
        let n = self.rng.gen_range(1..=self.cast.members.len());
        let mut picked: Vec<String> = self.cast.members.choose_multiple(&mut self.rng, n).cloned().collect();
        picked.sort();
        picked
    }

    fn pick<T: Clone>(rng: &mut ChaCha8Rng, items: &[T]) -> Option<T> {
        items.choose(rng).cloned()
    }

    /// Draws the next operation.
    pub fn next_op(&mut self) -> Op {
        loop {
            let roll = self.rng.gen_range(0..100);
            let op = match roll {
                0..=7 => Some(self.initiate()),
                8..=19 => Some(self.create_commodity()),
                20..=34 => self.listing(),
                35..=69 => self.bid(),
                70..=81 => self.close_bidding(),
                82..=91 => self.transfer(),
                92..=96 => self.renovation(),
                _ => self.close_environment(),
            };
            if let Some(op) = op {
                return op;
            }
        }
    }

    fn initiate(&mut self) -> Op {
        let auctioneer = if self.rng.gen_bool(0.9) && !self.cast.auctioneers.is_empty() {
            self.cast.auctioneers.choose(&mut self.rng).expect("non-empty").clone()
        } else {
            self.member()
        };
        let (buyers, sellers) = (self.subset(), self.subset());
        Op {
            actor: auctioneer.clone(),
            operation: INITIATE_AUCTION_ENVIRONMENT,
            args: json!({ "buyersLst": buyers, "sellersLst": sellers, "auctioneer": auctioneer }),
        }
    }

    fn create_commodity(&mut self) -> Op {
        let actor = self.member();
        let price = self.rng.gen_range(0..500);
        let profile = if self.renovation_profile { "real-estate" } else { "art" };
        Op {
            actor,
            operation: CREATE_COMMODITY,
            args: json!({ "description": format!("item-{price}"), "idealPrice": price, "profile": profile }),
        }
    }

    fn listing(&mut self) -> Option<Op> {
        let commodities: Vec<_> = self.commodities.iter().map(|(c, o)| (c.clone(), o.clone())).collect();
        let (commodity, owner) = Self::pick(&mut self.rng, &commodities)?;
        let envs: Vec<_> = self.envs.keys().cloned().collect();
        let env = Self::pick(&mut self.rng, &envs)?;
        let seller = if self.rng.gen_bool(0.85) { owner } else { self.member() };
        let reserve = self.rng.gen_range(-5..100);
        Some(Op {
            actor: seller.clone(),
            operation: CREATE_COMMODITY_LISTING,
            args: json!({
                "exchangeName": "exchange", "commodityId": commodity, "sellerId": seller,
                "reservePrice": reserve, "auctionId": env,
            }),
        })
    }

    fn bid(&mut self) -> Option<Op> {
        let listing = Self::pick(&mut self.rng, &self.listings)?;
        let buyers = self.envs.get(&listing.env).map(|(_, b)| b.clone()).unwrap_or_default();
        let buyer = match Self::pick(&mut self.rng, &buyers) {
            Some(b) if self.rng.gen_bool(0.85) => b,
            _ => self.member(),
        };
        let price = self.rng.gen_range(0..300);
        Some(Op {
            actor: buyer.clone(),
            operation: MAKE_BID,
            args: json!({ "listingId": listing.id, "potentialBuyer": buyer, "bidPrice": price }),
        })
    }

    fn close_bidding(&mut self) -> Option<Op> {
        let listing = Self::pick(&mut self.rng, &self.listings)?;
        let actor = match self.envs.get(&listing.env) {
            Some((auc, _)) if self.rng.gen_bool(0.85) => auc.clone(),
            _ => self.anyone(),
        };
        Some(Op { actor, operation: CLOSE_BIDDING, args: json!({ "listingId": listing.id }) })
    }

    fn transfer(&mut self) -> Option<Op> {
        let listing = Self::pick(&mut self.rng, &self.listings)?;
        let buyers = self.envs.get(&listing.env).map(|(_, b)| b.clone()).unwrap_or_default();
        let new_owner = Self::pick(&mut self.rng, &buyers).unwrap_or_else(|| self.member());
        let actor = if self.rng.gen_bool(0.5) { listing.seller.clone() } else { self.anyone() };
        Some(Op {
            actor,
            operation: TRANSFER_ASSETS,
            args: json!({ "listingId": listing.id, "proposedNewOwner": new_owner }),
        })
    }

    fn renovation(&mut self) -> Option<Op> {
        let commodities: Vec<_> = self.commodities.iter().map(|(c, o)| (c.clone(), o.clone())).collect();
        let (commodity, owner) = Self::pick(&mut self.rng, &commodities)?;
        let actor = if self.rng.gen_bool(0.8) { owner } else { self.member() };
        let (month, day) = (self.rng.gen_range(1..=12), self.rng.gen_range(1..=28));
        Some(Op {
            actor,
            operation: ADD_RENOVATION,
            args: json!({
                "commodityId": commodity, "date": format!("2024-{month:02}-{day:02}"),
                "cost": self.rng.gen_range(-2..1000), "description": "work",
            }),
        })
    }

    fn close_environment(&mut self) -> Option<Op> {
        let envs: Vec<_> = self.envs.iter().map(|(e, (a, _))| (e.clone(), a.clone())).collect();
        let (env, auctioneer) = Self::pick(&mut self.rng, &envs)?;
        Some(Op { actor: auctioneer, operation: CLOSE_ENVIRONMENT, args: json!({ "auctionId": env }) })
    }

    /// Feeds back the result of an operation that was accepted.
    pub fn observe(&mut self, op: &Op, result: &Value) {
        let field = |name: &str| result.get(name).and_then(Value::as_str).map(str::to_string);
        match op.operation {
            INITIATE_AUCTION_ENVIRONMENT => {
                if let Some(id) = field("auctionId") {
                    let buyers = op.args["buyersLst"]
                        .as_array()
                        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
                        .unwrap_or_default();
                    self.envs.insert(id, (op.actor.clone(), buyers));
                }
            }
            CREATE_COMMODITY => {
                if let Some(id) = field("commodityId") {
                    self.commodities.insert(id, op.actor.clone());
                }
            }
            CREATE_COMMODITY_LISTING => {
                if let Some(id) = field("listingId") {
                    self.listings.push(ListingInfo {
                        id,
                        commodity: op.args["commodityId"].as_str().unwrap_or_default().to_string(),
                        env: op.args["auctionId"].as_str().unwrap_or_default().to_string(),
                        seller: op.actor.clone(),
                    });
                }
            }
            TRANSFER_ASSETS if field("outcome").as_deref() == Some("TRANSFERRED") => {
                let listing = op.args["listingId"].as_str().unwrap_or_default();
                let new_owner = op.args["proposedNewOwner"].as_str().unwrap_or_default().to_string();
                if let Some(info) = self.listings.iter().find(|l| l.id == listing) {
                    self.commodities.insert(info.commodity.clone(), new_owner);
                }
            }
            _ => {}
        }
    }
}
