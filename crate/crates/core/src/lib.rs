//! Permissioned ledger for non-fungible commodities and their auctions.
//!
//! * [`membership`]: participant identities, signatures and role checks.
//! * [`ledger`]: block log, world state, MVCC validation and integrity checks.
//! * [`chaincode`]: the commodity, listing and auction operations.
//! * [`pipeline`]: simulated execute-order-validate network and scenarios.
//! * [`workload`]: seeded random operation streams.

pub mod canonical;
pub mod chaincode;
pub mod ledger;
pub mod membership;
pub mod pipeline;
pub mod workload;
