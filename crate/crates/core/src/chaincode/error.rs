use thiserror::Error;

/// Chaincode precondition failures. The `Display` form is the stable error
/// code carried on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChaincodeError {
    #[error("EMPTY_BUYERS")]
    EmptyBuyers,
    #[error("EMPTY_SELLERS")]
    EmptySellers,
    #[error("NULL_AUCTIONEER")]
    NullAuctioneer,
    #[error("DUPLICATE_PARTICIPANT")]
    DuplicateParticipant,
    #[error("UNKNOWN_IDENTITY")]
    UnknownIdentity,
    #[error("ROLE_MISMATCH")]
    RoleMismatch,
    #[error("NEGATIVE_PRICE")]
    NegativePrice,
    #[error("UNKNOWN_EXCHANGE")]
    UnknownExchange,
    #[error("UNKNOWN_COMMODITY")]
    UnknownCommodity,
    #[error("UNKNOWN_ENVIRONMENT")]
    UnknownEnvironment,
    #[error("NOT_OWNER")]
    NotOwner,
    #[error("NOT_ACTIVE_SELLER")]
    NotActiveSeller,
    #[error("ALREADY_LISTED")]
    AlreadyListed,
    #[error("ENV_CLOSED")]
    EnvClosed,
    #[error("NEGATIVE_RESERVE")]
    NegativeReserve,
    #[error("UNKNOWN_LISTING")]
    UnknownListing,
    #[error("LISTING_NOT_OPEN")]
    ListingNotOpen,
    #[error("UNKNOWN_BUYER")]
    UnknownBuyer,
    #[error("NOT_ACTIVE_BUYER")]
    NotActiveBuyer,
    #[error("CALLER_MISMATCH")]
    CallerMismatch,
    #[error("SELF_BID")]
    SelfBid,
    #[error("BID_TOO_LOW")]
    BidTooLow,
    #[error("NOT_AUCTIONEER")]
    NotAuctioneer,
    #[error("ALREADY_CLOSED")]
    AlreadyClosed,
    #[error("RENOVATIONS_DISABLED")]
    RenovationsDisabled,
    #[error("LISTED_COMMODITY_FROZEN")]
    ListedCommodityFrozen,
    #[error("NEGATIVE_COST")]
    NegativeCost,
    #[error("INVALID_DATE")]
    InvalidDate,
    #[error("OPEN_LISTINGS_REMAIN")]
    OpenListingsRemain,
    #[error("DUPLICATE_ID")]
    DuplicateId,
    #[error("UNKNOWN_OPERATION")]
    UnknownOperation,
    #[error("BAD_ARGS")]
    BadArgs(String),
    #[error("CORRUPT_STATE")]
    CorruptState(String),
}

impl ChaincodeError {
    pub fn code(&self) -> String {
        self.to_string()
    }

    /// True for errors that name an entity that does not exist; the HTTP layer
    /// maps these to 404 when the id came from the request path.
    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            ChaincodeError::UnknownListing | ChaincodeError::UnknownCommodity | ChaincodeError::UnknownEnvironment
        )
    }
}
