//! Buyer / market (MMS) / trusted third party (TTP) state machines over a
//! simulated message bus.
//!
//! The MMS prices queries, keeps plaintext balances and answers buyers with
//! ciphers and ranges only. Every charge is archived at the TTP, which tracks
//! each balance as a cipher and answers balance and range checks.

mod buyer;
pub mod flow;
mod market;
mod message;
mod mms;
mod ttp;

use thiserror::Error;

pub use buyer::{Buyer, QuotePolicy, QuoteView};
pub use market::Market;
pub use message::{ConsumptionRecord, Envelope, PartyId, Payload, RangeVerdict, Receipt};
pub use mms::{Account, MarketSetup, Mms, PricedQuery, VendorDataset};
pub use ttp::{AuditFlag, AuditReason, Ttp};

use crate::groupcrypto::{self, CryptoError, EncryptedAmount, GroupParams, UserId};
use crate::pricing::PricingError;
use crate::quality::QualityError;
use crate::relation::RelationError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("the market needs at least one vendor dataset")]
    EmptyVendorList,
    #[error("relation `{0}` is listed twice")]
    DuplicateRelation(String),
    #[error("price point for `{point}` attached to relation `{relation}`")]
    PricePointMismatch { relation: String, point: String },
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("session {0} has expired")]
    StaleSession(u64),
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("sender does not own user {0}")]
    NotOwner(UserId),
    #[error("invalid amount: {0}")]
    InvalidAmount(String),
    #[error("consumption archive unavailable")]
    ArchiveUnavailable,
    #[error("archived range spans {0} minor units, above the enumeration cap, and no price was escrowed")]
    RangeTooWide(u64),
    #[error("remote error {code}: {detail}")]
    Remote { code: String, detail: String },
    #[error("no {0} arrived")]
    NoResponse(&'static str),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

impl ProtocolError {
    /// Wire code for `Payload::Error`.
    pub fn code(&self) -> &'static str {
        use ProtocolError::*;
        match self {
            EmptyVendorList | DuplicateRelation(_) | PricePointMismatch { .. } => "setup",
            UnknownUser(_) => "unknown_user",
            UnknownRelation(_) => "unknown_relation",
            UnknownSession(_) => "unknown_session",
            StaleSession(_) => "stale_session",
            InsufficientBalance => "insufficient_balance",
            NotOwner(_) => "not_owner",
            InvalidAmount(_) => "invalid_amount",
            ArchiveUnavailable => "archive_unavailable",
            RangeTooWide(_) => "range_too_wide",
            Remote { .. } => "remote",
            NoResponse(_) => "no_response",
            Relation(_) => "invalid_query",
            Quality(_) => "quality",
            Pricing(_) => "pricing",
            Crypto(_) => "crypto",
        }
    }

    fn to_payload(&self) -> Payload {
        Payload::error(self.code(), self.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// The buyer's check that a charge was subtracted properly.
pub fn buyer_verify(
    pre_balance: &EncryptedAmount,
    price: &EncryptedAmount,
    post_balance: &EncryptedAmount,
    params: &GroupParams,
) -> Result<bool> {
    Ok(groupcrypto::verify_consumption(pre_balance, price, post_balance, params)?)
}
