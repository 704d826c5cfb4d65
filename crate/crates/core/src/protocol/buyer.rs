use std::collections::BTreeMap;

use super::message::{Envelope, PartyId, Payload, RangeVerdict, Receipt};
use super::{buyer_verify, Result};
use crate::groupcrypto::{EncryptedAmount, GroupParams, PriceRange, UserId};

/// What a buyer does when a quote arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuotePolicy {
    /// Keep the quote until the driver decides.
    #[default]
    Hold,
    AgreeAll,
    DeclineAll,
}

/// A quote as the buyer sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteView {
    pub session: u64,
    pub range: PriceRange,
    pub price_cipher: EncryptedAmount,
    /// Present only when the market runs in debug leak mode.
    pub leaked_price: Option<f64>,
}

/// Buyer state machine. Knows its user id and the public group, never its
/// generator.
#[derive(Debug, Clone)]
pub struct Buyer {
    pub slot: PartyId,
    params: GroupParams,
    pub policy: QuotePolicy,
    user_id: Option<UserId>,
    public_key: Option<String>,
    quotes: BTreeMap<u64, QuoteView>,
    receipts: Vec<Receipt>,
    /// Every payload received, in arrival order.
    log: Vec<Payload>,
}

impl Buyer {
    pub fn new(slot: PartyId, params: GroupParams, policy: QuotePolicy) -> Self {
        Buyer {
            slot,
            params,
            policy,
            user_id: None,
            public_key: None,
            quotes: BTreeMap::new(),
            receipts: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn user_id(&self) -> Option<UserId> {
        self.user_id
    }

    pub fn public_key(&self) -> Option<&str> {
        self.public_key.as_deref()
    }

    pub fn quote(&self, session: u64) -> Option<&QuoteView> {
        self.quotes.get(&session)
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn log(&self) -> &[Payload] {
        &self.log
    }

    /// Checks one of this buyer's receipts.
    pub fn verify(&self, receipt: &Receipt) -> Result<bool> {
        buyer_verify(
            &receipt.pre_balance_cipher,
            &receipt.price_cipher,
            &receipt.post_balance_cipher,
            &self.params,
        )
    }

    pub fn range_verdicts(&self) -> impl Iterator<Item = (u64, RangeVerdict)> + '_ {
        self.log.iter().filter_map(|p| match p {
            Payload::VerifyRangeResp { consumption_id, verdict } => Some((*consumption_id, *verdict)),
            _ => None,
        })
    }

    pub fn handle(&mut self, env: &Envelope) -> Vec<(PartyId, Payload)> {
        self.log.push(env.payload.clone());
        let mut out = Vec::new();
        match &env.payload {
            Payload::RegisterResp { user_id, public_key, .. } => {
                self.user_id = Some(*user_id);
                self.public_key = Some(public_key.clone());
            }
            Payload::Quote {
                session,
                range,
                price_cipher,
                price,
            } => {
                self.quotes.insert(
                    *session,
                    QuoteView {
                        session: *session,
                        range: *range,
                        price_cipher: price_cipher.clone(),
                        leaked_price: *price,
                    },
                );
                match self.policy {
                    QuotePolicy::Hold => {}
                    QuotePolicy::AgreeAll => out.push((PartyId::Mms, Payload::Agree { session: *session })),
                    QuotePolicy::DeclineAll => out.push((PartyId::Mms, Payload::Decline { session: *session })),
                }
            }
            Payload::ConsumeResp {
                session,
                consumption_id,
                price_cipher,
                pre_balance_cipher,
                post_balance_cipher,
                ..
            } => {
                if let Some(q) = self.quotes.remove(session) {
                    self.receipts.push(Receipt {
                        consumption_id: *consumption_id,
                        quoted_range: q.range,
                        price_cipher: price_cipher.clone(),
                        pre_balance_cipher: pre_balance_cipher.clone(),
                        post_balance_cipher: post_balance_cipher.clone(),
                    });
                }
            }
            Payload::Declined { session } => {
                self.quotes.remove(session);
            }
            _ => {}
        }
        out
    }
}
