use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use serde::Serialize;

use super::message::{ConsumptionRecord, Envelope, PartyId, Payload, RangeVerdict};
use super::{ProtocolError, Result};
use crate::groupcrypto::{inv, EncryptedAmount, GroupParams, PriceRange, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditReason {
    /// Archived record for a user TTP never saw registered.
    UnknownUser,
    /// The record's pre-balance differs from TTP's tracked balance.
    ChainMismatch,
    /// pre * price^-1 != post on the record.
    DebitMismatch,
    RechargeForUnknownUser,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditFlag {
    pub consumption_id: Option<u64>,
    pub user_id: UserId,
    pub reason: AuditReason,
}

/// The arbiter. Holds generators, the append-only archive and each user's
/// balance as a cipher, replayed from recharges and charges.
pub struct Ttp {
    params: GroupParams,
    scale: u64,
    enumeration_cap: u64,
    generators: BTreeMap<UserId, BigUint>,
    tracked: BTreeMap<UserId, EncryptedAmount>,
    archive: BTreeMap<u64, ConsumptionRecord>,
    recharges: BTreeSet<u64>,
    audit: Vec<AuditFlag>,
    available: bool,
}

impl Ttp {
    pub fn new(params: GroupParams, scale: u64, enumeration_cap: u64) -> Self {
        Ttp {
            params,
            scale,
            enumeration_cap,
            generators: BTreeMap::new(),
            tracked: BTreeMap::new(),
            archive: BTreeMap::new(),
            recharges: BTreeSet::new(),
            audit: Vec::new(),
            available: true,
        }
    }

    /// Simulates an archive outage.
    pub fn set_available(&mut self, available: bool) {
        self.available = available;
    }

    pub fn knows(&self, user: UserId) -> bool {
        self.generators.contains_key(&user)
    }

    pub fn registered_users(&self) -> usize {
        self.generators.len()
    }

    pub fn archive(&self) -> impl Iterator<Item = &ConsumptionRecord> {
        self.archive.values()
    }

    pub fn record(&self, consumption_id: u64) -> Option<&ConsumptionRecord> {
        self.archive.get(&consumption_id)
    }

    pub fn audit_log(&self) -> &[AuditFlag] {
        &self.audit
    }

    pub fn tracked_balance(&self, user: UserId) -> Option<&EncryptedAmount> {
        self.tracked.get(&user)
    }

    /// Idempotent: a replayed push leaves the first entry in place.
    pub fn register(&mut self, user: UserId, generator: BigUint) {
        self.generators.entry(user).or_insert(generator);
        self.tracked.entry(user).or_insert_with(EncryptedAmount::identity);
    }

    /// Idempotent per recharge number.
    pub fn recharge(&mut self, user: UserId, amount: &EncryptedAmount, seq_no: u64) {
        if !self.recharges.insert(seq_no) {
            return;
        }
        match self.tracked.get_mut(&user) {
            Some(b) => *b = b.mul(amount, &self.params),
            None => self.audit.push(AuditFlag {
                consumption_id: None,
                user_id: user,
                reason: AuditReason::RechargeForUnknownUser,
            }),
        }
    }

    /// Appends a record. Returns false for a replay of an archived id.
    pub fn archive_push(&mut self, record: ConsumptionRecord) -> Result<bool> {
        if !self.available {
            return Err(ProtocolError::ArchiveUnavailable);
        }
        if self.archive.contains_key(&record.consumption_id) {
            return Ok(false);
        }
        let flag = |reason| AuditFlag {
            consumption_id: Some(record.consumption_id),
            user_id: record.user_id,
            reason,
        };
        let mut flags = Vec::new();
        if !crate::groupcrypto::verify_consumption(
            &record.pre_balance_cipher,
            &record.price_cipher,
            &record.post_balance_cipher,
            &self.params,
        )
        .unwrap_or(false)
        {
            flags.push(flag(AuditReason::DebitMismatch));
        }
        match self.tracked.get_mut(&record.user_id) {
            None => flags.push(flag(AuditReason::UnknownUser)),
            Some(b) => {
                if *b != record.pre_balance_cipher {
                    flags.push(flag(AuditReason::ChainMismatch));
                }
                *b = b.mul(&inv(&record.price_cipher, &self.params)?, &self.params);
            }
        }
        self.audit.extend(flags);
        self.archive.insert(record.consumption_id, record);
        Ok(true)
    }

    /// YES iff the cipher encrypts the balance TTP has tracked for the user.
    pub fn check_balance(&self, user: UserId, balance: &EncryptedAmount) -> Result<bool> {
        let tracked = self.tracked.get(&user).ok_or(ProtocolError::UnknownUser(user))?;
        Ok(tracked == balance)
    }

    /// Only the exact archived (id, user, range) triple gets an answer; any
    /// other combination is rejected without looking at the price.
    pub fn verify_range(
        &self,
        consumption_id: u64,
        user: UserId,
        range: &PriceRange,
        price_cipher: &EncryptedAmount,
    ) -> Result<RangeVerdict> {
        if !self.available {
            return Err(ProtocolError::ArchiveUnavailable);
        }
        let Some(rec) = self.archive.get(&consumption_id) else {
            return Ok(RangeVerdict::Rejected);
        };
        if rec.user_id != user || !rec.quoted_range.same_as(range) {
            return Ok(RangeVerdict::Rejected);
        }
        if rec.price_cipher != *price_cipher {
            return Ok(RangeVerdict::No);
        }
        let g = self.generators.get(&user).ok_or(ProtocolError::UnknownUser(user))?;
        let Some((lo, hi)) = range.minor_bounds(self.scale) else {
            return Ok(RangeVerdict::No);
        };
        let n = self.params.modulus();
        let encrypts = |v: u64| g.modpow(&BigUint::from(v), n) == price_cipher.0;
        if let Some(p) = rec.escrowed_price {
            return Ok(if (lo..=hi).contains(&p) && encrypts(p) {
                RangeVerdict::Yes
            } else {
                RangeVerdict::No
            });
        }
        let span = hi - lo + 1;
        if span > self.enumeration_cap {
            return Err(ProtocolError::RangeTooWide(span));
        }
        let mut x = g.modpow(&BigUint::from(lo), n);
        for _ in lo..=hi {
            if x == price_cipher.0 {
                return Ok(RangeVerdict::Yes);
            }
            x = (x * g) % n;
        }
        Ok(RangeVerdict::No)
    }

    pub fn handle(&mut self, env: &Envelope) -> Vec<(PartyId, Payload)> {
        let from = env.sender;
        let reply = |r: Result<Payload>| vec![(from, r.unwrap_or_else(|e| e.to_payload()))];
        match &env.payload {
            Payload::RegistrationPush { user_id, generator } if from == PartyId::Mms => {
                self.register(*user_id, generator.clone());
                reply(Ok(Payload::RegistrationAck { user_id: *user_id }))
            }
            Payload::RechargePush {
                user_id,
                amount_cipher,
                seq_no,
            } if from == PartyId::Mms => {
                self.recharge(*user_id, amount_cipher, *seq_no);
                reply(Ok(Payload::RechargeAck {
                    user_id: *user_id,
                    seq_no: *seq_no,
                }))
            }
            Payload::ArchivePush { record } if from == PartyId::Mms => {
                let id = record.consumption_id;
                reply(
                    self.archive_push(record.clone())
                        .map(|_| Payload::ArchiveAck { consumption_id: id }),
                )
            }
            Payload::CheckBalanceReq { user_id, balance_cipher } => reply(
                self.check_balance(*user_id, balance_cipher)
                    .map(|ok| Payload::CheckBalanceResp { ok }),
            ),
            Payload::VerifyRangeReq {
                consumption_id,
                user_id,
                range,
                price_cipher,
            } => reply(
                self.verify_range(*consumption_id, *user_id, range, price_cipher)
                    .map(|verdict| Payload::VerifyRangeResp {
                        consumption_id: *consumption_id,
                        verdict,
                    }),
            ),
            Payload::Error { .. } => vec![],
            other => reply(Err(ProtocolError::Remote {
                code: "unexpected".into(),
                detail: format!("TTP does not accept {} from {from}", other.kind()),
            })),
        }
    }
}
