use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDateTime;
use rand::SeedableRng;
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::message::{ConsumptionRecord, Envelope, PartyId, Payload};
use super::{ProtocolError, Result};
use crate::groupcrypto::{
    enc, make_range, to_minor_units, EncryptedAmount, GroupParams, GroupProfile, PriceRange, RangePolicy, Registrar,
    UserCredential, UserId,
};
use crate::pricing::{compute_market_baseline, final_price, CleaningCostModel, MarketParams, PriceBreakdown, WeightVector};
use crate::quality::{assess_all, QualityProfile, QualityRuleSet};
use crate::relation::{base_price, run_query, PricePoint, QueryResult, Relation, SelectionQuery};

/// A relation offered by a vendor, with its price point and quality rules.
#[derive(Debug, Clone)]
pub struct VendorDataset {
    pub relation: Relation,
    pub price_point: PricePoint,
    pub rules: QualityRuleSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSetup {
    pub params: MarketParams,
    /// Use `params.standard` as given instead of the mean market profile.
    pub fixed_standard: bool,
    pub cost_model: CleaningCostModel,
    pub group: GroupProfile,
    pub seed: u64,
    /// Send the plaintext price to TTP with every archived record.
    pub ttp_escrow: bool,
    /// Reference instant for timeliness.
    pub now: NaiveDateTime,
    /// Bus steps after which an unanswered quote expires.
    pub session_ttl: u64,
    /// Widest range, in minor units, TTP will search without escrow.
    pub enumeration_cap: u64,
    /// Overrides the group profile's range width.
    pub range_policy: Option<RangePolicy>,
    /// Debug only: put the plaintext price in quotes.
    pub leak_prices: bool,
}

impl Default for MarketSetup {
    fn default() -> Self {
        MarketSetup {
            params: MarketParams::default(),
            fixed_standard: false,
            cost_model: CleaningCostModel::default(),
            group: GroupProfile::default(),
            seed: 0,
            ttp_escrow: false,
            now: chrono::DateTime::UNIX_EPOCH.naive_utc(),
            session_ttl: 100,
            enumeration_cap: 100_000,
            range_policy: None,
            leak_prices: false,
        }
    }
}

struct Listing {
    relation: Relation,
    price_point: PricePoint,
    rules: QualityRuleSet,
    profile: QualityProfile,
}

/// A user's account. The balance is in minor units and never leaves the MMS.
#[derive(Debug, Clone)]
pub struct Account {
    pub credential: UserCredential,
    pub owner: PartyId,
    balance: u64,
}

impl Account {
    pub fn balance_cipher(&self, params: &GroupParams) -> Result<EncryptedAmount> {
        Ok(enc(&self.credential, params, self.balance as i64)?)
    }
}

struct Session {
    user: UserId,
    query: SelectionQuery,
    weights: WeightVector,
    price: u64,
    range: PriceRange,
    cipher: EncryptedAmount,
    created: u64,
}

/// The MMS-side view of a priced query.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedQuery {
    pub breakdown: PriceBreakdown,
    pub cardinality: usize,
    /// Final price in minor units.
    pub price: u64,
    /// Base price in minor units; drives the range width.
    pub base: u64,
}

pub struct Mms {
    setup: MarketSetup,
    params: GroupParams,
    scale: u64,
    range_policy: RangePolicy,
    listings: BTreeMap<String, Listing>,
    registrar: Registrar,
    rng: ChaCha20Rng,
    range_key: [u8; 32],
    accounts: BTreeMap<UserId, Account>,
    sessions: BTreeMap<u64, Session>,
    expired: BTreeSet<u64>,
    next_session: u64,
    next_consumption: u64,
    next_recharge: u64,
    records: Vec<ConsumptionRecord>,
    cache: HashMap<SelectionQuery, QueryResult>,
}

impl Mms {
    /// Assesses every vendor relation and fixes the market baseline.
    pub fn setup(vendors: Vec<VendorDataset>, mut setup: MarketSetup) -> Result<Mms> {
        if vendors.is_empty() {
            return Err(ProtocolError::EmptyVendorList);
        }
        setup.cost_model.validate()?;
        let mut listings = BTreeMap::new();
        for v in vendors {
            let name = v.relation.name().to_string();
            if v.price_point.relation != name {
                return Err(ProtocolError::PricePointMismatch {
                    relation: name,
                    point: v.price_point.relation,
                });
            }
            v.price_point.validate()?;
            let profile = assess_all(&v.relation, &v.rules, setup.now)?;
            let listing = Listing {
                relation: v.relation,
                price_point: v.price_point,
                rules: v.rules,
                profile,
            };
            if listings.insert(name.clone(), listing).is_some() {
                return Err(ProtocolError::DuplicateRelation(name));
            }
        }
        if !setup.fixed_standard {
            setup.params.standard = compute_market_baseline(listings.values().map(|l| &l.profile))?;
        }
        let k_max = listings.values().map(|l| l.rules.k_max).fold(f64::INFINITY, f64::min);
        setup.params.validate(k_max)?;
        let params = setup.group.params();
        let seed_bytes = Sha256::new()
            .chain_update(b"mms-range-key")
            .chain_update(setup.seed.to_le_bytes())
            .finalize();
        Ok(Mms {
            scale: setup.group.money_scale(),
            range_policy: setup.range_policy.unwrap_or_else(|| setup.group.range_policy()),
            rng: ChaCha20Rng::seed_from_u64(setup.seed),
            range_key: seed_bytes.into(),
            params,
            setup,
            listings,
            registrar: Registrar::default(),
            accounts: BTreeMap::new(),
            sessions: BTreeMap::new(),
            expired: BTreeSet::new(),
            next_session: 1,
            next_consumption: 1,
            next_recharge: 1,
            records: Vec::new(),
            cache: HashMap::new(),
        })
    }

    pub fn group(&self) -> &GroupParams {
        &self.params
    }

    pub fn money_scale(&self) -> u64 {
        self.scale
    }

    pub fn market_setup(&self) -> &MarketSetup {
        &self.setup
    }

    pub fn standard(&self) -> [f64; 4] {
        self.setup.params.standard
    }

    pub fn profile(&self, relation: &str) -> Option<&QualityProfile> {
        self.listings.get(relation).map(|l| &l.profile)
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.listings.get(name).map(|l| &l.relation)
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.listings.keys().map(String::as_str)
    }

    /// Swaps in a new instance of a listed relation and re-assesses it. The
    /// market baseline stays as it was.
    pub fn update_relation(&mut self, relation: Relation) -> Result<&QualityProfile> {
        let name = relation.name().to_string();
        let listing = self
            .listings
            .get_mut(&name)
            .ok_or_else(|| ProtocolError::UnknownRelation(name.clone()))?;
        listing.profile = assess_all(&relation, &listing.rules, self.setup.now)?;
        listing.relation = relation;
        self.cache.retain(|q, _| q.relation != name);
        Ok(&listing.profile)
    }

    pub fn account(&self, user: UserId) -> Option<&Account> {
        self.accounts.get(&user)
    }

    /// MMS-private plaintext balance in minor units.
    pub fn balance_of(&self, user: UserId) -> Option<u64> {
        self.accounts.get(&user).map(|a| a.balance)
    }

    pub fn records(&self) -> &[ConsumptionRecord] {
        &self.records
    }

    pub fn register(&mut self, owner: PartyId) -> Result<UserCredential> {
        let credential = self.registrar.reg(&self.params, &mut self.rng)?;
        self.accounts.insert(
            credential.user_id,
            Account {
                credential: credential.clone(),
                owner,
                balance: 0,
            },
        );
        Ok(credential)
    }

    fn account_for(&self, user: UserId, sender: PartyId) -> Result<&Account> {
        let acct = self.accounts.get(&user).ok_or(ProtocolError::UnknownUser(user))?;
        if acct.owner != sender {
            return Err(ProtocolError::NotOwner(user));
        }
        Ok(acct)
    }

    fn results(&mut self, q: &SelectionQuery) -> Result<&QueryResult> {
        if !self.cache.contains_key(q) {
            let listing = self
                .listings
                .get(&q.relation)
                .ok_or_else(|| ProtocolError::UnknownRelation(q.relation.clone()))?;
            let res = run_query(&listing.relation, q)?;
            self.cache.insert(q.clone(), res);
        }
        Ok(&self.cache[q])
    }

    /// Base price, quality floating and rounding for one (query, weights).
    pub fn price(&mut self, q: &SelectionQuery, w: &WeightVector) -> Result<PricedQuery> {
        let cardinality = self.results(q)?.cardinality();
        let listing = &self.listings[&q.relation];
        let base = base_price(&listing.price_point, cardinality);
        let breakdown = final_price(base, &listing.profile, w, &self.setup.cost_model, &self.setup.params)?;
        Ok(PricedQuery {
            breakdown,
            cardinality,
            price: to_minor_units(breakdown.floated.price, self.scale),
            base: to_minor_units(base, self.scale),
        })
    }

    /// Range for a hidden amount. The offset is keyed on the market secret and
    /// the quote's content, so repeating a quote repeats its range.
    fn keyed_range(&self, label: &[u8], context: &[u8], amount: u64, reference: u64) -> PriceRange {
        let digest = Sha256::new()
            .chain_update(self.range_key)
            .chain_update(label)
            .chain_update((context.len() as u64).to_le_bytes())
            .chain_update(context)
            .chain_update(amount.to_le_bytes())
            .finalize();
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        make_range(amount, self.range_policy.width(reference), self.scale, &mut rng)
    }

    fn quote_context(q: &SelectionQuery, w: &WeightVector) -> Vec<u8> {
        let mut ctx = serde_json::to_vec(q).expect("queries serialize");
        for x in w.as_array() {
            ctx.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        ctx
    }

    pub fn quote(&mut self, sender: PartyId, user: UserId, query: &str, w: WeightVector, step: u64) -> Result<Payload> {
        let cred = self.account_for(user, sender)?.credential.clone();
        let q: SelectionQuery = query.parse()?;
        let priced = self.price(&q, &w)?;
        let range = self.keyed_range(b"quote", &Self::quote_context(&q, &w), priced.price, priced.base);
        let cipher = enc(&cred, &self.params, priced.price as i64)?;
        let session = self.next_session;
        self.next_session += 1;
        self.sessions.insert(
            session,
            Session {
                user,
                query: q,
                weights: w,
                price: priced.price,
                range,
                cipher: cipher.clone(),
                created: step,
            },
        );
        Ok(Payload::Quote {
            session,
            range,
            price_cipher: cipher,
            price: self.setup.leak_prices.then(|| priced.price as f64 / self.scale as f64),
        })
    }

    fn take_session(&mut self, sender: PartyId, session: u64, step: u64) -> Result<Session> {
        if self.expired.contains(&session) {
            return Err(ProtocolError::StaleSession(session));
        }
        let s = self.sessions.get(&session).ok_or(ProtocolError::UnknownSession(session))?;
        self.account_for(s.user, sender)?;
        let s = self.sessions.remove(&session).expect("present");
        if step.saturating_sub(s.created) > self.setup.session_ttl {
            self.expired.insert(session);
            return Err(ProtocolError::StaleSession(session));
        }
        Ok(s)
    }

    /// Atomic check-and-debit. Returns the buyer's response and the archive push.
    pub fn consume(&mut self, sender: PartyId, session: u64, step: u64) -> Result<(Payload, ConsumptionRecord)> {
        let s = self.take_session(sender, session, step)?;
        let acct = self.accounts.get(&s.user).ok_or(ProtocolError::UnknownUser(s.user))?;
        if acct.balance < s.price {
            return Err(ProtocolError::InsufficientBalance);
        }
        let pre = acct.balance_cipher(&self.params)?;
        let post_balance = acct.balance - s.price;
        let post = enc(&acct.credential, &self.params, post_balance as i64)?;
        let results = self.results(&s.query)?;
        let (columns, rows) = (results.columns.clone(), results.to_text_rows());
        let escrow = self.setup.ttp_escrow
            || s.range.minor_bounds(self.scale).map_or(0, |(lo, hi)| hi - lo + 1) > self.setup.enumeration_cap;
        let record = ConsumptionRecord {
            consumption_id: self.next_consumption,
            user_id: s.user,
            query: s.query.to_string(),
            weights: s.weights,
            price_cipher: s.cipher.clone(),
            quoted_range: s.range,
            pre_balance_cipher: pre.clone(),
            post_balance_cipher: post.clone(),
            timestamp: step,
            escrowed_price: escrow.then_some(s.price),
        };
        self.next_consumption += 1;
        self.accounts.get_mut(&s.user).expect("present").balance = post_balance;
        self.records.push(record.clone());
        let resp = Payload::ConsumeResp {
            session,
            consumption_id: record.consumption_id,
            price_cipher: s.cipher,
            pre_balance_cipher: pre,
            post_balance_cipher: post,
            columns,
            rows,
        };
        Ok((resp, record))
    }

    pub fn decline(&mut self, sender: PartyId, session: u64, step: u64) -> Result<()> {
        self.take_session(sender, session, step).map(|_| ())
    }

    /// Credits an account; returns the new balance cipher and the credited
    /// amount's cipher for TTP.
    pub fn recharge(&mut self, sender: PartyId, user: UserId, amount: f64) -> Result<(EncryptedAmount, EncryptedAmount)> {
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(ProtocolError::InvalidAmount("recharge must be finite and non-negative".into()));
        }
        let minor = to_minor_units(amount, self.scale);
        self.account_for(user, sender)?;
        let acct = self.accounts.get_mut(&user).expect("checked");
        let amount_cipher = enc(&acct.credential, &self.params, minor as i64)?;
        let new_balance = acct.balance + minor;
        let balance_cipher = enc(&acct.credential, &self.params, new_balance as i64)?;
        acct.balance = new_balance;
        Ok((balance_cipher, amount_cipher))
    }

    pub fn balance_cipher(&self, sender: PartyId, user: UserId) -> Result<EncryptedAmount> {
        self.account_for(user, sender)?.balance_cipher(&self.params)
    }

    pub fn balance_range(&self, sender: PartyId, user: UserId) -> Result<PriceRange> {
        let balance = self.account_for(user, sender)?.balance;
        Ok(self.keyed_range(b"balance", &user.0.to_le_bytes(), balance, balance))
    }

    fn prune(&mut self, step: u64) {
        let ttl = self.setup.session_ttl;
        let stale: Vec<u64> = self
            .sessions
            .iter()
            .filter(|(_, s)| step.saturating_sub(s.created) > ttl)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            self.sessions.remove(&id);
            self.expired.insert(id);
        }
    }

    pub fn pending_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// One inbound message in, any number of outbound messages out.
    pub fn handle(&mut self, env: &Envelope, step: u64) -> Vec<(PartyId, Payload)> {
        self.prune(step);
        let from = env.sender;
        let reply = |r: Result<Payload>| vec![(from, r.unwrap_or_else(|e| e.to_payload()))];
        match &env.payload {
            Payload::RegisterReq => match self.register(from) {
                Ok(cred) => vec![
                    (
                        PartyId::Ttp,
                        Payload::RegistrationPush {
                            user_id: cred.user_id,
                            generator: cred.generator.clone(),
                        },
                    ),
                    (
                        from,
                        Payload::RegisterResp {
                            user_id: cred.user_id,
                            public_key: cred.public_key,
                            secret_key: cred.secret_key,
                        },
                    ),
                ],
                Err(e) => reply(Err(e)),
            },
            Payload::QueryReq { user_id, query, weights } => reply(self.quote(from, *user_id, query, *weights, step)),
            Payload::Agree { session } => match self.consume(from, *session, step) {
                Ok((resp, record)) => vec![(PartyId::Ttp, Payload::ArchivePush { record }), (from, resp)],
                Err(e) => reply(Err(e)),
            },
            Payload::Decline { session } => {
                reply(self.decline(from, *session, step).map(|_| Payload::Declined { session: *session }))
            }
            Payload::BalanceReq { user_id } => reply(
                self.balance_cipher(from, *user_id)
                    .map(|balance_cipher| Payload::BalanceResp { balance_cipher }),
            ),
            Payload::BalanceRangeReq { user_id } => reply(
                self.balance_range(from, *user_id)
                    .map(|balance_range| Payload::BalanceRangeResp { balance_range }),
            ),
            Payload::RechargeReq { user_id, amount } => match self.recharge(from, *user_id, *amount) {
                Ok((balance_cipher, amount_cipher)) => {
                    let seq_no = self.next_recharge;
                    self.next_recharge += 1;
                    vec![
                        (
                            PartyId::Ttp,
                            Payload::RechargePush {
                                user_id: *user_id,
                                amount_cipher,
                                seq_no,
                            },
                        ),
                        (from, Payload::RechargeResp { balance_cipher }),
                    ]
                }
                Err(e) => reply(Err(e)),
            },
            Payload::RegistrationAck { .. } | Payload::RechargeAck { .. } | Payload::ArchiveAck { .. } => vec![],
            Payload::Error { .. } => vec![],
            other => reply(Err(ProtocolError::Remote {
                code: "unexpected".into(),
                detail: format!("MMS does not accept {}", other.kind()),
            })),
        }
    }
}
