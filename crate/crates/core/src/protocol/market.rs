use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buyer::{Buyer, QuotePolicy, QuoteView};
use super::message::{Envelope, PartyId, Payload, RangeVerdict, Receipt};
use super::mms::Mms;
use super::ttp::Ttp;
use super::{ProtocolError, Result};
use crate::groupcrypto::{EncryptedAmount, PriceRange, UserId};
use crate::pricing::WeightVector;

/// In-process bus with per-party FIFO inboxes. Each step delivers the head
/// of one non-empty inbox chosen by a seeded RNG, so a seed fixes the
/// interleaving.
pub struct Market {
    pub mms: Mms,
    pub ttp: Ttp,
    buyers: Vec<Buyer>,
    inboxes: BTreeMap<PartyId, VecDeque<Envelope>>,
    seqs: BTreeMap<PartyId, u64>,
    sched: ChaCha8Rng,
    step: u64,
    transcript: Vec<String>,
}

impl Market {
    pub fn new(mms: Mms, schedule_seed: u64) -> Self {
        let setup = mms.market_setup();
        let ttp = Ttp::new(mms.group().clone(), mms.money_scale(), setup.enumeration_cap);
        Market {
            mms,
            ttp,
            buyers: Vec::new(),
            inboxes: BTreeMap::new(),
            seqs: BTreeMap::new(),
            sched: ChaCha8Rng::seed_from_u64(schedule_seed),
            step: 0,
            transcript: Vec::new(),
        }
    }

    pub fn add_buyer(&mut self, policy: QuotePolicy) -> PartyId {
        let slot = PartyId::Buyer(self.buyers.len());
        self.buyers.push(Buyer::new(slot, self.mms.group().clone(), policy));
        slot
    }

    pub fn buyer(&self, slot: PartyId) -> &Buyer {
        &self.buyers[Self::index(slot)]
    }

    pub fn buyer_mut(&mut self, slot: PartyId) -> &mut Buyer {
        &mut self.buyers[Self::index(slot)]
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    fn index(slot: PartyId) -> usize {
        match slot {
            PartyId::Buyer(i) => i,
            other => panic!("{other} is not a buyer"),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One JSON object per delivered-or-queued message, in send order.
    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }

    pub fn transcript_jsonl(&self) -> String {
        let mut s = String::new();
        for line in &self.transcript {
            s.push_str(line);
            s.push('\n');
        }
        s
    }

    pub fn write_transcript<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for line in &self.transcript {
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn send(&mut self, sender: PartyId, receiver: PartyId, payload: Payload) {
        let seq = self.seqs.entry(sender).or_insert(0);
        *seq += 1;
        let env = Envelope {
            sender,
            receiver,
            seq: *seq,
            payload,
        };
        self.transcript.push(env.to_json());
        self.inboxes.entry(receiver).or_default().push_back(env);
    }

    pub fn is_quiet(&self) -> bool {
        self.inboxes.values().all(VecDeque::is_empty)
    }

    /// Delivers one message. Returns false when every inbox is empty.
    pub fn step(&mut self) -> bool {
        let ready: Vec<PartyId> = self
            .inboxes
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(p, _)| *p)
            .collect();
        if ready.is_empty() {
            return false;
        }
        let who = ready[self.sched.gen_range(0..ready.len())];
        let env = self.inboxes.get_mut(&who).and_then(VecDeque::pop_front).expect("non-empty");
        self.step += 1;
        let out = match who {
            PartyId::Mms => self.mms.handle(&env, self.step),
            PartyId::Ttp => self.ttp.handle(&env),
            PartyId::Buyer(i) => self.buyers[i].handle(&env),
        };
        for (to, payload) in out {
            self.send(who, to, payload);
        }
        true
    }

    pub fn run_until_quiet(&mut self) -> u64 {
        let start = self.step;
        while self.step() {}
        self.step - start
    }

    /// Re-sends every MMS consumption record to TTP. Replays are ignored there.
    pub fn replay_archive(&mut self) {
        let records: Vec<_> = self.mms.records().to_vec();
        for record in records {
            self.send(PartyId::Mms, PartyId::Ttp, Payload::ArchivePush { record });
        }
        self.run_until_quiet();
    }

    /// Sends a request, runs the bus dry and returns the buyer's answer to it.
    fn request(&mut self, slot: PartyId, to: PartyId, payload: Payload) -> Result<Payload> {
        let expected = Payload::response_kind(payload.kind()).expect("request kind");
        let mark = self.buyer(slot).log().len();
        self.send(slot, to, payload);
        self.run_until_quiet();
        let got = self.buyer(slot).log()[mark..]
            .iter()
            .find(|p| p.kind() == expected || p.kind() == "Error")
            .cloned();
        match got {
            Some(Payload::Error { code, detail }) => Err(ProtocolError::Remote { code, detail }),
            Some(p) => Ok(p),
            None => Err(ProtocolError::NoResponse(expected)),
        }
    }

    fn user(&self, slot: PartyId) -> Result<UserId> {
        self.buyer(slot).user_id().ok_or(ProtocolError::NoResponse("RegisterResp"))
    }

    /// Adds a buyer and registers it.
    pub fn register_buyer(&mut self, policy: QuotePolicy) -> Result<(PartyId, UserId)> {
        let slot = self.add_buyer(policy);
        self.request(slot, PartyId::Mms, Payload::RegisterReq)?;
        Ok((slot, self.user(slot)?))
    }

    pub fn recharge(&mut self, slot: PartyId, amount: f64) -> Result<EncryptedAmount> {
        let user_id = self.user(slot)?;
        match self.request(slot, PartyId::Mms, Payload::RechargeReq { user_id, amount })? {
            Payload::RechargeResp { balance_cipher } => Ok(balance_cipher),
            _ => unreachable!("matched on kind"),
        }
    }

    pub fn balance_cipher(&mut self, slot: PartyId) -> Result<EncryptedAmount> {
        let user_id = self.user(slot)?;
        match self.request(slot, PartyId::Mms, Payload::BalanceReq { user_id })? {
            Payload::BalanceResp { balance_cipher } => Ok(balance_cipher),
            _ => unreachable!("matched on kind"),
        }
    }

    pub fn balance_range(&mut self, slot: PartyId) -> Result<PriceRange> {
        let user_id = self.user(slot)?;
        match self.request(slot, PartyId::Mms, Payload::BalanceRangeReq { user_id })? {
            Payload::BalanceRangeResp { balance_range } => Ok(balance_range),
            _ => unreachable!("matched on kind"),
        }
    }

    pub fn quote(&mut self, slot: PartyId, query: &str, weights: WeightVector) -> Result<QuoteView> {
        let user_id = self.user(slot)?;
        let req = Payload::QueryReq {
            user_id,
            query: query.to_string(),
            weights,
        };
        match self.request(slot, PartyId::Mms, req)? {
            Payload::Quote {
                session,
                range,
                price_cipher,
                price,
            } => Ok(QuoteView {
                session,
                range,
                price_cipher,
                leaked_price: price,
            }),
            _ => unreachable!("matched on kind"),
        }
    }

    pub fn agree(&mut self, slot: PartyId, session: u64) -> Result<Receipt> {
        match self.request(slot, PartyId::Mms, Payload::Agree { session })? {
            Payload::ConsumeResp { consumption_id, .. } => self
                .buyer(slot)
                .receipts()
                .iter()
                .rev()
                .find(|r| r.consumption_id == consumption_id)
                .cloned()
                .ok_or(ProtocolError::NoResponse("receipt")),
            _ => unreachable!("matched on kind"),
        }
    }

    pub fn decline(&mut self, slot: PartyId, session: u64) -> Result<()> {
        self.request(slot, PartyId::Mms, Payload::Decline { session }).map(|_| ())
    }

    pub fn check_balance(&mut self, slot: PartyId, balance_cipher: EncryptedAmount) -> Result<bool> {
        let user_id = self.user(slot)?;
        match self.request(slot, PartyId::Ttp, Payload::CheckBalanceReq { user_id, balance_cipher })? {
            Payload::CheckBalanceResp { ok } => Ok(ok),
            _ => unreachable!("matched on kind"),
        }
    }

    /// Asks TTP about a range, claiming to be `user_id`.
    pub fn verify_range_as(
        &mut self,
        slot: PartyId,
        consumption_id: u64,
        user_id: UserId,
        range: PriceRange,
        price_cipher: EncryptedAmount,
    ) -> Result<RangeVerdict> {
        let req = Payload::VerifyRangeReq {
            consumption_id,
            user_id,
            range,
            price_cipher,
        };
        match self.request(slot, PartyId::Ttp, req)? {
            Payload::VerifyRangeResp { verdict, .. } => Ok(verdict),
            _ => unreachable!("matched on kind"),
        }
    }

    pub fn verify_range(
        &mut self,
        slot: PartyId,
        consumption_id: u64,
        range: PriceRange,
        price_cipher: EncryptedAmount,
    ) -> Result<RangeVerdict> {
        let user_id = self.user(slot)?;
        self.verify_range_as(slot, consumption_id, user_id, range, price_cipher)
    }
}
