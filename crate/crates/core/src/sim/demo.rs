//! The worked two-buyer example on the toy group (modulus 5, generator 3).
//!
//! Alice recharges 4, buys the university query at price 3 and checks every
//! cipher. Bob buys the same query and then tries to narrow the hidden price
//! by asking TTP about sub-ranges of his quote; every probe is refused.

use serde::{Deserialize, Serialize};

use super::datasets::{desk_now, table1_vendor};
use super::SimError;
use crate::groupcrypto::{inv, EncryptedAmount, GroupProfile, PriceRange, UserId};
use crate::pricing::WeightVector;
use crate::protocol::{buyer_verify, flow, Market, MarketSetup, Mms, ProtocolError, QuotePolicy, RangeVerdict};

/// Range key seed under which the demo quote lands on [1, 4].
pub const DEMO_SEED: u64 = 2;

const QUERY: &str = "university";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoCheck {
    pub name: String,
    pub expected: String,
    pub actual: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutcome {
    pub checks: Vec<DemoCheck>,
    /// Sub-range probes Bob sent, and how many got a YES or NO.
    pub probes: usize,
    pub probes_answered: usize,
    pub leaks: usize,
    pub transcript: Vec<String>,
}

impl DemoOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

#[derive(Default)]
struct Checks(Vec<DemoCheck>);

impl Checks {
    fn eq<T: PartialEq + std::fmt::Debug>(&mut self, name: &str, expected: T, actual: T) {
        self.0.push(DemoCheck {
            name: name.into(),
            ok: expected == actual,
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        });
    }
}

fn cipher(v: u32) -> EncryptedAmount {
    EncryptedAmount(v.into())
}

/// The one-vendor toy market the demo runs on.
pub fn demo_market(seed: u64) -> Result<Market, SimError> {
    let setup = MarketSetup {
        group: GroupProfile::Toy,
        seed,
        now: desk_now(),
        ..MarketSetup::default()
    };
    Ok(Market::new(Mms::setup(vec![table1_vendor()], setup)?, seed))
}

/// The sub-ranges Bob sweeps: 100 ranges strictly inside [1, 4].
pub fn sweep_ranges() -> Vec<PriceRange> {
    let mut out = Vec::with_capacity(100);
    for i in 0..10 {
        for j in 0..10 {
            out.push(PriceRange::new(1.0 + 0.1 * i as f64, 3.95 - 0.1 * j as f64));
        }
    }
    out
}

/// Runs both flows. Fails with every mismatched check listed.
pub fn run_protocol_demo() -> Result<DemoOutcome, SimError> {
    let outcome = demo_flows(DEMO_SEED)?;
    if outcome.passed() {
        Ok(outcome)
    } else {
        let failed: Vec<String> = outcome
            .checks
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("{}: expected {}, got {}", c.name, c.expected, c.actual))
            .collect();
        Err(SimError::Assertion(failed.join("; ")))
    }
}

/// Runs both flows under `seed` and records every check without failing.
pub fn demo_flows(seed: u64) -> Result<DemoOutcome, SimError> {
    let mut market = demo_market(seed)?;
    let params = market.mms.group().clone();
    let mut c = Checks::default();
    let quoted = PriceRange::new(1.0, 4.0);

    let (alice, alice_id) = market.register_buyer(QuotePolicy::Hold)?;
    c.eq("alice user id", UserId(1), alice_id);
    let e_b1 = market.recharge(alice, 4.0)?;
    c.eq("E_B1", cipher(1), e_b1.clone());
    let quote = market.quote(alice, QUERY, WeightVector::uniform())?;
    c.eq("alice quoted range", quoted, quote.range);
    c.eq("range contains 3", true, quote.range.contains_minor(3, 1));
    c.eq("E_p", cipher(2), quote.price_cipher.clone());
    let receipt = market.agree(alice, quote.session)?;
    c.eq("pre-balance cipher", e_b1.clone(), receipt.pre_balance_cipher.clone());
    c.eq("E_B2", cipher(3), receipt.post_balance_cipher.clone());
    c.eq("buyer verify", true, market.buyer(alice).verify(&receipt)?);
    let inv_b2 = inv(&receipt.post_balance_cipher, &params).map_err(ProtocolError::from)?;
    c.eq("inverse of E_B2", cipher(2), inv_b2.clone());
    c.eq("E_B1 * inv(E_B2)", receipt.price_cipher.clone(), e_b1.mul(&inv_b2, &params));
    c.eq(
        "verify equation",
        true,
        buyer_verify(&e_b1, &receipt.price_cipher, &receipt.post_balance_cipher, &params)?,
    );
    c.eq("TTP balance check", true, market.check_balance(alice, receipt.post_balance_cipher.clone())?);
    c.eq("TTP stale balance", false, market.check_balance(alice, e_b1.clone())?);
    c.eq(
        "TTP range check",
        RangeVerdict::Yes,
        market.verify_range(alice, receipt.consumption_id, quote.range, receipt.price_cipher.clone())?,
    );
    let again = market.quote(alice, QUERY, WeightVector::uniform())?;
    market.decline(alice, again.session)?;
    c.eq("balance after decline", receipt.post_balance_cipher.clone(), market.balance_cipher(alice)?);

    let (bob, bob_id) = market.register_buyer(QuotePolicy::Hold)?;
    c.eq("bob user id", UserId(2), bob_id);
    market.recharge(bob, 4.0)?;
    let bq = market.quote(bob, QUERY, WeightVector::uniform())?;
    c.eq("bob quoted range", quoted, bq.range);
    let br = market.agree(bob, bq.session)?;
    c.eq("bob consumption id", 2, br.consumption_id);
    let cid = br.consumption_id;
    let price = br.price_cipher.clone();
    c.eq(
        "bob honest range check",
        RangeVerdict::Yes,
        market.verify_range(bob, cid, br.quoted_range, price.clone())?,
    );
    for (lo, hi) in [(2.5, 4.0), (2.5, 3.25)] {
        c.eq(
            &format!("bob probe [{lo}, {hi}]"),
            RangeVerdict::Rejected,
            market.verify_range(bob, cid, PriceRange::new(lo, hi), price.clone())?,
        );
    }
    let sweep = sweep_ranges();
    let mut answered = 0;
    for r in &sweep {
        if market.verify_range(bob, cid, *r, price.clone())? != RangeVerdict::Rejected {
            answered += 1;
        }
    }
    c.eq("bob sweep answers", 0, answered);
    c.eq(
        "bob claims alice's identity",
        RangeVerdict::Rejected,
        market.verify_range_as(bob, cid, alice_id, quoted, price.clone())?,
    );
    c.eq(
        "bob asks about alice's record",
        RangeVerdict::Rejected,
        market.verify_range(bob, receipt.consumption_id, quoted, price)?,
    );

    let leaks = flow::scan_transcript(&market.transcript_jsonl()).len();
    c.eq("buyer-bound plaintext fields", 0, leaks);
    c.eq("TTP audit flags", 0, market.ttp.audit_log().len());
    Ok(DemoOutcome {
        checks: c.0,
        probes: sweep.len() + 2,
        probes_answered: answered,
        leaks,
        transcript: market.transcript().to_vec(),
    })
}
