use fairmarket_core::groupcrypto::{enc, EncryptedAmount, GroupProfile, PriceRange, UserId};
use fairmarket_core::pricing::WeightVector;
use fairmarket_core::protocol::flow::scan_transcript;
use fairmarket_core::protocol::{
    buyer_verify, AuditReason, Market, MarketSetup, Mms, PartyId, Payload, ProtocolError, QuotePolicy, RangeVerdict,
    Ttp, VendorDataset,
};
use fairmarket_core::relation::PricePoint;
use fairmarket_core::sim::datasets::{desk_now, generate, table1_vendor, DeskKind};
use fairmarket_core::sim::demo::{demo_flows, demo_market, DEMO_SEED};
use proptest::prelude::*;

fn remote_code<T: std::fmt::Debug>(r: Result<T, ProtocolError>) -> String {
    match r {
        Err(ProtocolError::Remote { code, .. }) => code,
        other => panic!("expected a remote error, got {other:?}"),
    }
}

fn desk_market(setup: MarketSetup) -> Market {
    let vendors = [DeskKind::University, DeskKind::Country]
        .iter()
        .map(|&k| generate(k, 150, 9).unwrap().vendor)
        .collect();
    let seed = setup.seed;
    Market::new(
        Mms::setup(
            vendors,
            MarketSetup {
                now: desk_now(),
                ..setup
            },
        )
        .unwrap(),
        seed,
    )
}

#[test]
fn toy_trace_matches_the_worked_example() {
    let out = demo_flows(DEMO_SEED).unwrap();
    let failed: Vec<_> = out.checks.iter().filter(|c| !c.ok).collect();
    assert!(failed.is_empty(), "{failed:?}");
    let by_name = |n: &str| out.checks.iter().find(|c| c.name == n).unwrap().actual.clone();
    assert_eq!(by_name("E_B1"), format!("{:?}", EncryptedAmount(1u32.into())));
    assert_eq!(by_name("E_p"), format!("{:?}", EncryptedAmount(2u32.into())));
    assert_eq!(by_name("E_B2"), format!("{:?}", EncryptedAmount(3u32.into())));
    assert_eq!(out.probes, 102);
    assert_eq!(out.probes_answered, 0);
}

#[test]
fn charge_beyond_balance_is_refused_and_nothing_moves() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, user) = m.register_buyer(QuotePolicy::Hold).unwrap();
    let before = m.recharge(a, 1.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    assert_eq!(remote_code(m.agree(a, q.session)), "insufficient_balance");
    assert_eq!(m.balance_cipher(a).unwrap(), before);
    assert_eq!(m.mms.balance_of(user), Some(1));
    assert!(m.mms.records().is_empty());
    assert!(m.check_balance(a, before).unwrap());
}

#[test]
fn decline_closes_the_session() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 10.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    m.decline(a, q.session).unwrap();
    assert_eq!(remote_code(m.agree(a, q.session)), "unknown_session");
    assert_eq!(m.mms.pending_sessions(), 0);
}

#[test]
fn sessions_expire() {
    let mut m = desk_market(MarketSetup {
        group: GroupProfile::Test,
        session_ttl: 3,
        ..MarketSetup::default()
    });
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    let q = m.quote(a, "country", WeightVector::uniform()).unwrap();
    for _ in 0..3 {
        m.recharge(a, 100.0).unwrap();
    }
    assert_eq!(remote_code(m.agree(a, q.session)), "stale_session");
    assert_eq!(remote_code(m.agree(a, q.session)), "stale_session");
}

#[test]
fn buyers_cannot_act_for_each_other() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, alice) = m.register_buyer(QuotePolicy::Hold).unwrap();
    let (b, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 4.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    assert_eq!(remote_code(m.agree(b, q.session)), "not_owner");
    m.send(
        b,
        PartyId::Mms,
        Payload::QueryReq {
            user_id: alice,
            query: "university".into(),
            weights: WeightVector::uniform(),
        },
    );
    m.run_until_quiet();
    assert!(matches!(m.buyer(b).log().last(), Some(Payload::Error { code, .. }) if code == "not_owner"));
    // the session survives the impostor
    m.agree(a, q.session).unwrap();
}

#[test]
fn unknown_relation_and_bad_query_are_reported() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    assert_eq!(remote_code(m.quote(a, "nowhere", WeightVector::uniform())), "unknown_relation");
    assert_eq!(remote_code(m.quote(a, "university: Nope = 1", WeightVector::uniform())), "invalid_query");
    assert_eq!(remote_code(m.recharge(a, -1.0)), "invalid_amount");
}

#[test]
fn repeated_quote_repeats_the_range() {
    let mut m = desk_market(MarketSetup {
        group: GroupProfile::Test,
        seed: 4,
        ..MarketSetup::default()
    });
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    let (b, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    let w: WeightVector = "0.1,0.2,0.3,0.4".parse().unwrap();
    let ranges: Vec<PriceRange> = (0..5)
        .flat_map(|_| [a, b])
        .map(|slot| m.quote(slot, "university", w).unwrap().range)
        .collect();
    assert!(ranges.iter().all(|r| r.same_as(&ranges[0])), "{ranges:?}");
}

#[test]
fn test_profile_round_trip_verifies_by_enumeration() {
    let mut m = desk_market(MarketSetup {
        group: GroupProfile::Test,
        seed: 8,
        ..MarketSetup::default()
    });
    let (a, user) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 500.0).unwrap();
    let q = m.quote(a, "country", "0.4,0.3,0.2,0.1".parse().unwrap()).unwrap();
    let receipt = m.agree(a, q.session).unwrap();
    assert!(m.buyer(a).verify(&receipt).unwrap());
    let record = m.ttp.record(receipt.consumption_id).unwrap();
    assert_eq!(record.escrowed_price, None);
    assert_eq!(
        m.verify_range(a, receipt.consumption_id, q.range, q.price_cipher.clone()).unwrap(),
        RangeVerdict::Yes
    );
    // a correct range with someone else's cipher is a plain NO
    let params = m.mms.group().clone();
    let cred = m.mms.account(user).unwrap().credential.clone();
    let other = enc(&cred, &params, 1).unwrap();
    assert_eq!(
        m.verify_range(a, receipt.consumption_id, q.range, other).unwrap(),
        RangeVerdict::No
    );
    assert!(m.check_balance(a, receipt.post_balance_cipher.clone()).unwrap());
    let br = m.balance_range(a).unwrap();
    let left = m.mms.balance_of(user).unwrap();
    assert!(br.contains_minor(left, m.mms.money_scale()));
}

#[test]
fn wide_ranges_fall_back_to_escrow() {
    let mut m = desk_market(MarketSetup {
        group: GroupProfile::Test,
        enumeration_cap: 10,
        ..MarketSetup::default()
    });
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 500.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    let r = m.agree(a, q.session).unwrap();
    assert!(m.ttp.record(r.consumption_id).unwrap().escrowed_price.is_some());
    assert_eq!(
        m.verify_range(a, r.consumption_id, q.range, q.price_cipher).unwrap(),
        RangeVerdict::Yes
    );
}

#[test]
fn archive_outage_is_surfaced() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 4.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    let r = m.agree(a, q.session).unwrap();
    m.ttp.set_available(false);
    assert_eq!(remote_code(m.verify_range(a, r.consumption_id, q.range, q.price_cipher)), "archive_unavailable");
}

#[test]
fn pushes_are_idempotent() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, user) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 4.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    m.agree(a, q.session).unwrap();
    let tracked = m.ttp.tracked_balance(user).cloned();
    m.replay_archive();
    m.replay_archive();
    assert_eq!(m.ttp.tracked_balance(user).cloned(), tracked);
    assert_eq!(m.ttp.archive().count(), 1);
    let before = m.ttp.tracked_balance(user).cloned().unwrap();
    let params = m.mms.group().clone();
    let two = EncryptedAmount(4u32.into());
    m.ttp.recharge(user, &two, 99);
    m.ttp.recharge(user, &two, 99);
    assert_eq!(m.ttp.tracked_balance(user), Some(&before.mul(&two, &params)));
    assert!(m.ttp.audit_log().is_empty());
}

#[test]
fn ttp_flags_bad_records() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.recharge(a, 4.0).unwrap();
    let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
    m.agree(a, q.session).unwrap();
    let good = m.mms.records()[0].clone();
    let params = m.mms.group().clone();

    let mut fresh = Ttp::new(params.clone(), 1, 100);
    assert!(fresh.archive_push(good.clone()).unwrap());
    assert_eq!(fresh.audit_log()[0].reason, AuditReason::UnknownUser);

    let mut tampered = good.clone();
    tampered.consumption_id = 77;
    tampered.post_balance_cipher = EncryptedAmount(4u32.into());
    assert!(m.ttp.archive_push(tampered).unwrap());
    let reasons: Vec<_> = m.ttp.audit_log().iter().map(|f| f.reason).collect();
    assert!(reasons.contains(&AuditReason::DebitMismatch), "{reasons:?}");
    assert!(reasons.contains(&AuditReason::ChainMismatch), "{reasons:?}");
    assert!(!buyer_verify(
        &good.pre_balance_cipher,
        &good.price_cipher,
        &EncryptedAmount(4u32.into()),
        &params
    )
    .unwrap());
}

#[test]
fn ttp_ignores_pushes_from_buyers() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (a, user) = m.register_buyer(QuotePolicy::Hold).unwrap();
    m.send(
        a,
        PartyId::Ttp,
        Payload::RechargePush {
            user_id: user,
            amount_cipher: EncryptedAmount(2u32.into()),
            seq_no: 500,
        },
    );
    m.run_until_quiet();
    assert_eq!(m.ttp.tracked_balance(user), Some(&EncryptedAmount::identity()));
    assert!(matches!(m.buyer(a).log().last(), Some(Payload::Error { .. })));
}

#[test]
fn leak_mode_is_caught_by_the_flow_scan() {
    for leak in [false, true] {
        let mut m = desk_market(MarketSetup {
            group: GroupProfile::Test,
            leak_prices: leak,
            ..MarketSetup::default()
        });
        let (a, _) = m.register_buyer(QuotePolicy::Hold).unwrap();
        m.recharge(a, 100.0).unwrap();
        m.balance_range(a).unwrap();
        let q = m.quote(a, "university", WeightVector::uniform()).unwrap();
        m.agree(a, q.session).unwrap();
        let leaks = scan_transcript(&m.transcript_jsonl());
        assert_eq!(leaks.is_empty(), !leak, "{leaks:?}");
        if leak {
            assert!(leaks.iter().all(|l| l.path.ends_with("price")));
        }
    }
}

#[test]
fn setup_rejects_bad_vendor_lists() {
    let setup = || MarketSetup {
        group: GroupProfile::Toy,
        ..MarketSetup::default()
    };
    assert!(matches!(Mms::setup(vec![], setup()), Err(ProtocolError::EmptyVendorList)));
    assert!(matches!(
        Mms::setup(vec![table1_vendor(), table1_vendor()], setup()),
        Err(ProtocolError::DuplicateRelation(_))
    ));
    let wrong = VendorDataset {
        price_point: PricePoint::new("elsewhere", 0.0, 1.0).unwrap(),
        ..table1_vendor()
    };
    assert!(matches!(
        Mms::setup(vec![wrong], setup()),
        Err(ProtocolError::PricePointMismatch { .. })
    ));
}

#[test]
fn registration_reaches_ttp_before_the_buyer() {
    let mut m = demo_market(DEMO_SEED).unwrap();
    let (_, user) = m.register_buyer(QuotePolicy::Hold).unwrap();
    assert!(m.ttp.knows(user));
    assert!(!m.ttp.knows(UserId(user.0 + 1)));
    let first_resp = m
        .transcript()
        .iter()
        .position(|l| l.contains("RegisterResp"))
        .unwrap();
    let push = m.transcript().iter().position(|l| l.contains("RegistrationPush")).unwrap();
    assert!(push < first_resp);
}

#[derive(Debug, Clone)]
enum Op {
    Recharge(usize, u32),
    Buy(usize, usize, [u8; 4]),
    Quote(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..3usize, 0..4000u32).prop_map(|(b, c)| Op::Recharge(b, c)),
        (0..3usize, 0..2usize, any::<[u8; 4]>()).prop_map(|(b, q, w)| Op::Buy(b, q, w)),
        (0..3usize, 0..2usize).prop_map(|(b, q)| Op::Quote(b, q)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Whatever the interleaving, TTP's cipher ledger agrees with the MMS
    /// balances and every archived charge verifies.
    #[test]
    fn ledgers_stay_consistent(ops in prop::collection::vec(op(), 1..25), escrow in any::<bool>(), seed in 0u64..50) {
        let mut m = desk_market(MarketSetup {
            group: GroupProfile::Test,
            ttp_escrow: escrow,
            seed,
            ..MarketSetup::default()
        });
        let slots: Vec<_> = (0..3).map(|_| m.register_buyer(QuotePolicy::Hold).unwrap()).collect();
        let queries = ["university", "country: Population > 1000000"];
        for op in ops {
            match op {
                Op::Recharge(b, cents) => {
                    m.recharge(slots[b].0, cents as f64 / 100.0).unwrap();
                }
                Op::Quote(b, q) => {
                    m.quote(slots[b].0, queries[q], WeightVector::uniform()).unwrap();
                }
                Op::Buy(b, q, w) => {
                    let mass = w.map(|x| x as f64 + 1.0);
                    let w = WeightVector::normalized(mass).unwrap();
                    let quote = m.quote(slots[b].0, queries[q], w).unwrap();
                    match m.agree(slots[b].0, quote.session) {
                        Ok(r) => prop_assert!(m.buyer(slots[b].0).verify(&r).unwrap()),
                        Err(e) => prop_assert_eq!(remote_code(Err::<(), _>(e)), "insufficient_balance"),
                    }
                }
            }
        }
        let params = m.mms.group().clone();
        prop_assert!(m.ttp.audit_log().is_empty());
        for &(slot, user) in &slots {
            let cipher = m.balance_cipher(slot).unwrap();
            prop_assert!(m.check_balance(slot, cipher.clone()).unwrap());
            prop_assert_eq!(m.ttp.tracked_balance(user), Some(&cipher));
        }
        for r in m.mms.records().to_vec() {
            prop_assert!(buyer_verify(&r.pre_balance_cipher, &r.price_cipher, &r.post_balance_cipher, &params).unwrap());
            prop_assert_eq!(r.escrowed_price.is_some(), escrow);
            let slot = slots.iter().find(|s| s.1 == r.user_id).unwrap().0;
            prop_assert_eq!(
                m.verify_range(slot, r.consumption_id, r.quoted_range, r.price_cipher.clone()).unwrap(),
                RangeVerdict::Yes
            );
        }
        prop_assert!(scan_transcript(&m.transcript_jsonl()).is_empty());
    }
}
