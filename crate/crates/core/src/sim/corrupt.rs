//! Cell corruptions that can only lower quality scores.
//!
//! Each kind touches one cell and is chosen so that no aspect's violation
//! count can drop: blanking only hits clean cells, pattern breaks stay off
//! dependency and expired cells, aging only hits fresh timestamps, and FD
//! conflicts write a value absent from the tuple's group.

use std::collections::{BTreeSet, HashMap, HashSet};

use chrono::{Duration, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quality::{Assessor, QualityError, QualityRuleSet};
use crate::relation::{AttrType, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    PatternBreak,
    Blank,
    Age,
    FdConflict,
}

impl CorruptionKind {
    pub const CYCLE: [CorruptionKind; 4] = [
        CorruptionKind::PatternBreak,
        CorruptionKind::Blank,
        CorruptionKind::Age,
        CorruptionKind::FdConflict,
    ];
}

const BROKEN: &str = "#corrupt#";
const TRIES: usize = 64;

struct Plan {
    row: usize,
    attr: usize,
    value: Option<String>,
}

/// Applies one corruption. Returns false when no eligible cell was found.
pub fn corrupt<R: Rng + ?Sized>(
    rel: &mut Relation,
    rules: &QualityRuleSet,
    now: NaiveDateTime,
    kind: CorruptionKind,
    rng: &mut R,
) -> Result<bool, QualityError> {
    if rel.is_empty() {
        return Ok(false);
    }
    let plan = {
        let assessor = Assessor::new(rel, rules)?;
        let ctx = Context::new(rel, rules);
        match kind {
            CorruptionKind::PatternBreak => ctx.pattern_break(&assessor, now, rng),
            CorruptionKind::Blank => ctx.blank(&assessor, now, rng),
            CorruptionKind::Age => ctx.age(&assessor, now, rng),
            CorruptionKind::FdConflict => ctx.fd_conflict(&assessor, now, rng),
        }
    };
    Ok(match plan {
        Some(p) => {
            rel.set_cell(p.row, p.attr, p.value.as_deref());
            true
        }
        None => false,
    })
}

struct Context<'a> {
    rel: &'a Relation,
    rules: &'a QualityRuleSet,
    dep_attrs: HashSet<usize>,
}

impl<'a> Context<'a> {
    fn new(rel: &'a Relation, rules: &'a QualityRuleSet) -> Self {
        let dep_attrs = rules
            .dependencies
            .iter()
            .flat_map(|d| d.attributes())
            .filter_map(|a| rel.attr_index(a))
            .collect();
        Context { rel, rules, dep_attrs }
    }

    fn expiring(&self, attr: usize) -> bool {
        let a = &self.rel.attributes()[attr];
        a.timestamp && self.rules.expiry_days.contains_key(&a.name)
    }

    fn ruled(&self, attr: usize) -> bool {
        let a = &self.rel.attributes()[attr];
        a.ty != AttrType::Text
            || self.rules.patterns.contains_key(&a.name)
            || self.rules.domains.contains_key(&a.name)
            || self.rules.required_types.contains_key(&a.name)
    }

    fn pick<R: Rng + ?Sized>(
        &self,
        attrs: &[usize],
        rng: &mut R,
        ok: impl Fn(usize, usize) -> bool,
    ) -> Option<(usize, usize)> {
        if attrs.is_empty() {
            return None;
        }
        (0..TRIES)
            .map(|_| (rng.gen_range(0..self.rel.len()), *attrs.choose(rng).expect("non-empty")))
            .find(|&(r, a)| self.rel.cell(r, a).is_some() && ok(r, a))
    }

    fn free_attrs(&self, extra: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.rel.arity())
            .filter(|a| !self.dep_attrs.contains(a) && extra(*a))
            .collect()
    }

    fn pattern_break<R: Rng + ?Sized>(&self, s: &Assessor, now: NaiveDateTime, rng: &mut R) -> Option<Plan> {
        let attrs = self.free_attrs(|a| self.ruled(a));
        let (row, attr) = self.pick(&attrs, rng, |r, a| !s.is_expired(r, a, now))?;
        Some(Plan {
            row,
            attr,
            value: Some(BROKEN.into()),
        })
    }

    fn blank<R: Rng + ?Sized>(&self, s: &Assessor, now: NaiveDateTime, rng: &mut R) -> Option<Plan> {
        let attrs = self.free_attrs(|_| true);
        let (row, attr) = self.pick(&attrs, rng, |r, a| !s.is_inaccurate(r, a) && !s.is_expired(r, a, now))?;
        Some(Plan { row, attr, value: None })
    }

    fn age<R: Rng + ?Sized>(&self, s: &Assessor, now: NaiveDateTime, rng: &mut R) -> Option<Plan> {
        let attrs = self.free_attrs(|a| self.expiring(a));
        let (row, attr) = self.pick(&attrs, rng, |r, a| !s.is_inaccurate(r, a) && !s.is_expired(r, a, now))?;
        let days = self.rules.expiry_days[&self.rel.attributes()[attr].name];
        let old = now - Duration::milliseconds((days * 86_400_000.0) as i64) - Duration::days(30);
        Some(Plan {
            row,
            attr,
            value: Some(old.format("%Y-%m-%d %H:%M:%S").to_string()),
        })
    }

    fn fd_conflict<R: Rng + ?Sized>(&self, s: &Assessor, now: NaiveDateTime, rng: &mut R) -> Option<Plan> {
        let mut mentions: HashMap<&str, usize> = HashMap::new();
        for d in &self.rules.dependencies {
            for a in d.attributes().collect::<BTreeSet<_>>() {
                *mentions.entry(a).or_default() += 1;
            }
        }
        let mut deps: Vec<_> = self
            .rules
            .dependencies
            .iter()
            .filter(|d| d.condition.is_empty() && d.rhs_value.is_none() && mentions[d.rhs.as_str()] == 1)
            .collect();
        deps.shuffle(rng);
        for dep in deps {
            let (Some(rhs), Some(lhs)) = (
                self.rel.attr_index(&dep.rhs),
                dep.lhs.iter().map(|a| self.rel.attr_index(a)).collect::<Option<Vec<_>>>(),
            ) else {
                continue;
            };
            let mut groups: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
            let mut donors: BTreeSet<&str> = BTreeSet::new();
            for r in 0..self.rel.len() {
                let Some(cell) = self.rel.cell(r, rhs) else { continue };
                if !s.is_inaccurate(r, rhs) {
                    donors.insert(cell.raw.as_str());
                }
                let key: Option<Vec<&str>> = lhs.iter().map(|&a| self.rel.cell(r, a).map(|c| c.raw.as_str())).collect();
                if let Some(key) = key {
                    groups.entry(key).or_default().push(r);
                }
            }
            let mut eligible: Vec<&Vec<usize>> = groups.values().filter(|g| g.len() >= 2).collect();
            eligible.sort();
            for _ in 0..TRIES {
                let Some(group) = eligible.choose(rng) else { break };
                let row = *group.choose(rng).expect("non-empty");
                if s.is_inaccurate(row, rhs) || s.is_expired(row, rhs, now) {
                    continue;
                }
                let present: HashSet<&str> = group
                    .iter()
                    .filter_map(|&r| self.rel.cell(r, rhs).map(|c| c.raw.as_str()))
                    .collect();
                let fresh: Vec<&&str> = donors.iter().filter(|v| !present.contains(**v)).collect();
                if let Some(v) = fresh.choose(rng) {
                    return Some(Plan {
                        row,
                        attr: rhs,
                        value: Some(v.to_string()),
                    });
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::assess_all;
    use crate::sim::datasets::{desk_now, generate, DeskKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn never_improves(kind: DeskKind, rows: usize, seed: u64, ops: usize) {
        let d = generate(kind, rows, seed).unwrap();
        let mut rel = d.vendor.relation.clone();
        let rules = &d.vendor.rules;
        let now = desk_now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = assess_all(&rel, rules, now).unwrap();
        for i in 0..ops {
            let kind = CorruptionKind::CYCLE[i % 4];
            corrupt(&mut rel, rules, now, kind, &mut rng).unwrap();
            let next = assess_all(&rel, rules, now).unwrap();
            let before = [prev.counts.inaccurate, prev.counts.missing, prev.counts.expired, prev.counts.inconsistent_tuples];
            let after = [next.counts.inaccurate, next.counts.missing, next.counts.expired, next.counts.inconsistent_tuples];
            for a in 0..4 {
                assert!(after[a] >= before[a], "{kind:?} lowered aspect {a}: {before:?} -> {after:?}");
                assert!(next.k[a] <= prev.k[a]);
            }
            prev = next;
        }
    }

    #[test]
    fn each_kind_changes_its_own_aspect() {
        let d = generate(DeskKind::University, 200, 1).unwrap();
        let rules = &d.vendor.rules;
        let now = desk_now();
        let base = assess_all(&d.vendor.relation, rules, now).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (kind, aspect) in CorruptionKind::CYCLE.iter().zip(0..4) {
            let mut rel = d.vendor.relation.clone();
            assert!(corrupt(&mut rel, rules, now, *kind, &mut rng).unwrap());
            let after = assess_all(&rel, rules, now).unwrap();
            let (b, a) = (base.counts, after.counts);
            let delta = [
                a.inaccurate - b.inaccurate,
                a.missing - b.missing,
                a.expired - b.expired,
                a.inconsistent_tuples - b.inconsistent_tuples,
            ];
            assert!(delta[aspect] >= 1, "{kind:?}: {delta:?}");
        }
    }

    #[test]
    fn kinds_without_targets_are_no_ops() {
        let d = generate(DeskKind::Philanthropy, 50, 1).unwrap();
        let mut rel = d.vendor.relation.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // no dependencies in this table
        assert!(!corrupt(&mut rel, &d.vendor.rules, desk_now(), CorruptionKind::FdConflict, &mut rng).unwrap());
        assert_eq!(rel, d.vendor.relation);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn corruption_never_raises_a_score(seed in 0u64..1000, which in 0usize..5) {
            never_improves(DeskKind::ALL[which], 120, seed, 40);
        }
    }
}
