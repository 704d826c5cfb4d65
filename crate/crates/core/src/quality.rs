//! Instance-level quality quantization.
//!
//! Every aspect reduces to a violation ratio `r` and a score
//! `K = -log10(clamp(r, 10^-Kmax, 1))`: higher is better, `Kmax` means no
//! violations were found and `0` means every unit violates.
//!
//! | aspect       | violations               | denominator          |
//! |--------------|--------------------------|----------------------|
//! | accuracy     | inaccurate present cells | `m * n`              |
//! | completeness | weighted amount/attr/missing terms | (already a ratio) |
//! | timeliness   | expired timestamp cells  | `m_t * n`            |
//! | consistency  | tuples in an FD/CFD conflict | `n`              |
//!
//! Missing cells are only counted by completeness.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{Duration, NaiveDateTime};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relation::{parse_timestamp, AttrType, Cell, Relation};

pub const DEFAULT_K_MAX: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("relation `{0}` has no rows or no attributes")]
    EmptyRelation(String),
    #[error("the necessary attribute set is empty")]
    EmptyNecessarySet,
    #[error("dependency references unknown attribute `{0}`")]
    UnknownAttributeInDependency(String),
    #[error("rule references unknown attribute `{0}`")]
    UnknownAttributeInRule(String),
    #[error("invalid rule set: {0}")]
    InvalidRule(String),
}

pub type Result<T> = std::result::Result<T, QualityError>;

/// The four quality aspects, in K-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Accuracy,
    Completeness,
    Timeliness,
    Consistency,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [
        Aspect::Accuracy,
        Aspect::Completeness,
        Aspect::Timeliness,
        Aspect::Consistency,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Accuracy => "accuracy",
            Aspect::Completeness => "completeness",
            Aspect::Timeliness => "timeliness",
            Aspect::Consistency => "consistency",
        }
    }
}

/// Valid values of an attribute: a closed numeric interval (either end may
/// be open-ended) or an enumerated set of raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Values { values: Vec<String> },
    Interval {
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
}

impl Domain {
    pub fn interval(min: f64, max: f64) -> Self {
        Domain::Interval {
            min: Some(min),
            max: Some(max),
        }
    }

    fn admits(&self, cell: &Cell) -> bool {
        match self {
            Domain::Values { values } => values.iter().any(|v| v == &cell.raw),
            Domain::Interval { min, max } => {
                let v = cell.value.as_f64().or_else(|| cell.raw.trim().parse::<f64>().ok());
                match v {
                    Some(v) if v.is_finite() => {
                        min.is_none_or(|lo| v >= lo) && max.is_none_or(|hi| v <= hi)
                    }
                    _ => false,
                }
            }
        }
    }
}

/// A functional dependency `lhs -> rhs`, or a conditional one when
/// `condition` is non-empty and/or `rhs_value` is set.
///
/// `condition` maps attributes to the constant a tuple must carry for the
/// dependency to apply (`"_"` is a wildcard). With `rhs_value`, every
/// applicable tuple must also carry that constant on `rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub lhs: Vec<String>,
    pub rhs: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub condition: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs_value: Option<String>,
}

impl Dependency {
    pub fn fd<S: Into<String>>(lhs: impl IntoIterator<Item = S>, rhs: impl Into<String>) -> Self {
        Dependency {
            lhs: lhs.into_iter().map(Into::into).collect(),
            rhs: rhs.into(),
            condition: BTreeMap::new(),
            rhs_value: None,
        }
    }

    pub fn when(mut self, attr: impl Into<String>, value: impl Into<String>) -> Self {
        self.condition.insert(attr.into(), value.into());
        self
    }

    pub fn then_constant(mut self, value: impl Into<String>) -> Self {
        self.rhs_value = Some(value.into());
        self
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.lhs
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.rhs.as_str()))
            .chain(self.condition.keys().map(String::as_str))
    }
}

fn default_n_min() -> u64 {
    1
}

fn default_completeness_weights() -> [f64; 3] {
    [1.0 / 3.0; 3]
}

fn default_k_max() -> f64 {
    DEFAULT_K_MAX
}

/// Per-dataset quality configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRuleSet {
    /// Full-match regular expressions over the raw cell text.
    #[serde(default)]
    pub patterns: BTreeMap<String, String>,
    #[serde(default)]
    pub domains: BTreeMap<String, Domain>,
    /// Overrides the declared type for the type check.
    #[serde(default)]
    pub required_types: BTreeMap<String, AttrType>,
    #[serde(default = "default_n_min")]
    pub n_min: u64,
    #[serde(default)]
    pub necessary_attrs: Vec<String>,
    /// Weights of the amount, attribute-coverage and missing-value terms.
    #[serde(default = "default_completeness_weights")]
    pub completeness_weights: [f64; 3],
    /// Expiry per timestamp attribute, in days. Attributes without an entry never expire.
    #[serde(default)]
    pub expiry_days: BTreeMap<String, f64>,
    #[serde(default)]
    pub dependencies: Vec<Dependency>,
    #[serde(default = "default_k_max")]
    pub k_max: f64,
}

impl Default for QualityRuleSet {
    fn default() -> Self {
        QualityRuleSet {
            patterns: BTreeMap::new(),
            domains: BTreeMap::new(),
            required_types: BTreeMap::new(),
            n_min: 1,
            necessary_attrs: Vec::new(),
            completeness_weights: default_completeness_weights(),
            expiry_days: BTreeMap::new(),
            dependencies: Vec::new(),
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl QualityRuleSet {
    pub fn validate(&self) -> Result<()> {
        let w = self.completeness_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(QualityError::InvalidRule(format!(
                "completeness weights must be non-negative and sum to 1, got {w:?}"
            )));
        }
        if self.n_min < 1 {
            return Err(QualityError::InvalidRule("n_min must be at least 1".into()));
        }
        if !(self.k_max.is_finite() && self.k_max > 0.0) {
            return Err(QualityError::InvalidRule(format!("k_max must be positive, got {}", self.k_max)));
        }
        for (attr, days) in &self.expiry_days {
            if !days.is_finite() || *days < 0.0 {
                return Err(QualityError::InvalidRule(format!("expiry of `{attr}` must be non-negative")));
            }
        }
        for p in self.patterns.values() {
            compile_pattern(p)?;
        }
        Ok(())
    }
}

fn compile_pattern(p: &str) -> Result<Regex> {
    Regex::new(&format!("^(?:{p})$")).map_err(|e| QualityError::InvalidRule(format!("bad pattern `{p}`: {e}")))
}

/// Maps a violation ratio to a score. Returns `(K, clamped ratio)`.
pub fn k_score(ratio: f64, k_max: f64) -> (f64, f64) {
    let floor = 10f64.powf(-k_max);
    if ratio.is_nan() || ratio <= floor {
        (k_max, floor)
    } else if ratio >= 1.0 {
        (0.0, 1.0)
    } else {
        (-ratio.log10(), ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyAssessment {
    pub inaccurate: u64,
    pub k: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletenessAssessment {
    pub missing: u64,
    pub necessary: usize,
    pub covered_necessary: usize,
    /// The weighted violation sum before clamping; may exceed 1.
    pub raw_ratio: f64,
    pub k: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelinessAssessment {
    pub expired: u64,
    pub timestamp_attrs: usize,
    pub k: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyAssessment {
    pub violating_tuples: u64,
    pub k: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub inaccurate: u64,
    pub missing: u64,
    pub expired: u64,
    pub inconsistent_tuples: u64,
}

/// The K-vector of one relation with the counts behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityProfile {
    pub relation: String,
    pub k: [f64; 4],
    pub counts: ViolationCounts,
    pub violation_rates: [f64; 4],
    pub tuples: usize,
    pub attributes: usize,
    pub cell_total: usize,
    pub timestamp_attr_count: usize,
    pub necessary_count: usize,
    pub covered_necessary: usize,
}

impl QualityProfile {
    pub fn k(&self, aspect: Aspect) -> f64 {
        self.k[aspect.index()]
    }

    /// Violation count of an aspect as used by cleaning-cost estimates.
    pub fn violations(&self, aspect: Aspect) -> u64 {
        match aspect {
            Aspect::Accuracy => self.counts.inaccurate,
            Aspect::Completeness => self.counts.missing,
            Aspect::Timeliness => self.counts.expired,
            Aspect::Consistency => self.counts.inconsistent_tuples,
        }
    }
}

struct AttrCheck {
    pattern: Option<Regex>,
    domain: Option<Domain>,
    required: AttrType,
    declared: AttrType,
}

/// A rule set bound to one relation's schema, with patterns compiled.
pub struct Assessor<'a> {
    rel: &'a Relation,
    rules: &'a QualityRuleSet,
    checks: Vec<AttrCheck>,
    expiry: Vec<Option<Duration>>,
    deps: Vec<BoundDependency>,
}

struct BoundDependency {
    lhs: Vec<usize>,
    rhs: usize,
    condition: Vec<(usize, String)>,
    rhs_value: Option<String>,
}

impl<'a> Assessor<'a> {
    pub fn new(rel: &'a Relation, rules: &'a QualityRuleSet) -> Result<Self> {
        rules.validate()?;
        let attr = |name: &str| {
            rel.attr_index(name)
                .ok_or_else(|| QualityError::UnknownAttributeInRule(name.to_string()))
        };
        for name in rules
            .patterns
            .keys()
            .chain(rules.domains.keys())
            .chain(rules.required_types.keys())
            .chain(rules.expiry_days.keys())
        {
            attr(name)?;
        }
        let mut checks: Vec<AttrCheck> = rel
            .attributes()
            .iter()
            .map(|a| AttrCheck {
                pattern: None,
                domain: rules.domains.get(&a.name).cloned(),
                required: rules.required_types.get(&a.name).copied().unwrap_or(a.ty),
                declared: a.ty,
            })
            .collect();
        for (name, p) in &rules.patterns {
            checks[attr(name)?].pattern = Some(compile_pattern(p)?);
        }
        let expiry = rel
            .attributes()
            .iter()
            .map(|a| {
                rules
                    .expiry_days
                    .get(&a.name)
                    .map(|d| Duration::milliseconds((d * 86_400_000.0).round() as i64))
            })
            .collect();
        let dep_attr = |name: &str| {
            rel.attr_index(name)
                .ok_or_else(|| QualityError::UnknownAttributeInDependency(name.to_string()))
        };
        let deps = rules
            .dependencies
            .iter()
            .map(|d| {
                Ok(BoundDependency {
                    lhs: d.lhs.iter().map(|a| dep_attr(a)).collect::<Result<_>>()?,
                    rhs: dep_attr(&d.rhs)?,
                    condition: d
                        .condition
                        .iter()
                        .filter(|(_, v)| v.as_str() != "_")
                        .map(|(a, v)| Ok((dep_attr(a)?, v.clone())))
                        .collect::<Result<_>>()?,
                    rhs_value: d.rhs_value.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Assessor {
            rel,
            rules,
            checks,
            expiry,
            deps,
        })
    }

    fn require_rows(&self) -> Result<()> {
        if self.rel.is_empty() || self.rel.arity() == 0 {
            Err(QualityError::EmptyRelation(self.rel.name().to_string()))
        } else {
            Ok(())
        }
    }

    /// True if the present cell at (row, attr) breaks its type, pattern or
    /// domain rule. Missing cells are never inaccurate.
    pub fn is_inaccurate(&self, row: usize, attr: usize) -> bool {
        let Some(cell) = self.rel.cell(row, attr) else {
            return false;
        };
        let check = &self.checks[attr];
        let type_ok = if check.required == check.declared {
            !cell.is_unparsed()
        } else {
            check.required.parse(&cell.raw).is_some()
        };
        !type_ok
            || check.pattern.as_ref().is_some_and(|re| !re.is_match(&cell.raw))
            || check.domain.as_ref().is_some_and(|d| !d.admits(cell))
    }

    /// True if the present timestamp cell at (row, attr) is older than its expiry.
    pub fn is_expired(&self, row: usize, attr: usize, now: NaiveDateTime) -> bool {
        if !self.rel.attributes()[attr].timestamp {
            return false;
        }
        let (Some(cell), Some(expiry)) = (self.rel.cell(row, attr), self.expiry[attr]) else {
            return false;
        };
        match cell.value.as_instant().or_else(|| parse_timestamp(&cell.raw)) {
            Some(t) => now - t > expiry,
            None => false,
        }
    }

    /// Per-tuple flags: does the tuple take part in at least one dependency violation?
    pub fn violating_tuples(&self) -> Vec<bool> {
        let n = self.rel.len();
        let mut flags = vec![false; n];
        for dep in &self.deps {
            let applies = |r: usize| {
                dep.condition
                    .iter()
                    .all(|(a, v)| self.rel.cell(r, *a).is_some_and(|c| &c.raw == v))
                    && dep.lhs.iter().all(|&a| self.rel.cell(r, a).is_some())
            };
            let mut groups: HashMap<Vec<&str>, (Option<&str>, bool)> = HashMap::new();
            let mut members: Vec<(usize, Vec<&str>)> = Vec::new();
            for r in 0..n {
                if !applies(r) {
                    continue;
                }
                let Some(rhs) = self.rel.cell(r, dep.rhs).map(|c| c.raw.as_str()) else {
                    continue;
                };
                if dep.rhs_value.as_deref().is_some_and(|v| v != rhs) {
                    flags[r] = true;
                }
                let key: Vec<&str> = dep
                    .lhs
                    .iter()
                    .map(|&a| self.rel.cell(r, a).expect("checked").raw.as_str())
                    .collect();
                let entry = groups.entry(key.clone()).or_insert((Some(rhs), false));
                if entry.0 != Some(rhs) {
                    entry.1 = true;
                }
                members.push((r, key));
            }
            for (r, key) in members {
                if groups[&key].1 {
                    flags[r] = true;
                }
            }
        }
        flags
    }

    pub fn accuracy(&self) -> Result<AccuracyAssessment> {
        self.require_rows()?;
        let inaccurate = (0..self.rel.len())
            .flat_map(|r| (0..self.rel.arity()).map(move |a| (r, a)))
            .filter(|&(r, a)| self.is_inaccurate(r, a))
            .count() as u64;
        let (k, rate) = k_score(inaccurate as f64 / self.rel.cell_total() as f64, self.rules.k_max);
        Ok(AccuracyAssessment { inaccurate, k, rate })
    }

    pub fn completeness(&self) -> Result<CompletenessAssessment> {
        self.require_rows()?;
        if self.rules.necessary_attrs.is_empty() {
            return Err(QualityError::EmptyNecessarySet);
        }
        let n = self.rel.len() as u64;
        let missing = self
            .rel
            .rows()
            .iter()
            .map(|r| r.iter().filter(|c| c.is_none()).count() as u64)
            .sum::<u64>();
        let necessary: HashSet<&str> = self.rules.necessary_attrs.iter().map(String::as_str).collect();
        let covered = self
            .rel
            .attributes()
            .iter()
            .filter(|a| necessary.contains(a.name.as_str()))
            .count();
        let p = necessary.len();
        let [w1, w2, w3] = self.rules.completeness_weights;
        let amount = (self.rules.n_min / n) as f64;
        let raw_ratio = w1 * amount
            + w2 * (p - covered) as f64 / p as f64
            + w3 * missing as f64 / self.rel.cell_total() as f64;
        let (k, rate) = k_score(raw_ratio, self.rules.k_max);
        Ok(CompletenessAssessment {
            missing,
            necessary: p,
            covered_necessary: covered,
            raw_ratio,
            k,
            rate,
        })
    }

    pub fn timeliness(&self, now: NaiveDateTime) -> TimelinessAssessment {
        let ts: Vec<usize> = self.rel.timestamp_attrs().map(|(i, _)| i).collect();
        if ts.is_empty() || self.rel.is_empty() {
            return TimelinessAssessment {
                expired: 0,
                timestamp_attrs: ts.len(),
                k: self.rules.k_max,
                rate: 10f64.powf(-self.rules.k_max),
            };
        }
        let expired = (0..self.rel.len())
            .flat_map(|r| ts.iter().map(move |&a| (r, a)))
            .filter(|&(r, a)| self.is_expired(r, a, now))
            .count() as u64;
        let (k, rate) = k_score(expired as f64 / (ts.len() * self.rel.len()) as f64, self.rules.k_max);
        TimelinessAssessment {
            expired,
            timestamp_attrs: ts.len(),
            k,
            rate,
        }
    }

    pub fn consistency(&self) -> Result<ConsistencyAssessment> {
        self.require_rows()?;
        let violating_tuples = self.violating_tuples().into_iter().filter(|v| *v).count() as u64;
        let (k, rate) = k_score(violating_tuples as f64 / self.rel.len() as f64, self.rules.k_max);
        Ok(ConsistencyAssessment {
            violating_tuples,
            k,
            rate,
        })
    }

    pub fn profile(&self, now: NaiveDateTime) -> Result<QualityProfile> {
        let acc = self.accuracy()?;
        let com = self.completeness()?;
        let tim = self.timeliness(now);
        let con = self.consistency()?;
        Ok(QualityProfile {
            relation: self.rel.name().to_string(),
            k: [acc.k, com.k, tim.k, con.k],
            counts: ViolationCounts {
                inaccurate: acc.inaccurate,
                missing: com.missing,
                expired: tim.expired,
                inconsistent_tuples: con.violating_tuples,
            },
            violation_rates: [acc.rate, com.rate, tim.rate, con.rate],
            tuples: self.rel.len(),
            attributes: self.rel.arity(),
            cell_total: self.rel.cell_total(),
            timestamp_attr_count: tim.timestamp_attrs,
            necessary_count: com.necessary,
            covered_necessary: com.covered_necessary,
        })
    }
}

pub fn assess_accuracy(rel: &Relation, rules: &QualityRuleSet) -> Result<AccuracyAssessment> {
    Assessor::new(rel, rules)?.accuracy()
}

pub fn assess_completeness(rel: &Relation, rules: &QualityRuleSet) -> Result<CompletenessAssessment> {
    Assessor::new(rel, rules)?.completeness()
}

pub fn assess_timeliness(rel: &Relation, rules: &QualityRuleSet, now: NaiveDateTime) -> Result<TimelinessAssessment> {
    Ok(Assessor::new(rel, rules)?.timeliness(now))
}

pub fn assess_consistency(rel: &Relation, rules: &QualityRuleSet) -> Result<ConsistencyAssessment> {
    Assessor::new(rel, rules)?.consistency()
}

pub fn assess_all(rel: &Relation, rules: &QualityRuleSet, now: NaiveDateTime) -> Result<QualityProfile> {
    Assessor::new(rel, rules)?.profile(now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::tests::table1;
    use crate::relation::{AttributeDecl, Row};
    use proptest::prelude::*;

    fn table1_rules() -> QualityRuleSet {
        QualityRuleSet {
            patterns: [("Apply_Deadline".to_string(), r"\d{4}-[A-Za-z]{3}-\d{2}".to_string())].into(),
            domains: [("Min_Score".to_string(), Domain::interval(60.0, 100.0))].into(),
            n_min: 2,
            necessary_attrs: vec!["Uname".into(), "Country".into()],
            dependencies: vec![Dependency::fd(["Country"], "Country_Code")],
            ..Default::default()
        }
    }

    fn now() -> NaiveDateTime {
        parse_timestamp("2014-01-01").unwrap()
    }

    #[test]
    fn table1_accuracy() {
        let a = assess_accuracy(&table1(), &table1_rules()).unwrap();
        assert_eq!(a.inaccurate, 2);
        assert!((a.k - -(2.0f64 / 18.0).log10()).abs() < 1e-12);
        assert!((a.k - 0.954).abs() < 1e-3);
    }

    #[test]
    fn table1_completeness() {
        let c = assess_completeness(&table1(), &table1_rules()).unwrap();
        assert_eq!((c.missing, c.necessary, c.covered_necessary), (1, 2, 2));
        assert!((c.raw_ratio - 1.0 / 54.0).abs() < 1e-15);
        assert!((c.k - 1.732).abs() < 1e-3);
    }

    #[test]
    fn table1_consistency() {
        let c = assess_consistency(&table1(), &table1_rules()).unwrap();
        assert_eq!(c.violating_tuples, 2);
        assert!((c.k - -(2.0f64 / 3.0).log10()).abs() < 1e-12);
    }

    #[test]
    fn table1_profile() {
        let p = assess_all(&table1(), &table1_rules(), now()).unwrap();
        assert_eq!(p.k[2], 6.0);
        assert_eq!(p.cell_total, 18);
        assert_eq!(p.counts.missing, 1);
        let again = assess_all(&table1(), &table1_rules(), now()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn amount_setting_above_one_clamps_to_zero() {
        let rules = QualityRuleSet {
            n_min: 200,
            ..table1_rules()
        };
        let c = assess_completeness(&table1(), &rules).unwrap();
        assert!(c.raw_ratio > 1.0);
        assert_eq!(c.k, 0.0);
    }

    fn clean_rel(n: usize) -> Relation {
        let schema = vec![
            AttributeDecl::new("id", AttrType::Integer),
            AttributeDecl::timestamped("seen", AttrType::Date),
        ];
        let rows: Vec<Vec<String>> = (0..n).map(|i| vec![i.to_string(), "2013-06-01".into()]).collect();
        Relation::from_text_rows("clean", schema, &rows).unwrap()
    }

    #[test]
    fn pristine_relation_scores_k_max() {
        let rules = QualityRuleSet {
            necessary_attrs: vec!["id".into()],
            expiry_days: [("seen".to_string(), 365.0)].into(),
            ..Default::default()
        };
        let p = assess_all(&clean_rel(4), &rules, now()).unwrap();
        assert_eq!(p.k, [6.0; 4]);
    }

    #[test]
    fn timeliness_cases() {
        let mut rel = clean_rel(3);
        let rules = QualityRuleSet {
            necessary_attrs: vec!["id".into()],
            expiry_days: [("seen".to_string(), 365.0)].into(),
            ..Default::default()
        };
        rel.set_cell(0, 1, Some("2010-01-01"));
        let t = assess_timeliness(&rel, &rules, now()).unwrap();
        assert_eq!(t.expired, 1);
        assert!((t.k - 0.477).abs() < 1e-3);
        for r in 0..3 {
            rel.set_cell(r, 1, Some("2001-01-01"));
        }
        assert_eq!(assess_timeliness(&rel, &rules, now()).unwrap().k, 0.0);
        // the boundary itself is not expired
        rel.set_cell(0, 1, Some("2013-01-01"));
        let a = Assessor::new(&rel, &rules).unwrap();
        assert!(!a.is_expired(0, 1, now()));
    }

    #[test]
    fn no_timestamp_attrs_scores_k_max() {
        let t = assess_timeliness(&table1(), &table1_rules(), now()).unwrap();
        assert_eq!((t.expired, t.k), (0, 6.0));
    }

    #[test]
    fn every_cell_inaccurate_scores_zero() {
        let schema = vec![AttributeDecl::new("x", AttrType::Integer)];
        let rel = Relation::from_text_rows("r", schema, &[vec!["a"], vec!["b"]]).unwrap();
        let a = assess_accuracy(&rel, &QualityRuleSet::default()).unwrap();
        assert_eq!((a.inaccurate, a.k), (2, 0.0));
    }

    #[test]
    fn multiple_metrics_count_once() {
        let schema = vec![AttributeDecl::new("x", AttrType::Text)];
        let rel = Relation::from_text_rows("r", schema, &[vec!["abc"], vec!["7"]]).unwrap();
        let rules = QualityRuleSet {
            patterns: [("x".to_string(), r"\d+".to_string())].into(),
            domains: [("x".to_string(), Domain::interval(0.0, 5.0))].into(),
            required_types: [("x".to_string(), AttrType::Integer)].into(),
            ..Default::default()
        };
        // "abc" breaks all three, "7" only the domain
        assert_eq!(assess_accuracy(&rel, &rules).unwrap().inaccurate, 2);
    }

    #[test]
    fn enumerated_domain() {
        let schema = vec![AttributeDecl::new("c", AttrType::Text)];
        let rel = Relation::from_text_rows("r", schema, &[vec!["US"], vec!["UK"], vec!["XX"]]).unwrap();
        let rules = QualityRuleSet {
            domains: [("c".to_string(), Domain::Values { values: vec!["US".into(), "UK".into()] })].into(),
            ..Default::default()
        };
        assert_eq!(assess_accuracy(&rel, &rules).unwrap().inaccurate, 1);
    }

    #[test]
    fn conditional_dependencies() {
        let rel = table1();
        // only US tuples are subject: still t1/t3
        let rules = QualityRuleSet {
            dependencies: vec![Dependency::fd(["Country"], "Country_Code").when("Country", "UK")],
            ..table1_rules()
        };
        assert_eq!(assess_consistency(&rel, &rules).unwrap().violating_tuples, 0);
        let rules = QualityRuleSet {
            dependencies: vec![Dependency::fd(["Country"], "Country_Code").when("Country", "UK").then_constant("044")],
            ..table1_rules()
        };
        assert_eq!(assess_consistency(&rel, &rules).unwrap().violating_tuples, 1);
    }

    #[test]
    fn consistency_vacuous_and_total() {
        let rules = QualityRuleSet {
            dependencies: vec![],
            ..table1_rules()
        };
        assert_eq!(assess_consistency(&table1(), &rules).unwrap().k, 6.0);
        let schema = vec![
            AttributeDecl::new("a", AttrType::Text),
            AttributeDecl::new("b", AttrType::Text),
        ];
        let rel = Relation::from_text_rows("r", schema, &[vec!["x", "1"], vec!["x", "2"], vec!["x", "3"]]).unwrap();
        let rules = QualityRuleSet {
            dependencies: vec![Dependency::fd(["a"], "b")],
            ..Default::default()
        };
        assert_eq!(assess_consistency(&rel, &rules).unwrap().k, 0.0);
    }

    #[test]
    fn error_paths() {
        let empty = Relation::new("e", vec![AttributeDecl::new("a", AttrType::Text)], vec![]).unwrap();
        assert!(matches!(
            assess_accuracy(&empty, &QualityRuleSet::default()),
            Err(QualityError::EmptyRelation(_))
        ));
        let rules = QualityRuleSet {
            necessary_attrs: vec![],
            ..table1_rules()
        };
        assert_eq!(assess_completeness(&table1(), &rules), Err(QualityError::EmptyNecessarySet));
        let rules = QualityRuleSet {
            dependencies: vec![Dependency::fd(["Planet"], "Country")],
            ..table1_rules()
        };
        assert_eq!(
            assess_consistency(&table1(), &rules).map(|c| c.k),
            Err(QualityError::UnknownAttributeInDependency("Planet".into()))
        );
        let rules = QualityRuleSet {
            completeness_weights: [0.5, 0.5, 0.5],
            ..table1_rules()
        };
        assert!(matches!(assess_all(&table1(), &rules, now()), Err(QualityError::InvalidRule(_))));
    }

    #[test]
    fn rules_parse_from_json() {
        let json = r#"{
            "patterns": {"Apply_Deadline": "\\d{4}-[A-Za-z]{3}-\\d{2}"},
            "domains": {"Min_Score": {"min": 60, "max": 100}, "Country": {"values": ["US", "UK"]}},
            "necessary_attrs": ["Uname", "Country"],
            "n_min": 2,
            "dependencies": [{"lhs": ["Country"], "rhs": "Country_Code"}]
        }"#;
        let rules: QualityRuleSet = serde_json::from_str(json).unwrap();
        assert_eq!(rules.completeness_weights, [1.0 / 3.0; 3]);
        assert_eq!(rules.domains["Min_Score"], Domain::interval(60.0, 100.0));
        assert!(matches!(rules.domains["Country"], Domain::Values { .. }));
        assert_eq!(assess_accuracy(&table1(), &rules).unwrap().inaccurate, 2);
    }

    /// Pairwise reference: checks every ordered tuple pair against every dependency.
    fn brute_force_violations(rel: &Relation, deps: &[Dependency]) -> u64 {
        let raw = |r: usize, a: &str| rel.cell(r, rel.attr_index(a).unwrap()).map(|c| c.raw.clone());
        let subject = |r: usize, d: &Dependency| {
            d.condition.iter().all(|(a, v)| v == "_" || raw(r, a).as_deref() == Some(v.as_str()))
                && d.lhs.iter().all(|a| raw(r, a).is_some())
        };
        let mut bad = vec![false; rel.len()];
        for d in deps {
            for t in 0..rel.len() {
                if !subject(t, d) || raw(t, &d.rhs).is_none() {
                    continue;
                }
                if let Some(v) = &d.rhs_value {
                    if raw(t, &d.rhs).as_ref() != Some(v) {
                        bad[t] = true;
                    }
                }
                for u in 0..rel.len() {
                    if u != t
                        && subject(u, d)
                        && raw(u, &d.rhs).is_some()
                        && d.lhs.iter().all(|a| raw(t, a) == raw(u, a))
                        && raw(t, &d.rhs) != raw(u, &d.rhs)
                    {
                        bad[t] = true;
                    }
                }
            }
        }
        bad.iter().filter(|b| **b).count() as u64
    }

    fn small_relation() -> impl Strategy<Value = Relation> {
        let cell = prop_oneof![1 => Just(None), 4 => (0u8..3).prop_map(|v| Some(v.to_string()))];
        (1usize..=8).prop_flat_map(move |n| {
            proptest::collection::vec(proptest::collection::vec(cell.clone(), 4), n).prop_map(|rows| {
                let schema = ["a", "b", "c", "d"].iter().map(|n| AttributeDecl::new(*n, AttrType::Text)).collect();
                let rows: Vec<Row> = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(|c| c.map(|s| Cell::parse(&s, AttrType::Text))).collect())
                    .collect();
                Relation::new("gen", schema, rows).unwrap()
            })
        })
    }

    fn dependency() -> impl Strategy<Value = Dependency> {
        let attr = prop::sample::select(vec!["a", "b", "c", "d"]);
        (
            proptest::collection::vec(attr.clone(), 1..3),
            attr.clone(),
            proptest::option::of((attr, 0u8..3)),
            proptest::option::of(0u8..3),
        )
            .prop_map(|(lhs, rhs, cond, constant)| {
                let mut d = Dependency::fd(lhs, rhs);
                if let Some((a, v)) = cond {
                    d = d.when(a, v.to_string());
                }
                if let Some(v) = constant {
                    d = d.then_constant(v.to_string());
                }
                d
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn consistency_matches_pairwise_oracle(rel in small_relation(), deps in proptest::collection::vec(dependency(), 0..4)) {
            let rules = QualityRuleSet { dependencies: deps.clone(), ..Default::default() };
            let got = assess_consistency(&rel, &rules).unwrap().violating_tuples;
            prop_assert_eq!(got, brute_force_violations(&rel, &deps));
        }

        #[test]
        fn scores_stay_in_range(rel in small_relation(), deps in proptest::collection::vec(dependency(), 0..3), n_min in 1u64..20) {
            let rules = QualityRuleSet {
                patterns: [("a".to_string(), "[01]".to_string())].into(),
                necessary_attrs: vec!["a".into(), "zz".into()],
                n_min,
                dependencies: deps,
                ..Default::default()
            };
            let p = assess_all(&rel, &rules, now()).unwrap();
            for (k, r) in p.k.iter().zip(p.violation_rates) {
                prop_assert!((0.0..=6.0).contains(k));
                prop_assert!((-r.log10() - k).abs() < 1e-12);
            }
        }

        #[test]
        fn blanking_never_raises_completeness(rel in small_relation(), r in 0usize..8, c in 0usize..4) {
            let rules = QualityRuleSet { necessary_attrs: vec!["a".into()], ..Default::default() };
            let before = assess_completeness(&rel, &rules).unwrap().k;
            let mut worse = rel.clone();
            worse.set_cell(r % rel.len(), c, None);
            prop_assert!(assess_completeness(&worse, &rules).unwrap().k <= before);
        }

        #[test]
        fn pattern_break_never_raises_accuracy(rel in small_relation(), r in 0usize..8, c in 0usize..4) {
            let rules = QualityRuleSet {
                patterns: ["a", "b", "c", "d"].iter().map(|a| (a.to_string(), r"\d".to_string())).collect(),
                ..Default::default()
            };
            let before = assess_accuracy(&rel, &rules).unwrap();
            let mut worse = rel.clone();
            worse.set_cell(r % rel.len(), c, Some("#bad#"));
            let after = assess_accuracy(&worse, &rules).unwrap();
            prop_assert!(after.k <= before.k);
            prop_assert!(after.inaccurate >= before.inaccurate);
        }

        #[test]
        fn new_conflicting_tuple_never_raises_consistency(rel in small_relation(), v in 3u8..6) {
            let rules = QualityRuleSet { dependencies: vec![Dependency::fd(["a"], "b")], ..Default::default() };
            prop_assume!(rel.cell(0, 0).is_some() && rel.cell(0, 1).is_some());
            let before = assess_consistency(&rel, &rules).unwrap().k;
            // append a copy of tuple 0 with a fresh rhs value
            let mut rows = rel.rows().to_vec();
            let mut t = rows[0].clone();
            t[1] = Some(Cell::parse(&v.to_string(), AttrType::Text));
            rows.push(t);
            let worse = Relation::new("gen", rel.attributes().to_vec(), rows).unwrap();
            prop_assert!(assess_consistency(&worse, &rules).unwrap().k <= before);
        }
    }

    #[test]
    fn aging_never_raises_timeliness() {
        let rules = QualityRuleSet {
            necessary_attrs: vec!["id".into()],
            expiry_days: [("seen".to_string(), 365.0)].into(),
            ..Default::default()
        };
        let mut rel = clean_rel(5);
        let mut last = assess_timeliness(&rel, &rules, now()).unwrap().k;
        for r in 0..5 {
            rel.set_cell(r, 1, Some("2000-02-02"));
            let k = assess_timeliness(&rel, &rules, now()).unwrap().k;
            assert!(k <= last);
            last = k;
        }
        assert_eq!(last, 0.0);
    }
}
