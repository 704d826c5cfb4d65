//! Quality-based price floating.
//!
//! A buyer states a weight vector over the four aspects. Each weight selects
//! a cleaning level for its aspect; the level's cost lowers that aspect's
//! score, and the weighted scores give the integrated quality `FQ`. The same
//! integration over the market's standard scores gives `FQ_S`, and the base
//! query price floats with the gap between the two.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quality::{Aspect, QualityProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),
    #[error("weight {weight} for {aspect:?} is not covered by any cleaning level")]
    UncoveredWeight { aspect: Aspect, weight: f64 },
    #[error("invalid cleaning cost model: {0}")]
    InvalidModel(String),
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
    #[error("cell total is zero")]
    ZeroCellTotal,
    #[error("baseline quality is zero or negative ({0})")]
    ZeroBaseline(f64),
    #[error("no quality profiles to build a market baseline from")]
    EmptyMarket,
}

pub type Result<T> = std::result::Result<T, PricingError>;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Buyer weights over (accuracy, completeness, timeliness, consistency).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct WeightVector([f64; 4]);

impl WeightVector {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(PricingError::InvalidWeights(format!("weights must be finite and non-negative: {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(PricingError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(w))
    }

    /// Normalizes arbitrary non-negative mass onto the simplex.
    pub fn normalized(mass: [f64; 4]) -> Result<Self> {
        let sum: f64 = mass.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(PricingError::InvalidWeights(format!("cannot normalize {mass:?}")));
        }
        let mut w = mass.map(|m| m / sum);
        // absorb rounding drift into the largest component
        let drift = 1.0 - w.iter().sum::<f64>();
        let top = (0..4).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap_or(0);
        w[top] += drift;
        WeightVector::new(w)
    }

    pub fn uniform() -> Self {
        WeightVector([0.25; 4])
    }

    pub fn one_hot(aspect: Aspect) -> Self {
        let mut w = [0.0; 4];
        w[aspect.index()] = 1.0;
        WeightVector(w)
    }

    pub fn get(&self, aspect: Aspect) -> f64 {
        self.0[aspect.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }
}

impl TryFrom<[f64; 4]> for WeightVector {
    type Error = PricingError;

    fn try_from(w: [f64; 4]) -> Result<Self> {
        WeightVector::new(w)
    }
}

impl From<WeightVector> for [f64; 4] {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl FromStr for WeightVector {
    type Err = PricingError;

    /// Parses `w1,w2,w3,w4`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| PricingError::InvalidWeights(format!("`{s}`: {e}")))?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| PricingError::InvalidWeights(format!("`{s}` does not have four components")))?;
        WeightVector::new(arr)
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

/// One cleaning method for an aspect, chosen when the buyer's weight falls in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningLevel {
    pub lo: f64,
    pub hi: f64,
    /// Estimated cleaning time per violation.
    pub cost_coefficient: f64,
    pub method: String,
}

impl CleaningLevel {
    pub fn new(lo: f64, hi: f64, cost_coefficient: f64, method: impl Into<String>) -> Self {
        CleaningLevel {
            lo,
            hi,
            cost_coefficient,
            method: method.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningCostModel {
    pub accuracy: Vec<CleaningLevel>,
    pub completeness: Vec<CleaningLevel>,
    pub timeliness: Vec<CleaningLevel>,
    pub consistency: Vec<CleaningLevel>,
}

impl CleaningCostModel {
    pub fn levels(&self, aspect: Aspect) -> &[CleaningLevel] {
        match aspect {
            Aspect::Accuracy => &self.accuracy,
            Aspect::Completeness => &self.completeness,
            Aspect::Timeliness => &self.timeliness,
            Aspect::Consistency => &self.consistency,
        }
    }

    /// Ranges must start at 0, abut, ascend and reach 1; coefficients must be
    /// non-negative and non-decreasing.
    pub fn validate(&self) -> Result<()> {
        for aspect in Aspect::ALL {
            let levels = self.levels(aspect);
            let bad = |msg: String| Err(PricingError::InvalidModel(format!("{}: {msg}", aspect.name())));
            let (Some(first), Some(last)) = (levels.first(), levels.last()) else {
                return bad("no levels".into());
            };
            if first.lo != 0.0 {
                return bad(format!("first range starts at {}", first.lo));
            }
            if last.hi < 1.0 {
                return bad(format!("last range ends at {}", last.hi));
            }
            for (i, l) in levels.iter().enumerate() {
                if !(l.lo < l.hi) {
                    return bad(format!("level {} has empty range [{}, {})", i + 1, l.lo, l.hi));
                }
                if !(l.cost_coefficient.is_finite() && l.cost_coefficient >= 0.0) {
                    return bad(format!("level {} has cost {}", i + 1, l.cost_coefficient));
                }
            }
            for pair in levels.windows(2) {
                if pair[0].hi != pair[1].lo {
                    return bad(format!("ranges [{}, {}) and [{}, {}) do not abut", pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi));
                }
                if pair[1].cost_coefficient < pair[0].cost_coefficient {
                    return bad("cost coefficients decrease".into());
                }
            }
        }
        Ok(())
    }
}

impl Default for CleaningCostModel {
    fn default() -> Self {
        let l = CleaningLevel::new;
        CleaningCostModel {
            accuracy: vec![
                l(0.0, 0.25, 0.0, "ignore inaccurate values"),
                l(0.25, 0.5, 0.5, "normalize formats with pattern rules"),
                l(0.5, 0.75, 1.0, "validate against reference domains"),
                l(0.75, 1.0, 3.0, "manual correction"),
            ],
            // the top level is stretched to 1 so every weight is covered
            completeness: vec![
                l(0.0, 0.1, 0.0, "ignore all the records with missing values"),
                l(0.1, 0.2, 0.2, "fill missing ones with special value"),
                l(0.2, 0.3, 1.0, "capture missing values through statistic methods"),
                l(0.3, 1.0, 2.0, "capture missing values through machine learning methods"),
            ],
            timeliness: vec![
                l(0.0, 0.25, 0.0, "accept stale values"),
                l(0.25, 0.5, 0.2, "flag expired values"),
                l(0.5, 0.75, 1.0, "refresh from the vendor feed"),
                l(0.75, 1.0, 3.0, "re-collect at the source"),
            ],
            consistency: vec![
                l(0.0, 0.25, 0.0, "drop violating tuples"),
                l(0.25, 0.5, 0.5, "keep the majority value per group"),
                l(0.5, 0.75, 1.5, "dependency-guided repair"),
                l(0.75, 1.0, 3.0, "manual reconciliation"),
            ],
        }
    }
}

/// How the market baseline `FQ_S` is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Standard scores replace the instance's K values; the buyer's weights are kept.
    #[default]
    SubstituteK,
    /// Normalized standard scores replace the buyer's weights over the instance's K values.
    SubstituteW,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Standard quality scores S.
    pub standard: [f64; 4],
    /// Combined-floating coefficient.
    pub c: f64,
    /// Additive-floating coefficient.
    pub e: f64,
    /// Cost normalizer; 0 disables the cleaning-cost penalty.
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            standard: [2.5, 2.0, 1.5, 2.0],
            c: 0.05,
            e: 1.0,
            gamma: 0.0,
            baseline_mode: BaselineMode::SubstituteK,
        }
    }
}

impl MarketParams {
    pub fn validate(&self, k_max: f64) -> Result<()> {
        if self.standard.iter().any(|s| !(0.0..=k_max).contains(s)) {
            return Err(PricingError::InvalidParams(format!(
                "standard scores {:?} must lie in [0, {k_max}]",
                self.standard
            )));
        }
        for (name, v) in [("c", self.c), ("e", self.e), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PricingError::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// A selected cleaning level; `index` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelChoice<'a> {
    pub index: usize,
    pub level: &'a CleaningLevel,
}

pub fn select_level(model: &CleaningCostModel, aspect: Aspect, weight: f64) -> Result<LevelChoice<'_>> {
    let uncovered = PricingError::UncoveredWeight { aspect, weight };
    if !(0.0..=1.0).contains(&weight) {
        return Err(uncovered);
    }
    let levels = model.levels(aspect);
    levels
        .iter()
        .enumerate()
        .find(|(i, l)| l.lo <= weight && (weight < l.hi || (*i == levels.len() - 1 && weight <= l.hi)))
        .map(|(index, level)| LevelChoice { index, level })
        .ok_or(uncovered)
}

/// Estimated time to clean `violations` units with the given method.
pub fn cleaning_cost(level: &CleaningLevel, _k: f64, _cell_total: usize, violations: f64) -> f64 {
    level.cost_coefficient * violations
}

/// Per-aspect score `F_i = K_i - gamma * cost / D`.
pub fn aspect_score(
    k: f64,
    violations: f64,
    cell_total: usize,
    aspect: Aspect,
    weight: f64,
    model: &CleaningCostModel,
    gamma: f64,
) -> Result<f64> {
    if cell_total == 0 {
        return Err(PricingError::ZeroCellTotal);
    }
    let level = select_level(model, aspect, weight)?.level;
    Ok(k - gamma * cleaning_cost(level, k, cell_total, violations) / cell_total as f64)
}

fn integrate(
    scores: [f64; 4],
    violations: [f64; 4],
    cell_total: usize,
    weights: [f64; 4],
    model: &CleaningCostModel,
    gamma: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for aspect in Aspect::ALL {
        let i = aspect.index();
        total += aspect_score(scores[i], violations[i], cell_total, aspect, weights[i], model, gamma)? * weights[i];
    }
    Ok(total)
}

/// Integrated quality of an instance for one buyer.
pub fn fq(profile: &QualityProfile, w: &WeightVector, model: &CleaningCostModel, params: &MarketParams) -> Result<f64> {
    let violations = Aspect::ALL.map(|a| profile.violations(a) as f64);
    integrate(profile.k, violations, profile.cell_total, w.as_array(), model, params.gamma)
}

/// Integrated baseline quality for the same buyer and instance size.
///
/// Under [`BaselineMode::SubstituteK`] the violation count paired with each
/// standard score is the one its ratio `10^-S_i` implies over `D` cells.
pub fn fq_standard(
    params: &MarketParams,
    w: &WeightVector,
    model: &CleaningCostModel,
    profile: &QualityProfile,
) -> Result<f64> {
    let d = profile.cell_total;
    match params.baseline_mode {
        BaselineMode::SubstituteK => {
            let implied = params.standard.map(|s| 10f64.powf(-s) * d as f64);
            integrate(params.standard, implied, d, w.as_array(), model, params.gamma)
        }
        BaselineMode::SubstituteW => {
            let sum: f64 = params.standard.iter().sum();
            if sum <= 0.0 {
                return Err(PricingError::ZeroBaseline(sum));
            }
            let weights = WeightVector::normalized(params.standard)?;
            fq(profile, &weights, model, params)
        }
    }
}

/// Market baseline: the per-aspect mean K over every listed instance.
pub fn compute_market_baseline<'a>(profiles: impl IntoIterator<Item = &'a QualityProfile>) -> Result<[f64; 4]> {
    let mut sum = [0.0; 4];
    let mut count = 0usize;
    for p in profiles {
        for (s, k) in sum.iter_mut().zip(p.k) {
            *s += k;
        }
        count += 1;
    }
    if count == 0 {
        return Err(PricingError::EmptyMarket);
    }
    Ok(sum.map(|s| s / count as f64))
}

/// A floated price. Negative results are clamped to zero and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floated {
    pub price: f64,
    pub clamped: bool,
}

impl Floated {
    fn from_raw(v: f64) -> Self {
        if v < 0.0 {
            Floated { price: 0.0, clamped: true }
        } else {
            Floated { price: v, clamped: false }
        }
    }
}

pub fn float_additive(p: f64, fq: f64, fq_s: f64, e: f64) -> Floated {
    Floated::from_raw(p + (fq - fq_s) * e)
}

pub fn float_multiplicative(p: f64, fq: f64, fq_s: f64) -> Result<Floated> {
    if fq_s <= 0.0 {
        return Err(PricingError::ZeroBaseline(fq_s));
    }
    Ok(Floated::from_raw(fq / fq_s * p))
}

pub fn float_combined(p: f64, fq: f64, fq_s: f64, c: f64) -> Result<Floated> {
    if fq_s <= 0.0 {
        return Err(PricingError::ZeroBaseline(fq_s));
    }
    Ok(Floated::from_raw(p + (fq - fq_s) / fq_s * p * c))
}

/// Everything that went into one final price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBreakdown {
    pub base: f64,
    pub fq: f64,
    pub fq_standard: f64,
    pub floated: Floated,
}

/// Base price -> combined floating, as charged by the market.
pub fn final_price(
    base: f64,
    profile: &QualityProfile,
    w: &WeightVector,
    model: &CleaningCostModel,
    params: &MarketParams,
) -> Result<PriceBreakdown> {
    let fq_v = fq(profile, w, model, params)?;
    let fq_s = fq_standard(params, w, model, profile)?;
    Ok(PriceBreakdown {
        base,
        fq: fq_v,
        fq_standard: fq_s,
        floated: float_combined(base, fq_v, fq_s, params.c)?,
    })
}

/// Weight-range advice table: one block per aspect, one line per level.
pub fn weight_guide(model: &CleaningCostModel) -> String {
    let mut out = String::new();
    for aspect in Aspect::ALL {
        let levels = model.levels(aspect);
        let _ = writeln!(out, "{}", aspect.name());
        for (i, l) in levels.iter().enumerate() {
            let close = if i == levels.len() - 1 { ']' } else { ')' };
            let _ = writeln!(out, "  {}. [{:.2}, {:.2}{close}  {}", i + 1, l.lo, l.hi, l.method);
        }
    }
    out
}

/// Upper bound on `|p_final - p| / p` with the cost penalty disabled and
/// every score in `[0, k_max]`.
pub fn relative_floating_bound(c: f64, fq_s: f64, k_max: f64) -> f64 {
    c * k_max / fq_s
}
