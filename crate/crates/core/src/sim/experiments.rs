//! The four evaluation experiments. Every run is a pure function of the
//! config (including its seed); only wall-clock fields vary between runs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LoadedDataset, MarketConfig};
use super::corrupt::{corrupt, CorruptionKind};
use super::stats::{self, Histogram};
use super::SimError;
use crate::pricing::{compute_market_baseline, final_price, MarketParams, WeightVector};
use crate::protocol::{flow, Market, MarketSetup, Mms, QuotePolicy};
use crate::quality::{assess_all, Aspect};
use crate::relation::{base_price, run_query, SelectionQuery};

const HISTOGRAM_BINS: usize = 20;
const PERMUTATION_ROUNDS: usize = 2000;
const BOOTSTRAP_ROUNDS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTiming {
    pub dataset: String,
    pub rows: usize,
    pub columns: usize,
    pub avg_preprocessing_secs: f64,
    /// Absent when the dataset has no query battery.
    pub avg_query_secs: Option<f64>,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub dataset: String,
    pub query: String,
    pub base_price: f64,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistakeCurve {
    pub dataset: String,
    pub query: String,
    /// Cells actually corrupted so far, one entry per point on the curve.
    pub corrupted: Vec<usize>,
    pub prices: Vec<f64>,
    pub k: Vec<[f64; 4]>,
    pub non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheatSummary {
    pub trials: usize,
    pub leak_mode: bool,
    /// Signed `p(W') - p(W)` per trial.
    pub informed: Vec<f64>,
    pub random: Vec<f64>,
    pub informed_mean: f64,
    pub random_mean: f64,
    pub mean_difference: f64,
    pub welch_t: f64,
    pub p_value: f64,
    /// 95th percentile of `|mean difference|` under the bootstrap null.
    pub null_threshold: f64,
}

impl CheatSummary {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Information-flow audit over every bus transcript an experiment produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowCheck {
    pub transcript_lines: usize,
    pub leaks: usize,
    pub leak_paths: Vec<String>,
    pub records: usize,
    pub records_verified: usize,
    pub balances_checked: usize,
    pub audit_flags: usize,
}

impl FlowCheck {
    fn scan(&mut self, market: &Market) {
        let leaks = flow::scan_transcript(&market.transcript_jsonl());
        self.transcript_lines += market.transcript().len();
        self.leaks += leaks.len();
        for l in leaks.into_iter().take(8usize.saturating_sub(self.leak_paths.len())) {
            self.leak_paths.push(format!("line {} to {}: {}", l.line, l.receiver, l.path));
        }
        self.audit_flags += market.ttp.audit_log().len();
    }

    fn merge(mut self, other: FlowCheck) -> FlowCheck {
        self.transcript_lines += other.transcript_lines;
        self.leaks += other.leaks;
        self.leak_paths.extend(other.leak_paths);
        self.leak_paths.truncate(8);
        self.records += other.records;
        self.records_verified += other.records_verified;
        self.balances_checked += other.balances_checked;
        self.audit_flags += other.audit_flags;
        self
    }

    pub fn holds(&self) -> bool {
        self.leaks == 0
            && self.audit_flags == 0
            && self.records_verified == self.records
            && self.balances_checked == self.records
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub optimized: bool,
}

impl EnvironmentStamp {
    pub fn current() -> Self {
        EnvironmentStamp {
            package_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
            optimized: !cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<DatasetTiming>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distributions: Vec<DistributionSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mistakes: Vec<MistakeCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cheat: Option<CheatSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowCheck>,
    pub environment: EnvironmentStamp,
}

impl ExperimentReport {
    fn new(experiment: &str, seed: u64) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            seed,
            timings: Vec::new(),
            distributions: Vec::new(),
            mistakes: Vec::new(),
            cheat: None,
            flow: None,
            environment: EnvironmentStamp::current(),
        }
    }

    /// The report without wall-clock timings or the environment stamp.
    pub fn numeric_payload(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("reports serialize");
        let obj = v.as_object_mut().expect("object");
        obj.remove("environment");
        if let Some(serde_json::Value::Array(rows)) = obj.get_mut("timings") {
            for row in rows {
                let row = row.as_object_mut().expect("object");
                row.remove("avg_preprocessing_secs");
                row.remove("avg_query_secs");
            }
        }
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn dataset_rng(seed: u64, salt: &str, index: usize) -> ChaCha8Rng {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in salt.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Market params with the standard resolved: the configured one, or the
/// mean profile over every configured dataset.
fn resolved_params(config: &MarketConfig, loaded: &[LoadedDataset]) -> Result<MarketParams, SimError> {
    let mut params = config.market_params();
    if config.market.standard.is_none() {
        let profiles = loaded
            .iter()
            .map(|d| assess_all(&d.vendor.relation, &d.vendor.rules, config.now))
            .collect::<Result<Vec<_>, _>>()?;
        params.standard = compute_market_baseline(&profiles)?;
    }
    Ok(params)
}

fn fixed_setup(config: &MarketConfig, params: MarketParams) -> MarketSetup {
    MarketSetup {
        params,
        fixed_standard: true,
        ..config.market_setup()
    }
}

/// A query for single-query experiments: the second battery entry if any,
/// else the first, else select-all.
fn pick_query(d: &LoadedDataset) -> String {
    d.queries
        .get(1)
        .or_else(|| d.queries.first())
        .cloned()
        .unwrap_or_else(|| d.name().to_string())
}

fn random_weights(rng: &mut ChaCha8Rng) -> WeightVector {
    WeightVector::normalized(stats::uniform_simplex(rng)).expect("simplex draws are positive")
}

/// Assessment time and mean query time per dataset. Datasets run one after
/// another so the measurements do not compete for cores.
pub fn run_timing(config: &MarketConfig) -> Result<ExperimentReport, SimError> {
    let loaded = config.load_datasets()?;
    let mut report = ExperimentReport::new("timing", config.seed);
    let mut profiles = Vec::with_capacity(loaded.len());
    for d in &loaded {
        let start = Instant::now();
        let profile = assess_all(&d.vendor.relation, &d.vendor.rules, config.now)?;
        let secs = start.elapsed().as_secs_f64();
        profiles.push(profile);
        report.timings.push(DatasetTiming {
            dataset: d.name().to_string(),
            rows: d.vendor.relation.len(),
            columns: d.vendor.relation.arity(),
            avg_preprocessing_secs: secs,
            avg_query_secs: None,
            queries: d.queries.len(),
        });
    }
    let mut params = config.market_params();
    if config.market.standard.is_none() {
        params.standard = compute_market_baseline(&profiles)?;
    }
    let w = WeightVector::uniform();
    for ((d, profile), row) in loaded.iter().zip(&profiles).zip(&mut report.timings) {
        if d.queries.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for q in &d.queries {
            let start = Instant::now();
            let parsed: SelectionQuery = q.parse()?;
            let result = run_query(&d.vendor.relation, &parsed)?;
            let base = base_price(&d.vendor.price_point, result.cardinality());
            final_price(base, profile, &w, &config.cost_model, &params)?;
            total += start.elapsed().as_secs_f64();
        }
        row.avg_query_secs = Some(total / d.queries.len() as f64);
    }
    Ok(report)
}

/// Prices one fixed query under `trials` random weight vectors per dataset.
/// Quotes go through the protocol; the first two are bought and audited.
pub fn run_distribution(config: &MarketConfig, trials: usize) -> Result<ExperimentReport, SimError> {
    if trials == 0 {
        return Err(SimError::Config("trials must be at least 1".into()));
    }
    let loaded = config.load_datasets()?;
    let params = resolved_params(config, &loaded)?;
    let results: Vec<(DistributionSummary, FlowCheck)> = loaded
        .par_iter()
        .enumerate()
        .map(|(i, d)| distribution_for(config, params.clone(), d, i, trials))
        .collect::<Result<_, SimError>>()?;
    let mut report = ExperimentReport::new("distribution", config.seed);
    let mut flow = FlowCheck::default();
    for (summary, f) in results {
        report.distributions.push(summary);
        flow = flow.merge(f);
    }
    report.flow = Some(flow);
    Ok(report)
}

fn distribution_for(
    config: &MarketConfig,
    params: MarketParams,
    d: &LoadedDataset,
    index: usize,
    trials: usize,
) -> Result<(DistributionSummary, FlowCheck), SimError> {
    const PURCHASES: usize = 2;
    let mut rng = dataset_rng(config.seed, "distribution", index);
    let mms = Mms::setup(vec![d.vendor.clone()], fixed_setup(config, params))?;
    let scale = mms.money_scale() as f64;
    let mut market = Market::new(mms, config.seed.wrapping_add(index as u64));
    let (slot, _) = market.register_buyer(QuotePolicy::Hold)?;
    let query = pick_query(d);
    let parsed: SelectionQuery = query.parse()?;
    let mut flow = FlowCheck::default();
    let mut samples = Vec::with_capacity(trials);
    let mut base = 0.0;
    for t in 0..trials {
        let w = random_weights(&mut rng);
        let priced = market.mms.price(&parsed, &w)?;
        samples.push(priced.breakdown.floated.price);
        base = priced.breakdown.base;
        let view = market.quote(slot, &query, w)?;
        if t < PURCHASES {
            market.recharge(slot, priced.price as f64 / scale)?;
            let receipt = market.agree(slot, view.session)?;
            flow.records += 1;
            if market.buyer(slot).verify(&receipt)? {
                flow.records_verified += 1;
            }
            if market.check_balance(slot, receipt.post_balance_cipher.clone())? {
                flow.balances_checked += 1;
            }
        } else {
            market.decline(slot, view.session)?;
        }
    }
    flow.scan(&market);
    let summary = DistributionSummary {
        dataset: d.name().to_string(),
        query,
        base_price: base,
        mean: stats::mean(&samples),
        variance: stats::variance(&samples),
        skewness: stats::skewness(&samples),
        histogram: Histogram::build(&samples, HISTOGRAM_BINS),
        samples,
    };
    Ok((summary, flow))
}

/// Corrupts `cells_per_step` cells per step, cycling the corruption kinds,
/// and re-prices select-all under uniform weights after each step.
pub fn run_mistakes(config: &MarketConfig, steps: usize, cells_per_step: usize) -> Result<ExperimentReport, SimError> {
    if steps == 0 {
        return Err(SimError::Config("steps must be at least 1".into()));
    }
    let loaded = config.load_datasets()?;
    let params = resolved_params(config, &loaded)?;
    let curves: Vec<MistakeCurve> = loaded
        .par_iter()
        .enumerate()
        .map(|(i, d)| mistakes_for(config, params.clone(), d, i, steps, cells_per_step))
        .collect::<Result<_, SimError>>()?;
    let mut report = ExperimentReport::new("mistakes", config.seed);
    report.mistakes = curves;
    Ok(report)
}

fn mistakes_for(
    config: &MarketConfig,
    params: MarketParams,
    d: &LoadedDataset,
    index: usize,
    steps: usize,
    cells_per_step: usize,
) -> Result<MistakeCurve, SimError> {
    let mut rng = dataset_rng(config.seed, "mistakes", index);
    let mut mms = Mms::setup(vec![d.vendor.clone()], fixed_setup(config, params))?;
    let query = d.name().to_string();
    let parsed: SelectionQuery = query.parse()?;
    let w = WeightVector::uniform();
    let mut rel = d.vendor.relation.clone();
    let mut done = 0usize;
    let mut corrupted = vec![0];
    let mut prices = vec![mms.price(&parsed, &w)?.breakdown.floated.price];
    let mut k = vec![mms.profile(&query).expect("listed").k];
    for step in 0..steps {
        for c in 0..cells_per_step {
            let kind = CorruptionKind::CYCLE[(step * cells_per_step + c) % CorruptionKind::CYCLE.len()];
            if corrupt(&mut rel, &d.vendor.rules, config.now, kind, &mut rng)? {
                done += 1;
            }
        }
        k.push(mms.update_relation(rel.clone())?.k);
        prices.push(mms.price(&parsed, &w)?.breakdown.floated.price);
        corrupted.push(done);
    }
    Ok(MistakeCurve {
        dataset: query.clone(),
        query,
        non_increasing: prices.windows(2).all(|p| p[1] <= p[0]),
        corrupted,
        prices,
        k,
    })
}

/// Compares an informed adversary against random guessing.
///
/// Each trial draws the buyer's true weights. The informed arm knows them,
/// probes the market with the four one-hot weight vectors and moves the
/// largest weights onto the aspects that looked cheapest. Without the debug
/// leak all it sees is ciphers and ranges, whose widths do not depend on the
/// weights, so its ranking is a coin toss. With the leak it ranks by the
/// plaintext prices and also keeps the true weights if those quote lower.
pub fn run_cheat(config: &MarketConfig, trials: usize) -> Result<ExperimentReport, SimError> {
    let mut report = ExperimentReport::new("cheat", config.seed);
    if trials == 0 {
        return Ok(report);
    }
    let loaded = config.load_datasets()?;
    let battery: Vec<(String, SelectionQuery)> = loaded
        .iter()
        .map(|d| {
            let q = d.queries.first().cloned().unwrap_or_else(|| d.name().to_string());
            q.parse().map(|p| (q, p))
        })
        .collect::<Result<_, _>>()?;
    let leak = config.leak_prices;
    let mms = Mms::setup(loaded.into_iter().map(|d| d.vendor).collect(), config.market_setup())?;
    let scale = mms.money_scale() as f64;
    let mut market = Market::new(mms, config.seed);
    let (slot, _) = market.register_buyer(QuotePolicy::Hold)?;
    let mut rng = dataset_rng(config.seed, "cheat", 0);
    let mut informed = Vec::with_capacity(trials);
    let mut random = Vec::with_capacity(trials);

    for t in 0..trials {
        let (query, parsed) = &battery[t % battery.len()];
        let truth = random_weights(&mut rng);
        let p_true = market.mms.price(parsed, &truth)?.price as f64 / scale;

        let mut scores = [0.0; 4];
        for aspect in Aspect::ALL {
            let view = market.quote(slot, query, WeightVector::one_hot(aspect))?;
            scores[aspect.index()] = match (leak, view.leaked_price) {
                (true, Some(p)) => p,
                _ => (view.range.width() * scale).round(),
            };
            market.decline(slot, view.session)?;
        }
        let mut order = [0usize, 1, 2, 3];
        order.shuffle(&mut rng);
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut mass = truth.as_array();
        mass.sort_by(|a, b| b.total_cmp(a));
        let mut claimed = [0.0; 4];
        for (rank, &aspect) in order.iter().enumerate() {
            claimed[aspect] = mass[rank];
        }
        let claimed = WeightVector::normalized(claimed)?;
        let mut p_informed = market.mms.price(parsed, &claimed)?.price as f64 / scale;
        if leak {
            for w in [claimed, truth] {
                let view = market.quote(slot, query, w)?;
                if let Some(p) = view.leaked_price {
                    p_informed = p_informed.min(p);
                }
                market.decline(slot, view.session)?;
            }
        }
        informed.push(p_informed - p_true);

        let guess = random_weights(&mut rng);
        random.push(market.mms.price(parsed, &guess)?.price as f64 / scale - p_true);
    }

    let mut flow = FlowCheck::default();
    flow.scan(&market);
    report.flow = Some(flow);
    let mut test_rng = dataset_rng(config.seed, "cheat-test", 0);
    report.cheat = Some(CheatSummary {
        trials,
        leak_mode: leak,
        informed_mean: stats::mean(&informed),
        random_mean: stats::mean(&random),
        mean_difference: stats::mean(&informed) - stats::mean(&random),
        welch_t: stats::welch_t(&informed, &random),
        p_value: stats::permutation_p_value(&informed, &random, PERMUTATION_ROUNDS, &mut test_rng),
        null_threshold: stats::bootstrap_null_threshold(&informed, &random, BOOTSTRAP_ROUNDS, 0.95, &mut test_rng),
        informed,
        random,
    });
    Ok(report)
}
