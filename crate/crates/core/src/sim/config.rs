use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::datasets::{self, desk_now, DeskKind};
use super::SimError;
use crate::groupcrypto::GroupProfile;
use crate::pricing::{BaselineMode, CleaningCostModel, MarketParams};
use crate::protocol::{Market, MarketSetup, Mms, VendorDataset};
use crate::quality::QualityRuleSet;
use crate::relation::{load_csv, AttributeDecl, PricePoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fees {
    pub per_tuple_fee: f64,
    pub flat_fee: f64,
}

/// One dataset: a CSV file with its schema, rules and fees, or a generated
/// desk table whose defaults can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<DeskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Vec<AttributeDecl>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<QualityRuleSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_point: Option<Fees>,
    /// Query battery, in `relation: attr op literal; ...` syntax.
    #[serde(default)]
    pub queries: Vec<String>,
}

impl DatasetConfig {
    pub fn generated(kind: DeskKind, rows: Option<usize>) -> Self {
        DatasetConfig {
            name: None,
            csv: None,
            generate: Some(kind),
            rows,
            schema: None,
            rules: None,
            price_point: None,
            queries: datasets::desk_queries(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSection {
    /// Standard scores; `null` means the mean market profile.
    #[serde(default = "default_standard")]
    pub standard: Option<[f64; 4]>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_e")]
    pub e: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub baseline_mode: BaselineMode,
}

fn default_standard() -> Option<[f64; 4]> {
    Some(MarketParams::default().standard)
}

fn default_c() -> f64 {
    MarketParams::default().c
}

fn default_e() -> f64 {
    MarketParams::default().e
}

impl Default for MarketSection {
    fn default() -> Self {
        let p = MarketParams::default();
        MarketSection {
            standard: Some(p.standard),
            c: p.c,
            e: p.e,
            gamma: p.gamma,
            baseline_mode: p.baseline_mode,
        }
    }
}

fn default_ttl() -> u64 {
    100
}

/// A complete market description; a fixed seed makes every run reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub cost_model: CleaningCostModel,
    #[serde(default)]
    pub group_profile: GroupProfile,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ttp_escrow: bool,
    #[serde(default = "desk_now")]
    pub now: NaiveDateTime,
    #[serde(default = "default_ttl")]
    pub session_ttl: u64,
    #[serde(default)]
    pub leak_prices: bool,
    /// Directory relative CSV paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A dataset ready for the market, with its query battery.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub vendor: VendorDataset,
    pub queries: Vec<String>,
}

impl LoadedDataset {
    pub fn name(&self) -> &str {
        self.vendor.relation.name()
    }
}

impl MarketConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: MarketConfig =
            serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// The five generated desk tables at full size under the default market.
    pub fn desk(seed: u64) -> Self {
        Self::desk_with_rows(seed, None)
    }

    /// Desk tables with every row count replaced by `rows`.
    pub fn desk_with_rows(seed: u64, rows: Option<usize>) -> Self {
        MarketConfig {
            datasets: DeskKind::ALL.iter().map(|&k| DatasetConfig::generated(k, rows)).collect(),
            market: MarketSection::default(),
            cost_model: CleaningCostModel::default(),
            group_profile: GroupProfile::Test,
            seed,
            ttp_escrow: false,
            now: desk_now(),
            session_ttl: default_ttl(),
            leak_prices: false,
            base_dir: PathBuf::new(),
        }
    }

    pub fn market_params(&self) -> MarketParams {
        MarketParams {
            standard: self.market.standard.unwrap_or([0.0; 4]),
            c: self.market.c,
            e: self.market.e,
            gamma: self.market.gamma,
            baseline_mode: self.market.baseline_mode,
        }
    }

    pub fn market_setup(&self) -> MarketSetup {
        MarketSetup {
            params: self.market_params(),
            fixed_standard: self.market.standard.is_some(),
            cost_model: self.cost_model.clone(),
            group: self.group_profile,
            seed: self.seed,
            ttp_escrow: self.ttp_escrow,
            now: self.now,
            session_ttl: self.session_ttl,
            leak_prices: self.leak_prices,
            ..MarketSetup::default()
        }
    }

    /// One market over every configured dataset, scheduled by `seed`.
    pub fn build_market(&self) -> Result<Market, SimError> {
        let vendors = self.load_datasets()?.into_iter().map(|d| d.vendor).collect();
        Ok(Market::new(Mms::setup(vendors, self.market_setup())?, self.seed))
    }

    pub fn load_datasets(&self) -> Result<Vec<LoadedDataset>, SimError> {
        if self.datasets.is_empty() {
            return Err(SimError::Config("no datasets configured".into()));
        }
        self.datasets.iter().map(|d| self.load_dataset(d)).collect()
    }

    fn load_dataset(&self, d: &DatasetConfig) -> Result<LoadedDataset, SimError> {
        match (&d.csv, d.generate) {
            (Some(_), Some(_)) => Err(SimError::Config("a dataset has both `csv` and `generate`".into())),
            (None, None) => Err(SimError::Config("a dataset needs `csv` or `generate`".into())),
            (None, Some(kind)) => {
                let rows = d.rows.unwrap_or_else(|| kind.default_rows());
                let gen = datasets::generate(kind, rows, self.seed)?;
                let mut vendor = gen.vendor;
                if let Some(name) = &d.name {
                    vendor.relation = vendor.relation.with_name(name.clone());
                    vendor.price_point.relation = name.clone();
                }
                if let Some(rules) = &d.rules {
                    vendor.rules = rules.clone();
                }
                if let Some(f) = &d.price_point {
                    vendor.price_point = PricePoint::new(vendor.relation.name(), f.per_tuple_fee, f.flat_fee)?;
                }
                let queries = if d.queries.is_empty() {
                    let name = vendor.relation.name().to_string();
                    gen.queries
                        .iter()
                        .map(|q| q.replacen(kind.name(), &name, 1))
                        .collect()
                } else {
                    d.queries.clone()
                };
                Ok(LoadedDataset { vendor, queries })
            }
            (Some(csv), None) => {
                let missing = |what: &str| SimError::Config(format!("{}: `{what}` is required", csv.display()));
                let schema = d.schema.as_ref().ok_or_else(|| missing("schema"))?;
                let rules = d.rules.clone().ok_or_else(|| missing("rules"))?;
                let fees = d.price_point.as_ref().ok_or_else(|| missing("price_point"))?;
                let path = if csv.is_absolute() { csv.clone() } else { self.base_dir.join(csv) };
                let mut relation = load_csv(&path, schema)?;
                if let Some(name) = &d.name {
                    relation = relation.with_name(name.clone());
                }
                let price_point = PricePoint::new(relation.name(), fees.per_tuple_fee, fees.flat_fee)?;
                Ok(LoadedDataset {
                    vendor: VendorDataset {
                        relation,
                        price_point,
                        rules,
                    },
                    queries: d.queries.clone(),
                })
            }
        }
    }
}
