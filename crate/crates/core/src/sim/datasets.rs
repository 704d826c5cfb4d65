//! Synthetic "desk" datasets shaped like the five evaluation tables, plus the
//! three-row university sample used by the protocol demo.
//!
//! Every generator is deterministic in its seed. Defects are injected at
//! fixed per-dataset rates so the four aspects score differently.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::VendorDataset;
use crate::quality::{Dependency, Domain, QualityRuleSet};
use crate::relation::{read_csv, AttrType, AttributeDecl, PricePoint, Relation, RelationError};

pub const TABLE1_CSV: &str = "\
Uname,Location,Country,Country_Code,Apply_Deadline,Min_Score
Uni_A,New York,US,001,2013-Dec-25,90
Uni_B,London,UK,0044,12/12/2013,85
Uni_C,New York,US,002,,3.5
";

pub fn table1_schema() -> Vec<AttributeDecl> {
    vec![
        AttributeDecl::new("Uname", AttrType::Text),
        AttributeDecl::new("Location", AttrType::Text),
        AttributeDecl::new("Country", AttrType::Text),
        AttributeDecl::new("Country_Code", AttrType::Text),
        AttributeDecl::new("Apply_Deadline", AttrType::Text),
        AttributeDecl::new("Min_Score", AttrType::Real),
    ]
}

pub fn table1_rules() -> QualityRuleSet {
    QualityRuleSet {
        patterns: [("Apply_Deadline".to_string(), r"\d{4}-[A-Za-z]{3}-\d{2}".to_string())].into(),
        domains: [("Min_Score".to_string(), Domain::interval(60.0, 100.0))].into(),
        n_min: 2,
        necessary_attrs: vec!["Uname".into(), "Country".into()],
        dependencies: vec![Dependency::fd(["Country"], "Country_Code")],
        ..Default::default()
    }
}

pub fn table1() -> Relation {
    read_csv("university", TABLE1_CSV.as_bytes(), &table1_schema()).expect("embedded sample parses")
}

/// The sample university table priced at a flat 3 per query.
pub fn table1_vendor() -> VendorDataset {
    VendorDataset {
        relation: table1(),
        price_point: PricePoint::new("university", 0.0, 3.0).expect("valid fees"),
        rules: table1_rules(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeskKind {
    University,
    Weather,
    Country,
    Gdp,
    Philanthropy,
}

impl DeskKind {
    pub const ALL: [DeskKind; 5] = [
        DeskKind::University,
        DeskKind::Weather,
        DeskKind::Country,
        DeskKind::Gdp,
        DeskKind::Philanthropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeskKind::University => "university",
            DeskKind::Weather => "weather",
            DeskKind::Country => "country",
            DeskKind::Gdp => "gdp",
            DeskKind::Philanthropy => "philanthropy",
        }
    }

    /// Row counts of the evaluation tables.
    pub fn default_rows(self) -> usize {
        match self {
            DeskKind::University => 590,
            DeskKind::Weather => 20_750,
            DeskKind::Country => 206,
            DeskKind::Gdp => 72_900,
            DeskKind::Philanthropy => 2_798,
        }
    }

    pub fn columns(self) -> usize {
        spec(self).cols.len()
    }
}

/// Fixed reference instant for generated timestamps.
pub fn desk_now() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2015, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

const CITIES: &[&str] = &[
    "New York", "London", "Boston", "Paris", "Berlin", "Tokyo", "Sydney", "Toronto", "Harbin", "Madrid", "Rome",
    "Seoul",
];
const COUNTRIES: &[&str] = &["US", "UK", "FR", "DE", "JP", "AU", "CA", "CN", "ES", "IT", "KR"];
const REGIONS: &[&str] = &["North", "South", "East", "West", "Central", "Coast", "Highland", "Valley"];
const WIND: &[&str] = &["N", "NE", "E", "SE", "S", "SW", "W", "NW"];
const SOURCES: &[&str] = &["manual", "automatic", "satellite"];
const CONTINENTS: &[&str] = &["Africa", "Asia", "Europe", "North America", "South America", "Oceania"];
const CURRENCIES: &[&str] = &["Dollar", "Euro", "Peso", "Franc", "Rupee", "Dinar", "Krona", "Shilling"];
const ZONES: &[&str] = &["UTC-8", "UTC-5", "UTC+0", "UTC+1", "UTC+3", "UTC+5:30", "UTC+8", "UTC+10"];
const SIDES: &[&str] = &["left", "right"];
const LANGUAGES: &[&str] = &["English", "Spanish", "French", "Arabic", "Mandarin", "Portuguese", "Swahili"];
const STATES: &[&str] = &[
    "Alabama", "Alaska", "Arizona", "California", "Colorado", "Florida", "Georgia", "Illinois", "Iowa", "Maine",
    "Nevada", "Ohio", "Oregon", "Texas", "Utah", "Vermont", "Virginia", "Washington",
];
const INDUSTRIES: &[&str] = &[
    "Agriculture", "Mining", "Utilities", "Construction", "Manufacturing", "Wholesale", "Retail", "Transport",
    "Information", "Finance", "Real estate", "Education", "Health", "Arts", "Government",
];
const UNITS: &[&str] = &["millions of current dollars"];
const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ra", "ton", "vel", "sa", "qui", "bor", "den", "fa", "lu"];

#[derive(Clone, Copy)]
enum Gen {
    /// Unique per row.
    Key(&'static str),
    Pick(&'static [&'static str]),
    Int(i64, i64),
    Real(f64, f64),
    Date(i32, i32),
    /// 31 December of a year in the range; a timestamp attribute.
    YearEnd(i32, i32),
    /// Timestamp within the last 300 days.
    Fresh,
    /// A function of another column: the right-hand side of an FD.
    Derived(usize, &'static str),
    Word,
    Url,
}

struct Col {
    name: &'static str,
    gen: Gen,
}

const fn col(name: &'static str, gen: Gen) -> Col {
    Col { name, gen }
}

/// Per-cell defect probabilities.
#[derive(Debug, Clone, Copy)]
struct Defects {
    missing: f64,
    inaccurate: f64,
    stale: f64,
    conflict: f64,
}

struct Spec {
    cols: Vec<Col>,
    necessary: [&'static str; 2],
    n_min: u64,
    expiry_days: f64,
    defects: Defects,
    per_tuple_fee: f64,
    flat_fee: f64,
    queries: Vec<&'static str>,
}

fn spec(kind: DeskKind) -> Spec {
    use Gen::*;
    match kind {
        DeskKind::University => Spec {
            cols: vec![
                col("Uname", Key("Uni_")),
                col("City", Pick(CITIES)),
                col("Region", Derived(1, "R")),
                col("Country", Pick(COUNTRIES)),
                col("Country_Code", Derived(3, "0")),
                col("Apply_Deadline", Date(2013, 2015)),
                col("Min_Score", Real(60.0, 100.0)),
                col("Students", Int(500, 60_000)),
                col("Founded", Int(1100, 2010)),
                col("Website", Url),
                col("Ranking", Int(1, 600)),
                col("Updated", Fresh),
            ],
            necessary: ["Uname", "Country"],
            n_min: 200,
            expiry_days: 365.0,
            defects: Defects {
                missing: 0.02,
                inaccurate: 0.01,
                stale: 0.05,
                conflict: 0.01,
            },
            per_tuple_fee: 0.01,
            flat_fee: 5.0,
            queries: vec!["university", "university: Country = US", "university: Min_Score >= 80"],
        },
        DeskKind::Weather => Spec {
            cols: vec![
                col("Station", Key("WS")),
                col("Station_Name", Word),
                col("Region", Pick(REGIONS)),
                col("Region_Code", Derived(2, "RC")),
                col("Date", Date(2000, 2014)),
                col("Max_Temp", Real(-30.0, 45.0)),
                col("Min_Temp", Real(-40.0, 35.0)),
                col("Mean_Temp", Real(-35.0, 40.0)),
                col("Rain_mm", Real(0.0, 300.0)),
                col("Snow_cm", Real(0.0, 200.0)),
                col("Humidity", Int(0, 100)),
                col("Pressure_hPa", Real(950.0, 1050.0)),
                col("Wind_Speed", Real(0.0, 150.0)),
                col("Wind_Dir", Pick(WIND)),
                col("Visibility_km", Real(0.0, 50.0)),
                col("Source", Pick(SOURCES)),
                col("Recorded_At", Fresh),
            ],
            necessary: ["Station", "Mean_Temp"],
            n_min: 1000,
            expiry_days: 180.0,
            defects: Defects {
                missing: 0.005,
                inaccurate: 0.002,
                stale: 0.3,
                conflict: 0.001,
            },
            per_tuple_fee: 0.0005,
            flat_fee: 8.0,
            queries: vec!["weather", "weather: Region = North", "weather: Max_Temp > 30"],
        },
        DeskKind::Country => Spec {
            cols: vec![
                col("Name", Key("Country_")),
                col("Continent", Pick(CONTINENTS)),
                col("Continent_Code", Derived(1, "CT")),
                col("Currency", Pick(CURRENCIES)),
                col("Currency_Code", Derived(3, "CU")),
                col("Capital", Word),
                col("Population", Int(10_000, 1_400_000_000)),
                col("Area_km2", Real(1.0, 17_000_000.0)),
                col("GDP_USD", Real(1e7, 2e13)),
                col("GDP_Growth", Real(-10.0, 15.0)),
                col("Inflation", Real(-5.0, 50.0)),
                col("Life_Expectancy", Real(40.0, 90.0)),
                col("Literacy", Real(10.0, 100.0)),
                col("Internet_Users", Real(0.0, 100.0)),
                col("Calling_Code", Int(1, 999)),
                col("Time_Zone", Pick(ZONES)),
                col("Driving_Side", Pick(SIDES)),
                col("Official_Language", Pick(LANGUAGES)),
                col("Independence", Date(1800, 2011)),
                col("Elevation_m", Int(0, 8848)),
                col("Coastline_km", Real(0.0, 250_000.0)),
                col("Forest_Pct", Real(0.0, 100.0)),
                col("Urban_Pct", Real(0.0, 100.0)),
                col("CO2_Tonnes", Real(0.0, 1e10)),
                col("Website", Url),
                col("Census_Year", Int(1950, 2014)),
                col("Updated", Fresh),
            ],
            necessary: ["Name", "Continent"],
            n_min: 150,
            expiry_days: 730.0,
            defects: Defects {
                missing: 0.05,
                inaccurate: 0.02,
                stale: 0.1,
                conflict: 0.02,
            },
            per_tuple_fee: 0.02,
            flat_fee: 2.0,
            queries: vec!["country", "country: Continent = Europe", "country: Population > 50000000"],
        },
        DeskKind::Gdp => Spec {
            cols: vec![
                col("State", Pick(STATES)),
                col("State_Code", Derived(0, "ST")),
                col("Industry", Pick(INDUSTRIES)),
                col("Industry_Code", Derived(2, "IND")),
                col("Year", Int(1997, 2011)),
                col("GDP_Millions", Real(0.0, 500_000.0)),
                col("Unit", Pick(UNITS)),
                col("Published", Fresh),
            ],
            necessary: ["State", "GDP_Millions"],
            n_min: 5000,
            expiry_days: 365.0,
            defects: Defects {
                missing: 0.001,
                inaccurate: 0.0005,
                stale: 0.02,
                conflict: 0.0005,
            },
            per_tuple_fee: 0.0001,
            flat_fee: 10.0,
            queries: vec!["gdp", "gdp: State = Texas", "gdp: Year >= 2008"],
        },
        DeskKind::Philanthropy => Spec {
            cols: vec![
                col("Year", YearEnd(2004, 2010)),
                col("Rank", Int(1, 400)),
                col("OrganizationID", Key("ORG")),
                col("OrganizationName", Word),
                col("OrganizationLocation", Pick(CITIES)),
                col("PrivateIncome", Real(0.0, 4e9)),
                col("TotalAssets", Real(0.0, 3e10)),
                col("ServiceExpense", Real(0.0, 4e9)),
                col("Fundraising", Real(0.0, 4e8)),
            ],
            necessary: ["OrganizationName", "Fundraising"],
            n_min: 200,
            expiry_days: 6.0 * 365.0,
            defects: Defects {
                missing: 0.01,
                inaccurate: 0.005,
                stale: 0.0,
                conflict: 0.0,
            },
            per_tuple_fee: 0.002,
            flat_fee: 4.0,
            queries: vec![
                "philanthropy",
                "philanthropy: Rank <= 100",
                "philanthropy: OrganizationLocation = Boston",
            ],
        },
    }
}

fn attr_type(g: Gen) -> AttrType {
    match g {
        Gen::Int(..) => AttrType::Integer,
        Gen::Real(..) => AttrType::Real,
        Gen::Date(..) => AttrType::Date,
        Gen::YearEnd(..) | Gen::Fresh => AttrType::Timestamp,
        Gen::Key(_) | Gen::Pick(_) | Gen::Derived(..) | Gen::Word | Gen::Url => AttrType::Text,
    }
}

fn is_temporal(g: Gen) -> bool {
    matches!(g, Gen::YearEnd(..) | Gen::Fresh)
}

/// Columns with an accuracy rule beyond "any text".
fn has_accuracy_rule(g: Gen) -> bool {
    !matches!(g, Gen::Key(_) | Gen::Derived(..) | Gen::Word)
}

fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(1469598103934665603u64, |h, b| (h ^ b as u64).wrapping_mul(1099511628211))
}

fn derived_value(prefix: &str, source: &str) -> String {
    format!("{prefix}{:03}", stable_hash(source) % 1000)
}

fn word<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=4);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    if let Some(c) = w.get_mut(0..1) {
        c.make_ascii_uppercase();
    }
    w
}

fn fmt_stamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

fn clean_value<R: Rng>(g: Gen, row: usize, prev: &[Option<String>], now: NaiveDateTime, rng: &mut R) -> String {
    match g {
        Gen::Key(prefix) => format!("{prefix}{:06}", row + 1),
        Gen::Pick(values) => values.choose(rng).expect("non-empty").to_string(),
        Gen::Int(lo, hi) => rng.gen_range(lo..=hi).to_string(),
        Gen::Real(lo, hi) => format!("{:.2}", rng.gen_range(lo..=hi)),
        Gen::Date(y0, y1) => {
            let d = NaiveDate::from_ymd_opt(rng.gen_range(y0..=y1), rng.gen_range(1..=12), rng.gen_range(1..=28))
                .expect("valid date");
            d.format("%Y-%m-%d").to_string()
        }
        Gen::YearEnd(y0, y1) => format!("{}-12-31 00:00:00", rng.gen_range(y0..=y1)),
        Gen::Fresh => fmt_stamp(now - Duration::minutes(rng.gen_range(0..300 * 24 * 60))),
        Gen::Derived(src, prefix) => derived_value(prefix, prev[src].as_deref().unwrap_or("")),
        Gen::Word => word(rng),
        Gen::Url => format!("https://www.{}.org", word(rng).to_ascii_lowercase()),
    }
}

fn broken_value(g: Gen) -> String {
    match g {
        Gen::Int(..) | Gen::Real(..) => "#N/A".into(),
        Gen::Date(..) | Gen::YearEnd(..) | Gen::Fresh => "31/13/2013".into(),
        Gen::Pick(_) => "UNKNOWN".into(),
        Gen::Url => "www example".into(),
        Gen::Key(_) | Gen::Derived(..) | Gen::Word => unreachable!("no accuracy rule"),
    }
}

fn rules_for(s: &Spec) -> QualityRuleSet {
    let mut rules = QualityRuleSet {
        n_min: s.n_min,
        necessary_attrs: s.necessary.iter().map(|a| a.to_string()).collect(),
        ..Default::default()
    };
    for c in &s.cols {
        let name = c.name.to_string();
        match c.gen {
            Gen::Pick(values) => {
                rules.domains.insert(
                    name,
                    Domain::Values {
                        values: values.iter().map(|v| v.to_string()).collect(),
                    },
                );
            }
            Gen::Int(lo, hi) => {
                rules.domains.insert(name, Domain::interval(lo as f64, hi as f64));
            }
            Gen::Real(lo, hi) => {
                rules.domains.insert(name, Domain::interval(lo, hi));
            }
            Gen::Url => {
                rules.patterns.insert(name, r"https?://[a-z0-9.-]+".into());
            }
            Gen::Derived(src, _) => rules.dependencies.push(Dependency::fd([s.cols[src].name], c.name)),
            Gen::YearEnd(..) | Gen::Fresh => {
                rules.expiry_days.insert(name, s.expiry_days);
            }
            Gen::Key(_) | Gen::Date(..) | Gen::Word => {}
        }
    }
    rules
}

/// One generated dataset with its rules, price point and query battery.
#[derive(Debug, Clone)]
pub struct DeskDataset {
    pub kind: DeskKind,
    pub vendor: VendorDataset,
    pub queries: Vec<String>,
}

pub fn desk_schema(kind: DeskKind) -> Vec<AttributeDecl> {
    spec(kind)
        .cols
        .iter()
        .map(|c| {
            if is_temporal(c.gen) {
                AttributeDecl::timestamped(c.name, attr_type(c.gen))
            } else {
                AttributeDecl::new(c.name, attr_type(c.gen))
            }
        })
        .collect()
}

pub fn desk_rules(kind: DeskKind) -> QualityRuleSet {
    rules_for(&spec(kind))
}

pub fn desk_price_point(kind: DeskKind) -> PricePoint {
    let s = spec(kind);
    PricePoint::new(kind.name(), s.per_tuple_fee, s.flat_fee).expect("valid fees")
}

pub fn desk_queries(kind: DeskKind) -> Vec<String> {
    spec(kind).queries.iter().map(|q| q.to_string()).collect()
}

/// Raw text rows; `None` is a missing cell.
pub fn generate_rows(kind: DeskKind, rows: usize, seed: u64) -> Vec<Vec<Option<String>>> {
    let s = spec(kind);
    let now = desk_now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(kind.name()));
    let d = s.defects;
    (0..rows)
        .map(|r| {
            let mut row: Vec<Option<String>> = Vec::with_capacity(s.cols.len());
            for c in &s.cols {
                let mut v = clean_value(c.gen, r, &row, now, &mut rng);
                if matches!(c.gen, Gen::Fresh) && rng.gen_bool(d.stale) {
                    let age = s.expiry_days as i64 + rng.gen_range(1..1000);
                    v = fmt_stamp(now - Duration::days(age));
                }
                if let Gen::Derived(_, prefix) = c.gen {
                    if rng.gen_bool(d.conflict) {
                        v = format!("{prefix}X{:03}", rng.gen_range(0..1000));
                    }
                }
                if has_accuracy_rule(c.gen) && rng.gen_bool(d.inaccurate) {
                    v = broken_value(c.gen);
                }
                let keep = matches!(c.gen, Gen::Key(_)) || !rng.gen_bool(d.missing);
                row.push(keep.then_some(v));
            }
            row
        })
        .collect()
}

pub fn generate(kind: DeskKind, rows: usize, seed: u64) -> Result<DeskDataset, RelationError> {
    let raw = generate_rows(kind, rows, seed);
    let text: Vec<Vec<&str>> = raw
        .iter()
        .map(|r| r.iter().map(|c| c.as_deref().unwrap_or("")).collect())
        .collect();
    let relation = Relation::from_text_rows(kind.name(), desk_schema(kind), &text)?;
    Ok(DeskDataset {
        kind,
        vendor: VendorDataset {
            relation,
            price_point: desk_price_point(kind),
            rules: desk_rules(kind),
        },
        queries: desk_queries(kind),
    })
}

/// All five at their evaluation-table sizes.
pub fn desk_suite(seed: u64) -> Vec<DeskDataset> {
    DeskKind::ALL
        .iter()
        .map(|&k| generate(k, k.default_rows(), seed).expect("generated rows match the schema"))
        .collect()
}
