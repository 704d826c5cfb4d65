//! Relational datasets: schema, CSV ingestion, conjunctive selection queries
//! and vendor price points.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row} has {found} cells, schema has {expected}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("query targets relation `{query}` but was run against `{relation}`")]
    RelationMismatch { query: String, relation: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid price point: {0}")]
    InvalidPricePoint(String),
}

pub type Result<T> = std::result::Result<T, RelationError>;

/// Declared attribute type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrType {
    Integer,
    Real,
    Text,
    Date,
    Timestamp,
}

impl AttrType {
    /// Parses `raw` as this type. `None` means the text is not a value of the type.
    pub fn parse(self, raw: &str) -> Option<Value> {
        let s = raw.trim();
        match self {
            AttrType::Integer => s.parse().ok().map(Value::Integer),
            AttrType::Real => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Value::Real),
            AttrType::Text => Some(Value::Text(raw.to_string())),
            AttrType::Date => NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(Value::Date),
            AttrType::Timestamp => parse_timestamp(s).map(Value::Timestamp),
        }
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, AttrType::Date | AttrType::Timestamp)
    }
}

/// ISO-8601 timestamp parsing. Accepts RFC 3339, naive `T`/space separated
/// forms and bare dates (midnight).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// A parsed cell value. `Unparsed` keeps text that did not parse as the
/// declared type; quality assessment counts it, ingestion does not reject it.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Integer(i64),
    Real(f64),
    Text(String),
    Date(NaiveDate),
    Timestamp(NaiveDateTime),
    Unparsed(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_instant(&self) -> Option<NaiveDateTime> {
        match self {
            Value::Date(d) => d.and_hms_opt(0, 0, 0),
            Value::Timestamp(t) => Some(*t),
            _ => None,
        }
    }

    fn partial_cmp_typed(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (Value::Timestamp(a), Value::Timestamp(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            _ => match (self.as_f64(), other.as_f64()) {
                (Some(a), Some(b)) => a.partial_cmp(&b),
                _ => None,
            },
        }
    }
}

/// A present (non-missing) cell: the original text plus its typed reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub raw: String,
    pub value: Value,
}

impl Cell {
    pub fn parse(raw: &str, ty: AttrType) -> Cell {
        let value = ty
            .parse(raw)
            .unwrap_or_else(|| Value::Unparsed(raw.to_string()));
        Cell {
            raw: raw.to_string(),
            value,
        }
    }

    pub fn is_unparsed(&self) -> bool {
        matches!(self.value, Value::Unparsed(_))
    }
}

/// `None` is a missing value.
pub type Row = Vec<Option<Cell>>;

/// One attribute declaration, as it appears in dataset configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AttrType,
    /// Marks the attribute as carrying effective timestamps for timeliness.
    #[serde(default)]
    pub timestamp: bool,
}

impl AttributeDecl {
    pub fn new(name: impl Into<String>, ty: AttrType) -> Self {
        AttributeDecl {
            name: name.into(),
            ty,
            timestamp: false,
        }
    }

    pub fn timestamped(name: impl Into<String>, ty: AttrType) -> Self {
        AttributeDecl {
            name: name.into(),
            ty,
            timestamp: true,
        }
    }
}

/// An ingested table: the unit of sale.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    name: String,
    attributes: Vec<AttributeDecl>,
    rows: Vec<Row>,
}

impl Relation {
    pub fn new(name: impl Into<String>, attributes: Vec<AttributeDecl>, rows: Vec<Row>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(RelationError::DuplicateAttribute(a.name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != attributes.len() {
                return Err(RelationError::RowArity {
                    row: i,
                    expected: attributes.len(),
                    found: row.len(),
                });
            }
        }
        Ok(Relation {
            name: name.into(),
            attributes,
            rows,
        })
    }

    /// Builds a relation from raw text rows; empty strings become missing cells.
    pub fn from_text_rows<S: AsRef<str>>(
        name: impl Into<String>,
        attributes: Vec<AttributeDecl>,
        rows: &[Vec<S>],
    ) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let ty = attributes.get(i).map_or(AttrType::Text, |a| a.ty);
                        parse_field(s.as_ref(), ty)
                    })
                    .collect()
            })
            .collect();
        Relation::new(name, attributes, parsed)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[AttributeDecl] {
        &self.attributes
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// m
    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    /// n
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn cell_total(&self) -> usize {
        self.arity() * self.len()
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn require_attr(&self, name: &str) -> Result<usize> {
        self.attr_index(name)
            .ok_or_else(|| RelationError::UnknownAttribute(name.to_string()))
    }

    pub fn timestamp_attrs(&self) -> impl Iterator<Item = (usize, &AttributeDecl)> {
        self.attributes.iter().enumerate().filter(|(_, a)| a.timestamp)
    }

    pub fn cell(&self, row: usize, attr: usize) -> Option<&Cell> {
        self.rows.get(row).and_then(|r| r.get(attr)).and_then(Option::as_ref)
    }

    /// Overwrites one cell, re-parsing under the declared type. Used to
    /// inject mistakes into a private copy of a relation.
    pub fn set_cell(&mut self, row: usize, attr: usize, raw: Option<&str>) {
        let ty = self.attributes[attr].ty;
        self.rows[row][attr] = raw.and_then(|s| parse_field(s, ty));
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Appends the rows of `self` again, doubling n.
    pub fn doubled(&self) -> Relation {
        let mut rows = self.rows.clone();
        rows.extend(self.rows.iter().cloned());
        Relation {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            rows,
        }
    }

    /// Writes the relation as CSV with a header row; missing cells are empty fields.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.attributes.iter().map(|a| a.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.as_ref().map_or("", |c| c.raw.as_str())))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_field(s: &str, ty: AttrType) -> Option<Cell> {
    if s.is_empty() {
        None
    } else {
        Some(Cell::parse(s, ty))
    }
}

/// Loads a CSV file whose header must list exactly the declared attribute names, in order.
pub fn load_csv(path: impl AsRef<Path>, schema: &[AttributeDecl]) -> Result<Relation> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path)?;
    read_csv(name, file, schema)
}

pub fn read_csv<R: Read>(name: impl Into<String>, input: R, schema: &[AttributeDecl]) -> Result<Relation> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let expected: Vec<String> = schema.iter().map(|a| a.name.clone()).collect();
    if header != expected {
        return Err(RelationError::HeaderMismatch {
            expected,
            found: header,
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != schema.len() {
            return Err(RelationError::RowArity {
                row: i,
                expected: schema.len(),
                found: record.len(),
            });
        }
        rows.push(
            record
                .iter()
                .zip(schema)
                .map(|(field, a)| parse_field(field, a.ty))
                .collect(),
        );
    }
    Relation::new(name, schema.to_vec(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "contains")]
    Contains,
}

impl Comparator {
    fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Contains => "contains",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Contains => unreachable!("contains is not an ordering test"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    pub op: Comparator,
    pub literal: String,
}

impl Predicate {
    pub fn new(attribute: impl Into<String>, op: Comparator, literal: impl Into<String>) -> Self {
        Predicate {
            attribute: attribute.into(),
            op,
            literal: literal.into(),
        }
    }

    /// Missing cells never satisfy a predicate. Typed comparison is used when
    /// both the cell and the literal parse under the attribute type, otherwise
    /// the raw strings are compared.
    fn matches(&self, cell: Option<&Cell>, ty: AttrType) -> bool {
        let Some(cell) = cell else { return false };
        if self.op == Comparator::Contains {
            return cell.raw.contains(&self.literal);
        }
        let typed = match (&cell.value, ty.parse(&self.literal)) {
            (Value::Unparsed(_), _) | (_, None) => None,
            (v, Some(lit)) => v.partial_cmp_typed(&lit),
        };
        let ord = typed.unwrap_or_else(|| cell.raw.as_str().cmp(self.literal.as_str()));
        self.op.holds(ord)
    }
}

/// A conjunctive selection with optional projection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionQuery {
    pub relation: String,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Vec<String>>,
}

impl SelectionQuery {
    pub fn all(relation: impl Into<String>) -> Self {
        SelectionQuery {
            relation: relation.into(),
            predicates: Vec::new(),
            projection: None,
        }
    }

    pub fn with(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }

    pub fn project<S: Into<String>>(mut self, attrs: impl IntoIterator<Item = S>) -> Self {
        self.projection = Some(attrs.into_iter().map(Into::into).collect());
        self
    }

    pub fn validate(&self, rel: &Relation) -> Result<()> {
        if self.relation != rel.name() {
            return Err(RelationError::RelationMismatch {
                query: self.relation.clone(),
                relation: rel.name().to_string(),
            });
        }
        for p in &self.predicates {
            rel.require_attr(&p.attribute)?;
        }
        for a in self.projection.iter().flatten() {
            rel.require_attr(a)?;
        }
        Ok(())
    }
}

impl fmt::Display for SelectionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.relation)?;
        for (i, p) in self.predicates.iter().enumerate() {
            let sep = if i == 0 { ": " } else { "; " };
            write!(f, "{sep}{} {} {}", p.attribute, p.op.symbol(), p.literal)?;
        }
        Ok(())
    }
}

/// Parses `relation[: attr op literal; attr op literal ...]`.
///
/// Operators: `=`, `!=`, `<`, `<=`, `>`, `>=`, `contains`. The literal is the
/// rest of the clause, trimmed.
impl FromStr for SelectionQuery {
    type Err = RelationError;

    fn from_str(s: &str) -> Result<Self> {
        let (rel, rest) = match s.split_once(':') {
            Some((r, rest)) => (r.trim(), Some(rest)),
            None => (s.trim(), None),
        };
        if rel.is_empty() {
            return Err(RelationError::InvalidQuery("missing relation name".into()));
        }
        let mut q = SelectionQuery::all(rel);
        for clause in rest.into_iter().flat_map(|r| r.split(';')) {
            let clause = clause.trim();
            if clause.is_empty() {
                continue;
            }
            q.predicates.push(parse_clause(clause)?);
        }
        Ok(q)
    }
}

fn parse_clause(clause: &str) -> Result<Predicate> {
    if let Some((a, lit)) = clause.split_once(" contains ") {
        return Ok(Predicate::new(a.trim(), Comparator::Contains, lit.trim()));
    }
    // two-character operators first
    for (sym, op) in [
        ("!=", Comparator::Ne),
        ("<=", Comparator::Le),
        (">=", Comparator::Ge),
        ("=", Comparator::Eq),
        ("<", Comparator::Lt),
        (">", Comparator::Gt),
    ] {
        if let Some((a, lit)) = clause.split_once(sym) {
            let a = a.trim();
            if a.is_empty() {
                break;
            }
            return Ok(Predicate::new(a, op, lit.trim()));
        }
    }
    Err(RelationError::InvalidQuery(format!("cannot parse clause `{clause}`")))
}

/// Rows selected by a query, projected.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl QueryResult {
    pub fn cardinality(&self) -> usize {
        self.rows.len()
    }

    /// Rows rendered as raw text (missing cells as empty strings).
    pub fn to_text_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|c| c.as_ref().map(|c| c.raw.clone()).unwrap_or_default()).collect())
            .collect()
    }
}

pub fn run_query(rel: &Relation, q: &SelectionQuery) -> Result<QueryResult> {
    q.validate(rel)?;
    let preds: Vec<(usize, AttrType, &Predicate)> = q
        .predicates
        .iter()
        .map(|p| {
            let idx = rel.attr_index(&p.attribute).expect("validated");
            (idx, rel.attributes()[idx].ty, p)
        })
        .collect();
    let proj: Vec<usize> = match &q.projection {
        Some(attrs) => attrs.iter().map(|a| rel.attr_index(a).expect("validated")).collect(),
        None => (0..rel.arity()).collect(),
    };
    let rows = rel
        .rows()
        .iter()
        .filter(|row| preds.iter().all(|(i, ty, p)| p.matches(row[*i].as_ref(), *ty)))
        .map(|row| proj.iter().map(|&i| row[i].clone()).collect())
        .collect();
    Ok(QueryResult {
        columns: proj.iter().map(|&i| rel.attributes()[i].name.clone()).collect(),
        rows,
    })
}

/// Vendor-set pricing for a relation: a flat fee plus a fee per result tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub relation: String,
    pub per_tuple_fee: f64,
    pub flat_fee: f64,
}

impl PricePoint {
    pub fn new(relation: impl Into<String>, per_tuple_fee: f64, flat_fee: f64) -> Result<Self> {
        let pp = PricePoint {
            relation: relation.into(),
            per_tuple_fee,
            flat_fee,
        };
        pp.validate()?;
        Ok(pp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.per_tuple_fee) || !ok(self.flat_fee) {
            return Err(RelationError::InvalidPricePoint(format!(
                "fees must be finite and non-negative (per_tuple={}, flat={})",
                self.per_tuple_fee, self.flat_fee
            )));
        }
        Ok(())
    }
}

/// Base (pre-floating) price of a result of `cardinality` tuples.
pub fn base_price(pp: &PricePoint, cardinality: usize) -> f64 {
    pp.flat_fee + pp.per_tuple_fee * cardinality as f64
}
