//! Cohort data model, CSV ingestion, covariate discretization and joint
//! stratum construction.
//!
//! A [`CovariateSchema`] declares which columns are binned continuous
//! covariates and which are categorical, and fixes the order in which their
//! codes are concatenated into a [`StratumKey`]. Continuous bins are
//! left-closed and right-open, `[a, b)`, indexed from 1; categorical codes are
//! copied verbatim from the schema.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

/// A continuous covariate discretized by ascending cut points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpec {
    pub name: String,
    pub edges: Vec<f64>,
    /// Final bin extends to +infinity.
    #[serde(default)]
    pub last_open: bool,
}

impl ContinuousSpec {
    pub fn new(name: impl Into<String>, edges: Vec<f64>, last_open: bool) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            edges,
            last_open,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::Schema(format!(
                "continuous `{}` needs at least two edges",
                self.name
            )));
        }
        if self.edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Schema(format!(
                "continuous `{}` has a non-finite edge",
                self.name
            )));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schema(format!(
                "edges of `{}` must be strictly increasing",
                self.name
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1 + usize::from(self.last_open)
    }

    /// Returns the 1-based bin holding `value`.
    pub fn bin_value(&self, value: f64) -> Result<u32> {
        if !value.is_finite() {
            return Err(argument(format!(
                "non-finite value for `{}`",
                self.name
            )));
        }
        let first = self.edges[0];
        let last = *self.edges.last().expect("validated edges");
        let out_of_range = || Error::OutOfRange {
            variable: self.name.clone(),
            value,
            lower: first,
            upper: if self.last_open { f64::INFINITY } else { last },
            close: ')',
        };
        if value < first {
            return Err(out_of_range());
        }
        if value >= last {
            return if self.last_open {
                Ok(self.edges.len() as u32)
            } else {
                Err(out_of_range())
            };
        }
        // number of edges <= value, which is >= 1 here
        let idx = self.edges.partition_point(|&e| e <= value);
        Ok(idx as u32)
    }

    /// Human-readable interval for a 1-based bin, e.g. `55–60` or `≥30`.
    pub fn bin_label(&self, bin: u32) -> String {
        let i = bin as usize;
        if i == self.edges.len() && self.last_open {
            format!("≥{}", self.edges[i - 1])
        } else if (1..self.edges.len()).contains(&i) {
            format!("{}–{}", self.edges[i - 1], self.edges[i])
        } else {
            format!("bin {bin}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    pub code: u32,
}

/// A categorical covariate with an explicit label → code encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    pub levels: Vec<Level>,
}

impl CategoricalSpec {
    pub fn new(name: impl Into<String>, levels: &[(&str, u32)]) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            levels: levels
                .iter()
                .map(|&(label, code)| Level {
                    label: label.to_string(),
                    code,
                })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(Error::Schema(format!(
                "categorical `{}` needs at least two levels",
                self.name
            )));
        }
        let mut labels = HashSet::new();
        let mut codes = HashSet::new();
        for level in &self.levels {
            if !labels.insert(level.label.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate label `{}` in `{}`",
                    level.label, self.name
                )));
            }
            if !codes.insert(level.code) {
                return Err(Error::Schema(format!(
                    "duplicate code {} in `{}`",
                    level.code, self.name
                )));
            }
        }
        Ok(())
    }

    pub fn code_of(&self, label: &str) -> Option<u32> {
        self.levels.iter().find(|l| l.label == label).map(|l| l.code)
    }

    pub fn label_of(&self, code: u32) -> Option<&str> {
        self.levels
            .iter()
            .find(|l| l.code == code)
            .map(|l| l.label.as_str())
    }

    fn known_labels(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.label.clone()).collect()
    }
}

/// Borrowed view of one declared covariate.
#[derive(Debug, Clone, Copy)]
pub enum Variable<'a> {
    Continuous(&'a ContinuousSpec),
    Categorical(&'a CategoricalSpec),
}

impl<'a> Variable<'a> {
    pub fn name(&self) -> &'a str {
        match self {
            Variable::Continuous(c) => &c.name,
            Variable::Categorical(c) => &c.name,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Variable::Continuous(_))
    }

    /// Number of distinct key values this variable contributes.
    pub fn cardinality(&self) -> usize {
        match self {
            Variable::Continuous(c) => c.bin_count(),
            Variable::Categorical(c) => c.levels.len(),
        }
    }
}

/// Declarative description of the covariates that define strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    #[serde(default)]
    pub continuous: Vec<ContinuousSpec>,
    #[serde(default)]
    pub categorical: Vec<CategoricalSpec>,
    pub label_order: Vec<String>,
}

impl CovariateSchema {
    pub fn new(
        continuous: Vec<ContinuousSpec>,
        categorical: Vec<CategoricalSpec>,
        label_order: Vec<String>,
    ) -> Result<Self> {
        let schema = Self {
            continuous,
            categorical,
            label_order,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.continuous {
            c.validate()?;
        }
        for c in &self.categorical {
            c.validate()?;
        }
        let mut names = HashSet::new();
        for name in self
            .continuous
            .iter()
            .map(|c| &c.name)
            .chain(self.categorical.iter().map(|c| &c.name))
        {
            if !names.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable name `{name}`")));
            }
        }
        if names.is_empty() {
            return Err(Error::Schema("schema declares no covariates".into()));
        }
        let order: HashSet<&str> = self.label_order.iter().map(String::as_str).collect();
        if order.len() != self.label_order.len() || order != names {
            return Err(Error::Schema(
                "label_order must list every declared variable exactly once".into(),
            ));
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<Variable<'_>> {
        self.continuous
            .iter()
            .find(|c| c.name == name)
            .map(Variable::Continuous)
            .or_else(|| {
                self.categorical
                    .iter()
                    .find(|c| c.name == name)
                    .map(Variable::Categorical)
            })
    }

    /// Variables in label order.
    pub fn variables(&self) -> impl Iterator<Item = Variable<'_>> {
        self.label_order
            .iter()
            .map(|n| self.variable(n).expect("validated label_order"))
    }

    pub fn len(&self) -> usize {
        self.label_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_order.is_empty()
    }

    /// Number of possible joint labels: product of level and bin counts.
    pub fn key_space_size(&self) -> u128 {
        self.variables().map(|v| v.cardinality() as u128).product()
    }
}

/// Joint demographic label: one integer per covariate in label order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StratumKey(pub Vec<u32>);

impl StratumKey {
    pub fn codes(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A single covariate value, categorical values already encoded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Continuous(f64),
    Categorical(u32),
}

impl Cell {
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Continuous(v) => v,
            Cell::Categorical(c) => f64::from(c),
        }
    }
}

/// One row of covariates (plus an optional identifier).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    pub id: Option<String>,
    pub values: BTreeMap<String, Cell>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, cell: Cell) -> Self {
        self.values.insert(name.to_string(), cell);
        self
    }

    pub fn continuous(self, name: &str, value: f64) -> Self {
        self.with(name, Cell::Continuous(value))
    }

    pub fn categorical(self, name: &str, code: u32) -> Self {
        self.with(name, Cell::Categorical(code))
    }
}

/// Builds the joint label of a record: categorical codes verbatim,
/// continuous values through [`ContinuousSpec::bin_value`].
pub fn label_record(schema: &CovariateSchema, record: &Record) -> Result<StratumKey> {
    schema
        .variables()
        .map(|var| {
            let cell = record
                .values
                .get(var.name())
                .ok_or_else(|| argument(format!("record lacks covariate `{}`", var.name())))?;
            match (var, *cell) {
                (Variable::Continuous(spec), Cell::Continuous(v)) => spec.bin_value(v),
                (Variable::Categorical(spec), Cell::Categorical(code)) => {
                    if spec.label_of(code).is_none() {
                        return Err(argument(format!(
                            "code {code} is not declared for `{}`",
                            spec.name
                        )));
                    }
                    Ok(code)
                }
                _ => Err(argument(format!(
                    "covariate `{}` has the wrong kind of value",
                    var.name()
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(StratumKey)
}

/// What a non-schema column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Covariate,
    Score,
    Outcome,
    Id,
}

pub type ColumnRoles = BTreeMap<String, ColumnRole>;

/// Roles for an `id` column, the given score columns and an outcome column.
pub fn roles(id: Option<&str>, scores: &[&str], outcome: Option<&str>) -> ColumnRoles {
    let mut map = ColumnRoles::new();
    if let Some(id) = id {
        map.insert(id.to_string(), ColumnRole::Id);
    }
    for s in scores {
        map.insert(s.to_string(), ColumnRole::Score);
    }
    if let Some(o) = outcome {
        map.insert(o.to_string(), ColumnRole::Outcome);
    }
    map
}

/// How rows whose continuous value falls outside the declared bins are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRangePolicy {
    /// Drop the row and record the reason in the load report.
    #[default]
    Exclude,
    /// Abort the load.
    Error,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub out_of_range: OutOfRangePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    /// 1-based line in the source file (the header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub total_rows: usize,
    pub included_rows: usize,
    pub excluded: Vec<Exclusion>,
}

impl LoadReport {
    pub fn excluded_count(&self) -> usize {
        self.excluded.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    fn get(&self, row: usize) -> Cell {
        match self {
            Column::Continuous(v) => Cell::Continuous(v[row]),
            Column::Categorical(v) => Cell::Categorical(v[row]),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Immutable in-memory table of included rows.
///
/// Rows are addressed by their index among included rows; excluded rows only
/// survive as entries of the [`LoadReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    name: String,
    len: usize,
    ids: Option<Vec<String>>,
    covariates: BTreeMap<String, Column>,
    scores: BTreeMap<String, Vec<f64>>,
    outcomes: BTreeMap<String, Vec<u8>>,
    report: LoadReport,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

enum RowOutcome {
    Keep,
    Exclude(String),
}

impl Cohort {
    /// Reads a cohort from CSV.
    pub fn load(
        path: impl AsRef<Path>,
        schema: &CovariateSchema,
        roles: &ColumnRoles,
        options: LoadOptions,
    ) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cohort".into());
        let file = std::fs::File::open(path)?;
        Self::from_reader(name, file, schema, roles, options)
    }

    pub fn from_reader<R: Read>(
        name: impl Into<String>,
        reader: R,
        schema: &CovariateSchema,
        roles: &ColumnRoles,
        options: LoadOptions,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let col = |name: &str| -> Result<usize> {
            index.get(name).copied().ok_or_else(|| Error::MissingColumn {
                column: name.to_string(),
            })
        };

        let vars: Vec<(Variable<'_>, usize)> = schema
            .variables()
            .map(|v| col(v.name()).map(|i| (v, i)))
            .collect::<Result<_>>()?;
        let mut id_col = None;
        let mut score_cols = Vec::new();
        let mut outcome_cols = Vec::new();
        for (name, role) in roles {
            match role {
                ColumnRole::Covariate => {
                    if schema.variable(name).is_none() {
                        return Err(Error::Schema(format!(
                            "`{name}` is marked as a covariate but not declared in the schema"
                        )));
                    }
                }
                ColumnRole::Id => {
                    if let Some(&i) = index.get(name.as_str()) {
                        id_col = Some(i);
                    }
                }
                ColumnRole::Score => score_cols.push((name.clone(), col(name)?)),
                ColumnRole::Outcome => outcome_cols.push((name.clone(), col(name)?)),
            }
        }

        let mut builder = Builder::new(schema, id_col.is_some(), &score_cols, &outcome_cols);
        let mut report = LoadReport::default();
        for result in rdr.records() {
            let rec = result?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            report.total_rows += 1;
            let mut cells = Vec::with_capacity(vars.len());
            let mut outcome = RowOutcome::Keep;
            for &(var, i) in &vars {
                let raw = rec.get(i).unwrap_or("");
                if is_missing(raw) {
                    outcome = RowOutcome::Exclude(format!("missing {}", var.name()));
                    break;
                }
                match var {
                    Variable::Continuous(spec) => {
                        let v: f64 = raw.parse().map_err(|_| Error::Parse {
                            line,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Parse {
                                line,
                                column: spec.name.clone(),
                                value: raw.to_string(),
                            });
                        }
                        if let Err(e) = spec.bin_value(v) {
                            match options.out_of_range {
                                OutOfRangePolicy::Error => return Err(e),
                                OutOfRangePolicy::Exclude => {
                                    outcome = RowOutcome::Exclude(format!(
                                        "{} {v} outside binned range",
                                        spec.name
                                    ));
                                    break;
                                }
                            }
                        }
                        cells.push(Cell::Continuous(v));
                    }
                    Variable::Categorical(spec) => {
                        let code = spec.code_of(raw).ok_or_else(|| Error::UnknownLevel {
                            line,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                            known: spec.known_labels(),
                        })?;
                        cells.push(Cell::Categorical(code));
                    }
                }
            }
            let mut scores = Vec::with_capacity(score_cols.len());
            if matches!(outcome, RowOutcome::Keep) {
                for (name, i) in &score_cols {
                    let raw = rec.get(*i).unwrap_or("");
                    if is_missing(raw) {
                        outcome = RowOutcome::Exclude(format!("missing {name}"));
                        break;
                    }
                    let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                        Error::Parse {
                            line,
                            column: name.clone(),
                            value: raw.to_string(),
                        }
                    })?;
                    scores.push(v);
                }
            }
            let mut outcomes = Vec::with_capacity(outcome_cols.len());
            if matches!(outcome, RowOutcome::Keep) {
                for (name, i) in &outcome_cols {
                    let raw = rec.get(*i).unwrap_or("");
                    if is_missing(raw) {
                        outcome = RowOutcome::Exclude(format!("missing {name}"));
                        break;
                    }
                    let v = match raw {
                        "0" => 0u8,
                        "1" => 1u8,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                column: name.clone(),
                                value: raw.to_string(),
                            })
                        }
                    };
                    outcomes.push(v);
                }
            }
            match outcome {
                RowOutcome::Exclude(reason) => report.excluded.push(Exclusion { line, reason }),
                RowOutcome::Keep => {
                    let id = id_col.map(|i| rec.get(i).unwrap_or("").to_string());
                    builder.push(id, &cells, &scores, &outcomes);
                }
            }
        }
        report.included_rows = builder.len;
        if builder.len == 0 {
            return Err(argument("cohort has no included rows"));
        }
        Ok(builder.finish(name.into(), report))
    }

    /// Builds a cohort from in-memory records; every schema covariate must be
    /// present in every record.
    pub fn from_records(
        name: impl Into<String>,
        schema: &CovariateSchema,
        records: &[Record],
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(argument("cohort needs at least one row"));
        }
        let has_ids = records.iter().all(|r| r.id.is_some());
        let mut builder = Builder::new(schema, has_ids, &[], &[]);
        for (i, rec) in records.iter().enumerate() {
            let mut cells = Vec::with_capacity(schema.len());
            for var in schema.variables() {
                let cell = *rec.values.get(var.name()).ok_or_else(|| {
                    argument(format!("record {i} lacks covariate `{}`", var.name()))
                })?;
                match (var, cell) {
                    (Variable::Continuous(_), Cell::Continuous(v)) if v.is_finite() => {}
                    (Variable::Categorical(spec), Cell::Categorical(c))
                        if spec.label_of(c).is_some() => {}
                    _ => {
                        return Err(argument(format!(
                            "record {i} has an invalid value for `{}`",
                            var.name()
                        )))
                    }
                }
                cells.push(cell);
            }
            builder.push(rec.id.clone().filter(|_| has_ids), &cells, &[], &[]);
        }
        let report = LoadReport {
            total_rows: records.len(),
            included_rows: records.len(),
            excluded: Vec::new(),
        };
        Ok(builder.finish(name.into(), report))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn load_report(&self) -> &LoadReport {
        &self.report
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Identifier of a row: the id column when present, else the row index.
    pub fn row_id(&self, row: usize) -> String {
        match &self.ids {
            Some(ids) => ids[row].clone(),
            None => row.to_string(),
        }
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.covariates.get(name)
    }

    pub fn score(&self, name: &str) -> Option<&[f64]> {
        self.scores.get(name).map(Vec::as_slice)
    }

    pub fn outcome(&self, name: &str) -> Option<&[u8]> {
        self.outcomes.get(name).map(Vec::as_slice)
    }

    pub fn score_names(&self) -> impl Iterator<Item = &str> {
        self.scores.keys().map(String::as_str)
    }

    pub fn outcome_names(&self) -> impl Iterator<Item = &str> {
        self.outcomes.keys().map(String::as_str)
    }

    pub fn cell(&self, row: usize, variable: &str) -> Option<Cell> {
        self.covariates.get(variable).map(|c| c.get(row))
    }

    pub fn record(&self, row: usize) -> Record {
        Record {
            id: self.ids.as_ref().map(|ids| ids[row].clone()),
            values: self
                .covariates
                .iter()
                .map(|(k, c)| (k.clone(), c.get(row)))
                .collect(),
        }
    }

    /// Adds or replaces a score column.
    pub fn with_score(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len {
            return Err(argument("score column length does not match cohort"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(argument("score column has non-finite values"));
        }
        self.scores.insert(name.into(), values);
        Ok(self)
    }

    /// Adds or replaces a binary outcome column.
    pub fn with_outcome(mut self, name: impl Into<String>, values: Vec<u8>) -> Result<Self> {
        if values.len() != self.len {
            return Err(argument("outcome column length does not match cohort"));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(argument("outcome values must be 0 or 1"));
        }
        self.outcomes.insert(name.into(), values);
        Ok(self)
    }

    /// New cohort holding only `rows` (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(argument("subset is empty"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len) {
            return Err(argument(format!("row {bad} out of bounds")));
        }
        Ok(Self {
            name: self.name.clone(),
            len: rows.len(),
            ids: self
                .ids
                .as_ref()
                .map(|ids| rows.iter().map(|&r| ids[r].clone()).collect()),
            covariates: self
                .covariates
                .iter()
                .map(|(k, c)| (k.clone(), c.select(rows)))
                .collect(),
            scores: self
                .scores
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&r| v[r]).collect()))
                .collect(),
            outcomes: self
                .outcomes
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&r| v[r]).collect()))
                .collect(),
            report: LoadReport {
                total_rows: rows.len(),
                included_rows: rows.len(),
                excluded: Vec::new(),
            },
        })
    }

    /// Writes the cohort as CSV: optional `id`, covariates in label order
    /// (categoricals as labels), then score and outcome columns.
    pub fn write_csv<W: Write>(&self, writer: W, schema: &CovariateSchema) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = Vec::new();
        if self.ids.is_some() {
            header.push("id");
        }
        header.extend(schema.label_order.iter().map(String::as_str));
        header.extend(self.scores.keys().map(String::as_str));
        header.extend(self.outcomes.keys().map(String::as_str));
        wtr.write_record(&header)?;
        let mut row_buf: Vec<String> = Vec::with_capacity(header.len());
        for row in 0..self.len {
            row_buf.clear();
            if let Some(ids) = &self.ids {
                row_buf.push(ids[row].clone());
            }
            for var in schema.variables() {
                let cell = self
                    .cell(row, var.name())
                    .ok_or_else(|| argument(format!("cohort lacks `{}`", var.name())))?;
                row_buf.push(match (var, cell) {
                    (Variable::Categorical(spec), Cell::Categorical(c)) => spec
                        .label_of(c)
                        .ok_or_else(|| argument(format!("undeclared code {c}")))?
                        .to_string(),
                    (_, Cell::Continuous(v)) => format!("{v}"),
                    (_, Cell::Categorical(c)) => c.to_string(),
                });
            }
            for v in self.scores.values() {
                row_buf.push(format!("{}", v[row]));
            }
            for v in self.outcomes.values() {
                row_buf.push(v[row].to_string());
            }
            wtr.write_record(&row_buf)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

struct Builder<'s> {
    schema: &'s CovariateSchema,
    len: usize,
    ids: Option<Vec<String>>,
    columns: Vec<Column>,
    score_names: Vec<String>,
    scores: Vec<Vec<f64>>,
    outcome_names: Vec<String>,
    outcomes: Vec<Vec<u8>>,
}

impl<'s> Builder<'s> {
    fn new(
        schema: &'s CovariateSchema,
        ids: bool,
        score_cols: &[(String, usize)],
        outcome_cols: &[(String, usize)],
    ) -> Self {
        Self {
            schema,
            len: 0,
            ids: ids.then(Vec::new),
            columns: schema
                .variables()
                .map(|v| match v {
                    Variable::Continuous(_) => Column::Continuous(Vec::new()),
                    Variable::Categorical(_) => Column::Categorical(Vec::new()),
                })
                .collect(),
            score_names: score_cols.iter().map(|(n, _)| n.clone()).collect(),
            scores: vec![Vec::new(); score_cols.len()],
            outcome_names: outcome_cols.iter().map(|(n, _)| n.clone()).collect(),
            outcomes: vec![Vec::new(); outcome_cols.len()],
        }
    }

    fn push(&mut self, id: Option<String>, cells: &[Cell], scores: &[f64], outcomes: &[u8]) {
        if let (Some(ids), Some(id)) = (self.ids.as_mut(), id) {
            ids.push(id);
        }
        for (col, cell) in self.columns.iter_mut().zip(cells) {
            match (col, cell) {
                (Column::Continuous(v), Cell::Continuous(x)) => v.push(*x),
                (Column::Categorical(v), Cell::Categorical(c)) => v.push(*c),
                _ => unreachable!("cell kind checked by caller"),
            }
        }
        for (col, &s) in self.scores.iter_mut().zip(scores) {
            col.push(s);
        }
        for (col, &o) in self.outcomes.iter_mut().zip(outcomes) {
            col.push(o);
        }
        self.len += 1;
    }

    fn finish(self, name: String, report: LoadReport) -> Cohort {
        Cohort {
            name,
            len: self.len,
            ids: self.ids,
            covariates: self
                .schema
                .label_order
                .iter()
                .cloned()
                .zip(self.columns)
                .collect(),
            scores: self.score_names.into_iter().zip(self.scores).collect(),
            outcomes: self.outcome_names.into_iter().zip(self.outcomes).collect(),
            report,
        }
    }
}

/// Partition of a cohort's rows by joint label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumTable {
    strata: BTreeMap<StratumKey, Vec<usize>>,
    total: usize,
}

impl StratumTable {
    pub fn from_members(strata: BTreeMap<StratumKey, Vec<usize>>) -> Self {
        let total = strata.values().map(Vec::len).sum();
        Self { strata, total }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn count(&self, key: &StratumKey) -> usize {
        self.strata.get(key).map_or(0, Vec::len)
    }

    pub fn members(&self, key: &StratumKey) -> &[usize] {
        self.strata.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StratumKey, &[usize])> {
        self.strata.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &StratumKey> {
        self.strata.keys()
    }
}

/// Assigns every row of `cohort` to its joint stratum.
pub fn build_strata(cohort: &Cohort, schema: &CovariateSchema) -> Result<StratumTable> {
    if cohort.is_empty() {
        return Err(argument("cohort is empty"));
    }
    let columns: Vec<(Variable<'_>, &Column)> = schema
        .variables()
        .map(|v| {
            cohort
                .column(v.name())
                .map(|c| (v, c))
                .ok_or_else(|| argument(format!("cohort lacks covariate `{}`", v.name())))
        })
        .collect::<Result<_>>()?;
    let mut strata: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    let mut key = Vec::with_capacity(columns.len());
    for row in 0..cohort.len() {
        key.clear();
        for &(var, col) in &columns {
            key.push(match (var, col.get(row)) {
                (Variable::Continuous(spec), Cell::Continuous(v)) => spec.bin_value(v)?,
                (Variable::Categorical(_), Cell::Categorical(c)) => c,
                _ => return Err(argument(format!("column `{}` has the wrong kind", var.name()))),
            });
        }
        strata.entry(StratumKey(key.clone())).or_default().push(row);
    }
    Ok(StratumTable::from_members(strata))
}
