//! Column-typed tabular data with fairness-model role tags, dataset
//! ingestion, cohort filtering, and descriptive summaries.
//!
//! A dataset carries an attribute column (two configured levels plus
//! missing), confounder columns Z, mediator columns W, a binary outcome Y,
//! and optional helper columns (age, admission type, area, year,
//! readmission). Datasets are immutable after load; all operations produce
//! new datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Attribute level: the minority group is the `x0` reference level of the
/// disparity, the majority group is `x1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Minority,
    Majority,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Minority, Group::Majority];

    /// Index used for per-group arrays: minority = 0, majority = 1.
    pub fn index(self) -> usize {
        match self {
            Group::Minority => 0,
            Group::Majority => 1,
        }
    }

    pub fn from_index(i: usize) -> Group {
        match i {
            0 => Group::Minority,
            1 => Group::Majority,
            _ => panic!("group index out of range: {i}"),
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Minority => Group::Majority,
            Group::Majority => Group::Minority,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Minority => write!(f, "minority"),
            Group::Majority => write!(f, "majority"),
        }
    }
}

fn default_sentinel() -> f64 {
    -1.0
}

/// Column role mapping for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSchema {
    /// Name of the protected-attribute column.
    pub attribute: String,
    /// Attribute level treated as the minority group (x0).
    pub minority_level: String,
    /// Attribute level treated as the majority group (x1).
    pub majority_level: String,
    /// Confounder columns Z.
    pub confounders: Vec<String>,
    /// Mediator columns W.
    pub mediators: Vec<String>,
    /// Binary outcome column Y.
    pub outcome: String,
    #[serde(default)]
    pub age: Option<String>,
    #[serde(default)]
    pub admission_type: Option<String>,
    #[serde(default)]
    pub area: Option<String>,
    #[serde(default)]
    pub year: Option<String>,
    /// Alternate binary outcome R (readmission).
    #[serde(default)]
    pub readmission: Option<String>,
    /// Value substituted for missing numeric cells when building learner
    /// features. Overridable per column via `sentinels`.
    #[serde(default = "default_sentinel")]
    pub missing_sentinel: f64,
    #[serde(default)]
    pub sentinels: BTreeMap<String, f64>,
}

impl RoleSchema {
    /// Minimal schema with the required roles; optional columns unset.
    pub fn new(
        attribute: impl Into<String>,
        minority_level: impl Into<String>,
        majority_level: impl Into<String>,
        confounders: Vec<String>,
        mediators: Vec<String>,
        outcome: impl Into<String>,
    ) -> Self {
        RoleSchema {
            attribute: attribute.into(),
            minority_level: minority_level.into(),
            majority_level: majority_level.into(),
            confounders,
            mediators,
            outcome: outcome.into(),
            age: None,
            admission_type: None,
            area: None,
            year: None,
            readmission: None,
            missing_sentinel: default_sentinel(),
            sentinels: BTreeMap::new(),
        }
    }

    /// Parse from a TOML document (flat key-value sections).
    pub fn from_toml_str(text: &str) -> Result<RoleSchema> {
        let schema: RoleSchema =
            toml::from_str(text).map_err(|e| Error::schema(format!("schema config: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    /// Structural invariants that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.minority_level == self.majority_level {
            return Err(Error::schema("minority and majority levels must differ"));
        }
        for name in [&self.attribute, &self.outcome] {
            if self.confounders.contains(name) || self.mediators.contains(name) {
                return Err(Error::schema(format!(
                    "column '{name}' cannot be both attribute/outcome and confounder/mediator"
                )));
            }
        }
        if self.attribute == self.outcome {
            return Err(Error::schema("attribute and outcome columns must differ"));
        }
        for z in &self.confounders {
            if self.mediators.contains(z) {
                return Err(Error::schema(format!(
                    "column '{z}' cannot be both confounder and mediator"
                )));
            }
        }
        Ok(())
    }

    /// All column names referenced by the schema.
    pub fn required_columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = vec![&self.attribute, &self.outcome];
        cols.extend(self.confounders.iter().map(|s| s.as_str()));
        cols.extend(self.mediators.iter().map(|s| s.as_str()));
        for opt in [
            &self.age,
            &self.admission_type,
            &self.area,
            &self.year,
            &self.readmission,
        ]
        .into_iter()
        .flatten()
        {
            cols.push(opt);
        }
        cols.sort();
        cols.dedup();
        cols
    }

    pub fn sentinel_for(&self, column: &str) -> f64 {
        self.sentinels.get(column).copied().unwrap_or(self.missing_sentinel)
    }
}

/// Cell storage for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    /// Numeric values; missing cells hold NaN and are flagged in the mask.
    Numeric(Vec<f64>),
    /// Categorical codes into `levels`; level order is first appearance.
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
    pub missing: Vec<bool>,
}

/// Cell equality ignores the stored payload of masked cells (missing
/// numeric cells hold NaN).
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        if self.name != other.name || self.missing != other.missing {
            return false;
        }
        match (&self.data, &other.data) {
            (ColumnData::Numeric(a), ColumnData::Numeric(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .zip(&self.missing)
                        .all(|((x, y), &miss)| miss || x == y)
            }
            (
                ColumnData::Categorical { codes: ca, levels: la },
                ColumnData::Categorical { codes: cb, levels: lb },
            ) => {
                la == lb
                    && ca.len() == cb.len()
                    && ca
                        .iter()
                        .zip(cb)
                        .zip(&self.missing)
                        .all(|((x, y), &miss)| miss || x == y)
            }
            _ => false,
        }
    }
}

impl Column {
    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Column {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Column { name: name.into(), data: ColumnData::Numeric(values), missing }
    }

    pub fn categorical(name: impl Into<String>, cells: &[Option<&str>]) -> Column {
        let mut levels: Vec<String> = Vec::new();
        let mut codes = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for cell in cells {
            match cell {
                Some(label) => {
                    let code = match levels.iter().position(|l| l == label) {
                        Some(i) => i as u32,
                        None => {
                            levels.push((*label).to_string());
                            (levels.len() - 1) as u32
                        }
                    };
                    codes.push(code);
                    missing.push(false);
                }
                None => {
                    codes.push(0);
                    missing.push(true);
                }
            }
        }
        Column { name: name.into(), data: ColumnData::Categorical { codes, levels }, missing }
    }

    /// Render one cell for text output; `None` when missing.
    pub fn cell_text(&self, row: usize) -> Option<String> {
        if self.missing[row] {
            return None;
        }
        match &self.data {
            ColumnData::Numeric(v) => Some(format!("{}", v[row])),
            ColumnData::Categorical { codes, levels } => {
                Some(levels[codes[row] as usize].clone())
            }
        }
    }

    fn take_rows(&self, rows: &[usize]) -> Column {
        let missing = rows.iter().map(|&r| self.missing[r]).collect();
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: levels.clone(),
            },
        };
        Column { name: self.name.clone(), data, missing }
    }
}

/// Dataset selector for the outcome used in estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OutcomeVar {
    #[default]
    Primary,
    Readmission,
}

/// A loaded, role-tagged dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmDataset {
    pub n_rows: usize,
    pub columns: Vec<Column>,
    pub schema: RoleSchema,
    /// Rows rejected at load because the outcome was missing.
    pub dropped_missing_outcome: usize,
}

impl SfmDataset {
    /// Assemble a dataset from pre-built columns, enforcing the attribute
    /// and outcome invariants.
    pub fn from_columns(
        columns: Vec<Column>,
        schema: RoleSchema,
        dropped_missing_outcome: usize,
    ) -> Result<SfmDataset> {
        schema.validate()?;
        let n_rows = columns.first().map(|c| c.len()).unwrap_or(0);
        for col in &columns {
            if col.len() != n_rows {
                return Err(Error::validation(format!(
                    "column '{}' has {} rows, expected {n_rows}",
                    col.name,
                    col.len()
                )));
            }
        }
        let ds = SfmDataset { n_rows, columns, schema, dropped_missing_outcome };
        for name in ds.schema.required_columns() {
            if ds.column(name).is_none() {
                return Err(Error::schema(format!("column '{name}' not present in data")));
            }
        }
        ds.validate_attribute()?;
        ds.validate_binary(&ds.schema.outcome, false)?;
        if let Some(r) = &ds.schema.readmission {
            ds.validate_binary(r, true)?;
        }
        Ok(ds)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn column_required(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| Error::schema(format!("column '{name}' not present in data")))
    }

    /// Numeric view of a column (error for categorical columns).
    pub fn numeric(&self, name: &str) -> Result<(&[f64], &[bool])> {
        let col = self.column_required(name)?;
        match &col.data {
            ColumnData::Numeric(v) => Ok((v, &col.missing)),
            ColumnData::Categorical { .. } => {
                Err(Error::validation(format!("column '{name}' is categorical, expected numeric")))
            }
        }
    }

    /// Attribute group per row; `None` where the attribute is missing.
    pub fn attribute_groups(&self) -> Vec<Option<Group>> {
        let col = self.column(&self.schema.attribute).expect("attribute column exists");
        let ColumnData::Categorical { codes, levels } = &col.data else {
            panic!("attribute column is categorical by construction");
        };
        let minority_code = levels.iter().position(|l| *l == self.schema.minority_level);
        codes
            .iter()
            .zip(&col.missing)
            .map(|(&code, &miss)| {
                if miss {
                    None
                } else if Some(code as usize) == minority_code {
                    Some(Group::Minority)
                } else {
                    Some(Group::Majority)
                }
            })
            .collect()
    }

    /// Outcome values for the selected outcome variable.
    pub fn outcome_values(&self, var: OutcomeVar) -> Result<(&[f64], &[bool])> {
        match var {
            OutcomeVar::Primary => self.numeric(&self.schema.outcome),
            OutcomeVar::Readmission => {
                let name = self.schema.readmission.as_deref().ok_or_else(|| {
                    Error::schema("no readmission column configured in the schema")
                })?;
                self.numeric(name)
            }
        }
    }

    /// New dataset containing the given rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> SfmDataset {
        SfmDataset {
            n_rows: rows.len(),
            columns: self.columns.iter().map(|c| c.take_rows(rows)).collect(),
            schema: self.schema.clone(),
            dropped_missing_outcome: self.dropped_missing_outcome,
        }
    }

    /// Fill the attribute for masked rows with the given groups, in row
    /// order. `fills` must have one entry per attribute-missing row.
    pub fn fill_missing_attribute(&self, fills: &[Group]) -> Result<SfmDataset> {
        let mut ds = self.clone();
        let attr_name = ds.schema.attribute.clone();
        let minority = ds.schema.minority_level.clone();
        let majority = ds.schema.majority_level.clone();
        let col = ds
            .columns
            .iter_mut()
            .find(|c| c.name == attr_name)
            .expect("attribute column exists");
        let ColumnData::Categorical { codes, levels } = &mut col.data else {
            unreachable!("attribute column is categorical");
        };
        let code_for = |label: &str, levels: &mut Vec<String>| -> u32 {
            match levels.iter().position(|l| l == label) {
                Some(i) => i as u32,
                None => {
                    levels.push(label.to_string());
                    (levels.len() - 1) as u32
                }
            }
        };
        let min_code = code_for(&minority, levels);
        let maj_code = code_for(&majority, levels);
        let mut fill_iter = fills.iter();
        for row in 0..ds.n_rows {
            if col.missing[row] {
                let g = fill_iter.next().ok_or_else(|| {
                    Error::validation("fewer fills than attribute-missing rows")
                })?;
                codes[row] = match g {
                    Group::Minority => min_code,
                    Group::Majority => maj_code,
                };
                col.missing[row] = false;
            }
        }
        if fill_iter.next().is_some() {
            return Err(Error::validation("more fills than attribute-missing rows"));
        }
        Ok(ds)
    }

    fn validate_attribute(&self) -> Result<()> {
        let col = self.column_required(&self.schema.attribute)?;
        match &col.data {
            ColumnData::Categorical { codes, levels } => {
                let mut offenders: Vec<&str> = Vec::new();
                for (&code, &miss) in codes.iter().zip(&col.missing) {
                    if miss {
                        continue;
                    }
                    let label = &levels[code as usize];
                    if *label != self.schema.minority_level
                        && *label != self.schema.majority_level
                        && !offenders.iter().any(|o| o == label)
                    {
                        offenders.push(label);
                    }
                }
                if !offenders.is_empty() {
                    return Err(Error::validation(format!(
                        "attribute column '{}' contains levels outside {{{}, {}}}: {}",
                        self.schema.attribute,
                        self.schema.minority_level,
                        self.schema.majority_level,
                        offenders.join(", ")
                    )));
                }
                Ok(())
            }
            ColumnData::Numeric(_) => Err(Error::validation(format!(
                "attribute column '{}' must be categorical",
                self.schema.attribute
            ))),
        }
    }

    fn validate_binary(&self, name: &str, allow_missing: bool) -> Result<()> {
        let col = self.column_required(name)?;
        let ColumnData::Numeric(values) = &col.data else {
            return Err(Error::validation(format!(
                "outcome column '{name}' must be numeric 0/1"
            )));
        };
        let mut offenders = Vec::new();
        for (v, &miss) in values.iter().zip(&col.missing) {
            if miss {
                if !allow_missing {
                    return Err(Error::validation(format!(
                        "outcome column '{name}' has missing values after load"
                    )));
                }
                continue;
            }
            if *v != 0.0 && *v != 1.0 && !offenders.contains(v) {
                offenders.push(*v);
            }
        }
        if !offenders.is_empty() {
            return Err(Error::validation(format!(
                "outcome column '{name}' must be binary 0/1; found: {}",
                offenders.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(())
    }

    /// Write the dataset back out as delimited text. Missing cells are
    /// empty. Numeric cells use the shortest round-trip representation, so
    /// reloading reproduces the exact values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .from_path(path)
            .map_err(|e| Error::validation(format!("cannot write {}: {e}", path.display())))?;
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| Error::validation(e.to_string()))?;
        for row in 0..self.n_rows {
            let record: Vec<String> = self
                .columns
                .iter()
                .map(|c| c.cell_text(row).unwrap_or_default())
                .collect();
            wtr.write_record(&record).map_err(|e| Error::validation(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Parsing options for delimited text input.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Cell contents treated as missing, in addition to the empty string.
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { delimiter: b',', missing_tokens: vec!["NA".to_string()] }
    }
}

impl LoadOptions {
    fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing_tokens.iter().any(|t| t == cell)
    }
}

/// Load a delimited text file with a header row into a typed dataset.
///
/// Rows with a missing outcome are rejected (and counted); rows with a
/// missing attribute are retained and flagged in the attribute mask.
pub fn load_dataset(path: &Path, schema: &RoleSchema, opts: &LoadOptions) -> Result<SfmDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cannot open data file {}: {e}", path.display()),
            )),
            _ => Error::validation(format!("cannot read {}: {e}", path.display())),
        })?;
    let headers: Vec<String> =
        rdr.headers().map_err(|e| Error::validation(e.to_string()))?.iter().map(String::from).collect();
    for required in schema.required_columns() {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::schema(format!(
                "configured column '{required}' not found in header of {}",
                path.display()
            )));
        }
    }

    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    let outcome_idx = headers.iter().position(|h| *h == schema.outcome).expect("checked above");
    let mut dropped_missing_outcome = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::validation(e.to_string()))?;
        let outcome_cell = record.get(outcome_idx).unwrap_or("");
        if opts.is_missing(outcome_cell.trim()) {
            dropped_missing_outcome += 1;
            continue;
        }
        for (i, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            cells[i].push(if opts.is_missing(cell) { None } else { Some(cell.to_string()) });
        }
    }

    let columns: Vec<Column> = headers
        .iter()
        .zip(cells.into_iter())
        .map(|(name, col_cells)| build_column(name, col_cells))
        .collect();
    SfmDataset::from_columns(columns, schema.clone(), dropped_missing_outcome)
}

fn build_column(name: &str, cells: Vec<Option<String>>) -> Column {
    let all_numeric = cells
        .iter()
        .flatten()
        .all(|c| c.parse::<f64>().map(|v| v.is_finite()).unwrap_or(false));
    let has_any_value = cells.iter().any(|c| c.is_some());
    if all_numeric && has_any_value {
        let values: Vec<f64> = cells
            .iter()
            .map(|c| c.as_ref().map(|s| s.parse::<f64>().unwrap()).unwrap_or(f64::NAN))
            .collect();
        Column::numeric(name, values)
    } else {
        let refs: Vec<Option<&str>> = cells.iter().map(|c| c.as_deref()).collect();
        Column::categorical(name, &refs)
    }
}

// ---------------------------------------------------------------------------
// Cohort filtering
// ---------------------------------------------------------------------------

/// Predicate over one column; rows where it evaluates false are removed.
/// All predicates evaluate false on missing cells except `NonMissing`,
/// which is the explicit missingness filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    AtLeast(f64),
    AtMost(f64),
    /// Inclusive range.
    Range(f64, f64),
    InLevels(Vec<String>),
    NonMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    pub column: String,
    pub predicate: Predicate,
}

impl FilterRule {
    pub fn describe(&self) -> String {
        match &self.predicate {
            Predicate::AtLeast(v) => format!("{} >= {v}", self.column),
            Predicate::AtMost(v) => format!("{} <= {v}", self.column),
            Predicate::Range(lo, hi) => format!("{} in [{lo}, {hi}]", self.column),
            Predicate::InLevels(levels) => {
                format!("{} in {{{}}}", self.column, levels.join(", "))
            }
            Predicate::NonMissing => format!("{} non-missing", self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionEntry {
    pub rule: String,
    pub removed: usize,
}

/// Per-rule removal log; counts are order-dependent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionLog {
    pub entries: Vec<ExclusionEntry>,
}

impl ExclusionLog {
    pub fn total_removed(&self) -> usize {
        self.entries.iter().map(|e| e.removed).sum()
    }
}

/// Apply ordered exclusion rules, logging removals per rule.
pub fn filter_cohort(ds: &SfmDataset, rules: &[FilterRule]) -> Result<(SfmDataset, ExclusionLog)> {
    let mut current = ds.clone();
    let mut log = ExclusionLog::default();
    for rule in rules {
        let col = current
            .column(&rule.column)
            .ok_or_else(|| Error::schema(format!("filter rule over unknown column '{}'", rule.column)))?;
        let keep = rule_keep_rows(col, &rule.predicate)?;
        let removed = current.n_rows - keep.len();
        log.entries.push(ExclusionEntry { rule: rule.describe(), removed });
        current = current.subset(&keep);
    }
    Ok((current, log))
}

/// Rows kept by the predicate. Missing cells fail every predicate except
/// `NonMissing`; type mismatches are errors.
fn rule_keep_rows(col: &Column, pred: &Predicate) -> Result<Vec<usize>> {
    let n = col.len();
    match pred {
        Predicate::NonMissing => {
            Ok((0..n).filter(|&r| !col.missing[r]).collect())
        }
        Predicate::AtLeast(_) | Predicate::AtMost(_) | Predicate::Range(..) => {
            let ColumnData::Numeric(values) = &col.data else {
                return Err(Error::validation(format!(
                    "numeric filter over categorical column '{}'",
                    col.name
                )));
            };
            Ok((0..n)
                .filter(|&r| {
                    if col.missing[r] {
                        return false;
                    }
                    let v = values[r];
                    match pred {
                        Predicate::AtLeast(lo) => v >= *lo,
                        Predicate::AtMost(hi) => v <= *hi,
                        Predicate::Range(lo, hi) => v >= *lo && v <= *hi,
                        _ => unreachable!(),
                    }
                })
                .collect())
        }
        Predicate::InLevels(allowed) => {
            let ColumnData::Categorical { codes, levels } = &col.data else {
                return Err(Error::validation(format!(
                    "level filter over numeric column '{}'",
                    col.name
                )));
            };
            Ok((0..n)
                .filter(|&r| {
                    !col.missing[r] && allowed.iter().any(|a| *a == levels[codes[r] as usize])
                })
                .collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Cohort summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericGroupStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariableDetail {
    /// Per-group stats in [minority, majority] order.
    Numeric { per_group: [NumericGroupStats; 2] },
    Categorical {
        levels: Vec<String>,
        /// counts[group][level]
        counts: [Vec<usize>; 2],
        pct: [Vec<f64>; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub detail: VariableDetail,
    /// Two-group p-value: rank-sum for numeric, chi-squared for
    /// categorical. `None` when the test is degenerate on this variable.
    pub p_value: Option<f64>,
}

/// Descriptive comparison of the two attribute groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    /// Row counts in [minority, majority] order, over attribute-complete rows.
    pub group_n: [usize; 2],
    pub group_pct: [f64; 2],
    pub attribute_missing: usize,
    pub variables: Vec<VariableSummary>,
}

/// Per-group statistics and two-group tests for the named variables.
pub fn summarize_cohort(ds: &SfmDataset, variables: &[String]) -> Result<CohortSummary> {
    let groups = ds.attribute_groups();
    let mut group_rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut attribute_missing = 0usize;
    for (row, g) in groups.iter().enumerate() {
        match g {
            Some(g) => group_rows[g.index()].push(row),
            None => attribute_missing += 1,
        }
    }
    for g in Group::BOTH {
        if group_rows[g.index()].is_empty() {
            return Err(Error::degenerate(format!("cohort summary: {g} group has zero rows")));
        }
    }
    let n_complete = group_rows[0].len() + group_rows[1].len();

    let mut summaries = Vec::new();
    for name in variables {
        let col = ds
            .column(name)
            .ok_or_else(|| Error::schema(format!("summary variable '{name}' not in data")))?;
        let summary = match &col.data {
            ColumnData::Numeric(values) => {
                let per: Vec<Vec<f64>> = group_rows
                    .iter()
                    .map(|rows| {
                        rows.iter()
                            .filter(|&&r| !col.missing[r])
                            .map(|&r| values[r])
                            .collect()
                    })
                    .collect();
                let stats_for = |v: &[f64]| {
                    if v.is_empty() {
                        return NumericGroupStats { n: 0, mean: f64::NAN, median: f64::NAN, q25: f64::NAN, q75: f64::NAN };
                    }
                    let (median, q25, q75) = stats::median_iqr(v);
                    NumericGroupStats { n: v.len(), mean: stats::mean(v), median, q25, q75 }
                };
                let p_value = stats::rank_sum_p(&per[0], &per[1]).ok();
                VariableSummary {
                    name: name.clone(),
                    detail: VariableDetail::Numeric {
                        per_group: [stats_for(&per[0]), stats_for(&per[1])],
                    },
                    p_value,
                }
            }
            ColumnData::Categorical { codes, levels } => {
                let mut counts = [vec![0usize; levels.len()], vec![0usize; levels.len()]];
                for (gi, rows) in group_rows.iter().enumerate() {
                    for &r in rows {
                        if !col.missing[r] {
                            counts[gi][codes[r] as usize] += 1;
                        }
                    }
                }
                let pct = [0, 1].map(|gi: usize| {
                    let total: usize = counts[gi].iter().sum();
                    counts[gi]
                        .iter()
                        .map(|&c| if total > 0 { 100.0 * c as f64 / total as f64 } else { 0.0 })
                        .collect::<Vec<f64>>()
                });
                // Contingency table: levels x groups.
                let table: Vec<Vec<f64>> = (0..levels.len())
                    .map(|l| vec![counts[0][l] as f64, counts[1][l] as f64])
                    .filter(|row| row.iter().sum::<f64>() > 0.0)
                    .collect();
                let p_value =
                    if table.len() >= 2 { stats::chi_square_p(&table).ok() } else { None };
                VariableSummary {
                    name: name.clone(),
                    detail: VariableDetail::Categorical { levels: levels.clone(), counts, pct },
                    p_value,
                }
            }
        };
        summaries.push(summary);
    }

    Ok(CohortSummary {
        group_n: [group_rows[0].len(), group_rows[1].len()],
        group_pct: [
            100.0 * group_rows[0].len() as f64 / n_complete as f64,
            100.0 * group_rows[1].len() as f64 / n_complete as f64,
        ],
        attribute_missing,
        variables: summaries,
    })
}

// ---------------------------------------------------------------------------
// Learner feature encoding
// ---------------------------------------------------------------------------

/// Column-major feature matrix. Numeric columns pass through with the
/// schema sentinel substituted for missing cells; categorical columns are
/// one-hot encoded in stored level order with missing rows all-zero.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub n: usize,
    pub names: Vec<String>,
    pub cols: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn d(&self) -> usize {
        self.cols.len()
    }

    /// Feature values of one row.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        assert_eq!(values.len(), self.n, "feature column length mismatch");
        self.names.push(name.into());
        self.cols.push(values);
    }
}

/// Encode the named dataset columns, restricted to `rows`, as learner
/// features.
pub fn build_features(ds: &SfmDataset, columns: &[String], rows: &[usize]) -> Result<FeatureMatrix> {
    let mut out = FeatureMatrix { n: rows.len(), names: Vec::new(), cols: Vec::new() };
    for name in columns {
        let col = ds
            .column(name)
            .ok_or_else(|| Error::schema(format!("feature column '{name}' not in data")))?;
        match &col.data {
            ColumnData::Numeric(values) => {
                let sentinel = ds.schema.sentinel_for(name);
                let v = rows
                    .iter()
                    .map(|&r| if col.missing[r] { sentinel } else { values[r] })
                    .collect();
                out.push_column(name.clone(), v);
            }
            ColumnData::Categorical { codes, levels } => {
                for (li, level) in levels.iter().enumerate() {
                    let v = rows
                        .iter()
                        .map(|&r| {
                            if !col.missing[r] && codes[r] as usize == li {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    out.push_column(format!("{name}={level}"), v);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn basic_schema() -> RoleSchema {
        RoleSchema::new("x", "a", "b", vec!["z".into()], vec!["w".into()], "y")
    }

    #[test]
    fn load_well_formed_file() {
        let f = write_temp("x,z,w,y\na,1,0.5,0\nb,2,0.25,1\na,3,0.125,1\nb,4,0.0625,0\n");
        let ds = load_dataset(f.path(), &basic_schema(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.n_rows, 4);
        assert_eq!(ds.dropped_missing_outcome, 0);
        for col in &ds.columns {
            assert!(col.missing.iter().all(|&m| !m), "no masks expected");
        }
        let groups = ds.attribute_groups();
        assert_eq!(groups[0], Some(Group::Minority));
        assert_eq!(groups[1], Some(Group::Majority));
    }

    #[test]
    fn missing_outcome_column_is_schema_error() {
        let f = write_temp("x,z,w\na,1,2\n");
        let err = load_dataset(f.path(), &basic_schema(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("'y'"), "message should name column: {msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn blank_attribute_cells_are_masked() {
        let mut text = String::from("x,z,w,y\n");
        for i in 0..100 {
            let x = if i == 17 || i == 58 { "" } else if i % 2 == 0 { "a" } else { "b" };
            text.push_str(&format!("{x},{i},{i},0\n"));
        }
        let f = write_temp(&text);
        let ds = load_dataset(f.path(), &basic_schema(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.n_rows, 100);
        let attr = ds.column("x").unwrap();
        let masked: Vec<usize> =
            attr.missing.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        assert_eq!(masked, vec![17, 58]);
    }

    #[test]
    fn missing_outcome_rows_are_rejected() {
        let f = write_temp("x,z,w,y\na,1,1,0\nb,2,2,\na,3,3,1\n");
        let ds = load_dataset(f.path(), &basic_schema(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.n_rows, 2);
        assert_eq!(ds.dropped_missing_outcome, 1);
    }

    #[test]
    fn non_binary_outcome_lists_offenders() {
        let f = write_temp("x,z,w,y\na,1,1,0\nb,2,2,2\na,3,3,0.5\n");
        let err = load_dataset(f.path(), &basic_schema(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Validation(msg) => {
                assert!(msg.contains('2') && msg.contains("0.5"), "offenders listed: {msg}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_attribute_level_is_rejected() {
        let f = write_temp("x,z,w,y\na,1,1,0\nc,2,2,1\n");
        let err = load_dataset(f.path(), &basic_schema(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains('c'), "offender named: {msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_preserves_cells_and_masks() {
        let f = write_temp("x,z,w,y\na,1,,0\n,2.5,med,1\nb,,surg,1\n");
        let schema = basic_schema();
        schema.validate().unwrap();
        let ds = load_dataset(f.path(), &schema, &LoadOptions::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(out.path()).unwrap();
        let ds2 = load_dataset(out.path(), &schema, &LoadOptions::default()).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn filter_age_rule_and_log() {
        let ages: Vec<f64> = vec![12.0, 20.0, 30.0, 15.0, 40.0, 50.0, 60.0, 17.0, 70.0, 80.0];
        let n = ages.len();
        let cols = vec![
            Column::categorical("x", &vec![Some("a"); n]),
            Column::numeric("age", ages),
            Column::numeric("y", vec![0.0; n]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec!["age".into()], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let rules = vec![FilterRule { column: "age".into(), predicate: Predicate::AtLeast(18.0) }];
        let (filtered, log) = filter_cohort(&ds, &rules).unwrap();
        assert_eq!(filtered.n_rows, 7);
        assert_eq!(log.entries.len(), 1);
        assert_eq!(log.entries[0].removed, 3);
    }

    #[test]
    fn empty_rule_list_is_identity() {
        let cols = vec![
            Column::categorical("x", &[Some("a"), Some("b")]),
            Column::numeric("y", vec![0.0, 1.0]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec![], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let (filtered, log) = filter_cohort(&ds, &[]).unwrap();
        assert_eq!(filtered, ds);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn overlapping_rules_log_sequentially() {
        // Rows: (age, score). Rule 1 removes age < 30; rule 2 removes
        // score < 5, where some of those rows were already gone.
        let cols = vec![
            Column::categorical("x", &vec![Some("a"); 6]),
            Column::numeric("age", vec![20.0, 25.0, 35.0, 40.0, 45.0, 50.0]),
            Column::numeric("score", vec![1.0, 9.0, 2.0, 9.0, 3.0, 9.0]),
            Column::numeric("y", vec![0.0; 6]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec!["age".into()], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let rules = vec![
            FilterRule { column: "age".into(), predicate: Predicate::AtLeast(30.0) },
            FilterRule { column: "score".into(), predicate: Predicate::AtLeast(5.0) },
        ];
        let (filtered, log) = filter_cohort(&ds, &rules).unwrap();
        assert_eq!(log.entries[0].removed, 2);
        assert_eq!(log.entries[1].removed, 2);
        assert_eq!(filtered.n_rows, 2);
        assert_eq!(log.total_removed(), ds.n_rows - filtered.n_rows);
    }

    #[test]
    fn filter_rule_unknown_column_errors() {
        let cols = vec![
            Column::categorical("x", &[Some("a")]),
            Column::numeric("y", vec![0.0]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec![], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let rules =
            vec![FilterRule { column: "nope".into(), predicate: Predicate::NonMissing }];
        assert!(matches!(filter_cohort(&ds, &rules), Err(Error::Schema(_))));
    }

    #[test]
    fn filter_concatenation_matches_sequential_application() {
        let n = 40;
        let cols = vec![
            Column::categorical("x", &(0..n).map(|i| if i % 2 == 0 { Some("a") } else { Some("b") }).collect::<Vec<_>>()),
            Column::numeric("age", (0..n).map(|i| (i % 13) as f64 * 7.0).collect()),
            Column::numeric("y", vec![0.0; n]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec!["age".into()], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let r = vec![FilterRule { column: "age".into(), predicate: Predicate::AtLeast(14.0) }];
        let s = vec![FilterRule { column: "age".into(), predicate: Predicate::AtMost(70.0) }];
        let (step1, log1) = filter_cohort(&ds, &r).unwrap();
        let (step2, log2) = filter_cohort(&step1, &s).unwrap();
        let both: Vec<FilterRule> = r.iter().chain(&s).cloned().collect();
        let (joint, joint_log) = filter_cohort(&ds, &both).unwrap();
        assert_eq!(step2, joint);
        let seq: Vec<usize> =
            log1.entries.iter().chain(&log2.entries).map(|e| e.removed).collect();
        let jnt: Vec<usize> = joint_log.entries.iter().map(|e| e.removed).collect();
        assert_eq!(seq, jnt);
    }

    #[test]
    fn summary_identical_groups_do_not_reject() {
        // The same numeric values in both groups: the rank-sum test has
        // no evidence of a shift.
        let values: Vec<f64> = (0..50).map(|i| (i % 11) as f64).collect();
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for v in &values {
            xs.push(Some("a"));
            vs.push(*v);
            xs.push(Some("b"));
            vs.push(*v);
        }
        let cols = vec![
            Column::categorical("x", &xs),
            Column::numeric("v", vs),
            Column::numeric("y", vec![0.0; 100]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec!["v".into()], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let summary = summarize_cohort(&ds, &["v".into()]).unwrap();
        assert!(summary.variables[0].p_value.unwrap() > 0.05);
        assert_eq!(summary.group_n, [50, 50]);
        assert_eq!(summary.group_n[0] + summary.group_n[1] + summary.attribute_missing, 100);
    }

    #[test]
    fn summary_chi_square_detects_rate_difference() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..1000 {
            xs.push(Some("a"));
            ys.push(if i < 100 { 1.0 } else { 0.0 });
        }
        for i in 0..1000 {
            xs.push(Some("b"));
            ys.push(if i < 200 { 1.0 } else { 0.0 });
        }
        let status: Vec<Option<&str>> =
            ys.iter().map(|&y| Some(if y > 0.5 { "died" } else { "lived" })).collect();
        let cols = vec![
            Column::categorical("x", &xs),
            Column::categorical("status", &status),
            Column::numeric("y", ys),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec![], vec!["status".into()], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let summary = summarize_cohort(&ds, &["status".into()]).unwrap();
        assert!(summary.variables[0].p_value.unwrap() < 1e-3);
    }

    #[test]
    fn summary_errors_on_empty_group() {
        let cols = vec![
            Column::categorical("x", &[Some("a"), Some("a")]),
            Column::numeric("y", vec![0.0, 1.0]),
        ];
        let schema = RoleSchema::new("x", "a", "b", vec![], vec![], "y");
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        assert!(matches!(summarize_cohort(&ds, &[]), Err(Error::Degenerate(_))));
    }

    proptest::proptest! {
        /// Writing any loaded dataset back out and reloading reproduces the
        /// exact cells and masks.
        #[test]
        fn roundtrip_property(
            xs in proptest::collection::vec(proptest::option::weighted(0.9, 0..2usize), 2..40),
            zs in proptest::collection::vec(proptest::option::weighted(0.85, -1000i64..1000), 2..40),
        ) {
            let n = xs.len().min(zs.len());
            let x_cells: Vec<Option<&str>> =
                xs[..n].iter().map(|c| c.map(|v| if v == 0 { "a" } else { "b" })).collect();
            let mut z_vals: Vec<f64> = zs[..n]
                .iter()
                .map(|c| c.map(|v| v as f64 / 7.0).unwrap_or(f64::NAN))
                .collect();
            // An all-missing column has no values to infer a type from on
            // reload; keep at least one numeric cell.
            if z_vals.iter().all(|v| v.is_nan()) {
                z_vals[0] = 0.5;
            }
            let cols = vec![
                Column::categorical("x", &x_cells),
                Column::numeric("z", z_vals),
                Column::numeric("y", vec![0.0; n]),
            ];
            let schema = RoleSchema::new("x", "a", "b", vec!["z".into()], vec![], "y");
            let ds = SfmDataset::from_columns(cols, schema.clone(), 0).unwrap();
            let file = tempfile::NamedTempFile::new().unwrap();
            ds.write_csv(file.path()).unwrap();
            let reloaded = load_dataset(file.path(), &schema, &LoadOptions::default()).unwrap();
            proptest::prop_assert_eq!(ds, reloaded);
        }
    }

    #[test]
    fn one_hot_features_sentinel_and_levels() {
        let cols = vec![
            Column::categorical("x", &[Some("a"), Some("b"), Some("a")]),
            Column::numeric("z", vec![1.0, f64::NAN, 3.0]),
            Column::categorical("w", &[Some("med"), None, Some("surg")]),
            Column::numeric("y", vec![0.0, 1.0, 0.0]),
        ];
        let mut schema = RoleSchema::new("x", "a", "b", vec!["z".into()], vec!["w".into()], "y");
        schema.sentinels.insert("z".into(), -9.0);
        let ds = SfmDataset::from_columns(cols, schema, 0).unwrap();
        let fm = build_features(&ds, &["z".into(), "w".into()], &[0, 1, 2]).unwrap();
        assert_eq!(fm.names, vec!["z", "w=med", "w=surg"]);
        assert_eq!(fm.cols[0], vec![1.0, -9.0, 3.0]);
        assert_eq!(fm.cols[1], vec![1.0, 0.0, 0.0]);
        assert_eq!(fm.cols[2], vec![0.0, 0.0, 1.0]);
    }
}
