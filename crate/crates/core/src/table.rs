//! Typed columnar tables with an explicit missingness mask, and the CSV +
//! JSON-sidecar file format every other module reads and writes.
//!
//! Missing cells hold a fixed sentinel in the value vector (`0`, `0.0`,
//! `false`, or [`NULL_CODE`]) and are only ever identified through the mask.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Category code stored in masked categorical cells.
pub const NULL_CODE: u32 = u32::MAX;

const DATETIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numeric,
    Datetime,
    Boolean,
}

impl ColumnKind {
    /// Numeric and datetime columns carry an ordered numeric value.
    pub fn is_continuous(self) -> bool {
        matches!(self, ColumnKind::Numeric | ColumnKind::Datetime)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Numeric => "numeric",
            ColumnKind::Datetime => "datetime",
            ColumnKind::Boolean => "boolean",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub nullable: bool,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind, nullable: bool) -> Self {
        ColumnSchema {
            name: name.into(),
            kind,
            unit: None,
            nullable,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    /// Datetime columns are always UTC.
    pub fn timezone(&self) -> Option<&'static str> {
        (self.kind == ColumnKind::Datetime).then_some("UTC")
    }
}

#[derive(Clone, Debug)]
pub enum ColumnData {
    /// Interned text: `codes[i]` indexes `dict`, or is [`NULL_CODE`] when masked.
    Categorical { dict: Vec<String>, codes: Vec<u32> },
    Numeric(Vec<f64>),
    /// Signed epoch seconds, UTC.
    Datetime(Vec<i64>),
    Boolean(Vec<bool>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Categorical { codes, .. } => codes.len(),
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Datetime(v) => v.len(),
            ColumnData::Boolean(v) => v.len(),
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Datetime(_) => ColumnKind::Datetime,
            ColumnData::Boolean(_) => ColumnKind::Boolean,
        }
    }
}

/// A borrowed view of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value<'a> {
    Missing,
    Text(&'a str),
    Number(f64),
    Time(i64),
    Bool(bool),
}

impl Value<'_> {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    /// Canonical text form, as written to CSV. Missing cells render empty.
    pub fn render(&self) -> String {
        match *self {
            Value::Missing => String::new(),
            Value::Text(s) => s.to_string(),
            Value::Number(x) => format!("{x}"),
            Value::Time(t) => format_datetime(t),
            Value::Bool(b) => b.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Column {
    schema: ColumnSchema,
    data: ColumnData,
    missing: Vec<bool>,
}

impl Column {
    /// Assembles a column from raw parts, checking every invariant.
    pub fn from_parts(schema: ColumnSchema, data: ColumnData, missing: Vec<bool>) -> Result<Self> {
        if schema.kind != data.kind() {
            return Err(Error::Schema(format!(
                "column `{}` declared {} but holds {} data",
                schema.name,
                schema.kind,
                data.kind()
            )));
        }
        if data.len() != missing.len() {
            return Err(Error::Schema(format!(
                "column `{}`: {} values but {} mask entries",
                schema.name,
                data.len(),
                missing.len()
            )));
        }
        if !schema.nullable && missing.iter().any(|&m| m) {
            return Err(Error::Schema(format!(
                "column `{}` is not nullable but has missing cells",
                schema.name
            )));
        }
        let mut col = Column {
            schema,
            data,
            missing,
        };
        col.normalize_sentinels()?;
        Ok(col)
    }

    fn normalize_sentinels(&mut self) -> Result<()> {
        let name = &self.schema.name;
        match &mut self.data {
            ColumnData::Categorical { dict, codes } => {
                for (c, &m) in codes.iter_mut().zip(&self.missing) {
                    if m {
                        *c = NULL_CODE;
                    } else if *c as usize >= dict.len() {
                        return Err(Error::Schema(format!(
                            "column `{name}`: category code {c} out of range"
                        )));
                    }
                }
                if dict.iter().any(|s| s.is_empty()) {
                    return Err(Error::Schema(format!(
                        "column `{name}`: empty string is not a valid category"
                    )));
                }
            }
            ColumnData::Numeric(v) => {
                for (x, &m) in v.iter_mut().zip(&self.missing) {
                    if m {
                        *x = 0.0;
                    } else if !x.is_finite() {
                        return Err(Error::Schema(format!(
                            "column `{name}`: non-finite value {x}"
                        )));
                    }
                }
            }
            ColumnData::Datetime(v) => {
                for (x, &m) in v.iter_mut().zip(&self.missing) {
                    if m {
                        *x = 0;
                    }
                }
            }
            ColumnData::Boolean(v) => {
                for (x, &m) in v.iter_mut().zip(&self.missing) {
                    if m {
                        *x = false;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_text<S: AsRef<str>>(schema: ColumnSchema, values: &[Option<S>]) -> Result<Self> {
        let mut interner = Interner::default();
        let mut missing = Vec::with_capacity(values.len());
        let codes = values
            .iter()
            .map(|v| match v {
                Some(s) => {
                    missing.push(false);
                    interner.intern(s.as_ref())
                }
                None => {
                    missing.push(true);
                    NULL_CODE
                }
            })
            .collect();
        Column::from_parts(
            schema,
            ColumnData::Categorical {
                dict: interner.into_dict(),
                codes,
            },
            missing,
        )
    }

    pub fn from_numbers(schema: ColumnSchema, values: &[Option<f64>]) -> Result<Self> {
        let missing = values.iter().map(Option::is_none).collect();
        let data = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        Column::from_parts(schema, ColumnData::Numeric(data), missing)
    }

    pub fn from_times(schema: ColumnSchema, values: &[Option<i64>]) -> Result<Self> {
        let missing = values.iter().map(Option::is_none).collect();
        let data = values.iter().map(|v| v.unwrap_or(0)).collect();
        Column::from_parts(schema, ColumnData::Datetime(data), missing)
    }

    pub fn from_bools(schema: ColumnSchema, values: &[Option<bool>]) -> Result<Self> {
        let missing = values.iter().map(Option::is_none).collect();
        let data = values.iter().map(|v| v.unwrap_or(false)).collect();
        Column::from_parts(schema, ColumnData::Boolean(data), missing)
    }

    /// Nullable categorical column; handy in tests and builders.
    pub fn categorical<S: AsRef<str>>(name: &str, values: &[Option<S>]) -> Result<Self> {
        Column::from_text(ColumnSchema::new(name, ColumnKind::Categorical, true), values)
    }

    pub fn numeric(name: &str, values: &[Option<f64>]) -> Result<Self> {
        Column::from_numbers(ColumnSchema::new(name, ColumnKind::Numeric, true), values)
    }

    pub fn datetime(name: &str, values: &[Option<i64>]) -> Result<Self> {
        Column::from_times(ColumnSchema::new(name, ColumnKind::Datetime, true), values)
    }

    pub fn boolean(name: &str, values: &[Option<bool>]) -> Result<Self> {
        Column::from_bools(ColumnSchema::new(name, ColumnKind::Boolean, true), values)
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.schema.kind
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn value(&self, row: usize) -> Value<'_> {
        if self.missing[row] {
            return Value::Missing;
        }
        match &self.data {
            ColumnData::Categorical { dict, codes } => Value::Text(&dict[codes[row] as usize]),
            ColumnData::Numeric(v) => Value::Number(v[row]),
            ColumnData::Datetime(v) => Value::Time(v[row]),
            ColumnData::Boolean(v) => Value::Bool(v[row]),
        }
    }

    /// Text of a categorical cell, or the canonical rendering of a boolean.
    pub fn text(&self, row: usize) -> Option<&str> {
        if self.missing[row] {
            return None;
        }
        match &self.data {
            ColumnData::Categorical { dict, codes } => Some(&dict[codes[row] as usize]),
            ColumnData::Boolean(v) => Some(if v[row] { "true" } else { "false" }),
            _ => None,
        }
    }

    /// Numeric view of numeric and datetime cells.
    pub fn as_f64(&self, row: usize) -> Option<f64> {
        if self.missing[row] {
            return None;
        }
        match &self.data {
            ColumnData::Numeric(v) => Some(v[row]),
            ColumnData::Datetime(v) => Some(v[row] as f64),
            _ => None,
        }
    }

    pub fn as_time(&self, row: usize) -> Option<i64> {
        match (&self.data, self.missing[row]) {
            (ColumnData::Datetime(v), false) => Some(v[row]),
            _ => None,
        }
    }

    pub fn as_bool(&self, row: usize) -> Option<bool> {
        match (&self.data, self.missing[row]) {
            (ColumnData::Boolean(v), false) => Some(v[row]),
            _ => None,
        }
    }

    /// Text labels for categorical or boolean cells, `None` where missing.
    pub fn labels(&self) -> Vec<Option<String>> {
        (0..self.len()).map(|r| self.text(r).map(str::to_string)).collect()
    }

    /// Numeric values of numeric/datetime cells, `None` where missing.
    pub fn numbers(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|r| self.as_f64(r)).collect()
    }

    /// Non-missing numeric/datetime values.
    pub fn present_f64(&self) -> Vec<f64> {
        (0..self.len()).filter_map(|r| self.as_f64(r)).collect()
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Categorical { dict, .. } => Some(dict),
            _ => None,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.schema.name = name.into();
        self
    }

    pub fn with_nullable(mut self, nullable: bool) -> Result<Self> {
        if !nullable && self.missing_count() > 0 {
            return Err(Error::Schema(format!(
                "column `{}` has missing cells and cannot be made non-nullable",
                self.schema.name
            )));
        }
        self.schema.nullable = nullable;
        Ok(self)
    }

    pub fn take(&self, rows: &[usize]) -> Column {
        let missing = rows.iter().map(|&r| self.missing[r]).collect();
        let data = match &self.data {
            ColumnData::Categorical { dict, codes } => ColumnData::Categorical {
                dict: dict.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Datetime(v) => ColumnData::Datetime(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Boolean(v) => ColumnData::Boolean(rows.iter().map(|&r| v[r]).collect()),
        };
        Column {
            schema: self.schema.clone(),
            data,
            missing,
        }
    }
}

impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.len() == other.len()
            && (0..self.len()).all(|r| self.value(r) == other.value(r))
    }
}

#[derive(Default)]
struct Interner {
    dict: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&c) = self.index.get(s) {
            return c;
        }
        let c = self.dict.len() as u32;
        self.dict.push(s.to_string());
        self.index.insert(s.to_string(), c);
        c
    }

    fn into_dict(self) -> Vec<String> {
        self.dict
    }
}

/// An immutable typed table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        Table::with_rows(columns, n_rows)
    }

    /// Like [`Table::new`] but also valid for zero columns with a row count.
    pub fn with_rows(columns: Vec<Column>, n_rows: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    c.name(),
                    c.len()
                )));
            }
            if !seen.insert(c.name().to_string()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name())));
            }
        }
        Ok(Table { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.columns.len())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Column> {
        self.columns
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns.iter().map(|c| c.schema.clone()).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(Column::name).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn value(&self, row: usize, col: usize) -> Value<'_> {
        self.columns[col].value(row)
    }

    /// Projection onto `names`, in the given order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Table> {
        let columns = names
            .iter()
            .map(|n| self.column(n.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        Table::with_rows(columns, self.n_rows)
    }

    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn filter_rows(&self, keep: &[bool]) -> Table {
        let rows: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect();
        self.take_rows(&rows)
    }

    pub fn with_column(&self, column: Column) -> Result<Table> {
        let mut cols = self.columns.clone();
        cols.push(column);
        Table::with_rows(cols, self.n_rows)
    }

    pub fn without_columns<S: AsRef<str>>(&self, names: &[S]) -> Table {
        let drop: HashSet<&str> = names.iter().map(AsRef::as_ref).collect();
        Table {
            columns: self
                .columns
                .iter()
                .filter(|c| !drop.contains(c.name()))
                .cloned()
                .collect(),
            n_rows: self.n_rows,
        }
    }

    /// Row-wise concatenation of tables whose schemas agree up to
    /// nullability; a column is nullable in the result if it is in any input.
    pub fn concat(tables: &[&Table]) -> Result<Table> {
        let Some(first) = tables.first() else {
            return Table::new(Vec::new());
        };
        let mut schema = first.schema();
        for t in tables {
            let other = t.schema();
            let same = other.len() == schema.len()
                && other
                    .iter()
                    .zip(&schema)
                    .all(|(a, b)| a.name == b.name && a.kind == b.kind && a.unit == b.unit);
            if !same {
                return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
            }
            for (s, o) in schema.iter_mut().zip(other) {
                s.nullable |= o.nullable;
            }
        }
        let mut columns = Vec::with_capacity(schema.len());
        for (j, s) in schema.iter().enumerate() {
            let col = match s.kind {
                ColumnKind::Categorical => {
                    let vals: Vec<Option<String>> =
                        tables.iter().flat_map(|t| t.columns[j].labels()).collect();
                    Column::from_text(s.clone(), &vals)?
                }
                ColumnKind::Numeric => {
                    let vals: Vec<Option<f64>> =
                        tables.iter().flat_map(|t| t.columns[j].numbers()).collect();
                    Column::from_numbers(s.clone(), &vals)?
                }
                ColumnKind::Datetime => {
                    let vals: Vec<Option<i64>> = tables
                        .iter()
                        .flat_map(|t| (0..t.n_rows).map(|r| t.columns[j].as_time(r)))
                        .collect();
                    Column::from_times(s.clone(), &vals)?
                }
                ColumnKind::Boolean => {
                    let vals: Vec<Option<bool>> = tables
                        .iter()
                        .flat_map(|t| (0..t.n_rows).map(|r| t.columns[j].as_bool(r)))
                        .collect();
                    Column::from_bools(s.clone(), &vals)?
                }
            };
            columns.push(col);
        }
        let n_rows = tables.iter().map(|t| t.n_rows).sum();
        Table::with_rows(columns, n_rows)
    }

    /// Canonical CSV encoding of the table.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_csv(self, &mut buf).map_err(|e| Error::Csv {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
        Ok(buf)
    }

    /// SHA-256 over the canonical CSV and schema, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.schema()).unwrap_or_default());
        h.update(self.to_csv_bytes().unwrap_or_default());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn format_datetime(epoch_seconds: i64) -> String {
    match DateTime::<Utc>::from_timestamp(epoch_seconds, 0) {
        Some(dt) => dt.format(DATETIME_FORMAT).to_string(),
        None => epoch_seconds.to_string(),
    }
}

/// Parses `YYYY-MM-DDThh:mm:ssZ` (or any RFC 3339 timestamp) to epoch seconds.
pub fn parse_datetime(s: &str) -> Option<i64> {
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, DATETIME_FORMAT) {
        return Some(dt.and_utc().timestamp());
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

fn parse_number(s: &str) -> Option<f64> {
    // `f64::from_str` accepts "inf"/"nan"; only finite decimals are data.
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

#[derive(Deserialize)]
struct SchemaEntry {
    name: String,
    kind: ColumnKind,
    #[serde(default)]
    unit: Option<String>,
    nullable: bool,
    #[serde(default)]
    timezone: Option<String>,
}

pub fn read_schema(path: impl AsRef<Path>) -> Result<Vec<ColumnSchema>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&text)
}

pub fn parse_schema(text: &str) -> Result<Vec<ColumnSchema>> {
    let entries: Vec<SchemaEntry> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .map(|e| {
            if !seen.insert(e.name.clone()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", e.name)));
            }
            if let Some(tz) = &e.timezone {
                if e.kind != ColumnKind::Datetime || tz != "UTC" {
                    return Err(Error::Schema(format!(
                        "column `{}`: only datetime columns carry a timezone, and it must be UTC",
                        e.name
                    )));
                }
            }
            Ok(ColumnSchema {
                name: e.name,
                kind: e.kind,
                unit: e.unit,
                nullable: e.nullable,
            })
        })
        .collect()
}

pub fn write_schema(schema: &[ColumnSchema], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(schema)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a CSV data file against its JSON schema sidecar.
pub fn read_table(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Table> {
    let schema = read_schema(schema_path)?;
    read_table_with_schema(path, &schema)
}

pub fn read_table_with_schema(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Csv { message, .. } => Error::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses CSV from any reader. The header must name exactly the schema's
/// columns (in any order); the result follows schema order.
pub fn read_csv<R: Read>(reader: R, schema: &[ColumnSchema]) -> Result<Table> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<reader>".into(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let positions: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    for h in &header {
        if !schema.iter().any(|s| &s.name == h) {
            return Err(Error::UnknownColumn(h.clone()));
        }
    }
    let mut source = Vec::with_capacity(schema.len());
    for s in schema {
        match positions.get(s.name.as_str()) {
            Some(&i) => source.push(i),
            None => {
                return Err(Error::Schema(format!(
                    "column `{}` is in the schema but missing from the header",
                    s.name
                )))
            }
        }
    }

    let mut builders: Vec<CellBuilder> = schema.iter().map(CellBuilder::new).collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (b, &i) in builders.iter_mut().zip(&source) {
            b.push(row, &rec[i])?;
        }
    }
    let columns = builders
        .into_iter()
        .map(CellBuilder::finish)
        .collect::<Result<Vec<_>>>()?;
    let n_rows = columns.first().map_or(0, Column::len);
    Table::with_rows(columns, n_rows)
}

struct CellBuilder<'s> {
    schema: &'s ColumnSchema,
    interner: Interner,
    codes: Vec<u32>,
    numbers: Vec<f64>,
    times: Vec<i64>,
    bools: Vec<bool>,
    missing: Vec<bool>,
}

impl<'s> CellBuilder<'s> {
    fn new(schema: &'s ColumnSchema) -> Self {
        CellBuilder {
            schema,
            interner: Interner::default(),
            codes: Vec::new(),
            numbers: Vec::new(),
            times: Vec::new(),
            bools: Vec::new(),
            missing: Vec::new(),
        }
    }

    fn push(&mut self, row: usize, raw: &str) -> Result<()> {
        let missing = raw.is_empty();
        if missing && !self.schema.nullable {
            return Err(Error::Parse {
                row,
                column: self.schema.name.clone(),
                value: raw.to_string(),
                expected: "a value (column is not nullable)",
            });
        }
        self.missing.push(missing);
        let err = |expected| Error::Parse {
            row,
            column: self.schema.name.clone(),
            value: raw.to_string(),
            expected,
        };
        match self.schema.kind {
            ColumnKind::Categorical => {
                let c = if missing { NULL_CODE } else { self.interner.intern(raw) };
                self.codes.push(c);
            }
            ColumnKind::Numeric => {
                let x = if missing {
                    0.0
                } else {
                    parse_number(raw).ok_or_else(|| err("a finite decimal number"))?
                };
                self.numbers.push(x);
            }
            ColumnKind::Datetime => {
                let t = if missing {
                    0
                } else {
                    parse_datetime(raw).ok_or_else(|| err("an ISO-8601 UTC datetime"))?
                };
                self.times.push(t);
            }
            ColumnKind::Boolean => {
                let b = if missing {
                    false
                } else {
                    parse_bool(raw).ok_or_else(|| err("a boolean"))?
                };
                self.bools.push(b);
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Column> {
        let data = match self.schema.kind {
            ColumnKind::Categorical => ColumnData::Categorical {
                dict: self.interner.into_dict(),
                codes: self.codes,
            },
            ColumnKind::Numeric => ColumnData::Numeric(self.numbers),
            ColumnKind::Datetime => ColumnData::Datetime(self.times),
            ColumnKind::Boolean => ColumnData::Boolean(self.bools),
        };
        Column::from_parts(self.schema.clone(), data, self.missing)
    }
}

pub fn write_csv<W: Write>(table: &Table, writer: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(table.names())?;
    let mut record = Vec::with_capacity(table.n_cols());
    for row in 0..table.n_rows() {
        record.clear();
        record.extend(table.columns().iter().map(|c| c.value(row).render()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the CSV data file. See [`write_table_with_schema`] for the sidecar.
pub fn write_table(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let buf = std::io::BufWriter::new(file);
    write_csv(table, buf).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `<stem>.csv` data and `<stem>.schema.json` sidecar side by side and
/// returns both paths.
pub fn write_table_with_schema(
    table: &Table,
    csv_path: impl AsRef<Path>,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let csv_path = csv_path.as_ref().to_path_buf();
    let schema_path = schema_path_for(&csv_path);
    write_table(table, &csv_path)?;
    write_schema(&table.schema(), &schema_path)?;
    Ok((csv_path, schema_path))
}

/// Conventional sidecar location: `data.csv` → `data.schema.json`.
pub fn schema_path_for(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.schema.json"))
}
