//! Reversible conversion between typed tables and fully numeric matrices.
//!
//! Nullable columns with missing cells are first split into a filled value
//! column plus a `"Yes"`/`"No"` presence indicator ([`split_missing`]); the
//! resulting table is then encoded per generator target:
//!
//! | column kind            | copula target                   | tvae target                       |
//! |------------------------|---------------------------------|-----------------------------------|
//! | categorical / boolean  | uniform draw in frequency interval | one-hot block                  |
//! | datetime               | affine-scaled epoch seconds     | z-score (or mode-normalised)      |
//! | numeric                | passed through                  | z-score (or mode-normalised)      |

mod gmm;

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm, fit_mode_normalizer, GmmFit, ModeNormalizer, MIN_MODE_WEIGHT, VARIANCE_FLOOR};

use crate::error::{Error, Result};
use crate::numkit::{mean, rng_stream, sample_std};
use crate::table::{Column, ColumnKind, ColumnSchema, Table};

pub const INDICATOR_SUFFIX: &str = ".present";
pub const PRESENT: &str = "Yes";
pub const ABSENT: &str = "No";

/// Name of the presence indicator for `column`.
pub fn indicator_name(column: &str) -> String {
    format!("{column}{INDICATOR_SUFFIX}")
}

/// Splits every column with missing cells into a filled value column
/// (missing cells replaced by uniform draws from the column's observed
/// values) followed by its presence indicator.
pub fn split_missing(table: &Table, seed: u64) -> Result<Table> {
    let mut out = Vec::with_capacity(table.n_cols());
    for (j, col) in table.columns().iter().enumerate() {
        let n_missing = col.missing_count();
        if n_missing == 0 {
            out.push(col.clone());
            continue;
        }
        if n_missing == col.len() {
            return Err(Error::Encode(format!(
                "column `{}` is entirely missing and cannot be filled",
                col.name()
            )));
        }
        let observed: Vec<usize> = (0..col.len()).filter(|&r| !col.is_missing(r)).collect();
        let mut rng = rng_stream(seed, j as u64);
        let source: Vec<usize> = (0..col.len())
            .map(|r| {
                if col.is_missing(r) {
                    observed[rng.gen_range(0..observed.len())]
                } else {
                    r
                }
            })
            .collect();
        let filled = col.take(&source);
        let indicator: Vec<Option<&str>> = col
            .missing_mask()
            .iter()
            .map(|&m| Some(if m { ABSENT } else { PRESENT }))
            .collect();
        let schema = ColumnSchema::new(indicator_name(col.name()), ColumnKind::Categorical, false);
        out.push(filled);
        out.push(Column::from_text(schema, &indicator)?);
    }
    Table::with_rows(out, table.n_rows())
}

/// Inverse of [`split_missing`]: re-masks value cells whose indicator is
/// `"No"` and drops the indicator columns, restoring the original schema.
pub fn merge_missing(table: &Table, state: &EncoderState) -> Result<Table> {
    let mut out = Vec::with_capacity(state.original.len());
    for schema in &state.original {
        let col = table.column(&schema.name)?;
        let ind_name = indicator_name(&schema.name);
        let col = if state.split.contains(&schema.name) {
            let ind = table.column(&ind_name).map_err(|_| {
                Error::Encode(format!("indicator column `{ind_name}` is missing"))
            })?;
            let mut mask = col.missing_mask().to_vec();
            for (r, m) in mask.iter_mut().enumerate() {
                match ind.text(r) {
                    Some(PRESENT) => {}
                    Some(ABSENT) | None => *m = true,
                    Some(other) => {
                        return Err(Error::Encode(format!(
                            "indicator `{ind_name}` holds unexpected value `{other}`"
                        )))
                    }
                }
            }
            let data = col.data().clone();
            Column::from_parts(schema.clone(), data, mask)?
        } else {
            col.clone()
        };
        if col.kind() != schema.kind {
            return Err(Error::Encode(format!(
                "column `{}` changed kind during encoding",
                schema.name
            )));
        }
        out.push(col);
    }
    Table::with_rows(out, table.n_rows())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Copula,
    Tvae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderOptions {
    /// Use GMM mode-specific normalisation for continuous columns (tvae only).
    pub mode_normalize: bool,
    pub max_modes: usize,
    /// Seed that was given to [`split_missing`], recorded for provenance.
    pub fill_seed: Option<u64>,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions {
            mode_normalize: false,
            max_modes: 10,
            fill_seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    /// Category `k` owns `[bounds[k], bounds[k+1])`; widths are frequencies.
    Intervals {
        categories: Vec<String>,
        bounds: Vec<f64>,
    },
    OneHot {
        categories: Vec<String>,
    },
    /// `(x − offset) / scale`.
    Affine {
        offset: f64,
        scale: f64,
        integral: bool,
    },
    /// z-score followed by mixture-mode normalisation.
    Modes {
        offset: f64,
        scale: f64,
        integral: bool,
        normalizer: ModeNormalizer,
    },
}

impl Transform {
    pub fn width(&self) -> usize {
        match self {
            Transform::Intervals { .. } | Transform::Affine { .. } => 1,
            Transform::OneHot { categories } => categories.len(),
            Transform::Modes { normalizer, .. } => 1 + normalizer.n_modes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub schema: ColumnSchema,
    pub transform: Transform,
}

/// Everything needed to encode a table and invert the encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub target: Target,
    pub options: EncoderOptions,
    /// Schema before [`split_missing`].
    pub original: Vec<ColumnSchema>,
    /// Original columns that were split into value + indicator.
    pub split: Vec<String>,
    /// One entry per column of the split table.
    pub columns: Vec<ColumnEncoding>,
}

impl EncoderState {
    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.transform.width()).sum()
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut offset = 0;
        self.columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let kind = match &c.transform {
                    Transform::Intervals { .. } => BlockKind::Interval,
                    Transform::OneHot { .. } => BlockKind::OneHot,
                    Transform::Affine { .. } => BlockKind::Continuous,
                    Transform::Modes { normalizer, .. } => BlockKind::Mode {
                        n_modes: normalizer.n_modes(),
                    },
                };
                let b = Block {
                    column: i,
                    offset,
                    width: c.transform.width(),
                    kind,
                };
                offset += b.width;
                b
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockKind {
    Continuous,
    Interval,
    OneHot,
    /// Scalar at `offset`, then an `n_modes`-wide one-hot.
    Mode { n_modes: usize },
}

/// Span of matrix columns produced by one table column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub column: usize,
    pub offset: usize,
    pub width: usize,
    pub kind: BlockKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMatrix {
    pub data: Array2<f64>,
    pub blocks: Vec<Block>,
}

impl EncodedMatrix {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }
}

/// Counts of generator outputs that needed repair while decoding.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub clamped_intervals: usize,
    pub malformed_one_hots: usize,
}

/// Categories in descending frequency, ties broken lexicographically.
fn ranked_categories(col: &Column) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in 0..col.len() {
        if let Some(t) = col.text(r) {
            *counts.entry(t.to_string()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Frequency intervals over `[0, 1)`; the last bound is exactly 1.
pub fn frequency_intervals(col: &Column) -> (Vec<String>, Vec<f64>) {
    let ranked = ranked_categories(col);
    let total: usize = ranked.iter().map(|r| r.1).sum();
    let mut bounds = Vec::with_capacity(ranked.len() + 1);
    let mut acc = 0usize;
    bounds.push(0.0);
    for (_, c) in &ranked {
        acc += c;
        bounds.push(acc as f64 / total as f64);
    }
    if let Some(last) = bounds.last_mut() {
        *last = 1.0;
    }
    (ranked.into_iter().map(|r| r.0).collect(), bounds)
}

fn is_integral(values: &[f64]) -> bool {
    values.iter().all(|x| x.fract() == 0.0)
}

fn affine_params(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    let sd = sample_std(values);
    (m, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

/// Learns per-column transforms for `target` from a table that has already
/// been through [`split_missing`].
pub fn fit_encoder(table: &Table, target: Target, options: &EncoderOptions) -> Result<EncoderState> {
    if table.n_rows() == 0 || table.n_cols() == 0 {
        return Err(Error::Encode("cannot fit an encoder on an empty table".into()));
    }
    let mut original = Vec::new();
    let mut split = Vec::new();
    let mut columns = Vec::new();
    for col in table.columns() {
        let name = col.name();
        let is_indicator = name
            .strip_suffix(INDICATOR_SUFFIX)
            .and_then(|base| table.column(base).ok())
            .is_some_and(|base| base.schema().nullable)
            && col.kind() == ColumnKind::Categorical
            && col.categories().is_some_and(|c| c.iter().all(|v| v == PRESENT || v == ABSENT));
        if is_indicator {
            split.push(name.strip_suffix(INDICATOR_SUFFIX).unwrap().to_string());
        } else {
            original.push(col.schema().clone());
        }
        if col.missing_count() > 0 {
            return Err(Error::Encode(format!(
                "column `{name}` still has missing cells; apply split_missing first"
            )));
        }
        let transform = match (col.kind(), target) {
            (ColumnKind::Categorical | ColumnKind::Boolean, Target::Copula) => {
                let (categories, bounds) = frequency_intervals(col);
                if categories.len() == 1 {
                    log::debug!("column `{name}` has a single category; its interval is [0, 1)");
                }
                Transform::Intervals { categories, bounds }
            }
            (ColumnKind::Categorical | ColumnKind::Boolean, Target::Tvae) => {
                let categories = ranked_categories(col).into_iter().map(|r| r.0).collect();
                Transform::OneHot { categories }
            }
            (ColumnKind::Numeric, Target::Copula) => Transform::Affine {
                offset: 0.0,
                scale: 1.0,
                integral: is_integral(&col.present_f64()),
            },
            (ColumnKind::Datetime, Target::Copula) => {
                let (offset, scale) = affine_params(&col.present_f64());
                Transform::Affine {
                    offset,
                    scale,
                    integral: true,
                }
            }
            (ColumnKind::Numeric | ColumnKind::Datetime, Target::Tvae) => {
                let values = col.present_f64();
                let (offset, scale) = affine_params(&values);
                let integral = col.kind() == ColumnKind::Datetime || is_integral(&values);
                if options.mode_normalize {
                    let z: Vec<f64> = values.iter().map(|x| (x - offset) / scale).collect();
                    let normalizer = fit_mode_normalizer(&z, options.max_modes)?;
                    Transform::Modes {
                        offset,
                        scale,
                        integral,
                        normalizer,
                    }
                } else {
                    Transform::Affine {
                        offset,
                        scale,
                        integral,
                    }
                }
            }
        };
        columns.push(ColumnEncoding {
            schema: col.schema().clone(),
            transform,
        });
    }
    Ok(EncoderState {
        target,
        options: options.clone(),
        original,
        split,
        columns,
    })
}

fn category_index(categories: &[String]) -> HashMap<&str, usize> {
    categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

/// Encodes a split table into a numeric matrix. Interval draws use one RNG
/// stream per column derived from `(seed, column index)`.
pub fn encode(table: &Table, state: &EncoderState, seed: u64) -> Result<EncodedMatrix> {
    if table.n_cols() != state.columns.len() {
        return Err(Error::Encode(format!(
            "table has {} columns, encoder expects {}",
            table.n_cols(),
            state.columns.len()
        )));
    }
    let blocks = state.blocks();
    let n = table.n_rows();
    let mut data = Array2::<f64>::zeros((n, state.width()));
    for (j, (enc, block)) in state.columns.iter().zip(&blocks).enumerate() {
        let col = &table.columns()[j];
        if col.name() != enc.schema.name || col.kind() != enc.schema.kind {
            return Err(Error::Encode(format!(
                "column {j} is `{}` ({}), encoder expects `{}` ({})",
                col.name(),
                col.kind(),
                enc.schema.name,
                enc.schema.kind
            )));
        }
        if col.missing_count() > 0 {
            return Err(Error::Encode(format!(
                "column `{}` has missing cells; apply split_missing first",
                col.name()
            )));
        }
        let unseen = |r: usize| {
            Error::Encode(format!(
                "column `{}`: unseen category `{}`",
                col.name(),
                col.text(r).unwrap_or_default()
            ))
        };
        let off = block.offset;
        match &enc.transform {
            Transform::Intervals { categories, bounds } => {
                let index = category_index(categories);
                let mut rng = rng_stream(seed, j as u64);
                for r in 0..n {
                    let k = *index.get(col.text(r).unwrap_or_default()).ok_or_else(|| unseen(r))?;
                    let (lo, hi) = (bounds[k], bounds[k + 1]);
                    let u: f64 = rng.gen();
                    data[[r, off]] = (lo + (hi - lo) * u).min(hi - f64::EPSILON * hi).max(lo);
                }
            }
            Transform::OneHot { categories } => {
                let index = category_index(categories);
                for r in 0..n {
                    let k = *index.get(col.text(r).unwrap_or_default()).ok_or_else(|| unseen(r))?;
                    data[[r, off + k]] = 1.0;
                }
            }
            Transform::Affine { offset, scale, .. } => {
                for r in 0..n {
                    data[[r, off]] = (col.as_f64(r).unwrap_or(0.0) - offset) / scale;
                }
            }
            Transform::Modes {
                offset,
                scale,
                normalizer,
                ..
            } => {
                for r in 0..n {
                    let z = (col.as_f64(r).unwrap_or(0.0) - offset) / scale;
                    let (k, s) = normalizer.normalize(z);
                    data[[r, off]] = s;
                    data[[r, off + 1 + k]] = 1.0;
                }
            }
        }
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Encode("encoded matrix contains non-finite values".into()));
    }
    Ok(EncodedMatrix { data, blocks })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn is_clean_one_hot(v: &[f64]) -> bool {
    v.iter().filter(|&&x| x == 1.0).count() == 1 && v.iter().all(|&x| x == 0.0 || x == 1.0)
}

/// Decodes a matrix back into a table with the original (pre-split) schema,
/// re-masking missing cells through the indicator columns.
pub fn decode(matrix: &EncodedMatrix, state: &EncoderState) -> Result<(Table, DecodeReport)> {
    if matrix.n_cols() != state.width() {
        return Err(Error::Encode(format!(
            "matrix has {} columns, encoder layout needs {}",
            matrix.n_cols(),
            state.width()
        )));
    }
    let n = matrix.n_rows();
    let mut report = DecodeReport::default();
    let mut columns = Vec::with_capacity(state.columns.len());
    for (enc, block) in state.columns.iter().zip(state.blocks()) {
        let off = block.offset;
        let schema = ColumnSchema {
            nullable: enc.schema.nullable,
            ..enc.schema.clone()
        };
        let col = match &enc.transform {
            Transform::Intervals { categories, bounds } => {
                let labels: Vec<Option<&str>> = (0..n)
                    .map(|r| {
                        let v = matrix.data[[r, off]];
                        if !(0.0..=1.0).contains(&v) {
                            report.clamped_intervals += 1;
                        }
                        let k = bounds[1..].partition_point(|&b| b <= v).min(categories.len() - 1);
                        Some(categories[k].as_str())
                    })
                    .collect();
                text_column(schema, &labels)?
            }
            Transform::OneHot { categories } => {
                let labels: Vec<Option<&str>> = (0..n)
                    .map(|r| {
                        let row = matrix.data.row(r);
                        let slice = &row.as_slice().map(|s| s[off..off + block.width].to_vec())
                            .unwrap_or_else(|| (off..off + block.width).map(|c| row[c]).collect());
                        if !is_clean_one_hot(slice) {
                            report.malformed_one_hots += 1;
                        }
                        Some(categories[argmax(slice)].as_str())
                    })
                    .collect();
                text_column(schema, &labels)?
            }
            Transform::Affine {
                offset,
                scale,
                integral,
            } => {
                let values: Vec<f64> = (0..n).map(|r| matrix.data[[r, off]] * scale + offset).collect();
                continuous_column(schema, &values, *integral)?
            }
            Transform::Modes {
                offset,
                scale,
                integral,
                normalizer,
            } => {
                let k = normalizer.n_modes();
                let values: Vec<f64> = (0..n)
                    .map(|r| {
                        let modes: Vec<f64> = (0..k).map(|c| matrix.data[[r, off + 1 + c]]).collect();
                        if !is_clean_one_hot(&modes) {
                            report.malformed_one_hots += 1;
                        }
                        let z = normalizer.denormalize(argmax(&modes), matrix.data[[r, off]]);
                        z * scale + offset
                    })
                    .collect();
                continuous_column(schema, &values, *integral)?
            }
        };
        columns.push(col);
    }
    let split_table = Table::with_rows(columns, n)?;
    Ok((merge_missing(&split_table, state)?, report))
}

fn text_column(schema: ColumnSchema, labels: &[Option<&str>]) -> Result<Column> {
    if schema.kind == ColumnKind::Boolean {
        let vals: Vec<Option<bool>> = labels.iter().map(|l| l.map(|s| s == "true")).collect();
        Column::from_bools(schema, &vals)
    } else {
        Column::from_text(schema, labels)
    }
}

fn continuous_column(schema: ColumnSchema, values: &[f64], integral: bool) -> Result<Column> {
    match schema.kind {
        ColumnKind::Datetime => {
            let vals: Vec<Option<i64>> = values.iter().map(|v| Some(v.round() as i64)).collect();
            Column::from_times(schema, &vals)
        }
        _ => {
            let vals: Vec<Option<f64>> = values
                .iter()
                .map(|&v| Some(if integral { v.round() } else { v }))
                .collect();
            Column::from_numbers(schema, &vals)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(name: &str, v: &[Option<f64>]) -> Column {
        Column::numeric(name, v).unwrap()
    }

    #[test]
    fn split_fills_from_observed_and_adds_indicator() {
        let t = Table::new(vec![num("x", &[Some(5.0), None, Some(7.0)])]).unwrap();
        let s = split_missing(&t, 1).unwrap();
        assert_eq!(s.names(), vec!["x", "x.present"]);
        let x = s.column("x").unwrap();
        assert_eq!(x.as_f64(0), Some(5.0));
        assert!(matches!(x.as_f64(1), Some(v) if v == 5.0 || v == 7.0));
        assert_eq!(x.as_f64(2), Some(7.0));
        assert_eq!(s.column("x.present").unwrap().labels(), vec![
            Some("Yes".to_string()),
            Some("No".to_string()),
            Some("Yes".to_string())
        ]);
        assert_eq!(split_missing(&t, 1).unwrap(), s);
    }

    #[test]
    fn split_leaves_complete_columns_alone() {
        let t = Table::new(vec![num("x", &[Some(1.0), Some(2.0)])]).unwrap();
        assert_eq!(split_missing(&t, 0).unwrap(), t);
    }

    #[test]
    fn split_rejects_fully_missing_column() {
        let t = Table::new(vec![num("x", &[None, None])]).unwrap();
        assert!(split_missing(&t, 0).is_err());
    }

    #[test]
    fn merge_restores_mask_and_handles_synthetic_no() {
        let t = Table::new(vec![
            num("x", &[Some(5.0), None, Some(7.0)]),
            Column::categorical("c", &[Some("a"), Some("b"), None]).unwrap(),
        ])
        .unwrap();
        let s = split_missing(&t, 3).unwrap();
        let state = fit_encoder(&s, Target::Copula, &EncoderOptions::default()).unwrap();
        assert_eq!(state.split, vec!["x".to_string(), "c".to_string()]);
        assert_eq!(merge_missing(&s, &state).unwrap(), t);

        // All-"Yes" indicator → nothing masked.
        let all_yes = Column::from_text(
            ColumnSchema::new("x.present", ColumnKind::Categorical, false),
            &[Some("Yes"); 3],
        )
        .unwrap();
        let mut cols = s.columns().to_vec();
        cols[1] = all_yes;
        let merged = merge_missing(&Table::new(cols).unwrap(), &state).unwrap();
        assert_eq!(merged.column("x").unwrap().missing_count(), 0);
    }

    #[test]
    fn frequency_intervals_are_ordered_by_frequency() {
        let vals: Vec<Option<&str>> = (0..10).map(|i| Some(if i < 6 { "A" } else { "B" })).collect();
        let col = Column::categorical("c", &vals).unwrap();
        let (cats, bounds) = frequency_intervals(&col);
        assert_eq!(cats, vec!["A", "B"]);
        assert!((bounds[1] - 0.6).abs() < 1e-12);
        assert_eq!(bounds[2], 1.0);
    }

    #[test]
    fn ties_broken_lexicographically() {
        let col = Column::categorical("c", &[Some("b"), Some("a")]).unwrap();
        assert_eq!(frequency_intervals(&col).0, vec!["a", "b"]);
    }

    #[test]
    fn interval_encoding_stays_inside_interval() {
        let vals: Vec<Option<&str>> = (0..100).map(|i| Some(if i % 5 < 3 { "A" } else { "B" })).collect();
        let t = Table::new(vec![Column::categorical("c", &vals).unwrap()]).unwrap();
        let st = fit_encoder(&t, Target::Copula, &EncoderOptions::default()).unwrap();
        let m = encode(&t, &st, 9).unwrap();
        for r in 0..100 {
            let v = m.data[[r, 0]];
            if vals[r] == Some("A") {
                assert!((0.0..0.6).contains(&v));
            } else {
                assert!((0.6..1.0).contains(&v));
            }
        }
        assert_eq!(encode(&t, &st, 9).unwrap(), m);
    }

    #[test]
    fn standardisation_and_constant_columns() {
        let t = Table::new(vec![
            num("x", &[Some(8.0), Some(12.0)]),
            num("k", &[Some(3.0), Some(3.0)]),
        ])
        .unwrap();
        let st = fit_encoder(&t, Target::Tvae, &EncoderOptions::default()).unwrap();
        match &st.columns[1].transform {
            Transform::Affine { offset, scale, .. } => {
                assert_eq!((*offset, *scale), (3.0, 1.0));
            }
            other => panic!("{other:?}"),
        }
        // (mean 10, std 2.828..) → check the arithmetic directly
        let m = encode(&t, &st, 0).unwrap();
        let sd = 8f64.sqrt();
        assert!((m.data[[1, 0]] - 2.0 / sd).abs() < 1e-12);
    }

    #[test]
    fn z_score_arithmetic() {
        let enc = EncoderState {
            target: Target::Tvae,
            options: EncoderOptions::default(),
            original: vec![ColumnSchema::new("x", ColumnKind::Numeric, true)],
            split: vec![],
            columns: vec![ColumnEncoding {
                schema: ColumnSchema::new("x", ColumnKind::Numeric, true),
                transform: Transform::Affine {
                    offset: 10.0,
                    scale: 2.0,
                    integral: false,
                },
            }],
        };
        let t = Table::new(vec![num("x", &[Some(14.0)])]).unwrap();
        assert_eq!(encode(&t, &enc, 0).unwrap().data[[0, 0]], 2.0);
    }

    #[test]
    fn boolean_one_hot_for_tvae() {
        let t = Table::new(vec![Column::boolean("b", &[Some(true), Some(false), Some(true)]).unwrap()]).unwrap();
        let st = fit_encoder(&t, Target::Tvae, &EncoderOptions::default()).unwrap();
        assert_eq!(st.width(), 2);
        let m = encode(&t, &st, 0).unwrap();
        let (back, rep) = decode(&m, &st).unwrap();
        assert_eq!(back, t);
        assert_eq!(rep, DecodeReport::default());
    }

    #[test]
    fn decode_interval_membership_and_clamp() {
        let vals: Vec<Option<&str>> = (0..10).map(|i| Some(if i < 6 { "A" } else { "B" })).collect();
        let t = Table::new(vec![Column::from_text(ColumnSchema::new("c", ColumnKind::Categorical, false), &vals).unwrap()]).unwrap();
        let st = fit_encoder(&t, Target::Copula, &EncoderOptions::default()).unwrap();
        let blocks = st.blocks();
        let m = EncodedMatrix {
            data: Array2::from_shape_vec((3, 1), vec![0.3, 1.7, -0.2]).unwrap(),
            blocks,
        };
        let (back, rep) = decode(&m, &st).unwrap();
        assert_eq!(back.column("c").unwrap().labels(), vec![
            Some("A".into()),
            Some("B".into()),
            Some("A".into())
        ]);
        assert_eq!(rep.clamped_intervals, 2);
    }

    #[test]
    fn decode_malformed_one_hot_uses_argmax() {
        let t = Table::new(vec![Column::from_text(
            ColumnSchema::new("c", ColumnKind::Categorical, false),
            &[Some("x"), Some("x"), Some("x"), Some("y"), Some("y"), Some("z")],
        )
        .unwrap()])
        .unwrap();
        let st = fit_encoder(&t, Target::Tvae, &EncoderOptions::default()).unwrap();
        let m = EncodedMatrix {
            data: Array2::from_shape_vec((1, 3), vec![0.2, 0.7, 0.1]).unwrap(),
            blocks: st.blocks(),
        };
        let (back, rep) = decode(&m, &st).unwrap();
        assert_eq!(back.column("c").unwrap().text(0), Some("y"));
        assert_eq!(rep.malformed_one_hots, 1);
    }

    #[test]
    fn unseen_category_is_reported() {
        let fit_t = Table::new(vec![Column::categorical("c", &[Some("a")]).unwrap()]).unwrap();
        let st = fit_encoder(&fit_t, Target::Copula, &EncoderOptions::default()).unwrap();
        let other = Table::new(vec![Column::categorical("c", &[Some("zz")]).unwrap()]).unwrap();
        let err = encode(&other, &st, 0).unwrap_err().to_string();
        assert!(err.contains("`c`") && err.contains("zz"), "{err}");
    }

    #[test]
    fn mode_normalised_round_trip() {
        let vals: Vec<Option<f64>> = (0..400)
            .map(|i| Some(if i % 2 == 0 { (i % 7) as f64 } else { 100.0 + (i % 5) as f64 }))
            .collect();
        let t = Table::new(vec![num("x", &vals)]).unwrap();
        let opts = EncoderOptions {
            mode_normalize: true,
            ..Default::default()
        };
        let st = fit_encoder(&t, Target::Tvae, &opts).unwrap();
        let m = encode(&t, &st, 0).unwrap();
        let (back, _) = decode(&m, &st).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn state_json_round_trip() {
        let t = Table::new(vec![
            num("x", &[Some(1.0), None, Some(3.5)]),
            Column::datetime("t", &[Some(0), Some(60), Some(120)]).unwrap(),
        ])
        .unwrap();
        let s = split_missing(&t, 0).unwrap();
        let st = fit_encoder(&s, Target::Copula, &EncoderOptions::default()).unwrap();
        assert_eq!(EncoderState::from_json(&st.to_json().unwrap()).unwrap(), st);
    }
}
