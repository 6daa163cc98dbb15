//! Table → numeric learner features.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encode::INDICATOR_SUFFIX;
use crate::error::{Error, Result};
use crate::numkit::{mean, sample_std};
use crate::table::{ColumnKind, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureTransform {
    /// Frequency-interval midpoints; missing cells rank as their own
    /// category. Values never seen at fit time map to `unseen`.
    Midpoint { values: BTreeMap<String, f64>, missing: Option<f64>, unseen: f64 },
    /// `(x − offset)/scale`; missing cells take the fit mean and set the
    /// presence indicator when one is kept.
    Scaled { offset: f64, scale: f64, fill: f64, indicator: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub transform: FeatureTransform,
}

/// Encodes categorical/boolean columns by frequency-interval midpoint,
/// datetimes as standardised epoch seconds and numerics as-is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureEncoder {
    pub fn fit<S: AsRef<str>>(table: &Table, columns: &[S]) -> Result<Self> {
        let mut out = Vec::with_capacity(columns.len());
        for name in columns {
            let col = table.column(name.as_ref())?;
            let transform = match col.kind() {
                ColumnKind::Categorical | ColumnKind::Boolean => {
                    let mut counts: BTreeMap<Option<String>, usize> = BTreeMap::new();
                    for l in col.labels() {
                        *counts.entry(l).or_default() += 1;
                    }
                    let mut ranked: Vec<(Option<String>, usize)> = counts.into_iter().collect();
                    // Descending frequency, then label order with missing last.
                    ranked.sort_by(|a, b| {
                        b.1.cmp(&a.1).then_with(|| match (&a.0, &b.0) {
                            (Some(x), Some(y)) => x.cmp(y),
                            (None, Some(_)) => std::cmp::Ordering::Greater,
                            (Some(_), None) => std::cmp::Ordering::Less,
                            (None, None) => std::cmp::Ordering::Equal,
                        })
                    });
                    let total = col.len().max(1) as f64;
                    let mut values = BTreeMap::new();
                    let mut missing = None;
                    let mut acc = 0usize;
                    for (label, c) in ranked {
                        let mid = (acc as f64 + c as f64 / 2.0) / total;
                        acc += c;
                        match label {
                            Some(l) => {
                                values.insert(l, mid);
                            }
                            None => missing = Some(mid),
                        }
                    }
                    FeatureTransform::Midpoint {
                        values,
                        missing,
                        unseen: 1.0,
                    }
                }
                kind => {
                    let present = col.present_f64();
                    let fill = if present.is_empty() { 0.0 } else { mean(&present) };
                    let (offset, scale) = if kind == ColumnKind::Datetime {
                        let sd = sample_std(&present);
                        (fill, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
                    } else {
                        (0.0, 1.0)
                    };
                    FeatureTransform::Scaled {
                        offset,
                        scale,
                        fill,
                        indicator: col.missing_count() > 0,
                    }
                }
            };
            out.push(FeatureColumn {
                name: name.as_ref().to_string(),
                transform,
            });
        }
        Ok(FeatureEncoder { columns: out })
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c.transform {
                FeatureTransform::Scaled { indicator: true, .. } => 2,
                _ => 1,
            })
            .sum()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for c in &self.columns {
            names.push(c.name.clone());
            if let FeatureTransform::Scaled { indicator: true, .. } = c.transform {
                names.push(format!("{}{INDICATOR_SUFFIX}", c.name));
            }
        }
        names
    }

    pub fn transform(&self, table: &Table) -> Result<Array2<f64>> {
        let n = table.n_rows();
        let mut x = Array2::<f64>::zeros((n, self.width()));
        let mut j = 0;
        for fc in &self.columns {
            let col = table.column(&fc.name)?;
            match &fc.transform {
                FeatureTransform::Midpoint {
                    values,
                    missing,
                    unseen,
                } => {
                    if col.kind().is_continuous() {
                        return Err(Error::Schema(format!("column `{}` is no longer categorical", fc.name)));
                    }
                    for r in 0..n {
                        x[[r, j]] = match col.text(r) {
                            Some(l) => values.get(l).copied().unwrap_or(*unseen),
                            None => missing.unwrap_or(*unseen),
                        };
                    }
                    j += 1;
                }
                FeatureTransform::Scaled {
                    offset,
                    scale,
                    fill,
                    indicator,
                } => {
                    if !col.kind().is_continuous() {
                        return Err(Error::Schema(format!("column `{}` is no longer numeric", fc.name)));
                    }
                    for r in 0..n {
                        let v = col.as_f64(r);
                        x[[r, j]] = (v.unwrap_or(*fill) - offset) / scale;
                        if *indicator {
                            x[[r, j + 1]] = if v.is_some() { 1.0 } else { 0.0 };
                        }
                    }
                    j += 1 + usize::from(*indicator);
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn midpoints_follow_frequency_order() {
        let t = Table::new(vec![
            Column::categorical("c", &[Some("b"), Some("a"), Some("b"), None]).unwrap(),
            Column::numeric("x", &[Some(1.0), None, Some(3.0), Some(5.0)]).unwrap(),
            Column::datetime("t", &[Some(0), Some(10), Some(20), Some(30)]).unwrap(),
        ])
        .unwrap();
        let enc = FeatureEncoder::fit(&t, &["c", "x", "t"]).unwrap();
        assert_eq!(enc.names(), ["c", "x", "x.present", "t"]);
        let m = enc.transform(&t).unwrap();
        // b: [0, .5) → .25; a: [.5, .75) → .625; missing: [.75, 1) → .875
        assert_eq!(m.column(0).to_vec(), vec![0.25, 0.625, 0.25, 0.875]);
        assert_eq!(m.column(1).to_vec(), vec![1.0, 3.0, 3.0, 5.0]);
        assert_eq!(m.column(2).to_vec(), vec![1.0, 0.0, 1.0, 1.0]);
        let t_col = m.column(3);
        assert!(t_col.sum().abs() < 1e-12);

        let other = Table::new(vec![
            Column::categorical("c", &[Some("z")]).unwrap(),
            Column::numeric("x", &[Some(2.0)]).unwrap(),
            Column::datetime("t", &[Some(15)]).unwrap(),
        ])
        .unwrap();
        assert_eq!(enc.transform(&other).unwrap()[[0, 0]], 1.0);
    }
}
