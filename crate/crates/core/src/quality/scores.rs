//! Column and column-pair similarity scores. All are 1 for identical
//! inputs and 0 for maximally different ones.

use std::collections::BTreeMap;

use crate::numkit::{pearson, quantile_sorted, sort_f64};
use crate::table::Column;

/// Category key; `None` is a missing cell.
pub type Key = Option<String>;

fn frequencies<K: Ord + Clone>(keys: &[K]) -> BTreeMap<K, f64> {
    let mut m: BTreeMap<K, f64> = BTreeMap::new();
    for k in keys {
        *m.entry(k.clone()).or_default() += 1.0;
    }
    let n = keys.len() as f64;
    m.values_mut().for_each(|v| *v /= n);
    m
}

/// `1 − ½·Σ|p − q|` over the union of keys, summed in key order.
pub fn tvd_complement<K: Ord + Clone>(real: &[K], synth: &[K]) -> f64 {
    if real.is_empty() || synth.is_empty() {
        return if real.is_empty() && synth.is_empty() { 1.0 } else { 0.0 };
    }
    let p = frequencies(real);
    let q = frequencies(synth);
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    let sum: f64 = keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    (1.0 - 0.5 * sum).clamp(0.0, 1.0)
}

pub fn tvd_score(real: &[Key], synth: &[Key]) -> f64 {
    tvd_complement(real, synth)
}

/// `1 − ½·Σ|p(a,b) − q(a,b)|` over joint keys.
pub fn contingency_similarity(real: &[(Key, Key)], synth: &[(Key, Key)]) -> f64 {
    tvd_complement(real, synth)
}

/// Two-sample Kolmogorov–Smirnov statistic over the merged sorted samples.
pub fn ks_statistic(real: &[f64], synth: &[f64]) -> f64 {
    let (n, m) = (real.len(), synth.len());
    if n == 0 || m == 0 {
        return if n == m { 0.0 } else { 1.0 };
    }
    let mut a = real.to_vec();
    let mut b = synth.to_vec();
    sort_f64(&mut a);
    sort_f64(&mut b);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n || j < m {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

pub fn ks_score(real: &[f64], synth: &[f64]) -> f64 {
    1.0 - ks_statistic(real, synth)
}

/// `1 − |ρ_real − ρ_synth|/2` on pairwise-complete rows; `None` when either
/// correlation is undefined.
pub fn correlation_similarity(real: (&[f64], &[f64]), synth: (&[f64], &[f64])) -> Option<f64> {
    let r = pearson(real.0, real.1)?;
    let s = pearson(synth.0, synth.1)?;
    Some((1.0 - (r - s).abs() / 2.0).clamp(0.0, 1.0))
}

/// Category keys of a categorical/boolean column.
pub fn category_keys(col: &Column) -> Vec<Key> {
    col.labels()
}

/// Decile cut points of the present values of `reference`.
pub fn decile_edges(reference: &Column) -> Vec<f64> {
    let mut v = reference.present_f64();
    if v.is_empty() {
        return Vec::new();
    }
    sort_f64(&mut v);
    let mut edges: Vec<f64> = (1..10).map(|k| quantile_sorted(&v, k as f64 / 10.0)).collect();
    edges.dedup();
    edges
}

/// Decile labels `d0`…`d9` under fixed edges, missing cells as `None`.
pub fn decile_keys(col: &Column, edges: &[f64]) -> Vec<Key> {
    (0..col.len())
        .map(|r| col.as_f64(r).map(|x| format!("d{}", edges.partition_point(|&e| e < x))))
        .collect()
}

/// Present values of a numeric/datetime column (datetimes as epoch seconds).
pub fn present_values(col: &Column) -> Vec<f64> {
    col.present_f64()
}

/// Rows where both numeric columns are present.
pub fn complete_pairs(a: &Column, b: &Column) -> (Vec<f64>, Vec<f64>) {
    (0..a.len())
        .filter_map(|r| Some((a.as_f64(r)?, b.as_f64(r)?)))
        .unzip()
}
