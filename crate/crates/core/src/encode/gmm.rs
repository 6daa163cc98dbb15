//! One-dimensional Gaussian mixtures fitted by EM, used for mode-specific
//! normalisation of multimodal continuous columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{mean, sort_f64};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MIN_MODE_WEIGHT: f64 = 0.005;
pub const EM_MAX_ITER: usize = 100;
pub const EM_TOL: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeNormalizer {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl ModeNormalizer {
    pub fn n_modes(&self) -> usize {
        self.weights.len()
    }

    /// Index of the mode with the highest posterior responsibility for `x`.
    pub fn assign(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_lp = f64::NEG_INFINITY;
        for k in 0..self.n_modes() {
            let lp = self.weights[k].ln() + log_normal(x, self.means[k], self.variances[k]);
            if lp > best_lp {
                best_lp = lp;
                best = k;
            }
        }
        best
    }

    /// `(mode, (x − μ_mode)/σ_mode)`.
    pub fn normalize(&self, x: f64) -> (usize, f64) {
        let k = self.assign(x);
        (k, (x - self.means[k]) / self.variances[k].sqrt())
    }

    pub fn denormalize(&self, mode: usize, scalar: f64) -> f64 {
        self.means[mode] + scalar * self.variances[mode].sqrt()
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter()
            .map(|&x| {
                let lps: Vec<f64> = (0..self.n_modes())
                    .map(|k| self.weights[k].ln() + log_normal(x, self.means[k], self.variances[k]))
                    .collect();
                log_sum_exp(&lps)
            })
            .sum()
    }
}

/// Result of a fixed-`k` EM run.
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: ModeNormalizer,
    /// Log-likelihood after initialisation and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
}

fn log_normal(x: f64, m: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - m) * (x - m) / var)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// EM for a `k`-component mixture with quantile-spread initial means.
pub fn fit_gmm(data: &[f64], k: usize) -> Result<GmmFit> {
    if data.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("GMM needs data and at least one component".into()));
    }
    let n = data.len();
    let mut sorted = data.to_vec();
    sort_f64(&mut sorted);
    let m = mean(data);
    let total_var = (data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64).max(VARIANCE_FLOOR);

    let mut model = ModeNormalizer {
        weights: vec![1.0 / k as f64; k],
        means: (0..k)
            .map(|i| sorted[(((i as f64 + 0.5) / k as f64) * n as f64) as usize % n])
            .collect(),
        variances: vec![(total_var / (k * k) as f64).max(VARIANCE_FLOOR); k],
    };
    let mut trace = vec![model.log_likelihood(data)];
    let mut resp = vec![0.0; n * k];
    let mut lps = vec![0.0; k];
    for _ in 0..EM_MAX_ITER {
        // E-step
        for (i, &x) in data.iter().enumerate() {
            for c in 0..k {
                lps[c] = model.weights[c].ln() + log_normal(x, model.means[c], model.variances[c]);
            }
            let lse = log_sum_exp(&lps);
            for c in 0..k {
                resp[i * k + c] = (lps[c] - lse).exp();
            }
        }
        // M-step; an emptied component keeps its parameters with zero weight.
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if nk <= 1e-12 {
                model.weights[c] = 0.0;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + c] * data[i]).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| resp[i * k + c] * (data[i] - mu) * (data[i] - mu))
                .sum::<f64>()
                / nk;
            model.weights[c] = nk / n as f64;
            model.means[c] = mu;
            model.variances[c] = var.max(VARIANCE_FLOOR);
        }
        let ll = model.log_likelihood(data);
        let prev = *trace.last().unwrap();
        debug_assert!(
            ll >= prev - 1e-8 * prev.abs().max(1.0),
            "EM log-likelihood decreased: {prev} -> {ll}"
        );
        trace.push(ll);
        if (ll - prev).abs() < EM_TOL {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood_trace: trace,
    })
}

/// Fits a mixture with at most `k_max` components, choosing the component
/// count by BIC, then drops modes lighter than 0.005 and renormalises.
pub fn fit_mode_normalizer(column: &[f64], k_max: usize) -> Result<ModeNormalizer> {
    let mut distinct = column.to_vec();
    sort_f64(&mut distinct);
    distinct.dedup();
    if distinct.is_empty() {
        return Err(Error::InvalidArgument(
            "mode normalizer needs at least one distinct value".into(),
        ));
    }
    let n = column.len() as f64;
    let k_cap = k_max.max(1).min(distinct.len());
    let mut best: Option<(f64, ModeNormalizer)> = None;
    let mut worse_in_a_row = 0;
    for k in 1..=k_cap {
        let fit = fit_gmm(column, k)?;
        let ll = *fit.log_likelihood_trace.last().unwrap();
        let bic = -2.0 * ll + (3 * k - 1) as f64 * n.ln();
        match &best {
            Some((b, _)) if bic >= *b => {
                worse_in_a_row += 1;
                if worse_in_a_row >= 2 {
                    break;
                }
            }
            _ => {
                worse_in_a_row = 0;
                best = Some((bic, fit.model));
            }
        }
    }
    let model = best.expect("k = 1 always fits").1;
    let keep: Vec<usize> = (0..model.n_modes())
        .filter(|&c| model.weights[c] >= MIN_MODE_WEIGHT)
        .collect();
    let total: f64 = keep.iter().map(|&c| model.weights[c]).sum();
    Ok(ModeNormalizer {
        weights: keep.iter().map(|&c| model.weights[c] / total).collect(),
        means: keep.iter().map(|&c| model.means[c]).collect(),
        variances: keep.iter().map(|&c| model.variances[c]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng_stream;
    use rand_distr::{Distribution, StandardNormal};

    fn draws(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng_stream(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn single_gaussian_one_mode() {
        let xs = draws(2000, 1);
        let m = fit_mode_normalizer(&xs, 10).unwrap();
        assert_eq!(m.n_modes(), 1);
        assert!(m.means[0].abs() < 0.1);
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_clusters_two_modes() {
        let mut xs: Vec<f64> = draws(500, 2);
        xs.extend(draws(500, 3).iter().map(|x| 100.0 + x));
        let m = fit_mode_normalizer(&xs, 10).unwrap();
        assert_eq!(m.n_modes(), 2);
        let mut means = m.means.clone();
        sort_f64(&mut means);
        assert!(means[0].abs() < 0.2);
        assert!((means[1] - 100.0).abs() < 0.2);
    }

    #[test]
    fn near_constant_column_hits_floor() {
        let xs: Vec<f64> = (0..100).map(|i| 3.0 + 1e-9 * (i % 2) as f64).collect();
        let m = fit_mode_normalizer(&xs, 10).unwrap();
        assert_eq!(m.n_modes(), 1);
        assert_eq!(m.variances[0], VARIANCE_FLOOR);
    }

    #[test]
    fn em_log_likelihood_non_decreasing() {
        let mut xs = draws(300, 4);
        xs.extend(draws(200, 5).iter().map(|x| 4.0 + 0.5 * x));
        for k in 1..=4 {
            let fit = fit_gmm(&xs, k).unwrap();
            for w in fit.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
            }
        }
    }

    #[test]
    fn normalize_round_trip() {
        let m = ModeNormalizer {
            weights: vec![0.5, 0.5],
            means: vec![0.0, 100.0],
            variances: vec![4.0, 9.0],
        };
        let (k, s) = m.normalize(103.0);
        assert_eq!(k, 1);
        assert!((s - 1.0).abs() < 1e-12);
        assert!((m.denormalize(k, s) - 103.0).abs() < 1e-12);
    }

    #[test]
    fn empty_column_rejected() {
        assert!(fit_mode_normalizer(&[], 10).is_err());
    }
}
