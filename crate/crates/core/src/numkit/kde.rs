use serde::{Deserialize, Serialize};

use super::normal::{normal_cdf, normal_pdf};
use super::stats::{quantile_sorted, sample_std};
use crate::error::{Error, Result};

/// Clamp applied to KDE CDF values so normal scores stay finite.
pub const CDF_CLAMP: f64 = 1e-6;

const BANDWIDTH_FLOOR: f64 = 1e-6;
// Kernels further than this many bandwidths away contribute < 1e-17.
const KERNEL_REACH: f64 = 8.5;

/// Gaussian-kernel density estimate of a one-dimensional marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeMarginal {
    /// Sorted ascending.
    samples: Vec<f64>,
    bandwidth: f64,
}

impl KdeMarginal {
    /// Silverman's robust rule `0.9 · min(σ̂, IQR/1.34) · n^(-1/5)`, floored at
    /// 1e-6. Falls back to σ̂ when the IQR is zero.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "KDE needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("KDE samples must be finite".into()));
        }
        let sd = sample_std(samples);
        let n = samples.len() as f64;
        let mut sorted = samples.to_vec();
        super::stats::sort_f64(&mut sorted);
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let h = 0.9 * spread * n.powf(-0.2);
        let bandwidth = if sd == 0.0 || h < BANDWIDTH_FLOOR {
            BANDWIDTH_FLOOR
        } else {
            h
        };
        Ok(KdeMarginal {
            samples: sorted,
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// `[min − 3h, max + 3h]`.
    pub fn support(&self) -> (f64, f64) {
        let h = self.bandwidth;
        (self.samples[0] - 3.0 * h, self.samples[self.samples.len() - 1] + 3.0 * h)
    }

    fn window(&self, x: f64) -> (usize, usize) {
        let reach = KERNEL_REACH * self.bandwidth;
        let lo = self.samples.partition_point(|&s| s < x - reach);
        let hi = self.samples.partition_point(|&s| s <= x + reach);
        (lo, hi)
    }

    /// `(1/n) Σ Φ((x − xᵢ)/h)` without clamping.
    pub fn raw_cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let h = self.bandwidth;
        let inside: f64 = self.samples[lo..hi]
            .iter()
            .map(|&s| normal_cdf((x - s) / h))
            .sum();
        (lo as f64 + inside) / self.samples.len() as f64
    }

    /// KDE CDF clamped to `[1e-6, 1 − 1e-6]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.raw_cdf(x).clamp(CDF_CLAMP, 1.0 - CDF_CLAMP)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.window(x);
        let h = self.bandwidth;
        let s: f64 = self.samples[lo..hi]
            .iter()
            .map(|&s| normal_pdf((x - s) / h))
            .sum();
        s / (self.samples.len() as f64 * h)
    }

    /// Raw CDF and density from one pass over the kernel window.
    fn cdf_pdf(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.window(x);
        let h = self.bandwidth;
        let (mut c, mut p) = (0.0, 0.0);
        for &s in &self.samples[lo..hi] {
            let t = (x - s) / h;
            c += normal_cdf(t);
            p += normal_pdf(t);
        }
        let n = self.samples.len() as f64;
        ((lo as f64 + c) / n, p / (n * h))
    }

    fn clamp_u(u: f64) -> f64 {
        if u.is_nan() {
            0.5
        } else {
            u.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP)
        }
    }

    /// `[a, b]` with `raw_cdf(a) ≤ u ≤ raw_cdf(b)`, widened from the support.
    fn bracket(&self, u: f64) -> (f64, f64) {
        let (mut a, mut b) = self.support();
        let mut step = self.bandwidth.max(b - a);
        while self.raw_cdf(a) > u {
            a -= step;
            step *= 2.0;
        }
        let mut step = self.bandwidth.max(b - a);
        while self.raw_cdf(b) < u {
            b += step;
            step *= 2.0;
        }
        (a, b)
    }

    /// Inverse of [`KdeMarginal::cdf`].
    ///
    /// Bracketed Newton iteration: every step keeps a sign-changing bracket
    /// and falls back to bisection whenever the Newton step leaves it.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = Self::clamp_u(u);
        let (a, b) = self.bracket(u);
        // Start from the empirical quantile.
        let n = self.samples.len();
        let idx = ((u * n as f64) as usize).min(n - 1);
        self.solve(u, a, b, self.samples[idx])
    }

    /// [`KdeMarginal::quantile`] for many probabilities. A CDF table over
    /// the support gives each solve a tight starting bracket.
    pub fn quantiles(&self, us: &[f64]) -> Vec<f64> {
        const GRID: usize = 512;
        if us.len() < GRID {
            return us.iter().map(|&u| self.quantile(u)).collect();
        }
        let (lo, hi) = self.support();
        let xs: Vec<f64> = (0..=GRID).map(|k| lo + (hi - lo) * k as f64 / GRID as f64).collect();
        let cs: Vec<f64> = xs.iter().map(|&x| self.raw_cdf(x)).collect();
        us.iter()
            .map(|&u| {
                let u = Self::clamp_u(u);
                let k = cs.partition_point(|&c| c < u);
                if k == 0 || k > GRID {
                    return self.quantile(u);
                }
                let (a, b) = (xs[k - 1], xs[k]);
                let w = (u - cs[k - 1]) / (cs[k] - cs[k - 1]);
                let x0 = if w.is_finite() { a + w * (b - a) } else { 0.5 * (a + b) };
                self.solve(u, a, b, x0)
            })
            .collect()
    }

    fn solve(&self, u: f64, mut a: f64, mut b: f64, x0: f64) -> f64 {
        let mut x = x0.clamp(a, b);
        for _ in 0..200 {
            let (c, d) = self.cdf_pdf(x);
            let f = c - u;
            if f == 0.0 {
                return x;
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let tol = 1e-9 * (1.0 + x.abs());
            if b - a <= tol {
                break;
            }
            let newton = x - f / d;
            if d > 0.0 && newton > a && newton < b {
                if (newton - x).abs() <= 0.5 * tol && f.abs() <= 1e-12 {
                    return newton;
                }
                x = newton;
            } else {
                x = 0.5 * (a + b);
            }
        }
        // Return the bracket end whose CDF is closer to u.
        let fa = (self.raw_cdf(a) - u).abs();
        let fb = (self.raw_cdf(b) - u).abs();
        let fx = (self.raw_cdf(x) - u).abs();
        if fx <= fa && fx <= fb {
            x
        } else if fa <= fb {
            a
        } else {
            b
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng_stream;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_stream(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn silverman_bandwidth() {
        // 1..=10: sd = 3.0277, IQR = 4.5 → IQR/1.34 = 3.3582, so sd wins.
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let kde = KdeMarginal::fit(&xs).unwrap();
        let expected = 0.9 * sample_std(&xs) * 10f64.powf(-0.2);
        assert!((kde.bandwidth() - expected).abs() < 1e-15);

        // Heavy tail: the IQR term is smaller than the sd.
        let ys = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 100.0];
        let kde = KdeMarginal::fit(&ys).unwrap();
        let expected = 0.9 * (4.0 / 1.34) * 9f64.powf(-0.2);
        assert!((kde.bandwidth() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_iqr_falls_back_to_sd() {
        let mut xs = vec![1.0; 9];
        xs.push(11.0);
        let kde = KdeMarginal::fit(&xs).unwrap();
        let expected = 0.9 * sample_std(&xs) * 10f64.powf(-0.2);
        assert!((kde.bandwidth() - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_samples_use_floor() {
        let kde = KdeMarginal::fit(&[4.0; 10]).unwrap();
        assert_eq!(kde.bandwidth(), 1e-6);
        assert!((kde.quantile(0.5) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_samples() {
        assert!(KdeMarginal::fit(&[1.0]).is_err());
    }

    #[test]
    fn two_point_symmetry() {
        // h is forced to 1 by construction below
        let kde = KdeMarginal {
            samples: vec![0.0, 2.0],
            bandwidth: 1.0,
        };
        assert!((kde.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((kde.quantile(0.5) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clamps_far_outside_support() {
        let kde = KdeMarginal::fit(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(kde.cdf(-1e6), CDF_CLAMP);
        assert_eq!(kde.cdf(1e6), 1.0 - CDF_CLAMP);
    }

    #[test]
    fn cdf_at_median_of_symmetric_data() {
        let xs = normal_draws(2000, 11);
        let mut s = xs.clone();
        crate::numkit::sort_f64(&mut s);
        let median = 0.5 * (s[999] + s[1000]);
        let kde = KdeMarginal::fit(&xs).unwrap();
        assert!((kde.cdf(median) - 0.5).abs() < 0.05);
    }

    #[test]
    fn support_bounds_bracket_mass() {
        let xs = normal_draws(500, 5);
        let kde = KdeMarginal::fit(&xs).unwrap();
        let (lo, hi) = kde.support();
        assert!(kde.cdf(lo) < 0.01);
        assert!(kde.cdf(hi) > 0.99);
    }

    #[test]
    fn cdf_monotone_on_grid() {
        let xs: Vec<f64> = normal_draws(300, 8).iter().map(|x| x.exp()).collect();
        let kde = KdeMarginal::fit(&xs).unwrap();
        let (lo, hi) = kde.support();
        let mut prev = 0.0;
        for i in 0..1000 {
            let x = lo + (hi - lo) * i as f64 / 999.0;
            let c = kde.cdf(x);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let xs = normal_draws(400, 21);
        let kde = KdeMarginal::fit(&xs).unwrap();
        let (lo, hi) = kde.support();
        for i in 1..200 {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            let u = kde.cdf(x);
            if u <= CDF_CLAMP || u >= 1.0 - CDF_CLAMP {
                continue;
            }
            let q = kde.quantile(u);
            assert!((kde.cdf(q) - u).abs() <= 1e-8);
            assert!((q - x).abs() <= 1e-6, "x={x} q={q}");
        }
    }

    #[test]
    fn quantile_residual_on_bimodal_data() {
        let mut xs = normal_draws(400, 21);
        xs.extend(normal_draws(100, 22).iter().map(|x| 20.0 + 0.1 * x));
        let kde = KdeMarginal::fit(&xs).unwrap();
        for i in 1..500 {
            let u = i as f64 / 500.0;
            assert!((kde.cdf(kde.quantile(u)) - u).abs() <= 1e-8, "u={u}");
        }
    }

    #[test]
    fn quantile_monotone() {
        let xs = normal_draws(200, 4);
        let kde = KdeMarginal::fit(&xs).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..1000 {
            let q = kde.quantile(i as f64 / 1000.0);
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn batched_quantiles_agree() {
        let mut xs = normal_draws(400, 21);
        xs.extend(normal_draws(100, 22).iter().map(|x| 20.0 + 0.1 * x));
        let kde = KdeMarginal::fit(&xs).unwrap();
        let us: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).chain([0.0, 1.0, f64::NAN]).collect();
        let batch = kde.quantiles(&us);
        for (&u, &q) in us.iter().zip(&batch) {
            let single = kde.quantile(u);
            assert!((q - single).abs() <= 1e-7 * (1.0 + single.abs()), "u={u}: {q} vs {single}");
        }
    }
}
