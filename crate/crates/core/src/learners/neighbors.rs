//! k-nearest neighbours and Gaussian naive Bayes.

use ndarray::Array2;

use super::linear::Scaler;

/// Brute-force k-NN on standardised features. Distance ties go to the
/// lower training index.
#[derive(Clone, Debug)]
pub struct Knn {
    scaler: Scaler,
    x: Array2<f64>,
    y: Vec<f64>,
    k: usize,
    vote: bool,
}

impl Knn {
    pub fn fit(x: &Array2<f64>, y: &[f64], k: usize, vote: bool) -> Self {
        let scaler = Scaler::fit(x);
        Knn {
            x: scaler.transform(x),
            scaler,
            y: y.to_vec(),
            k: k.min(y.len()).max(1),
            vote,
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        let q = self.scaler.transform(x);
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.y.len());
        q.rows()
            .into_iter()
            .map(|row| {
                dist.clear();
                for (i, t) in self.x.rows().into_iter().enumerate() {
                    let d: f64 = row.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    dist.push((d, i));
                }
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if self.k < dist.len() {
                    dist.select_nth_unstable_by(self.k - 1, cmp);
                }
                let near = &mut dist[..self.k];
                near.sort_by(cmp);
                if self.vote {
                    let ones = near.iter().filter(|(_, i)| self.y[*i] == 1.0).count();
                    let zeros = self.k - ones;
                    match ones.cmp(&zeros) {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal => self.y[near[0].1],
                    }
                } else {
                    near.iter().map(|(_, i)| self.y[*i]).sum::<f64>() / self.k as f64
                }
            })
            .collect()
    }
}

/// Two-class Gaussian naive Bayes; variances get `1e-9·max variance` added.
#[derive(Clone, Debug)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    means: [Vec<f64>; 2],
    vars: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn fit(x: &Array2<f64>, y: &[f64]) -> Self {
        let d = x.ncols();
        let mut means = [vec![0.0; d], vec![0.0; d]];
        let mut vars = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (row, &label) in x.rows().into_iter().zip(y) {
            let c = usize::from(label == 1.0);
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in 0..2 {
            let n = counts[c].max(1) as f64;
            means[c].iter_mut().for_each(|m| *m /= n);
        }
        for (row, &label) in x.rows().into_iter().zip(y) {
            let c = usize::from(label == 1.0);
            for j in 0..d {
                vars[c][j] += (row[j] - means[c][j]).powi(2);
            }
        }
        let overall_max = x
            .columns()
            .into_iter()
            .map(|col| {
                let m = col.mean().unwrap_or(0.0);
                col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len().max(1) as f64
            })
            .fold(0.0, f64::max);
        let eps = 1e-9 * overall_max.max(f64::MIN_POSITIVE);
        for c in 0..2 {
            let n = counts[c].max(1) as f64;
            vars[c].iter_mut().for_each(|v| *v = *v / n + eps);
        }
        let total = y.len() as f64;
        let log_prior = [(counts[0] as f64 / total).ln(), (counts[1] as f64 / total).ln()];
        GaussianNb { log_prior, means, vars }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let score = |c: usize| {
                    self.log_prior[c]
                        + row
                            .iter()
                            .zip(&self.means[c])
                            .zip(&self.vars[c])
                            .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
                            .sum::<f64>()
                };
                if score(1) > score(0) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn knn_regression_averages_neighbours() {
        let x = array![[0.0], [1.0], [2.0], [10.0]];
        let m = Knn::fit(&x, &[0.0, 1.0, 2.0, 10.0], 3, false);
        assert_eq!(m.predict(&array![[1.0]]), vec![1.0]);
    }

    #[test]
    fn knn_vote_tie_goes_to_nearest() {
        let x = array![[0.0], [1.0], [3.0], [4.0]];
        let m = Knn::fit(&x, &[1.0, 0.0, 0.0, 1.0], 2, true);
        assert_eq!(m.predict(&array![[0.1]]), vec![1.0]);
    }

    #[test]
    fn nb_separates_means() {
        let x = array![[0.0], [0.2], [-0.1], [5.0], [5.3], [4.9]];
        let m = GaussianNb::fit(&x, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(m.predict(&array![[0.5], [4.0]]), vec![0.0, 1.0]);
    }
}
