use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::linalg::top_eigenpairs;
use crate::error::{Error, Result};

/// Two-component PCA on standardised features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    n_features: usize,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Indices of the non-constant features the components live on.
    kept: Vec<usize>,
    components: [Vec<f64>; 2],
    explained: [f64; 2],
}

impl PcaModel {
    /// Fits on the rows of `x`. Constant columns are dropped; the top two
    /// eigenvectors of the correlation matrix come from deflated power
    /// iteration.
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n < 3 || d < 2 {
            return Err(Error::InvalidArgument(format!(
                "PCA needs at least 3 rows and 2 columns, got {n}x{d}"
            )));
        }
        let mut means = vec![0.0; d];
        let mut scales = vec![1.0; d];
        let mut kept = Vec::new();
        for j in 0..d {
            let col = x.column(j);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
            means[j] = m;
            if var > 1e-24 * m.abs().max(1.0).powi(2) {
                scales[j] = var.sqrt();
                kept.push(j);
            }
        }
        if kept.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "PCA needs at least 2 non-constant columns, found {}",
                kept.len()
            )));
        }
        let k = kept.len();
        let mut z = Array2::<f64>::zeros((n, k));
        for (jj, &j) in kept.iter().enumerate() {
            for i in 0..n {
                z[[i, jj]] = (x[[i, j]] - means[j]) / scales[j];
            }
        }
        let mut corr = z.t().dot(&z) / (n - 1) as f64;
        for i in 0..k {
            for j in 0..i {
                let m = 0.5 * (corr[[i, j]] + corr[[j, i]]);
                corr[[i, j]] = m;
                corr[[j, i]] = m;
            }
        }
        let trace: f64 = (0..k).map(|i| corr[[i, i]]).sum();
        let pairs = top_eigenpairs(&corr, 2)?;
        let share = |lam: f64| (lam / trace).clamp(0.0, 1.0);
        let explained = [share(pairs[0].0), share(pairs[1].0).min(share(pairs[0].0))];
        Ok(PcaModel {
            n_features: d,
            means,
            scales,
            kept,
            components: [pairs[0].1.to_vec(), pairs[1].1.to_vec()],
            explained,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn components(&self) -> &[Vec<f64>; 2] {
        &self.components
    }

    /// Component loadings expanded to all input features (0 for dropped ones).
    pub fn loadings(&self, component: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for (jj, &j) in self.kept.iter().enumerate() {
            out[j] = self.components[component][jj];
        }
        out
    }

    pub fn explained_variance_shares(&self) -> [f64; 2] {
        self.explained
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Projects rows onto the two components using the fitted means/scales.
    pub fn project(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (n, d) = x.dim();
        if d != self.n_features {
            return Err(Error::InvalidArgument(format!(
                "PCA model has {} features, input has {d}",
                self.n_features
            )));
        }
        let mut out = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            let row = x.row(i);
            let z: Array1<f64> = self
                .kept
                .iter()
                .map(|&j| (row[j] - self.means[j]) / self.scales[j])
                .collect();
            for c in 0..2 {
                out[[i, c]] = self.components[c].iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{rng_stream, sample_std};
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut crate::numkit::RngStream) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn perfectly_correlated_line() {
        let x = Array2::from_shape_fn((20, 2), |(i, _)| i as f64);
        let pca = PcaModel::fit(&x).unwrap();
        let s = 0.5f64.sqrt();
        assert!((pca.components()[0][0] - s).abs() < 1e-9);
        assert!((pca.components()[0][1] - s).abs() < 1e-9);
        assert!((pca.explained_variance_shares()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isotropic_shares_near_half() {
        let mut rng = rng_stream(5, 0);
        let x = Array2::from_shape_fn((5000, 2), |_| gauss(&mut rng));
        let pca = PcaModel::fit(&x).unwrap();
        let [a, b] = pca.explained_variance_shares();
        assert!((a - 0.5).abs() < 0.05 && (b - 0.5).abs() < 0.05);
        assert!(a >= b);
    }

    #[test]
    fn first_coordinate_dominates_and_constant_columns_drop() {
        let mut rng = rng_stream(6, 0);
        let x = Array2::from_shape_fn((500, 3), |(i, j)| match j {
            0 => gauss(&mut rng) * 3.0,
            1 => 7.0,
            _ => i as f64 * 0.01 + gauss(&mut rng),
        });
        let pca = PcaModel::fit(&x).unwrap();
        assert_eq!(pca.loadings(0)[1], 0.0);
        let coords = pca.project(&x).unwrap();
        let c0: Vec<f64> = coords.column(0).to_vec();
        let c1: Vec<f64> = coords.column(1).to_vec();
        assert!(sample_std(&c0) >= sample_std(&c1));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PcaModel::fit(&Array2::zeros((2, 3))).is_err());
        let x = Array2::from_shape_fn((10, 3), |(i, j)| if j == 0 { i as f64 } else { 1.0 });
        assert!(PcaModel::fit(&x).is_err());
        let ok = Array2::from_shape_fn((10, 2), |(i, j)| (i * (j + 1)) as f64 + (i % 3) as f64);
        let pca = PcaModel::fit(&ok).unwrap();
        assert!(pca.project(&Array2::zeros((1, 3))).is_err());
    }
}
