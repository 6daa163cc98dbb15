//! Gaussian copula generator: KDE marginals joined by a correlation matrix
//! estimated on normal scores.

use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encode::{self, DecodeReport, EncodedMatrix, EncoderOptions, EncoderState, Target};
use crate::error::{Error, Result};
use crate::numkit::{
    derive_seed, normal_cdf, normal_quantile, pearson, rng_stream, CorrelationMatrix, KdeMarginal,
    CDF_CLAMP,
};
use crate::table::Table;

pub const DEFAULT_ROW_CAP: usize = 5000;
pub const MIN_FIT_ROWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaConfig {
    pub row_cap: usize,
}

impl Default for CopulaConfig {
    fn default() -> Self {
        CopulaConfig {
            row_cap: DEFAULT_ROW_CAP,
        }
    }
}

/// A fitted copula. The marginals store every training value, so a saved
/// model file contains the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedCopula {
    pub encoder: EncoderState,
    pub marginals: Vec<KdeMarginal>,
    pub correlation: CorrelationMatrix,
    pub fit_rows: usize,
}

/// Seeded uniform subsample without replacement, original row order kept.
pub fn subsample(table: &Table, n: usize, seed: u64) -> Table {
    if table.n_rows() <= n {
        return table.clone();
    }
    let mut rng = rng_stream(seed, 0);
    let mut rows = sample_indices(&mut rng, table.n_rows(), n).into_vec();
    rows.sort_unstable();
    table.take_rows(&rows)
}

impl FittedCopula {
    /// Fits on a raw table: missing cells are split into indicators, the
    /// table is encoded for the copula target, then marginals and the
    /// normal-scores correlation are estimated.
    pub fn fit(table: &Table, config: &CopulaConfig, seed: u64) -> Result<Self> {
        let n = table.n_rows();
        if n > config.row_cap {
            return Err(Error::InvalidArgument(format!(
                "Gaussian copula fit is capped at {} rows but the input has {n}; \
                 subsample the input to {} rows first",
                config.row_cap, config.row_cap
            )));
        }
        if n < MIN_FIT_ROWS {
            return Err(Error::InvalidArgument(format!(
                "Gaussian copula fit needs at least {MIN_FIT_ROWS} rows, got {n}"
            )));
        }
        let fill_seed = derive_seed(seed, "fill");
        let split = encode::split_missing(table, fill_seed)?;
        let options = EncoderOptions {
            fill_seed: Some(fill_seed),
            ..Default::default()
        };
        let state = encode::fit_encoder(&split, Target::Copula, &options)?;
        let matrix = encode::encode(&split, &state, derive_seed(seed, "intervals"))?;
        Self::fit_encoded(&matrix, state)
    }

    /// Fits on an already encoded matrix.
    pub fn fit_encoded(matrix: &EncodedMatrix, encoder: EncoderState) -> Result<Self> {
        let (n, d) = matrix.data.dim();
        if d != encoder.width() {
            return Err(Error::InvalidArgument(format!(
                "encoded matrix has {d} columns, encoder layout has {}",
                encoder.width()
            )));
        }
        let mut marginals = Vec::with_capacity(d);
        let mut scores = Vec::with_capacity(d);
        for j in 0..d {
            let col = matrix.data.column(j).to_vec();
            let kde = KdeMarginal::fit(&col)?;
            if kde.bandwidth() <= 1e-6 {
                log::warn!(
                    "column `{}` is (near) constant; using the bandwidth floor",
                    encoder.columns[j].schema.name
                );
            }
            let z = col
                .iter()
                .map(|&x| normal_quantile(kde.cdf(x)))
                .collect::<Result<Vec<f64>>>()?;
            scores.push(z);
            marginals.push(kde);
        }
        let mut theta = Array2::<f64>::eye(d);
        for i in 0..d {
            for j in 0..i {
                let r = pearson(&scores[i], &scores[j]).unwrap_or(0.0);
                theta[[i, j]] = r;
                theta[[j, i]] = r;
            }
        }
        let correlation = CorrelationMatrix::new(theta)?;
        if correlation.was_repaired() {
            log::info!("normal-scores correlation was not positive definite and has been repaired");
        }
        Ok(FittedCopula {
            encoder,
            marginals,
            correlation,
            fit_rows: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Draws `n` rows in encoded space.
    pub fn sample_encoded(&self, n: usize, seed: u64) -> Result<EncodedMatrix> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let l = self.correlation.factor();
        let mut rng = rng_stream(seed, 0);
        let mut u = Array2::<f64>::zeros((n, d));
        let mut eps = Array1::<f64>::zeros(d);
        for r in 0..n {
            eps.mapv_inplace(|_| StandardNormal.sample(&mut rng));
            let z = l.dot(&eps);
            for j in 0..d {
                u[[r, j]] = normal_cdf(z[j]).clamp(CDF_CLAMP, 1.0 - CDF_CLAMP);
            }
        }
        let mut data = Array2::<f64>::zeros((n, d));
        for j in 0..d {
            let q = self.marginals[j].quantiles(&u.column(j).to_vec());
            data.column_mut(j).assign(&Array1::from(q));
        }
        Ok(EncodedMatrix {
            data,
            blocks: self.encoder.blocks(),
        })
    }

    /// Draws `n` rows and decodes them to the training schema.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Table, DecodeReport)> {
        let m = self.sample_encoded(n, seed)?;
        encode::decode(&m, &self.encoder)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: FittedCopula = serde_json::from_str(s)?;
        if model.marginals.len() != model.encoder.width() || model.correlation.dim() != model.marginals.len() {
            return Err(Error::InvalidArgument(
                "copula model file is inconsistent: marginal count, correlation size and encoder width differ".into(),
            ));
        }
        Ok(model)
    }
}
