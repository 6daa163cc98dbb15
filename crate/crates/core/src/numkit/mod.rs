//! Numeric kernels shared by the generators and the evaluation stages.

mod kde;
mod linalg;
mod normal;
mod pca;
mod rng;
mod stats;

pub use kde::{KdeMarginal, CDF_CLAMP};
pub use linalg::{
    cholesky, cholesky_psd, repair_correlation, symmetric_eigen, top_eigenpairs, CorrelationMatrix,
    MIN_EIGENVALUE,
};
pub use normal::{normal_cdf, normal_pdf, normal_quantile};
pub use pca::PcaModel;
pub use rng::{derive_seed, rng_stream, stream_id, RngStream};
pub use stats::{ecdf, mean, pearson, quantile_sorted, sample_std, sort_f64};
