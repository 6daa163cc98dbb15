//! Tabular variational autoencoder.

mod network;

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use network::{gradient_check, Architecture, Forward, Head, Linear, LossParts, Network, LOG_VARIANCE_FLOOR};

use crate::encode::{self, BlockKind, DecodeReport, EncodedMatrix, EncoderOptions, EncoderState, Target};
use crate::error::{Error, Result};
use crate::numkit::{derive_seed, rng_stream, stream_id, RngStream};
use crate::table::Table;

/// Latent dims whose epoch-mean KL exceeds this count as active.
pub const ACTIVE_DIM_THRESHOLD: f64 = 0.01;
const SELF_TEST_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Linear KL weight ramp over the first 10% of epochs.
    pub kl_warmup: bool,
    /// GMM mode-specific normalisation of continuous columns.
    pub mode_normalize: bool,
    pub loss_trace: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 1e-3,
            batch_size: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
            seed: 0,
            kl_warmup: false,
            mode_normalize: false,
            loss_trace: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must lie in (0, 1), got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument("weight decay must be non-negative".into()));
        }
        Ok(())
    }

    fn kl_weight(&self, epoch: usize) -> f64 {
        if !self.kl_warmup {
            return 1.0;
        }
        let ramp = (self.epochs as f64 * 0.1).ceil().max(1.0);
        ((epoch + 1) as f64 / ramp).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Draw categories from the softmax instead of taking the argmax.
    pub stochastic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub active_dims: usize,
    /// Epoch-mean KL per latent dim.
    pub kl_per_dim: Vec<f64>,
}

/// Writes `epoch,total,reconstruction,kl,active_dims` rows.
pub fn write_loss_trace<W: Write>(trace: &[EpochStats], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,total,reconstruction,kl,active_dims")?;
    for e in trace {
        writeln!(w, "{},{},{},{},{}", e.epoch, e.total, e.reconstruction, e.kl, e.active_dims)?;
    }
    Ok(())
}

pub fn write_loss_trace_file(trace: &[EpochStats], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_loss_trace(trace, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

/// Decoder heads matching an encoder layout.
pub fn heads_for(state: &EncoderState) -> Result<Vec<Head>> {
    let mut heads = Vec::new();
    let mut var = 0;
    for b in state.blocks() {
        match b.kind {
            BlockKind::Continuous => {
                heads.push(Head::Gaussian { index: b.offset, var });
                var += 1;
            }
            BlockKind::OneHot => heads.push(Head::Softmax {
                offset: b.offset,
                width: b.width,
            }),
            BlockKind::Mode { n_modes } => {
                heads.push(Head::Gaussian { index: b.offset, var });
                var += 1;
                heads.push(Head::Softmax {
                    offset: b.offset + 1,
                    width: n_modes,
                });
            }
            BlockKind::Interval => {
                return Err(Error::Encode(
                    "interval-encoded columns belong to the copula target, not the TVAE".into(),
                ))
            }
        }
    }
    Ok(heads)
}

/// Runs the analytic-vs-finite-difference gradient check on a small fixed
/// 4-2-4 network and returns the worst relative error.
pub fn self_test() -> f64 {
    let mut rng = rng_stream(0x5e1f, 0);
    let heads = vec![
        Head::Gaussian { index: 0, var: 0 },
        Head::Gaussian { index: 1, var: 1 },
        Head::Softmax { offset: 2, width: 2 },
    ];
    let arch = Architecture {
        encoder_hidden: vec![],
        decoder_hidden: vec![],
        latent_dim: 2,
    };
    let net = Network::new(4, heads, &arch, &mut rng);
    let x = Array2::from_shape_fn((4, 4), |(r, c)| match c {
        0 => r as f64 * 0.5 - 0.7,
        1 => 1.0 - r as f64 * 0.3,
        2 => (r % 2) as f64,
        _ => ((r + 1) % 2) as f64,
    });
    let eps = Array2::from_shape_fn((4, 2), |_| gauss(&mut rng));
    gradient_check(&net, &x.view(), &eps.view(), 1.0, 1e-5)
}

fn gauss(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

struct Adam {
    m: Network,
    v: Network,
    t: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        Adam {
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grad: &Network, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let mut params = net.tensors_mut();
        let grads = grad.tensors();
        let mut ms = self.m.tensors_mut();
        let mut vs = self.v.tensors_mut();
        for t in 0..params.len() {
            let p = &mut params[t];
            let (g, m, v) = (grads[t], &mut ms[t], &mut vs[t]);
            for i in 0..p.len() {
                let gi = g[i] + cfg.weight_decay * p[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
            }
        }
    }
}

/// A trained TVAE together with the encoder needed to map samples back to
/// the training schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvaeSynthesizer {
    pub encoder: EncoderState,
    pub network: Network,
    pub architecture: Architecture,
    pub config: TrainConfig,
    pub trace: Vec<EpochStats>,
}

impl TvaeSynthesizer {
    /// Encodes `table` for the TVAE target and trains on it.
    pub fn fit(table: &Table, arch: &Architecture, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let fill_seed = derive_seed(cfg.seed, "fill");
        let split = encode::split_missing(table, fill_seed)?;
        let options = EncoderOptions {
            mode_normalize: cfg.mode_normalize,
            fill_seed: Some(fill_seed),
            ..Default::default()
        };
        let state = encode::fit_encoder(&split, Target::Tvae, &options)?;
        let matrix = encode::encode(&split, &state, derive_seed(cfg.seed, "encode"))?;
        Self::fit_encoded(&matrix, state, arch, cfg)
    }

    pub fn fit_encoded(matrix: &EncodedMatrix, encoder: EncoderState, arch: &Architecture, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let self_check = self_test();
        if self_check > SELF_TEST_TOLERANCE {
            return Err(Error::Numeric(format!(
                "gradient self-test failed: relative error {self_check:.3e} exceeds {SELF_TEST_TOLERANCE:e}"
            )));
        }
        if arch.latent_dim == 0 {
            return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
        }
        let (n, d) = matrix.data.dim();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot train on an empty matrix".into()));
        }
        if d != encoder.width() {
            return Err(Error::InvalidArgument(format!(
                "encoded matrix has {d} columns, encoder layout has {}",
                encoder.width()
            )));
        }
        let heads = heads_for(&encoder)?;
        let mut init_rng = rng_stream(cfg.seed, stream_id("init"));
        let mut net = Network::new(d, heads, arch, &mut init_rng);
        let mut adam = Adam::new(&net);
        let mut shuffle_rng = rng_stream(cfg.seed, stream_id("shuffle"));
        let mut noise_rng = rng_stream(cfg.seed, stream_id("noise"));
        let batch = cfg.batch_size.min(n);
        if batch < cfg.batch_size {
            log::info!("batch size reduced to {batch} to match {n} training rows");
        }
        let l = arch.latent_dim;
        let mut order: Vec<usize> = (0..n).collect();
        let mut trace = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let kl_weight = cfg.kl_weight(epoch);
            let (mut tot, mut rec, mut kl) = (0.0, 0.0, 0.0);
            let mut kl_dims = vec![0.0; l];
            for chunk in order.chunks(batch) {
                let x = matrix.data.select(Axis(0), chunk);
                let eps = Array2::from_shape_fn((chunk.len(), l), |_| gauss(&mut noise_rng));
                let (parts, fwd, grad) = net.loss_and_grad(&x.view(), &eps.view(), kl_weight);
                if !parts.total.is_finite() {
                    let detail = match net.non_finite_head(&x.view(), &fwd.output) {
                        Some(h) => format!("non-finite reconstruction in output head {h} ({:?})", net.heads[h]),
                        None => "non-finite KL term".to_string(),
                    };
                    return Err(Error::Diverged {
                        epoch: epoch + 1,
                        detail,
                    });
                }
                debug_assert!(parts.kl >= -1e-12, "KL term went negative: {}", parts.kl);
                let w = chunk.len() as f64;
                tot += parts.total * w;
                rec += parts.reconstruction * w;
                kl += parts.kl * w;
                let per_dim = Network::kl_per_dim(&fwd.mu, &fwd.log_var).sum_axis(Axis(0));
                for (acc, v) in kl_dims.iter_mut().zip(per_dim.iter()) {
                    *acc += v;
                }
                adam.step(&mut net, &grad, cfg);
            }
            if !net.all_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    detail: "parameters became non-finite after the Adam update".into(),
                });
            }
            let nf = n as f64;
            kl_dims.iter_mut().for_each(|v| *v /= nf);
            let stats = EpochStats {
                epoch: epoch + 1,
                total: tot / nf,
                reconstruction: rec / nf,
                kl: kl / nf,
                active_dims: kl_dims.iter().filter(|&&v| v > ACTIVE_DIM_THRESHOLD).count(),
                kl_per_dim: kl_dims,
            };
            log::debug!(
                "epoch {}: loss {:.4} (rec {:.4}, kl {:.4}, active dims {})",
                stats.epoch,
                stats.total,
                stats.reconstruction,
                stats.kl,
                stats.active_dims
            );
            trace.push(stats);
        }
        if let Some(last) = trace.last() {
            log::info!(
                "TVAE trained {} epochs: final loss {:.4}, {} active latent dims",
                cfg.epochs,
                last.total,
                last.active_dims
            );
        }
        if let Some(path) = &cfg.loss_trace {
            write_loss_trace_file(&trace, path)?;
        }
        Ok(TvaeSynthesizer {
            encoder,
            network: net,
            architecture: arch.clone(),
            config: cfg.clone(),
            trace,
        })
    }

    /// Decodes prior draws into encoded space.
    pub fn sample_encoded(&self, n: usize, seed: u64, opts: SampleOptions) -> Result<EncodedMatrix> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let l = self.network.latent_dim;
        let mut z_rng = rng_stream(seed, stream_id("latent"));
        let mut cat_rng = rng_stream(seed, stream_id("categories"));
        let mut data = Array2::<f64>::zeros((n, self.network.input_dim));
        const CHUNK: usize = 2048;
        let mut start = 0;
        while start < n {
            let m = CHUNK.min(n - start);
            let z = Array2::from_shape_fn((m, l), |_| gauss(&mut z_rng));
            let out = self.network.decode(&z.view());
            for r in 0..m {
                for head in &self.network.heads {
                    match *head {
                        Head::Gaussian { index, .. } => data[[start + r, index]] = out[[r, index]],
                        Head::Softmax { offset, width } => {
                            let logits: Vec<f64> = (0..width).map(|k| out[[r, offset + k]]).collect();
                            let k = if opts.stochastic {
                                sample_softmax(&logits, &mut cat_rng)
                            } else {
                                argmax(&logits)
                            };
                            data[[start + r, offset + k]] = 1.0;
                        }
                    }
                }
            }
            start += m;
        }
        Ok(EncodedMatrix {
            data,
            blocks: self.encoder.blocks(),
        })
    }

    pub fn sample(&self, n: usize, seed: u64, opts: SampleOptions) -> Result<(Table, DecodeReport)> {
        let m = self.sample_encoded(n, seed, opts)?;
        encode::decode(&m, &self.encoder)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TvaeSynthesizer = serde_json::from_str(s)?;
        if model.network.input_dim != model.encoder.width() {
            return Err(Error::InvalidArgument(format!(
                "TVAE model file is inconsistent: network input {} vs encoder width {}",
                model.network.input_dim,
                model.encoder.width()
            )));
        }
        Ok(model)
    }
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

fn sample_softmax(logits: &[f64], rng: &mut RngStream) -> usize {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}
