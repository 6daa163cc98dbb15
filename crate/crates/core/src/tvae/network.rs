//! MLP encoder/decoder with hand-written reverse mode.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numkit::RngStream;

pub const LOG_VARIANCE_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Uniform in ±1/√fan_in for weights and biases.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Linear {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound)),
            b: Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..bound)),
        }
    }

    fn zeros_like(&self) -> Self {
        Linear {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    fn backward(&self, x: &ArrayView2<f64>, dy: &Array2<f64>, grad: &mut Linear, need_dx: bool) -> Option<Array2<f64>> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        need_dx.then(|| dy.dot(&self.w.t()))
    }
}

/// How a decoder output column is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    /// Gaussian mean at `index`, log-variance parameter `var`.
    Gaussian { index: usize, var: usize },
    /// Softmax over `offset..offset + width`.
    Softmax { offset: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoder_hidden: vec![128, 128],
            decoder_hidden: vec![128, 128],
            latent_dim: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Encoder `input → hidden… → (μ, log σ²)`, decoder `z → hidden… → heads`,
/// plus one learned log-variance per Gaussian head. Also used as the
/// gradient and Adam-moment container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub heads: Vec<Head>,
    pub encoder: Vec<Linear>,
    /// Outputs `2 · latent_dim`: μ then log σ².
    pub encoder_out: Linear,
    pub decoder: Vec<Linear>,
    pub decoder_out: Linear,
    pub log_var: Array1<f64>,
}

pub struct Forward {
    enc_acts: Vec<Array2<f64>>,
    pub mu: Array2<f64>,
    pub log_var: Array2<f64>,
    std: Array2<f64>,
    dec_acts: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn relu_mask(d: &mut Array2<f64>, act: &Array2<f64>) {
    Zip::from(d).and(act).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Network {
    pub fn new(input_dim: usize, heads: Vec<Head>, arch: &Architecture, rng: &mut RngStream) -> Self {
        let n_var = heads
            .iter()
            .filter(|h| matches!(h, Head::Gaussian { .. }))
            .count();
        let mut encoder = Vec::new();
        let mut prev = input_dim;
        for &h in &arch.encoder_hidden {
            encoder.push(Linear::init(prev, h, rng));
            prev = h;
        }
        let encoder_out = Linear::init(prev, 2 * arch.latent_dim, rng);
        let mut decoder = Vec::new();
        let mut prev = arch.latent_dim;
        for &h in &arch.decoder_hidden {
            decoder.push(Linear::init(prev, h, rng));
            prev = h;
        }
        let decoder_out = Linear::init(prev, input_dim, rng);
        Network {
            input_dim,
            latent_dim: arch.latent_dim,
            heads,
            encoder,
            encoder_out,
            decoder,
            decoder_out,
            log_var: Array1::zeros(n_var),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            input_dim: self.input_dim,
            latent_dim: self.latent_dim,
            heads: self.heads.clone(),
            encoder: self.encoder.iter().map(Linear::zeros_like).collect(),
            encoder_out: self.encoder_out.zeros_like(),
            decoder: self.decoder.iter().map(Linear::zeros_like).collect(),
            decoder_out: self.decoder_out.zeros_like(),
            log_var: Array1::zeros(self.log_var.raw_dim()),
        }
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.encoder.iter().chain([&self.encoder_out]).chain(&self.decoder).chain([&self.decoder_out]) {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.log_var.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self
            .encoder
            .iter_mut()
            .chain([&mut self.encoder_out])
            .chain(self.decoder.iter_mut())
            .chain([&mut self.decoder_out])
        {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.log_var.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn variance(&self, k: usize) -> (f64, bool) {
        let v = self.log_var[k].exp();
        if v < LOG_VARIANCE_FLOOR {
            (LOG_VARIANCE_FLOOR, true)
        } else {
            (v, false)
        }
    }

    /// Runs the decoder MLP on latent rows.
    pub fn decode(&self, z: &ArrayView2<f64>) -> Array2<f64> {
        let mut a = z.to_owned();
        for l in &self.decoder {
            a = l.forward(&a.view());
            relu_inplace(&mut a);
        }
        self.decoder_out.forward(&a.view())
    }

    pub fn forward(&self, x: &ArrayView2<f64>, eps: &ArrayView2<f64>) -> Forward {
        let l = self.latent_dim;
        let mut enc_acts = vec![x.to_owned()];
        for layer in &self.encoder {
            let mut a = layer.forward(&enc_acts.last().unwrap().view());
            relu_inplace(&mut a);
            enc_acts.push(a);
        }
        let eo = self.encoder_out.forward(&enc_acts.last().unwrap().view());
        let mu = eo.slice(s![.., ..l]).to_owned();
        let log_var = eo.slice(s![.., l..]).to_owned();
        let std = log_var.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&std * eps);
        let mut dec_acts = vec![z];
        for layer in &self.decoder {
            let mut a = layer.forward(&dec_acts.last().unwrap().view());
            relu_inplace(&mut a);
            dec_acts.push(a);
        }
        let output = self.decoder_out.forward(&dec_acts.last().unwrap().view());
        Forward {
            enc_acts,
            mu,
            log_var,
            std,
            dec_acts,
            output,
        }
    }

    /// Per-row reconstruction NLL of `x` given decoder outputs, plus dL/do
    /// and dL/d(log_var) for the batch mean when `grads` is given.
    fn reconstruction(
        &self,
        x: &ArrayView2<f64>,
        out: &Array2<f64>,
        mut grads: Option<(&mut Array2<f64>, &mut Array1<f64>)>,
    ) -> Vec<f64> {
        let n = x.nrows();
        let inv_n = 1.0 / n as f64;
        let mut nll = vec![0.0; n];
        for head in &self.heads {
            match *head {
                Head::Gaussian { index, var } => {
                    let (v, floored) = self.variance(var);
                    for r in 0..n {
                        let diff = out[[r, index]] - x[[r, index]];
                        nll[r] += 0.5 * (LN_2PI + v.ln()) + diff * diff / (2.0 * v);
                        if let Some((d_out, d_lv)) = grads.as_mut() {
                            d_out[[r, index]] += diff / v * inv_n;
                            if !floored {
                                d_lv[var] += (0.5 - diff * diff / (2.0 * v)) * inv_n;
                            }
                        }
                    }
                }
                Head::Softmax { offset, width } => {
                    for r in 0..n {
                        let logits = out.slice(s![r, offset..offset + width]);
                        let logits = logits.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| logits.to_vec());
                        let lse = log_sum_exp(&logits);
                        let mut t_sum = 0.0;
                        for k in 0..width {
                            let t = x[[r, offset + k]];
                            t_sum += t;
                            nll[r] -= t * (logits[k] - lse);
                        }
                        if let Some((d_out, _)) = grads.as_mut() {
                            for k in 0..width {
                                let p = (logits[k] - lse).exp();
                                d_out[[r, offset + k]] += (p * t_sum - x[[r, offset + k]]) * inv_n;
                            }
                        }
                    }
                }
            }
        }
        nll
    }

    /// KL(q(z|x) ‖ N(0, I)) per row and per latent dim.
    pub fn kl_per_dim(mu: &Array2<f64>, log_var: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(mu.raw_dim());
        Zip::from(&mut out).and(mu).and(log_var).for_each(|o, &m, &lv| {
            *o = -0.5 * (1.0 + lv - m * m - lv.exp());
        });
        out
    }

    /// Batch-mean loss `reconstruction + kl_weight · KL` under fixed noise.
    pub fn loss(&self, x: &ArrayView2<f64>, eps: &ArrayView2<f64>, kl_weight: f64) -> LossParts {
        let f = self.forward(x, eps);
        self.loss_from(x, &f, kl_weight)
    }

    fn loss_from(&self, x: &ArrayView2<f64>, f: &Forward, kl_weight: f64) -> LossParts {
        let n = x.nrows() as f64;
        let rec = self.reconstruction(x, &f.output, None).iter().sum::<f64>() / n;
        let kl = Self::kl_per_dim(&f.mu, &f.log_var).sum() / n;
        LossParts {
            total: rec + kl_weight * kl,
            reconstruction: rec,
            kl,
        }
    }

    /// Loss and exact gradients (same shape as `self`) under fixed noise.
    pub fn loss_and_grad(
        &self,
        x: &ArrayView2<f64>,
        eps: &ArrayView2<f64>,
        kl_weight: f64,
    ) -> (LossParts, Forward, Network) {
        let n = x.nrows();
        let inv_n = 1.0 / n as f64;
        let f = self.forward(x, eps);
        let mut g = self.zeros_like();
        let mut d_out = Array2::<f64>::zeros(f.output.raw_dim());
        let rec_rows = self.reconstruction(x, &f.output, Some((&mut d_out, &mut g.log_var)));
        let rec = rec_rows.iter().sum::<f64>() * inv_n;
        let kl = Self::kl_per_dim(&f.mu, &f.log_var).sum() * inv_n;

        // Decoder.
        let mut d = d_out;
        let last = f.dec_acts.len() - 1;
        let mut dz = self
            .decoder_out
            .backward(&f.dec_acts[last].view(), &d, &mut g.decoder_out, true)
            .unwrap();
        for i in (0..self.decoder.len()).rev() {
            relu_mask(&mut dz, &f.dec_acts[i + 1]);
            d = dz;
            dz = self.decoder[i]
                .backward(&f.dec_acts[i].view(), &d, &mut g.decoder[i], true)
                .unwrap();
        }

        // Reparameterisation and KL.
        let l = self.latent_dim;
        let mut d_eo = Array2::<f64>::zeros((n, 2 * l));
        for r in 0..n {
            for k in 0..l {
                let m = f.mu[[r, k]];
                let lv = f.log_var[[r, k]];
                let gz = dz[[r, k]];
                d_eo[[r, k]] = gz + kl_weight * m * inv_n;
                d_eo[[r, l + k]] =
                    gz * 0.5 * f.std[[r, k]] * eps[[r, k]] + kl_weight * 0.5 * (lv.exp() - 1.0) * inv_n;
            }
        }

        // Encoder.
        let last = f.enc_acts.len() - 1;
        let need = !self.encoder.is_empty();
        let mut da = self
            .encoder_out
            .backward(&f.enc_acts[last].view(), &d_eo, &mut g.encoder_out, need);
        for i in (0..self.encoder.len()).rev() {
            let mut di = da.take().unwrap();
            relu_mask(&mut di, &f.enc_acts[i + 1]);
            da = self.encoder[i].backward(&f.enc_acts[i].view(), &di, &mut g.encoder[i], i > 0);
        }

        let parts = LossParts {
            total: rec + kl_weight * kl,
            reconstruction: rec,
            kl,
        };
        (parts, f, g)
    }

    /// Index of the head whose reconstruction term is non-finite, if any.
    pub fn non_finite_head(&self, x: &ArrayView2<f64>, out: &Array2<f64>) -> Option<usize> {
        let single = |h: &Head| Network {
            heads: vec![*h],
            ..self.zeros_like()
        };
        self.heads.iter().position(|h| {
            let mut probe = single(h);
            probe.log_var = self.log_var.clone();
            probe.reconstruction(x, out, None).iter().any(|v| !v.is_finite())
        })
    }
}

/// Largest relative difference between the analytic gradient and central
/// finite differences over every parameter. The denominator is floored at
/// 1e-6 so parameters with vanishing gradients compare absolutely.
pub fn gradient_check(net: &Network, x: &ArrayView2<f64>, eps: &ArrayView2<f64>, kl_weight: f64, step: f64) -> f64 {
    let (_, _, analytic) = net.loss_and_grad(x, eps, kl_weight);
    let analytic: Vec<f64> = analytic.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    let n_tensors = probe.tensors().len();
    for t in 0..n_tensors {
        let len = probe.tensors()[t].len();
        for i in 0..len {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + step;
            let up = probe.loss(x, eps, kl_weight).total;
            probe.tensors_mut()[t][i] = orig - step;
            let down = probe.loss(x, eps, kl_weight).total;
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            flat += 1;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng_stream;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(hidden: Vec<usize>, seed: u64) -> (Network, Array2<f64>, Array2<f64>) {
        let mut rng = rng_stream(seed, 0);
        let heads = vec![
            Head::Gaussian { index: 0, var: 0 },
            Head::Gaussian { index: 1, var: 1 },
            Head::Softmax { offset: 2, width: 2 },
        ];
        let arch = Architecture {
            encoder_hidden: hidden.clone(),
            decoder_hidden: hidden,
            latent_dim: 2,
        };
        let mut net = Network::new(4, heads, &arch, &mut rng);
        net.log_var[0] = 0.3;
        net.log_var[1] = -0.4;
        let x = Array2::from_shape_fn((5, 4), |(r, c)| match c {
            0 | 1 => StandardNormal.sample(&mut rng),
            2 => (r % 2) as f64,
            _ => ((r + 1) % 2) as f64,
        });
        let eps = Array2::from_shape_fn((5, 2), |_| StandardNormal.sample(&mut rng));
        (net, x, eps)
    }

    #[test]
    fn gradient_check_4_2_4() {
        let (net, x, eps) = toy(vec![], 1);
        let err = gradient_check(&net, &x.view(), &eps.view(), 1.0, 1e-5);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_with_hidden_layers_and_kl_weight() {
        let (net, x, eps) = toy(vec![3], 2);
        let err = gradient_check(&net, &x.view(), &eps.view(), 0.25, 1e-5);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn kl_zero_at_prior_and_non_negative() {
        let z = Array2::<f64>::zeros((3, 4));
        assert_eq!(Network::kl_per_dim(&z, &z).sum(), 0.0);
        let mut rng = rng_stream(3, 0);
        let mu = Array2::from_shape_fn((50, 4), |_| StandardNormal.sample(&mut rng));
        let lv = Array2::from_shape_fn((50, 4), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            3.0 * v
        });
        assert!(Network::kl_per_dim(&mu, &lv).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn perfect_reconstruction_oracle() {
        let (mut net, _, _) = toy(vec![], 4);
        net.log_var.fill(0.0);
        // Decoder ignores z and emits the target exactly; softmax logit gap is huge.
        net.decoder_out.w.fill(0.0);
        net.decoder_out.b = Array1::from(vec![1.5, -2.0, 800.0, -800.0]);
        let x = Array2::from_shape_vec((2, 4), vec![1.5, -2.0, 1.0, 0.0, 1.5, -2.0, 1.0, 0.0]).unwrap();
        let eps = Array2::zeros((2, 2));
        let f = net.forward(&x.view(), &eps.view());
        let rec = net.reconstruction(&x.view(), &f.output, None);
        for v in rec {
            assert!((v - LN_2PI).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn zero_weight_bias_gradients_by_hand() {
        let (mut net, _, _) = toy(vec![], 5);
        net.log_var.fill(0.0);
        net.decoder_out.w.fill(0.0);
        net.decoder_out.b = Array1::from(vec![0.5, 0.0, 0.0, 0.0]);
        net.encoder_out.w.fill(0.0);
        net.encoder_out.b = Array1::from(vec![0.7, -0.2, 0.0, 0.0]);
        // Symmetric input: column 0 is ±1, column 1 is 0, categories split evenly.
        let x = Array2::from_shape_vec((2, 4), vec![1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0]).unwrap();
        let eps = Array2::zeros((2, 2));
        let (_, _, g) = net.loss_and_grad(&x.view(), &eps.view(), 1.0);
        // d/db0 of mean ½(b0 − x)² = b0 − mean(x) = 0.5.
        assert!((g.decoder_out.b[0] - 0.5).abs() < 1e-15);
        assert!(g.decoder_out.b[1].abs() < 1e-15);
        // Equal logits, balanced targets → p − t averages to 0.
        assert!(g.decoder_out.b[2].abs() < 1e-15 && g.decoder_out.b[3].abs() < 1e-15);
        // σ = 1 and no decoder path: ∂KL/∂μ = μ.
        assert!((g.encoder_out.b[0] - 0.7).abs() < 1e-15);
        assert!((g.encoder_out.b[1] + 0.2).abs() < 1e-15);
        assert!(g.encoder_out.b[2].abs() < 1e-15);
        // log-variance: ½ − mean(diff²)/2 with diffs ∓0.5, 1.5 → ½ − (0.25+2.25)/4.
        assert!((g.log_var[0] - (0.5 - 2.5 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn floored_variance_has_no_gradient() {
        let (mut net, x, eps) = toy(vec![], 6);
        net.log_var[0] = -40.0;
        let (_, _, g) = net.loss_and_grad(&x.view(), &eps.view(), 1.0);
        assert_eq!(g.log_var[0], 0.0);
    }

    #[test]
    fn tensors_cover_all_parameters() {
        let (net, _, _) = toy(vec![3], 7);
        // enc 4→3, out 3→4; dec 2→3, out 3→4; 2 log-vars
        let expected = (4 * 3 + 3) + (3 * 4 + 4) + (2 * 3 + 3) + (3 * 4 + 4) + 2;
        assert_eq!(net.n_params(), expected);
    }

    #[test]
    fn non_finite_head_is_located() {
        let (net, x, eps) = toy(vec![], 8);
        let mut f = net.forward(&x.view(), &eps.view());
        f.output[[1, 3]] = f64::NAN;
        assert_eq!(net.non_finite_head(&x.view(), &f.output), Some(2));
    }
}
