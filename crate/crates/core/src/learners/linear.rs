//! Linear models: least squares (plain, ridge, lasso, principal-component),
//! logistic regression and SGD-trained linear models. All work on
//! standardised features and report coefficients in the original units.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkit::{symmetric_eigen, RngStream};

/// Column means and population standard deviations; constant columns keep
/// scale 1.
#[derive(Clone, Debug)]
pub struct Scaler {
    pub means: Array1<f64>,
    pub scales: Array1<f64>,
}

impl Scaler {
    pub fn fit(x: &Array2<f64>) -> Self {
        let means = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let scales = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 && s.is_finite() { s } else { 1.0 });
        Scaler { means, scales }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.means) / &self.scales
    }
}

/// Solves `a·w = b` for symmetric positive-definite `a`; fails when a pivot
/// falls below `rel_tol` times its original diagonal entry.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>, rel_tol: f64) -> Option<Array1<f64>> {
    let d = a.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > rel_tol * a[[j, j]].abs().max(f64::MIN_POSITIVE)) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    let mut z = Array1::<f64>::zeros(d);
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[[i, k]] * z[k]).sum();
        z[i] = (b[i] - s) / l[[i, i]];
    }
    let mut w = Array1::<f64>::zeros(d);
    for i in (0..d).rev() {
        let s: f64 = ((i + 1)..d).map(|k| l[[k, i]] * w[k]).sum();
        w[i] = (z[i] - s) / l[[i, i]];
    }
    Some(w)
}

/// `intercept + x·coef` in original feature units.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Array1<f64>,
}

impl LinearModel {
    fn from_standardized(scaler: &Scaler, intercept: f64, w: &Array1<f64>) -> Self {
        let coef = w / &scaler.scales;
        let intercept = intercept - coef.dot(&scaler.means);
        LinearModel { intercept, coef }
    }

    pub fn decision(&self, x: &Array2<f64>) -> Vec<f64> {
        (x.dot(&self.coef) + self.intercept).to_vec()
    }
}

fn centered(y: &[f64]) -> (f64, Array1<f64>) {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    (m, y.iter().map(|v| v - m).collect())
}

/// Ridge on standardised features with an unpenalised intercept;
/// `lambda = 0` is ordinary least squares.
pub fn fit_ridge(x: &Array2<f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let (ym, yc) = centered(y);
    let mut gram = xs.t().dot(&xs);
    for j in 0..gram.nrows() {
        gram[[j, j]] += lambda;
    }
    let rhs = xs.t().dot(&yc);
    let w = solve_spd(&gram, &rhs, 1e-10).ok_or_else(|| Error::Learner {
        learner: if lambda == 0.0 { "ols" } else { "ridge" }.to_string(),
        detail: "normal equations are singular (collinear or constant features); use ridge or pca_ols".to_string(),
    })?;
    Ok(LinearModel::from_standardized(&scaler, ym, &w))
}

pub fn fit_ols(x: &Array2<f64>, y: &[f64]) -> Result<LinearModel> {
    if x.nrows() <= x.ncols() {
        return Err(Error::Learner {
            learner: "ols".to_string(),
            detail: format!("{} rows for {} features; use ridge", x.nrows(), x.ncols()),
        });
    }
    fit_ridge(x, y, 0.0)
}

pub const LASSO_TOLERANCE: f64 = 1e-7;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent on `(1/2n)·|y − Xw|² + λ·|w|₁` over standardised
/// features, using the precomputed Gram matrix.
pub fn fit_lasso(x: &Array2<f64>, y: &[f64], lambda: f64) -> LinearModel {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let n = y.len() as f64;
    let (ym, yc) = centered(y);
    let gram = xs.t().dot(&xs) / n;
    let xy = xs.t().dot(&yc) / n;
    let d = gram.nrows();
    let mut w = Array1::<f64>::zeros(d);
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            if gram[[j, j]] <= 0.0 {
                continue;
            }
            let rho = xy[j] - gram.row(j).dot(&w) + gram[[j, j]] * w[j];
            let new = soft_threshold(rho, lambda) / gram[[j, j]];
            max_step = max_step.max((new - w[j]).abs());
            w[j] = new;
        }
        if max_step <= LASSO_TOLERANCE {
            break;
        }
    }
    LinearModel::from_standardized(&scaler, ym, &w)
}

/// Least squares on the leading principal components that together explain
/// at least `variance_share` of the standardised variance.
#[derive(Clone, Debug)]
pub struct PcaOls {
    scaler: Scaler,
    basis: Array2<f64>,
    intercept: f64,
    weights: Array1<f64>,
}

pub fn fit_pca_ols(x: &Array2<f64>, y: &[f64], variance_share: f64) -> Result<PcaOls> {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let cov = xs.t().dot(&xs) / x.nrows() as f64;
    let (values, vectors) = symmetric_eigen(&cov)?;
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let mut keep = 0;
    let mut acc = 0.0;
    while keep < values.len() && values[keep] > 1e-12 {
        acc += values[keep];
        keep += 1;
        if acc >= variance_share * total {
            break;
        }
    }
    if keep == 0 {
        return Err(Error::Learner {
            learner: "pca_ols".to_string(),
            detail: "features have no variance".to_string(),
        });
    }
    let basis = vectors.slice(ndarray::s![.., ..keep]).to_owned();
    let scores = xs.dot(&basis);
    let (ym, yc) = centered(y);
    let gram = scores.t().dot(&scores);
    let weights = solve_spd(&gram, &scores.t().dot(&yc), 1e-12).ok_or_else(|| Error::Learner {
        learner: "pca_ols".to_string(),
        detail: "component scores are degenerate".to_string(),
    })?;
    Ok(PcaOls {
        scaler,
        basis,
        intercept: ym,
        weights,
    })
}

impl PcaOls {
    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        (self.scaler.transform(x).dot(&self.basis).dot(&self.weights) + self.intercept).to_vec()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full-batch gradient descent on the mean log-loss.
pub fn fit_logistic(x: &Array2<f64>, y: &[f64], learning_rate: f64, iterations: usize) -> LinearModel {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let n = y.len() as f64;
    let y = Array1::from(y.to_vec());
    let mut w = Array1::<f64>::zeros(xs.ncols());
    let mut b = 0.0;
    for _ in 0..iterations {
        let p = (xs.dot(&w) + b).mapv(sigmoid);
        let r = &p - &y;
        w = w - xs.t().dot(&r) * (learning_rate / n);
        b -= learning_rate * r.sum() / n;
    }
    LinearModel::from_standardized(&scaler, b, &w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgdLoss {
    Logistic,
    Squared,
}

/// Per-sample SGD with L2 penalty over shuffled epochs. The squared loss is
/// fitted on a standardised target and mapped back.
pub fn fit_sgd(
    x: &Array2<f64>,
    y: &[f64],
    loss: SgdLoss,
    epochs: usize,
    learning_rate: f64,
    l2: f64,
    rng: &mut RngStream,
) -> LinearModel {
    let scaler = Scaler::fit(x);
    let xs = scaler.transform(x);
    let (ym, ysd) = match loss {
        SgdLoss::Logistic => (0.0, 1.0),
        SgdLoss::Squared => {
            let (m, c) = centered(y);
            let sd = (c.dot(&c) / y.len() as f64).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        }
    };
    let mut w = Array1::<f64>::zeros(xs.ncols());
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..y.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for &i in &order {
            let row = xs.row(i);
            let z = row.dot(&w) + b;
            let target = (y[i] - ym) / ysd;
            let err = match loss {
                SgdLoss::Logistic => sigmoid(z) - target,
                SgdLoss::Squared => z - target,
            };
            w.zip_mut_with(&row, |wj, &xj| *wj -= learning_rate * (err * xj + l2 * *wj));
            b -= learning_rate * err;
        }
    }
    LinearModel::from_standardized(&scaler, b * ysd + ym, &(w * ysd))
}
