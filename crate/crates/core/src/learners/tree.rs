//! Histogram-binned CART on (gradient, hessian) pairs, plus forests and
//! gradient boosting built on it.
//!
//! With unit hessians a split maximises variance reduction; on 0/1 targets
//! that is the Gini criterion up to a constant factor, so one engine serves
//! both classification and regression.

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::numkit::RngStream;

pub const DEFAULT_MAX_BINS: usize = 64;

/// Per-feature split thresholds learned from training data.
#[derive(Clone, Debug)]
pub struct Binner {
    thresholds: Vec<Vec<f64>>,
}

impl Binner {
    pub fn fit(x: &Array2<f64>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let thresholds = x
            .columns()
            .into_iter()
            .map(|col| {
                let mut v: Vec<f64> = col.to_vec();
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                if distinct.len() <= max_bins {
                    return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
                }
                let n = v.len();
                let mut t: Vec<f64> = Vec::with_capacity(max_bins - 1);
                for k in 1..max_bins {
                    let q = v[k * n / max_bins];
                    // Cut just above q, halfway to the next distinct value.
                    let next = distinct.partition_point(|&d| d <= q);
                    if next < distinct.len() {
                        let cut = 0.5 * (q + distinct[next]);
                        if t.last().is_none_or(|&last| cut > last) {
                            t.push(cut);
                        }
                    }
                }
                t
            })
            .collect();
        Binner { thresholds }
    }

    pub fn n_features(&self) -> usize {
        self.thresholds.len()
    }

    fn n_bins(&self, f: usize) -> usize {
        self.thresholds[f].len() + 1
    }

    /// Column-major bin codes; bin `b` holds values in `(t[b-1], t[b]]`.
    pub fn transform(&self, x: &Array2<f64>) -> Vec<Vec<u8>> {
        self.thresholds
            .iter()
            .enumerate()
            .map(|(f, t)| x.column(f).iter().map(|&v| t.partition_point(|&c| c < v) as u8).collect())
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Features tried per node; `None` tries all.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    binner: &'a Binner,
    g: &'a [f64],
    h: &'a [f64],
    params: TreeParams,
    rng: Option<&'a mut RngStream>,
    nodes: Vec<Node>,
    hist: Vec<(f64, f64, usize)>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let (mut gs, mut hs, mut ss) = (0.0, 0.0, 0.0);
        for &r in rows.iter() {
            let (g, h) = (self.g[r as usize], self.h[r as usize]);
            gs += g;
            hs += h;
            ss += g * g / h;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(if hs > 0.0 { gs / hs } else { 0.0 }));
        let impurity = ss - gs * gs / hs;
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || rows.len() < 2 * min_leaf || impurity <= 1e-12 * ss.max(f64::MIN_POSITIVE) {
            return id;
        }
        let d = self.binner.n_features();
        let features: Vec<usize> = match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample_indices(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let mut best: Option<(f64, usize, usize)> = None;
        for f in features {
            let nb = self.binner.n_bins(f);
            if nb < 2 {
                continue;
            }
            self.hist.clear();
            self.hist.resize(nb, (0.0, 0.0, 0));
            let col = &self.bins[f];
            for &r in rows.iter() {
                let e = &mut self.hist[col[r as usize] as usize];
                e.0 += self.g[r as usize];
                e.1 += self.h[r as usize];
                e.2 += 1;
            }
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                let (g, h, n) = self.hist[b];
                gl += g;
                hl += h;
                nl += n;
                let nr = rows.len() - nl;
                if n == 0 || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let hr = hs - hl;
                if hl <= 0.0 || hr <= 0.0 {
                    continue;
                }
                let diff = gl / hl - (gs - gl) / hr;
                let gain = hl * hr / hs * diff * diff;
                // Impure nodes split even at zero gain, as XOR needs at its root.
                if best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            return id;
        };
        let col = &self.bins[feature];
        let mut left: Vec<u32> = Vec::with_capacity(rows.len());
        let mut right: Vec<u32> = Vec::with_capacity(rows.len());
        for &r in rows.iter() {
            if (col[r as usize] as usize) <= bin {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        let split = left.len();
        rows[..split].copy_from_slice(&left);
        rows[split..].copy_from_slice(&right);
        drop((left, right));
        let (lrows, rrows) = rows.split_at_mut(split);
        let l = self.grow(lrows, depth + 1);
        let r = self.grow(rrows, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold: self.binner.thresholds[feature][bin],
            left: l,
            right: r,
        };
        id
    }
}

impl Tree {
    /// Fits on the rows listed in `rows` (duplicates allowed, for
    /// bootstrapping). Leaves predict Σg/Σh.
    pub fn fit(
        binner: &Binner,
        bins: &[Vec<u8>],
        g: &[f64],
        h: &[f64],
        rows: &mut [u32],
        params: TreeParams,
        rng: Option<&mut RngStream>,
    ) -> Tree {
        let mut grower = Grower {
            bins,
            binner,
            g,
            h,
            params,
            rng,
            nodes: Vec::new(),
            hist: Vec::new(),
        };
        grower.grow(rows, 0);
        Tree { nodes: grower.nodes }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r.as_slice().unwrap_or(&r.to_vec()))).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Plain CART on `y` (0/1 labels or real targets), no randomness.
pub fn fit_tree(x: &Array2<f64>, y: &[f64], max_depth: usize, max_bins: usize) -> Tree {
    let binner = Binner::fit(x, max_bins);
    let bins = binner.transform(x);
    let h = vec![1.0; y.len()];
    let mut rows: Vec<u32> = (0..y.len() as u32).collect();
    let params = TreeParams {
        max_depth,
        max_features: None,
        min_samples_leaf: 1,
    };
    Tree::fit(&binner, &bins, y, &h, &mut rows, params, None)
}

#[derive(Clone, Debug)]
pub struct Forest {
    trees: Vec<Tree>,
}

pub fn fit_forest(
    x: &Array2<f64>,
    y: &[f64],
    n_trees: usize,
    params: TreeParams,
    bootstrap: bool,
    max_bins: usize,
    rng: &mut RngStream,
) -> Forest {
    let binner = Binner::fit(x, max_bins);
    let bins = binner.transform(x);
    let n = y.len();
    let h = vec![1.0; n];
    let trees = (0..n_trees)
        .map(|_| {
            let mut rows: Vec<u32> = if bootstrap {
                let mut r: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
                r.sort_unstable();
                r
            } else {
                (0..n as u32).collect()
            };
            Tree::fit(&binner, &bins, y, &h, &mut rows, params, Some(&mut *rng))
        })
        .collect();
    Forest { trees }
}

impl Forest {
    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows()];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict(x)) {
                *o += p;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoostLoss {
    Squared,
    Logistic,
}

#[derive(Clone, Debug)]
pub struct Boosted {
    loss: BoostLoss,
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    /// Training loss before the first round and after each round.
    pub loss_trace: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn mean_loss(loss: BoostLoss, y: &[f64], f: &[f64]) -> f64 {
    let n = y.len() as f64;
    match loss {
        BoostLoss::Squared => y.iter().zip(f).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / n,
        BoostLoss::Logistic => {
            y.iter()
                .zip(f)
                .map(|(y, f)| {
                    // log(1 + e^f) − y·f, stable for large |f|
                    f.max(0.0) + (-f.abs()).exp().ln_1p() - y * f
                })
                .sum::<f64>()
                / n
        }
    }
}

pub fn fit_boosted(
    x: &Array2<f64>,
    y: &[f64],
    loss: BoostLoss,
    rounds: usize,
    max_depth: usize,
    learning_rate: f64,
    max_bins: usize,
) -> Boosted {
    let binner = Binner::fit(x, max_bins);
    let bins = binner.transform(x);
    let n = y.len();
    let init = match loss {
        BoostLoss::Squared => y.iter().sum::<f64>() / n as f64,
        BoostLoss::Logistic => {
            let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let params = TreeParams {
        max_depth,
        max_features: None,
        min_samples_leaf: 1,
    };
    let mut f = vec![init; n];
    let mut g = vec![0.0; n];
    let mut h = vec![1.0; n];
    let mut trace = vec![mean_loss(loss, y, &f)];
    let mut trees = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        for i in 0..n {
            match loss {
                BoostLoss::Squared => g[i] = y[i] - f[i],
                BoostLoss::Logistic => {
                    let p = sigmoid(f[i]);
                    g[i] = y[i] - p;
                    h[i] = (p * (1.0 - p)).max(1e-12);
                }
            }
        }
        let mut rows: Vec<u32> = (0..n as u32).collect();
        let tree = Tree::fit(&binner, &bins, &g, &h, &mut rows, params, None);
        for (i, fi) in f.iter_mut().enumerate() {
            let row: Vec<f64> = x.row(i).to_vec();
            *fi += learning_rate * tree.predict_row(&row);
        }
        trace.push(mean_loss(loss, y, &f));
        trees.push(tree);
    }
    Boosted {
        loss,
        init,
        learning_rate,
        trees,
        loss_trace: trace,
    }
}

impl Boosted {
    /// Raw scores: the regression value, or the log-odds.
    pub fn decision(&self, x: &Array2<f64>) -> Vec<f64> {
        let mut out = vec![self.init; x.nrows()];
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict(x)) {
                *o += self.learning_rate * p;
            }
        }
        out
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        let d = self.decision(x);
        match self.loss {
            BoostLoss::Squared => d,
            BoostLoss::Logistic => d.into_iter().map(sigmoid).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng_stream;
    use ndarray::array;

    #[test]
    fn xor_is_memorised() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0.0, 1.0, 1.0, 0.0];
        let t = fit_tree(&x, &y, 2, 64);
        assert_eq!(t.predict(&x), y);
    }

    #[test]
    fn thresholds_split_between_distinct_values() {
        let x = array![[1.0], [2.0], [2.0], [5.0]];
        let b = Binner::fit(&x, 64);
        assert_eq!(b.thresholds[0], vec![1.5, 3.5]);
        assert_eq!(b.transform(&x)[0], vec![0, 1, 1, 2]);
    }

    #[test]
    fn quantile_bins_are_capped() {
        let x = Array2::from_shape_fn((1000, 1), |(i, _)| i as f64);
        let b = Binner::fit(&x, 16);
        assert_eq!(b.n_bins(0), 16);
        assert!(b.thresholds[0].windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn step_function_recovered() {
        let x = Array2::from_shape_fn((200, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..200).map(|i| if i < 77 { 3.0 } else { -1.0 }).collect();
        let t = fit_tree(&x, &y, 4, 256);
        assert_eq!(t.predict(&x), y);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn single_tree_forest_without_bootstrap_is_the_tree() {
        let mut rng = rng_stream(3, 0);
        let x = Array2::from_shape_fn((300, 4), |_| rng.gen::<f64>());
        let y: Vec<f64> = x.rows().into_iter().map(|r| if r[0] + r[2] > 1.0 { 1.0 } else { 0.0 }).collect();
        let tree = fit_tree(&x, &y, 12, 64);
        let params = TreeParams {
            max_depth: 12,
            max_features: Some(4),
            min_samples_leaf: 1,
        };
        let forest = fit_forest(&x, &y, 1, params, false, 64, &mut rng_stream(9, 1));
        assert_eq!(forest.predict(&x), tree.predict(&x));
    }

    #[test]
    fn boosting_loss_never_increases() {
        let mut rng = rng_stream(5, 0);
        let x = Array2::from_shape_fn((400, 3), |_| rng.gen::<f64>());
        let y: Vec<f64> = x.rows().into_iter().map(|r| (6.0 * r[0]).sin() + r[1] * r[2]).collect();
        let b = fit_boosted(&x, &y, BoostLoss::Squared, 50, 3, 0.1, 64);
        assert!(b.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(b.loss_trace[50] < 0.2 * b.loss_trace[0]);
    }
}
