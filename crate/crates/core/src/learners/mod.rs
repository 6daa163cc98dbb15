//! Supervised learners, stratified cross-validation and metrics used by the
//! fidelity and utility stages.

mod features;
mod folds;
pub mod linear;
mod metrics;
pub mod neighbors;
pub mod tree;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{derive_seed, rng_stream};

pub use features::{FeatureColumn, FeatureEncoder, FeatureTransform};
pub use folds::{stratified_kfold, FoldPlan};
pub use metrics::{classification_metrics, regression_metrics, ClassificationMetrics, RegressionMetrics};

use linear::{LinearModel, PcaOls, SgdLoss};
use neighbors::{GaussianNb, Knn};
use tree::{BoostLoss, Boosted, Forest, Tree, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerName {
    RandomForest,
    GradientBoosting,
    Knn,
    DecisionTree,
    GaussianNb,
    LogisticRegression,
    SgdLinear,
    Ols,
    Ridge,
    Lasso,
    KnnReg,
    TreeReg,
    ForestReg,
    BoostingReg,
    SgdReg,
    PcaOls,
}

impl LearnerName {
    pub const CLASSIFIERS: [LearnerName; 7] = [
        LearnerName::RandomForest,
        LearnerName::GradientBoosting,
        LearnerName::Knn,
        LearnerName::DecisionTree,
        LearnerName::GaussianNb,
        LearnerName::LogisticRegression,
        LearnerName::SgdLinear,
    ];
    pub const REGRESSORS: [LearnerName; 9] = [
        LearnerName::Ols,
        LearnerName::Ridge,
        LearnerName::Lasso,
        LearnerName::KnnReg,
        LearnerName::TreeReg,
        LearnerName::ForestReg,
        LearnerName::BoostingReg,
        LearnerName::SgdReg,
        LearnerName::PcaOls,
    ];

    pub fn is_classifier(self) -> bool {
        Self::CLASSIFIERS.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerName::RandomForest => "random_forest",
            LearnerName::GradientBoosting => "gradient_boosting",
            LearnerName::Knn => "knn",
            LearnerName::DecisionTree => "decision_tree",
            LearnerName::GaussianNb => "gaussian_nb",
            LearnerName::LogisticRegression => "logistic_regression",
            LearnerName::SgdLinear => "sgd_linear",
            LearnerName::Ols => "ols",
            LearnerName::Ridge => "ridge",
            LearnerName::Lasso => "lasso",
            LearnerName::KnnReg => "knn_reg",
            LearnerName::TreeReg => "tree_reg",
            LearnerName::ForestReg => "forest_reg",
            LearnerName::BoostingReg => "boosting_reg",
            LearnerName::SgdReg => "sgd_reg",
            LearnerName::PcaOls => "pca_ols",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::CLASSIFIERS.into_iter().chain(Self::REGRESSORS).find(|l| l.as_str() == s)
    }
}

impl std::fmt::Display for LearnerName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters for every learner; each reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features per split in forests; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub boost_rounds: usize,
    pub boost_depth: usize,
    pub boost_learning_rate: f64,
    pub max_bins: usize,
    pub k: usize,
    pub logistic_learning_rate: f64,
    pub logistic_iterations: usize,
    pub sgd_epochs: usize,
    pub sgd_learning_rate: f64,
    pub sgd_l2: f64,
    pub ridge_lambda: f64,
    pub lasso_lambda: f64,
    pub pca_variance: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            n_trees: 100,
            max_depth: 12,
            max_features: None,
            bootstrap: true,
            boost_rounds: 100,
            boost_depth: 3,
            boost_learning_rate: 0.1,
            max_bins: tree::DEFAULT_MAX_BINS,
            k: 5,
            logistic_learning_rate: 0.1,
            logistic_iterations: 500,
            sgd_epochs: 5,
            sgd_learning_rate: 1e-3,
            sgd_l2: 1e-4,
            ridge_lambda: 1.0,
            lasso_lambda: 0.1,
            pca_variance: 0.95,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("hyperparameter {what}")));
        if self.n_trees == 0 || self.boost_rounds == 0 {
            return bad("n_trees and boost_rounds must be ≥ 1");
        }
        if !(1..=64).contains(&self.max_depth) || !(1..=64).contains(&self.boost_depth) {
            return bad("depths must be in 1..=64");
        }
        if self.max_features == Some(0) {
            return bad("max_features must be ≥ 1");
        }
        if !(2..=256).contains(&self.max_bins) {
            return bad("max_bins must be in 2..=256");
        }
        if self.k == 0 || self.logistic_iterations == 0 || self.sgd_epochs == 0 {
            return bad("k, logistic_iterations and sgd_epochs must be ≥ 1");
        }
        for (name, v) in [
            ("boost_learning_rate", self.boost_learning_rate),
            ("logistic_learning_rate", self.logistic_learning_rate),
            ("sgd_learning_rate", self.sgd_learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("sgd_l2", self.sgd_l2),
            ("ridge_lambda", self.ridge_lambda),
            ("lasso_lambda", self.lasso_lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be non-negative"));
            }
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return bad("pca_variance must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub name: LearnerName,
    #[serde(default)]
    pub params: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(name: LearnerName, seed: u64) -> Self {
        LearnerSpec {
            name,
            params: Hyperparameters::default(),
            seed,
        }
    }
}

/// The seven classifiers with default settings and per-learner seeds.
pub fn default_classifiers(seed: u64) -> Vec<LearnerSpec> {
    LearnerName::CLASSIFIERS
        .into_iter()
        .map(|n| LearnerSpec::new(n, derive_seed(seed, n.as_str())))
        .collect()
}

pub fn default_regressors(seed: u64) -> Vec<LearnerSpec> {
    LearnerName::REGRESSORS
        .into_iter()
        .map(|n| LearnerSpec::new(n, derive_seed(seed, n.as_str())))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!("{} rows but {} targets", x.nrows(), y.len())));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.ncols()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains NaN or infinite values".to_string()));
        }
        Ok(Dataset { x, y, feature_names })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn take(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(ndarray::Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

enum Fitted {
    Tree(Tree),
    Forest(Forest),
    Boosted(Boosted),
    Linear(LinearModel),
    PcaOls(PcaOls),
    Knn(Knn),
    Nb(GaussianNb),
}

/// A trained learner. Classifiers predict 0/1 labels, regressors real values.
pub struct Model {
    name: LearnerName,
    fitted: Fitted,
}

impl Model {
    pub fn name(&self) -> LearnerName {
        self.name
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        let raw = match &self.fitted {
            Fitted::Tree(t) => t.predict(x),
            Fitted::Forest(f) => f.predict(x),
            Fitted::Boosted(b) => b.predict(x),
            Fitted::Linear(m) => m.decision(x),
            Fitted::PcaOls(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
            Fitted::Nb(m) => m.predict(x),
        };
        if !self.name.is_classifier() {
            return raw;
        }
        let linear_score = matches!(self.fitted, Fitted::Linear(_));
        raw.into_iter()
            .map(|v| {
                let positive = if linear_score { v > 0.0 } else { v > 0.5 };
                if positive {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Per-round training loss of boosted models.
    pub fn loss_trace(&self) -> Option<&[f64]> {
        match &self.fitted {
            Fitted::Boosted(b) => Some(&b.loss_trace),
            _ => None,
        }
    }
}

fn tree_params(p: &Hyperparameters, d: usize) -> TreeParams {
    TreeParams {
        max_depth: p.max_depth,
        max_features: Some(p.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))),
        min_samples_leaf: 1,
    }
}

pub fn train_classifier(spec: &LearnerSpec, data: &Dataset) -> Result<Model> {
    if !spec.name.is_classifier() {
        return Err(Error::InvalidArgument(format!("{} is not a classifier", spec.name)));
    }
    spec.params.validate()?;
    if data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Learner {
            learner: spec.name.to_string(),
            detail: "classifiers take binary 0/1 labels".to_string(),
        });
    }
    let ones = data.y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == data.n_rows() {
        return Err(Error::Learner {
            learner: spec.name.to_string(),
            detail: "training data holds a single class".to_string(),
        });
    }
    let p = &spec.params;
    let (x, y) = (&data.x, &data.y);
    let mut rng = rng_stream(spec.seed, 0);
    let fitted = match spec.name {
        LearnerName::RandomForest => Fitted::Forest(tree::fit_forest(
            x,
            y,
            p.n_trees,
            tree_params(p, x.ncols()),
            p.bootstrap,
            p.max_bins,
            &mut rng,
        )),
        LearnerName::GradientBoosting => Fitted::Boosted(tree::fit_boosted(
            x,
            y,
            BoostLoss::Logistic,
            p.boost_rounds,
            p.boost_depth,
            p.boost_learning_rate,
            p.max_bins,
        )),
        LearnerName::Knn => Fitted::Knn(Knn::fit(x, y, p.k, true)),
        LearnerName::DecisionTree => Fitted::Tree(tree::fit_tree(x, y, p.max_depth, p.max_bins)),
        LearnerName::GaussianNb => Fitted::Nb(GaussianNb::fit(x, y)),
        LearnerName::LogisticRegression => {
            Fitted::Linear(linear::fit_logistic(x, y, p.logistic_learning_rate, p.logistic_iterations))
        }
        LearnerName::SgdLinear => Fitted::Linear(linear::fit_sgd(
            x,
            y,
            SgdLoss::Logistic,
            p.sgd_epochs,
            p.sgd_learning_rate,
            p.sgd_l2,
            &mut rng,
        )),
        _ => unreachable!(),
    };
    Ok(Model {
        name: spec.name,
        fitted,
    })
}

pub fn train_regressor(spec: &LearnerSpec, data: &Dataset) -> Result<Model> {
    if spec.name.is_classifier() {
        return Err(Error::InvalidArgument(format!("{} is not a regressor", spec.name)));
    }
    spec.params.validate()?;
    if data.n_rows() < 2 {
        return Err(Error::Learner {
            learner: spec.name.to_string(),
            detail: "need at least two training rows".to_string(),
        });
    }
    let p = &spec.params;
    let (x, y) = (&data.x, &data.y);
    let mut rng = rng_stream(spec.seed, 0);
    let fitted = match spec.name {
        LearnerName::Ols => Fitted::Linear(linear::fit_ols(x, y)?),
        LearnerName::Ridge => Fitted::Linear(linear::fit_ridge(x, y, p.ridge_lambda)?),
        LearnerName::Lasso => Fitted::Linear(linear::fit_lasso(x, y, p.lasso_lambda)),
        LearnerName::KnnReg => Fitted::Knn(Knn::fit(x, y, p.k, false)),
        LearnerName::TreeReg => Fitted::Tree(tree::fit_tree(x, y, p.max_depth, p.max_bins)),
        LearnerName::ForestReg => Fitted::Forest(tree::fit_forest(
            x,
            y,
            p.n_trees,
            tree_params(p, x.ncols()),
            p.bootstrap,
            p.max_bins,
            &mut rng,
        )),
        LearnerName::BoostingReg => Fitted::Boosted(tree::fit_boosted(
            x,
            y,
            BoostLoss::Squared,
            p.boost_rounds,
            p.boost_depth,
            p.boost_learning_rate,
            p.max_bins,
        )),
        LearnerName::SgdReg => Fitted::Linear(linear::fit_sgd(
            x,
            y,
            SgdLoss::Squared,
            p.sgd_epochs,
            p.sgd_learning_rate,
            p.sgd_l2,
            &mut rng,
        )),
        LearnerName::PcaOls => Fitted::PcaOls(linear::fit_pca_ols(x, y, p.pca_variance)?),
        _ => unreachable!(),
    };
    Ok(Model {
        name: spec.name,
        fitted,
    })
}

/// Mean accuracy and F1 over stratified folds, in fold order.
pub fn cross_validate_classifier(spec: &LearnerSpec, data: &Dataset, k: usize, seed: u64) -> Result<ClassificationMetrics> {
    let plan = stratified_kfold(&data.y, k, seed)?;
    let (mut acc, mut f1) = (0.0, 0.0);
    for i in 0..plan.k() {
        let (train, test) = plan.split(i);
        let fold_spec = LearnerSpec {
            seed: derive_seed(spec.seed, &format!("fold{i}")),
            ..spec.clone()
        };
        let model = train_classifier(&fold_spec, &data.take(&train))?;
        let test = data.take(&test);
        let m = classification_metrics(&model.predict(&test.x), &test.y)?;
        acc += m.accuracy;
        f1 += m.f1;
    }
    Ok(ClassificationMetrics {
        accuracy: acc / plan.k() as f64,
        f1: f1 / plan.k() as f64,
    })
}
