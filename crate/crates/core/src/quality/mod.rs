//! Four-stage quality evaluation of a synthetic table against the real one:
//! diversity, statistical similarity, fidelity and predictive utility.

mod report;
pub mod scores;

use std::collections::BTreeSet;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::copula::subsample;
use crate::error::{Error, Result};
use crate::flights::{ARR_LABEL, DEP_LABEL, DEST_ID, ORIGIN_ID, PREDICTION_FEATURES, PREDICTION_TARGET};
use crate::learners::{
    cross_validate_classifier, default_classifiers, default_regressors, regression_metrics, train_regressor, Dataset,
    FeatureEncoder, LearnerSpec, RegressionMetrics,
};
use crate::numkit::{derive_seed, rng_stream, PcaModel};
use crate::table::{Column, ColumnKind, Table};

pub use report::{assemble_report, render_summary, write_plot_data, EvaluationReport, Provenance};
use scores::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Diversity,
    Statistical,
    Fidelity,
    Utility,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Diversity, Stage::Statistical, Stage::Fidelity, Stage::Utility];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Diversity => "diversity",
            Stage::Statistical => "statistical",
            Stage::Fidelity => "fidelity",
            Stage::Utility => "utility",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    /// Comma-separated list, e.g. `statistical,fidelity`.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let st = Stage::parse(part)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown evaluation stage `{part}`")))?;
            if !out.contains(&st) {
                out.push(st);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("no evaluation stages selected".to_string()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub stages: Vec<Stage>,
    pub seed: u64,
    pub folds: usize,
    pub holdout_fraction: f64,
    /// Categorical columns whose class balance the diversity stage reports.
    pub label_columns: Vec<String>,
    pub utility_features: Vec<String>,
    pub utility_target: String,
    pub classifiers: Vec<LearnerSpec>,
    pub regressors: Vec<LearnerSpec>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            stages: Stage::ALL.to_vec(),
            seed: 0,
            folds: 5,
            holdout_fraction: 0.2,
            label_columns: vec![DEP_LABEL.to_string(), ARR_LABEL.to_string()],
            utility_features: PREDICTION_FEATURES.iter().map(|s| s.to_string()).collect(),
            utility_target: PREDICTION_TARGET.to_string(),
            classifiers: default_classifiers(0),
            regressors: default_regressors(0),
        }
    }
}

impl EvalConfig {
    pub fn with_seed(seed: u64) -> Self {
        EvalConfig {
            seed,
            classifiers: default_classifiers(derive_seed(seed, "classifiers")),
            regressors: default_regressors(derive_seed(seed, "regressors")),
            ..Default::default()
        }
    }
}

/// Fails unless both tables have the same column names and kinds in order.
pub fn check_schema(real: &Table, synth: &Table) -> Result<()> {
    let a: Vec<(&str, ColumnKind)> = real.columns().iter().map(|c| (c.name(), c.kind())).collect();
    let b: Vec<(&str, ColumnKind)> = synth.columns().iter().map(|c| (c.name(), c.kind())).collect();
    if a != b {
        let missing: Vec<&str> = a.iter().filter(|x| !b.contains(x)).map(|x| x.0).collect();
        let extra: Vec<&str> = b.iter().filter(|x| !a.contains(x)).map(|x| x.0).collect();
        return Err(Error::Evaluation(format!(
            "real and synthetic schemas differ (real-only: {missing:?}, synthetic-only: {extra:?})"
        )));
    }
    Ok(())
}

// ---- diversity ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub pc1: f64,
    pub pc2: f64,
    /// `origin→destination` when the table has route columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub column: String,
    pub class: String,
    pub real_pct: f64,
    pub synthetic_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteCoverage {
    pub real_routes: usize,
    pub covered: usize,
    pub missing: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversitySection {
    pub explained_variance: [f64; 2],
    pub real_points: Vec<PcaPoint>,
    pub synthetic_points: Vec<PcaPoint>,
    pub class_balance: Vec<BalanceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route_coverage: Option<RouteCoverage>,
}

impl DiversitySection {
    /// Largest |real % − synthetic %| over the classes of `column`.
    pub fn balance_gap(&self, column: &str) -> Option<f64> {
        self.class_balance
            .iter()
            .filter(|r| r.column == column)
            .map(|r| (r.real_pct - r.synthetic_pct).abs())
            .reduce(f64::max)
    }
}

fn routes(t: &Table) -> Option<Vec<Option<String>>> {
    let o = t.column(ORIGIN_ID).ok()?;
    let d = t.column(DEST_ID).ok()?;
    Some((0..t.n_rows()).map(|r| Some(format!("{}→{}", o.text(r)?, d.text(r)?))).collect())
}

fn class_shares(col: &Column) -> (Vec<String>, Vec<f64>) {
    let labels: Vec<String> = col.labels().into_iter().flatten().collect();
    let mut classes: Vec<String> = labels.clone();
    classes.sort();
    classes.dedup();
    let n = labels.len().max(1) as f64;
    let shares = classes
        .iter()
        .map(|c| 100.0 * labels.iter().filter(|l| *l == c).count() as f64 / n)
        .collect();
    (classes, shares)
}

pub fn diversity_stage(real: &Table, synth: &Table, config: &EvalConfig) -> Result<DiversitySection> {
    check_schema(real, synth)?;
    let names = real.names();
    let encoder = FeatureEncoder::fit(real, &names)?;
    let xr = encoder.transform(real)?;
    let xs = encoder.transform(synth)?;
    let pca = PcaModel::fit(&xr)?;
    let points = |t: &Table, x| -> Result<Vec<PcaPoint>> {
        let p = pca.project(x)?;
        let r = routes(t);
        Ok((0..t.n_rows())
            .map(|i| PcaPoint {
                pc1: p[[i, 0]],
                pc2: p[[i, 1]],
                route: r.as_ref().and_then(|r| r[i].clone()),
            })
            .collect())
    };
    let real_points = points(real, &xr)?;
    let synthetic_points = points(synth, &xs)?;

    let mut class_balance = Vec::new();
    for name in &config.label_columns {
        let (Ok(rc), Ok(sc)) = (real.column(name), synth.column(name)) else {
            continue;
        };
        let (rcls, rsh) = class_shares(rc);
        let (scls, ssh) = class_shares(sc);
        let all: BTreeSet<&String> = rcls.iter().chain(&scls).collect();
        for c in all {
            let get = |cls: &[String], sh: &[f64]| cls.iter().position(|x| x == c).map_or(0.0, |i| sh[i]);
            class_balance.push(BalanceRow {
                column: name.clone(),
                class: c.clone(),
                real_pct: get(&rcls, &rsh),
                synthetic_pct: get(&scls, &ssh),
            });
        }
    }

    let route_coverage = match (routes(real), routes(synth)) {
        (Some(r), Some(s)) => {
            let real_set: BTreeSet<String> = r.into_iter().flatten().collect();
            let synth_set: BTreeSet<String> = s.into_iter().flatten().collect();
            let missing: Vec<String> = real_set.difference(&synth_set).cloned().collect();
            Some(RouteCoverage {
                real_routes: real_set.len(),
                covered: real_set.len() - missing.len(),
                missing,
            })
        }
        _ => None,
    };
    Ok(DiversitySection {
        explained_variance: pca.explained_variance_shares(),
        real_points,
        synthetic_points,
        class_balance,
        route_coverage,
    })
}

// ---- statistical ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub column: String,
    pub metric: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub left: String,
    pub right: String,
    pub metric: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticalSection {
    pub columns: Vec<ColumnScore>,
    pub pairs: Vec<PairScore>,
    /// Pairs left out because a column is constant, with the reason.
    pub skipped_pairs: Vec<(String, String, String)>,
    pub marginal: f64,
    pub bivariate: f64,
    pub average: f64,
}

fn is_constant(col: &Column) -> bool {
    if col.kind().is_continuous() {
        let v = col.present_f64();
        v.windows(2).all(|w| w[0] == w[1])
    } else {
        let l = col.labels();
        l.windows(2).all(|w| w[0] == w[1])
    }
}

pub(crate) fn mean_of(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for x in v {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn statistical_stage(real: &Table, synth: &Table) -> Result<StatisticalSection> {
    check_schema(real, synth)?;
    let mut columns = Vec::with_capacity(real.n_cols());
    for (rc, sc) in real.columns().iter().zip(synth.columns()) {
        let (metric, score) = if rc.kind().is_continuous() {
            ("ks", ks_score(&present_values(rc), &present_values(sc)))
        } else {
            ("tvd", tvd_score(&category_keys(rc), &category_keys(sc)))
        };
        columns.push(ColumnScore {
            column: rc.name().to_string(),
            metric: metric.to_string(),
            score,
        });
    }

    let cols_r = real.columns();
    let cols_s = synth.columns();
    let edges: Vec<Vec<f64>> = cols_r
        .iter()
        .map(|c| if c.kind().is_continuous() { decile_edges(c) } else { Vec::new() })
        .collect();
    let keys = |c: &Column, j: usize| -> Vec<Key> {
        if c.kind().is_continuous() {
            decile_keys(c, &edges[j])
        } else {
            category_keys(c)
        }
    };
    let key_r: Vec<Vec<Key>> = cols_r.iter().enumerate().map(|(j, c)| keys(c, j)).collect();
    let key_s: Vec<Vec<Key>> = cols_s.iter().enumerate().map(|(j, c)| keys(c, j)).collect();
    let constant: Vec<bool> = cols_r.iter().map(is_constant).collect();

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..cols_r.len() {
        for j in (i + 1)..cols_r.len() {
            let (li, lj) = (cols_r[i].name().to_string(), cols_r[j].name().to_string());
            if constant[i] || constant[j] {
                let which = if constant[i] { &li } else { &lj };
                skipped.push((li.clone(), lj.clone(), format!("`{which}` is constant in the real table")));
                continue;
            }
            if cols_r[i].kind().is_continuous() && cols_r[j].kind().is_continuous() {
                let r = complete_pairs(&cols_r[i], &cols_r[j]);
                let s = complete_pairs(&cols_s[i], &cols_s[j]);
                match correlation_similarity((&r.0, &r.1), (&s.0, &s.1)) {
                    Some(score) => pairs.push(PairScore {
                        left: li,
                        right: lj,
                        metric: "correlation".to_string(),
                        score,
                    }),
                    None => skipped.push((li, lj, "correlation undefined (zero variance)".to_string())),
                }
            } else {
                let zip = |a: &[Key], b: &[Key]| -> Vec<(Key, Key)> {
                    a.iter().cloned().zip(b.iter().cloned()).collect()
                };
                let score = contingency_similarity(&zip(&key_r[i], &key_r[j]), &zip(&key_s[i], &key_s[j]));
                pairs.push(PairScore {
                    left: li,
                    right: lj,
                    metric: "contingency".to_string(),
                    score,
                });
            }
        }
    }
    if !skipped.is_empty() {
        info!("statistical stage: skipped {} column pairs (see report)", skipped.len());
    }
    for (a, b, why) in &skipped {
        log::debug!("skipped pair ({a}, {b}): {why}");
    }
    let marginal = mean_of(columns.iter().map(|c| c.score));
    let bivariate = mean_of(pairs.iter().map(|p| p.score));
    let average = if bivariate.is_nan() { marginal } else { (marginal + bivariate) / 2.0 };
    Ok(StatisticalSection {
        columns,
        pairs,
        skipped_pairs: skipped,
        marginal,
        bivariate,
        average,
    })
}

// ---- fidelity ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerOutcome<M> {
    pub learner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<M>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelitySection {
    pub rows_per_class: usize,
    pub classifiers: Vec<LearnerOutcome<crate::learners::ClassificationMetrics>>,
    pub average_accuracy: f64,
    pub average_f1: f64,
}

pub fn fidelity_stage(real: &Table, synth: &Table, config: &EvalConfig) -> Result<FidelitySection> {
    check_schema(real, synth)?;
    if real.n_rows() == 0 || synth.n_rows() == 0 {
        return Err(Error::Evaluation("fidelity needs non-empty real and synthetic tables".to_string()));
    }
    let n = real.n_rows().min(synth.n_rows());
    let r = subsample(real, n, derive_seed(config.seed, "fidelity.real"));
    let s = subsample(synth, n, derive_seed(config.seed, "fidelity.synthetic"));
    let both = Table::concat(&[&r, &s])?;
    let names = both.names();
    let encoder = FeatureEncoder::fit(&both, &names)?;
    let x = encoder.transform(&both)?;
    let y: Vec<f64> = (0..2 * n).map(|i| if i < n { 0.0 } else { 1.0 }).collect();
    let data = Dataset::new(x, y, encoder.names())?;
    let mut outcomes = Vec::new();
    let fold_seed = derive_seed(config.seed, "fidelity.folds");
    for spec in &config.classifiers {
        let outcome = match cross_validate_classifier(spec, &data, config.folds, fold_seed) {
            Ok(m) => LearnerOutcome {
                learner: spec.name.to_string(),
                metrics: Some(m),
                error: None,
            },
            Err(e) => {
                warn!("fidelity: {} failed and is excluded from averages: {e}", spec.name);
                LearnerOutcome {
                    learner: spec.name.to_string(),
                    metrics: None,
                    error: Some(e.to_string()),
                }
            }
        };
        outcomes.push(outcome);
    }
    let ok: Vec<_> = outcomes.iter().filter_map(|o| o.metrics).collect();
    if ok.is_empty() {
        return Err(Error::Evaluation("every fidelity classifier failed".to_string()));
    }
    Ok(FidelitySection {
        rows_per_class: n,
        average_accuracy: mean_of(ok.iter().map(|m| m.accuracy)),
        average_f1: mean_of(ok.iter().map(|m| m.f1)),
        classifiers: outcomes,
    })
}

// ---- utility ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub learner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trtr: Option<RegressionMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tstr: Option<RegressionMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySection {
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub synthetic_rows: usize,
    pub features: Vec<String>,
    pub target: String,
    pub regressors: Vec<UtilityRow>,
    /// Means over regressors that succeeded in both settings.
    pub trtr: RegressionMetrics,
    pub tstr: RegressionMetrics,
    pub notices: Vec<String>,
}

fn with_target(t: &Table, target: &str) -> Result<Table> {
    let col = t
        .column(target)
        .map_err(|_| Error::Evaluation(format!("utility target `{target}` is missing")))?;
    let keep: Vec<bool> = (0..t.n_rows()).map(|r| col.as_f64(r).is_some()).collect();
    Ok(t.filter_rows(&keep))
}

/// Seeded 80/20-style split of the rows with a present target into
/// (train, holdout).
pub fn split_holdout(real: &Table, config: &EvalConfig) -> Result<(Table, Table)> {
    let usable = with_target(real, &config.utility_target)?;
    let n = usable.n_rows();
    let n_hold = ((n as f64) * config.holdout_fraction).round() as usize;
    if n_hold == 0 || n_hold >= n {
        return Err(Error::Evaluation(format!("cannot hold out {n_hold} of {n} rows")));
    }
    let mut rng = rng_stream(derive_seed(config.seed, "utility.split"), 0);
    let mut hold = rand::seq::index::sample(&mut rng, n, n_hold).into_vec();
    hold.sort_unstable();
    let mut is_hold = vec![false; n];
    hold.iter().for_each(|&i| is_hold[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !is_hold[i]).collect();
    Ok((usable.take_rows(&train), usable.take_rows(&hold)))
}

fn regression_data(t: &Table, enc: &FeatureEncoder, target: &str) -> Result<Dataset> {
    let x = enc.transform(t)?;
    let y: Vec<f64> = t.column(target)?.numbers().into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    Dataset::new(x, y, enc.names())
}

pub fn utility_stage(real: &Table, synth: &Table, config: &EvalConfig) -> Result<UtilitySection> {
    for f in config.utility_features.iter().chain([&config.utility_target]) {
        for (t, which) in [(real, "real"), (synth, "synthetic")] {
            if !t.has_column(f) {
                return Err(Error::Evaluation(format!("utility column `{f}` is missing from the {which} table")));
            }
        }
    }
    let (train, hold) = split_holdout(real, config)?;
    let synth = with_target(synth, &config.utility_target)?;
    let mut notices = Vec::new();
    if hold.n_rows() < 100 {
        let msg = format!("holdout has only {} rows; utility metrics are noisy", hold.n_rows());
        warn!("{msg}");
        notices.push(msg);
    }
    let enc = FeatureEncoder::fit(&train, &config.utility_features)?;
    let target = &config.utility_target;
    let d_train = regression_data(&train, &enc, target)?;
    let d_hold = regression_data(&hold, &enc, target)?;
    let d_synth = regression_data(&synth, &enc, target)?;
    let run = |spec: &LearnerSpec, data: &Dataset| -> Result<RegressionMetrics> {
        let m = train_regressor(spec, data)?;
        regression_metrics(&m.predict(&d_hold.x), &d_hold.y)
    };
    let mut rows = Vec::new();
    for spec in &config.regressors {
        let trtr = run(spec, &d_train);
        let tstr = run(spec, &d_synth);
        let error = match (&trtr, &tstr) {
            (Err(e), _) => Some(format!("TRTR: {e}")),
            (_, Err(e)) => Some(format!("TSTR: {e}")),
            _ => None,
        };
        if let Some(e) = &error {
            let msg = format!("{} excluded from averages: {e}", spec.name);
            warn!("utility: {msg}");
            notices.push(msg);
        }
        rows.push(UtilityRow {
            learner: spec.name.to_string(),
            trtr: trtr.ok(),
            tstr: tstr.ok(),
            error,
        });
    }
    let both: Vec<(RegressionMetrics, RegressionMetrics)> =
        rows.iter().filter_map(|r| Some((r.trtr?, r.tstr?))).collect();
    if both.is_empty() {
        return Err(Error::Evaluation("no regressor succeeded in both TRTR and TSTR".to_string()));
    }
    let avg = |f: &dyn Fn(&(RegressionMetrics, RegressionMetrics)) -> RegressionMetrics| RegressionMetrics {
        mae: mean_of(both.iter().map(|p| f(p).mae)),
        rmse: mean_of(both.iter().map(|p| f(p).rmse)),
        r2: mean_of(both.iter().map(|p| f(p).r2)),
    };
    Ok(UtilitySection {
        train_rows: train.n_rows(),
        holdout_rows: hold.n_rows(),
        synthetic_rows: synth.n_rows(),
        features: config.utility_features.clone(),
        target: target.clone(),
        trtr: avg(&|p| p.0),
        tstr: avg(&|p| p.1),
        regressors: rows,
        notices,
    })
}

/// Runs the configured stages and assembles the report.
pub fn evaluate(real: &Table, synth: &Table, config: &EvalConfig) -> Result<EvaluationReport> {
    check_schema(real, synth)?;
    let has = |s: Stage| config.stages.contains(&s);
    let diversity = if has(Stage::Diversity) {
        Some(diversity_stage(real, synth, config)?)
    } else {
        None
    };
    let statistical = if has(Stage::Statistical) {
        Some(statistical_stage(real, synth)?)
    } else {
        None
    };
    let fidelity = if has(Stage::Fidelity) {
        Some(fidelity_stage(real, synth, config)?)
    } else {
        None
    };
    let utility = if has(Stage::Utility) {
        Some(utility_stage(real, synth, config)?)
    } else {
        None
    };
    let provenance = Provenance {
        seed: config.seed,
        real_rows: real.n_rows(),
        synthetic_rows: synth.n_rows(),
        real_fingerprint: real.fingerprint(),
        synthetic_fingerprint: synth.fingerprint(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
    };
    assemble_report(diversity, statistical, fidelity, utility, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerName;
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Table {
        let mut rng = rng_stream(seed, 0);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.gen_range(0.0..10.0);
            a.push(Some(x));
            b.push(Some(2.0 * x + rng.gen_range(-1.0..1.0)));
            c.push(Some(if x > 5.0 { "hi" } else { "lo" }));
        }
        Table::new(vec![
            Column::numeric("a", &a).unwrap(),
            Column::numeric("b", &b).unwrap(),
            Column::categorical("c", &c).unwrap(),
        ])
        .unwrap()
    }

    fn small_config() -> EvalConfig {
        EvalConfig {
            label_columns: vec!["c".into()],
            utility_features: vec!["a".into(), "c".into()],
            utility_target: "b".into(),
            classifiers: [LearnerName::DecisionTree, LearnerName::GaussianNb]
                .into_iter()
                .map(|n| LearnerSpec::new(n, 1))
                .collect(),
            regressors: [LearnerName::Ols, LearnerName::TreeReg, LearnerName::KnnReg]
                .into_iter()
                .map(|n| LearnerSpec::new(n, 1))
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn identical_tables_score_one() {
        let t = toy(300, 1);
        let s = statistical_stage(&t, &t).unwrap();
        assert_eq!((s.marginal, s.bivariate, s.average), (1.0, 1.0, 1.0));
        let d = diversity_stage(&t, &t, &small_config()).unwrap();
        assert_eq!(d.real_points, d.synthetic_points);
        assert_eq!(d.real_points.len(), 300);
        assert_eq!(d.balance_gap("c"), Some(0.0));
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let t = toy(50, 1);
        let u = t.without_columns(&["b"]);
        assert!(statistical_stage(&t, &u).is_err());
    }

    #[test]
    fn constant_column_pairs_skipped() {
        let t = toy(100, 2).with_column(Column::numeric("k", &[Some(1.0); 100]).unwrap()).unwrap();
        let s = statistical_stage(&t, &t).unwrap();
        assert_eq!(s.skipped_pairs.len(), 3);
        assert_eq!(s.pairs.len(), 3);
    }

    #[test]
    fn utility_same_data_gives_equal_metrics() {
        let real = toy(600, 3);
        let cfg = small_config();
        let (train, _) = split_holdout(&real, &cfg).unwrap();
        let u = utility_stage(&real, &train, &cfg).unwrap();
        assert_eq!(u.trtr, u.tstr);
        for r in &u.regressors {
            assert_eq!(r.trtr, r.tstr, "{}", r.learner);
        }
        let other = utility_stage(&real, &toy(400, 9), &cfg).unwrap();
        assert_eq!(other.trtr, u.trtr);
    }

    #[test]
    fn fidelity_separates_noise() {
        let real = toy(400, 4);
        let mut rng = rng_stream(5, 0);
        let noise = Table::new(vec![
            Column::numeric("a", &(0..400).map(|_| Some(rng.gen_range(0.0..10.0))).collect::<Vec<_>>()).unwrap(),
            Column::numeric("b", &(0..400).map(|_| Some(rng.gen_range(-1.0..21.0))).collect::<Vec<_>>()).unwrap(),
            Column::categorical("c", &(0..400).map(|i| Some(if i % 2 == 0 { "hi" } else { "lo" })).collect::<Vec<_>>())
                .unwrap(),
        ])
        .unwrap();
        let f = fidelity_stage(&real, &noise, &small_config()).unwrap();
        assert!(f.average_accuracy > 0.7, "{}", f.average_accuracy);
    }

    #[test]
    fn stage_lists_parse() {
        assert_eq!(
            Stage::parse_list("statistical, fidelity").unwrap(),
            vec![Stage::Statistical, Stage::Fidelity]
        );
        assert!(Stage::parse_list("bogus").is_err());
    }
}
