use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{mean_of, DiversitySection, EvalConfig, FidelitySection, StatisticalSection, UtilitySection};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub real_rows: usize,
    pub synthetic_rows: usize,
    pub real_fingerprint: String,
    pub synthetic_fingerprint: String,
    pub tool_version: String,
    pub config: EvalConfig,
}

/// Absent stages are `null`, never zero-filled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub diversity: Option<DiversitySection>,
    pub statistical: Option<StatisticalSection>,
    pub fidelity: Option<FidelitySection>,
    pub utility: Option<UtilitySection>,
    pub provenance: Provenance,
}

const AGGREGATE_TOLERANCE: f64 = 1e-12;

fn check_mean(what: &str, stored: f64, parts: impl IntoIterator<Item = f64>) -> Result<()> {
    let m = mean_of(parts);
    let ok = (m.is_nan() && stored.is_nan()) || (stored - m).abs() <= AGGREGATE_TOLERANCE;
    if !ok {
        return Err(Error::Evaluation(format!(
            "internal inconsistency: {what} is {stored} but its parts average {m}"
        )));
    }
    Ok(())
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Evaluation(format!("{what} = {v} lies outside [0, 1]")));
    }
    Ok(())
}

/// Merges stage sections, re-deriving every aggregate from its parts.
pub fn assemble_report(
    diversity: Option<DiversitySection>,
    statistical: Option<StatisticalSection>,
    fidelity: Option<FidelitySection>,
    utility: Option<UtilitySection>,
    provenance: Provenance,
) -> Result<EvaluationReport> {
    if diversity.is_none() && statistical.is_none() && fidelity.is_none() && utility.is_none() {
        return Err(Error::Evaluation("no evaluation stage was run".to_string()));
    }
    if let Some(s) = &statistical {
        for c in &s.columns {
            check_unit(&format!("score of `{}`", c.column), c.score)?;
        }
        for p in &s.pairs {
            check_unit(&format!("score of ({}, {})", p.left, p.right), p.score)?;
        }
        check_mean("marginal aggregate", s.marginal, s.columns.iter().map(|c| c.score))?;
        check_mean("bivariate aggregate", s.bivariate, s.pairs.iter().map(|p| p.score))?;
        if !s.bivariate.is_nan() {
            check_mean("statistical average", s.average, [s.marginal, s.bivariate])?;
        }
    }
    if let Some(f) = &fidelity {
        let ok: Vec<_> = f.classifiers.iter().filter_map(|c| c.metrics).collect();
        for m in &ok {
            check_unit("classifier accuracy", m.accuracy)?;
            check_unit("classifier F1", m.f1)?;
        }
        check_mean("fidelity accuracy", f.average_accuracy, ok.iter().map(|m| m.accuracy))?;
        check_mean("fidelity F1", f.average_f1, ok.iter().map(|m| m.f1))?;
    }
    if let Some(u) = &utility {
        let pairs: Vec<_> = u.regressors.iter().filter_map(|r| Some((r.trtr?, r.tstr?))).collect();
        for (name, avg, pick) in [
            ("TRTR", u.trtr, (|p: &(_, _)| p.0) as fn(&(_, _)) -> crate::learners::RegressionMetrics),
            ("TSTR", u.tstr, |p| p.1),
        ] {
            check_mean(&format!("{name} MAE"), avg.mae, pairs.iter().map(|p| pick(p).mae))?;
            check_mean(&format!("{name} RMSE"), avg.rmse, pairs.iter().map(|p| pick(p).rmse))?;
            check_mean(&format!("{name} R²"), avg.r2, pairs.iter().map(|p| pick(p).r2))?;
            if avg.mae < 0.0 || avg.rmse < 0.0 || avg.r2 > 1.0 {
                return Err(Error::Evaluation(format!("{name} metrics out of range")));
            }
        }
    }
    Ok(EvaluationReport {
        diversity,
        statistical,
        fidelity,
        utility,
        provenance,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct PcaRow<'a> {
    source: &'a str,
    pc1: f64,
    pc2: f64,
    route: &'a str,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    left: &'a str,
    right: &'a str,
    metric: &'a str,
    score: f64,
}

/// Writes plot-ready CSVs for the stages present: `pca_coordinates.csv`,
/// `class_balance.csv`, `column_scores.csv` and `pair_scores.csv`.
pub fn write_plot_data(report: &EvaluationReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if let Some(d) = &report.diversity {
        let p = dir.join("pca_coordinates.csv");
        let rows = [("real", &d.real_points), ("synthetic", &d.synthetic_points)]
            .into_iter()
            .flat_map(|(source, pts)| {
                pts.iter().map(move |pt| PcaRow {
                    source,
                    pc1: pt.pc1,
                    pc2: pt.pc2,
                    route: pt.route.as_deref().unwrap_or(""),
                })
            });
        write_rows(&p, rows)?;
        written.push(p);
        let p = dir.join("class_balance.csv");
        write_rows(&p, &d.class_balance)?;
        written.push(p);
    }
    if let Some(s) = &report.statistical {
        let p = dir.join("column_scores.csv");
        write_rows(&p, &s.columns)?;
        written.push(p);
        let p = dir.join("pair_scores.csv");
        write_rows(
            &p,
            s.pairs.iter().map(|x| ScoreRow {
                left: &x.left,
                right: &x.right,
                metric: &x.metric,
                score: x.score,
            }),
        )?;
        written.push(p);
    }
    Ok(written)
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

/// Markdown summary with a two-column table per stage.
pub fn render_summary(report: &EvaluationReport) -> String {
    let mut s = String::from("# Evaluation summary\n\n");
    let p = &report.provenance;
    let _ = writeln!(
        s,
        "Real rows: {}, synthetic rows: {}, seed: {}\n",
        p.real_rows, p.synthetic_rows, p.seed
    );
    if let Some(d) = &report.diversity {
        s.push_str("## Diversity\n\n| Class | Real / Synthetic |\n|---|---|\n");
        for r in &d.class_balance {
            let _ = writeln!(s, "| {} = {} | {:.2}% / {:.2}% |", r.column, r.class, r.real_pct, r.synthetic_pct);
        }
        if let Some(c) = &d.route_coverage {
            let _ = writeln!(s, "| Routes covered | {} / {} |", c.covered, c.real_routes);
        }
        let _ = writeln!(
            s,
            "| PCA explained variance | {} / {} |\n",
            pct(d.explained_variance[0]),
            pct(d.explained_variance[1])
        );
    }
    if let Some(st) = &report.statistical {
        s.push_str("## Statistical similarity\n\n| Metric | Score |\n|---|---|\n");
        let _ = writeln!(s, "| Marginal | {} |", pct(st.marginal));
        let _ = writeln!(s, "| Bivariate | {} |", pct(st.bivariate));
        let _ = writeln!(s, "| Average | {} |\n", pct(st.average));
    }
    if let Some(f) = &report.fidelity {
        s.push_str("## Fidelity\n\n| Metric | Score |\n|---|---|\n");
        let _ = writeln!(s, "| Accuracy | {} |", pct(f.average_accuracy));
        let _ = writeln!(s, "| F1 | {} |\n", pct(f.average_f1));
        s.push_str("| Classifier | Accuracy / F1 |\n|---|---|\n");
        for c in &f.classifiers {
            match (&c.metrics, &c.error) {
                (Some(m), _) => {
                    let _ = writeln!(s, "| {} | {} / {} |", c.learner, pct(m.accuracy), pct(m.f1));
                }
                (None, Some(e)) => {
                    let _ = writeln!(s, "| {} | failed: {} |", c.learner, e.replace('|', "/"));
                }
                _ => {}
            }
        }
        s.push('\n');
    }
    if let Some(u) = &report.utility {
        s.push_str("## Utility\n\n| Metric | TRTR / TSTR |\n|---|---|\n");
        let _ = writeln!(s, "| MAE | {:.2} / {:.2} |", u.trtr.mae, u.tstr.mae);
        let _ = writeln!(s, "| RMSE | {:.2} / {:.2} |", u.trtr.rmse, u.tstr.rmse);
        let _ = writeln!(s, "| R² | {:.2} / {:.2} |\n", u.trtr.r2, u.tstr.r2);
        for n in &u.notices {
            let _ = writeln!(s, "- {n}");
        }
        if !u.notices.is_empty() {
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{ColumnScore, StatisticalSection};

    fn prov() -> Provenance {
        Provenance {
            seed: 1,
            real_rows: 1,
            synthetic_rows: 1,
            real_fingerprint: String::new(),
            synthetic_fingerprint: String::new(),
            tool_version: "0".into(),
            config: EvalConfig::default(),
        }
    }

    fn stat(marginal: f64) -> StatisticalSection {
        StatisticalSection {
            columns: vec![
                ColumnScore {
                    column: "a".into(),
                    metric: "ks".into(),
                    score: 0.5,
                },
                ColumnScore {
                    column: "b".into(),
                    metric: "ks".into(),
                    score: 1.0,
                },
            ],
            pairs: vec![],
            skipped_pairs: vec![],
            marginal,
            bivariate: f64::NAN,
            average: marginal,
        }
    }

    #[test]
    fn statistical_only_report() {
        let r = assemble_report(None, Some(stat(0.75)), None, None, prov()).unwrap();
        assert!(r.diversity.is_none() && r.fidelity.is_none() && r.utility.is_none());
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(json["fidelity"].is_null());
        assert!(render_summary(&r).contains("| Marginal | 75.00% |"));
    }

    #[test]
    fn aggregate_mismatch_is_fatal() {
        assert!(assemble_report(None, Some(stat(0.7)), None, None, prov()).is_err());
        assert!(assemble_report(None, None, None, None, prov()).is_err());
    }
}
