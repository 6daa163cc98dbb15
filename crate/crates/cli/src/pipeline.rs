//! ingest → fit → sample → reconstruct → evaluate under one master seed.
//!
//! Stage seeds are `derive_seed(master, "<stage>")` for `mock`, `subsample`,
//! `fit`, `sample` and `evaluate`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flightsynth::copula::subsample;
use flightsynth::flights::{build_frame, CleaningReport, FrameVariant, IngestReport};
use flightsynth::numkit::derive_seed;
use flightsynth::quality::EvaluationReport;
use log::info;
use serde::{Deserialize, Serialize};

use crate::commands::{self, frame_file, FitArgs, IngestArgs, QualityGates, FLIGHTS_FILE};
use crate::config::{sha256_file, write_json, ExperimentConfig, Stamp, TOOL_VERSION};
use crate::mock;

pub const MANIFEST_FILE: &str = "manifest.json";
const TRAIN_FILE: &str = "train_flights.csv";
const MODEL_FILE: &str = "model.json";
const SAMPLED_FILE: &str = "sampled.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub error: String,
}

/// Written after every run, including failed ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub completed_stages: Vec<String>,
    pub failed: Option<StageFailure>,
    pub notes: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub ingest: Option<IngestReport>,
    pub cleaning: Option<CleaningReport>,
    pub report: Option<EvaluationReport>,
    /// Training rows (all 30 features) the evaluation compares against.
    pub train_rows: usize,
    pub sampled_rows: usize,
    pub gate_failures: Vec<String>,
}

struct Run<'a> {
    out: &'a Path,
    manifest: Manifest,
    files: Vec<PathBuf>,
}

impl Run<'_> {
    fn done(&mut self, stage: &str, files: Vec<PathBuf>) {
        info!("stage {stage} complete");
        self.manifest.completed_stages.push(stage.to_string());
        self.files.extend(files);
    }

    fn finish(mut self) -> Result<Manifest> {
        let mut artifacts = Vec::new();
        self.files.sort();
        self.files.dedup();
        for f in &self.files {
            let rel = f.strip_prefix(self.out).unwrap_or(f);
            artifacts.push(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(f)?,
                bytes: std::fs::metadata(f).with_context(|| format!("stat {}", f.display()))?.len(),
            });
        }
        self.manifest.artifacts = artifacts;
        write_json(&self.out.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Runs every stage in order. On failure the manifest still lists the
/// completed stages and the error is returned.
pub fn run_pipeline(config: &ExperimentConfig, out: &Path, gates: &QualityGates) -> Result<PipelineOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let seed = config.seed;
    let mut stored = config.clone();
    stored.out = None;
    let mut run = Run {
        out,
        manifest: Manifest {
            tool_version: TOOL_VERSION.to_string(),
            experiment: config.experiment.clone(),
            config_hash: config.hash(),
            seed,
            config: stored,
            completed_stages: Vec::new(),
            failed: None,
            notes: Vec::new(),
            artifacts: Vec::new(),
        },
        files: Vec::new(),
    };
    let mut outcome = PipelineOutcome {
        manifest: run.manifest.clone(),
        ingest: None,
        cleaning: None,
        report: None,
        train_rows: 0,
        sampled_rows: 0,
        gate_failures: Vec::new(),
    };
    let result = stages(config, out, gates, &mut run, &mut outcome);
    if let Err(e) = &result {
        let stage = ["mock", "ingest", "fit", "sample", "reconstruct", "evaluate"]
            .into_iter()
            .find(|s| !run.manifest.completed_stages.iter().any(|c| c == s) && applies(config, s))
            .unwrap_or("unknown");
        run.manifest.failed = Some(StageFailure {
            stage: stage.to_string(),
            error: format!("{e:#}"),
        });
    }
    outcome.manifest = run.finish()?;
    result.map(|_| outcome)
}

fn applies(config: &ExperimentConfig, stage: &str) -> bool {
    stage != "mock" || config.data.is_none()
}

fn stages(
    config: &ExperimentConfig,
    out: &Path,
    gates: &QualityGates,
    run: &mut Run,
    outcome: &mut PipelineOutcome,
) -> Result<()> {
    let seed = config.seed;
    let (raw, airports) = match &config.data {
        Some(data) => {
            let airports = config.airports.clone().unwrap_or_else(|| {
                data.parent()
                    .unwrap_or(Path::new("."))
                    .join(mock::AIRPORTS_FILE)
            });
            (data.clone(), airports)
        }
        None => {
            let dir = out.join("input");
            let (bts, airports) = mock::write_mock(&dir, config.mock_rows, derive_seed(seed, "mock"))?;
            run.manifest
                .notes
                .push(format!("input is {} generated mock flights", config.mock_rows));
            run.done("mock", vec![bts.clone(), airports.clone()]);
            (bts, airports)
        }
    };

    let ingest_dir = out.join("ingest");
    let ing = commands::ingest(&IngestArgs {
        raw,
        airports: airports.clone(),
        mapping: config.mapping.clone(),
        frames: vec![config.variant],
        out: ingest_dir.clone(),
    })?;
    outcome.ingest = Some(ing.report.clone());
    run.done("ingest", ing.files);

    let fit_dir = out.join("fit");
    std::fs::create_dir_all(&fit_dir).with_context(|| format!("creating {}", fit_dir.display()))?;
    let mut train = ing.flights;
    if let Some(cap) = config.row_cap.filter(|&c| train.n_rows() > c) {
        run.manifest.notes.push(format!(
            "training input subsampled from {} to {cap} rows (seed derived from master seed, label `subsample`)",
            train.n_rows()
        ));
        train = subsample(&train, cap, derive_seed(seed, "subsample"));
    }
    outcome.train_rows = train.n_rows();
    let stamp = Stamp::new("pipeline", &run.manifest.config_hash, seed);
    let mut fit_files = commands::save_table(&train, &fit_dir.join(TRAIN_FILE), &stamp)?;
    let frame = build_frame(&train, config.variant)?;
    fit_files.extend(commands::save_table(&frame, &fit_dir.join(frame_file(config.variant)), &stamp)?);
    let fitted = commands::fit_frame(
        &frame,
        &FitArgs {
            frame: fit_dir.join(frame_file(config.variant)),
            variant: Some(config.variant),
            generator: config.generator,
            tvae: config.tvae.clone(),
            row_cap: config.row_cap,
            seed: derive_seed(seed, "fit"),
            out: fit_dir.join(MODEL_FILE),
            loss_trace: (config.generator == crate::config::GeneratorKind::Tvae)
                .then(|| fit_dir.join("loss_trace.csv")),
        },
    )?;
    fit_files.extend(fitted.files);
    run.done("fit", fit_files);

    let n = config.sample_count.unwrap_or(train.n_rows());
    let sample_dir = out.join("sample");
    let sampled = commands::sample_model(&fitted.model, n, derive_seed(seed, "sample"), &sample_dir.join(SAMPLED_FILE))?;
    outcome.sampled_rows = sampled.table.n_rows();
    run.done("sample", sampled.files);

    let airport_dir = commands::load_airports(&airports)?;
    let rec = commands::reconstruct_frame(
        &sampled.table,
        Some(config.variant),
        &airport_dir,
        &ing.routes,
        &config.filters,
        &out.join("reconstruct"),
    )?;
    outcome.cleaning = Some(rec.report.clone());
    run.done("reconstruct", rec.files);

    let cfg = commands::eval_config(
        &config.stages,
        derive_seed(seed, "evaluate"),
        config.classifiers.as_ref(),
        config.regressors.as_ref(),
    );
    let ev = commands::evaluate_tables(&train, &rec.cleaned, &cfg, gates, &out.join("evaluate"))?;
    outcome.gate_failures = ev.gate_failures;
    outcome.report = Some(ev.report);
    run.done("evaluate", ev.files);
    Ok(())
}

/// Where `flights.csv` of an ingest run lives.
pub fn flights_path(out: &Path) -> PathBuf {
    out.join("ingest").join(FLIGHTS_FILE)
}

/// Frame file written by the fit stage.
pub fn frame_path(out: &Path, variant: FrameVariant) -> PathBuf {
    out.join("fit").join(frame_file(variant))
}
