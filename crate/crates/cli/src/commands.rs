//! One function per subcommand. The pipeline calls the same functions.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flightsynth::copula::{subsample, CopulaConfig, FittedCopula};
use flightsynth::encode::DecodeReport;
use flightsynth::flights::{
    build_frame, build_route_directory, default_mapping, engineer_features, localize_and_convert, read_mapping,
    read_raw_flights, reconstruct as rebuild, reject_invalid, AirportDirectory, CleaningReport, FilterConfig,
    FrameVariant, IngestReport, RouteDirectory,
};
use flightsynth::learners::LearnerSpec;
use flightsynth::numkit::derive_seed;
use flightsynth::quality::{evaluate as run_evaluation, render_summary, write_plot_data, EvalConfig, EvaluationReport, Stage};
use flightsynth::table::{read_table, schema_path_for, write_table_with_schema, Table};
use flightsynth::tvae::{write_loss_trace_file, SampleOptions, TvaeSynthesizer};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_file, write_json, write_sidecar, GeneratorKind, Stamp, Stamped, TvaeParams, TOOL_VERSION};

/// A quality gate was not met; maps to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("quality gate failed: {0}")]
pub struct GateFailure(pub String);

pub const FLIGHTS_FILE: &str = "flights.csv";
pub const ROUTES_FILE: &str = "routes.csv";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const RECONSTRUCTED_FILE: &str = "reconstructed.csv";
pub const CLEANED_FILE: &str = "cleaned.csv";
pub const REJECTED_FILE: &str = "rejected.csv";
pub const CLEANING_REPORT_FILE: &str = "cleaning_report.json";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.md";

pub fn frame_file(variant: FrameVariant) -> String {
    format!("frame_{}.csv", variant.name())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Reads a CSV and its `.schema.json` sidecar.
pub fn load_table(path: &Path) -> Result<Table> {
    if !path.exists() {
        bail!("input table {} does not exist", path.display());
    }
    read_table(path, schema_path_for(path)).with_context(|| format!("reading {}", path.display()))
}

/// Writes data, schema and provenance sidecars; returns all three paths.
pub fn save_table(table: &Table, path: &Path, stamp: &Stamp) -> Result<Vec<PathBuf>> {
    let (csv, schema) = write_table_with_schema(table, path)?;
    let side = write_sidecar(&csv, stamp)?;
    Ok(vec![csv, schema, side])
}

pub fn load_airports(path: &Path) -> Result<AirportDirectory> {
    if !path.exists() {
        bail!("airport directory {} does not exist", path.display());
    }
    AirportDirectory::read_csv(path).with_context(|| format!("reading airport directory {}", path.display()))
}

pub fn load_routes(path: &Path) -> Result<RouteDirectory> {
    if !path.exists() {
        bail!("route directory {} does not exist", path.display());
    }
    RouteDirectory::read_csv(path).with_context(|| format!("reading route directory {}", path.display()))
}

/// The frame variant whose column list matches `table` exactly.
pub fn infer_variant(table: &Table) -> Result<FrameVariant> {
    let names = table.names();
    FrameVariant::ALL
        .into_iter()
        .find(|v| v.columns() == names.as_slice())
        .ok_or_else(|| anyhow!("columns {names:?} match no frame variant"))
}

fn digest(path: &Path) -> Result<String> {
    sha256_file(path)
}

// ---- ingest ----

#[derive(Clone, Debug)]
pub struct IngestArgs {
    pub raw: PathBuf,
    pub airports: PathBuf,
    pub mapping: Option<PathBuf>,
    pub frames: Vec<FrameVariant>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct IngestHashed {
    raw: String,
    airports: String,
    mapping: Option<String>,
    frames: Vec<FrameVariant>,
}

pub struct IngestOutput {
    pub flights: Table,
    pub routes: RouteDirectory,
    pub report: IngestReport,
    pub files: Vec<PathBuf>,
}

pub fn ingest(args: &IngestArgs) -> Result<IngestOutput> {
    let airports = load_airports(&args.airports)?;
    if !args.raw.exists() {
        bail!("raw extract {} does not exist", args.raw.display());
    }
    let mapping = match &args.mapping {
        Some(p) => read_mapping(p)?,
        None => default_mapping(),
    };
    let hashed = IngestHashed {
        raw: digest(&args.raw)?,
        airports: digest(&args.airports)?,
        mapping: args.mapping.as_deref().map(digest).transpose()?,
        frames: args.frames.clone(),
    };
    let stamp = Stamp::new("ingest", &hashed, 0);
    let raw = read_raw_flights(&args.raw, &mapping)?;
    let utc = localize_and_convert(&raw, &airports)?;
    let (flights, report) = engineer_features(&utc, &airports)?;
    let routes = build_route_directory(&flights)?;
    info!(
        "ingested {} of {} rows, {} routes",
        report.output_rows,
        report.input_rows,
        routes.len()
    );

    create_dir(&args.out)?;
    let mut files = save_table(&flights, &args.out.join(FLIGHTS_FILE), &stamp)?;
    for &v in &args.frames {
        files.extend(save_table(&build_frame(&flights, v)?, &args.out.join(frame_file(v)), &stamp)?);
    }
    let rp = args.out.join(ROUTES_FILE);
    routes.write_csv(&rp)?;
    files.push(write_sidecar(&rp, &stamp)?);
    files.push(rp);
    let ip = args.out.join(INGEST_REPORT_FILE);
    write_json(
        &ip,
        &Stamped {
            stamp: stamp.clone(),
            body: &report,
        },
    )?;
    files.push(ip);
    Ok(IngestOutput {
        flights,
        routes,
        report,
        files,
    })
}

// ---- fit ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorModel {
    Gc(FittedCopula),
    Tvae(TvaeSynthesizer),
}

/// Saved generator with the frame it was trained on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub stamp: Stamp,
    pub generator: GeneratorKind,
    pub variant: FrameVariant,
    pub train_rows: usize,
    pub sample_options: SampleOptions,
    pub model: GeneratorModel,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            bail!("model file {} does not exist", path.display());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing model file {}", path.display()))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<(Table, DecodeReport)> {
        Ok(match &self.model {
            GeneratorModel::Gc(m) => m.sample(n, seed)?,
            GeneratorModel::Tvae(m) => m.sample(n, seed, self.sample_options)?,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitArgs {
    #[serde(skip)]
    pub frame: PathBuf,
    pub variant: Option<FrameVariant>,
    pub generator: GeneratorKind,
    pub tvae: TvaeParams,
    /// Subsample to this many rows first; the copula requires it.
    pub row_cap: Option<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub loss_trace: Option<PathBuf>,
}

pub struct FitOutput {
    pub model: ModelFile,
    /// Rows actually used for fitting, in input row order.
    pub train: Table,
    pub subsampled: bool,
    pub files: Vec<PathBuf>,
}

pub fn fit_frame(frame: &Table, args: &FitArgs) -> Result<FitOutput> {
    let variant = match args.variant {
        Some(v) => v,
        None => infer_variant(frame)?,
    };
    let frame = frame.select_columns(variant.columns())?;
    let cap = match (args.row_cap, args.generator) {
        (Some(c), _) => Some(c),
        (None, GeneratorKind::Gc) => Some(CopulaConfig::default().row_cap),
        (None, GeneratorKind::Tvae) => None,
    };
    let subsampled = cap.is_some_and(|c| frame.n_rows() > c);
    let train = match cap {
        Some(c) if subsampled => {
            info!("subsampling {} rows to {c}", frame.n_rows());
            subsample(&frame, c, derive_seed(args.seed, "subsample"))
        }
        _ => frame,
    };
    #[derive(Serialize)]
    struct Hashed<'a> {
        args: &'a FitArgs,
        frame: String,
    }
    let stamp = Stamp::new(
        "fit",
        &Hashed {
            args,
            frame: train.fingerprint(),
        },
        args.seed,
    );
    let fit_seed = derive_seed(args.seed, "fit");
    let mut files = Vec::new();
    let model = match args.generator {
        GeneratorKind::Gc => {
            let cfg = CopulaConfig {
                row_cap: cap.unwrap_or(train.n_rows()).max(train.n_rows()),
            };
            GeneratorModel::Gc(FittedCopula::fit(&train, &cfg, fit_seed)?)
        }
        GeneratorKind::Tvae => {
            let cfg = args.tvae.train_config(fit_seed);
            let m = TvaeSynthesizer::fit(&train, &args.tvae.architecture(), &cfg)?;
            if let Some(p) = &args.loss_trace {
                write_loss_trace_file(&m.trace, p)?;
                files.push(write_sidecar(p, &stamp)?);
                files.push(p.clone());
            }
            GeneratorModel::Tvae(m)
        }
    };
    let model = ModelFile {
        stamp,
        generator: args.generator,
        variant,
        train_rows: train.n_rows(),
        sample_options: args.tvae.sample_options(),
        model,
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let text = serde_json::to_string(&model)? + "\n";
    std::fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    files.push(args.out.clone());
    Ok(FitOutput {
        model,
        train,
        subsampled,
        files,
    })
}

pub fn fit(args: &FitArgs) -> Result<FitOutput> {
    fit_frame(&load_table(&args.frame)?, args)
}

// ---- sample ----

#[derive(Clone, Debug)]
pub struct SampleArgs {
    pub model: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub struct SampleOutput {
    pub table: Table,
    pub variant: FrameVariant,
    pub decode: DecodeReport,
    pub files: Vec<PathBuf>,
}

pub fn sample_model(model: &ModelFile, n: usize, seed: u64, out: &Path) -> Result<SampleOutput> {
    if n == 0 {
        bail!("sample count must be positive");
    }
    #[derive(Serialize)]
    struct Hashed<'a> {
        model: &'a str,
        n: usize,
    }
    let stamp = Stamp::new(
        "sample",
        &Hashed {
            model: &model.stamp.config_hash,
            n,
        },
        seed,
    );
    let (table, decode) = model.sample(n, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut files = save_table(&table, out, &stamp)?;
    let dp = out.with_file_name(format!(
        "{}.decode_report.json",
        out.file_stem().unwrap_or_default().to_string_lossy()
    ));
    write_json(
        &dp,
        &Stamped {
            stamp,
            body: &decode,
        },
    )?;
    files.push(dp);
    Ok(SampleOutput {
        table,
        variant: model.variant,
        decode,
        files,
    })
}

pub fn sample(args: &SampleArgs) -> Result<SampleOutput> {
    sample_model(&ModelFile::load(&args.model)?, args.n, args.seed, &args.out)
}

// ---- reconstruct ----

#[derive(Clone, Debug)]
pub struct ReconstructArgs {
    pub frame: PathBuf,
    pub variant: Option<FrameVariant>,
    pub airports: PathBuf,
    pub routes: Option<PathBuf>,
    pub filters: FilterConfig,
    pub out: PathBuf,
}

pub struct ReconstructOutput {
    pub reconstructed: Table,
    pub cleaned: Table,
    pub rejected: Table,
    pub report: CleaningReport,
    pub files: Vec<PathBuf>,
}

pub fn reconstruct_frame(
    frame: &Table,
    variant: Option<FrameVariant>,
    airports: &AirportDirectory,
    routes: &RouteDirectory,
    filters: &FilterConfig,
    out: &Path,
) -> Result<ReconstructOutput> {
    let variant = match variant {
        Some(v) => v,
        None => infer_variant(frame)?,
    };
    #[derive(Serialize)]
    struct Hashed<'a> {
        frame: String,
        variant: FrameVariant,
        routes: Vec<(&'a str, &'a str, f64)>,
        filters: &'a FilterConfig,
    }
    let stamp = Stamp::new(
        "reconstruct",
        &Hashed {
            frame: frame.fingerprint(),
            variant,
            routes: routes.iter().collect(),
            filters,
        },
        0,
    );
    let reconstructed = rebuild(frame, variant, airports, routes)?;
    let (cleaned, rejected, report) = reject_invalid(&reconstructed, routes, filters)?;
    info!(
        "cleaning kept {} of {} rows ({} off-route)",
        report.output_rows, report.input_rows, report.route_rejected
    );
    create_dir(out)?;
    let mut files = save_table(&reconstructed, &out.join(RECONSTRUCTED_FILE), &stamp)?;
    files.extend(save_table(&cleaned, &out.join(CLEANED_FILE), &stamp)?);
    files.extend(save_table(&rejected, &out.join(REJECTED_FILE), &stamp)?);
    let rp = out.join(CLEANING_REPORT_FILE);
    write_json(
        &rp,
        &Stamped {
            stamp,
            body: &report,
        },
    )?;
    files.push(rp);
    Ok(ReconstructOutput {
        reconstructed,
        cleaned,
        rejected,
        report,
        files,
    })
}

pub fn reconstruct(args: &ReconstructArgs) -> Result<ReconstructOutput> {
    let routes = match &args.routes {
        Some(p) => load_routes(p)?,
        None => bail!("reconstruction needs a route directory (--routes)"),
    };
    let airports = load_airports(&args.airports)?;
    let frame = load_table(&args.frame)?;
    reconstruct_frame(&frame, args.variant, &airports, &routes, &args.filters, &args.out)
}

// ---- evaluate ----

/// Optional thresholds; any miss makes the command exit with code 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityGates {
    pub min_statistical: Option<f64>,
    pub max_fidelity_accuracy: Option<f64>,
    /// Largest allowed delay-label class-balance gap, in percentage points.
    pub max_balance_gap: Option<f64>,
}

impl QualityGates {
    pub fn check(&self, report: &EvaluationReport) -> Vec<String> {
        let mut failed = Vec::new();
        if let (Some(min), Some(s)) = (self.min_statistical, &report.statistical) {
            if !(s.average >= min) {
                failed.push(format!("statistical average {:.4} < {min}", s.average));
            }
        }
        if let (Some(max), Some(f)) = (self.max_fidelity_accuracy, &report.fidelity) {
            if !(f.average_accuracy <= max) {
                failed.push(format!("fidelity accuracy {:.4} > {max}", f.average_accuracy));
            }
        }
        if let (Some(max), Some(d)) = (self.max_balance_gap, &report.diversity) {
            for col in &report.provenance.config.label_columns {
                if let Some(gap) = d.balance_gap(col).filter(|g| !(*g <= max)) {
                    failed.push(format!("class-balance gap of `{col}` is {gap:.2} points > {max}"));
                }
            }
        }
        failed
    }
}

#[derive(Clone, Debug)]
pub struct EvaluateArgs {
    pub real: PathBuf,
    pub synthetic: PathBuf,
    pub stages: Vec<Stage>,
    pub seed: u64,
    pub classifiers: Option<Vec<LearnerSpec>>,
    pub regressors: Option<Vec<LearnerSpec>>,
    pub gates: QualityGates,
    pub out: PathBuf,
}

pub struct EvaluateOutput {
    pub report: EvaluationReport,
    pub gate_failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

pub fn eval_config(
    stages: &[Stage],
    seed: u64,
    classifiers: Option<&Vec<LearnerSpec>>,
    regressors: Option<&Vec<LearnerSpec>>,
) -> EvalConfig {
    let mut cfg = EvalConfig::with_seed(seed);
    cfg.stages = stages.to_vec();
    if let Some(c) = classifiers {
        cfg.classifiers = c.clone();
    }
    if let Some(r) = regressors {
        cfg.regressors = r.clone();
    }
    cfg
}

pub fn evaluate_tables(
    real: &Table,
    synth: &Table,
    cfg: &EvalConfig,
    gates: &QualityGates,
    out: &Path,
) -> Result<EvaluateOutput> {
    let mut report = run_evaluation(real, synth, cfg)?;
    report.provenance.tool_version = TOOL_VERSION.to_string();
    #[derive(Serialize)]
    struct Hashed<'a> {
        config: &'a EvalConfig,
        real: &'a str,
        synthetic: &'a str,
        gates: &'a QualityGates,
    }
    let stamp = Stamp::new(
        "evaluate",
        &Hashed {
            config: cfg,
            real: &report.provenance.real_fingerprint,
            synthetic: &report.provenance.synthetic_fingerprint,
            gates,
        },
        cfg.seed,
    );
    create_dir(out)?;
    let rp = out.join(REPORT_FILE);
    write_json(
        &rp,
        &Stamped {
            stamp: stamp.clone(),
            body: &report,
        },
    )?;
    let mut files = vec![rp];
    for p in write_plot_data(&report, out)? {
        files.push(write_sidecar(&p, &stamp)?);
        files.push(p);
    }
    let sp = out.join(SUMMARY_FILE);
    std::fs::write(&sp, render_summary(&report)).with_context(|| format!("writing {}", sp.display()))?;
    files.push(write_sidecar(&sp, &stamp)?);
    files.push(sp);
    let gate_failures = gates.check(&report);
    Ok(EvaluateOutput {
        report,
        gate_failures,
        files,
    })
}

pub fn evaluate(args: &EvaluateArgs) -> Result<EvaluateOutput> {
    let real = load_table(&args.real)?;
    let synth = load_table(&args.synthetic)?;
    let cfg = eval_config(&args.stages, args.seed, args.classifiers.as_ref(), args.regressors.as_ref());
    evaluate_tables(&real, &synth, &cfg, &args.gates, &args.out)
}
