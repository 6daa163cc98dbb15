use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};
use flightsynth::flights::{FilterConfig, FrameVariant};
use flightsynth::quality::Stage;
use flightsynth_cli::commands::{self, EvaluateArgs, FitArgs, IngestArgs, QualityGates, ReconstructArgs, SampleArgs};
use flightsynth_cli::config::{ExperimentConfig, GeneratorKind, TvaeParams};
use flightsynth_cli::{mock, run_pipeline, GateFailure};

const OUT_ENV: &str = "FLIGHTSYNTH_OUT";

#[derive(Parser)]
#[command(name = "flightsynth", version, about = "Synthetic flight data generation and quality evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic BTS-like extract and airport directory.
    MakeMock {
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raw extract → 30-feature table, generator frames and route directory.
    Ingest {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        airports: PathBuf,
        /// JSON object mapping raw headers to feature names.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// utc_ts, utc_d, utc_d_2 or all.
        #[arg(long, default_value = "all")]
        frame: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a generator on a frame table.
    Fit {
        #[arg(long)]
        frame: PathBuf,
        /// Inferred from the frame's columns when omitted.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<FrameVariant>,
        #[arg(long, value_enum)]
        generator: GeneratorKind,
        #[command(flatten)]
        tvae: TvaeFlags,
        /// Seeded subsample size before fitting (copula default 5000).
        #[arg(long)]
        row_cap: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-epoch TVAE loss CSV.
        #[arg(long)]
        loss_trace: Option<PathBuf>,
    },
    /// Draw rows from a saved model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "n")]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild all 30 features from a sampled frame and filter invalid rows.
    Reconstruct {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<FrameVariant>,
        #[arg(long)]
        airports: PathBuf,
        #[arg(long)]
        routes: Option<PathBuf>,
        #[command(flatten)]
        filters: FilterFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grade a cleaned synthetic table against the real one.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long, default_value = "diversity,statistical,fidelity,utility")]
        stages: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        gates: GateFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run ingest, fit, sample, reconstruct and evaluate in one go.
    Pipeline {
        /// Experiment preset 1–5.
        #[arg(long, conflicts_with = "config")]
        preset: Option<u8>,
        /// Full experiment config as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Raw BTS extract; mock data is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Defaults to airports.csv next to the data file.
        #[arg(long)]
        airports: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        mock_rows: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        sample_count: Option<usize>,
        #[arg(long)]
        stages: Option<String>,
        #[command(flatten)]
        gates: GateFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TvaeFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    mode_normalize: bool,
    #[arg(long)]
    kl_warmup: bool,
    #[arg(long)]
    stochastic_sampling: bool,
}

impl TvaeFlags {
    fn params(&self) -> TvaeParams {
        let mut p = TvaeParams::default();
        if let Some(e) = self.epochs {
            p.epochs = e;
        }
        if let Some(b) = self.batch_size {
            p.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            p.learning_rate = lr;
        }
        p.mode_normalize = self.mode_normalize;
        p.kl_warmup = self.kl_warmup;
        p.stochastic_sampling = self.stochastic_sampling;
        p
    }
}

#[derive(Args)]
struct FilterFlags {
    #[arg(long)]
    no_non_negative: bool,
    #[arg(long)]
    no_elapsed_check: bool,
    #[arg(long)]
    no_speed_check: bool,
    #[arg(long, default_value_t = 5.0)]
    elapsed_tolerance: f64,
    #[arg(long, default_value_t = 100.0)]
    speed_min: f64,
    #[arg(long, default_value_t = 700.0)]
    speed_max: f64,
}

impl FilterFlags {
    fn config(&self) -> FilterConfig {
        FilterConfig {
            non_negative: !self.no_non_negative,
            elapsed_consistency: !self.no_elapsed_check,
            elapsed_tolerance_min: self.elapsed_tolerance,
            speed: !self.no_speed_check,
            speed_min_mph: self.speed_min,
            speed_max_mph: self.speed_max,
        }
    }
}

#[derive(Args)]
struct GateFlags {
    /// Exit 1 when the statistical average falls below this.
    #[arg(long)]
    min_statistical: Option<f64>,
    /// Exit 1 when average discriminator accuracy exceeds this.
    #[arg(long)]
    max_fidelity_accuracy: Option<f64>,
    /// Exit 1 when a delay-label class share differs by more points than this.
    #[arg(long)]
    max_balance_gap: Option<f64>,
}

impl GateFlags {
    fn gates(&self) -> QualityGates {
        QualityGates {
            min_statistical: self.min_statistical,
            max_fidelity_accuracy: self.max_fidelity_accuracy,
            max_balance_gap: self.max_balance_gap,
        }
    }
}

fn parse_variant(s: &str) -> std::result::Result<FrameVariant, String> {
    FrameVariant::parse(s).ok_or_else(|| format!("unknown frame variant `{s}` (utc_ts, utc_d, utc_d_2)"))
}

/// `--out`, else `$FLIGHTSYNTH_OUT` (joined with `file` when given).
fn output(out: Option<PathBuf>, file: Option<&str>) -> Result<PathBuf> {
    if let Some(p) = out {
        return Ok(p);
    }
    match std::env::var_os(OUT_ENV) {
        Some(dir) => Ok(match file {
            Some(f) => Path::new(&dir).join(f),
            None => PathBuf::from(dir),
        }),
        None => bail!("no output location: pass --out or set {OUT_ENV}"),
    }
}

fn gate_result(failures: Vec<String>) -> Result<()> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(GateFailure(failures.join("; ")).into())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakeMock { rows, seed, out } => {
            let dir = output(out, None)?;
            let (bts, airports) = mock::write_mock(&dir, rows, seed)?;
            println!("{}\n{}", bts.display(), airports.display());
        }
        Command::Ingest {
            raw,
            airports,
            mapping,
            frame,
            out,
        } => {
            let frames = if frame == "all" {
                FrameVariant::ALL.to_vec()
            } else {
                vec![parse_variant(&frame).map_err(|e| anyhow!(e))?]
            };
            let o = commands::ingest(&IngestArgs {
                raw,
                airports,
                mapping,
                frames,
                out: output(out, None)?,
            })?;
            println!("{}", serde_json::to_string_pretty(&o.report)?);
        }
        Command::Fit {
            frame,
            variant,
            generator,
            tvae,
            row_cap,
            seed,
            out,
            loss_trace,
        } => {
            let o = commands::fit(&FitArgs {
                frame,
                variant,
                generator,
                tvae: tvae.params(),
                row_cap,
                seed,
                out: output(out, Some("model.json"))?,
                loss_trace,
            })?;
            if o.subsampled {
                println!("trained on a seeded subsample of {} rows", o.train.n_rows());
            }
        }
        Command::Sample { model, n, seed, out } => {
            let o = commands::sample(&SampleArgs {
                model,
                n,
                seed,
                out: output(out, Some("sampled.csv"))?,
            })?;
            println!("{}", serde_json::to_string(&o.decode)?);
        }
        Command::Reconstruct {
            frame,
            variant,
            airports,
            routes,
            filters,
            out,
        } => {
            let o = commands::reconstruct(&ReconstructArgs {
                frame,
                variant,
                airports,
                routes,
                filters: filters.config(),
                out: output(out, None)?,
            })?;
            println!("{}", serde_json::to_string_pretty(&o.report)?);
        }
        Command::Evaluate {
            real,
            synthetic,
            stages,
            seed,
            gates,
            out,
        } => {
            let o = commands::evaluate(&EvaluateArgs {
                real,
                synthetic,
                stages: Stage::parse_list(&stages)?,
                seed,
                classifiers: None,
                regressors: None,
                gates: gates.gates(),
                out: output(out, None)?,
            })?;
            print!("{}", flightsynth::quality::render_summary(&o.report));
            gate_result(o.gate_failures)?;
        }
        Command::Pipeline {
            preset,
            config,
            data,
            airports,
            mapping,
            mock_rows,
            seed,
            epochs,
            sample_count,
            stages,
            gates,
            out,
        } => {
            let mut cfg = match (preset, config) {
                (Some(p), None) => ExperimentConfig::preset(p)?,
                (None, Some(path)) => ExperimentConfig::from_file(&path)?,
                (None, None) => bail!("pipeline needs --preset or --config"),
                (Some(_), Some(_)) => unreachable!("clap rejects both"),
            };
            if data.is_some() {
                cfg.data = data;
            }
            if airports.is_some() {
                cfg.airports = airports;
            }
            if mapping.is_some() {
                cfg.mapping = mapping;
            }
            if let Some(r) = mock_rows {
                cfg.mock_rows = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.tvae.epochs = e;
            }
            if sample_count.is_some() {
                cfg.sample_count = sample_count;
            }
            if let Some(s) = stages {
                cfg.stages = Stage::parse_list(&s)?;
            }
            let out = match out.or_else(|| cfg.out.clone()) {
                Some(o) => o,
                None => output(None, None)?,
            };
            let o = run_pipeline(&cfg, &out, &gates.gates())?;
            if let Some(r) = &o.report {
                print!("{}", flightsynth::quality::render_summary(r));
            }
            println!("manifest: {}", out.join(flightsynth_cli::pipeline::MANIFEST_FILE).display());
            gate_result(o.gate_failures)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<GateFailure>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
