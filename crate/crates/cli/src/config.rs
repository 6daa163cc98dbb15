//! Experiment configuration, the five presets, and provenance stamps.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flightsynth::flights::{FilterConfig, FrameVariant};
use flightsynth::learners::LearnerSpec;
use flightsynth::quality::Stage;
use flightsynth::tvae::{Architecture, SampleOptions, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!("flightsynth ", env!("CARGO_PKG_VERSION"));

/// Row cap the copula presets subsample to.
pub const GC_ROW_CAP: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Gc,
    Tvae,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Gc => "gc",
            GeneratorKind::Tvae => "tvae",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvaeParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub kl_warmup: bool,
    pub mode_normalize: bool,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Draw categories from the decoder softmax rather than its argmax.
    pub stochastic_sampling: bool,
}

impl Default for TvaeParams {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = Architecture::default();
        TvaeParams {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            kl_warmup: t.kl_warmup,
            mode_normalize: t.mode_normalize,
            encoder_hidden: a.encoder_hidden,
            decoder_hidden: a.decoder_hidden,
            latent_dim: a.latent_dim,
            stochastic_sampling: false,
        }
    }
}

impl TvaeParams {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            kl_warmup: self.kl_warmup,
            mode_normalize: self.mode_normalize,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            encoder_hidden: self.encoder_hidden.clone(),
            decoder_hidden: self.decoder_hidden.clone(),
            latent_dim: self.latent_dim,
        }
    }

    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            stochastic: self.stochastic_sampling,
        }
    }
}

/// Everything one pipeline run needs. Paths are excluded from the config
/// hash so the same experiment hashes the same wherever it runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// `1`–`5` for presets, any other label for custom runs.
    pub experiment: String,
    pub generator: GeneratorKind,
    pub variant: FrameVariant,
    /// Training rows above this are subsampled (seeded) before fitting.
    pub row_cap: Option<usize>,
    /// Defaults to the number of training rows.
    pub sample_count: Option<usize>,
    pub seed: u64,
    pub tvae: TvaeParams,
    pub filters: FilterConfig,
    pub stages: Vec<Stage>,
    pub classifiers: Option<Vec<LearnerSpec>>,
    pub regressors: Option<Vec<LearnerSpec>>,
    /// Rows of mock data to generate when no `data` path is given.
    pub mock_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub airports: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "custom".to_string(),
            generator: GeneratorKind::Tvae,
            variant: FrameVariant::UtcD2,
            row_cap: None,
            sample_count: None,
            seed: 0,
            tvae: TvaeParams::default(),
            filters: FilterConfig::default(),
            stages: Stage::ALL.to_vec(),
            classifiers: None,
            regressors: None,
            mock_rows: 5000,
            data: None,
            airports: None,
            mapping: None,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(n: u8) -> Result<Self> {
        let (generator, variant, row_cap) = match n {
            1 => (GeneratorKind::Tvae, FrameVariant::UtcTs, None),
            2 => (GeneratorKind::Tvae, FrameVariant::UtcD, None),
            3 => (GeneratorKind::Tvae, FrameVariant::UtcD2, None),
            4 => (GeneratorKind::Gc, FrameVariant::UtcTs, Some(GC_ROW_CAP)),
            5 => (GeneratorKind::Gc, FrameVariant::UtcD2, Some(GC_ROW_CAP)),
            _ => bail!("preset must be 1–5, got {n}"),
        };
        Ok(ExperimentConfig {
            experiment: n.to_string(),
            generator,
            variant,
            row_cap,
            filters: FilterConfig::route_only(),
            ..Default::default()
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            bail!("config selects no evaluation stages");
        }
        if self.row_cap == Some(0) || self.sample_count == Some(0) {
            bail!("row cap and sample count must be positive");
        }
        if self.generator == GeneratorKind::Tvae {
            self.tvae.train_config(self.seed).validate()?;
        }
        Ok(())
    }

    /// Hash of the path-free config.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.data = None;
        c.airports = None;
        c.mapping = None;
        c.out = None;
        config_hash(&c)
    }
}

/// SHA-256 of the value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serialises");
    hex::encode(Sha256::digest(json))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Provenance carried by every output file. No timestamps, so reruns are
/// byte-identical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Stamp {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: u64) -> Self {
        Stamp {
            command: command.to_string(),
            config_hash: config_hash(config),
            seed,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// `data.csv` → `data.provenance.json`.
pub fn provenance_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.provenance.json"))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    file: String,
    sha256: String,
    #[serde(flatten)]
    stamp: &'a Stamp,
}

/// Writes the provenance sidecar for a non-JSON artifact and returns its path.
pub fn write_sidecar(path: &Path, stamp: &Stamp) -> Result<PathBuf> {
    let side = provenance_path_for(path);
    let body = Sidecar {
        file: path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: sha256_file(path)?,
        stamp,
    };
    write_json(&side, &body)?;
    Ok(side)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// JSON payload with its stamp alongside.
#[derive(Serialize, Deserialize)]
pub struct Stamped<T> {
    pub stamp: Stamp,
    #[serde(flatten)]
    pub body: T,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_experiment_list() {
        use FrameVariant::*;
        use GeneratorKind::*;
        let want = [
            (Tvae, UtcTs, None),
            (Tvae, UtcD, None),
            (Tvae, UtcD2, None),
            (Gc, UtcTs, Some(5000)),
            (Gc, UtcD2, Some(5000)),
        ];
        for (i, w) in want.into_iter().enumerate() {
            let c = ExperimentConfig::preset(i as u8 + 1).unwrap();
            assert_eq!((c.generator, c.variant, c.row_cap), w, "preset {}", i + 1);
            assert_eq!(c.tvae.epochs, 300);
            assert_eq!(c.filters, FilterConfig::route_only());
            c.validate().unwrap();
        }
        assert!(ExperimentConfig::preset(0).is_err());
        assert!(ExperimentConfig::preset(6).is_err());
    }

    #[test]
    fn hash_ignores_paths() {
        let a = ExperimentConfig::preset(5).unwrap();
        let mut b = a.clone();
        b.out = Some("/elsewhere".into());
        b.data = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_round_trips_with_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"generator":"gc","variant":"utc_ts","seed":4}"#).unwrap();
        assert_eq!(c.generator, GeneratorKind::Gc);
        assert_eq!(c.variant, FrameVariant::UtcTs);
        assert_eq!(c.stages.len(), 4);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
