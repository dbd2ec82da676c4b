//! Experiment configuration file.

use std::path::{Path, PathBuf};

use boostdec::boost::{CollectConfig, StagePlan};
use boostdec::eval::{Arithmetic, FerConfig, LogBase};
use boostdec::train::{AdamConfig, LossSpec, ScheduleSpec, TrainConfig};
use boostdec::weights::ProtoDims;
use boostdec::{ChannelKind, ChannelSpec, CheckRule, DecoderConfig, Error, Protograph, Quantizer, Result, TannerGraph};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "yes")]
    pub deterministic: bool,
    /// Trial cap for collection and FER runs.
    #[serde(default = "default_budget")]
    pub budget: u64,
    pub code: CodeConfig,
    #[serde(default)]
    pub decoder: DecoderSection,
    pub plan: StagePlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub collect: CollectSection,
    #[serde(default)]
    pub fer: FerSection,
    #[serde(default)]
    pub complexity: ComplexitySection,
    #[serde(default)]
    pub paths: Paths,
}

fn yes() -> bool {
    true
}

fn default_budget() -> u64 {
    1_000_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeFormat {
    BaseMatrix,
    Alist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoBits {
    /// Every VN counts toward frame errors.
    #[default]
    All,
    /// Only the first `n - m` VNs.
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CodeFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default)]
    pub info_bits: InfoBits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSection {
    pub rule: CheckRule,
    pub quantizer: Quantizer,
    #[serde(default = "yes")]
    pub early_stop: bool,
}

impl Default for DecoderSection {
    fn default() -> Self {
        Self {
            rule: CheckRule::MinSum,
            quantizer: Quantizer::five_bit(),
            early_stop: true,
        }
    }
}

impl DecoderSection {
    pub fn config(&self, iterations: usize) -> DecoderConfig {
        DecoderConfig {
            rule: self.rule,
            quantizer: self.quantizer,
            iterations,
            early_stop: self.early_stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub ebno_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub schedule: ScheduleSpec,
    pub loss: LossSpec,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Eb/N0 points of fresh base-training frames.
    #[serde(default = "default_base_snrs")]
    pub base_ebno_db: Vec<f64>,
    #[serde(default = "default_frames")]
    pub frames_per_epoch: usize,
    /// Post stage trained by `train-post`, from 0.
    #[serde(default)]
    pub post_index: usize,
}

fn default_base_snrs() -> Vec<f64> {
    vec![2.0, 2.5, 3.0, 3.5, 4.0]
}

fn default_frames() -> usize {
    5000
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            schedule: ScheduleSpec::new(boostdec::train::ScheduleKind::OneShot),
            loss: LossSpec::fer(),
            adam: AdamConfig::default(),
            base_ebno_db: default_base_snrs(),
            frames_per_epoch: default_frames(),
            post_index: 0,
        }
    }
}

impl TrainSection {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule,
            loss: self.loss,
            adam: self.adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectSection {
    pub target: usize,
    /// Iterations of the decoder whose failures are gathered; defaults to
    /// the base stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "one")]
    pub per_source: usize,
}

fn one() -> usize {
    1
}

impl Default for CollectSection {
    fn default() -> Self {
        Self {
            target: 1000,
            iterations: None,
            beta: 0.0,
            per_source: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FerSection {
    #[serde(default)]
    pub ebno_db: Vec<f64>,
    #[serde(default = "hundred")]
    pub stop_errors: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default = "default_chunk")]
    pub chunk_frames: u64,
}

fn hundred() -> u64 {
    100
}

fn default_chunk() -> u64 {
    1024
}

impl Default for FerSection {
    fn default() -> Self {
        Self {
            ebno_db: Vec::new(),
            stop_errors: 100,
            iterations: None,
            chunk_frames: default_chunk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySection {
    pub arithmetic: Arithmetic,
    pub log_base: LogBase,
}

impl Default for ComplexitySection {
    fn default() -> Self {
        Self {
            arithmetic: Arithmetic::Neural,
            log_base: LogBase::Natural,
        }
    }
}

/// Artifact locations, relative to the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_in: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_in: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fer_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// A parsed config plus the directory its relative paths start from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.decoder.quantizer.validate()?;
        self.train.loss.validate()?;
        if self.plan.base_iterations == 0 {
            return Err(Error::Config("plan.base_iterations must be positive".into()));
        }
        if self.train.schedule.batch_size == 0 {
            return Err(Error::Config("train.schedule.batch_size must be positive".into()));
        }
        if self.train.base_ebno_db.is_empty() {
            return Err(Error::Config("train.base_ebno_db is empty".into()));
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::Config("workers must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Loaded {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = ExperimentConfig::from_toml(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { cfg, base_dir };
        let code = loaded.resolve(&loaded.cfg.code.path);
        if !code.is_file() {
            return Err(Error::Config(format!("code file {} not found", code.display())));
        }
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolved path of a required input file.
    pub fn input(&self, p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Config(format!("paths.{key} is required")))?;
        let r = self.resolve(p);
        if !r.is_file() {
            return Err(Error::Config(format!("paths.{key}: {} not found", r.display())));
        }
        Ok(r)
    }

    /// Resolved path of a required output file.
    pub fn output(&self, p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        p.as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config(format!("paths.{key} is required")))
    }

    pub fn graph(&self) -> Result<TannerGraph> {
        let path = self.resolve(&self.cfg.code.path);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let format = self.cfg.code.format.unwrap_or_else(|| {
            if path.extension().is_some_and(|e| e == "alist") {
                CodeFormat::Alist
            } else {
                CodeFormat::BaseMatrix
            }
        });
        let g = match format {
            CodeFormat::BaseMatrix => Protograph::parse(&text)?.lift()?,
            CodeFormat::Alist => TannerGraph::parse_alist(&text)?,
        };
        match self.cfg.code.rate {
            Some(r) => g.with_rate(r),
            None => Ok(g),
        }
    }

    pub fn code_id(&self) -> String {
        self.cfg.code.id.clone().unwrap_or_else(|| {
            self.cfg
                .code
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "code".into())
        })
    }

    pub fn info_mask(&self, g: &TannerGraph) -> Option<Vec<bool>> {
        match self.cfg.code.info_bits {
            InfoBits::All => None,
            InfoBits::Systematic => Some((0..g.n()).map(|v| v < g.n() - g.m()).collect()),
        }
    }

    pub fn channel(&self, g: &TannerGraph, ebno_db: Option<f64>) -> Result<ChannelSpec> {
        let c = self
            .cfg
            .channel
            .as_ref()
            .ok_or_else(|| Error::Config("[channel] section is required".into()))?;
        let rate = c.code_rate.unwrap_or(g.rate());
        let db = ebno_db.unwrap_or(c.ebno_db);
        let spec = match c.kind {
            ChannelKind::Awgn => ChannelSpec::awgn(db, rate),
            ChannelKind::Rayleigh => ChannelSpec::rayleigh(db, rate),
            ChannelKind::AwgnShifted => {
                return Err(Error::Config(
                    "awgn_shifted is produced by augmentation, not configured directly".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dims(&self, g: &TannerGraph) -> ProtoDims {
        ProtoDims::of(g)
    }

    pub fn collect(&self, target: usize) -> CollectConfig {
        CollectConfig {
            target,
            budget: self.cfg.budget,
            chunk_frames: self.cfg.fer.chunk_frames,
        }
    }

    pub fn fer(&self) -> FerConfig {
        FerConfig {
            stop_errors: self.cfg.fer.stop_errors,
            max_frames: self.cfg.budget,
            chunk_frames: self.cfg.fer.chunk_frames,
        }
    }
}

/// Base stage alone, trainable.
pub fn base_only(plan: &StagePlan) -> StagePlan {
    StagePlan {
        post: Vec::new(),
        ..plan.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
schema_version = 1
seed = 7

[code]
path = "code.txt"
info_bits = "systematic"

[decoder]
rule = "min_sum"
quantizer = { mode = "uniform", step = 0.5, max_magnitude = 7.5 }

[plan]
base_iterations = 20
base_mode = "spatial"
post = [{ iterations = 10, mode = "dynamic" }]

[channel]
kind = "awgn"
ebno_db = 3.5

[train]
schedule = { kind = "block_wise", delta1 = 5, delta2 = 5 }
loss = { kind = "fer" }
adam = { base_lr = 0.01 }
"#;

    #[test]
    fn round_trip() {
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(a.train.schedule.batch_size, 500);
        assert_eq!(a.train.adam.halve_every, 20);
        let b = ExperimentConfig::from_toml(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn float_quantizer_round_trip() {
        let mut a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        a.decoder.quantizer = Quantizer::float();
        a.train.adam.clip = false;
        let b = ExperimentConfig::from_toml(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_schema_and_keys() {
        let v2 = SAMPLE.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(ExperimentConfig::from_toml(&v2), Err(Error::Config(_))));
        let typo = SAMPLE.replace("seed = 7", "sead = 7");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
    }
}
