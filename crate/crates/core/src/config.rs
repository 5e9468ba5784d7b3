//! Run configuration: one TOML file describing paths, hyperparameters,
//! masking function, and sequence settings. Every run writes its fully
//! resolved configuration next to its outputs so results can be
//! reproduced from the artifacts alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskfn::{FixedShape, MaskFamily, MaskFnConfig, Sidedness};
use crate::normalize::NormalizationPolicy;
use crate::pipeline::{default_max_predictions, SequenceConfig, Strategy};

pub const CONFIG_ENV_VAR: &str = "SELMASK_CONFIG";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const CALIBRATED_CONFIG_FILE: &str = "calibrated_config.toml";
pub const MODEL_FILE: &str = "scorer.model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsSection {
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub vocab: PathBuf,
    pub seed_negative: PathBuf,
    pub seed_positive: PathBuf,
    pub output_dir: PathBuf,
    /// Score model location; defaults to `<output_dir>/scorer.model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl PathsSection {
    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.output_dir.join(MODEL_FILE))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerSection {
    pub reg_c: f64,
    pub epochs: usize,
}

impl Default for ScorerSection {
    fn default() -> Self {
        ScorerSection {
            reg_c: 1.0,
            epochs: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskFnSection {
    pub family: MaskFamily,
    pub sidedness: Sidedness,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub target_rate: f64,
    pub linear_pivot: f64,
    pub exp_shape: f64,
    pub calibration_tolerance: f64,
}

impl Default for MaskFnSection {
    fn default() -> Self {
        let shape = FixedShape::default();
        MaskFnSection {
            family: MaskFamily::Step,
            sidedness: Sidedness::TwoSided,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            target_rate: 0.15,
            linear_pivot: shape.linear_pivot,
            exp_shape: shape.exp_shape,
            calibration_tolerance: 0.002,
        }
    }
}

impl MaskFnSection {
    pub fn mask_config(&self) -> MaskFnConfig {
        MaskFnConfig {
            family: self.family,
            sidedness: self.sidedness,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            target_rate: self.target_rate,
        }
    }

    pub fn fixed_shape(&self) -> FixedShape {
        FixedShape {
            linear_pivot: self.linear_pivot,
            exp_shape: self.exp_shape,
        }
    }

    /// Copy a calibrated function's constants back into the section.
    pub fn absorb(&mut self, cfg: &MaskFnConfig) {
        self.family = cfg.family;
        self.sidedness = cfg.sidedness;
        self.alpha = cfg.alpha;
        self.beta = cfg.beta;
        self.gamma = cfg.gamma;
        self.target_rate = cfg.target_rate;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceSection {
    pub max_seq_len: usize,
    /// Cap on prediction targets per sequence; derived from the target
    /// rate when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_predictions: Option<usize>,
    pub strategy: Strategy,
}

impl Default for SequenceSection {
    fn default() -> Self {
        SequenceSection {
            max_seq_len: 128,
            max_predictions: None,
            strategy: Strategy::Selective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_sample_cap")]
    pub calibration_sample_cap: usize,
    pub paths: PathsSection,
    #[serde(default)]
    pub scorer: ScorerSection,
    #[serde(default)]
    pub mask_fn: MaskFnSection,
    #[serde(default)]
    pub sequence: SequenceSection,
    #[serde(default)]
    pub normalization: NormalizationPolicy,
}

fn default_rng_seed() -> u64 {
    42
}

fn default_workers() -> usize {
    1
}

fn default_sample_cap() -> usize {
    1_000_000
}

impl RunConfig {
    /// Load a config file. Relative paths inside it are interpreted
    /// relative to the file's own directory and resolved to absolute
    /// paths, so a saved copy stays valid wherever it is reloaded from.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parent = path.parent().unwrap_or(Path::new(""));
        let base = if parent.as_os_str().is_empty() {
            std::env::current_dir().map_err(|e| Error::io(path, e))?
        } else if parent.is_absolute() {
            parent.to_path_buf()
        } else {
            std::env::current_dir()
                .map_err(|e| Error::io(path, e))?
                .join(parent)
        };
        config.rebase_paths(&base);
        config.validate_values()?;
        Ok(config)
    }

    fn rebase_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        rebase(&mut self.paths.corpus);
        rebase(&mut self.paths.embeddings);
        rebase(&mut self.paths.vocab);
        rebase(&mut self.paths.seed_negative);
        rebase(&mut self.paths.seed_positive);
        rebase(&mut self.paths.output_dir);
        if let Some(model) = &mut self.paths.model {
            rebase(model);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Value-level checks that hold for every command.
    pub fn validate_values(&self) -> Result<()> {
        let rate = self.mask_fn.target_rate;
        if !(rate.is_finite() && 0.0 < rate && rate < 1.0) {
            return Err(Error::Config(format!(
                "target_rate must be in (0, 1), got {rate}"
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".to_string()));
        }
        if self.calibration_sample_cap == 0 {
            return Err(Error::Config(
                "calibration_sample_cap must be at least 1".to_string(),
            ));
        }
        if !(self.scorer.reg_c.is_finite() && self.scorer.reg_c > 0.0) {
            return Err(Error::Config(format!(
                "scorer reg_c must be positive, got {}",
                self.scorer.reg_c
            )));
        }
        if self.scorer.epochs == 0 {
            return Err(Error::Config("scorer epochs must be at least 1".to_string()));
        }
        self.sequence_config().validate()?;
        Ok(())
    }

    pub fn sequence_config(&self) -> SequenceConfig {
        SequenceConfig {
            max_seq_len: self.sequence.max_seq_len,
            max_predictions: self.sequence.max_predictions.unwrap_or_else(|| {
                default_max_predictions(self.sequence.max_seq_len, self.mask_fn.target_rate)
            }),
            rng_seed: self.rng_seed,
            strategy: self.sequence.strategy,
        }
    }

    /// Error unless `path` points at an existing file.
    pub fn require_file(role: &'static str, path: &Path) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::MissingInput {
                role,
                path: path.to_path_buf(),
            })
        }
    }

    pub fn ensure_output_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.paths.output_dir)
            .map_err(|e| Error::io(&self.paths.output_dir, e))
    }
}
