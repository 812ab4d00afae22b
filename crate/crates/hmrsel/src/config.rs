//! Run configuration: one TOML file, every field optional.
//!
//! Relative paths are resolved against the directory holding the file.
//! See `hmrsel.example.toml` for every key with its default.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use hmrsel_core::uncertainty::UncertaintyConfig;
use hmrsel_core::{BoundsTable, CoverageConfig, SearchConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::toy;

pub const OUT_ENV: &str = "HMRSEL_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPair {
    pub images: PathBuf,
    pub labels: PathBuf,
}

/// Settings of the `train` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16],
            dropout: vec![0.25, 0.25],
            epochs: toy::EPOCHS,
            learning_rate: toy::LEARNING_RATE,
            seed: toy::TRAIN_SEED,
        }
    }
}

/// Where the datasets come from. A split without an IDX pair falls back to
/// the synthetic digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<IdxPair>,
    pub calibration: Option<IdxPair>,
    pub test: Option<IdxPair>,
    /// Out-of-distribution inputs, profiled next to the noise curve.
    pub ood: Option<IdxPair>,
    pub num_classes: Option<usize>,
    pub synthetic_seed: u64,
    /// Inputs per synthetic split.
    pub synthetic_split: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            calibration: None,
            test: None,
            ood: None,
            num_classes: None,
            synthetic_seed: toy::DATA_SEED,
            synthetic_split: toy::SPLIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the search, dropout sampling and random baselines.
    pub seed: u64,
    pub out: PathBuf,
    /// Model file; `<out>/model.json` when unset.
    pub model: Option<PathBuf>,
    /// Perturbation size of the adversarial profile.
    pub fgsm_epsilon: f64,
    /// Random sets drawn by `baseline`.
    pub baseline_sets: usize,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub bounds: BoundsTable,
    pub coverage: CoverageConfig,
    /// `search.seed` is ignored; the top-level `seed` is used.
    pub search: SearchConfig,
    pub uncertainty: UncertaintyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            model: None,
            fgsm_epsilon: 0.2,
            baseline_sets: 30,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            bounds: BoundsTable::default(),
            coverage: CoverageConfig::default(),
            search: SearchConfig::default(),
            uncertainty: UncertaintyConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    /// Reads `path` (or the defaults when `None`), resolves relative paths
    /// and checks that every referenced dataset file exists.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", p.display())))?;
                let mut cfg = Self::parse(&text)?;
                let base = p.parent().unwrap_or(Path::new(""));
                cfg.rebase(base);
                cfg
            }
            None => Self::default(),
        };
        cfg.search.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        if let Some(m) = &mut self.model {
            fix(m);
        }
        for pair in self.idx_pairs_mut() {
            fix(&mut pair.images);
            fix(&mut pair.labels);
        }
    }

    fn idx_pairs_mut(&mut self) -> impl Iterator<Item = &mut IdxPair> {
        let d = &mut self.data;
        [&mut d.train, &mut d.calibration, &mut d.test, &mut d.ood]
            .into_iter()
            .flatten()
    }

    /// Command-line seed, then `--out`, then the environment, then the file.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.seed = s;
            self.search.seed = s;
        }
        if let Some(o) = out.or_else(|| env::var_os(OUT_ENV).map(PathBuf::from)) {
            self.out = o;
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate().map_err(config_err)?;
        self.coverage.validate().map_err(config_err)?;
        self.search.validate().map_err(config_err)?;
        self.uncertainty.validate().map_err(config_err)?;
        let t = &self.train;
        if t.hidden.is_empty() || t.hidden.contains(&0) {
            return Err(config_err("train.hidden needs at least one non-empty layer"));
        }
        if t.hidden.len() != t.dropout.len() {
            return Err(config_err("train.dropout needs one rate per hidden layer"));
        }
        if t.dropout.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(config_err("train.dropout rates must lie in [0, 1)"));
        }
        if t.epochs == 0 || !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(config_err("train.epochs and train.learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.fgsm_epsilon) {
            return Err(config_err("fgsm_epsilon must lie in [0, 1]"));
        }
        if self.baseline_sets == 0 || self.data.synthetic_split == 0 {
            return Err(config_err("baseline_sets and data.synthetic_split must be >= 1"));
        }
        let d = &self.data;
        for pair in [&d.train, &d.calibration, &d.test, &d.ood].into_iter().flatten() {
            for p in [&pair.images, &pair.labels] {
                if !p.is_file() {
                    return Err(config_err(format!("dataset file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
