use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::GridworldSpec;
use crate::error::{Error, Result};
use crate::mac::MacConfig;
use crate::ppgae::PpgaeConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mac,
    Ppgae,
}

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Gridworld(GridworldSpec),
    /// Path to an MDP JSON document, relative to the config file.
    MdpFile(PathBuf),
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::Gridworld(GridworldSpec::default())
    }
}

/// One experiment: `n_trials` independent runs of one algorithm.
///
/// The seed field inside the algorithm sub-config is ignored; trial `i` runs
/// with seed `base_seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub mac: MacConfig,
    #[serde(default)]
    pub ppgae: PpgaeConfig,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    /// Episodes per trial on episodic environments; evaluation rows per
    /// trial otherwise.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
}

fn default_trials() -> usize {
    5
}

fn default_episodes() -> usize {
    300
}

fn default_output() -> PathBuf {
    PathBuf::from("results.csv")
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            env: EnvConfig::default(),
            mac: MacConfig::default(),
            ppgae: PpgaeConfig::default(),
            n_trials: default_trials(),
            episodes: default_episodes(),
            base_seed: 0,
            output_path: default_output(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config; a relative MDP path is resolved against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&std::fs::read_to_string(path)?)?;
        if let EnvConfig::MdpFile(p) = &mut cfg.env {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.episodes < 1 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if let EnvConfig::Gridworld(spec) = &self.env {
            spec.validate()?;
        }
        match self.algorithm {
            Algorithm::Mac => self.mac.validate(),
            Algorithm::Ppgae => self.ppgae.plan().map(|_| ()),
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}
