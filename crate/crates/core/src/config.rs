//! Run configuration.
//!
//! Configs are TOML files with four tables. Every key is optional except
//! `env.kind`; omitted keys take the defaults below.
//!
//! ```toml
//! [env]
//! kind = "grid"            # "grid" or "lander"
//! width = 5
//! height = 5
//! start = [0, 0]
//! goal = [4, 0]
//! walls = [[2, 0], [2, 1], [2, 2], [2, 3]]
//! max_steps = 100
//!
//! [train]
//! episodes = 3000
//! alpha = 1.0
//! gamma = 0.9
//! epsilon_start = 1.0
//! epsilon_end = 0.05
//! epsilon_decay_fraction = 0.8
//! exploring_starts = true
//! checkpoints = [0.1, 0.25, 0.5, 0.75, 1.0]
//!
//! [collect]
//! episodes_per_checkpoint = 20
//! epsilon = 0.1             # 0 selects greedy rollouts
//!
//! [analysis]
//! temperature = 1.0
//! k = 5
//! budget = 10000            # counterfactual rollout cap
//! ```
//!
//! A lander env table takes `gravity`, `thrust`, `safe_speed`, `bins_h`,
//! `bins_v`, `max_altitude`, `max_speed`, `start_altitude`,
//! `start_velocity` and `max_steps`.
//!
//! The env table alone determines the config hash that is stamped into every
//! Q-table, dataset and counterfactual file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Grid(GridConfig),
    Lander(LanderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    #[serde(default)]
    pub walls: Vec<[usize; 2]>,
    #[serde(default = "default_grid_max_steps")]
    pub max_steps: usize,
}

fn default_grid_max_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LanderConfig {
    pub gravity: f64,
    pub thrust: f64,
    pub safe_speed: f64,
    pub bins_h: usize,
    pub bins_v: usize,
    pub max_altitude: f64,
    pub max_speed: f64,
    pub start_altitude: f64,
    pub start_velocity: f64,
    pub max_steps: usize,
}

impl Default for LanderConfig {
    fn default() -> Self {
        LanderConfig {
            gravity: 1.0,
            thrust: 2.0,
            safe_speed: 2.0,
            bins_h: 20,
            bins_v: 12,
            max_altitude: 20.0,
            max_speed: 6.0,
            start_altitude: 15.0,
            start_velocity: 0.0,
            max_steps: 100,
        }
    }
}

impl EnvConfig {
    /// Named presets accepted by `--env`.
    pub fn preset(name: &str) -> Result<Self> {
        let grid = |w, h, start, goal, walls: &[[usize; 2]], max_steps| {
            EnvConfig::Grid(GridConfig {
                width: w,
                height: h,
                start,
                goal,
                walls: walls.to_vec(),
                max_steps,
            })
        };
        match name {
            "grid1x2" => Ok(grid(2, 1, [0, 0], [1, 0], &[], 20)),
            "grid3" => Ok(grid(3, 3, [0, 0], [2, 2], &[], 50)),
            "grid5" => Ok(grid(
                5,
                5,
                [0, 0],
                [4, 0],
                &[[2, 0], [2, 1], [2, 2], [2, 3]],
                100,
            )),
            // weaker engine and a higher start than the default, so a
            // partially trained policy still crashes some of the time
            "lander" => Ok(EnvConfig::Lander(LanderConfig {
                gravity: 0.5,
                thrust: 1.0,
                safe_speed: 1.0,
                bins_h: 40,
                bins_v: 24,
                max_altitude: 40.0,
                start_altitude: 30.0,
                max_steps: 200,
                ..LanderConfig::default()
            })),
            other => Err(Error::Config(format!(
                "unknown environment preset {other:?} (expected grid1x2, grid3, grid5 or lander)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            EnvConfig::Grid(g) => format!("grid{}x{}", g.width, g.height),
            EnvConfig::Lander(_) => "mini-lander".to_string(),
        }
    }

    /// Short content hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("env config serializes");
        short_hash(&canonical)
    }
}

/// First 8 bytes of the SHA-256 digest, hex encoded.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run over which epsilon decays linearly to `epsilon_end`.
    pub epsilon_decay_fraction: f64,
    /// Start training episodes from a uniformly drawn non-terminal state.
    pub exploring_starts: bool,
    pub checkpoints: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 3000,
            alpha: 1.0,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.8,
            exploring_starts: true,
            checkpoints: vec![0.1, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        for eps in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config(format!("epsilon must be in [0, 1], got {eps}")));
            }
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return Err(Error::Config("epsilon_decay_fraction must be in (0, 1]".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::Config("at least one checkpoint fraction is required".into()));
        }
        for &f in &self.checkpoints {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("checkpoint fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    pub episodes_per_checkpoint: usize,
    /// Exploration rate of the rollout policy; `0.0` means greedy.
    pub epsilon: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            episodes_per_checkpoint: 20,
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Softmax temperature used to turn Q-rows into action distributions.
    pub temperature: f64,
    pub k: usize,
    /// Maximum number of counterfactual rollouts per target trajectory.
    pub budget: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            temperature: 1.0,
            k: 5,
            budget: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    /// Preset env with per-environment default hyperparameters.
    pub fn for_preset(name: &str) -> Result<Self> {
        let env = EnvConfig::preset(name)?;
        let mut train = TrainConfig::default();
        if let EnvConfig::Lander(_) = env {
            train.episodes = 5000;
            train.gamma = 0.99;
            train.exploring_starts = false;
        }
        Ok(RunConfig {
            env,
            train,
            collect: CollectConfig::default(),
            analysis: AnalysisConfig::default(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.collect.epsilon >= 0.0 && self.collect.epsilon <= 1.0) {
            return Err(Error::Config("collect.epsilon must be in [0, 1]".into()));
        }
        if self.collect.episodes_per_checkpoint == 0 {
            return Err(Error::Config("collect.episodes_per_checkpoint must be >= 1".into()));
        }
        if !(self.analysis.temperature > 0.0) {
            return Err(Error::Config("analysis.temperature must be positive".into()));
        }
        if self.analysis.k == 0 {
            return Err(Error::Config("analysis.k must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in ["grid1x2", "grid3", "grid5", "lander"] {
            let cfg = RunConfig::for_preset(name).unwrap();
            let text = cfg.to_toml_string();
            assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn hash_tracks_env_only() {
        let a = RunConfig::for_preset("grid5").unwrap();
        let mut b = a.clone();
        b.train.episodes = 1;
        assert_eq!(a.env.hash(), b.env.hash());
        assert_ne!(a.env.hash(), EnvConfig::preset("grid3").unwrap().hash());
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = RunConfig::from_toml_str(
            "[env]\nkind = \"grid\"\nwidth = 3\nheight = 3\nstart = [0, 0]\ngoal = [2, 2]\n",
        )
        .unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.analysis.k, 5);
    }

    #[test]
    fn rejects_bad_values() {
        let err = RunConfig::from_toml_str(
            "[env]\nkind = \"lander\"\n[train]\nalpha = 0.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(RunConfig::from_toml_str("[env]\nkind = \"lander\"\nbogus = 1\n").is_err());
        assert!(EnvConfig::preset("acrobot").is_err());
    }
}
