//! Run directory layout.
//!
//! ```text
//! DIR/
//!   config.toml            full run config
//!   run.json               seed and config hash
//!   qtable.json            final Q-table, used for analysis
//!   checkpoints/ckN.json   frozen Q-table at train.checkpoints[N]
//!   dataset.traj.jsonl     collected trajectories
//!   reports/               rankings, counterfactual sets, tables, figure data
//! ```
//!
//! Nothing in the directory carries a timestamp, so two runs with the same
//! seed and config produce byte-identical files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use trajex_core::agent::{Checkpoint, QTable};
use trajex_core::config::RunConfig;
use trajex_core::envsim::Env;
use trajex_core::trajstore::Dataset;
use trajex_core::Error;

pub const MANIFEST_FORMAT: &str = "trajex-run";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub env: String,
    pub config_hash: String,
    pub seed: u64,
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("run.json")
    }

    pub fn qtable_path(&self) -> PathBuf {
        self.root.join("qtable.json")
    }

    pub fn checkpoint_path(&self, index: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("ck{index}.json"))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.root.join("dataset.traj.jsonl")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn create(&self) -> Result<()> {
        for dir in [self.root.join("checkpoints"), self.reports_dir()] {
            std::fs::create_dir_all(&dir)
                .map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::Io { path: parent.to_path_buf(), source: e })?;
        }
        trajex_core::report::write_file(path, contents)?;
        Ok(())
    }

    pub fn config(&self) -> Result<RunConfig> {
        let path = self.config_path();
        if !path.exists() {
            return Err(Error::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not found"),
            })
            .with_context(|| format!("{} is not a run directory; create one with `trajex train --out`", self.root.display()));
        }
        Ok(RunConfig::load(&path)?)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.manifest_path();
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Io { path: path.clone(), source: e })?;
        let m: Manifest = serde_json::from_str(&text).map_err(Error::Json)?;
        if m.format != MANIFEST_FORMAT || m.version != 1 {
            return Err(Error::VersionMismatch { expected: 1, found: m.version }.into());
        }
        Ok(m)
    }

    pub fn qtable(&self) -> Result<QTable> {
        QTable::load(&self.qtable_path())
            .with_context(|| "loading the analysis Q-table; run `trajex train` first".to_string())
    }

    pub fn checkpoints(&self, cfg: &RunConfig) -> Result<Vec<Checkpoint>> {
        cfg.train
            .checkpoints
            .iter()
            .enumerate()
            .map(|(i, &fraction)| {
                let qtable = QTable::load(&self.checkpoint_path(i))?;
                Ok(Checkpoint { fraction, qtable })
            })
            .collect()
    }

    pub fn dataset(&self, override_path: Option<&Path>) -> Result<Dataset> {
        let path = override_path.map(Path::to_path_buf).unwrap_or_else(|| self.dataset_path());
        Dataset::load(&path)
            .with_context(|| format!("loading dataset {}; run `trajex collect` first", path.display()))
    }
}

/// Everything the analysis commands need, cross-checked.
pub struct Loaded {
    pub cfg: RunConfig,
    pub manifest: Manifest,
    pub env: Env,
    pub config_hash: String,
    pub qtable: QTable,
    pub dataset: Dataset,
}

impl Loaded {
    pub fn open(run: &RunDir, dataset: Option<&Path>) -> Result<Self> {
        let cfg = run.config()?;
        let manifest = run.manifest()?;
        let env = Env::from_config(&cfg.env)?;
        let config_hash = cfg.env.hash();
        if manifest.config_hash != config_hash {
            return Err(Error::HashMismatch {
                context: "run.json".into(),
                expected: config_hash,
                found: manifest.config_hash,
            }
            .into());
        }
        let qtable = run.qtable()?;
        qtable.check_env(env.spec(), &config_hash)?;
        let dataset = run.dataset(dataset)?;
        dataset.check_against(&env, &config_hash, &qtable)?;
        Ok(Loaded { cfg, manifest, env, config_hash, qtable, dataset })
    }
}
