use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::short_hash;
use crate::envsim::{ActionId, EnvSpec, StateId};
use crate::error::{Error, Result};

const FORMAT: &str = "trajex-qtable";
const VERSION: u32 = 1;

/// Dense `state × action` table of action values with visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    env: String,
    config_hash: String,
    gamma: f64,
    state_count: usize,
    action_count: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct QTableFile {
    format: String,
    version: u32,
    env: String,
    config_hash: String,
    gamma: f64,
    shape: [usize; 2],
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn zeros(spec: &EnvSpec, config_hash: &str, gamma: f64) -> Self {
        let n = spec.state_count * spec.action_count;
        QTable {
            env: spec.name.clone(),
            config_hash: config_hash.to_string(),
            gamma,
            state_count: spec.state_count,
            action_count: spec.action_count,
            values: vec![0.0; n],
            visits: vec![0; n],
        }
    }

    /// Builds a table from row-major values; used for hand-constructed cases.
    pub fn from_rows(rows: &[Vec<f64>], gamma: f64) -> Result<Self> {
        let action_count = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || action_count == 0 || rows.iter().any(|r| r.len() != action_count) {
            return Err(Error::Config("Q rows must be non-empty and equally long".into()));
        }
        let values: Vec<f64> = rows.concat();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("Q-table entries must be finite".into()));
        }
        Ok(QTable {
            env: "custom".into(),
            config_hash: String::new(),
            gamma,
            state_count: rows.len(),
            action_count,
            visits: vec![0; values.len()],
            values,
        })
    }

    pub fn env(&self) -> &str {
        &self.env
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn idx(&self, s: StateId, a: ActionId) -> usize {
        debug_assert!(s < self.state_count && a < self.action_count);
        s * self.action_count + a
    }

    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[self.idx(s, a)]
    }

    pub fn set(&mut self, s: StateId, a: ActionId, value: f64) {
        let i = self.idx(s, a);
        self.values[i] = value;
    }

    pub fn visits(&self, s: StateId, a: ActionId) -> u64 {
        self.visits[self.idx(s, a)]
    }

    pub(crate) fn record_visit(&mut self, s: StateId, a: ActionId) {
        let i = self.idx(s, a);
        self.visits[i] += 1;
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        let start = s * self.action_count;
        &self.values[start..start + self.action_count]
    }

    /// Argmax with lowest-index tie-breaking.
    pub fn greedy(&self, s: StateId) -> ActionId {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Fails unless the table was produced for `env` with `config_hash`.
    pub fn check_env(&self, spec: &EnvSpec, config_hash: &str) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::HashMismatch {
                context: "Q-table".into(),
                expected: config_hash.to_string(),
                found: self.config_hash.clone(),
            });
        }
        if self.state_count != spec.state_count || self.action_count != spec.action_count {
            return Err(Error::Invariant(format!(
                "Q-table shape {}x{} does not match environment {}x{}",
                self.state_count, self.action_count, spec.state_count, spec.action_count
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = QTableFile {
            format: FORMAT.into(),
            version: VERSION,
            env: self.env.clone(),
            config_hash: self.config_hash.clone(),
            gamma: self.gamma,
            shape: [self.state_count, self.action_count],
            values: self.values.clone(),
            visits: self.visits.clone(),
        };
        serde_json::to_string(&file).expect("Q-table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: QTableFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Invariant(format!("not a Q-table file (format {:?})", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: file.version,
            });
        }
        let [state_count, action_count] = file.shape;
        let n = state_count * action_count;
        if file.values.len() != n || file.visits.len() != n {
            return Err(Error::Invariant(format!(
                "Q-table shape {state_count}x{action_count} does not match {} values",
                file.values.len()
            )));
        }
        if file.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("Q-table entries must be finite".into()));
        }
        Ok(QTable {
            env: file.env,
            config_hash: file.config_hash,
            gamma: file.gamma,
            state_count,
            action_count,
            values: file.values,
            visits: file.visits,
        })
    }

    /// Short hash of the serialized table; datasets reference their
    /// analysis Q-table by it.
    pub fn content_hash(&self) -> String {
        short_hash(self.to_json().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
