//! Trajectory collection and `.traj.jsonl` persistence.
//!
//! File layout: the first line is a header record, every following line is
//! one trajectory.
//!
//! ```text
//! {"kind":"header","format":"trajex-trajectories","version":1,"env":"grid5x5","config_hash":"…","qtable_hash":"…","count":100}
//! {"kind":"trajectory","id":"ck0-ep0000","checkpoint_fraction":0.1,"seed":…,"length":12,"total_reward":-12.0,"transitions":[{"state":0,"action":1,"reward":-1.0,"next_state":5,"done":false},…]}
//! ```

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Checkpoint, QTable};
use crate::envsim::{Env, Episode, Transition};
use crate::error::{Error, Result};
use crate::seed;

const FORMAT: &str = "trajex-trajectories";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub checkpoint_fraction: f64,
    pub seed: u64,
    pub length: usize,
    pub total_reward: f64,
    pub transitions: Vec<Transition>,
}

/// Sum of rewards in step order.
pub fn reward_sum(transitions: &[Transition]) -> f64 {
    transitions.iter().fold(0.0, |acc, t| acc + t.reward)
}

impl Trajectory {
    pub fn new(id: String, checkpoint_fraction: f64, seed: u64, transitions: Vec<Transition>) -> Self {
        Trajectory {
            id,
            checkpoint_fraction,
            seed,
            length: transitions.len(),
            total_reward: reward_sum(&transitions),
            transitions,
        }
    }

    /// The state acted in by the final transition.
    pub fn final_state(&self) -> Option<usize> {
        self.transitions.last().map(|t| t.state)
    }

    /// Checks the stored fields against the transitions.
    pub fn validate(&self) -> Result<()> {
        let fail = |what: String| Err(Error::Invariant(format!("trajectory {}: {what}", self.id)));
        if self.length != self.transitions.len() {
            return fail(format!(
                "length {} but {} transitions",
                self.length,
                self.transitions.len()
            ));
        }
        let total = reward_sum(&self.transitions);
        if total.to_bits() != self.total_reward.to_bits() {
            return fail(format!(
                "total_reward {} but transitions sum to {total}",
                self.total_reward
            ));
        }
        for (i, w) in self.transitions.windows(2).enumerate() {
            if w[0].next_state != w[1].state {
                return fail(format!(
                    "chain broken between steps {i} and {}: next_state {} != state {}",
                    i + 1,
                    w[0].next_state,
                    w[1].state
                ));
            }
            if w[0].done {
                return fail(format!("step {i} is marked done but the trajectory continues"));
            }
        }
        if !(self.checkpoint_fraction > 0.0 && self.checkpoint_fraction <= 1.0) {
            return fail(format!("checkpoint_fraction {} outside (0, 1]", self.checkpoint_fraction));
        }
        Ok(())
    }

    /// Re-runs the recorded actions from the start state and checks that
    /// every transition is reproduced bit-exactly.
    pub fn replay_check(&self, env: &Env) -> Result<()> {
        let mut ep = env.episode();
        for (i, t) in self.transitions.iter().enumerate() {
            if ep.is_done() || t.state != ep.state() {
                return Err(Error::ReplayDivergence { step: i });
            }
            match ep.step(t.action) {
                Ok(replayed) if replayed.bit_eq(t) => {}
                _ => return Err(Error::ReplayDivergence { step: i }),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub env: String,
    pub config_hash: String,
    /// Content hash of the analysis-time Q-table.
    pub qtable_hash: String,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RolloutMode {
    Greedy,
    EpsilonGreedy(f64),
}

impl RolloutMode {
    pub fn from_epsilon(epsilon: f64) -> Self {
        if epsilon > 0.0 {
            RolloutMode::EpsilonGreedy(epsilon)
        } else {
            RolloutMode::Greedy
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header {
        format: String,
        version: u32,
        env: String,
        config_hash: String,
        qtable_hash: String,
        count: usize,
    },
    Trajectory(Trajectory),
}

/// Rolls out `episodes_per_checkpoint` episodes from every checkpoint.
/// Episode `e` of checkpoint `c` draws from the stage stream
/// `collect/{c}/{e}`, so the result does not depend on scheduling.
pub fn collect(
    env: &Env,
    checkpoints: &[Checkpoint],
    analysis_q: &QTable,
    episodes_per_checkpoint: usize,
    mode: RolloutMode,
    seed: u64,
) -> Result<Dataset> {
    if checkpoints.is_empty() {
        return Err(Error::Config("collect needs at least one checkpoint".into()));
    }
    if episodes_per_checkpoint == 0 {
        return Err(Error::Config("episodes_per_checkpoint must be >= 1".into()));
    }
    let action_count = env.spec().action_count;
    let jobs: Vec<(usize, usize)> = (0..checkpoints.len())
        .flat_map(|c| (0..episodes_per_checkpoint).map(move |e| (c, e)))
        .collect();
    let trajectories = jobs
        .par_iter()
        .map(|&(c, e)| {
            let ck = &checkpoints[c];
            let ep_seed = seed::derive(seed, &format!("collect/{c}/{e}"));
            let mut rng = seed::stage_rng(ep_seed, "rollout");
            let transitions = Episode::new(env).run_with(|s| match mode {
                RolloutMode::EpsilonGreedy(eps) if rng.random::<f64>() < eps => {
                    rng.random_range(0..action_count)
                }
                _ => ck.qtable.greedy(s),
            });
            Trajectory::new(format!("ck{c}-ep{e:04}"), ck.fraction, ep_seed, transitions)
        })
        .collect();
    Ok(Dataset {
        env: analysis_q.env().to_string(),
        config_hash: analysis_q.config_hash().to_string(),
        qtable_hash: analysis_q.content_hash(),
        trajectories,
    })
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for t in &self.trajectories {
            t.validate()?;
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Invariant(format!("duplicate trajectory id {}", t.id)));
            }
        }
        Ok(())
    }

    /// Checks the dataset against the environment and analysis Q-table.
    pub fn check_against(&self, env: &Env, config_hash: &str, q: &QTable) -> Result<()> {
        if self.config_hash != config_hash {
            return Err(Error::HashMismatch {
                context: "dataset".into(),
                expected: config_hash.to_string(),
                found: self.config_hash.clone(),
            });
        }
        q.check_env(env.spec(), config_hash)?;
        let q_hash = q.content_hash();
        if self.qtable_hash != q_hash {
            return Err(Error::HashMismatch {
                context: "dataset Q-table reference".into(),
                expected: q_hash,
                found: self.qtable_hash.clone(),
            });
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.trajectories
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| Error::UnknownTrajectory(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<&Trajectory> {
        self.index_of(id).map(|i| &self.trajectories[i])
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Record::Header {
            format: FORMAT.into(),
            version: VERSION,
            env: self.env.clone(),
            config_hash: self.config_hash.clone(),
            qtable_hash: self.qtable_hash.clone(),
            count: self.trajectories.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, &Record::Trajectory(t.clone()))?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }

    /// Parses and validates a dataset; `path` is only used in messages.
    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let malformed = |line: usize, reason: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = reader.lines().enumerate();
        let (env, config_hash, qtable_hash, count) = match lines.next() {
            None => return Err(malformed(1, "empty file, expected a header record".into())),
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<Record>(&line) {
                    Ok(Record::Header {
                        format,
                        version,
                        env,
                        config_hash,
                        qtable_hash,
                        count,
                    }) => {
                        if format != FORMAT {
                            return Err(malformed(1, format!("unknown format {format:?}")));
                        }
                        if version != VERSION {
                            return Err(Error::VersionMismatch {
                                expected: VERSION,
                                found: version,
                            });
                        }
                        (env, config_hash, qtable_hash, count)
                    }
                    Ok(Record::Trajectory(_)) => {
                        return Err(malformed(1, "expected a header record first".into()))
                    }
                    Err(e) => return Err(malformed(1, e.to_string())),
                }
            }
        };
        let mut trajectories = Vec::with_capacity(count);
        let mut last_line = 1;
        for (i, line) in lines {
            let lineno = i + 1;
            last_line = lineno;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line) {
                Ok(Record::Trajectory(t)) => {
                    t.validate().map_err(|e| match e {
                        Error::Invariant(msg) => Error::Invariant(format!("line {lineno}: {msg}")),
                        other => other,
                    })?;
                    trajectories.push(t);
                }
                Ok(Record::Header { .. }) => {
                    return Err(malformed(lineno, "unexpected second header".into()))
                }
                Err(e) => return Err(malformed(lineno, e.to_string())),
            }
        }
        if trajectories.len() != count {
            return Err(malformed(
                last_line,
                format!("header declares {count} trajectories, found {}", trajectories.len()),
            ));
        }
        let ds = Dataset {
            env,
            config_hash,
            qtable_hash,
            trajectories,
        };
        ds.validate()?;
        Ok(ds)
    }
}
