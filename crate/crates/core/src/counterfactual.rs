//! Forbid-one-action counterfactual rollouts.
//!
//! For step `i` of a target trajectory and every action `a ≠ a_i`, the
//! rollout replays the prefix `[0, i)`, takes `a` at step `i`, then follows
//! the greedy policy of the analysis Q-table until the episode ends.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::QTable;
use crate::envsim::{ActionId, Env, Episode, TerminalKind};
use crate::error::{Error, Result};
use crate::seed;
use crate::trajstore::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub total_reward: f64,
    pub length: usize,
    pub terminal: TerminalKind,
}

impl Outcome {
    pub fn of(env: &Env, traj: &Trajectory) -> Self {
        Outcome {
            total_reward: traj.total_reward,
            length: traj.length,
            terminal: env.terminal_kind(&traj.transitions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRollout {
    pub deviation_step: usize,
    pub forced_action: ActionId,
    pub trajectory: Trajectory,
    pub outcome: Outcome,
}

/// Present when the budget forced a subset of deviation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsampling {
    pub budget: usize,
    /// `"step_j = floor(j * T / m) for j in 0..m"`, where `m` is the number
    /// of deviation steps that fit the budget.
    pub rule: String,
    pub deviation_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub original_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub original: Outcome,
    pub rollouts: Vec<CounterfactualRollout>,
    pub subsampling: Option<Subsampling>,
    /// Share of rollouts whose reward is no higher than the original's.
    pub reward_dominance: Option<f64>,
    /// Share of rollouts that are no shorter than the original.
    pub length_dominance: Option<f64>,
}

/// Builds one counterfactual. Validates the request but not the prefix;
/// callers holding untrusted trajectories should run
/// [`Trajectory::replay_check`] first.
pub fn rollout(
    env: &Env,
    q: &QTable,
    target: &Trajectory,
    step: usize,
    forced_action: ActionId,
    seed: u64,
) -> Result<CounterfactualRollout> {
    let Some(original) = target.transitions.get(step) else {
        return Err(Error::InvalidRequest(format!(
            "step {step} out of range for trajectory of length {}",
            target.length
        )));
    };
    let action_count = env.spec().action_count;
    if forced_action >= action_count {
        return Err(Error::InvalidRequest(format!(
            "action {forced_action} out of range for {action_count} actions"
        )));
    }
    if forced_action == original.action {
        return Err(Error::InvalidRequest("action equals original".into()));
    }
    let mut transitions = target.transitions[..step].to_vec();
    let mut ep = Episode::resume(env, original.state, step);
    transitions.push(ep.step(forced_action)?);
    transitions.extend(ep.run_with(|s| q.greedy(s)));
    let trajectory = Trajectory::new(
        format!("{}/cf-{step}-{forced_action}", target.id),
        target.checkpoint_fraction,
        seed,
        transitions,
    );
    Ok(CounterfactualRollout {
        deviation_step: step,
        forced_action,
        outcome: Outcome::of(env, &trajectory),
        trajectory,
    })
}

fn deviation_steps(len: usize, alternatives: usize, budget: Option<usize>) -> (Vec<usize>, Option<Subsampling>) {
    let all: Vec<usize> = (0..len).collect();
    match budget {
        Some(budget) if len * alternatives > budget => {
            let m = budget / alternatives;
            let steps: Vec<usize> = (0..m).map(|j| j * len / m).collect();
            let sub = Subsampling {
                budget,
                rule: "step_j = floor(j * T / m) for j in 0..m".into(),
                deviation_steps: steps.clone(),
            };
            (steps, Some(sub))
        }
        _ => (all, None),
    }
}

/// Seed stamped on counterfactual rollouts for a run with root seed `root`.
/// The CLI and the service both use it, so their outputs match.
pub fn rollout_seed(root: u64) -> u64 {
    seed::derive(root, "counterfactual")
}

/// Every single-action deviation from `target`, ordered by (step, action).
pub fn generate(
    env: &Env,
    q: &QTable,
    config_hash: &str,
    target: &Trajectory,
    budget: Option<usize>,
    seed: u64,
) -> Result<CounterfactualSet> {
    target.replay_check(env)?;
    let action_count = env.spec().action_count;
    let (steps, subsampling) = deviation_steps(target.length, action_count - 1, budget);
    let jobs: Vec<(usize, ActionId)> = steps
        .iter()
        .flat_map(|&i| {
            let original = target.transitions[i].action;
            (0..action_count)
                .filter(move |&a| a != original)
                .map(move |a| (i, a))
        })
        .collect();
    let rollouts = jobs
        .par_iter()
        .map(|&(i, a)| rollout(env, q, target, i, a, seed))
        .collect::<Result<Vec<_>>>()?;
    let original = Outcome::of(env, target);
    let (reward_dominance, length_dominance) = dominance(&original, &rollouts);
    Ok(CounterfactualSet {
        original_id: target.id.clone(),
        config_hash: config_hash.to_string(),
        seed,
        original,
        rollouts,
        subsampling,
        reward_dominance,
        length_dominance,
    })
}

fn dominance(original: &Outcome, rollouts: &[CounterfactualRollout]) -> (Option<f64>, Option<f64>) {
    if rollouts.is_empty() {
        return (None, None);
    }
    let n = rollouts.len() as f64;
    let reward = rollouts
        .iter()
        .filter(|r| r.outcome.total_reward <= original.total_reward)
        .count() as f64;
    let length = rollouts
        .iter()
        .filter(|r| r.outcome.length >= original.length)
        .count() as f64;
    (Some(reward / n), Some(length / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutDelta {
    pub deviation_step: usize,
    pub forced_action: ActionId,
    pub length_delta: i64,
    pub reward_delta: f64,
}

/// The contrast between the original and its counterfactuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveSummary {
    pub original_id: String,
    pub original_length: usize,
    pub original_reward: f64,
    pub deltas: Vec<RolloutDelta>,
    pub reward_dominance: f64,
    pub length_dominance: f64,
    /// Rollouts with strictly higher reward or strictly shorter length.
    pub strictly_better: usize,
    pub lengths: Vec<usize>,
    pub rewards: Vec<f64>,
}

pub fn compare(set: &CounterfactualSet) -> Result<ContrastiveSummary> {
    let (Some(reward_dominance), Some(length_dominance)) = dominance(&set.original, &set.rollouts)
    else {
        return Err(Error::EmptyCounterfactualSet);
    };
    let o = &set.original;
    let deltas = set
        .rollouts
        .iter()
        .map(|r| RolloutDelta {
            deviation_step: r.deviation_step,
            forced_action: r.forced_action,
            length_delta: r.outcome.length as i64 - o.length as i64,
            reward_delta: r.outcome.total_reward - o.total_reward,
        })
        .collect();
    let strictly_better = set
        .rollouts
        .iter()
        .filter(|r| r.outcome.total_reward > o.total_reward || r.outcome.length < o.length)
        .count();
    Ok(ContrastiveSummary {
        original_id: set.original_id.clone(),
        original_length: o.length,
        original_reward: o.total_reward,
        deltas,
        reward_dominance,
        length_dominance,
        strictly_better,
        lengths: set.rollouts.iter().map(|r| r.outcome.length).collect(),
        rewards: set.rollouts.iter().map(|r| r.outcome.total_reward).collect(),
    })
}

impl CounterfactualSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counterfactual set serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
