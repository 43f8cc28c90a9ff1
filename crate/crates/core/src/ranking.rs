//! Top-k trajectory ranking and explanation-target selection.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envsim::Env;
use crate::error::{Error, Result};
use crate::importance::{Analyzer, RadicalKind};
use crate::trajstore::{Dataset, Trajectory};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    /// Position in the dataset.
    pub index: usize,
    pub id: String,
    pub score: f64,
    pub length: usize,
    pub total_reward: f64,
    /// Steps where a degenerate-case guard supplied the radical.
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub kind: RadicalKind,
    pub k: usize,
    /// Every trajectory, best first.
    pub entries: Vec<RankedEntry>,
    pub top_k: Vec<String>,
    pub selected_id: String,
    pub avg_length: f64,
    pub avg_reward: f64,
}

/// How the best outcome among the top-k is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeRule {
    /// Highest total reward, then shortest, then lowest dataset index.
    RewardThenLength,
    /// Shortest, then highest total reward, then lowest dataset index.
    LengthThenReward,
}

impl OutcomeRule {
    pub fn for_env(env: &Env) -> Self {
        // gridworld return is −length, so both rules agree there
        match env {
            Env::Grid(_) | Env::Lander(_) => OutcomeRule::RewardThenLength,
        }
    }

    fn compare(&self, a: (&Trajectory, usize), b: (&Trajectory, usize)) -> Ordering {
        let reward = b.0.total_reward.total_cmp(&a.0.total_reward);
        let length = a.0.length.cmp(&b.0.length);
        let primary = match self {
            OutcomeRule::RewardThenLength => reward.then(length),
            OutcomeRule::LengthThenReward => length.then(reward),
        };
        primary.then(a.1.cmp(&b.1))
    }
}

/// Dataset indices ordered by descending score, ties to the lower index.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn rank(
    analyzer: &Analyzer<'_>,
    dataset: &Dataset,
    kind: &RadicalKind,
    k: usize,
    rule: OutcomeRule,
) -> Result<RankingReport> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if dataset.trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let breakdowns = dataset
        .trajectories
        .par_iter()
        .map(|t| analyzer.trajectory_importance(t, kind))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = breakdowns.iter().map(|b| b.i_tau).collect();
    let entries: Vec<RankedEntry> = rank_order(&scores)
        .into_iter()
        .map(|i| {
            let t = &dataset.trajectories[i];
            RankedEntry {
                index: i,
                id: t.id.clone(),
                score: scores[i],
                length: t.length,
                total_reward: t.total_reward,
                fallback_steps: breakdowns[i].fallback_count(),
            }
        })
        .collect();
    let top = &entries[..k.min(entries.len())];
    let n = top.len() as f64;
    let avg_length = top.iter().map(|e| e.length as f64).sum::<f64>() / n;
    let avg_reward = top.iter().map(|e| e.total_reward).sum::<f64>() / n;
    let mut report = RankingReport {
        kind: kind.clone(),
        k,
        top_k: top.iter().map(|e| e.id.clone()).collect(),
        entries,
        selected_id: String::new(),
        avg_length,
        avg_reward,
    };
    report.selected_id = select_explanation_target(&report, dataset, rule)?;
    Ok(report)
}

/// Best outcome among the report's top-k.
pub fn select_explanation_target(
    report: &RankingReport,
    dataset: &Dataset,
    rule: OutcomeRule,
) -> Result<String> {
    let top = &report.entries[..report.top_k.len()];
    top.iter()
        .map(|e| (&dataset.trajectories[e.index], e.index))
        .min_by(|&a, &b| rule.compare(a, b))
        .map(|(t, _)| t.id.clone())
        .ok_or(Error::EmptyDataset)
}

impl RankingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ranking report serializes")
    }

    /// One row per statistic: `metric,statistic,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,statistic,value\n");
        out += &format!("{},avg_length,{}\n", self.kind, self.avg_length);
        out += &format!("{},avg_reward,{}\n", self.kind, self.avg_reward);
        out
    }

    pub fn score_of(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::Transition;

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(rank_order(&[3.2, 5.1, 5.1, 0.4]), vec![1, 2, 0, 3]);
        assert_eq!(rank_order(&[]), Vec::<usize>::new());
    }

    fn traj(i: usize, reward: f64, length: usize) -> Trajectory {
        let transitions = (0..length)
            .map(|j| Transition {
                state: 0,
                action: 0,
                reward: if j == 0 { reward } else { 0.0 },
                next_state: 0,
                done: j + 1 == length,
            })
            .collect();
        Trajectory::new(format!("t{i}"), 1.0, 0, transitions)
    }

    #[test]
    fn outcome_rule_prefers_reward_then_length() {
        let rewards = [-70.0, -69.0, -69.0, -72.0, -71.0];
        let lengths = [71, 70, 69, 73, 72];
        let trajectories: Vec<Trajectory> = (0..5).map(|i| traj(i, rewards[i], lengths[i])).collect();
        let ds = Dataset {
            env: "x".into(),
            config_hash: String::new(),
            qtable_hash: String::new(),
            trajectories,
        };
        let entries = (0..5)
            .map(|i| RankedEntry {
                index: i,
                id: format!("t{i}"),
                score: 1.0,
                length: lengths[i],
                total_reward: rewards[i],
                fallback_steps: 0,
            })
            .collect();
        let report = RankingReport {
            kind: RadicalKind::VGoal,
            k: 5,
            entries,
            top_k: (0..5).map(|i| format!("t{i}")).collect(),
            selected_id: String::new(),
            avg_length: 0.0,
            avg_reward: 0.0,
        };
        assert_eq!(
            select_explanation_target(&report, &ds, OutcomeRule::RewardThenLength).unwrap(),
            "t2"
        );
        assert_eq!(
            select_explanation_target(&report, &ds, OutcomeRule::LengthThenReward).unwrap(),
            "t2"
        );
    }
}
