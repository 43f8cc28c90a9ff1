//! Ranking tables and counterfactual figure data. Plain CSV, JSON and text
//! only; plotting happens downstream.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::counterfactual::CounterfactualSet;
use crate::error::{Error, Result};
use crate::importance::{Analyzer, RadicalKind};
use crate::ranking::{rank, OutcomeRule};
use crate::trajstore::Dataset;

/// Output file name embedding the metric, k, seed and config hash.
pub fn artifact_name(stem: &str, metric: &str, k: usize, seed: u64, config_hash: &str, ext: &str) -> String {
    format!("{stem}-{metric}-k{k}-s{seed}-{config_hash}.{ext}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub metric: RadicalKind,
    pub avg_length: f64,
    pub avg_reward: f64,
    pub top_k: Vec<String>,
    pub selected_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub k: usize,
    pub rows: Vec<TableRow>,
}

/// Top-k average length and reward for each metric.
pub fn ranking_table(
    analyzer: &Analyzer<'_>,
    dataset: &Dataset,
    metrics: &[RadicalKind],
    k: usize,
    rule: OutcomeRule,
) -> Result<RankingTable> {
    let rows = metrics
        .iter()
        .map(|m| {
            let r = rank(analyzer, dataset, m, k, rule)?;
            Ok(TableRow {
                metric: m.clone(),
                avg_length: r.avg_length,
                avg_reward: r.avg_reward,
                top_k: r.top_k,
                selected_id: r.selected_id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingTable { k, rows })
}

impl RankingTable {
    pub fn row(&self, metric: &RadicalKind) -> Option<&TableRow> {
        self.rows.iter().find(|r| &r.metric == metric)
    }

    /// `metric,statistic,value`, two rows per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,statistic,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},avg_length,{}", r.metric, r.avg_length);
            let _ = writeln!(out, "{},avg_reward,{}", r.metric, r.avg_reward);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("Top-{} ranked trajectories\n", self.k);
        let _ = writeln!(out, "{:<10} {:>12} {:>12}  selected", "metric", "avg length", "avg reward");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>12.2} {:>12.2}  {}",
                r.metric.name(),
                r.avg_length,
                r.avg_reward,
                r.selected_id
            );
        }
        out
    }

    /// Recomputes every cell from the dataset and Q-table and lists the
    /// cells that differ bitwise.
    pub fn verify(&self, analyzer: &Analyzer<'_>, dataset: &Dataset, rule: OutcomeRule) -> Result<Vec<String>> {
        let metrics: Vec<RadicalKind> = self.rows.iter().map(|r| r.metric.clone()).collect();
        let fresh = ranking_table(analyzer, dataset, &metrics, self.k, rule)?;
        let mut diffs = Vec::new();
        for (old, new) in self.rows.iter().zip(&fresh.rows) {
            if old.avg_length.to_bits() != new.avg_length.to_bits() {
                diffs.push(format!("{}: avg_length {} != {}", old.metric, old.avg_length, new.avg_length));
            }
            if old.avg_reward.to_bits() != new.avg_reward.to_bits() {
                diffs.push(format!("{}: avg_reward {} != {}", old.metric, old.avg_reward, new.avg_reward));
            }
            if old.top_k != new.top_k || old.selected_id != new.selected_id {
                diffs.push(format!("{}: top-k selection differs", old.metric));
            }
        }
        Ok(diffs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub deviation_step: usize,
    pub forced_action: usize,
    pub length: usize,
    pub reward: f64,
}

/// Counterfactual length/reward distributions with the original as a
/// separate reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub original_id: String,
    pub original_length: usize,
    pub original_reward: f64,
    pub rows: Vec<FigureRow>,
}

pub fn counterfactual_figure_data(set: &CounterfactualSet) -> Result<FigureData> {
    if set.rollouts.is_empty() {
        return Err(Error::EmptyCounterfactualSet);
    }
    Ok(FigureData {
        original_id: set.original_id.clone(),
        original_length: set.original.length,
        original_reward: set.original.total_reward,
        rows: set
            .rollouts
            .iter()
            .map(|r| FigureRow {
                deviation_step: r.deviation_step,
                forced_action: r.forced_action,
                length: r.outcome.length,
                reward: r.outcome.total_reward,
            })
            .collect(),
    })
}

impl FigureData {
    pub fn rollouts_csv(&self) -> String {
        let mut out = String::from("deviation_step,forced_action,length,reward\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.deviation_step, r.forced_action, r.length, r.reward);
        }
        out
    }

    pub fn original_csv(&self) -> String {
        format!(
            "trajectory,length,reward\n{},{},{}\n",
            self.original_id, self.original_length, self.original_reward
        )
    }

    /// Writes `<stem>-rollouts.csv` and `<stem>-original.csv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let rollouts = dir.join(format!("{stem}-rollouts.csv"));
        let original = dir.join(format!("{stem}-original.csv"));
        write_file(&rollouts, &self.rollouts_csv())?;
        write_file(&original, &self.original_csv())?;
        Ok((rollouts, original))
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_names_embed_parameters() {
        assert_eq!(
            artifact_name("ranking", "vgoal", 5, 7, "abcd", "csv"),
            "ranking-vgoal-k5-s7-abcd.csv"
        );
    }
}
