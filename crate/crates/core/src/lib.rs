//! Trajectory-level explanations for tabular reinforcement-learning agents.
//!
//! The pipeline trains a tabular Q-learning agent in one of the built-in
//! deterministic environments, collects a mixed-quality trajectory dataset
//! from training checkpoints, scores every trajectory by the mean of
//! `ΔQ(s) × R(s, a)` for a chosen radical term `R`, picks the best-outcome
//! trajectory among the top-k, and contrasts it with forbid-one-action
//! counterfactual rollouts.
//!
//! Module map:
//!
//! - [`envsim`]: deterministic environments and the observation discretizer
//! - [`agent`]: Q-table, policies, Q-learning and the value-iteration oracle
//! - [`trajstore`]: trajectory collection and `.traj.jsonl` persistence
//! - [`importance`]: ΔQ, the radical terms and trajectory importance
//! - [`ranking`]: top-k ranking and explanation-target selection
//! - [`counterfactual`]: counterfactual rollouts and contrastive summaries
//! - [`report`]: ranking tables and figure data files

pub mod agent;
pub mod config;
pub mod counterfactual;
pub mod envsim;
pub mod error;
pub mod importance;
pub mod ranking;
pub mod report;
pub mod seed;
pub mod trajstore;

pub use error::{Error, ErrorCategory, Result};
