//! State and trajectory importance.
//!
//! A step `(s, a)` scores `ΔQ(s) × R(s, a)` where `ΔQ(s)` is the spread
//! between the best and worst action values in `s` and `R` is one of the
//! radical terms in [`RadicalKind`]. A trajectory scores the arithmetic mean
//! of its step scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{PolicySnapshot, QTable, ValueView};
use crate::envsim::{ActionId, Env, StateId, Transition};
use crate::error::{Error, Result};
use crate::trajstore::Trajectory;

/// Below this magnitude `V(s_final)` is treated as zero and the V-goal
/// radical falls back to the V-normalization form.
pub const VGOAL_EPSILON: f64 = 1e-6;
/// Below this population standard deviation the naive radical is 0.
pub const SIGMA_EPSILON: f64 = 1e-12;

/// Reference distribution for the experimental KL radical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum KlReference {
    Uniform,
    PointMass(ActionId),
    /// Non-negative weights, normalized before use.
    Custom(Vec<f64>),
}

impl KlReference {
    pub fn distribution(&self, action_count: usize) -> Result<Vec<f64>> {
        match self {
            KlReference::Uniform => Ok(vec![1.0 / action_count as f64; action_count]),
            KlReference::PointMass(a) => {
                if *a >= action_count {
                    return Err(Error::Config(format!(
                        "point-mass action {a} out of range for {action_count} actions"
                    )));
                }
                let mut p = vec![0.0; action_count];
                p[*a] = 1.0;
                Ok(p)
            }
            KlReference::Custom(w) => {
                if w.len() != action_count {
                    return Err(Error::Config(format!(
                        "custom reference has {} weights, environment has {action_count} actions",
                        w.len()
                    )));
                }
                if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::Config("custom reference weights must be >= 0".into()));
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Config("custom reference weights sum to zero".into()));
                }
                Ok(w.iter().map(|x| x / total).collect())
            }
        }
    }
}

impl FromStr for KlReference {
    type Err = Error;

    /// `uniform`, `point:<action>` or `custom:<w0>,<w1>,…`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad KL reference {s:?}"));
        if s == "uniform" {
            return Ok(KlReference::Uniform);
        }
        if let Some(a) = s.strip_prefix("point:") {
            return a.parse().map(KlReference::PointMass).map_err(|_| bad());
        }
        if let Some(ws) = s.strip_prefix("custom:") {
            return ws
                .split(',')
                .map(|w| w.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(KlReference::Custom);
        }
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reference", rename_all = "snake_case")]
pub enum RadicalKind {
    /// `R ≡ 1`: plain ΔQ.
    Classic,
    /// `(Q(s,a) − μ_Q(s)) / σ_Q(s)`.
    NaiveNorm,
    /// `|Q(s,a) − (r + γ Q(s', greedy(s')))|`.
    BellmanError,
    /// `1 − H(π(·|s)) / ln|A|`.
    Entropy,
    /// `(V(s) − V_min) / (V_max − V_min)`.
    VNorm,
    /// `|V(s) / V(s_final)|`.
    VGoal,
    /// `KL(π(·|s) ‖ X)`. Experimental; construct through [`RadicalKind::kl`].
    Kl(KlReference),
}

impl RadicalKind {
    /// The six standard kinds, in report order.
    pub const STANDARD: [RadicalKind; 6] = [
        RadicalKind::Classic,
        RadicalKind::NaiveNorm,
        RadicalKind::BellmanError,
        RadicalKind::Entropy,
        RadicalKind::VNorm,
        RadicalKind::VGoal,
    ];

    pub fn kl(reference: KlReference, experimental: bool) -> Result<Self> {
        if !experimental {
            return Err(Error::Config(
                "the KL metric is experimental and needs --experimental".into(),
            ));
        }
        Ok(RadicalKind::Kl(reference))
    }

    /// Parses a CLI metric name; `kl` also needs a reference and the
    /// experimental flag.
    pub fn parse(name: &str, kl_reference: Option<&str>, experimental: bool) -> Result<Self> {
        let kind = match name {
            "classic" => RadicalKind::Classic,
            "naive" => RadicalKind::NaiveNorm,
            "bellman" => RadicalKind::BellmanError,
            "entropy" => RadicalKind::Entropy,
            "vnorm" => RadicalKind::VNorm,
            "vgoal" => RadicalKind::VGoal,
            "kl" => {
                let reference = kl_reference.ok_or_else(|| {
                    Error::Config("the KL metric needs --kl-reference".into())
                })?;
                return RadicalKind::kl(reference.parse()?, experimental);
            }
            other => return Err(Error::Config(format!("unknown metric {other:?}"))),
        };
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            RadicalKind::Classic => "classic",
            RadicalKind::NaiveNorm => "naive",
            RadicalKind::BellmanError => "bellman",
            RadicalKind::Entropy => "entropy",
            RadicalKind::VNorm => "vnorm",
            RadicalKind::VGoal => "vgoal",
            RadicalKind::Kl(_) => "kl",
        }
    }
}

impl fmt::Display for RadicalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A radical value and whether a degenerate-case guard produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radical {
    pub value: f64,
    pub fallback: bool,
}

impl Radical {
    fn plain(value: f64) -> Self {
        Radical {
            value,
            fallback: false,
        }
    }
}

pub fn delta_q(q: &QTable, s: StateId) -> f64 {
    q.max(s) - q.min(s)
}

pub fn radical_naive(q: &QTable, s: StateId, a: ActionId) -> Radical {
    let row = q.row(s);
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma < SIGMA_EPSILON {
        return Radical {
            value: 0.0,
            fallback: true,
        };
    }
    Radical::plain((row[a] - mean) / sigma)
}

/// TD error magnitude with the greedy next action; `terminal` drops the
/// bootstrap term.
pub fn radical_bellman(q: &QTable, t: &Transition, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { q.max(t.next_state) };
    (q.get(t.state, t.action) - (t.reward + q.gamma() * bootstrap)).abs()
}

/// `1 − H(p)/ln n` computed as `Σ p ln(p n) / ln n`, clamped to `[0, 1]`.
/// The two forms are equal; this one is exact at both endpoints.
pub fn entropy_confidence(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    let kl_uniform: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * (x * n).ln())
        .sum();
    (kl_uniform / n.ln()).clamp(0.0, 1.0)
}

pub fn radical_entropy(policy: &PolicySnapshot<'_>, s: StateId) -> f64 {
    entropy_confidence(&policy.probs(s))
}

pub fn radical_vnorm(values: &ValueView, s: StateId) -> Radical {
    let range = values.v_max() - values.v_min();
    if !(range > 0.0) {
        return Radical {
            value: 0.0,
            fallback: true,
        };
    }
    Radical::plain((values.value(s) - values.v_min()) / range)
}

pub fn radical_vgoal(values: &ValueView, s: StateId, s_final: StateId) -> Radical {
    let v_final = values.value(s_final);
    if v_final.abs() < VGOAL_EPSILON {
        return Radical {
            fallback: true,
            ..radical_vnorm(values, s)
        };
    }
    Radical::plain((values.value(s) / v_final).abs())
}

/// `KL(p ‖ reference)` in nats.
pub fn kl_divergence(p: &[f64], reference: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (a, (&pi, &xi)) in p.iter().zip(reference).enumerate() {
        if pi > 0.0 {
            if xi <= 0.0 {
                return Err(Error::UndefinedKl { action: a });
            }
            total += pi * (pi / xi).ln();
        }
    }
    Ok(total)
}

pub fn radical_kl(policy: &PolicySnapshot<'_>, s: StateId, reference: &KlReference) -> Result<f64> {
    let p = policy.probs(s);
    kl_divergence(&p, &reference.distribution(p.len())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepImportance {
    pub delta_q: f64,
    pub radical: f64,
    pub product: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceBreakdown {
    pub trajectory_id: String,
    pub kind: RadicalKind,
    pub steps: Vec<StepImportance>,
    pub i_tau: f64,
    /// State the V-goal radical is anchored to (the last state acted in).
    pub final_state: StateId,
}

impl ImportanceBreakdown {
    pub fn fallback_count(&self) -> usize {
        self.steps.iter().filter(|s| s.fallback).count()
    }
}

/// Scores transitions against one frozen Q-table.
#[derive(Debug, Clone)]
pub struct Analyzer<'a> {
    env: &'a Env,
    q: &'a QTable,
    policy: PolicySnapshot<'a>,
    values: ValueView,
}

impl<'a> Analyzer<'a> {
    pub fn new(env: &'a Env, q: &'a QTable, temperature: f64) -> Self {
        Analyzer {
            env,
            q,
            policy: PolicySnapshot::new(q, temperature),
            values: ValueView::new(q),
        }
    }

    pub fn env(&self) -> &'a Env {
        self.env
    }

    pub fn qtable(&self) -> &'a QTable {
        self.q
    }

    pub fn policy(&self) -> &PolicySnapshot<'a> {
        &self.policy
    }

    pub fn values(&self) -> &ValueView {
        &self.values
    }

    pub fn radical(&self, kind: &RadicalKind, t: &Transition, s_final: StateId) -> Result<Radical> {
        Ok(match kind {
            RadicalKind::Classic => Radical::plain(1.0),
            RadicalKind::NaiveNorm => radical_naive(self.q, t.state, t.action),
            RadicalKind::BellmanError => {
                let terminal = self.env.transition(t.state, t.action).terminal;
                Radical::plain(radical_bellman(self.q, t, terminal))
            }
            RadicalKind::Entropy => Radical::plain(radical_entropy(&self.policy, t.state)),
            RadicalKind::VNorm => radical_vnorm(&self.values, t.state),
            RadicalKind::VGoal => radical_vgoal(&self.values, t.state, s_final),
            RadicalKind::Kl(reference) => {
                Radical::plain(radical_kl(&self.policy, t.state, reference)?)
            }
        })
    }

    /// `ΔQ(s) × R(s, a)` for one transition.
    pub fn step_importance(
        &self,
        kind: &RadicalKind,
        t: &Transition,
        s_final: StateId,
    ) -> Result<StepImportance> {
        let dq = delta_q(self.q, t.state);
        let r = self.radical(kind, t, s_final)?;
        Ok(StepImportance {
            delta_q: dq,
            radical: r.value,
            product: dq * r.value,
            fallback: r.fallback,
        })
    }

    pub fn trajectory_importance(
        &self,
        traj: &Trajectory,
        kind: &RadicalKind,
    ) -> Result<ImportanceBreakdown> {
        let final_state = traj
            .final_state()
            .ok_or_else(|| Error::EmptyTrajectory(traj.id.clone()))?;
        let steps = traj
            .transitions
            .iter()
            .map(|t| self.step_importance(kind, t, final_state))
            .collect::<Result<Vec<_>>>()?;
        let i_tau = mean_product(&steps);
        Ok(ImportanceBreakdown {
            trajectory_id: traj.id.clone(),
            kind: kind.clone(),
            steps,
            i_tau,
            final_state,
        })
    }

    pub fn score(&self, traj: &Trajectory, kind: &RadicalKind) -> Result<f64> {
        self.trajectory_importance(traj, kind).map(|b| b.i_tau)
    }
}

/// Mean of step products, summed in step order.
pub fn mean_product(steps: &[StepImportance]) -> f64 {
    steps.iter().fold(0.0, |acc, s| acc + s.product) / steps.len() as f64
}
