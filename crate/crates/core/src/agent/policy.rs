use crate::envsim::{ActionId, StateId};

use super::QTable;

/// Softmax policy over a frozen Q-table.
#[derive(Debug, Clone, Copy)]
pub struct PolicySnapshot<'q> {
    q: &'q QTable,
    temperature: f64,
}

impl<'q> PolicySnapshot<'q> {
    pub fn new(q: &'q QTable, temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        PolicySnapshot { q, temperature }
    }

    pub fn qtable(&self) -> &'q QTable {
        self.q
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// `π(·|s) = softmax(Q(s,·) / temperature)`.
    pub fn probs(&self, s: StateId) -> Vec<f64> {
        let row = self.q.row(s);
        let max = self.q.max(s);
        let weights: Vec<f64> = row
            .iter()
            .map(|&q| ((q - max) / self.temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    pub fn greedy(&self, s: StateId) -> ActionId {
        self.q.greedy(s)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self, s: StateId) -> f64 {
        entropy(&self.probs(s))
    }
}

pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// State values `V(s) = max_a Q(s, a)` with their global range.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueView {
    values: Vec<f64>,
    v_min: f64,
    v_max: f64,
}

impl ValueView {
    pub fn new(q: &QTable) -> Self {
        let values: Vec<f64> = (0..q.state_count()).map(|s| q.max(s)).collect();
        let v_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let v_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ValueView {
            values,
            v_min,
            v_max,
        }
    }

    pub fn value(&self, s: StateId) -> f64 {
        self.values[s]
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }
}
