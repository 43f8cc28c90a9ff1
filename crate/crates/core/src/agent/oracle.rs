use crate::envsim::Env;
use crate::error::{Error, Result};

use super::QTable;

/// Exact action values by Jacobi value iteration over the full transition
/// table. Stops once the sup-norm change of a sweep drops below
/// `tolerance`; the returned table's Bellman residual is then at most
/// `gamma · tolerance`.
pub fn value_iteration_oracle(
    env: &Env,
    config_hash: &str,
    gamma: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<QTable> {
    let spec = env.spec();
    let mut q = QTable::zeros(spec, config_hash, gamma);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        let next = bellman_backup(env, &q);
        residual = sup_diff(&q, &next);
        q = next;
        if residual < tolerance {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// `max |T Q − Q|` under the environment's exact dynamics.
pub fn bellman_residual(env: &Env, q: &QTable) -> f64 {
    sup_diff(q, &bellman_backup(env, q))
}

fn bellman_backup(env: &Env, q: &QTable) -> QTable {
    let mut next = q.clone();
    for s in 0..q.state_count() {
        for a in 0..q.action_count() {
            let out = env.transition(s, a);
            let bootstrap = if out.terminal { 0.0 } else { q.max(out.next_state) };
            next.set(s, a, out.reward + q.gamma() * bootstrap);
        }
    }
    next
}

fn sup_diff(a: &QTable, b: &QTable) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
