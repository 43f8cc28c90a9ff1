use rand::Rng;

use crate::config::TrainConfig;
use crate::envsim::{Env, Episode};
use crate::error::Result;
use crate::seed;

use super::QTable;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Fraction of the training run completed when the snapshot was taken.
    pub fraction: f64,
    pub qtable: QTable,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub qtable: QTable,
    pub checkpoints: Vec<Checkpoint>,
}

/// Episode index after which the checkpoint for `fraction` is taken.
fn checkpoint_episode(fraction: f64, episodes: usize) -> usize {
    ((fraction * episodes as f64).round() as usize).clamp(episodes.min(1), episodes)
}

/// Tabular Q-learning with a linearly decaying ε-greedy behaviour policy.
///
/// With zero episodes the returned tables are all zeros. Reproducible from
/// `seed`: all draws come from the `"train"` stage stream.
pub fn train(env: &Env, cfg: &TrainConfig, config_hash: &str, seed: u64) -> Result<TrainOutput> {
    cfg.validate()?;
    let spec = env.spec();
    let mut q = QTable::zeros(spec, config_hash, cfg.gamma);
    let mut rng = seed::stage_rng(seed, "train");
    let open = env.open_states();

    let mut fractions = cfg.checkpoints.clone();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let mut checkpoints = Vec::with_capacity(fractions.len());
    let mut pending = fractions.iter().peekable();
    let decay_episodes = (cfg.epsilon_decay_fraction * cfg.episodes as f64).max(1.0);

    for episode in 0..cfg.episodes {
        let progress = (episode as f64 / decay_episodes).min(1.0);
        let epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress;
        let start = if cfg.exploring_starts && !open.is_empty() {
            open[rng.random_range(0..open.len())]
        } else {
            env.start_state()
        };
        let mut ep = Episode::resume(env, start, 0);
        while !ep.is_done() {
            let s = ep.state();
            let a = if rng.random::<f64>() < epsilon {
                rng.random_range(0..spec.action_count)
            } else {
                q.greedy(s)
            };
            let t = ep.step(a)?;
            let terminal = env.transition(s, a).terminal;
            let bootstrap = if terminal { 0.0 } else { q.max(t.next_state) };
            let target = t.reward + cfg.gamma * bootstrap;
            let old = q.get(s, a);
            q.set(s, a, old + cfg.alpha * (target - old));
            q.record_visit(s, a);
        }
        while let Some(&&f) = pending.peek() {
            if checkpoint_episode(f, cfg.episodes) != episode + 1 {
                break;
            }
            checkpoints.push(Checkpoint {
                fraction: f,
                qtable: q.clone(),
            });
            pending.next();
        }
    }
    // zero-episode runs and fractions that round to episode 0
    for &f in pending {
        checkpoints.push(Checkpoint {
            fraction: f,
            qtable: q.clone(),
        });
    }
    Ok(TrainOutput {
        qtable: q,
        checkpoints,
    })
}
