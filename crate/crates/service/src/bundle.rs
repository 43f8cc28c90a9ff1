use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use trajex_core::agent::QTable;
use trajex_core::config::short_hash;
use trajex_core::counterfactual::{self, CounterfactualRollout};
use trajex_core::envsim::{ActionId, Env};
use trajex_core::importance::{Analyzer, ImportanceBreakdown, RadicalKind};
use trajex_core::ranking::{rank, OutcomeRule, RankingReport};
use trajex_core::trajstore::Dataset;

pub const CACHE_CAPACITY: usize = 256;

type CacheKey = (String, usize, ActionId);

/// Everything the service reads. Built once at startup and never mutated;
/// the counterfactual cache is the only shared mutable state.
pub struct Bundle {
    env: Env,
    config_hash: String,
    qtable: QTable,
    dataset: Dataset,
    temperature: f64,
    seed: u64,
    rankings: BTreeMap<String, RankingReport>,
    /// `scores[metric][dataset index]`
    scores: BTreeMap<String, Vec<f64>>,
    hash: String,
    cache: Mutex<LruCache<CacheKey, Arc<CounterfactualRollout>>>,
}

impl Bundle {
    /// Checks the dataset against the env and Q-table, replays every
    /// trajectory, then ranks the dataset under every standard metric.
    pub fn new(
        env: Env,
        config_hash: &str,
        qtable: QTable,
        dataset: Dataset,
        temperature: f64,
        k: usize,
        seed: u64,
    ) -> trajex_core::Result<Self> {
        qtable.check_env(env.spec(), config_hash)?;
        dataset.validate()?;
        dataset.check_against(&env, config_hash, &qtable)?;
        for t in &dataset.trajectories {
            t.replay_check(&env)?;
        }
        let rule = OutcomeRule::for_env(&env);
        let analyzer = Analyzer::new(&env, &qtable, temperature);
        let mut rankings = BTreeMap::new();
        let mut scores = BTreeMap::new();
        for kind in RadicalKind::STANDARD.iter() {
            let report = rank(&analyzer, &dataset, kind, k, rule)?;
            let mut by_index = vec![0.0; dataset.trajectories.len()];
            for e in &report.entries {
                by_index[e.index] = e.score;
            }
            scores.insert(kind.name().to_string(), by_index);
            rankings.insert(kind.name().to_string(), report);
        }
        let mut identity = Vec::new();
        dataset
            .write_to(&mut identity)
            .expect("writing to a Vec cannot fail");
        identity.extend_from_slice(qtable.content_hash().as_bytes());
        identity.extend_from_slice(config_hash.as_bytes());
        identity.extend_from_slice(&seed.to_le_bytes());
        identity.extend_from_slice(&temperature.to_le_bytes());
        identity.extend_from_slice(&(k as u64).to_le_bytes());
        let hash = short_hash(&identity);
        Ok(Bundle {
            env,
            config_hash: config_hash.to_string(),
            qtable,
            dataset,
            temperature,
            seed,
            rankings,
            scores,
            hash,
            cache: Mutex::new(LruCache::new(NonZeroUsize::new(CACHE_CAPACITY).unwrap())),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn qtable(&self) -> &QTable {
        &self.qtable
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn ranking(&self, metric: &str) -> Option<&RankingReport> {
        self.rankings.get(metric)
    }

    pub fn metrics(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn score(&self, metric: &str, index: usize) -> Option<f64> {
        self.scores.get(metric).and_then(|s| s.get(index)).copied()
    }

    pub fn breakdown(&self, index: usize, kind: &RadicalKind) -> trajex_core::Result<ImportanceBreakdown> {
        Analyzer::new(&self.env, &self.qtable, self.temperature)
            .trajectory_importance(&self.dataset.trajectories[index], kind)
    }

    /// The same rollout `trajex cf` writes for this (id, step, action).
    pub fn counterfactual(
        &self,
        id: &str,
        step: usize,
        action: ActionId,
    ) -> trajex_core::Result<Arc<CounterfactualRollout>> {
        let key = (id.to_string(), step, action);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let target = self.dataset.get(id)?;
        let seed = counterfactual::rollout_seed(self.seed);
        let r = Arc::new(counterfactual::rollout(&self.env, &self.qtable, target, step, action, seed)?);
        self.cache.lock().unwrap().put(key, r.clone());
        Ok(r)
    }

    pub fn cached_counterfactuals(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}
