//! Deterministic environments.
//!
//! Every environment is a pure transition function over discrete state ids,
//! `transition(s, a) -> (s', r, terminal)`. [`Episode`] layers the step
//! counter and the step cap on top of it.

pub mod discretizer;
pub mod grid;
pub mod lander;

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::error::{Error, Result};

pub use discretizer::Discretizer;
pub use grid::GridWorld;
pub use lander::MiniLander;

pub type StateId = usize;
pub type ActionId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_count: usize,
    pub action_count: usize,
    pub max_steps: usize,
    pub reward_range: (f64, f64),
}

impl EnvSpec {
    pub fn new(
        name: String,
        state_count: usize,
        action_count: usize,
        max_steps: usize,
        reward_range: (f64, f64),
    ) -> Result<Self> {
        if state_count == 0 {
            return Err(Error::EnvConstruction("state_count must be positive".into()));
        }
        if action_count < 2 {
            return Err(Error::EnvConstruction(
                "at least two actions are needed for counterfactuals".into(),
            ));
        }
        if max_steps == 0 {
            return Err(Error::EnvConstruction("max_steps must be at least 1".into()));
        }
        Ok(EnvSpec {
            name,
            state_count,
            action_count,
            max_steps,
            reward_range,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    pub done: bool,
}

impl Transition {
    /// Bitwise comparison, so `-0.0` and `0.0` rewards differ.
    pub fn bit_eq(&self, other: &Transition) -> bool {
        self.state == other.state
            && self.action == other.action
            && self.reward.to_bits() == other.reward.to_bits()
            && self.next_state == other.next_state
            && self.done == other.done
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateId,
    pub reward: f64,
    pub terminal: bool,
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    /// Goal reached or safe landing.
    Success,
    /// Crash landing.
    Failure,
    /// Step cap reached without a terminal transition.
    Cap,
    /// The transition list does not end the episode.
    Unfinished,
}

/// Rendering data for the explorer UI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    Grid {
        width: usize,
        height: usize,
        start: StateId,
        goal: StateId,
        walls: Vec<StateId>,
        action_names: Vec<String>,
    },
    Lander {
        altitude_edges: Vec<f64>,
        velocity_edges: Vec<f64>,
        start: StateId,
        safe_speed: f64,
        action_names: Vec<String>,
    },
}

#[derive(Debug, Clone)]
pub enum Env {
    Grid(GridWorld),
    Lander(MiniLander),
}

impl Env {
    pub fn from_config(cfg: &EnvConfig) -> Result<Self> {
        match cfg {
            EnvConfig::Grid(g) => Ok(Env::Grid(GridWorld::new(g)?)),
            EnvConfig::Lander(l) => Ok(Env::Lander(MiniLander::new(l)?)),
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Env::Grid(g) => g.spec(),
            Env::Lander(l) => l.spec(),
        }
    }

    pub fn start_state(&self) -> StateId {
        match self {
            Env::Grid(g) => g.start(),
            Env::Lander(l) => l.start(),
        }
    }

    pub fn transition(&self, s: StateId, a: ActionId) -> StepOutcome {
        match self {
            Env::Grid(g) => g.transition(s, a),
            Env::Lander(l) => l.transition(s, a),
        }
    }

    /// Non-terminal states an episode may be started from.
    pub fn open_states(&self) -> Vec<StateId> {
        match self {
            Env::Grid(g) => g.open_cells(),
            Env::Lander(l) => l.open_cells(),
        }
    }

    pub fn action_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Env::Grid(_) => &grid::ACTION_NAMES,
            Env::Lander(_) => &lander::ACTION_NAMES,
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn layout(&self) -> Layout {
        match self {
            Env::Grid(g) => Layout::Grid {
                width: g.width(),
                height: g.height(),
                start: g.start(),
                goal: g.goal(),
                walls: g.walls().iter().copied().collect(),
                action_names: self.action_names(),
            },
            Env::Lander(l) => Layout::Lander {
                altitude_edges: l.discretizer().edges(0).to_vec(),
                velocity_edges: l.discretizer().edges(1).to_vec(),
                start: l.start(),
                safe_speed: l.config().safe_speed,
                action_names: self.action_names(),
            },
        }
    }

    /// Classifies the end of a recorded transition list.
    pub fn terminal_kind(&self, transitions: &[Transition]) -> TerminalKind {
        let Some(last) = transitions.last() else {
            return TerminalKind::Unfinished;
        };
        if !last.done {
            return TerminalKind::Unfinished;
        }
        let out = self.transition(last.state, last.action);
        if !out.terminal {
            return TerminalKind::Cap;
        }
        match self {
            Env::Grid(_) => TerminalKind::Success,
            Env::Lander(_) if last.reward > 0.0 => TerminalKind::Success,
            Env::Lander(_) => TerminalKind::Failure,
        }
    }

    pub fn episode(&self) -> Episode<'_> {
        Episode::new(self)
    }
}

/// A running episode: current state plus the step counter.
#[derive(Debug, Clone)]
pub struct Episode<'e> {
    env: &'e Env,
    state: StateId,
    steps: usize,
    done: bool,
}

impl<'e> Episode<'e> {
    pub fn new(env: &'e Env) -> Self {
        Self::resume(env, env.start_state(), 0)
    }

    /// Continues an episode from `state` after `steps` steps have been taken.
    pub fn resume(env: &'e Env, state: StateId, steps: usize) -> Self {
        Episode {
            env,
            state,
            steps,
            done: steps >= env.spec().max_steps,
        }
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: ActionId) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeFinished { steps: self.steps });
        }
        let action_count = self.env.spec().action_count;
        if action >= action_count {
            return Err(Error::InvalidAction {
                action,
                action_count,
            });
        }
        let out = self.env.transition(self.state, action);
        self.steps += 1;
        self.done = out.terminal || self.steps >= self.env.spec().max_steps;
        let t = Transition {
            state: self.state,
            action,
            reward: out.reward,
            next_state: out.next_state,
            done: self.done,
        };
        self.state = out.next_state;
        Ok(t)
    }

    /// Steps with `policy` until the episode ends.
    pub fn run_with<F>(&mut self, mut policy: F) -> Vec<Transition>
    where
        F: FnMut(StateId) -> ActionId,
    {
        let mut out = Vec::new();
        while !self.done {
            let a = policy(self.state);
            out.push(self.step(a).expect("policy returned an invalid action"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvConfig;

    fn env(name: &str) -> Env {
        Env::from_config(&EnvConfig::preset(name).unwrap()).unwrap()
    }

    #[test]
    fn grid_step_right_from_origin() {
        let e = env("grid3");
        let mut ep = e.episode();
        let t = ep.step(grid::RIGHT).unwrap();
        assert_eq!(
            t,
            Transition { state: 0, action: grid::RIGHT, reward: -1.0, next_state: 1, done: false }
        );
        assert_eq!(ep.steps(), 1);
    }

    #[test]
    fn goal_adjacent_step_finishes() {
        let e = env("grid3");
        let mut ep = Episode::resume(&e, 5, 3);
        assert!(ep.step(grid::DOWN).unwrap().done);
        assert!(matches!(ep.step(grid::DOWN), Err(Error::EpisodeFinished { steps: 4 })));
    }

    #[test]
    fn invalid_action_differs_from_finished() {
        let e = env("grid3");
        let mut ep = e.episode();
        assert!(matches!(
            ep.step(4),
            Err(Error::InvalidAction { action: 4, action_count: 4 })
        ));
        assert!(!ep.is_done());
    }

    #[test]
    fn step_cap_ends_episode() {
        let e = env("grid3");
        let mut ep = e.episode();
        let ts = ep.run_with(|_| grid::UP);
        assert_eq!(ts.len(), e.spec().max_steps);
        assert!(ts.last().unwrap().done);
        assert_eq!(e.terminal_kind(&ts), TerminalKind::Cap);
    }

    #[test]
    fn always_noop_lander_crashes() {
        let e = env("lander");
        let ts = e.episode().run_with(|_| lander::NOOP);
        assert_eq!(ts.last().unwrap().reward, lander::CRASH_REWARD);
        assert_eq!(e.terminal_kind(&ts), TerminalKind::Failure);
    }

    #[test]
    fn spec_rejects_single_action() {
        assert!(EnvSpec::new("x".into(), 3, 1, 10, (0.0, 0.0)).is_err());
        assert!(EnvSpec::new("x".into(), 3, 2, 0, (0.0, 0.0)).is_err());
    }
}
