use std::collections::{BTreeSet, VecDeque};

use crate::config::GridConfig;
use crate::error::{Error, Result};

use super::{ActionId, EnvSpec, StateId, StepOutcome};

pub const UP: ActionId = 0;
pub const DOWN: ActionId = 1;
pub const LEFT: ActionId = 2;
pub const RIGHT: ActionId = 3;

pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];

/// Deterministic 4-connected grid. Cells are `(x, y)` with `y` growing
/// downwards; state id is `y * width + x`. Every step costs −1, bumping a
/// wall or the boundary leaves the agent in place, and reaching the goal
/// ends the episode.
#[derive(Debug, Clone)]
pub struct GridWorld {
    width: usize,
    height: usize,
    start: StateId,
    goal: StateId,
    walls: BTreeSet<StateId>,
    spec: EnvSpec,
}

impl GridWorld {
    pub fn new(cfg: &GridConfig) -> Result<Self> {
        let GridConfig {
            width,
            height,
            start,
            goal,
            ref walls,
            max_steps,
        } = *cfg;
        if width == 0 || height == 0 {
            return Err(Error::EnvConstruction("grid dimensions must be positive".into()));
        }
        if width * height < 2 {
            return Err(Error::EnvConstruction("grid needs at least two cells".into()));
        }
        let in_bounds = |c: [usize; 2]| c[0] < width && c[1] < height;
        for (what, cell) in [("start", start), ("goal", goal)] {
            if !in_bounds(cell) {
                return Err(Error::EnvConstruction(format!(
                    "{what} {cell:?} outside {width}x{height} grid"
                )));
            }
        }
        if start == goal {
            return Err(Error::EnvConstruction("start equals goal".into()));
        }
        let mut wall_ids = BTreeSet::new();
        for &w in walls {
            if !in_bounds(w) {
                return Err(Error::EnvConstruction(format!("wall {w:?} outside grid")));
            }
            if w == start || w == goal {
                return Err(Error::EnvConstruction(format!("wall {w:?} covers start or goal")));
            }
            wall_ids.insert(w[1] * width + w[0]);
        }
        let grid = GridWorld {
            width,
            height,
            start: start[1] * width + start[0],
            goal: goal[1] * width + goal[0],
            walls: wall_ids,
            spec: EnvSpec::new(
                format!("grid{width}x{height}"),
                width * height,
                4,
                max_steps,
                (-1.0, -1.0),
            )?,
        };
        if !grid.flood_fill(grid.start).contains(&grid.goal) {
            return Err(Error::EnvConstruction("goal unreachable from start".into()));
        }
        Ok(grid)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn goal(&self) -> StateId {
        self.goal
    }

    pub fn walls(&self) -> &BTreeSet<StateId> {
        &self.walls
    }

    pub fn is_wall(&self, s: StateId) -> bool {
        self.walls.contains(&s)
    }

    pub fn coords(&self, s: StateId) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    /// Cell reached by `action` from `s`, ignoring the goal.
    pub fn neighbor(&self, s: StateId, action: ActionId) -> StateId {
        let (x, y) = self.coords(s);
        let (nx, ny) = match action {
            UP if y > 0 => (x, y - 1),
            DOWN if y + 1 < self.height => (x, y + 1),
            LEFT if x > 0 => (x - 1, y),
            RIGHT if x + 1 < self.width => (x + 1, y),
            _ => (x, y),
        };
        let next = ny * self.width + nx;
        if self.is_wall(next) {
            s
        } else {
            next
        }
    }

    pub fn transition(&self, s: StateId, action: ActionId) -> StepOutcome {
        if s == self.goal || self.is_wall(s) {
            // absorbing; never acted in during an episode
            return StepOutcome {
                next_state: s,
                reward: 0.0,
                terminal: true,
            };
        }
        let next = self.neighbor(s, action);
        StepOutcome {
            next_state: next,
            reward: -1.0,
            terminal: next == self.goal,
        }
    }

    /// Non-wall, non-goal cells.
    pub fn open_cells(&self) -> Vec<StateId> {
        (0..self.width * self.height)
            .filter(|&s| s != self.goal && !self.is_wall(s))
            .collect()
    }

    fn flood_fill(&self, from: StateId) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            for a in 0..4 {
                let n = self.neighbor(s, a);
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }
}
