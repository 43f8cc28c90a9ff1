use crate::config::LanderConfig;
use crate::error::{Error, Result};

use super::discretizer::Discretizer;
use super::{ActionId, EnvSpec, StateId, StepOutcome};

pub const NOOP: ActionId = 0;
pub const THRUST: ActionId = 1;

pub const ACTION_NAMES: [&str; 2] = ["noop", "thrust"];

pub const STEP_REWARD: f64 = -0.1;
pub const LANDING_REWARD: f64 = 100.0;
pub const CRASH_REWARD: f64 = -100.0;

/// One-dimensional lander over a discretized (altitude, velocity) grid.
///
/// The physical state of a cell is its lower-edge representative, so the
/// process is Markov in the cell id and every transition can be
/// enumerated. Per step: `v' = v + thrust·[a = thrust] − gravity`,
/// `h' = h + v'`. Altitude bin 0 is the ground: entering it is a
/// touchdown worth +100 when `|v'| ≤ safe_speed` and −100 otherwise.
/// Acting from a ground cell (a degenerate start) evaluates touchdown with
/// the current velocity. All other steps cost −0.1.
#[derive(Debug, Clone)]
pub struct MiniLander {
    cfg: LanderConfig,
    discretizer: Discretizer,
    start: StateId,
    spec: EnvSpec,
}

impl MiniLander {
    pub fn new(cfg: &LanderConfig) -> Result<Self> {
        let positive = [
            ("gravity", cfg.gravity),
            ("thrust", cfg.thrust),
            ("safe_speed", cfg.safe_speed),
            ("max_altitude", cfg.max_altitude),
            ("max_speed", cfg.max_speed),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::EnvConstruction(format!("{name} must be positive, got {value}")));
            }
        }
        if cfg.thrust <= cfg.gravity {
            return Err(Error::EnvConstruction("thrust must exceed gravity".into()));
        }
        if cfg.bins_h < 4 || cfg.bins_v < 4 {
            return Err(Error::EnvConstruction("need at least 4 bins per dimension".into()));
        }
        if !cfg.start_altitude.is_finite() || !cfg.start_velocity.is_finite() {
            return Err(Error::EnvConstruction("start state must be finite".into()));
        }
        let discretizer = Discretizer::new(vec![
            Discretizer::uniform_edges(0.0, cfg.max_altitude, cfg.bins_h),
            Discretizer::uniform_edges(-cfg.max_speed, cfg.max_speed, cfg.bins_v),
        ])?;
        let start = discretizer.discretize(&[cfg.start_altitude, cfg.start_velocity])?;
        let spec = EnvSpec::new(
            "mini-lander".to_string(),
            discretizer.cell_count(),
            2,
            cfg.max_steps,
            (CRASH_REWARD, LANDING_REWARD),
        )?;
        Ok(MiniLander {
            cfg: cfg.clone(),
            discretizer,
            start,
            spec,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn config(&self) -> &LanderConfig {
        &self.cfg
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    /// `(altitude, velocity)` representative of a cell.
    pub fn decode(&self, s: StateId) -> (f64, f64) {
        let rep = self.discretizer.representative(s);
        (rep[0], rep[1])
    }

    pub fn is_ground(&self, s: StateId) -> bool {
        self.discretizer.bins_of(s)[0] == 0
    }

    fn touchdown(&self, velocity: f64) -> f64 {
        if velocity.abs() <= self.cfg.safe_speed {
            LANDING_REWARD
        } else {
            CRASH_REWARD
        }
    }

    pub fn transition(&self, s: StateId, action: ActionId) -> StepOutcome {
        let (h, v) = self.decode(s);
        if self.is_ground(s) {
            return StepOutcome {
                next_state: s,
                reward: self.touchdown(v),
                terminal: true,
            };
        }
        let accel = if action == THRUST { self.cfg.thrust } else { 0.0 } - self.cfg.gravity;
        let v_next = v + accel;
        let h_next = h + v_next;
        let next_state = self
            .discretizer
            .discretize(&[h_next, v_next])
            .expect("two-dimensional observation");
        if self.is_ground(next_state) {
            StepOutcome {
                next_state,
                reward: self.touchdown(v_next),
                terminal: true,
            }
        } else {
            StepOutcome {
                next_state,
                reward: STEP_REWARD,
                terminal: false,
            }
        }
    }

    /// Airborne cells.
    pub fn open_cells(&self) -> Vec<StateId> {
        (0..self.discretizer.cell_count())
            .filter(|&s| !self.is_ground(s))
            .collect()
    }
}
