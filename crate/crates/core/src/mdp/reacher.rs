use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clamp_action, ContinuousEnv, StepOutcome};
use crate::{Error, Result};

const DT: f64 = 0.05;
const DAMPING: f64 = 0.5;
const MAX_FORCE: f64 = 1.0;

/// Planar point mass pushed towards the origin. State is
/// `[x, y, vx, vy]`, action is a force in `[-1, 1]^2`; the reward is
/// `-(|p|^2 + 0.1 |v|^2 + 0.001 |u|^2)` of the current state.
#[derive(Clone, Debug)]
pub struct PointMassReacher {
    state: [f64; 4],
    episode_steps: usize,
    low: [f64; 2],
    high: [f64; 2],
    clamp_events: u64,
}

impl PointMassReacher {
    pub fn new(episode_steps: usize) -> Self {
        PointMassReacher {
            state: [0.0; 4],
            episode_steps,
            low: [-MAX_FORCE; 2],
            high: [MAX_FORCE; 2],
            clamp_events: 0,
        }
    }
}

impl Default for PointMassReacher {
    fn default() -> Self {
        Self::new(200)
    }
}

impl ContinuousEnv for PointMassReacher {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_low(&self) -> &[f64] {
        &self.low
    }

    fn action_high(&self) -> &[f64] {
        &self.high
    }

    fn max_episode_steps(&self) -> usize {
        self.episode_steps
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            0.0,
            0.0,
        ];
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != 2 || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Diverged(format!("reacher action {action:?}")));
        }
        let (u, clamped) = clamp_action(action, &self.low, &self.high);
        if clamped {
            self.clamp_events += 1;
        }
        let [x, y, vx, vy] = self.state;
        let reward =
            -(x * x + y * y + 0.1 * (vx * vx + vy * vy) + 0.001 * (u[0] * u[0] + u[1] * u[1]));
        let nvx = vx + DT * (u[0] - DAMPING * vx);
        let nvy = vy + DT * (u[1] - DAMPING * vy);
        let next = [x + DT * nvx, y + DT * nvy, nvx, nvy];
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("reacher state {next:?}")));
        }
        self.state = next;
        Ok(StepOutcome {
            next_state: next.to_vec(),
            reward,
            done: false,
            clamped,
        })
    }

    fn clamp_events(&self) -> u64 {
        self.clamp_events
    }
}
