use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ContinuousEnv, StepOutcome};
use crate::{Error, Result};

/// Swing-up pendulum constants. Angle 0 is upright.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub episode_steps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            episode_steps: 200,
        }
    }
}

/// Maps an angle into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

fn step_with(params: &PendulumParams, state: [f64; 2], torque: f64) -> Result<([f64; 2], f64)> {
    if !(state[0].is_finite() && state[1].is_finite()) {
        return Err(Error::Diverged(format!("pendulum state {state:?}")));
    }
    if !torque.is_finite() {
        return Err(Error::Diverged(format!("pendulum torque {torque}")));
    }
    let PendulumParams {
        gravity: g,
        mass: m,
        length: l,
        dt,
        max_torque,
        max_speed,
        ..
    } = *params;
    let u = torque.clamp(-max_torque, max_torque);
    let [angle, speed] = state;
    let wrapped = wrap_angle(angle);
    let reward = -(wrapped * wrapped + 0.1 * speed * speed + 0.001 * u * u);

    // semi-implicit Euler: velocity first, then position with the new velocity
    let accel = 3.0 * g / (2.0 * l) * angle.sin() + 3.0 / (m * l * l) * u;
    let new_speed = (speed + accel * dt).clamp(-max_speed, max_speed);
    let new_angle = wrap_angle(angle + new_speed * dt);
    Ok(([new_angle, new_speed], reward))
}

/// One pendulum step with the default constants. Returns the next
/// `(angle, angular velocity)` and the reward of the current state.
pub fn pendulum_step(state: [f64; 2], torque: f64) -> Result<([f64; 2], f64)> {
    step_with(&PendulumParams::default(), state, torque)
}

#[derive(Clone, Debug)]
pub struct Pendulum {
    params: PendulumParams,
    state: [f64; 2],
    low: [f64; 1],
    high: [f64; 1],
    clamp_events: u64,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Pendulum {
            params,
            state: [0.0, 0.0],
            low: [-params.max_torque],
            high: [params.max_torque],
            clamp_events: 0,
        }
    }

    pub fn state(&self) -> [f64; 2] {
        self.state
    }

    pub fn set_state(&mut self, state: [f64; 2]) {
        self.state = [wrap_angle(state[0]), state[1]];
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumParams::default())
    }
}

impl ContinuousEnv for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_low(&self) -> &[f64] {
        &self.low
    }

    fn action_high(&self) -> &[f64] {
        &self.high
    }

    fn max_episode_steps(&self) -> usize {
        self.params.episode_steps
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = wrap_angle(rng.random_range(-PI..PI));
        let speed = rng.random_range(-1.0..1.0);
        self.state = [angle, speed];
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let torque = action.first().copied().unwrap_or(f64::NAN);
        let clamped = torque.is_finite() && torque.clamp(self.low[0], self.high[0]) != torque;
        if clamped {
            self.clamp_events += 1;
        }
        let (next, reward) = step_with(&self.params, self.state, torque)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn upright_is_an_equilibrium() {
        let (next, reward) = pendulum_step([0.0, 0.0], 0.0).unwrap();
        assert_eq!(next, [0.0, 0.0]);
        assert_eq!(reward, 0.0);
    }

    #[test]
    fn hanging_reward() {
        let (_, reward) = pendulum_step([PI, 0.0], 0.0).unwrap();
        assert!((reward + PI * PI).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_integrator() {
        // explicit one-step recomputation with the literal constants
        let (th, w, u) = (0.1f64, 0.0f64, 0.0f64);
        let w_next = w + (3.0 * 10.0 / 2.0 * th.sin() + 3.0 * u) * 0.05;
        let th_next = th + w_next * 0.05;
        let (next, reward) = pendulum_step([th, w], u).unwrap();
        assert!((next[1] - w_next).abs() < 1e-15);
        assert!((next[0] - th_next).abs() < 1e-15);
        assert!((reward + 0.01).abs() < 1e-15);
    }

    #[test]
    fn speed_and_torque_are_limited() {
        let (next, reward) = pendulum_step([1.0, 7.99], 100.0).unwrap();
        assert_eq!(next[1], 8.0);
        let expected = -(1.0 + 0.1 * 7.99 * 7.99 + 0.001 * 4.0);
        assert!((reward - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_state_is_divergence() {
        assert!(matches!(
            pendulum_step([f64::NAN, 0.0], 0.0),
            Err(Error::Diverged(_))
        ));
        assert!(pendulum_step([0.0, f64::INFINITY], 0.0).is_err());
    }

    #[test]
    fn env_clamps_and_counts() {
        let mut env = Pendulum::default();
        env.reset(3);
        let out = env.step(&[5.0]).unwrap();
        assert!(out.clamped);
        env.step(&[-1.0]).unwrap();
        assert_eq!(env.clamp_events(), 1);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed| {
            let mut env = Pendulum::default();
            let mut states = vec![env.reset(seed)];
            for k in 0..50 {
                states.push(
                    env.step(&[(k as f64 * 0.37).sin() * 3.0])
                        .unwrap()
                        .next_state,
                );
            }
            states
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    proptest! {
        #[test]
        fn wrapped_angle_in_half_open_interval(x in -1e4f64..1e4) {
            let w = wrap_angle(x);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((x - w) / (2.0 * PI) - ((x - w) / (2.0 * PI)).round()).abs() < 1e-9);
        }

        #[test]
        fn reported_angle_stays_wrapped(th in -10.0f64..10.0, w in -8.0f64..8.0, u in -3.0f64..3.0) {
            let (next, _) = pendulum_step([th, w], u).unwrap();
            prop_assert!(next[0] > -PI && next[0] <= PI);
        }
    }
}
