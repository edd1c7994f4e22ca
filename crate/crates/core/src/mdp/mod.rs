//! Environments and exact dynamic-programming oracles.

mod pendulum;
mod reacher;
mod tabular;

pub use pendulum::{pendulum_step, wrap_angle, Pendulum, PendulumParams};
pub use reacher::PointMassReacher;
pub(crate) use tabular::argmax;
pub use tabular::{
    average_reward, discounted_return, exact_q_values, exact_state_distribution,
    sample_categorical, value_iteration, ActionValues, ProbTable, TabularMdp, ValueIteration,
    MAX_GENERATED_STATES,
};

use crate::Result;

/// Per-state distribution over a finite action set.
pub trait ActionDistribution {
    fn n_actions(&self) -> usize;
    fn action_prob(&self, state: usize, action: usize) -> f64;

    fn action_probs(&self, state: usize) -> Vec<f64> {
        (0..self.n_actions())
            .map(|a| self.action_prob(state, a))
            .collect()
    }
}

/// One step of experience. `behavior_logprob` is the log-density of `action`
/// under whatever distribution actually produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
    pub next_state: S,
    pub done: bool,
    pub behavior_logprob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// True terminal state. Time limits are handled by the caller through
    /// [`ContinuousEnv::max_episode_steps`].
    pub done: bool,
    pub clamped: bool,
}

/// Continuous-state, continuous-action task.
///
/// Implementations must be deterministic: the same seed passed to
/// [`reset`](Self::reset) followed by the same actions yields bit-identical
/// trajectories.
pub trait ContinuousEnv: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_low(&self) -> &[f64];
    fn action_high(&self) -> &[f64];
    fn max_episode_steps(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Actions outside the bounds are clamped and counted as clamp events.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
    fn clamp_events(&self) -> u64;
}

pub(crate) fn clamp_action(action: &[f64], low: &[f64], high: &[f64]) -> (Vec<f64>, bool) {
    let mut clamped = false;
    let out = action
        .iter()
        .zip(low.iter().zip(high))
        .map(|(&a, (&lo, &hi))| {
            let c = a.clamp(lo, hi);
            clamped |= c != a;
            c
        })
        .collect();
    (out, clamped)
}
