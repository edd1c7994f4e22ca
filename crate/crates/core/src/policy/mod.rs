//! Differentiable policies with analytic score functions.

mod features;
mod gaussian;
mod softmax;

pub use features::FeatureMap;
pub use gaussian::{normal_log_density, GaussianPolicy};
pub use softmax::{LogitFeatures, SoftmaxPolicy};

pub use crate::mdp::ActionDistribution;

use rand::Rng;

use crate::Result;

/// A parameterised stochastic policy `π(a | s, θ)`.
pub trait Policy {
    type State: ?Sized;
    type Action: Clone;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Probability (finite actions) or density (continuous actions).
    fn density(&self, state: &Self::State, action: &Self::Action) -> f64;

    fn log_density(&self, state: &Self::State, action: &Self::Action) -> f64 {
        self.density(state, action).ln()
    }

    /// `∇_θ ln π(a | s, θ)`.
    fn score(&self, state: &Self::State, action: &Self::Action) -> Result<Vec<f64>>;

    /// `∇_θ π(a | s, θ) = π · ∇_θ ln π`.
    fn density_gradient(&self, state: &Self::State, action: &Self::Action) -> Result<Vec<f64>> {
        let p = self.density(state, action);
        let mut g = self.score(state, action)?;
        g.iter_mut().for_each(|x| *x *= p);
        Ok(g)
    }

    fn sample<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> Self::Action;

    /// `E_{a ~ π(·|s)} f(a)`. Finite action sets sum exactly and ignore
    /// `samples` and `seed`; continuous policies average `samples` draws
    /// from a generator seeded with `seed`.
    fn expectation<F>(&self, state: &Self::State, samples: usize, seed: u64, f: F) -> f64
    where
        F: FnMut(&Self::Action) -> f64;

    /// Argmax action or distribution mean.
    fn greedy(&self, state: &Self::State) -> Self::Action;

    fn entropy(&self, state: &Self::State) -> f64;
}
