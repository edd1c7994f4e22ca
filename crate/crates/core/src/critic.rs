//! Linear action-value critic `Q(s, a, w) = w · φ(s, a)` and its TD update.

use std::borrow::Borrow;

use crate::mdp::{ActionValues, TabularMdp, Transition};
use crate::policy::{FeatureMap, Policy};
use crate::tensor_text::{self, Tensor};
use crate::{Error, Result};

/// Joint state-action features.
pub trait CriticFeatures {
    type State: ?Sized;
    type Action;

    fn dim(&self) -> usize;
    fn features(&self, state: &Self::State, action: &Self::Action) -> Vec<f64>;
}

/// One-hot over `(s, a)` pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TabularFeatures {
    pub n_states: usize,
    pub n_actions: usize,
}

impl TabularFeatures {
    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }
}

impl CriticFeatures for TabularFeatures {
    type State = usize;
    type Action = usize;

    fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    fn features(&self, s: &usize, a: &usize) -> Vec<f64> {
        let mut phi = vec![0.0; self.dim()];
        phi[self.index(*s, *a)] = 1.0;
        phi
    }
}

/// `ψ(s) ⊗ [1, ã_1, .., ã_1^d, ã_2, .., ã_m^d]` with `ã_j = a_j / scale_j`.
/// Polynomial in the action, so `∇_a Q` is available in closed form:
/// `ψ(s) ⊗ [1, ã, ã², …]` with `ã = a / scale` saturated to `[-1, 1]`, so
/// actions the environment would clamp share the boundary's value.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPolynomialFeatures {
    pub state_map: FeatureMap,
    pub action_scale: Vec<f64>,
    pub degree: usize,
}

impl ActionPolynomialFeatures {
    pub fn new(state_map: FeatureMap, action_scale: Vec<f64>, degree: usize) -> Self {
        ActionPolynomialFeatures {
            state_map,
            action_scale,
            degree,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_scale.len()
    }

    fn action_block_len(&self) -> usize {
        1 + self.action_dim() * self.degree
    }

    fn action_block(&self, action: &[f64]) -> Vec<f64> {
        let mut block = Vec::with_capacity(self.action_block_len());
        block.push(1.0);
        for (a, scale) in action.iter().zip(&self.action_scale) {
            let x = (a / scale).clamp(-1.0, 1.0);
            let mut power = 1.0;
            for _ in 0..self.degree {
                power *= x;
                block.push(power);
            }
        }
        block
    }

    /// `∂ block / ∂ a_j` for every action dimension `j`.
    fn action_block_gradients(&self, action: &[f64]) -> Vec<Vec<f64>> {
        let len = self.action_block_len();
        action
            .iter()
            .zip(&self.action_scale)
            .enumerate()
            .map(|(j, (a, scale))| {
                let x = a / scale;
                let mut grad = vec![0.0; len];
                if x.abs() > 1.0 {
                    return grad;
                }
                let base = 1 + j * self.degree;
                let mut lower = 1.0;
                for p in 1..=self.degree {
                    grad[base + p - 1] = p as f64 * lower / scale;
                    lower *= x;
                }
                grad
            })
            .collect()
    }

    fn combine(psi: &[f64], block: &[f64]) -> Vec<f64> {
        psi.iter()
            .flat_map(|p| block.iter().map(move |b| p * b))
            .collect()
    }
}

impl CriticFeatures for ActionPolynomialFeatures {
    type State = [f64];
    type Action = Vec<f64>;

    fn dim(&self) -> usize {
        self.state_map.dim() * self.action_block_len()
    }

    fn features(&self, state: &[f64], action: &Vec<f64>) -> Vec<f64> {
        Self::combine(&self.state_map.features(state), &self.action_block(action))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearCritic<F> {
    features: F,
    weights: Vec<f64>,
    alpha_w: f64,
}

impl<F: CriticFeatures> LinearCritic<F> {
    pub fn new(features: F, alpha_w: f64) -> Self {
        let weights = vec![0.0; features.dim()];
        LinearCritic {
            features,
            weights,
            alpha_w,
        }
    }

    pub fn with_weights(features: F, weights: Vec<f64>, alpha_w: f64) -> Result<Self> {
        if weights.len() != features.dim() {
            return Err(Error::InvalidModel(format!(
                "critic expects {} weights, got {}",
                features.dim(),
                weights.len()
            )));
        }
        Ok(LinearCritic {
            features,
            weights,
            alpha_w,
        })
    }

    pub fn features(&self) -> &F {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn alpha_w(&self) -> f64 {
        self.alpha_w
    }

    pub fn set_alpha_w(&mut self, alpha_w: f64) {
        self.alpha_w = alpha_w;
    }

    pub fn q_value(&self, state: &F::State, action: &F::Action) -> f64 {
        dot(&self.weights, &self.features.features(state, action))
    }

    /// `w ← w + α_w δ φ(s, a)`.
    pub fn update(&mut self, state: &F::State, action: &F::Action, delta: f64) -> Result<()> {
        let phi = self.features.features(state, action);
        let step = self.alpha_w * delta;
        for (w, f) in self.weights.iter_mut().zip(&phi) {
            *w += step * f;
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("critic weights"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        tensor_text::write(&[Tensor::new(
            "weights",
            vec![self.weights.len()],
            self.weights.clone(),
        )])
    }

    pub fn load_weights(&mut self, text: &str) -> Result<()> {
        let file = tensor_text::parse(text)?;
        self.weights = file.expect("weights", &[self.features.dim()])?.to_vec();
        Ok(())
    }
}

impl LinearCritic<TabularFeatures> {
    pub fn tabular(n_states: usize, n_actions: usize, alpha_w: f64) -> Self {
        Self::new(
            TabularFeatures {
                n_states,
                n_actions,
            },
            alpha_w,
        )
    }

    pub fn q_table(&self) -> ActionValues {
        ActionValues::from_vec(
            self.features.n_states,
            self.features.n_actions,
            self.weights.clone(),
        )
    }
}

impl LinearCritic<ActionPolynomialFeatures> {
    /// `∇_a Q(s, a, w)`.
    pub fn action_gradient(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let psi = self.features.state_map.features(state);
        self.features
            .action_block_gradients(action)
            .iter()
            .map(|g| dot(&self.weights, &ActionPolynomialFeatures::combine(&psi, g)))
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E_{a' ~ π(·|s')} Q(s', a', w)`; exact for finite actions, otherwise an
/// average over `samples` policy draws seeded by `seed`.
pub fn expected_next_q<F, P>(
    critic: &LinearCritic<F>,
    policy: &P,
    next_state: &F::State,
    samples: usize,
    seed: u64,
) -> f64
where
    F: CriticFeatures,
    P: Policy<State = F::State, Action = F::Action>,
{
    policy.expectation(next_state, samples, seed, |a| critic.q_value(next_state, a))
}

/// `δ = R + γ E_π Q(s', ·) - Q(s, A)`; the bootstrap term is dropped on
/// terminal transitions. The expectation is under the target policy even
/// when the action came from a behavior policy.
pub fn td_error<F, P, S>(
    critic: &LinearCritic<F>,
    policy: &P,
    transition: &Transition<S, F::Action>,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: CriticFeatures,
    P: Policy<State = F::State, Action = F::Action>,
    S: Borrow<F::State>,
{
    let bootstrap = if transition.done {
        0.0
    } else {
        expected_next_q(
            critic,
            policy,
            transition.next_state.borrow(),
            samples,
            seed,
        )
    };
    let delta = transition.reward + gamma * bootstrap
        - critic.q_value(transition.state.borrow(), &transition.action);
    if !delta.is_finite() {
        return Err(Error::Diverged(format!("TD error {delta}")));
    }
    Ok(delta)
}

/// `w ← w + α_w δ ∇_w Q(s, a, w)`.
pub fn critic_update<F: CriticFeatures>(
    critic: &mut LinearCritic<F>,
    state: &F::State,
    action: &F::Action,
    delta: f64,
) -> Result<()> {
    critic.update(state, action, delta)
}

/// One synchronous expected-TD sweep over every `(s, a)`: the TD errors of
/// all successors are averaged with their transition probabilities before
/// the update. Returns the largest absolute expected TD error seen.
pub fn expected_td_sweep<P>(
    critic: &mut LinearCritic<TabularFeatures>,
    mdp: &TabularMdp,
    policy: &P,
) -> Result<f64>
where
    P: Policy<State = usize, Action = usize>,
{
    let mut worst = 0.0f64;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let mut delta = 0.0;
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let t = Transition {
                    state: s,
                    action: a,
                    reward: mdp.reward(s, a),
                    next_state: next,
                    done: false,
                    behavior_logprob: 0.0,
                };
                delta += p * td_error(critic, policy, &t, mdp.gamma(), 0, 0)?;
            }
            worst = worst.max(delta.abs());
            critic.update(&s, &a, delta)?;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_q_values, TabularMdp};
    use crate::policy::{GaussianPolicy, SoftmaxPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transition(s: usize, a: usize, r: f64, s2: usize) -> Transition<usize, usize> {
        Transition {
            state: s,
            action: a,
            reward: r,
            next_state: s2,
            done: false,
            behavior_logprob: 0.0,
        }
    }

    #[test]
    fn q_value_basics() {
        let mut critic = LinearCritic::tabular(3, 2, 0.1);
        assert_eq!(critic.q_value(&1, &1), 0.0);
        let idx = critic.features().index(2, 1);
        critic.weights[idx] = 3.5;
        assert_eq!(critic.q_value(&2, &1), 3.5);
    }

    #[test]
    fn q_value_matches_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let feats = ActionPolynomialFeatures::new(
            FeatureMap::Polynomial { dim: 2, degree: 2 },
            vec![2.0],
            2,
        );
        let w: Vec<f64> = (0..feats.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let critic = LinearCritic::with_weights(feats.clone(), w.clone(), 0.1).unwrap();
        let (s, a) = ([0.3, -0.7], vec![1.1]);
        let phi = feats.features(&s, &a);
        let mut oracle = 0.0;
        for i in 0..phi.len() {
            oracle += w[i] * phi[i];
        }
        assert!((critic.q_value(&s, &a) - oracle).abs() < 1e-14);
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let feats = ActionPolynomialFeatures::new(
            FeatureMap::Polynomial { dim: 2, degree: 1 },
            vec![2.0, 0.5],
            3,
        );
        let w: Vec<f64> = (0..feats.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let critic = LinearCritic::with_weights(feats, w, 0.1).unwrap();
        let s = [0.2, 0.9];
        let a = vec![0.4, -0.3];
        let grad = critic.action_gradient(&s, &a);
        let h = 1e-6;
        for j in 0..2 {
            let (mut up, mut dn) = (a.clone(), a.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (critic.q_value(&s, &up) - critic.q_value(&s, &dn)) / (2.0 * h);
            assert!((grad[j] - fd).abs() < 1e-7, "{} vs {fd}", grad[j]);
        }
    }

    #[test]
    fn expected_next_q_cases() {
        let mut critic = LinearCritic::tabular(2, 3, 0.1);
        critic.weights.iter_mut().for_each(|w| *w = 1.25);
        let pi = SoftmaxPolicy::tabular_with(2, 3, vec![0.3, -1.0, 2.0, 0.0, 0.5, 0.1]).unwrap();
        assert!((expected_next_q(&critic, &pi, &1, 0, 0) - 1.25).abs() < 1e-15);

        critic.weights = vec![0.0, 0.0, 0.0, 4.0, -2.0, 7.0];
        let det = SoftmaxPolicy::tabular_with(2, 3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 60.0]).unwrap();
        assert!((expected_next_q(&critic, &det, &1, 0, 0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_expectation_matches_moment() {
        // Q(a) = w0 + w1 a + w2 a^2 under N(μ, σ^2): E = w0 + w1 μ + w2 (μ^2 + σ^2)
        let feats = ActionPolynomialFeatures::new(FeatureMap::Bias, vec![10.0], 2);
        let (w0, w1, w2) = (0.5, -1.2, 0.8);
        let critic =
            LinearCritic::with_weights(feats, vec![w0, 10.0 * w1, 100.0 * w2], 0.1).unwrap();
        let sigma: f64 = 0.7;
        let mut pi = GaussianPolicy::new(FeatureMap::Bias, 1, sigma.ln());
        pi.params_mut()[0] = 0.4;
        let mu = 0.4;
        let exact = w0 + w1 * mu + w2 * (mu * mu + sigma * sigma);
        let m = 10_000;
        let est = expected_next_q(&critic, &pi, &[0.0], m, 99);

        // sample std of Q(a) under the policy, estimated from a separate stream
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..m)
            .map(|_| critic.q_value(&[0.0], &pi.sample(&[0.0], &mut rng)))
            .collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        assert!(
            (est - exact).abs() < 3.0 * sd / (m as f64).sqrt(),
            "{est} vs {exact}"
        );
        assert_eq!(est, expected_next_q(&critic, &pi, &[0.0], m, 99));
    }

    #[test]
    fn td_error_cases() {
        let critic = LinearCritic::tabular(2, 2, 0.1);
        let pi = SoftmaxPolicy::tabular(2, 2);
        assert_eq!(
            td_error(&critic, &pi, &transition(0, 1, 1.0, 1), 0.9, 0, 0).unwrap(),
            1.0
        );

        let mut bad = LinearCritic::tabular(2, 2, 0.1);
        bad.weights[0] = f64::INFINITY;
        assert!(td_error(&bad, &pi, &transition(0, 0, 0.0, 1), 0.9, 0, 0).is_err());
    }

    #[test]
    fn td_error_zero_at_fixed_point_of_deterministic_mdp() {
        let mdp = TabularMdp::chain(4, 0.0, 0.9).unwrap();
        let pi = SoftmaxPolicy::tabular_with(4, 2, vec![0.1, 0.5, -0.3, 0.2, 1.0, 0.0, 0.0, 0.4])
            .unwrap();
        let q = exact_q_values(&mdp, &pi).unwrap();
        let critic = LinearCritic::with_weights(
            TabularFeatures {
                n_states: 4,
                n_actions: 2,
            },
            q.as_slice().to_vec(),
            0.1,
        )
        .unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let next = mdp
                    .transition_row(s, a)
                    .iter()
                    .position(|&p| p == 1.0)
                    .unwrap();
                let delta = td_error(
                    &critic,
                    &pi,
                    &transition(s, a, mdp.reward(s, a), next),
                    0.9,
                    0,
                    0,
                )
                .unwrap();
                assert!(delta.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn td_error_matches_hand_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng).unwrap();
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pi = SoftmaxPolicy::tabular_with(3, 2, theta.clone()).unwrap();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let critic = LinearCritic::with_weights(
            TabularFeatures {
                n_states: 3,
                n_actions: 2,
            },
            w.clone(),
            0.1,
        )
        .unwrap();
        let (s, a, s2) = (2, 0, 1);
        let z = theta[2].exp() + theta[3].exp();
        let hand =
            mdp.reward(s, a) + 0.9 * (theta[2].exp() / z * w[2] + theta[3].exp() / z * w[3]) - w[4];
        let delta = td_error(
            &critic,
            &pi,
            &transition(s, a, mdp.reward(s, a), s2),
            0.9,
            0,
            0,
        )
        .unwrap();
        assert!((delta - hand).abs() < 1e-12);
    }

    #[test]
    fn update_rules() {
        let mut critic = LinearCritic::tabular(3, 2, 0.1);
        let before = critic.weights.clone();
        critic_update(&mut critic, &1, &0, 0.0).unwrap();
        assert_eq!(critic.weights, before);
        critic_update(&mut critic, &1, &0, 1.0).unwrap();
        assert_eq!(critic.weights[2], 0.1);
        assert_eq!(critic.weights.iter().filter(|&&w| w != 0.0).count(), 1);
        assert!(critic_update(&mut critic, &1, &0, f64::INFINITY).is_err());
    }

    #[test]
    fn update_direction_is_feature_vector() {
        let feats = ActionPolynomialFeatures::new(
            FeatureMap::Polynomial { dim: 1, degree: 2 },
            vec![1.0],
            2,
        );
        let mut critic = LinearCritic::new(feats.clone(), 0.5);
        critic.update(&[0.3], &vec![-0.4], 2.0).unwrap();
        let phi = feats.features(&[0.3], &vec![-0.4]);
        for (w, f) in critic.weights().iter().zip(&phi) {
            assert!((w - f).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_sweeps_reach_exact_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng).unwrap();
        let pi = SoftmaxPolicy::tabular_with(3, 2, vec![0.2, -0.4, 1.0, 0.3, -0.5, 0.5]).unwrap();
        let exact = exact_q_values(&mdp, &pi).unwrap();
        let mut critic = LinearCritic::tabular(3, 2, 0.5);
        for _ in 0..2000 {
            expected_td_sweep(&mut critic, &mdp, &pi).unwrap();
        }
        assert!(critic.q_table().max_abs_diff(&exact) < 1e-3);
    }

    #[test]
    fn weight_checkpoint_round_trip() {
        let mut critic = LinearCritic::tabular(2, 2, 0.1);
        critic.weights = vec![0.1, -2.5, 3.0, 1e-9];
        let mut other = LinearCritic::tabular(2, 2, 0.1);
        other.load_weights(&critic.to_text()).unwrap();
        assert_eq!(other, critic);
    }
}
