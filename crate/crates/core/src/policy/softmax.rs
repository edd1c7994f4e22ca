use rand::Rng;

use super::Policy;
use crate::mdp::{sample_categorical, ActionDistribution};
use crate::tensor_text::{self, Tensor};
use crate::{Error, Result};

/// How logits are formed from the parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub enum LogitFeatures {
    /// One preference per `(s, a)`; `θ` has `n_states * n_actions` entries.
    Tabular,
    /// `logit(s, a) = θ · φ(s, a)` with fixed features stored row-major as
    /// `[s][a][k]`.
    Linear { dim: usize, phi: Vec<f64> },
}

/// `π(a|s) = exp(logit(s,a)/T) / Σ_A exp(logit(s,A)/T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    temperature: f64,
    features: LogitFeatures,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    /// Tabular softmax with all preferences zero (uniform policy).
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        SoftmaxPolicy {
            n_states,
            n_actions,
            temperature: 1.0,
            features: LogitFeatures::Tabular,
            theta: vec![0.0; n_states * n_actions],
        }
    }

    pub fn tabular_with(n_states: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != n_states * n_actions {
            return Err(Error::InvalidModel(
                "tabular preferences have the wrong size".into(),
            ));
        }
        Ok(SoftmaxPolicy {
            theta,
            ..Self::tabular(n_states, n_actions)
        })
    }

    pub fn linear(
        n_states: usize,
        n_actions: usize,
        dim: usize,
        phi: Vec<f64>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || phi.len() != n_states * n_actions * dim || theta.len() != dim {
            return Err(Error::InvalidModel(
                "linear softmax features have the wrong size".into(),
            ));
        }
        Ok(SoftmaxPolicy {
            n_states,
            n_actions,
            temperature: 1.0,
            features: LogitFeatures::Linear { dim, phi },
            theta,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "temperature {temperature} must be positive"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn features(&self) -> &LogitFeatures {
        &self.features
    }

    fn logit(&self, s: usize, a: usize) -> f64 {
        match &self.features {
            LogitFeatures::Tabular => self.theta[s * self.n_actions + a],
            LogitFeatures::Linear { dim, phi } => {
                let f = &phi[(s * self.n_actions + a) * dim..(s * self.n_actions + a + 1) * dim];
                f.iter().zip(&self.theta).map(|(x, t)| x * t).sum()
            }
        }
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        let scaled: Vec<f64> = (0..self.n_actions)
            .map(|a| self.logit(s, a) / self.temperature)
            .collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Score with the action probabilities of `s` already computed.
    pub(crate) fn score_with_probs(&self, s: usize, a: usize, probs: &[f64]) -> Vec<f64> {
        let inv_t = 1.0 / self.temperature;
        let mut g = vec![0.0; self.theta.len()];
        match &self.features {
            LogitFeatures::Tabular => {
                let row = &mut g[s * self.n_actions..(s + 1) * self.n_actions];
                for (b, (gb, p)) in row.iter_mut().zip(probs).enumerate() {
                    *gb = (f64::from(u8::from(b == a)) - p) * inv_t;
                }
            }
            LogitFeatures::Linear { dim, phi } => {
                let feat = |b: usize| {
                    &phi[(s * self.n_actions + b) * dim..(s * self.n_actions + b + 1) * dim]
                };
                g.copy_from_slice(feat(a));
                for (b, p) in probs.iter().enumerate() {
                    for (gk, fk) in g.iter_mut().zip(feat(b)) {
                        *gk -= p * fk;
                    }
                }
                g.iter_mut().for_each(|x| *x *= inv_t);
            }
        }
        g
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = vec![Tensor::scalar("temperature", self.temperature)];
        match &self.features {
            LogitFeatures::Tabular => {
                out.push(Tensor::new(
                    "theta",
                    vec![self.n_states, self.n_actions],
                    self.theta.clone(),
                ));
            }
            LogitFeatures::Linear { dim, phi } => {
                out.push(Tensor::new("theta", vec![*dim], self.theta.clone()));
                out.push(Tensor::new(
                    "features",
                    vec![self.n_states, self.n_actions, *dim],
                    phi.clone(),
                ));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        tensor_text::write(&self.to_tensors())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file = tensor_text::parse(text)?;
        let temperature = file.expect("temperature", &[1])?[0];
        let theta = file.get("theta")?;
        let policy = match (&theta.shape[..], file.get("features").ok()) {
            (&[n_states, n_actions], None) => {
                Self::tabular_with(n_states, n_actions, theta.data.clone())?
            }
            (&[dim], Some(features)) => match features.shape[..] {
                [n_states, n_actions, d] if d == dim => Self::linear(
                    n_states,
                    n_actions,
                    dim,
                    features.data.clone(),
                    theta.data.clone(),
                )?,
                _ => {
                    return Err(Error::InvalidModel(
                        "feature tensor does not match theta".into(),
                    ))
                }
            },
            _ => {
                return Err(Error::InvalidModel(
                    "unrecognised softmax checkpoint layout".into(),
                ))
            }
        };
        policy.with_temperature(temperature)
    }
}

impl ActionDistribution for SoftmaxPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        self.probs(state)[action]
    }

    fn action_probs(&self, state: usize) -> Vec<f64> {
        self.probs(state)
    }
}

impl Policy for SoftmaxPolicy {
    type State = usize;
    type Action = usize;

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn density(&self, state: &usize, action: &usize) -> f64 {
        self.probs(*state)[*action]
    }

    fn score(&self, state: &usize, action: &usize) -> Result<Vec<f64>> {
        let probs = self.probs(*state);
        if probs[*action] <= 0.0 {
            return Err(Error::ZeroDensity);
        }
        Ok(self.score_with_probs(*state, *action, &probs))
    }

    fn sample<R: Rng + ?Sized>(&self, state: &usize, rng: &mut R) -> usize {
        sample_categorical(&self.probs(*state), rng)
    }

    fn expectation<F>(&self, state: &usize, _samples: usize, _seed: u64, mut f: F) -> f64
    where
        F: FnMut(&usize) -> f64,
    {
        self.probs(*state)
            .iter()
            .enumerate()
            .map(|(a, p)| p * f(&a))
            .sum()
    }

    fn greedy(&self, state: &usize) -> usize {
        crate::mdp::argmax(&self.probs(*state))
    }

    fn entropy(&self, state: &usize) -> f64 {
        -self
            .probs(*state)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}
