use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{FeatureMap, Policy};
use crate::tensor_text::{self, Tensor};
use crate::{Error, Result};

/// Log-density of `N(mean, std^2)` at `x`.
pub fn normal_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * (2.0 * PI).ln() - std.ln() - 0.5 * z * z
}

/// Diagonal Gaussian policy with mean `μ_j(s) = W_j · φ(s)` and a
/// state-independent, learnable `log σ_j`.
///
/// Parameters are laid out as the row-major mean weights `W[j][k]` followed
/// by one log-std per action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    feature_map: FeatureMap,
    action_dim: usize,
    params: Vec<f64>,
    log_std_bounds: (f64, f64),
}

impl GaussianPolicy {
    pub fn new(feature_map: FeatureMap, action_dim: usize, log_std: f64) -> Self {
        let n_features = feature_map.dim();
        let mut params = vec![0.0; action_dim * n_features];
        params.extend(std::iter::repeat_n(log_std, action_dim));
        GaussianPolicy {
            feature_map,
            action_dim,
            params,
            log_std_bounds: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn from_params(
        feature_map: FeatureMap,
        action_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        if params.len() != action_dim * (feature_map.dim() + 1) {
            return Err(Error::InvalidModel(
                "Gaussian parameter vector has the wrong size".into(),
            ));
        }
        Ok(GaussianPolicy {
            feature_map,
            action_dim,
            params,
            log_std_bounds: (f64::NEG_INFINITY, f64::INFINITY),
        })
    }

    /// Clip range applied by [`project`](Self::project).
    pub fn with_log_std_bounds(mut self, low: f64, high: f64) -> Self {
        self.log_std_bounds = (low, high);
        self.project();
        self
    }

    /// Clamps every log-std into the configured bounds.
    pub fn project(&mut self) {
        let (lo, hi) = self.log_std_bounds;
        let start = self.action_dim * self.feature_map.dim();
        self.params[start..]
            .iter_mut()
            .for_each(|x| *x = x.clamp(lo, hi));
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn n_features(&self) -> usize {
        self.feature_map.dim()
    }

    /// Index of `W[j][k]` in the parameter vector.
    pub fn mean_weight_index(&self, j: usize, k: usize) -> usize {
        j * self.n_features() + k
    }

    pub fn log_std_index(&self, j: usize) -> usize {
        self.action_dim * self.n_features() + j
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.action_dim * self.n_features()..]
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std().iter().map(|l| l.exp()).collect()
    }

    pub fn features(&self, state: &[f64]) -> Vec<f64> {
        self.feature_map.features(state)
    }

    pub(crate) fn mean_from_features(&self, phi: &[f64]) -> Vec<f64> {
        self.params[..self.action_dim * phi.len()]
            .chunks(phi.len())
            .map(|w| w.iter().zip(phi).map(|(w, f)| w * f).sum())
            .collect()
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.mean_from_features(&self.features(state))
    }

    pub(crate) fn score_from_features(&self, phi: &[f64], action: &[f64]) -> Vec<f64> {
        let mean = self.mean_from_features(phi);
        let mut g = vec![0.0; self.params.len()];
        for (j, ((&a, &m), &ls)) in action.iter().zip(&mean).zip(self.log_std()).enumerate() {
            let var = (2.0 * ls).exp();
            let diff = a - m;
            let base = j * phi.len();
            for (gk, fk) in g[base..base + phi.len()].iter_mut().zip(phi) {
                *gk = diff / var * fk;
            }
            g[self.log_std_index(j)] = diff * diff / var - 1.0;
        }
        g
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let k = self.n_features();
        vec![
            Tensor::new(
                "mean_weights",
                vec![self.action_dim, k],
                self.params[..self.action_dim * k].to_vec(),
            ),
            Tensor::new("log_std", vec![self.action_dim], self.log_std().to_vec()),
        ]
    }

    pub fn to_text(&self) -> String {
        tensor_text::write(&self.to_tensors())
    }

    /// Restores parameters from a checkpoint; the feature map is not part of
    /// the file and must be supplied.
    pub fn from_text(feature_map: FeatureMap, text: &str) -> Result<Self> {
        let file = tensor_text::parse(text)?;
        let log_std = file.get("log_std")?;
        let [action_dim] = log_std.shape[..] else {
            return Err(Error::InvalidModel("log_std must be a vector".into()));
        };
        let mut params = file
            .expect("mean_weights", &[action_dim, feature_map.dim()])?
            .to_vec();
        params.extend_from_slice(&log_std.data);
        Self::from_params(feature_map, action_dim, params)
    }
}

impl Policy for GaussianPolicy {
    type State = [f64];
    type Action = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn density(&self, state: &[f64], action: &Vec<f64>) -> f64 {
        self.log_density(state, action).exp()
    }

    fn log_density(&self, state: &[f64], action: &Vec<f64>) -> f64 {
        let mean = self.mean(state);
        action
            .iter()
            .zip(&mean)
            .zip(self.log_std())
            .map(|((&a, &m), &ls)| normal_log_density(a, m, ls.exp()))
            .sum()
    }

    fn score(&self, state: &[f64], action: &Vec<f64>) -> Result<Vec<f64>> {
        let g = self.score_from_features(&self.features(state), action);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Gaussian score"));
        }
        Ok(g)
    }

    fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Vec<f64> {
        self.mean(state)
            .iter()
            .zip(self.log_std())
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn expectation<F>(&self, state: &[f64], samples: usize, seed: u64, mut f: F) -> f64
    where
        F: FnMut(&Vec<f64>) -> f64,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = samples.max(1);
        (0..n)
            .map(|_| f(&self.sample(state, &mut rng)))
            .sum::<f64>()
            / n as f64
    }

    fn greedy(&self, state: &[f64]) -> Vec<f64> {
        self.mean(state)
    }

    fn entropy(&self, _state: &[f64]) -> f64 {
        self.log_std()
            .iter()
            .map(|ls| 0.5 * (2.0 * PI * std::f64::consts::E).ln() + ls)
            .sum()
    }
}
