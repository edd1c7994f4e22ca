//! Active-importance-sampling behavior policies.
//!
//! For a finite action set the behavior policy is
//!
//! ```text
//! b(a|s) ∝ |(∇_θ π(a|s) · G(s)) Q(s,a)| 1{π(a|s) ≠ 0},   G(s) = Σ_A ∇_θ π(A|s) Q(s,A)
//! ```
//!
//! normalised per state and then mixed with the target policy,
//! `b ← (1-ε) b + ε π`, so that importance ratios stay below `1/ε`.
//! States whose scores all vanish fall back to `b = π`.
//!
//! For Gaussian policies the same score is evaluated with
//! `G(s) = ∇_θ μ(s) ∇_a Q(s, a)|_{a = μ(s)}` and a Gaussian is fitted to it
//! by one round of self-normalised weighted maximum likelihood
//! (cross-entropy minimisation) from proposals drawn from `π(·|s)`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::critic::{dot, ActionPolynomialFeatures, LinearCritic};
use crate::mdp::{sample_categorical, ActionDistribution, ActionValues};
use crate::policy::{normal_log_density, GaussianPolicy, Policy as _, SoftmaxPolicy};
use crate::{Error, Result};

pub const DEFAULT_EPSILON_MIX: f64 = 0.05;
pub const DEFAULT_STD_MIN: f64 = 1e-2;
pub const DEFAULT_N_PROPOSAL: usize = 64;

/// Per-state exact policy gradient `G(s) = Σ_A ∇_θ π(A|s) Q(s,A)`.
pub fn state_gradient(policy: &SoftmaxPolicy, q: &ActionValues, s: usize) -> Vec<f64> {
    let probs = policy.probs(s);
    let mut g = vec![0.0; policy.params().len()];
    for (a, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let score = policy.score_with_probs(s, a, &probs);
        let weight = p * q.get(s, a);
        for (gk, sk) in g.iter_mut().zip(&score) {
            *gk += weight * sk;
        }
    }
    g
}

/// Unnormalised active-IS scores for every action of state `s`.
pub fn unnormalized_scores_tabular(policy: &SoftmaxPolicy, q: &ActionValues, s: usize) -> Vec<f64> {
    let probs = policy.probs(s);
    let g = state_gradient(policy, q, s);
    probs
        .iter()
        .enumerate()
        .map(|(a, &p)| {
            if p == 0.0 {
                return 0.0;
            }
            let grad_pi: Vec<f64> = policy
                .score_with_probs(s, a, &probs)
                .iter()
                .map(|x| p * x)
                .collect();
            (dot(&grad_pi, &g) * q.get(s, a)).abs()
        })
        .collect()
}

/// `|(∇_θ π(a|s) · G(s)) Q(s,a)| 1{π(a|s) ≠ 0}`.
pub fn unnormalized_score_tabular(
    policy: &SoftmaxPolicy,
    q: &ActionValues,
    s: usize,
    a: usize,
) -> f64 {
    unnormalized_scores_tabular(policy, q, s)[a]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularBehavior {
    n_states: usize,
    n_actions: usize,
    table: Vec<f64>,
    epsilon_mix: f64,
    support_mask: Vec<bool>,
    fallback: Vec<bool>,
}

/// Normalises the active-IS scores per state, falls back to `π` on
/// all-zero rows and mixes with `π` using weight `epsilon_mix`.
pub fn build_tabular_behavior(
    policy: &SoftmaxPolicy,
    q: &ActionValues,
    epsilon_mix: f64,
) -> Result<TabularBehavior> {
    if !(0.0..=1.0).contains(&epsilon_mix) {
        return Err(Error::Config(format!(
            "epsilon_mix {epsilon_mix} outside [0, 1]"
        )));
    }
    let (n_states, n_actions) = (policy.n_states(), policy.n_actions());
    let mut table = Vec::with_capacity(n_states * n_actions);
    let mut support_mask = Vec::with_capacity(n_states * n_actions);
    let mut fallback = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let probs = policy.probs(s);
        let scores = unnormalized_scores_tabular(policy, q, s);
        if let Some(a) = scores.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteScore {
                state: s,
                action: a,
            });
        }
        let total: f64 = scores.iter().sum();
        let zero_row = total == 0.0;
        fallback.push(zero_row);
        for (a, &p) in probs.iter().enumerate() {
            let active = if zero_row { p } else { scores[a] / total };
            table.push((1.0 - epsilon_mix) * active + epsilon_mix * p);
            support_mask.push(p != 0.0);
        }
    }
    Ok(TabularBehavior {
        n_states,
        n_actions,
        table,
        epsilon_mix,
        support_mask,
        fallback,
    })
}

impl TabularBehavior {
    /// `b = π`.
    pub fn on_policy(policy: &SoftmaxPolicy) -> Self {
        let (n_states, n_actions) = (policy.n_states(), policy.n_actions());
        let table: Vec<f64> = (0..n_states).flat_map(|s| policy.probs(s)).collect();
        let support_mask = table.iter().map(|&p| p != 0.0).collect();
        TabularBehavior {
            n_states,
            n_actions,
            table,
            epsilon_mix: 1.0,
            support_mask,
            fallback: vec![true; n_states],
        }
    }

    /// Arbitrary table, e.g. for constructing adversarial proposals.
    pub fn from_table(n_states: usize, n_actions: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != n_states * n_actions {
            return Err(Error::InvalidModel(
                "behavior table has the wrong size".into(),
            ));
        }
        for row in table.chunks(n_actions) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(
                    "behavior row is not a distribution".into(),
                ));
            }
        }
        Ok(TabularBehavior {
            n_states,
            n_actions,
            support_mask: table.iter().map(|&p| p != 0.0).collect(),
            table,
            epsilon_mix: 0.0,
            fallback: vec![false; n_states],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn epsilon_mix(&self) -> f64 {
        self.epsilon_mix
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.n_actions + a]
    }

    /// Whether the target policy gives `a` positive probability in `s`.
    pub fn supported(&self, s: usize, a: usize) -> bool {
        self.support_mask[s * self.n_actions + a]
    }

    /// Whether state `s` had all-zero scores and fell back to `π`.
    pub fn is_fallback(&self, s: usize) -> bool {
        self.fallback[s]
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(s), rng)
    }

    pub fn log_density(&self, s: usize, a: usize) -> Result<f64> {
        let p = self.prob(s, a);
        if p <= 0.0 {
            return Err(Error::SupportViolation {
                state: s,
                action: a,
            });
        }
        Ok(p.ln())
    }

    /// CSV dump: `state,action,behavior_prob,target_prob,fallback`.
    pub fn write_diagnostics<W: Write>(&self, policy: &SoftmaxPolicy, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "state",
            "action",
            "behavior_prob",
            "target_prob",
            "fallback",
        ])?;
        for s in 0..self.n_states {
            let probs = policy.probs(s);
            for (a, p) in probs.iter().enumerate() {
                w.write_record([
                    s.to_string(),
                    a.to_string(),
                    format!("{:?}", self.prob(s, a)),
                    format!("{p:?}"),
                    self.fallback[s].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<diagnostics>", e))?;
        Ok(())
    }
}

impl ActionDistribution for TabularBehavior {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        self.prob(state, action)
    }
}

/// Precomputed per-state quantities for the Gaussian active-IS score.
pub struct GaussianScorer<'a> {
    policy: &'a GaussianPolicy,
    critic: &'a LinearCritic<ActionPolynomialFeatures>,
    state: &'a [f64],
    phi: Vec<f64>,
    direction: Vec<f64>,
}

impl<'a> GaussianScorer<'a> {
    pub fn new(
        policy: &'a GaussianPolicy,
        critic: &'a LinearCritic<ActionPolynomialFeatures>,
        state: &'a [f64],
    ) -> Self {
        let phi = policy.features(state);
        let mean = policy.mean_from_features(&phi);
        let grad_q = critic.action_gradient(state, &mean);
        // ∇_θ μ(s) ∇_a Q: only mean weights move μ, and ∂μ_j/∂W[j][k] = φ_k
        let mut direction = vec![0.0; policy.params().len()];
        for (j, dq) in grad_q.iter().enumerate() {
            for (k, f) in phi.iter().enumerate() {
                direction[policy.mean_weight_index(j, k)] = f * dq;
            }
        }
        GaussianScorer {
            policy,
            critic,
            state,
            phi,
            direction,
        }
    }

    /// `∇_θ μ(s) ∇_a Q(s, a)` evaluated at `a = μ(s)`.
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn score(&self, action: &[f64]) -> f64 {
        let density = self.policy.log_density(self.state, &action.to_vec()).exp();
        let grad_pi = self.policy.score_from_features(&self.phi, action);
        let q = self.critic.q_value(self.state, &action.to_vec());
        (density * dot(&grad_pi, &self.direction) * q).abs()
    }
}

/// `|(∇_θ π(a|s) · [∇_θ μ(s) ∇_a Q(s, a)]) Q(s, a)|` with `∇_a Q` taken at
/// the policy mean.
pub fn unnormalized_score_gaussian(
    policy: &GaussianPolicy,
    critic: &LinearCritic<ActionPolynomialFeatures>,
    state: &[f64],
    action: &[f64],
) -> f64 {
    GaussianScorer::new(policy, critic, state).score(action)
}

/// Fitted Gaussian behavior for one state, optionally mixed with the target
/// Gaussian: `b = (1-ε) N(mean, std²) + ε π(·|s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBehavior {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub effective_sample_size: f64,
    pub n_proposal: usize,
    pub epsilon_mix: f64,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

impl GaussianBehavior {
    /// `b = π(·|s)`.
    pub fn on_policy(mean: Vec<f64>, std: Vec<f64>) -> Self {
        GaussianBehavior {
            mean: mean.clone(),
            std: std.clone(),
            effective_sample_size: 0.0,
            n_proposal: 0,
            epsilon_mix: 0.0,
            target_mean: mean,
            target_std: std,
        }
    }

    pub fn with_mixing(mut self, epsilon_mix: f64) -> Self {
        self.epsilon_mix = epsilon_mix;
        self
    }

    fn fitted_log_density(&self, action: &[f64]) -> f64 {
        diag_log_density(action, &self.mean, &self.std)
    }

    pub fn log_density(&self, action: &[f64]) -> f64 {
        let fitted = self.fitted_log_density(action);
        if self.epsilon_mix == 0.0 {
            return fitted;
        }
        let target = diag_log_density(action, &self.target_mean, &self.target_std);
        if self.epsilon_mix >= 1.0 {
            return target;
        }
        log_sum_exp(
            (1.0 - self.epsilon_mix).ln() + fitted,
            self.epsilon_mix.ln() + target,
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let use_target = self.epsilon_mix > 0.0 && rng.random::<f64>() < self.epsilon_mix;
        let (mean, std) = if use_target {
            (&self.target_mean, &self.target_std)
        } else {
            (&self.mean, &self.std)
        };
        mean.iter()
            .zip(std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn diag_log_density(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((&x, &m), &s)| normal_log_density(x, m, s))
        .sum()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-density of an action under a tabular or Gaussian behavior.
pub fn behavior_logdensity_tabular(behavior: &TabularBehavior, s: usize, a: usize) -> Result<f64> {
    behavior.log_density(s, a)
}

pub fn behavior_logdensity_gaussian(behavior: &GaussianBehavior, action: &[f64]) -> Result<f64> {
    let l = behavior.log_density(action);
    if l.is_nan() || l == f64::INFINITY {
        return Err(Error::NonFinite("behavior log-density"));
    }
    Ok(l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFit {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub effective_sample_size: f64,
    /// False when every importance weight was zero.
    pub informative: bool,
}

/// One round of cross-entropy fitting of a diagonal Gaussian to an
/// unnormalised target density, with proposals from
/// `N(proposal_mean, proposal_std²)`.
pub fn cross_entropy_fit_with<R, T>(
    proposal_mean: &[f64],
    proposal_std: &[f64],
    n_proposal: usize,
    std_min: f64,
    mut target: T,
    rng: &mut R,
) -> Result<WeightedFit>
where
    R: Rng + ?Sized,
    T: FnMut(&[f64]) -> f64,
{
    if n_proposal < 8 {
        return Err(Error::Config(format!(
            "n_proposal {n_proposal} must be at least 8"
        )));
    }
    let dim = proposal_mean.len();
    let mut actions = Vec::with_capacity(n_proposal);
    let mut log_w = Vec::with_capacity(n_proposal);
    for _ in 0..n_proposal {
        let a: Vec<f64> = proposal_mean
            .iter()
            .zip(proposal_std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = target(&a);
        if !t.is_finite() || t < 0.0 {
            return Err(Error::NonFinite("cross-entropy weight"));
        }
        log_w.push(if t == 0.0 {
            f64::NEG_INFINITY
        } else {
            t.ln() - diag_log_density(&a, proposal_mean, proposal_std)
        });
        actions.push(a);
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(WeightedFit {
            mean: proposal_mean.to_vec(),
            std: proposal_std.to_vec(),
            effective_sample_size: 0.0,
            informative: false,
        });
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("cross-entropy weight"));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let sq: f64 = w.iter().map(|x| x * x).sum();

    let mut mean = vec![0.0; dim];
    for (a, wi) in actions.iter().zip(&w) {
        for (m, x) in mean.iter_mut().zip(a) {
            *m += wi * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; dim];
    for (a, wi) in actions.iter().zip(&w) {
        for ((v, x), m) in var.iter_mut().zip(a).zip(&mean) {
            *v += wi * (x - m) * (x - m);
        }
    }
    let std = var
        .iter()
        .map(|v| (v / total).sqrt().max(std_min))
        .collect();
    Ok(WeightedFit {
        mean,
        std,
        effective_sample_size: total * total / sq,
        informative: true,
    })
}

/// Fits the Gaussian behavior for state `s` with proposals from `π(·|s)`.
/// All-zero weights return `π`'s own parameters.
pub fn cross_entropy_fit<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    critic: &LinearCritic<ActionPolynomialFeatures>,
    state: &[f64],
    n_proposal: usize,
    std_min: f64,
    rng: &mut R,
) -> Result<GaussianBehavior> {
    let scorer = GaussianScorer::new(policy, critic, state);
    let mean = policy.mean(state);
    let std = policy.std();
    let fit = cross_entropy_fit_with(&mean, &std, n_proposal, std_min, |a| scorer.score(a), rng)?;
    let mut behavior = GaussianBehavior::on_policy(mean, std);
    if fit.informative {
        behavior.mean = fit.mean;
        behavior.std = fit.std;
    }
    behavior.effective_sample_size = fit.effective_sample_size;
    behavior.n_proposal = n_proposal;
    Ok(behavior)
}

/// CSV dump of fitted Gaussian behaviors:
/// `state_0..,mean_0..,std_0..,effective_sample_size,n_proposal`.
pub fn write_gaussian_diagnostics<W: Write>(
    rows: &[(Vec<f64>, GaussianBehavior)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some((state, b)) = rows.first() {
        let mut header: Vec<String> = (0..state.len()).map(|i| format!("state_{i}")).collect();
        header.extend((0..b.mean.len()).map(|j| format!("mean_{j}")));
        header.extend((0..b.std.len()).map(|j| format!("std_{j}")));
        header.push("effective_sample_size".into());
        header.push("n_proposal".into());
        w.write_record(&header)?;
    }
    for (state, b) in rows {
        let mut rec: Vec<String> = state.iter().map(|x| format!("{x:?}")).collect();
        rec.extend(b.mean.iter().chain(&b.std).map(|x| format!("{x:?}")));
        rec.push(format!("{:?}", b.effective_sample_size));
        rec.push(b.n_proposal.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<diagnostics>", e))?;
    Ok(())
}
