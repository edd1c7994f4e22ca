//! The actor-critic training loop, on-policy or with an active
//! importance-sampling behavior policy.
//!
//! Each step samples `A ~ b(·|s)`, observes `(R, S')`, computes the TD error
//! with the target policy's expectation over `a'`, updates the critic, and
//! then moves the actor along `ρ ∇_θ ln π(A|s) Q(s, A, w)` with
//! `ρ = π(A|s) / b(A|s)`. The state-distribution ratio `μ_π(s) / μ_b(s)` is
//! taken as 1.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::behavior::{
    build_tabular_behavior, cross_entropy_fit, GaussianBehavior, TabularBehavior,
};
use crate::critic::{td_error, ActionPolynomialFeatures, CriticFeatures, LinearCritic};
use crate::mdp::{ContinuousEnv, Pendulum, PointMassReacher, TabularMdp, Transition};
use crate::policy::{FeatureMap, GaussianPolicy, Policy, SoftmaxPolicy};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Aisac,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aisac => "aisac",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "aisac" => Ok(Algorithm::Aisac),
            "baseline" => Ok(Algorithm::Baseline),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Chain {
        n: usize,
        slip: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        slip: f64,
    },
    Pendulum,
    Reacher,
}

impl Task {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "chain" => Ok(Task::Chain { n: 5, slip: 0.1 }),
            "gridworld" => Ok(Task::Gridworld {
                width: 4,
                height: 4,
                slip: 0.1,
            }),
            "pendulum" => Ok(Task::Pendulum),
            "reacher" => Ok(Task::Reacher),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Chain { .. } => "chain",
            Task::Gridworld { .. } => "gridworld",
            Task::Pendulum => "pendulum",
            Task::Reacher => "reacher",
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self, Task::Chain { .. } | Task::Gridworld { .. })
    }

    pub fn tabular_mdp(&self, gamma: f64) -> Result<Option<TabularMdp>> {
        Ok(match *self {
            Task::Chain { n, slip } => Some(TabularMdp::chain(n, slip, gamma)?),
            Task::Gridworld {
                width,
                height,
                slip,
            } => Some(TabularMdp::gridworld(width, height, slip, gamma)?),
            _ => None,
        })
    }

    fn continuous_env(&self) -> Option<Box<dyn ContinuousEnv>> {
        match self {
            Task::Pendulum => Some(Box::new(Pendulum::default())),
            Task::Reacher => Some(Box::new(PointMassReacher::default())),
            _ => None,
        }
    }

    fn state_features(&self) -> FeatureMap {
        match self {
            Task::Pendulum => FeatureMap::pendulum_rbf(),
            Task::Reacher => FeatureMap::rbf_grid(
                &[-1.5, -1.5, -1.0, -1.0],
                &[1.5, 1.5, 1.0, 1.0],
                &[3, 3, 3, 3],
                &[false; 4],
            )
            .expect("static grid is valid"),
            _ => FeatureMap::Bias,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub alpha_theta: f64,
    pub alpha_w: f64,
    pub gamma: f64,
    pub n_iterations: usize,
    pub steps_per_iteration: usize,
    pub epsilon_mix: f64,
    pub n_proposal: usize,
    pub m_expectation_samples: usize,
    pub seed: u64,
    pub behavior_refit_period: usize,
    pub std_min: f64,
    pub eval_rollouts: usize,
    /// Defaults to the episode length (continuous) or
    /// `steps_per_iteration` (tabular).
    pub eval_horizon: Option<usize>,
    /// Defaults to a value derived from `seed`.
    pub eval_seed: Option<u64>,
    pub initial_log_std: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub critic_action_degree: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Aisac,
            alpha_theta: 1e-3,
            alpha_w: 1e-2,
            gamma: 0.99,
            n_iterations: 300,
            steps_per_iteration: 200,
            epsilon_mix: crate::behavior::DEFAULT_EPSILON_MIX,
            n_proposal: crate::behavior::DEFAULT_N_PROPOSAL,
            m_expectation_samples: 16,
            seed: 0,
            behavior_refit_period: 1,
            std_min: crate::behavior::DEFAULT_STD_MIN,
            eval_rollouts: 10,
            eval_horizon: None,
            eval_seed: None,
            initial_log_std: 0.0,
            log_std_min: -3.0,
            log_std_max: 1.0,
            critic_action_degree: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha_theta >= 0.0 && self.alpha_theta.is_finite()) {
            return bad(format!(
                "alpha_theta {} must be a finite non-negative number",
                self.alpha_theta
            ));
        }
        if !(self.alpha_w >= 0.0 && self.alpha_w.is_finite()) {
            return bad(format!(
                "alpha_w {} must be a finite non-negative number",
                self.alpha_w
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_mix) {
            return bad(format!("epsilon_mix {} outside [0, 1]", self.epsilon_mix));
        }
        if self.n_iterations == 0
            || self.steps_per_iteration == 0
            || self.behavior_refit_period == 0
        {
            return bad("iteration counts and periods must be at least 1".into());
        }
        if self.n_proposal < 8 {
            return bad(format!("n_proposal {} must be at least 8", self.n_proposal));
        }
        if self.m_expectation_samples == 0
            || self.eval_rollouts == 0
            || self.eval_horizon == Some(0)
        {
            return bad("sample counts must be at least 1".into());
        }
        if !(self.std_min > 0.0) || !(self.log_std_min <= self.log_std_max) {
            return bad("std floor must be positive and log-std bounds ordered".into());
        }
        Ok(())
    }

    fn eval_seed(&self) -> u64 {
        self.eval_seed
            .unwrap_or_else(|| derive_seed(self.seed, 0xE7A1, 0))
    }
}

/// SplitMix64 finaliser over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const ENV_STREAM: u64 = 1;
const ACTION_STREAM: u64 = 2;
const PROPOSAL_STREAM: u64 = 3;
const EXPECTATION_STREAM: u64 = 4;
const EPISODE_STREAM: u64 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub step: usize,
    pub reward: f64,
    pub td_error: f64,
    pub importance_ratio: f64,
    pub policy_entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub target_return_mean: f64,
    pub target_return_std: f64,
    pub behavior_return_mean: f64,
    pub mean_abs_td_error: f64,
    pub mean_importance_ratio: f64,
}

impl IterationSummary {
    pub const CSV_HEADER: [&'static str; 6] = [
        "iteration",
        "target_return_mean",
        "target_return_std",
        "behavior_return_mean",
        "mean_abs_td_error",
        "mean_importance_ratio",
    ];

    pub fn csv_record(&self) -> [String; 6] {
        [
            self.iteration.to_string(),
            format!("{:?}", self.target_return_mean),
            format!("{:?}", self.target_return_std),
            format!("{:?}", self.behavior_return_mean),
            format!("{:?}", self.mean_abs_td_error),
            format!("{:?}", self.mean_importance_ratio),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub iteration: usize,
    pub step: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOutcome {
    pub summaries: Vec<IterationSummary>,
    pub divergence: Option<Divergence>,
    /// Final target-policy parameters in the tensor text format.
    pub policy_checkpoint: String,
    /// Final critic weights in the tensor text format.
    pub critic_checkpoint: String,
}

/// Shared actor step `θ ← θ + α ρ Q ∇_θ ln π`.
fn apply_actor_step<P: Policy + ?Sized>(
    policy: &mut P,
    score: &[f64],
    q: f64,
    alpha_theta: f64,
    ratio: f64,
) -> Result<()> {
    if !ratio.is_finite() {
        return Err(Error::Diverged(format!("importance ratio {ratio}")));
    }
    let coef = alpha_theta * ratio * q;
    for (t, g) in policy.params_mut().iter_mut().zip(score) {
        *t += coef * g;
    }
    if policy.params().iter().any(|t| !t.is_finite()) {
        return Err(Error::Diverged("non-finite policy parameters".into()));
    }
    Ok(())
}

/// Off-policy actor update. The behavior density comes from
/// `transition.behavior_logprob`; returns the importance ratio used.
pub fn actor_update_offpolicy<P, F, S>(
    policy: &mut P,
    critic: &LinearCritic<F>,
    transition: &Transition<S, F::Action>,
    alpha_theta: f64,
) -> Result<f64>
where
    F: CriticFeatures,
    P: Policy<State = F::State, Action = F::Action>,
    S: Borrow<F::State>,
{
    let state = transition.state.borrow();
    let ratio = (policy.log_density(state, &transition.action) - transition.behavior_logprob).exp();
    let score = policy.score(state, &transition.action)?;
    let q = critic.q_value(state, &transition.action);
    apply_actor_step(policy, &score, q, alpha_theta, ratio)?;
    Ok(ratio)
}

/// On-policy actor update `θ ← θ + α ∇_θ ln π(A|s) Q(s, A, w)`.
pub fn actor_update_onpolicy<P, F, S>(
    policy: &mut P,
    critic: &LinearCritic<F>,
    transition: &Transition<S, F::Action>,
    alpha_theta: f64,
) -> Result<()>
where
    F: CriticFeatures,
    P: Policy<State = F::State, Action = F::Action>,
    S: Borrow<F::State>,
{
    let state = transition.state.borrow();
    let score = policy.score(state, &transition.action)?;
    let q = critic.q_value(state, &transition.action);
    apply_actor_step(policy, &score, q, alpha_theta, 1.0)
}

#[derive(Default)]
struct IterationStats {
    abs_td: f64,
    ratio: f64,
    steps: usize,
    episode_returns: Vec<f64>,
}

impl IterationStats {
    fn record(&mut self, rec: &StepRecord) {
        self.abs_td += rec.td_error.abs();
        self.ratio += rec.importance_ratio;
        self.steps += 1;
    }

    fn summary(&self, iteration: usize, eval: &[f64], running_return: f64) -> IterationSummary {
        let n = eval.len() as f64;
        let mean = eval.iter().sum::<f64>() / n;
        let var = eval.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let behavior = if self.episode_returns.is_empty() {
            running_return
        } else {
            self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64
        };
        IterationSummary {
            iteration,
            target_return_mean: mean,
            target_return_std: var.sqrt(),
            behavior_return_mean: behavior,
            mean_abs_td_error: self.abs_td / self.steps as f64,
            mean_importance_ratio: self.ratio / self.steps as f64,
        }
    }
}

pub fn run_training(task: &Task, config: &TrainConfig) -> Result<TrainingOutcome> {
    run_training_with(task, config, |_| {})
}

/// Runs training and reports every step to `observer`. Configuration errors
/// are returned as `Err`; divergence during the run ends it early and is
/// reported in [`TrainingOutcome::divergence`].
pub fn run_training_with<O>(
    task: &Task,
    config: &TrainConfig,
    observer: O,
) -> Result<TrainingOutcome>
where
    O: FnMut(&StepRecord),
{
    config.validate()?;
    match task.tabular_mdp(config.gamma)? {
        Some(mdp) => Ok(run_tabular(&mdp, config, observer)),
        None => {
            let env = task
                .continuous_env()
                .expect("non-tabular tasks are continuous");
            let eval_env = task
                .continuous_env()
                .expect("non-tabular tasks are continuous");
            Ok(run_continuous(
                env,
                eval_env,
                task.state_features(),
                config,
                observer,
            ))
        }
    }
}

/// Tabular run on an explicit MDP (softmax actor, one-hot critic).
pub fn run_tabular<O>(mdp: &TabularMdp, config: &TrainConfig, mut observer: O) -> TrainingOutcome
where
    O: FnMut(&StepRecord),
{
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    let mut policy = SoftmaxPolicy::tabular(n_states, n_actions);
    let mut critic = LinearCritic::tabular(n_states, n_actions, config.alpha_w);
    let mut env_rng = stream_rng(config.seed, ENV_STREAM);
    let mut act_rng = stream_rng(config.seed, ACTION_STREAM);
    let gamma = mdp.gamma();
    let horizon = config.eval_horizon.unwrap_or(config.steps_per_iteration);

    let mut state = mdp.sample_initial(&mut env_rng);
    let mut behavior: Option<TabularBehavior> = None;
    let mut summaries = Vec::with_capacity(config.n_iterations);
    let mut divergence = None;

    'outer: for iteration in 0..config.n_iterations {
        let mut stats = IterationStats::default();
        let mut collected = 0.0;
        for step in 0..config.steps_per_iteration {
            let global = (iteration * config.steps_per_iteration + step) as u64;
            let result = (|| -> Result<StepRecord> {
                let probs = policy.probs(state);
                let (action, behavior_logprob) = match config.algorithm {
                    Algorithm::Baseline => {
                        let a = crate::mdp::sample_categorical(&probs, &mut act_rng);
                        (a, probs[a].ln())
                    }
                    Algorithm::Aisac => {
                        if behavior.is_none()
                            || global.is_multiple_of(config.behavior_refit_period as u64)
                        {
                            behavior = Some(build_tabular_behavior(
                                &policy,
                                &critic.q_table(),
                                config.epsilon_mix,
                            )?);
                        }
                        let b = behavior.as_ref().expect("behavior was just built");
                        let a = b.sample(state, &mut act_rng);
                        (a, b.log_density(state, a)?)
                    }
                };
                let next_state = mdp.sample_next(state, action, &mut env_rng);
                let transition = Transition {
                    state,
                    action,
                    reward: mdp.reward(state, action),
                    next_state,
                    done: false,
                    behavior_logprob,
                };
                let delta = td_error(
                    &critic,
                    &policy,
                    &transition,
                    gamma,
                    config.m_expectation_samples,
                    0,
                )?;
                critic.update(&state, &action, delta)?;
                let ratio = match config.algorithm {
                    Algorithm::Baseline => {
                        actor_update_onpolicy(
                            &mut policy,
                            &critic,
                            &transition,
                            config.alpha_theta,
                        )?;
                        1.0
                    }
                    Algorithm::Aisac => actor_update_offpolicy(
                        &mut policy,
                        &critic,
                        &transition,
                        config.alpha_theta,
                    )?,
                };
                let record = StepRecord {
                    iteration,
                    step,
                    reward: transition.reward,
                    td_error: delta,
                    importance_ratio: ratio,
                    policy_entropy: policy.entropy(&state),
                };
                state = next_state;
                Ok(record)
            })();
            match result {
                Ok(record) => {
                    collected += record.reward;
                    stats.record(&record);
                    observer(&record);
                }
                Err(e) => {
                    divergence = Some(Divergence {
                        iteration,
                        step,
                        message: e.to_string(),
                    });
                    break 'outer;
                }
            }
        }
        let eval = evaluate_tabular(
            mdp,
            &policy,
            config.eval_rollouts,
            horizon,
            config.eval_seed(),
        );
        summaries.push(stats.summary(iteration, &eval, collected));
    }

    TrainingOutcome {
        summaries,
        divergence,
        policy_checkpoint: policy.to_text(),
        critic_checkpoint: critic.to_text(),
    }
}

/// Undiscounted returns of greedy rollouts of the target policy.
pub fn evaluate_tabular(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Vec<f64> {
    (0..rollouts)
        .map(|k| {
            let mut rng = stream_rng(derive_seed(seed, 0, k as u64), ENV_STREAM);
            let mut s = mdp.sample_initial(&mut rng);
            let mut total = 0.0;
            for _ in 0..horizon {
                let a = policy.greedy(&s);
                total += mdp.reward(s, a);
                s = mdp.sample_next(s, a, &mut rng);
            }
            total
        })
        .collect()
}

/// Undiscounted returns of mean-action rollouts of the target policy.
pub fn evaluate_continuous(
    env: &mut dyn ContinuousEnv,
    policy: &GaussianPolicy,
    rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..rollouts)
        .map(|k| {
            let mut s = env.reset(derive_seed(seed, 0, k as u64));
            let mut total = 0.0;
            for _ in 0..horizon {
                let out = env.step(&policy.greedy(&s))?;
                total += out.reward;
                if out.done {
                    break;
                }
                s = out.next_state;
            }
            Ok(total)
        })
        .collect()
}

/// Fitted behavior expressed relative to the target mean so it can be
/// reused at other states between refits.
struct BehaviorOffset {
    mean_shift: Vec<f64>,
    std: Vec<f64>,
}

fn run_continuous<O>(
    mut env: Box<dyn ContinuousEnv>,
    mut eval_env: Box<dyn ContinuousEnv>,
    state_map: FeatureMap,
    config: &TrainConfig,
    mut observer: O,
) -> TrainingOutcome
where
    O: FnMut(&StepRecord),
{
    let action_dim = env.action_dim();
    let mut policy = GaussianPolicy::new(state_map.clone(), action_dim, config.initial_log_std)
        .with_log_std_bounds(config.log_std_min, config.log_std_max);
    let scale: Vec<f64> = env
        .action_low()
        .iter()
        .zip(env.action_high())
        .map(|(lo, hi)| lo.abs().max(hi.abs()))
        .collect();
    let mut critic = LinearCritic::new(
        ActionPolynomialFeatures::new(state_map, scale, config.critic_action_degree),
        config.alpha_w,
    );
    let mut act_rng = stream_rng(config.seed, ACTION_STREAM);
    let mut ce_rng = stream_rng(config.seed, PROPOSAL_STREAM);
    let horizon = config.eval_horizon.unwrap_or(env.max_episode_steps());
    let on_policy = config.algorithm == Algorithm::Baseline || config.epsilon_mix >= 1.0;

    let mut episode = 0u64;
    let mut state = env.reset(derive_seed(config.seed, EPISODE_STREAM, episode));
    let mut t_in_episode = 0usize;
    let mut episode_return = 0.0;
    let mut offset: Option<BehaviorOffset> = None;
    let mut summaries = Vec::with_capacity(config.n_iterations);
    let mut divergence = None;

    'outer: for iteration in 0..config.n_iterations {
        let mut stats = IterationStats::default();
        for step in 0..config.steps_per_iteration {
            let global = (iteration * config.steps_per_iteration + step) as u64;
            let result = (|| -> Result<StepRecord> {
                let (action, behavior_logprob) = if on_policy {
                    let a = policy.sample(&state, &mut act_rng);
                    let lp = policy.log_density(&state, &a);
                    (a, lp)
                } else {
                    let mean = policy.mean(&state);
                    if offset.is_none()
                        || global.is_multiple_of(config.behavior_refit_period as u64)
                    {
                        let fit = cross_entropy_fit(
                            &policy,
                            &critic,
                            &state,
                            config.n_proposal,
                            config.std_min,
                            &mut ce_rng,
                        )?;
                        offset = Some(BehaviorOffset {
                            mean_shift: fit.mean.iter().zip(&mean).map(|(f, m)| f - m).collect(),
                            std: fit.std,
                        });
                    }
                    let off = offset.as_ref().expect("offset was just fitted");
                    let mut b = GaussianBehavior::on_policy(mean.clone(), policy.std())
                        .with_mixing(config.epsilon_mix);
                    b.mean = mean
                        .iter()
                        .zip(&off.mean_shift)
                        .map(|(m, d)| m + d)
                        .collect();
                    b.std = off.std.clone();
                    let a = b.sample(&mut act_rng);
                    let lp = crate::behavior::behavior_logdensity_gaussian(&b, &a)?;
                    (a, lp)
                };
                let out = env.step(&action)?;
                let transition = Transition {
                    state: state.clone(),
                    action,
                    reward: out.reward,
                    next_state: out.next_state,
                    done: out.done,
                    behavior_logprob,
                };
                let delta = td_error(
                    &critic,
                    &policy,
                    &transition,
                    config.gamma,
                    config.m_expectation_samples,
                    derive_seed(config.seed, EXPECTATION_STREAM, global),
                )?;
                critic.update(&transition.state, &transition.action, delta)?;
                let ratio = if config.algorithm == Algorithm::Baseline {
                    actor_update_onpolicy(&mut policy, &critic, &transition, config.alpha_theta)?;
                    1.0
                } else {
                    actor_update_offpolicy(&mut policy, &critic, &transition, config.alpha_theta)?
                };
                policy.project();
                let record = StepRecord {
                    iteration,
                    step,
                    reward: transition.reward,
                    td_error: delta,
                    importance_ratio: ratio,
                    policy_entropy: policy.entropy(&transition.state),
                };

                episode_return += transition.reward;
                t_in_episode += 1;
                if transition.done || t_in_episode >= env.max_episode_steps() {
                    stats.episode_returns.push(episode_return);
                    episode += 1;
                    episode_return = 0.0;
                    t_in_episode = 0;
                    state = env.reset(derive_seed(config.seed, EPISODE_STREAM, episode));
                } else {
                    state = transition.next_state;
                }
                Ok(record)
            })();
            match result {
                Ok(record) => {
                    stats.record(&record);
                    observer(&record);
                }
                Err(e) => {
                    divergence = Some(Divergence {
                        iteration,
                        step,
                        message: e.to_string(),
                    });
                    break 'outer;
                }
            }
        }
        match evaluate_continuous(
            &mut *eval_env,
            &policy,
            config.eval_rollouts,
            horizon,
            config.eval_seed(),
        ) {
            Ok(eval) => summaries.push(stats.summary(iteration, &eval, episode_return)),
            Err(e) => {
                divergence = Some(Divergence {
                    iteration,
                    step: config.steps_per_iteration,
                    message: e.to_string(),
                });
                break;
            }
        }
    }

    TrainingOutcome {
        summaries,
        divergence,
        policy_checkpoint: policy.to_text(),
        critic_checkpoint: critic.to_text(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::TabularFeatures;
    use crate::mdp::value_iteration;
    use rand::Rng;

    fn quick(task: &str, algorithm: Algorithm) -> (Task, TrainConfig) {
        let task = Task::from_name(task).unwrap();
        let config = TrainConfig {
            algorithm,
            n_iterations: 5,
            steps_per_iteration: 40,
            seed: 17,
            eval_rollouts: 3,
            eval_horizon: Some(40),
            n_proposal: 16,
            m_expectation_samples: 4,
            ..TrainConfig::default()
        };
        (task, config)
    }

    fn records(task: &Task, config: &TrainConfig) -> (TrainingOutcome, Vec<StepRecord>) {
        let mut recs = Vec::new();
        let out = run_training_with(task, config, |r| recs.push(r.clone())).unwrap();
        (out, recs)
    }

    #[test]
    fn offpolicy_update_with_matching_behavior_is_onpolicy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let critic = LinearCritic::with_weights(
            TabularFeatures {
                n_states: 3,
                n_actions: 2,
            },
            w,
            0.1,
        )
        .unwrap();
        let pi = SoftmaxPolicy::tabular_with(3, 2, theta).unwrap();
        let t = Transition {
            state: 1,
            action: 0,
            reward: 0.3,
            next_state: 2,
            done: false,
            behavior_logprob: pi.log_density(&1, &0),
        };
        let (mut a, mut b) = (pi.clone(), pi.clone());
        let ratio = actor_update_offpolicy(&mut a, &critic, &t, 0.05).unwrap();
        actor_update_onpolicy(&mut b, &critic, &t, 0.05).unwrap();
        assert_eq!(ratio, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn offpolicy_update_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let critic = LinearCritic::with_weights(
            TabularFeatures {
                n_states: 3,
                n_actions: 2,
            },
            w.clone(),
            0.1,
        )
        .unwrap();
        let mut pi = SoftmaxPolicy::tabular_with(3, 2, theta.clone()).unwrap();
        let b = 0.8;
        let t = Transition {
            state: 2,
            action: 1,
            reward: 0.0,
            next_state: 0,
            done: false,
            behavior_logprob: f64::ln(b),
        };
        let z = theta[4].exp() + theta[5].exp();
        let (p0, p1) = (theta[4].exp() / z, theta[5].exp() / z);
        let rho = p1 / b;
        let q = w[5];
        let alpha = 0.1;
        let mut expected = theta.clone();
        expected[4] += alpha * rho * q * (0.0 - p0);
        expected[5] += alpha * rho * q * (1.0 - p1);
        let ratio = actor_update_offpolicy(&mut pi, &critic, &t, alpha).unwrap();
        assert!((ratio - rho).abs() < 1e-12);
        for (x, y) in pi.params().iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_q_or_zero_step_leaves_actor_unchanged() {
        let critic = LinearCritic::tabular(2, 2, 0.1);
        let pi = SoftmaxPolicy::tabular_with(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let t = Transition {
            state: 0,
            action: 1,
            reward: 1.0,
            next_state: 1,
            done: false,
            behavior_logprob: 0.5f64.ln(),
        };
        let mut p = pi.clone();
        actor_update_offpolicy(&mut p, &critic, &t, 0.1).unwrap();
        assert_eq!(p, pi);

        let mut critic = critic;
        critic.update(&0, &1, 1.0).unwrap();
        let mut p = pi.clone();
        actor_update_onpolicy(&mut p, &critic, &t, 0.0).unwrap();
        assert_eq!(p, pi);
    }

    #[test]
    fn one_hot_known_score() {
        let mut critic = LinearCritic::tabular(1, 2, 1.0);
        critic.update(&0, &0, 2.0).unwrap();
        let mut pi = SoftmaxPolicy::tabular(1, 2);
        let t = Transition {
            state: 0,
            action: 0,
            reward: 0.0,
            next_state: 0,
            done: false,
            behavior_logprob: 0.5f64.ln(),
        };
        actor_update_onpolicy(&mut pi, &critic, &t, 0.5).unwrap();
        // θ += 0.5 · 2 · (0.5, -0.5)
        assert_eq!(pi.params(), &[0.5, -0.5]);
    }

    #[test]
    fn runs_are_deterministic() {
        for (name, alg) in [
            ("chain", Algorithm::Aisac),
            ("pendulum", Algorithm::Aisac),
            ("reacher", Algorithm::Baseline),
        ] {
            let (task, config) = quick(name, alg);
            let (a, ra) = records(&task, &config);
            let (b, rb) = records(&task, &config);
            assert_eq!(a, b);
            assert_eq!(ra, rb);
            assert_eq!(ra.len(), 200, "{name}: {:?}", a.divergence);
        }
    }

    #[test]
    fn full_mixing_reproduces_the_baseline() {
        for name in ["chain", "gridworld", "pendulum"] {
            let (task, mut config) = quick(name, Algorithm::Baseline);
            let (base, base_recs) = records(&task, &config);
            config.algorithm = Algorithm::Aisac;
            config.epsilon_mix = 1.0;
            let (ais, ais_recs) = records(&task, &config);
            assert_eq!(base, ais, "{name}");
            assert_eq!(base_recs, ais_recs, "{name}");
        }
    }

    #[test]
    fn importance_ratios_are_bounded() {
        for name in ["chain", "gridworld", "pendulum", "reacher"] {
            let (task, mut config) = quick(name, Algorithm::Aisac);
            config.epsilon_mix = 0.2;
            let (_, recs) = records(&task, &config);
            assert!(
                recs.iter()
                    .all(|r| r.importance_ratio > 0.0 && r.importance_ratio <= 5.0 + 1e-12),
                "{name}"
            );
        }
    }

    #[test]
    fn frozen_parameters_give_constant_returns() {
        for name in ["chain", "pendulum"] {
            let (task, mut config) = quick(name, Algorithm::Aisac);
            config.alpha_theta = 0.0;
            config.alpha_w = 0.0;
            let out = run_training(&task, &config).unwrap();
            let first = out.summaries[0].target_return_mean;
            assert!(out.summaries.iter().all(|s| s.target_return_mean == first));
            let (_, fresh) = quick(name, Algorithm::Aisac);
            let untouched = run_training(
                &task,
                &TrainConfig {
                    n_iterations: 1,
                    alpha_theta: 0.0,
                    alpha_w: 0.0,
                    ..fresh
                },
            )
            .unwrap();
            assert_eq!(untouched.policy_checkpoint, out.policy_checkpoint);
        }
    }

    #[test]
    fn chain_training_finds_the_optimal_policy() {
        let mdp = TabularMdp::chain(3, 0.1, 0.9).unwrap();
        let optimal = value_iteration(&mdp, 1e-12).unwrap().greedy;
        for alg in [Algorithm::Baseline, Algorithm::Aisac] {
            let config = TrainConfig {
                algorithm: alg,
                alpha_theta: 0.05,
                alpha_w: 0.1,
                gamma: 0.9,
                n_iterations: 200,
                steps_per_iteration: 50,
                seed: 3,
                eval_rollouts: 2,
                ..TrainConfig::default()
            };
            let out = run_tabular(&mdp, &config, |_| {});
            assert!(out.divergence.is_none());
            let policy = SoftmaxPolicy::from_text(&out.policy_checkpoint).unwrap();
            let greedy: Vec<usize> = (0..3).map(|s| policy.greedy(&s)).collect();
            assert_eq!(greedy, optimal, "{alg}");
        }
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let (task, mut config) = quick("pendulum", Algorithm::Baseline);
        config.alpha_w = 1e6;
        config.alpha_theta = 1e6;
        let out = run_training(&task, &config).unwrap();
        assert!(out.divergence.is_some());
        assert!(out.summaries.len() < config.n_iterations);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (task, config) = quick("chain", Algorithm::Aisac);
        for bad in [
            TrainConfig {
                gamma: 1.0,
                ..config.clone()
            },
            TrainConfig {
                steps_per_iteration: 0,
                ..config.clone()
            },
            TrainConfig {
                behavior_refit_period: 0,
                ..config.clone()
            },
            TrainConfig {
                epsilon_mix: -0.1,
                ..config.clone()
            },
            TrainConfig {
                n_proposal: 3,
                ..config.clone()
            },
        ] {
            assert!(matches!(run_training(&task, &bad), Err(Error::Config(_))));
        }
        assert!(Task::from_name("cheetah").is_err());
        assert!("sac".parse::<Algorithm>().is_err());
    }
}
