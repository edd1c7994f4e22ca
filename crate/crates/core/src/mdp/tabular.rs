use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::ActionDistribution;
use crate::tensor_text::{self, Tensor};
use crate::{Error, Result};

const SUM_TOL: f64 = 1e-12;
const BELLMAN_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100_000;
/// Upper bound on the state count of the generated chain and gridworld.
pub const MAX_GENERATED_STATES: usize = 4096;

/// Finite MDP with expected-reward table `R[s][a]` and transition tensor
/// `P[s][a][s']`, both stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
}

fn check_distribution(what: &str, probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if transition.len() != n_states * n_actions * n_states
            || reward.len() != n_states * n_actions
            || initial.len() != n_states
        {
            return Err(Error::InvalidModel(
                "tensor sizes do not match dimensions".into(),
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!(
                "discount {gamma} outside [0, 1)"
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("non-finite reward".into()));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            check_distribution(&format!("P[{}][{}]", i / n_actions, i % n_actions), row)?;
        }
        check_distribution("initial distribution", &initial)?;
        Ok(TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial,
        })
    }

    /// Random MDP: Dirichlet(1, .., 1) transition rows and initial
    /// distribution, rewards uniform in [-1, 1].
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut flat_dirichlet = |n: usize| -> Vec<f64> {
            let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|x| x / total).collect()
        };
        let transition = (0..n_states * n_actions)
            .flat_map(|_| flat_dirichlet(n_states))
            .collect();
        let initial = flat_dirichlet(n_states);
        let reward = (0..n_states * n_actions)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Self::new(n_states, n_actions, transition, reward, gamma, initial)
    }

    /// Corridor of `n` states with actions left (0) and right (1). Staying
    /// at the left wall pays 0.1 per step, staying at the right wall pays 1.
    /// With probability `slip` the opposite move is taken. Starts at state 0.
    pub fn chain(n: usize, slip: f64, gamma: f64) -> Result<Self> {
        if !(2..=MAX_GENERATED_STATES).contains(&n) || !(0.0..=1.0).contains(&slip) {
            return Err(Error::InvalidModel(format!(
                "chain needs 2 <= n <= {MAX_GENERATED_STATES} and slip in [0, 1]"
            )));
        }
        let mut transition = vec![0.0; n * 2 * n];
        let mut reward = vec![0.0; n * 2];
        for s in 0..n {
            let left = s.saturating_sub(1);
            let right = (s + 1).min(n - 1);
            for a in 0..2 {
                let (intended, other) = if a == 0 { (left, right) } else { (right, left) };
                let row = &mut transition[(s * 2 + a) * n..(s * 2 + a + 1) * n];
                row[intended] += 1.0 - slip;
                row[other] += slip;
                let pay = |dest: usize| match (s, dest) {
                    (0, 0) => 0.1,
                    (s, d) if s == n - 1 && d == n - 1 => 1.0,
                    _ => 0.0,
                };
                reward[s * 2 + a] = (1.0 - slip) * pay(intended) + slip * pay(other);
            }
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        Self::new(n, 2, transition, reward, gamma, initial)
    }

    /// `width x height` grid with actions up, right, down, left. Entering the
    /// bottom-right goal pays 1; any action from the goal returns to the
    /// top-left start. With probability `slip` a uniformly random direction
    /// is taken instead.
    pub fn gridworld(width: usize, height: usize, slip: f64, gamma: f64) -> Result<Self> {
        let cells = width.saturating_mul(height);
        if !(2..=MAX_GENERATED_STATES).contains(&cells) || !(0.0..=1.0).contains(&slip) {
            return Err(Error::InvalidModel(format!(
                "gridworld needs 2..={MAX_GENERATED_STATES} cells and slip in [0, 1]"
            )));
        }
        let n = width * height;
        let goal = n - 1;
        let step = |s: usize, dir: usize| -> usize {
            let (x, y) = (s % width, s / width);
            match dir {
                0 if y > 0 => s - width,
                1 if x + 1 < width => s + 1,
                2 if y + 1 < height => s + width,
                3 if x > 0 => s - 1,
                _ => s,
            }
        };
        let mut transition = vec![0.0; n * 4 * n];
        let mut reward = vec![0.0; n * 4];
        for s in 0..n {
            for a in 0..4 {
                let row = &mut transition[(s * 4 + a) * n..(s * 4 + a + 1) * n];
                if s == goal {
                    row[0] = 1.0;
                    continue;
                }
                row[step(s, a)] += 1.0 - slip;
                for dir in 0..4 {
                    row[step(s, dir)] += slip / 4.0;
                }
                reward[s * 4 + a] = row[goal];
            }
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        Self::new(n, 4, transition, reward, gamma, initial)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidModel(format!(
                "discount {gamma} outside [0, 1)"
            )));
        }
        out.gamma = gamma;
        Ok(out)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.transition_row(s, a), rng)
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor::scalar("gamma", self.gamma),
            Tensor::new("initial", vec![self.n_states], self.initial.clone()),
            Tensor::new(
                "reward",
                vec![self.n_states, self.n_actions],
                self.reward.clone(),
            ),
            Tensor::new(
                "transition",
                vec![self.n_states, self.n_actions, self.n_states],
                self.transition.clone(),
            ),
        ]
    }

    pub fn to_text(&self) -> String {
        tensor_text::write(&self.to_tensors())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file = tensor_text::parse(text)?;
        let reward = file.get("reward")?;
        let [n_states, n_actions] = reward.shape[..] else {
            return Err(Error::InvalidModel("reward must be a matrix".into()));
        };
        Self::new(
            n_states,
            n_actions,
            file.expect("transition", &[n_states, n_actions, n_states])?
                .to_vec(),
            reward.data.clone(),
            file.expect("gamma", &[1])?[0],
            file.expect("initial", &[n_states])?.to_vec(),
        )
    }

    fn check_policy<P: ActionDistribution + ?Sized>(&self, policy: &P) -> Result<()> {
        if policy.n_actions() != self.n_actions {
            return Err(Error::InvalidModel(format!(
                "policy has {} actions, MDP has {}",
                policy.n_actions(),
                self.n_actions
            )));
        }
        Ok(())
    }

    /// State-to-state matrix and expected reward under `policy`.
    fn policy_dynamics<P: ActionDistribution + ?Sized>(
        &self,
        policy: &P,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_states;
        let mut p_pi = DMatrix::zeros(n, n);
        let mut r_pi = DVector::zeros(n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pi = policy.action_prob(s, a);
                r_pi[s] += pi * self.reward(s, a);
                for (s2, p) in self.transition_row(s, a).iter().enumerate() {
                    p_pi[(s, s2)] += pi * p;
                }
            }
        }
        (p_pi, r_pi)
    }

    fn bellman_backup<P: ActionDistribution + ?Sized>(
        &self,
        policy: &P,
        q: &ActionValues,
    ) -> ActionValues {
        let v: Vec<f64> = (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| policy.action_prob(s, a) * q.get(s, a))
                    .sum()
            })
            .collect();
        let mut out = ActionValues::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let next: f64 = self
                    .transition_row(s, a)
                    .iter()
                    .zip(&v)
                    .map(|(p, v)| p * v)
                    .sum();
                *out.get_mut(s, a) = self.reward(s, a) + self.gamma * next;
            }
        }
        out
    }
}

/// Inverse-CDF draw from a discrete distribution using one uniform variate.
/// The last index with positive weight absorbs rounding at the top end.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Action-value table `Q[s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionValues {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl ActionValues {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::from_vec(n_states, n_actions, vec![0.0; n_states * n_actions])
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "Q table size mismatch");
        ActionValues {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn get_mut(&mut self, s: usize, a: usize) -> &mut f64 {
        &mut self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs_diff(&self, other: &ActionValues) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Explicit probability table; handy for greedy policies and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    n_actions: usize,
    probs: Vec<f64>,
}

impl ProbTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), n_states * n_actions);
        ProbTable { n_actions, probs }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::new(
            n_states,
            n_actions,
            vec![1.0 / n_actions as f64; n_states * n_actions],
        )
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }
}

impl ActionDistribution for ProbTable {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn action_prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }
}

/// Exact `Q^π` by a direct linear solve, polished by Bellman sweeps until
/// the residual is below 1e-10.
pub fn exact_q_values<P: ActionDistribution + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<ActionValues> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let (p_pi, r_pi) = mdp.policy_dynamics(policy);
    let system = DMatrix::identity(n, n) - p_pi * mdp.gamma;
    let v = system
        .lu()
        .solve(&r_pi)
        .ok_or(Error::Singular("state values"))?;

    let mut q = ActionValues::zeros(n, mdp.n_actions);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let next: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(v.iter())
                .map(|(p, v)| p * v)
                .sum();
            *q.get_mut(s, a) = mdp.reward(s, a) + mdp.gamma * next;
        }
    }

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let backed = mdp.bellman_backup(policy, &q);
        residual = backed.max_abs_diff(&q);
        if !residual.is_finite() {
            break;
        }
        if residual < BELLMAN_TOL {
            return Ok(q);
        }
        q = backed;
    }
    Err(Error::NotConverged { residual })
}

/// Normalised γ-discounted state occupancy `d = (1-γ) Σ_t γ^t μ P_π^t`.
pub fn exact_state_distribution<P: ActionDistribution + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states;
    let (p_pi, _) = mdp.policy_dynamics(policy);
    let system = DMatrix::identity(n, n) - p_pi.transpose() * mdp.gamma;
    let rhs = DVector::from_column_slice(&mdp.initial) * (1.0 - mdp.gamma);
    let d = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("state occupancy"))?;
    let total: f64 = d.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Singular("state occupancy"));
    }
    Ok(d.iter().map(|x| (x / total).max(0.0)).collect())
}

/// `Σ_s μ(s) Σ_a π(a|s) R[s][a]`.
pub fn average_reward<P: ActionDistribution + ?Sized>(mdp: &TabularMdp, policy: &P) -> Result<f64> {
    mdp.check_policy(policy)?;
    Ok((0..mdp.n_states)
        .map(|s| {
            mdp.initial[s]
                * (0..mdp.n_actions)
                    .map(|a| policy.action_prob(s, a) * mdp.reward(s, a))
                    .sum::<f64>()
        })
        .sum())
}

/// Normalised discounted return `(1-γ) Σ_s μ(s) V^π(s)`. Its gradient with
/// respect to the policy parameters is `Σ_s d(s) Σ_a ∇π(a|s) Q^π(s,a)`.
pub fn discounted_return<P: ActionDistribution + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<f64> {
    let q = exact_q_values(mdp, policy)?;
    Ok((1.0 - mdp.gamma)
        * (0..mdp.n_states)
            .map(|s| {
                mdp.initial[s]
                    * (0..mdp.n_actions)
                        .map(|a| policy.action_prob(s, a) * q.get(s, a))
                        .sum::<f64>()
            })
            .sum::<f64>())
}

#[derive(Clone, Debug)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub q: ActionValues,
    pub greedy: Vec<usize>,
}

/// Optimal values by value iteration to sup-norm change below `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueIteration> {
    let (n, m) = (mdp.n_states, mdp.n_actions);
    let mut v = vec![0.0; n];
    let mut q = ActionValues::zeros(n, m);
    for _ in 0..MAX_SWEEPS {
        for s in 0..n {
            for a in 0..m {
                let next: f64 = mdp
                    .transition_row(s, a)
                    .iter()
                    .zip(&v)
                    .map(|(p, v)| p * v)
                    .sum();
                *q.get_mut(s, a) = mdp.reward(s, a) + mdp.gamma * next;
            }
        }
        let new_v: Vec<f64> = (0..n)
            .map(|s| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = new_v
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = new_v;
        if delta < tol {
            let greedy = (0..n).map(|s| argmax(q.row(s))).collect();
            return Ok(ValueIteration {
                values: v,
                q,
                greedy,
            });
        }
    }
    Err(Error::NotConverged { residual: f64::NAN })
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![reward], gamma, vec![1.0]).unwrap()
    }

    /// Truncated Monte-Carlo estimate of Q(s,a): mean discounted return of
    /// depth-`depth` rollouts that start with `a` in `s` and then follow π.
    fn rollout_q(
        mdp: &TabularMdp,
        pi: &ProbTable,
        s: usize,
        a: usize,
        depth: usize,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let mut total = 0.0;
        for _ in 0..n {
            let (mut state, mut action, mut discount, mut ret) = (s, a, 1.0, 0.0);
            for _ in 0..depth {
                ret += discount * mdp.reward(state, action);
                discount *= mdp.gamma();
                state = mdp.sample_next(state, action, rng);
                action = sample_categorical(&pi.action_probs(state), rng);
            }
            total += ret;
        }
        total / n as f64
    }

    #[test]
    fn single_state_geometric_series() {
        let q = exact_q_values(&single(1.0, 0.5), &ProbTable::uniform(1, 1)).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_gives_zero_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = TabularMdp::random(4, 3, 0.9, &mut rng).unwrap();
        let zero = TabularMdp::new(
            4,
            3,
            mdp.transition.clone(),
            vec![0.0; 12],
            0.9,
            mdp.initial.clone(),
        )
        .unwrap();
        let q = exact_q_values(&zero, &ProbTable::uniform(4, 3)).unwrap();
        assert!(q.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn q_matches_truncated_rollouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // γ = 0.3 keeps the per-rollout std near 0.2, so 5e5 rollouts give a
        // standard error of ~3e-4; truncation at depth 200 is exact to 1e-100.
        let mdp = TabularMdp::random(3, 2, 0.3, &mut rng).unwrap();
        let pi = ProbTable::new(3, 2, vec![0.3, 0.7, 0.5, 0.5, 0.9, 0.1]);
        let q = exact_q_values(&mdp, &pi).unwrap();
        for (s, a) in [(0, 0), (1, 1), (2, 0)] {
            let mc = rollout_q(&mdp, &pi, s, a, 200, 500_000, &mut rng);
            assert!(
                (mc - q.get(s, a)).abs() < 1e-3,
                "Q({s},{a}) = {} vs rollout {mc}",
                q.get(s, a)
            );
        }
    }

    #[test]
    fn bellman_residual_is_tiny_on_random_mdps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mdp = TabularMdp::random(5, 3, 0.99, &mut rng).unwrap();
            let pi = ProbTable::uniform(5, 3);
            let q = exact_q_values(&mdp, &pi).unwrap();
            assert!(mdp.bellman_backup(&pi, &q).max_abs_diff(&q) < 1e-10);
        }
    }

    #[test]
    fn occupancy_trivial_cases() {
        let d = exact_state_distribution(&single(0.0, 0.9), &ProbTable::uniform(1, 1)).unwrap();
        assert_eq!(d, vec![1.0]);

        let cycle = TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap();
        let d = exact_state_distribution(&cycle, &ProbTable::uniform(2, 1)).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn occupancy_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = TabularMdp::random(4, 2, 0.8, &mut rng).unwrap();
        let pi = ProbTable::new(4, 2, vec![0.2, 0.8, 0.6, 0.4, 0.5, 0.5, 1.0, 0.0]);
        let d = exact_state_distribution(&mdp, &pi).unwrap();

        // d = (1-γ) Σ_t γ^t μ P_π^t, summed until γ^t is below 1e-17.
        let mut visit = mdp.initial().to_vec();
        let mut oracle = vec![0.0; 4];
        let mut weight = 1.0 - mdp.gamma();
        while weight > 1e-17 {
            for s in 0..4 {
                oracle[s] += weight * visit[s];
            }
            let mut next = vec![0.0; 4];
            for s in 0..4 {
                for a in 0..2 {
                    for (s2, p) in mdp.transition_row(s, a).iter().enumerate() {
                        next[s2] += visit[s] * pi.action_prob(s, a) * p;
                    }
                }
            }
            visit = next;
            weight *= mdp.gamma();
        }
        for s in 0..4 {
            assert!((d[s] - oracle[s]).abs() < 1e-10, "{d:?} vs {oracle:?}");
        }
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_reward_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng).unwrap();
        let constant = TabularMdp::new(
            3,
            2,
            mdp.transition.clone(),
            vec![0.7; 6],
            0.9,
            mdp.initial.clone(),
        )
        .unwrap();
        let pi = ProbTable::new(3, 2, vec![0.1, 0.9, 0.4, 0.6, 0.5, 0.5]);
        assert!((average_reward(&constant, &pi).unwrap() - 0.7).abs() < 1e-15);

        let point = TabularMdp::new(
            3,
            2,
            mdp.transition.clone(),
            mdp.reward.clone(),
            0.9,
            vec![0.0, 1.0, 0.0],
        )
        .unwrap();
        let det = ProbTable::deterministic(&[0, 1, 0], 2);
        assert_eq!(average_reward(&point, &det).unwrap(), mdp.reward(1, 1));

        let mut direct = 0.0;
        for s in 0..3 {
            for a in 0..2 {
                direct += mdp.initial()[s] * pi.action_prob(s, a) * mdp.reward(s, a);
            }
        }
        assert!((average_reward(&mdp, &pi).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn validation_rejects_bad_models() {
        assert!(TabularMdp::new(1, 1, vec![0.9], vec![0.0], 0.5, vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], 1.0, vec![1.0]).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![f64::NAN], 0.5, vec![1.0]).is_err());
        assert!(TabularMdp::new(
            2,
            1,
            vec![1.5, -0.5, 0.0, 1.0],
            vec![0.0; 2],
            0.5,
            vec![0.5, 0.5]
        )
        .is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], 0.5, vec![0.9]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = TabularMdp::random(3, 2, 0.95, &mut rng).unwrap();
        assert_eq!(TabularMdp::from_text(&mdp.to_text()).unwrap(), mdp);
    }

    #[test]
    fn chain_optimum_is_move_right() {
        let mdp = TabularMdp::chain(5, 0.1, 0.99).unwrap();
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        assert_eq!(vi.greedy, vec![1; 5]);
    }

    #[test]
    fn gridworld_is_valid() {
        let mdp = TabularMdp::gridworld(4, 4, 0.1, 0.95).unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (16, 4));
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        // next to the goal the optimal move is into it
        assert_eq!(vi.greedy[14], 1);
        assert_eq!(vi.greedy[11], 2);
    }
}
