//! Policy-gradient estimators and their exact variances.
//!
//! Everything here is per state: the integrand is
//! `f(a) = ∇_θ ln π(a|s) Q(s,a)`, its expectation under `π(·|s)` is the
//! per-state gradient `I(s) = Σ_a ∇_θ π(a|s) Q(s,a)`, and an
//! importance-sampling estimate draws `a ~ b(·|s)` and reweights by
//! `π(a|s) / b(a|s)`. Variances use the single-sample (`n = 1`)
//! convention; divide by `n` for an `n`-sample average.

use rand::Rng;

use crate::mdp::{
    exact_q_values, exact_state_distribution, sample_categorical, ActionDistribution, ActionValues,
    TabularMdp,
};
use crate::policy::{Policy, SoftmaxPolicy};
use crate::{Error, Result};

pub use crate::behavior::state_gradient;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub n_samples: usize,
    /// Sample variance (denominator `n - 1`) of the single-sample terms;
    /// absent when `n < 2`.
    pub per_component_variance: Option<Vec<f64>>,
    pub trace_variance: f64,
}

impl GradientEstimate {
    fn from_terms(terms: &[Vec<f64>]) -> Self {
        let n = terms.len();
        let dim = terms.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; dim];
        for t in terms {
            for (m, x) in mean.iter_mut().zip(t) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let per_component_variance = (n >= 2).then(|| {
            let mut var = vec![0.0; dim];
            for t in terms {
                for ((v, x), m) in var.iter_mut().zip(t).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= (n - 1) as f64);
            var
        });
        let trace_variance = per_component_variance
            .as_ref()
            .map_or(0.0, |v| v.iter().sum());
        GradientEstimate {
            gradient: mean,
            n_samples: n,
            per_component_variance,
            trace_variance,
        }
    }

    /// Standard error of each gradient component.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.per_component_variance.as_ref().map(|v| {
            v.iter()
                .map(|x| (x / self.n_samples as f64).sqrt())
                .collect()
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceMethod {
    ExactSummation,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceReport {
    pub var_mc: f64,
    pub var_is: f64,
    pub reduced: bool,
    pub method: VarianceMethod,
}

impl VarianceReport {
    pub fn new(var_mc: f64, var_is: f64, method: VarianceMethod) -> Self {
        VarianceReport {
            var_mc,
            var_is,
            reduced: var_is < var_mc,
            method,
        }
    }
}

/// `Σ_s d(s) Σ_a ∇_θ π(a|s) Q^π(s,a)` with exact `Q^π` and discounted
/// occupancy `d`; the gradient of [`discounted_return`](crate::mdp::discounted_return).
pub fn exact_gradient(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    let q = exact_q_values(mdp, policy)?;
    let d = exact_state_distribution(mdp, policy)?;
    let mut g = vec![0.0; policy.n_params()];
    for (s, ds) in d.iter().enumerate() {
        for (gk, x) in g.iter_mut().zip(state_gradient(policy, &q, s)) {
            *gk += ds * x;
        }
    }
    Ok(g)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("estimator needs at least one sample".into()));
    }
    Ok(())
}

fn integrand(
    policy: &SoftmaxPolicy,
    q: &ActionValues,
    s: usize,
    a: usize,
    probs: &[f64],
) -> Vec<f64> {
    let qv = q.get(s, a);
    policy
        .score_with_probs(s, a, probs)
        .into_iter()
        .map(|x| x * qv)
        .collect()
}

/// Monte-Carlo estimate of `I(s)` from `n` actions drawn from `π(·|s)`.
pub fn mc_gradient_estimate<R: Rng + ?Sized>(
    policy: &SoftmaxPolicy,
    q: &ActionValues,
    s: usize,
    n: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    check_n(n)?;
    let probs = policy.probs(s);
    let terms: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a = sample_categorical(&probs, rng);
            integrand(policy, q, s, a, &probs)
        })
        .collect();
    Ok(GradientEstimate::from_terms(&terms))
}

/// Monte-Carlo estimate of the full gradient from `n` pairs
/// `(s, a) ~ d × π`.
pub fn mc_gradient_estimate_mdp<R: Rng + ?Sized>(
    policy: &SoftmaxPolicy,
    q: &ActionValues,
    state_dist: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    check_n(n)?;
    let terms: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let s = sample_categorical(state_dist, rng);
            let probs = policy.probs(s);
            let a = sample_categorical(&probs, rng);
            integrand(policy, q, s, a, &probs)
        })
        .collect();
    Ok(GradientEstimate::from_terms(&terms))
}

/// Importance-sampling estimate of `I(s)`: `a_i ~ b(·|s)`, terms
/// `∇_θ ln π(a_i|s) Q(s,a_i) π(a_i|s) / b(a_i|s)`.
pub fn is_gradient_estimate<B, R>(
    policy: &SoftmaxPolicy,
    behavior: &B,
    q: &ActionValues,
    s: usize,
    n: usize,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    B: ActionDistribution + ?Sized,
    R: Rng + ?Sized,
{
    check_n(n)?;
    let probs = policy.probs(s);
    let b = behavior.action_probs(s);
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let a = sample_categorical(&b, rng);
        if b[a] <= 0.0 {
            return Err(Error::SupportViolation {
                state: s,
                action: a,
            });
        }
        let ratio = probs[a] / b[a];
        terms.push(
            integrand(policy, q, s, a, &probs)
                .into_iter()
                .map(|x| x * ratio)
                .collect(),
        );
    }
    Ok(GradientEstimate::from_terms(&terms))
}

/// `Σ_a b(a) [f(a) π(a) / b(a)]` by exact summation over the support of `b`.
pub fn is_expectation_exact<B>(
    policy: &SoftmaxPolicy,
    behavior: &B,
    q: &ActionValues,
    s: usize,
) -> Result<Vec<f64>>
where
    B: ActionDistribution + ?Sized,
{
    let probs = policy.probs(s);
    let b = behavior.action_probs(s);
    let mut total = vec![0.0; policy.n_params()];
    for (a, (&p, &ba)) in probs.iter().zip(&b).enumerate() {
        let f = integrand(policy, q, s, a, &probs);
        if ba == 0.0 {
            if p != 0.0 && f.iter().any(|x| *x != 0.0) {
                return Err(Error::SupportViolation {
                    state: s,
                    action: a,
                });
            }
            continue;
        }
        for (t, x) in total.iter_mut().zip(f) {
            *t += ba * (x * p / ba);
        }
    }
    Ok(total)
}

/// Exact single-sample per-component variance of the IS estimator under
/// `weights`: `Σ_a (∇_θ π(a|s) Q(s,a))² / b(a|s) - I(s)²`. With
/// `weights = π` this is the plain Monte-Carlo variance.
pub fn exact_variance<B>(
    policy: &SoftmaxPolicy,
    weights: &B,
    q: &ActionValues,
    s: usize,
) -> Result<Vec<f64>>
where
    B: ActionDistribution + ?Sized,
{
    let probs = policy.probs(s);
    let b = weights.action_probs(s);
    let mean = state_gradient(policy, q, s);
    let mut second = vec![0.0; policy.n_params()];
    for (a, (&p, &ba)) in probs.iter().zip(&b).enumerate() {
        if p == 0.0 {
            continue;
        }
        let numer: Vec<f64> = integrand(policy, q, s, a, &probs)
            .into_iter()
            .map(|x| x * p)
            .collect();
        if ba == 0.0 {
            if numer.iter().any(|x| *x != 0.0) {
                return Err(Error::SupportViolation {
                    state: s,
                    action: a,
                });
            }
            continue;
        }
        for (m, x) in second.iter_mut().zip(&numer) {
            *m += x * x / ba;
        }
    }
    Ok(second.iter().zip(&mean).map(|(m2, m)| m2 - m * m).collect())
}

/// Compares the traces of the exact variances under `behavior` and `π`.
pub fn variance_reduction_check<B>(
    policy: &SoftmaxPolicy,
    behavior: &B,
    q: &ActionValues,
    s: usize,
) -> Result<VarianceReport>
where
    B: ActionDistribution + ?Sized,
{
    let var_mc: f64 = exact_variance(policy, policy, q, s)?.iter().sum();
    let var_is: f64 = exact_variance(policy, behavior, q, s)?.iter().sum();
    Ok(VarianceReport::new(
        var_mc,
        var_is,
        VarianceMethod::ExactSummation,
    ))
}

/// Empirical comparison: sample variances of `reps` single-sample MC and IS
/// estimates.
pub fn empirical_variance_check<B, R>(
    policy: &SoftmaxPolicy,
    behavior: &B,
    q: &ActionValues,
    s: usize,
    reps: usize,
    rng: &mut R,
) -> Result<VarianceReport>
where
    B: ActionDistribution + ?Sized,
    R: Rng + ?Sized,
{
    let mc = mc_gradient_estimate(policy, q, s, reps, rng)?;
    let is = is_gradient_estimate(policy, behavior, q, s, reps, rng)?;
    Ok(VarianceReport::new(
        mc.trace_variance,
        is.trace_variance,
        VarianceMethod::Empirical,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{build_tabular_behavior, TabularBehavior};
    use crate::mdp::{discounted_return, ProbTable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (TabularMdp, SoftmaxPolicy, ActionValues) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = TabularMdp::random(3, 3, 0.9, &mut rng).unwrap();
        let theta = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pi = SoftmaxPolicy::tabular_with(3, 3, theta).unwrap();
        let q = exact_q_values(&mdp, &pi).unwrap();
        (mdp, pi, q)
    }

    #[test]
    fn symmetric_mdp_has_zero_gradient() {
        // every action behaves identically, so π does not matter
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = TabularMdp::random(3, 1, 0.9, &mut rng).unwrap();
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for s in 0..3 {
            for _ in 0..2 {
                transition.extend_from_slice(base.transition_row(s, 0));
                reward.push(base.reward(s, 0));
            }
        }
        let mdp = TabularMdp::new(3, 2, transition, reward, 0.9, base.initial().to_vec()).unwrap();
        let pi = SoftmaxPolicy::tabular_with(3, 2, vec![0.3, -0.2, 1.0, 0.0, -0.5, 0.5]).unwrap();
        assert!(exact_gradient(&mdp, &pi)
            .unwrap()
            .iter()
            .all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn constant_q_gives_zero_state_gradient() {
        let (_, pi, _) = setup(2);
        let q = ActionValues::from_vec(3, 3, vec![4.2; 9]);
        for s in 0..3 {
            assert!(state_gradient(&pi, &q, s).iter().all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng).unwrap();
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pi = SoftmaxPolicy::tabular_with(3, 2, theta.clone()).unwrap();
        let g = exact_gradient(&mdp, &pi).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[i] += h;
            dn[i] -= h;
            let j = |t: Vec<f64>| {
                discounted_return(&mdp, &SoftmaxPolicy::tabular_with(3, 2, t).unwrap()).unwrap()
            };
            let fd = (j(up) - j(dn)) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() / fd.abs().max(1e-6) < 1e-4,
                "{} vs {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn single_forced_sample() {
        let (_, pi, q) = setup(4);
        let forced =
            TabularBehavior::from_table(3, 3, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0])
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = is_gradient_estimate(&pi, &forced, &q, 1, 1, &mut rng).unwrap();
        let p = pi.probs(1);
        let expected: Vec<f64> = pi
            .score(&1, &1)
            .unwrap()
            .iter()
            .map(|x| x * q.get(1, 1) * p[1])
            .collect();
        assert_eq!(est.gradient, expected);
        assert_eq!(est.per_component_variance, None);

        let det =
            SoftmaxPolicy::tabular_with(3, 3, vec![0.0, 0.0, 0.0, 0.0, 60.0, 0.0, 0.0, 0.0, 0.0])
                .unwrap();
        let est = mc_gradient_estimate(&det, &q, 1, 1, &mut rng).unwrap();
        let direct: Vec<f64> = det
            .score(&1, &1)
            .unwrap()
            .iter()
            .map(|x| x * q.get(1, 1))
            .collect();
        assert_eq!(est.gradient, direct);
    }

    #[test]
    fn zero_q_gives_zero_estimate() {
        let (_, pi, _) = setup(5);
        let q = ActionValues::zeros(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = mc_gradient_estimate(&pi, &q, 0, 100, &mut rng).unwrap();
        assert!(est.gradient.iter().all(|&g| g == 0.0));
        assert!(mc_gradient_estimate(&pi, &q, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn estimators_are_unbiased_within_four_standard_errors() {
        let (_, pi, q) = setup(6);
        let b = build_tabular_behavior(&pi, &q, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in 0..3 {
            let exact = state_gradient(&pi, &q, s);
            for est in [
                mc_gradient_estimate(&pi, &q, s, 100_000, &mut rng).unwrap(),
                is_gradient_estimate(&pi, &b, &q, s, 100_000, &mut rng).unwrap(),
            ] {
                let se = est.standard_errors().unwrap();
                for k in 0..exact.len() {
                    assert!((est.gradient[k] - exact[k]).abs() <= 4.0 * se[k] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn mdp_mode_estimate_is_unbiased() {
        let (mdp, pi, q) = setup(8);
        let d = exact_state_distribution(&mdp, &pi).unwrap();
        let exact = exact_gradient(&mdp, &pi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let est = mc_gradient_estimate_mdp(&pi, &q, &d, 200_000, &mut rng).unwrap();
        let se = est.standard_errors().unwrap();
        for k in 0..exact.len() {
            assert!((est.gradient[k] - exact[k]).abs() <= 4.0 * se[k] + 1e-12);
        }
    }

    #[test]
    fn on_policy_is_collapses_to_mc_bitwise() {
        let (_, pi, q) = setup(10);
        let b = TabularBehavior::on_policy(&pi);
        let mc = mc_gradient_estimate(&pi, &q, 2, 500, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let is =
            is_gradient_estimate(&pi, &b, &q, 2, 500, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(mc, is);
    }

    #[test]
    fn exact_is_expectation_is_the_gradient() {
        let (_, pi, q) = setup(12);
        for b in [
            build_tabular_behavior(&pi, &q, 0.0).unwrap(),
            build_tabular_behavior(&pi, &q, 0.3).unwrap(),
        ] {
            for s in 0..3 {
                let lhs = is_expectation_exact(&pi, &b, &q, s).unwrap();
                for (x, y) in lhs.iter().zip(state_gradient(&pi, &q, s)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn on_policy_variance_is_the_mc_formula() {
        let (_, pi, q) = setup(13);
        let s = 0;
        let probs = pi.probs(s);
        let mean = state_gradient(&pi, &q, s);
        let via_table = exact_variance(
            &pi,
            &ProbTable::new(3, 3, (0..3).flat_map(|s| pi.probs(s)).collect()),
            &q,
            s,
        )
        .unwrap();
        for k in 0..pi.n_params() {
            let mut second = 0.0;
            for a in 0..3 {
                let f = pi.score(&s, &a).unwrap()[k] * q.get(s, a);
                second += f * f * probs[a];
            }
            assert!((via_table[k] - (second - mean[k] * mean[k])).abs() < 1e-12);
        }
        let report = variance_reduction_check(&pi, &pi, &q, s).unwrap();
        assert_eq!(report.var_is, report.var_mc);
        assert!(!report.reduced);
    }

    #[test]
    fn optimal_proposal_for_constant_sign_integrand_has_zero_variance() {
        // scalar θ with f·π ≥ 0 everywhere: b ∝ f π is exact
        let c = vec![1.0, 0.0, -1.0];
        let pi = SoftmaxPolicy::linear(1, 3, 1, c, vec![0.2]).unwrap();
        let p = pi.probs(0);
        // choose Q so that score·Q has constant sign: Q(a) = score(a)
        let q =
            ActionValues::from_vec(1, 3, (0..3).map(|a| pi.score(&0, &a).unwrap()[0]).collect());
        let b = build_tabular_behavior(&pi, &q, 0.0).unwrap();
        assert!(p.iter().all(|&x| x > 0.0));
        let v = exact_variance(&pi, &b, &q, 0).unwrap();
        assert!(v[0].abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn adversarial_proposal_increases_variance() {
        let pi = SoftmaxPolicy::tabular(1, 3);
        let q = ActionValues::from_vec(1, 3, vec![0.0, 1.0, 3.0]);
        // nearly all mass on action 0, whose integrand is zero
        let b = TabularBehavior::from_table(1, 3, vec![0.98, 0.01, 0.01]).unwrap();
        let report = variance_reduction_check(&pi, &b, &q, 0).unwrap();
        assert!(report.var_is > report.var_mc);
        assert!(!report.reduced);
    }

    #[test]
    fn zero_behavior_mass_under_nonzero_integrand_is_an_error() {
        let pi = SoftmaxPolicy::tabular(1, 2);
        let q = ActionValues::from_vec(1, 2, vec![1.0, 2.0]);
        let b = TabularBehavior::from_table(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(exact_variance(&pi, &b, &q, 0).is_err());
        assert!(is_expectation_exact(&pi, &b, &q, 0).is_err());
    }

    #[test]
    fn empirical_variance_matches_exact() {
        let (_, pi, q) = setup(14);
        let b = build_tabular_behavior(&pi, &q, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let exact: f64 = exact_variance(&pi, &b, &q, 1).unwrap().iter().sum();
        let est = is_gradient_estimate(&pi, &b, &q, 1, 1_000_000, &mut rng).unwrap();
        let ratio = est.trace_variance / exact;
        assert!((0.98..=1.02).contains(&ratio), "ratio {ratio}");
    }
}
