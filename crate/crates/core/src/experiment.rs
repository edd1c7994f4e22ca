//! Multi-seed experiments, variance studies and their text/CSV interfaces.
//!
//! Experiment specs are flat `key = value` files with dotted keys:
//!
//! ```text
//! # pendulum sweep
//! task = pendulum
//! algorithms = aisac, baseline
//! n_seeds = 10
//! train.alpha_theta = 0.001
//! smoothing.window = 51
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::behavior::{build_tabular_behavior, TabularBehavior};
use crate::estimators::variance_reduction_check;
use crate::mdp::{exact_q_values, TabularMdp};
use crate::policy::SoftmaxPolicy;
use crate::smoothing::{savitzky_golay_clamped, Boundary, DEFAULT_ORDER, DEFAULT_WINDOW};
use crate::training::{
    derive_seed, run_training, Algorithm, IterationSummary, Task, TrainConfig, TrainingOutcome,
};
use crate::{Error, Result};

/// Parsed `key = value` pairs. Keys must be unique.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpecMap {
    entries: BTreeMap<String, (usize, String)>,
}

pub fn parse_spec_text(text: &str) -> Result<SpecMap> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty()
            || key.split('.').any(|part| part.is_empty())
            || !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        {
            return Err(Error::parse(line_no, format!("invalid key `{key}`")));
        }
        if value.is_empty() {
            return Err(Error::parse(line_no, format!("empty value for `{key}`")));
        }
        if entries
            .insert(key.to_string(), (line_no, value.to_string()))
            .is_some()
        {
            return Err(Error::parse(line_no, format!("duplicate key `{key}`")));
        }
    }
    Ok(SpecMap { entries })
}

impl SpecMap {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and parses `key`, if present.
    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse `{key} = {v}`"))),
        }
    }

    fn take_into<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => {
                Err(Error::Config(format!("line {line}: unknown key `{key}`")))
            }
        }
    }
}

/// Applies `train.*` overrides. `train.algorithm` and `train.seed` are not
/// accepted; those come from the experiment level.
fn take_train_overrides(map: &mut SpecMap, c: &mut TrainConfig) -> Result<()> {
    map.take_into("train.alpha_theta", &mut c.alpha_theta)?;
    map.take_into("train.alpha_w", &mut c.alpha_w)?;
    map.take_into("train.gamma", &mut c.gamma)?;
    map.take_into("train.n_iterations", &mut c.n_iterations)?;
    map.take_into("train.steps_per_iteration", &mut c.steps_per_iteration)?;
    map.take_into("train.epsilon_mix", &mut c.epsilon_mix)?;
    map.take_into("train.n_proposal", &mut c.n_proposal)?;
    map.take_into("train.m_expectation_samples", &mut c.m_expectation_samples)?;
    map.take_into("train.behavior_refit_period", &mut c.behavior_refit_period)?;
    map.take_into("train.std_min", &mut c.std_min)?;
    map.take_into("train.eval_rollouts", &mut c.eval_rollouts)?;
    if let Some(h) = map.take("train.eval_horizon")? {
        c.eval_horizon = Some(h);
    }
    if let Some(s) = map.take("train.eval_seed")? {
        c.eval_seed = Some(s);
    }
    map.take_into("train.initial_log_std", &mut c.initial_log_std)?;
    map.take_into("train.log_std_min", &mut c.log_std_min)?;
    map.take_into("train.log_std_max", &mut c.log_std_max)?;
    map.take_into("train.critic_action_degree", &mut c.critic_action_degree)?;
    Ok(())
}

fn write_train_overrides(out: &mut String, c: &TrainConfig) {
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "train.{k} = {v}");
    };
    kv("alpha_theta", format!("{:?}", c.alpha_theta));
    kv("alpha_w", format!("{:?}", c.alpha_w));
    kv("gamma", format!("{:?}", c.gamma));
    kv("n_iterations", c.n_iterations.to_string());
    kv("steps_per_iteration", c.steps_per_iteration.to_string());
    kv("epsilon_mix", format!("{:?}", c.epsilon_mix));
    kv("n_proposal", c.n_proposal.to_string());
    kv("m_expectation_samples", c.m_expectation_samples.to_string());
    kv("behavior_refit_period", c.behavior_refit_period.to_string());
    kv("std_min", format!("{:?}", c.std_min));
    kv("eval_rollouts", c.eval_rollouts.to_string());
    if let Some(h) = c.eval_horizon {
        kv("eval_horizon", h.to_string());
    }
    if let Some(s) = c.eval_seed {
        kv("eval_seed", s.to_string());
    }
    kv("initial_log_std", format!("{:?}", c.initial_log_std));
    kv("log_std_min", format!("{:?}", c.log_std_min));
    kv("log_std_max", format!("{:?}", c.log_std_max));
    kv("critic_action_degree", c.critic_action_degree.to_string());
}

fn take_task(map: &mut SpecMap) -> Result<Task> {
    let name: String = map
        .take("task")?
        .ok_or_else(|| Error::Config("missing required key `task`".into()))?;
    let mut task = Task::from_name(&name)?;
    match &mut task {
        Task::Chain { n, slip } => {
            map.take_into("task.n", n)?;
            map.take_into("task.slip", slip)?;
        }
        Task::Gridworld {
            width,
            height,
            slip,
        } => {
            map.take_into("task.width", width)?;
            map.take_into("task.height", height)?;
            map.take_into("task.slip", slip)?;
        }
        Task::Pendulum | Task::Reacher => {}
    }
    Ok(task)
}

fn write_task(out: &mut String, task: &Task) {
    let _ = writeln!(out, "task = {}", task.name());
    match task {
        Task::Chain { n, slip } => {
            let _ = writeln!(out, "task.n = {n}\ntask.slip = {slip:?}");
        }
        Task::Gridworld {
            width,
            height,
            slip,
        } => {
            let _ = writeln!(
                out,
                "task.width = {width}\ntask.height = {height}\ntask.slip = {slip:?}"
            );
        }
        Task::Pendulum | Task::Reacher => {}
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub task: Task,
    pub algorithms: Vec<Algorithm>,
    pub train: TrainConfig,
    pub n_seeds: usize,
    /// Run `k` uses seed `base_seed + k` for every algorithm.
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub smoothing_window: usize,
    pub smoothing_order: usize,
    pub smoothing_boundary: Boundary,
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn new(task: Task) -> Self {
        ExperimentSpec {
            task,
            algorithms: vec![Algorithm::Aisac, Algorithm::Baseline],
            train: TrainConfig::default(),
            n_seeds: 10,
            base_seed: 0,
            output_dir: None,
            smoothing_window: DEFAULT_WINDOW,
            smoothing_order: DEFAULT_ORDER,
            smoothing_boundary: Boundary::Interp,
            workers: 0,
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = parse_spec_text(text)?;
        let mut spec = ExperimentSpec::new(take_task(&mut map)?);
        if let Some(list) = map.take::<String>("algorithms")? {
            spec.algorithms = list
                .split(',')
                .map(|a| a.parse())
                .collect::<Result<Vec<Algorithm>>>()?;
        }
        map.take_into("n_seeds", &mut spec.n_seeds)?;
        map.take_into("seed", &mut spec.base_seed)?;
        if let Some(dir) = map.take::<String>("output_dir")? {
            spec.output_dir = Some(PathBuf::from(dir));
        }
        map.take_into("workers", &mut spec.workers)?;
        map.take_into("smoothing.window", &mut spec.smoothing_window)?;
        map.take_into("smoothing.order", &mut spec.smoothing_order)?;
        map.take_into("smoothing.boundary", &mut spec.smoothing_boundary)?;
        take_train_overrides(&mut map, &mut spec.train)?;
        map.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::Config(format!("algorithm `{a}` listed twice")));
            }
        }
        crate::smoothing::validate(self.smoothing_window, self.smoothing_order)?;
        self.train.validate()?;
        // Catches invalid task parameters before any run starts.
        self.task.tabular_mdp(self.train.gamma)?;
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64)
            .map(|k| self.base_seed.wrapping_add(k))
            .collect()
    }

    pub fn train_config(&self, algorithm: Algorithm, seed: u64) -> TrainConfig {
        TrainConfig {
            algorithm,
            seed,
            ..self.train.clone()
        }
    }

    /// Fully resolved spec; parsing it back yields `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_task(&mut out, &self.task);
        let algs: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        let _ = writeln!(out, "algorithms = {}", algs.join(", "));
        let _ = writeln!(out, "n_seeds = {}", self.n_seeds);
        let _ = writeln!(out, "seed = {}", self.base_seed);
        if let Some(dir) = &self.output_dir {
            let _ = writeln!(out, "output_dir = {}", dir.display());
        }
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "smoothing.window = {}", self.smoothing_window);
        let _ = writeln!(out, "smoothing.order = {}", self.smoothing_order);
        let boundary = match self.smoothing_boundary {
            Boundary::Interp => "interp",
            Boundary::Mirror => "mirror",
        };
        let _ = writeln!(out, "smoothing.boundary = {boundary}");
        write_train_overrides(&mut out, &self.train);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub outcome: TrainingOutcome,
}

impl RunResult {
    pub fn file_name(&self) -> String {
        format!("{}_seed{}.csv", self.algorithm, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub iteration: usize,
    pub n_runs: usize,
    pub target_return_mean: f64,
    pub target_return_std: f64,
    pub target_return_mean_smoothed: f64,
    pub target_return_std_smoothed: f64,
    pub behavior_return_mean: f64,
    pub behavior_return_mean_smoothed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentReport {
    pub fn runs_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn curve(&self, algorithm: Algorithm) -> Vec<&AggregateRow> {
        self.aggregate
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .collect()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-iteration mean ± std across runs. Iteration `t` aggregates the runs
/// that reached it; diverged runs stop contributing.
pub fn aggregate_runs(spec: &ExperimentSpec, runs: &[RunResult]) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for &alg in &spec.algorithms {
        let curves: Vec<&[IterationSummary]> = runs
            .iter()
            .filter(|r| r.algorithm == alg)
            .map(|r| r.outcome.summaries.as_slice())
            .collect();
        let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
        let mut target_mean = Vec::with_capacity(len);
        let mut target_std = Vec::with_capacity(len);
        let mut behavior_mean = Vec::with_capacity(len);
        let mut counts = Vec::with_capacity(len);
        for t in 0..len {
            let at: Vec<&IterationSummary> = curves.iter().filter_map(|c| c.get(t)).collect();
            let targets: Vec<f64> = at.iter().map(|s| s.target_return_mean).collect();
            let behaviors: Vec<f64> = at.iter().map(|s| s.behavior_return_mean).collect();
            let (m, sd) = mean_std(&targets);
            target_mean.push(m);
            target_std.push(sd);
            behavior_mean.push(mean_std(&behaviors).0);
            counts.push(at.len());
        }
        let smooth = |s: &[f64]| {
            savitzky_golay_clamped(
                s,
                spec.smoothing_window,
                spec.smoothing_order,
                spec.smoothing_boundary,
            )
        };
        let (tm_s, ts_s, bm_s) = (
            smooth(&target_mean)?,
            smooth(&target_std)?,
            smooth(&behavior_mean)?,
        );
        for t in 0..len {
            rows.push(AggregateRow {
                algorithm: alg,
                iteration: t,
                n_runs: counts[t],
                target_return_mean: target_mean[t],
                target_return_std: target_std[t],
                target_return_mean_smoothed: tm_s[t],
                target_return_std_smoothed: ts_s[t],
                behavior_return_mean: behavior_mean[t],
                behavior_return_mean_smoothed: bm_s[t],
            });
        }
    }
    Ok(rows)
}

/// Runs every (algorithm, seed) pair on a bounded worker pool and returns
/// the results in spec order. Nothing is written to disk.
pub fn run_experiment_runs(spec: &ExperimentSpec) -> Result<Vec<RunResult>> {
    spec.validate()?;
    let jobs: Vec<(Algorithm, u64)> = spec
        .algorithms
        .iter()
        .flat_map(|&a| spec.seeds().into_iter().map(move |s| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(algorithm, seed)| {
                let outcome = run_training(&spec.task, &spec.train_config(algorithm, seed))?;
                Ok(RunResult {
                    algorithm,
                    seed,
                    outcome,
                })
            })
            .collect()
    })
}

/// Runs the experiment and writes `runs/<algorithm>_seed<k>.csv`,
/// `aggregate.csv` and `manifest.txt` under `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentReport> {
    let runs = run_experiment_runs(spec)?;
    let aggregate = aggregate_runs(spec, &runs)?;
    let report = ExperimentReport { runs, aggregate };
    write_experiment(spec, &report, out_dir)?;
    Ok(report)
}

pub fn write_summaries_csv(path: &Path, summaries: &[IterationSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(IterationSummary::CSV_HEADER)?;
    for s in summaries {
        w.write_record(s.csv_record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub const AGGREGATE_HEADER: [&str; 9] = [
    "algorithm",
    "iteration",
    "n_runs",
    "target_return_mean",
    "target_return_std",
    "target_return_mean_smoothed",
    "target_return_std_smoothed",
    "behavior_return_mean",
    "behavior_return_mean_smoothed",
];

pub fn write_experiment(
    spec: &ExperimentSpec,
    report: &ExperimentReport,
    out_dir: &Path,
) -> Result<()> {
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    for run in &report.runs {
        write_summaries_csv(&runs_dir.join(run.file_name()), &run.outcome.summaries)?;
    }

    let agg_path = out_dir.join("aggregate.csv");
    let mut w = csv::Writer::from_path(&agg_path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in &report.aggregate {
        w.write_record([
            r.algorithm.to_string(),
            r.iteration.to_string(),
            r.n_runs.to_string(),
            format!("{:?}", r.target_return_mean),
            format!("{:?}", r.target_return_std),
            format!("{:?}", r.target_return_mean_smoothed),
            format!("{:?}", r.target_return_std_smoothed),
            format!("{:?}", r.behavior_return_mean),
            format!("{:?}", r.behavior_return_mean_smoothed),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&agg_path, e))?;

    let path = out_dir.join("manifest.txt");
    fs::write(&path, manifest_text(spec, report)).map_err(|e| Error::io(&path, e))
}

/// The manifest is the resolved spec followed by one comment line per run.
/// Only the first line (the creation time) differs between reruns.
pub fn manifest_text(spec: &ExperimentSpec, report: &ExperimentReport) -> String {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = format!("# created_unix_seconds {stamp}\n");
    out.push_str(&spec.to_text());
    for run in &report.runs {
        let status = match &run.outcome.divergence {
            None => "ok".to_string(),
            Some(d) => format!(
                "diverged at iteration {} step {}: {}",
                d.iteration, d.step, d.message
            ),
        };
        let _ = writeln!(
            out,
            "# run {} seed {}: {} ({} iterations)",
            run.algorithm,
            run.seed,
            status,
            run.outcome.summaries.len()
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceStudySpec {
    pub n_mdps: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub seed: u64,
    pub epsilon_mix: f64,
    /// Half-width of the uniform distribution θ is drawn from.
    pub theta_scale: f64,
    /// Use a single-parameter linear softmax instead of a tabular one.
    pub scalar_theta: bool,
    /// Replace the active-IS behavior by `π` (a sanity check: nothing is reduced).
    pub force_on_policy: bool,
}

impl Default for VarianceStudySpec {
    fn default() -> Self {
        VarianceStudySpec {
            n_mdps: 200,
            n_states: 5,
            n_actions: 3,
            gamma: 0.9,
            seed: 0,
            epsilon_mix: 0.0,
            theta_scale: 2.0,
            scalar_theta: false,
            force_on_policy: false,
        }
    }
}

impl VarianceStudySpec {
    /// Reads the `variance.*` keys plus an optional `seed`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = parse_spec_text(text)?;
        let mut s = VarianceStudySpec::default();
        map.take_into("seed", &mut s.seed)?;
        map.take_into("variance.n_mdps", &mut s.n_mdps)?;
        map.take_into("variance.n_states", &mut s.n_states)?;
        map.take_into("variance.n_actions", &mut s.n_actions)?;
        map.take_into("variance.gamma", &mut s.gamma)?;
        map.take_into("variance.epsilon_mix", &mut s.epsilon_mix)?;
        map.take_into("variance.theta_scale", &mut s.theta_scale)?;
        map.take_into("variance.scalar_theta", &mut s.scalar_theta)?;
        map.take_into("variance.force_on_policy", &mut s.force_on_policy)?;
        map.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mdps == 0
            || !(1..=1024).contains(&self.n_states)
            || !(2..=256).contains(&self.n_actions)
        {
            return Err(Error::Config(
                "variance study needs >= 1 MDP, 1..=1024 states and 2..=256 actions".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.epsilon_mix) {
            return Err(Error::Config(
                "variance study gamma or epsilon_mix out of range".into(),
            ));
        }
        if !(self.theta_scale >= 0.0 && self.theta_scale.is_finite()) {
            return Err(Error::Config(
                "theta_scale must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub mdp_seed: u64,
    pub state: usize,
    pub var_mc: f64,
    pub var_is: f64,
    pub reduced: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceStudy {
    pub rows: Vec<VarianceRow>,
}

impl VarianceStudy {
    pub fn reduction_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.reduced).count() as f64 / self.rows.len() as f64
    }

    pub fn summary_line(&self) -> String {
        let reduced = self.rows.iter().filter(|r| r.reduced).count();
        format!(
            "variance reduced in {reduced}/{} (mdp, state) pairs: fraction {:.4}",
            self.rows.len(),
            self.reduction_fraction()
        )
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mdp_seed", "state", "var_mc", "var_is", "reduced"])?;
        for r in &self.rows {
            w.write_record([
                r.mdp_seed.to_string(),
                r.state.to_string(),
                format!("{:?}", r.var_mc),
                format!("{:?}", r.var_is),
                r.reduced.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<variance csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Draws the target policy used for one MDP of the study.
pub fn study_policy<R: Rng + ?Sized>(
    spec: &VarianceStudySpec,
    rng: &mut R,
) -> Result<SoftmaxPolicy> {
    let (n_s, n_a) = (spec.n_states, spec.n_actions);
    if spec.scalar_theta {
        let phi = (0..n_s * n_a)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let theta = vec![rng.random_range(-spec.theta_scale..=spec.theta_scale)];
        SoftmaxPolicy::linear(n_s, n_a, 1, phi, theta)
    } else {
        let theta = (0..n_s * n_a)
            .map(|_| rng.random_range(-spec.theta_scale..=spec.theta_scale))
            .collect();
        SoftmaxPolicy::tabular_with(n_s, n_a, theta)
    }
}

/// Exact trace variances of the plain and active-IS gradient estimators for
/// every state of `n_mdps` random MDPs.
pub fn run_variance_study(spec: &VarianceStudySpec) -> Result<VarianceStudy> {
    spec.validate()?;
    let per_mdp: Vec<Vec<VarianceRow>> = (0..spec.n_mdps as u64)
        .into_par_iter()
        .map(|k| {
            let mdp_seed = derive_seed(spec.seed, 0x5A12, k);
            let mut rng = ChaCha8Rng::seed_from_u64(mdp_seed);
            let mdp = TabularMdp::random(spec.n_states, spec.n_actions, spec.gamma, &mut rng)?;
            let policy = study_policy(spec, &mut rng)?;
            let q = exact_q_values(&mdp, &policy)?;
            let behavior = if spec.force_on_policy {
                TabularBehavior::on_policy(&policy)
            } else {
                build_tabular_behavior(&policy, &q, spec.epsilon_mix)?
            };
            (0..spec.n_states)
                .map(|s| {
                    let report = variance_reduction_check(&policy, &behavior, &q, s)?;
                    Ok(VarianceRow {
                        mdp_seed,
                        state: s,
                        var_mc: report.var_mc,
                        var_is: report.var_is,
                        reduced: report.reduced,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(VarianceStudy {
        rows: per_mdp.into_iter().flatten().collect(),
    })
}

/// Extracts one numeric column, selected by header name, from CSV text.
pub fn parse_csv_column(text: &str, column: &str) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::Config(format!("column `{column}` not found")))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = record
            .get(idx)
            .ok_or_else(|| Error::parse(line, format!("missing column `{column}`")))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("`{field}` is not a number")))?;
        if !v.is_finite() {
            return Err(Error::parse(line, "non-finite value"));
        }
        out.push(v);
    }
    Ok(out)
}
