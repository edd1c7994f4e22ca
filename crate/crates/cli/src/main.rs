use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aisac::experiment::{
    parse_csv_column, run_experiment, run_variance_study, write_summaries_csv, ExperimentSpec,
    VarianceStudySpec,
};
use aisac::smoothing::{savitzky_golay_with, Boundary, DEFAULT_ORDER, DEFAULT_WINDOW};
use aisac::training::run_training_with;
use aisac::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aisac",
    version,
    about = "Actor-critic with active importance sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Spec file with `key = value` lines.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Single training run with the first listed algorithm.
    Train(Common),
    /// Every algorithm over every seed, with aggregate curves.
    Experiment(Common),
    /// Exact MC vs active-IS variance over random tabular MDPs.
    VarianceStudy(Common),
    /// Savitzky-Golay filter one CSV column.
    Smooth(SmoothArgs),
}

#[derive(Args)]
struct SmoothArgs {
    /// CSV file to read.
    #[arg(long)]
    input: PathBuf,
    /// Header of the column to smooth.
    #[arg(long)]
    column: String,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// `interp` or `mirror`.
    #[arg(long, default_value = "interp")]
    boundary: String,
    /// Output CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn read(path: &Path) -> aisac::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_experiment(common: &Common) -> aisac::Result<ExperimentSpec> {
    let path = common
        .spec
        .as_deref()
        .ok_or_else(|| Error::Config("--spec is required".into()))?;
    let mut spec = ExperimentSpec::from_text(&read(path)?)?;
    if let Some(seed) = common.seed {
        spec.base_seed = seed;
    }
    Ok(spec)
}

fn output_dir(common: &Common, spec: &ExperimentSpec) -> aisac::Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))
}

fn train(common: &Common) -> aisac::Result<()> {
    let spec = load_experiment(common)?;
    let out = output_dir(common, &spec)?;
    let algorithm = spec.algorithms[0];
    let config = spec.train_config(algorithm, spec.base_seed);
    let steps = config.steps_per_iteration;
    let quiet = common.quiet;
    let mut reward = 0.0;
    let outcome = run_training_with(&spec.task, &config, |r| {
        reward += r.reward;
        if !quiet && r.step + 1 == steps {
            eprintln!(
                "iteration {:>5}  reward/step {:>10.4}",
                r.iteration,
                reward / steps as f64
            );
            reward = 0.0;
        }
    })?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_summaries_csv(&out.join("run.csv"), &outcome.summaries)?;
    for (name, body) in [
        ("policy.txt", &outcome.policy_checkpoint),
        ("critic.txt", &outcome.critic_checkpoint),
    ] {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    if let Some(d) = &outcome.divergence {
        eprintln!(
            "run diverged at iteration {} step {}: {}",
            d.iteration, d.step, d.message
        );
    }
    if !quiet {
        if let Some(last) = outcome.summaries.last() {
            println!(
                "{} seed {}: final target return {:.3}",
                algorithm, config.seed, last.target_return_mean
            );
        }
    }
    Ok(())
}

fn experiment(common: &Common) -> aisac::Result<()> {
    let spec = load_experiment(common)?;
    let out = output_dir(common, &spec)?;
    let report = run_experiment(&spec, &out)?;
    if !common.quiet {
        for &alg in &spec.algorithms {
            let diverged = report
                .runs_for(alg)
                .filter(|r| r.outcome.divergence.is_some())
                .count();
            if let Some(last) = report.curve(alg).last() {
                println!(
                    "{alg}: final target return {:.3} ± {:.3} over {} runs ({diverged} diverged)",
                    last.target_return_mean, last.target_return_std, last.n_runs
                );
            }
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn variance_study(common: &Common) -> aisac::Result<()> {
    let mut spec = match &common.spec {
        Some(path) => VarianceStudySpec::from_text(&read(path)?)?,
        None => VarianceStudySpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let study = run_variance_study(&spec)?;
    let csv = study.to_csv()?;
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("variance.csv");
            fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        }
        None => print!("{csv}"),
    }
    if !common.quiet {
        eprintln!("{}", study.summary_line());
    }
    Ok(())
}

fn smooth(args: &SmoothArgs) -> aisac::Result<()> {
    let boundary: Boundary = args.boundary.parse()?;
    let series = parse_csv_column(&read(&args.input)?, &args.column)?;
    let smoothed = savitzky_golay_with(&series, args.window, args.order, boundary)?;
    let mut body = format!("index,{0},{0}_smoothed\n", args.column);
    for (i, (raw, s)) in series.iter().zip(&smoothed).enumerate() {
        body.push_str(&format!("{i},{raw:?},{s:?}\n"));
    }
    match &args.out {
        Some(path) => fs::write(path, body).map_err(|e| Error::io(path, e))?,
        None => print!("{body}"),
    }
    if !args.quiet {
        eprintln!("smoothed {} values", series.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => train(c),
        Command::Experiment(c) => experiment(c),
        Command::VarianceStudy(c) => variance_study(c),
        Command::Smooth(s) => smooth(s),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
