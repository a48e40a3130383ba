use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fracprox::experiments::{
    default_epsilon, run_ep1, run_ep2, run_rayleigh, run_sharpe, solve, solver_config, status_name,
    Algorithm, Experiment, RunSettings, Scale,
};
use fracprox::problem_file::ProblemDoc;
use fracprox::report::{
    summarize_ep1, summarize_ep2, summarize_rayleigh, summarize_sharpe, write_run, write_traces,
};
use fracprox::trace::write_trace_file;
use fracprox_core::diagnostics::check_sufficient_decrease;
use fracprox_core::enhanced::strong_stationarity_residuals;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "fracprox",
    version,
    about = "Proximal subgradient solvers for fractional programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional example with known stationary points.
    Ep1 {
        #[command(flatten)]
        common: CommonArgs,
        /// Starting points, one run each.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [1.0, 0.3, 0.9, 0.0, -0.5, -1.0])]
        x0: Vec<f64>,
    },
    /// Sparse recovery with the ℓ₁/ℓ₂ ratio over a box and affine constraints.
    Ep2(CommonArgs),
    /// Generalized Rayleigh quotients over the unit sphere.
    Rayleigh(CommonArgs),
    /// Robust Sharpe ratio over the simplex.
    Sharpe(CommonArgs),
    /// Solves a problem read from a JSON file.
    Solve(SolveArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Fraction of the admissible extrapolation range, in [0, 1).
    #[arg(long)]
    alpha_extrap: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Restart period of the FISTA schedule.
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    /// Active-set width for the enhanced solver.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Directory for trials.jsonl, summary.json and timing.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-trial CSV traces.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn settings(&self, experiment: Experiment) -> RunSettings {
        let d = experiment.defaults();
        RunSettings {
            seed: self.seed.unwrap_or(d.seed),
            trials: self.trials.unwrap_or(d.trials),
            tol: self.tol.unwrap_or(d.tol),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            alpha_extrap: self.alpha_extrap.unwrap_or(d.alpha_extrap),
            delta: self.delta.unwrap_or(d.delta),
            n0: self.n0.unwrap_or(d.n0),
            algorithm: self.algorithm.unwrap_or(d.algorithm),
            scale: self.scale,
            epsilon: self.epsilon.or(d.epsilon),
            keep_traces: self.trace_dir.is_some(),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// JSON problem file.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::Epsg)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha_extrap: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 50)]
    n0: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV file for the iterate trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Serialize)]
struct SolveOutput {
    kind: &'static str,
    algorithm: Algorithm,
    status: &'static str,
    iterations: usize,
    objective_init: f64,
    objective_final: f64,
    merit_decrease_ok: bool,
    assumptions_clean: bool,
    strong_residuals: Option<Vec<(usize, f64)>>,
    x: Vec<f64>,
}

fn solve_file(args: &SolveArgs) -> anyhow::Result<()> {
    let loaded = ProblemDoc::from_path(&args.problem)
        .and_then(|p| p.build())
        .with_context(|| format!("loading {}", args.problem.display()))?;
    let prog = &loaded.program;
    let settings = RunSettings {
        tol: args.tol,
        max_iters: args.max_iters,
        alpha_extrap: args.alpha_extrap,
        delta: args.delta,
        n0: args.n0,
        algorithm: args.algorithm,
        epsilon: args.epsilon,
        ..Experiment::Ep2.defaults()
    };
    let epsilon = args
        .epsilon
        .unwrap_or_else(|| default_epsilon(prog, &loaded.x0));
    let cfg = solver_config(prog, &settings, epsilon)?;
    let r = solve(prog, &cfg, &loaded.x0, args.algorithm)?;
    if let Some(path) = &args.trace {
        write_trace_file(path, &r.trace, args.algorithm == Algorithm::Enhanced)?;
    }
    let out = SolveOutput {
        kind: loaded.kind,
        algorithm: args.algorithm,
        status: status_name(r.status),
        iterations: r.iterations(),
        objective_init: prog.theta(&loaded.x0)?,
        objective_final: prog.theta(&r.x)?,
        merit_decrease_ok: check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok(),
        assumptions_clean: r.assumptions.is_clean(),
        strong_residuals: strong_stationarity_residuals(prog, &cfg, &r.x).ok(),
        x: r.x,
    };
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn finish<R: Serialize + Clone, S: Serialize>(
    common: &CommonArgs,
    experiment: Experiment,
    settings: &RunSettings,
    trials: &[fracprox::experiments::Trial<R>],
    summary: S,
) -> anyhow::Result<()> {
    if let Some(dir) = &common.trace_dir {
        write_traces(dir, trials)
            .with_context(|| format!("writing traces to {}", dir.display()))?;
    }
    match &common.out {
        Some(dir) => write_run(dir, experiment.name(), settings, trials, &summary)
            .with_context(|| format!("writing results to {}", dir.display()))?,
        None => println!("{}", serde_json::to_string_pretty(&summary)?),
    }
    Ok(())
}

fn run_experiment(
    experiment: Experiment,
    common: &CommonArgs,
    ep1_starts: &[f64],
) -> anyhow::Result<()> {
    let s = common.settings(experiment);
    match experiment {
        Experiment::Ep1 => {
            let trials = run_ep1(&s, ep1_starts);
            finish(common, experiment, &s, &trials, summarize_ep1(&trials))
        }
        Experiment::Ep2 => {
            let trials = run_ep2(&s);
            finish(common, experiment, &s, &trials, summarize_ep2(&trials))
        }
        Experiment::Rayleigh => {
            let trials = run_rayleigh(&s);
            finish(common, experiment, &s, &trials, summarize_rayleigh(&trials))
        }
        Experiment::Sharpe => {
            let trials = run_sharpe(&s);
            finish(common, experiment, &s, &trials, summarize_sharpe(&trials))
        }
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Ep1 { common, x0 } => run_experiment(Experiment::Ep1, common, x0),
        Command::Ep2(common) => run_experiment(Experiment::Ep2, common, &[]),
        Command::Rayleigh(common) => run_experiment(Experiment::Rayleigh, common, &[]),
        Command::Sharpe(common) => run_experiment(Experiment::Sharpe, common, &[]),
        Command::Solve(args) => solve_file(args),
    }
}
