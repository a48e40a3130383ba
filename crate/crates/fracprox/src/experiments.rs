//! Seeded experiment drivers.
//!
//! Every driver returns one [`Trial`] per trial index, ordered by index. Trials
//! run in parallel; each draws its data from its own `(seed, trial)` stream.

use std::time::Instant;

use fracprox_core::config::{extrapolation_bounds, Schedule, SolverConfig};
use fracprox_core::diagnostics::{check_sufficient_decrease, estimate_rate, rayleigh_residual};
use fracprox_core::enhanced::{run_enhanced, strong_stationarity_residuals};
use fracprox_core::epsg::{run, SolveResult, SolverError, Status, TraceRecord};
use fracprox_core::instances::{
    ep1_program, ep2_initial_point, ep2_program, gen_ep2, gen_rayleigh, gen_sharpe,
    rayleigh_program, sharpe_program,
};
use fracprox_core::linalg::gen_eigen;
use fracprox_core::problem::FractionalProgram;
use rayon::prelude::*;
use serde::Serialize;

/// Magnitude above which an entry counts as nonzero.
pub const SPARSITY_THRESHOLD: f64 = 1e-6;
/// Distance to an analytic stationary point accepted as a match.
pub const EP1_MATCH_TOL: f64 = 1e-9;
/// `√2 − 1`, the strong lifted stationary point of EP1.
pub const EP1_STRONG: f64 = core::f64::consts::SQRT_2 - 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Epsg,
    Enhanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    /// `(P, N, s, F)` for EP2.
    pub fn ep2_dims(self) -> (usize, usize, usize, f64) {
        match self {
            Scale::Desk => (32, 256, 6, 10.0),
            Scale::Paper => (64, 1024, 12, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Ep1,
    Ep2,
    Rayleigh,
    Sharpe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub seed: u64,
    pub trials: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the admissible extrapolation range in `[0, 1)`.
    pub alpha_extrap: f64,
    pub delta: f64,
    pub n0: usize,
    pub algorithm: Algorithm,
    pub scale: Scale,
    /// Active-set width; `None` picks a per-instance value.
    pub epsilon: Option<f64>,
    #[serde(skip)]
    pub keep_traces: bool,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ep1 => "ep1",
            Experiment::Ep2 => "ep2",
            Experiment::Rayleigh => "rayleigh",
            Experiment::Sharpe => "sharpe",
        }
    }

    pub fn defaults(self) -> RunSettings {
        let base = RunSettings {
            seed: 2024,
            trials: 20,
            tol: 1e-9,
            max_iters: 5000,
            alpha_extrap: 0.99,
            delta: 1.0,
            n0: 50,
            algorithm: Algorithm::Epsg,
            scale: Scale::Desk,
            epsilon: None,
            keep_traces: false,
        };
        match self {
            Experiment::Ep1 => RunSettings {
                trials: 1,
                tol: 1e-12,
                max_iters: 200,
                alpha_extrap: 0.0,
                delta: 4.0,
                epsilon: Some(2.0),
                ..base
            },
            Experiment::Ep2 => base,
            Experiment::Rayleigh => RunSettings {
                seed: 7,
                trials: 10,
                tol: 1e-12,
                max_iters: 100_000,
                alpha_extrap: 0.0,
                ..base
            },
            Experiment::Sharpe => RunSettings {
                seed: 5,
                trials: 5,
                max_iters: 20_000,
                algorithm: Algorithm::Enhanced,
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TrialOutcome<R> {
    Completed(R),
    Failed { error: String },
}

impl<R> TrialOutcome<R> {
    pub fn completed(&self) -> Option<&R> {
        match self {
            TrialOutcome::Completed(r) => Some(r),
            TrialOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRow<R> {
    pub trial: usize,
    #[serde(flatten)]
    pub outcome: TrialOutcome<R>,
}

#[derive(Debug, Clone)]
pub struct Trial<R> {
    pub trial: usize,
    pub outcome: TrialOutcome<R>,
    pub cpu_seconds: f64,
    /// Empty unless traces were requested.
    pub trace: Vec<TraceRecord>,
    pub enhanced: bool,
}

impl<R: Clone> Trial<R> {
    pub fn row(&self) -> TrialRow<R> {
        TrialRow {
            trial: self.trial,
            outcome: self.outcome.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSummary {
    pub rho: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Solver settings for `prog` with `μ̄ = α·μ̄_max` and `κ̄ = α·κ̄_max(μ̄)`.
pub fn solver_config(
    prog: &FractionalProgram,
    s: &RunSettings,
    epsilon: f64,
) -> Result<SolverConfig, SolverError> {
    let mut cfg = SolverConfig {
        delta: s.delta,
        tol: s.tol,
        max_iters: s.max_iters,
        epsilon_active: epsilon,
        schedule: Schedule::Fista { n0: s.n0 },
        ..SolverConfig::default()
    };
    let bounds = extrapolation_bounds(prog.ell(), prog.beta(), s.delta, cfg.zeta, prog.bc)
        .map_err(|v| SolverError::Config(vec![v]))?;
    cfg.mu_bar = s.alpha_extrap * bounds.mu_bar_max;
    cfg.kappa_bar = match bounds.kappa_bar_max(cfg.mu_bar) {
        Some(k) => s.alpha_extrap * k,
        None => 0.0,
    };
    Ok(cfg)
}

pub fn solve(
    prog: &FractionalProgram,
    cfg: &SolverConfig,
    x0: &[f64],
    algorithm: Algorithm,
) -> Result<SolveResult, SolverError> {
    match algorithm {
        Algorithm::Epsg => run(prog, cfg, x0),
        Algorithm::Enhanced => run_enhanced(prog, cfg, x0),
    }
}

pub fn status_name(status: Status) -> &'static str {
    match status {
        Status::Converged => "converged",
        Status::MaxIters => "max_iters",
    }
}

fn count_nonzeros(x: &[f64]) -> usize {
    x.iter().filter(|v| v.abs() > SPARSITY_THRESHOLD).count()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn rate_against(iterates: &[Vec<f64>], target: &[f64]) -> Option<RateSummary> {
    let errors: Vec<f64> = iterates.iter().map(|x| dist(x, target)).collect();
    estimate_rate(&errors).ok().map(|f| RateSummary {
        rho: f.rho,
        r_squared: f.r_squared,
        samples: f.samples,
    })
}

fn run_trials<R, F>(s: &RunSettings, body: F) -> Vec<Trial<R>>
where
    R: Send,
    F: Fn(usize) -> Result<(R, SolveResult), String> + Sync,
{
    (0..s.trials)
        .into_par_iter()
        .map(|trial| {
            let start = Instant::now();
            let result = body(trial);
            let cpu_seconds = start.elapsed().as_secs_f64();
            let enhanced = s.algorithm == Algorithm::Enhanced;
            match result {
                Ok((record, solved)) => Trial {
                    trial,
                    outcome: TrialOutcome::Completed(record),
                    cpu_seconds,
                    trace: if s.keep_traces {
                        solved.trace
                    } else {
                        Vec::new()
                    },
                    enhanced,
                },
                Err(error) => Trial {
                    trial,
                    outcome: TrialOutcome::Failed { error },
                    cpu_seconds,
                    trace: Vec::new(),
                    enhanced,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Ep1Record {
    pub x0: f64,
    pub algorithm: Algorithm,
    pub status: &'static str,
    pub iterations: usize,
    pub x_final: f64,
    /// Nearest lifted stationary point and the distance to it.
    pub nearest: f64,
    pub distance: f64,
    pub strong: bool,
    /// Largest `|x_n|` along the run.
    pub max_abs_iterate: f64,
    pub rate: Option<RateSummary>,
    pub merit_decrease_ok: bool,
    pub assumptions_clean: bool,
}

/// Runs EP1 once per start in `starts`; the trial index is the position in `starts`.
pub fn run_ep1(s: &RunSettings, starts: &[f64]) -> Vec<Trial<Ep1Record>> {
    let s = RunSettings {
        trials: starts.len(),
        ..s.clone()
    };
    let prog = ep1_program();
    run_trials(&s, |trial| {
        let x0 = starts[trial];
        let mut cfg =
            solver_config(&prog, &s, s.epsilon.unwrap_or(2.0)).map_err(|e| e.to_string())?;
        cfg.keep_iterates = true;
        let r = solve(&prog, &cfg, &[x0], s.algorithm).map_err(|e| e.to_string())?;
        let x = r.x[0];
        let (nearest, distance) = [-EP1_STRONG, 0.0, EP1_STRONG]
            .into_iter()
            .map(|p| (p, (x - p).abs()))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let strong = nearest != 0.0 && distance <= EP1_MATCH_TOL;
        let rate = if strong {
            rate_against(&r.iterates, &[nearest])
        } else {
            None
        };
        let record = Ep1Record {
            x0,
            algorithm: s.algorithm,
            status: status_name(r.status),
            iterations: r.iterations(),
            x_final: x,
            nearest,
            distance,
            strong,
            max_abs_iterate: r.iterates.iter().map(|v| v[0].abs()).fold(0.0, f64::max),
            rate,
            merit_decrease_ok: check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok(),
            assumptions_clean: r.assumptions.is_clean(),
        };
        Ok((record, r))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Ep2Record {
    pub seed: u64,
    pub status: &'static str,
    pub iterations: usize,
    pub sparsity_init: usize,
    pub sparsity_final: usize,
    pub err_ground_truth: f64,
    pub objective_init: f64,
    pub objective_final: f64,
    pub support_recovered: bool,
    pub merit_decrease_ok: bool,
    pub assumptions_clean: bool,
}

pub fn run_ep2(s: &RunSettings) -> Vec<Trial<Ep2Record>> {
    let (p, n, sparsity, f) = s.scale.ep2_dims();
    run_trials(s, |trial| {
        let inst = gen_ep2(p, n, sparsity, f, s.seed, trial as u64).map_err(|e| e.to_string())?;
        let prog = ep2_program(&inst).map_err(|e| e.to_string())?;
        let x0 = ep2_initial_point(&inst, &Default::default())
            .map_err(|e| format!("initializer: {e}"))?;
        let cfg = solver_config(&prog, s, s.epsilon.unwrap_or(1e-3)).map_err(|e| e.to_string())?;
        let r = solve(&prog, &cfg, &x0, s.algorithm).map_err(|e| e.to_string())?;
        let objective_init = prog.theta(&x0).map_err(|e| e.to_string())?;
        let objective_final = prog.theta(&r.x).map_err(|e| e.to_string())?;
        let support_recovered =
            r.x.iter()
                .zip(&inst.x_ground)
                .all(|(a, b)| (a.abs() > SPARSITY_THRESHOLD) == (*b != 0.0));
        let record = Ep2Record {
            seed: s.seed,
            status: status_name(r.status),
            iterations: r.iterations(),
            sparsity_init: count_nonzeros(&x0),
            sparsity_final: count_nonzeros(&r.x),
            err_ground_truth: dist(&r.x, &inst.x_ground),
            objective_init,
            objective_final,
            support_recovered,
            merit_decrease_ok: check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok(),
            assumptions_clean: r.assumptions.is_clean(),
        };
        Ok((record, r))
    })
}

/// Dimension of the Rayleigh quotient instances.
pub const RAYLEIGH_DIM: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct RayleighRecord {
    pub seed: u64,
    pub status: &'static str,
    pub iterations: usize,
    pub theta_final: f64,
    /// Closest generalized eigenvalue of `(A, B)`, its position in ascending order
    /// and the gap to it.
    pub nearest_eigenvalue: f64,
    pub eigen_index: usize,
    pub eigen_gap: f64,
    pub rayleigh_residual: f64,
    /// Fitted against the final iterate.
    pub rate: Option<RateSummary>,
    pub merit_decrease_ok: bool,
    pub assumptions_clean: bool,
}

pub fn run_rayleigh(s: &RunSettings) -> Vec<Trial<RayleighRecord>> {
    run_trials(s, |trial| {
        let inst = gen_rayleigh(RAYLEIGH_DIM, s.seed, trial as u64).map_err(|e| e.to_string())?;
        let prog = rayleigh_program(&inst.a, &inst.b).map_err(|e| e.to_string())?;
        let mut cfg =
            solver_config(&prog, s, s.epsilon.unwrap_or(1e-3)).map_err(|e| e.to_string())?;
        cfg.keep_iterates = true;
        let r = solve(&prog, &cfg, &inst.x0, s.algorithm).map_err(|e| e.to_string())?;
        let theta = prog.theta(&r.x).map_err(|e| e.to_string())?;
        let spectrum = gen_eigen(&inst.a, &inst.b)
            .map_err(|e| e.to_string())?
            .eigenvalues;
        let (eigen_index, eigen_gap) = spectrum
            .iter()
            .map(|e| (e - theta).abs())
            .enumerate()
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let record = RayleighRecord {
            seed: s.seed,
            status: status_name(r.status),
            iterations: r.iterations(),
            theta_final: theta,
            nearest_eigenvalue: spectrum[eigen_index],
            eigen_index,
            eigen_gap,
            rayleigh_residual: rayleigh_residual(&inst.a, &inst.b, &r.x),
            rate: rate_against(&r.iterates, &r.x),
            merit_decrease_ok: check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok(),
            assumptions_clean: r.assumptions.is_clean(),
        };
        Ok((record, r))
    })
}

/// `(N, m₁, m₂)` for the Sharpe instances.
pub const SHARPE_DIMS: (usize, usize, usize) = (10, 3, 3);

#[derive(Debug, Clone, Serialize)]
pub struct IndexResidual {
    pub index: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpeRecord {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub status: &'static str,
    pub iterations: usize,
    pub epsilon: f64,
    pub objective_init: f64,
    pub objective_final: f64,
    pub strong_residuals: Vec<IndexResidual>,
    pub max_strong_residual: f64,
    pub merit_decrease_ok: bool,
    pub assumptions_clean: bool,
}

/// `10⁻³` times the spread of the denominator components at `x`, or of `g(x)`
/// itself when all components coincide.
pub fn default_epsilon(prog: &FractionalProgram, x: &[f64]) -> f64 {
    let Some(comps) = prog.denominator.components() else {
        return 1e-3;
    };
    let vals: Vec<f64> = (0..comps.count())
        .map(|i| comps.component_value(i, x))
        .collect();
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if hi > lo {
        1e-3 * (hi - lo)
    } else {
        1e-3 * hi.abs().max(1.0)
    }
}

pub fn run_sharpe(s: &RunSettings) -> Vec<Trial<SharpeRecord>> {
    let (n, m1, m2) = SHARPE_DIMS;
    run_trials(s, |trial| {
        let inst = gen_sharpe(n, m1, m2, s.seed, trial as u64).map_err(|e| e.to_string())?;
        let prog = sharpe_program(&inst).map_err(|e| e.to_string())?;
        let x0 = vec![1.0 / n as f64; n];
        let epsilon = s.epsilon.unwrap_or_else(|| default_epsilon(&prog, &x0));
        let cfg = solver_config(&prog, s, epsilon).map_err(|e| e.to_string())?;
        let r = solve(&prog, &cfg, &x0, s.algorithm).map_err(|e| e.to_string())?;
        let strong_residuals: Vec<IndexResidual> = strong_stationarity_residuals(&prog, &cfg, &r.x)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|(index, residual)| IndexResidual { index, residual })
            .collect();
        let record = SharpeRecord {
            seed: s.seed,
            algorithm: s.algorithm,
            status: status_name(r.status),
            iterations: r.iterations(),
            epsilon,
            objective_init: prog.theta(&x0).map_err(|e| e.to_string())?,
            objective_final: prog.theta(&r.x).map_err(|e| e.to_string())?,
            max_strong_residual: strong_residuals
                .iter()
                .map(|r| r.residual)
                .fold(0.0, f64::max),
            strong_residuals,
            merit_decrease_ok: check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok(),
            assumptions_clean: r.assumptions.is_clean(),
        };
        Ok((record, r))
    })
}
