//! Extrapolated proximal subgradient iteration.
//!
//! Each step forms `θ_n = f(x_n)/g(x_n)`, a subgradient `g_n ∈ ∂g(x_n)`, the step
//! `τ_n` and extrapolated points `u_n, v_n`, then takes a prox step of
//! `fⁿ + ι_S` at the combined anchor.

use alloc::vec::Vec;

use thiserror::Error;

use crate::clock::Stopwatch;
use crate::config::{
    merit_constants, validate_config, ConfigViolation, MeritConstants, SolverConfig,
};
use crate::problem::{FractionalProgram, ModelError, SmoothPart};
use crate::prox::{ProxCache, ProxError};
use crate::schedules::{kappa_mu_schedule, tau_rule, FactorSchedule};
use crate::vector::{dist2, dot, norm2};

/// Slack on the merit decrease check.
pub const DECREASE_SLACK: f64 = 1e-10;
/// Slack on the runtime assumption checks.
pub const ASSUMPTION_SLACK: f64 = 1e-9;
/// Smallest step size accepted without a flag.
pub const MIN_TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0:?}")]
    Config(Vec<ConfigViolation>),
    #[error("starting point is not feasible: {0}")]
    InfeasibleStart(ModelError),
    #[error("iteration {iteration}: {source}")]
    Model {
        iteration: usize,
        source: ModelError,
    },
    #[error("iteration {iteration}: prox failed: {source}")]
    Prox { iteration: usize, source: ProxError },
    #[error("the denominator has no max-of-smooth structure")]
    NoComponents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
}

/// One iteration `x_n → x_{n+1}`. `theta` is `θ(x_n)`; `objective` and `merit`
/// are evaluated at `x_{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    pub theta: f64,
    pub objective: f64,
    pub merit: f64,
    pub step_norm: f64,
    pub tau: f64,
    pub kappa: f64,
    pub mu: f64,
    /// `‖x_{n+1} − x_n‖ / τ_n`
    pub residual: f64,
    pub elapsed_ms: f64,
    pub active_count: Option<usize>,
    pub chosen_index: Option<usize>,
}

/// Counts of runtime assumption checks that failed during a solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssumptionReport {
    pub bounds_violations: usize,
    pub weak_convexity_violations: usize,
    pub small_tau: usize,
    pub merit_violations: usize,
    pub first_merit_violation: Option<usize>,
    pub prox_decrease_violations: usize,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.bounds_violations == 0
            && self.weak_convexity_violations == 0
            && self.small_tau == 0
            && self.merit_violations == 0
            && self.prox_decrease_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub status: Status,
    pub trace: Vec<TraceRecord>,
    /// `x_0, x_1, …` when `keep_iterates` is set.
    pub iterates: Vec<Vec<f64>>,
    pub merit: MeritConstants,
    pub assumptions: AssumptionReport,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.trace.last().map(|r| r.objective)
    }
}

/// Anchor `z` and scale `t` such that the step is `x_{n+1} = prox_{t(fⁿ + ι_S)}(z)`.
#[allow(clippy::too_many_arguments)]
pub fn prox_anchor(
    x: &[f64],
    x_prev: &[f64],
    kappa: f64,
    mu: f64,
    tau: f64,
    theta: f64,
    g_n: &[f64],
    smooth: &dyn SmoothPart,
) -> (Vec<f64>, f64) {
    let ell = smooth.lipschitz();
    let u: Vec<f64> = x
        .iter()
        .zip(x_prev)
        .map(|(a, b)| a + kappa * (a - b))
        .collect();
    let grad = smooth.gradient(&u);
    let denom = 1.0 + ell * tau;
    let z = (0..x.len())
        .map(|i| {
            let v = x[i] + mu * (x[i] - x_prev[i]);
            (v + tau * theta * g_n[i] + ell * tau * u[i] - tau * grad[i]) / denom
        })
        .collect();
    (z, tau / denom)
}

/// Quantities shared by every proposal of iteration `n`.
pub struct StepContext<'a> {
    pub n: usize,
    pub x: &'a [f64],
    pub x_prev: &'a [f64],
    pub theta: f64,
    pub tau: f64,
    pub kappa: f64,
    pub mu: f64,
}

pub(crate) struct Proposal {
    pub x_next: Vec<f64>,
    pub active_count: Option<usize>,
    pub chosen_index: Option<usize>,
}

pub(crate) fn prox_error(iteration: usize) -> impl Fn(ProxError) -> SolverError {
    move |source| SolverError::Prox { iteration, source }
}

/// Runs a prox step at the anchor built from `direction` and checks the prox
/// decrease inequality when the anchor is feasible.
pub(crate) fn prox_step(
    prog: &FractionalProgram,
    ctx: &StepContext<'_>,
    direction: &[f64],
    cache: &mut ProxCache,
    report: &mut AssumptionReport,
) -> Result<Vec<f64>, SolverError> {
    let (z, scale) = prox_anchor(
        ctx.x,
        ctx.x_prev,
        ctx.kappa,
        ctx.mu,
        ctx.tau,
        ctx.theta,
        direction,
        prog.smooth.as_ref(),
    );
    let out = prog
        .nonsmooth
        .prox(scale, &z, cache)
        .map_err(prox_error(ctx.n))?;
    let hz = prog.nonsmooth.value(&z);
    if hz.is_finite() {
        let d = dist2(&out, &z);
        let lhs = prog.nonsmooth.value(&out) + d * d / (2.0 * scale);
        if lhs > hz + ASSUMPTION_SLACK * (1.0 + hz.abs()) {
            report.prox_decrease_violations += 1;
        }
    }
    Ok(out)
}

pub(crate) fn drive(
    prog: &FractionalProgram,
    cfg: &SolverConfig,
    x0: &[f64],
    mut propose: impl FnMut(
        &StepContext<'_>,
        &mut ProxCache,
        &mut AssumptionReport,
    ) -> Result<Proposal, SolverError>,
) -> Result<SolveResult, SolverError> {
    validate_config(cfg, prog).map_err(SolverError::Config)?;
    let merit = merit_constants(cfg, prog).map_err(|v| SolverError::Config(alloc::vec![v]))?;
    let theta0 = prog.theta(x0).map_err(SolverError::InfeasibleStart)?;
    let clock = Stopwatch::start();
    let beta = prog.beta();
    let mut report = AssumptionReport::default();
    let mut cache = ProxCache::new();
    let mut schedule = FactorSchedule::new(cfg.schedule);
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    if cfg.keep_iterates {
        iterates.push(x0.to_vec());
    }

    let mut x = x0.to_vec();
    let mut x_prev = x0.to_vec();
    let mut theta = theta0;
    let mut merit_n = theta0;
    let mut g_x = prog.denominator.value(x0);
    if let Some(bc) = prog.bc {
        if !bc.contains(g_x, ASSUMPTION_SLACK) {
            report.bounds_violations += 1;
        }
    }
    let mut status = Status::MaxIters;

    for n in 0..cfg.max_iters {
        let tau = tau_rule(theta, beta, cfg.zeta, cfg.delta);
        if tau < MIN_TAU {
            report.small_tau += 1;
        }
        let factor = schedule.next_factor();
        let (kappa, mu) = kappa_mu_schedule(cfg, tau, factor);
        let ctx = StepContext {
            n,
            x: &x,
            x_prev: &x_prev,
            theta,
            tau,
            kappa,
            mu,
        };
        let proposal = propose(&ctx, &mut cache, &mut report)?;
        let x_next = proposal.x_next;

        let theta_next = prog.theta(&x_next).map_err(|source| SolverError::Model {
            iteration: n,
            source,
        })?;
        let step = dist2(&x_next, &x);
        let merit_next = theta_next + merit.c * step * step;
        let g_next = prog.denominator.value(&x_next);

        if let Some(bc) = prog.bc {
            if !bc.contains(g_next, ASSUMPTION_SLACK) {
                report.bounds_violations += 1;
            }
        }
        let sub = prog.denominator.subgradient(&x);
        let diff: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
        if dot(&sub, &diff) > g_next - g_x + 0.5 * beta * step * step + ASSUMPTION_SLACK {
            report.weak_convexity_violations += 1;
        }
        let decreased = match merit.alpha {
            Some(alpha) => merit_next + alpha * step * step <= merit_n + DECREASE_SLACK,
            None => theta_next <= theta + DECREASE_SLACK,
        };
        if !decreased {
            report.merit_violations += 1;
            report.first_merit_violation.get_or_insert(n);
        }

        trace.push(TraceRecord {
            n,
            theta,
            objective: theta_next,
            merit: merit_next,
            step_norm: step,
            tau,
            kappa,
            mu,
            residual: step / tau,
            elapsed_ms: clock.elapsed_ms(),
            active_count: proposal.active_count,
            chosen_index: proposal.chosen_index,
        });
        if cfg.keep_iterates {
            iterates.push(x_next.clone());
        }

        let converged = step / norm2(&x).max(1.0) <= cfg.tol;
        x_prev = core::mem::replace(&mut x, x_next);
        theta = theta_next;
        merit_n = merit_next;
        g_x = g_next;
        if converged {
            status = Status::Converged;
            break;
        }
    }

    Ok(SolveResult {
        x,
        status,
        trace,
        iterates,
        merit,
        assumptions: report,
    })
}

/// Runs the extrapolated proximal subgradient method from `x0` (with `x_{−1} = x_0`)
/// until `‖x_{n+1} − x_n‖ / max{‖x_n‖, 1} ≤ tol` or `max_iters`.
pub fn run(
    prog: &FractionalProgram,
    cfg: &SolverConfig,
    x0: &[f64],
) -> Result<SolveResult, SolverError> {
    drive(prog, cfg, x0, |ctx, cache, report| {
        let g_n = prog.denominator.subgradient(ctx.x);
        let x_next = prox_step(prog, ctx, &g_n, cache, report)?;
        Ok(Proposal {
            x_next,
            active_count: None,
            chosen_index: None,
        })
    })
}
