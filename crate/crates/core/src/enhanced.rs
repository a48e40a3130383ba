//! Enhanced iteration for `g = max_i gᵢ` with smooth components: one prox
//! candidate per ε-active component, the best by a merit-like score is kept.

use alloc::vec::Vec;

use crate::config::{weak_convexity_slack, SolverConfig};
use crate::epsg::{
    drive, prox_step, AssumptionReport, Proposal, SolveResult, SolverError, StepContext,
};
use crate::problem::{FractionalProgram, SmoothComponents};
use crate::prox::ProxCache;
use crate::schedules::tau_rule;
use crate::vector::dist2;

/// Active-set width used for the stationarity check at the final point.
pub const STATIONARITY_EPSILON: f64 = 1e-8;

/// `{i : gᵢ(x) ≥ g(x) − ε}` in ascending order.
pub fn active_set(components: &dyn SmoothComponents, x: &[f64], epsilon: f64) -> Vec<usize> {
    let values: Vec<f64> = (0..components.count())
        .map(|i| components.component_value(i, x))
        .collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= top - epsilon)
        .map(|(i, _)| i)
        .collect()
}

/// The prox step of iteration `ctx` with `∇gᵢ(x_n)` in place of the subgradient.
pub fn candidate(
    prog: &FractionalProgram,
    ctx: &StepContext<'_>,
    i: usize,
    cache: &mut ProxCache,
    report: &mut AssumptionReport,
) -> Result<Vec<f64>, SolverError> {
    let components = prog
        .denominator
        .components()
        .ok_or(SolverError::NoComponents)?;
    let grad = components.component_gradient(i, ctx.x);
    prox_step(prog, ctx, &grad, cache, report)
}

/// `f(w) − θ g(w) + ½((1 − √βζ)/τ − Mμ/(√(mM)τ))‖w − x‖²`
pub fn selection_score(
    prog: &FractionalProgram,
    cfg: &SolverConfig,
    ctx: &StepContext<'_>,
    w: &[f64],
) -> f64 {
    let mut coef = weak_convexity_slack(prog.beta(), cfg.zeta) / ctx.tau;
    if let Some(bc) = prog.bc {
        coef -= bc.big_m * ctx.mu / (libm::sqrt(bc.m * bc.big_m) * ctx.tau);
    }
    let d = dist2(w, ctx.x);
    prog.numerator(w) - ctx.theta * prog.denominator.value(w) + 0.5 * coef * d * d
}

/// Position of the smallest score; ties go to the earliest position.
pub fn select(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = k;
        }
    }
    best
}

pub fn run_enhanced(
    prog: &FractionalProgram,
    cfg: &SolverConfig,
    x0: &[f64],
) -> Result<SolveResult, SolverError> {
    let components = prog
        .denominator
        .components()
        .ok_or(SolverError::NoComponents)?;
    drive(prog, cfg, x0, |ctx, cache, report| {
        let active = active_set(components, ctx.x, cfg.epsilon_active);
        let mut points = Vec::with_capacity(active.len());
        let mut scores = Vec::with_capacity(active.len());
        for &i in &active {
            let w = candidate(prog, ctx, i, cache, report)?;
            scores.push(selection_score(prog, cfg, ctx, &w));
            points.push(w);
        }
        let k = select(&scores);
        debug_assert!(scores.iter().all(|s| scores[k] <= *s));
        Ok(Proposal {
            x_next: points.swap_remove(k),
            active_count: Some(active.len()),
            chosen_index: Some(active[k]),
        })
    })
}

/// For each `i ∈ I_ε(x̄)` with `ε = 1e−8`, the distance `‖wᵢ − x̄‖` of one
/// candidate step from `x̄` without extrapolation.
pub fn strong_stationarity_residuals(
    prog: &FractionalProgram,
    cfg: &SolverConfig,
    x: &[f64],
) -> Result<Vec<(usize, f64)>, SolverError> {
    let components = prog
        .denominator
        .components()
        .ok_or(SolverError::NoComponents)?;
    let theta = prog.theta(x).map_err(|source| SolverError::Model {
        iteration: 0,
        source,
    })?;
    let ctx = StepContext {
        n: 0,
        x,
        x_prev: x,
        theta,
        tau: tau_rule(theta, prog.beta(), cfg.zeta, cfg.delta),
        kappa: 0.0,
        mu: 0.0,
    };
    let mut cache = ProxCache::new();
    let mut report = AssumptionReport::default();
    active_set(components, x, STATIONARITY_EPSILON)
        .into_iter()
        .map(|i| {
            let w = candidate(prog, &ctx, i, &mut cache, &mut report)?;
            Ok((i, dist2(&w, x)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::MaxAffine;

    #[test]
    fn active_set_examples() {
        let g = MaxAffine::abs_plus_one();
        for x in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(active_set(&g, &[x], 2.0), alloc::vec![0, 1]);
        }
        assert_eq!(active_set(&g, &[0.5], 1e-12), alloc::vec![0]);
        assert_eq!(active_set(&g, &[0.0], 0.0), alloc::vec![0, 1]);
    }

    #[test]
    fn select_breaks_ties_by_position() {
        assert_eq!(select(&[-1.0 / 12.0, -1.0 / 12.0]), 0);
        assert_eq!(select(&[0.0, -0.5, -0.5]), 1);
        assert_eq!(select(&[3.0]), 0);
    }
}
