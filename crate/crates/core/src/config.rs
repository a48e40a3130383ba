//! Solver parameters, their admissible ranges and the merit-function constants.

use alloc::vec::Vec;

use thiserror::Error;

use crate::problem::{BoundsCondition, FractionalProgram};

/// How the extrapolation factor in `[0, 1)` evolves over iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// FISTA recurrence restarted every `n0` iterations.
    Fista { n0: usize },
    /// The same factor every iteration.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub delta: f64,
    pub zeta: f64,
    pub mu_bar: f64,
    pub kappa_bar: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Width of the active set in the enhanced solver.
    pub epsilon_active: f64,
    pub schedule: Schedule,
    /// Record every iterate in the trace.
    pub keep_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            zeta: 0.5,
            mu_bar: 0.0,
            kappa_bar: 0.0,
            tol: 1e-9,
            max_iters: 5000,
            epsilon_active: 1e-3,
            schedule: Schedule::Fista { n0: 50 },
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("zeta must be positive, got {0}")]
    NonPositiveZeta(f64),
    #[error("1 - sqrt(beta)*zeta = {0} <= 0")]
    WeakConvexitySlack(f64),
    #[error("mu_bar = {mu_bar} outside [0, {max})")]
    MuBarOutOfRange { mu_bar: f64, max: f64 },
    #[error("kappa_bar = {kappa_bar} outside [0, {max})")]
    KappaBarOutOfRange { kappa_bar: f64, max: f64 },
    #[error("without bounds on g, mu_bar and kappa_bar must be 0 (got {mu_bar}, {kappa_bar})")]
    ExtrapolationWithoutBounds { mu_bar: f64, kappa_bar: f64 },
    #[error("tol must be positive, got {0}")]
    NonPositiveTol(f64),
    #[error("max_iters must be positive")]
    ZeroMaxIters,
    #[error("epsilon_active must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("restart period must be positive")]
    ZeroRestartPeriod,
    #[error("constant extrapolation factor {0} outside [0, 1]")]
    FactorOutOfRange(f64),
    #[error("merit decrease constant alpha = {0} is not positive")]
    NonPositiveAlpha(f64),
}

/// Admissible extrapolation ranges for given `ℓ, β, δ, ζ` and optional bounds on `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationBounds {
    /// `μ̄` must lie in `[0, mu_bar_max)`.
    pub mu_bar_max: f64,
    ell: f64,
    slack: f64,
    bc: Option<BoundsCondition>,
}

impl ExtrapolationBounds {
    /// Upper end of the half-open `κ̄` range for a given `μ̄`; `None` when `ℓ = 0`
    /// leaves `κ̄` unconstrained.
    pub fn kappa_bar_max(&self, mu_bar: f64) -> Option<f64> {
        let Some(bc) = self.bc else {
            return Some(0.0);
        };
        if self.ell == 0.0 {
            return None;
        }
        let (m, big_m) = (bc.m, bc.big_m);
        let inner = m * self.slack / (self.ell * big_m)
            - 2.0 * m * mu_bar / (self.ell * libm::sqrt(m * big_m));
        Some(libm::sqrt(inner.max(0.0)))
    }
}

/// `1 − √β ζ`
pub fn weak_convexity_slack(beta: f64, zeta: f64) -> f64 {
    1.0 - libm::sqrt(beta) * zeta
}

pub fn extrapolation_bounds(
    ell: f64,
    beta: f64,
    delta: f64,
    zeta: f64,
    bc: Option<BoundsCondition>,
) -> Result<ExtrapolationBounds, ConfigViolation> {
    let s = weak_convexity_slack(beta, zeta);
    if !(s > 0.0) {
        return Err(ConfigViolation::WeakConvexitySlack(s));
    }
    let mu_bar_max = match bc {
        Some(bc) => delta * s * libm::sqrt(bc.m * bc.big_m) / (2.0 * bc.big_m),
        None => 0.0,
    };
    Ok(ExtrapolationBounds {
        mu_bar_max,
        ell,
        slack: delta * s,
        bc,
    })
}

/// Every violated requirement on `cfg` for `prog`, or `Ok` when none.
pub fn validate_config(
    cfg: &SolverConfig,
    prog: &FractionalProgram,
) -> Result<(), Vec<ConfigViolation>> {
    let mut out = Vec::new();
    if !(cfg.delta > 0.0) {
        out.push(ConfigViolation::NonPositiveDelta(cfg.delta));
    }
    if !(cfg.zeta > 0.0) {
        out.push(ConfigViolation::NonPositiveZeta(cfg.zeta));
    }
    if !(cfg.tol > 0.0) {
        out.push(ConfigViolation::NonPositiveTol(cfg.tol));
    }
    if cfg.max_iters == 0 {
        out.push(ConfigViolation::ZeroMaxIters);
    }
    if !(cfg.epsilon_active > 0.0) {
        out.push(ConfigViolation::NonPositiveEpsilon(cfg.epsilon_active));
    }
    match cfg.schedule {
        Schedule::Fista { n0: 0 } => out.push(ConfigViolation::ZeroRestartPeriod),
        Schedule::Constant(c) if !(0.0..=1.0).contains(&c) => {
            out.push(ConfigViolation::FactorOutOfRange(c))
        }
        _ => {}
    }
    match extrapolation_bounds(prog.ell(), prog.beta(), cfg.delta, cfg.zeta, prog.bc) {
        Err(v) => out.push(v),
        Ok(bounds) if prog.bc.is_none() => {
            if cfg.mu_bar != 0.0 || cfg.kappa_bar != 0.0 {
                out.push(ConfigViolation::ExtrapolationWithoutBounds {
                    mu_bar: cfg.mu_bar,
                    kappa_bar: cfg.kappa_bar,
                });
            }
            debug_assert_eq!(bounds.mu_bar_max, 0.0);
        }
        Ok(bounds) => {
            if !(cfg.mu_bar >= 0.0 && cfg.mu_bar < bounds.mu_bar_max) {
                out.push(ConfigViolation::MuBarOutOfRange {
                    mu_bar: cfg.mu_bar,
                    max: bounds.mu_bar_max,
                });
            }
            match bounds.kappa_bar_max(cfg.mu_bar) {
                Some(max) if !(cfg.kappa_bar >= 0.0 && cfg.kappa_bar < max) => {
                    out.push(ConfigViolation::KappaBarOutOfRange {
                        kappa_bar: cfg.kappa_bar,
                        max,
                    });
                }
                None if !(cfg.kappa_bar >= 0.0 && cfg.kappa_bar < 1.0) => {
                    out.push(ConfigViolation::KappaBarOutOfRange {
                        kappa_bar: cfg.kappa_bar,
                        max: 1.0,
                    });
                }
                _ => {}
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Constants of the merit `F = θ(x) + c‖x − x_prev‖²`, which decreases by at
/// least `α‖x_{n+1} − x_n‖²` per iteration. `alpha` is `None` without bounds on `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritConstants {
    pub c: f64,
    pub alpha: Option<f64>,
}

pub fn merit_constants(
    cfg: &SolverConfig,
    prog: &FractionalProgram,
) -> Result<MeritConstants, ConfigViolation> {
    let s = weak_convexity_slack(prog.beta(), cfg.zeta);
    if !(s > 0.0) {
        return Err(ConfigViolation::WeakConvexitySlack(s));
    }
    let Some(bc) = prog.bc else {
        return Ok(MeritConstants {
            c: 0.0,
            alpha: None,
        });
    };
    let ell = prog.ell();
    let root = libm::sqrt(bc.m * bc.big_m);
    let kappa_term = ell * cfg.kappa_bar * cfg.kappa_bar / (2.0 * bc.m);
    let c = kappa_term + cfg.mu_bar / (2.0 * root);
    let alpha = cfg.delta * s / (2.0 * bc.big_m) - cfg.mu_bar / root - kappa_term;
    if !(alpha > 0.0) {
        return Err(ConfigViolation::NonPositiveAlpha(alpha));
    }
    Ok(MeritConstants {
        c,
        alpha: Some(alpha),
    })
}
