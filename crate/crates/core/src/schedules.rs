//! Step size and extrapolation schedules.

use crate::config::{Schedule, SolverConfig};

/// The largest admissible step `1 / max{√β θ / ζ, δ}`.
pub fn tau_rule(theta: f64, beta: f64, zeta: f64, delta: f64) -> f64 {
    1.0 / (libm::sqrt(beta) * theta / zeta).max(delta)
}

/// State of the FISTA recurrence `ν_{n+1} = (1 + √(1 + 4ν_n²)) / 2` with restarts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaRestartState {
    pub nu_prev: f64,
    pub nu: f64,
    pub iteration: usize,
    pub n0: usize,
}

impl FistaRestartState {
    pub fn new(n0: usize) -> Self {
        Self {
            nu_prev: 1.0,
            nu: 1.0,
            iteration: 0,
            n0,
        }
    }
}

/// Returns `(ν_{n−1} − 1) / ν_n` for the current iteration and the advanced state.
pub fn fista_factor(state: FistaRestartState) -> (f64, FistaRestartState) {
    let mut s = state;
    if s.iteration > 0 && s.n0 > 0 && s.iteration.is_multiple_of(s.n0) {
        s.nu_prev = 1.0;
        s.nu = 1.0;
    }
    let factor = (s.nu_prev - 1.0) / s.nu;
    let next = (1.0 + libm::sqrt(1.0 + 4.0 * s.nu * s.nu)) / 2.0;
    s.nu_prev = s.nu;
    s.nu = next;
    s.iteration += 1;
    (factor, s)
}

/// `(κ_n, μ_n) = (κ̄·factor, μ̄·τ_n·factor)`, clamped into `[0, κ̄] × [0, μ̄τ_n]`.
pub fn kappa_mu_schedule(cfg: &SolverConfig, tau: f64, factor: f64) -> (f64, f64) {
    let f = factor.clamp(0.0, 1.0);
    let kappa = (cfg.kappa_bar * f).clamp(0.0, cfg.kappa_bar);
    let mu_max = cfg.mu_bar * tau;
    let mu = (mu_max * f).clamp(0.0, mu_max);
    (kappa, mu)
}

/// Per-solve extrapolation factor source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorSchedule {
    Fista(FistaRestartState),
    Constant(f64),
}

impl FactorSchedule {
    pub fn new(schedule: Schedule) -> Self {
        match schedule {
            Schedule::Fista { n0 } => Self::Fista(FistaRestartState::new(n0)),
            Schedule::Constant(c) => Self::Constant(c),
        }
    }

    pub fn next_factor(&mut self) -> f64 {
        match self {
            Self::Fista(state) => {
                let (f, next) = fista_factor(*state);
                *state = next;
                f
            }
            Self::Constant(c) => *c,
        }
    }
}
