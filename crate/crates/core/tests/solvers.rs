use fracprox_core::config::{Schedule, SolverConfig};
use fracprox_core::diagnostics::{check_sufficient_decrease, estimate_rate};
use fracprox_core::enhanced::run_enhanced;
use fracprox_core::epsg::{run, SolveResult, SolverError, Status};
use fracprox_core::instances::{ep1_program, gen_rayleigh, rayleigh_program};
use proptest::prelude::*;

const X_STAR: f64 = std::f64::consts::SQRT_2 - 1.0;

fn ep1_cfg() -> SolverConfig {
    SolverConfig {
        delta: 4.0,
        tol: 1e-12,
        max_iters: 200,
        epsilon_active: 2.0,
        keep_iterates: true,
        ..SolverConfig::default()
    }
}

/// The EP1 map with `δ = 4` and no extrapolation: `x ↦ (2/3)(x + θ(x) sign(x)/4)`
/// clamped to `[−1, 1]`.
fn ep1_map(x: f64) -> f64 {
    let theta = (x * x + 1.0) / (x.abs() + 1.0);
    let s = if x == 0.0 { 0.0 } else { x.signum() };
    (2.0 / 3.0 * (x + theta * s / 4.0)).clamp(-1.0, 1.0)
}

#[test]
fn ep1_iterates_follow_the_closed_form_map() {
    let r = run(&ep1_program(), &ep1_cfg(), &[1.0]).unwrap();
    assert!((r.iterates[1][0] - 5.0 / 6.0).abs() <= 1e-15);
    let mut x = 1.0;
    for it in r.iterates.iter().skip(1).take(20) {
        x = ep1_map(x);
        assert!((it[0] - x).abs() <= 1e-14);
    }
    assert_eq!(r.status, Status::Converged);
    assert!((r.x[0] - X_STAR).abs() <= 1e-9);
    assert!(r.iterations() <= 200);
}

#[test]
fn ep1_fixed_points() {
    let r = run(&ep1_program(), &ep1_cfg(), &[0.0]).unwrap();
    assert!(r.iterates.iter().all(|x| x[0] == 0.0));
    assert!((ep1_map(X_STAR) - X_STAR).abs() <= 1e-15);
    let r = run(&ep1_program(), &ep1_cfg(), &[-1.0]).unwrap();
    assert!((r.x[0] + X_STAR).abs() <= 1e-9);
}

#[test]
fn max_iters_caps_the_trace() {
    let cfg = SolverConfig {
        max_iters: 3,
        ..ep1_cfg()
    };
    let r = run(&ep1_program(), &cfg, &[1.0]).unwrap();
    assert_eq!(r.status, Status::MaxIters);
    assert_eq!(r.trace.len(), 3);
}

fn same_path(a: &SolveResult, b: &SolveResult) -> bool {
    a.x == b.x
        && a.trace.len() == b.trace.len()
        && a.trace.iter().zip(&b.trace).all(|(p, q)| {
            p.theta == q.theta
                && p.objective == q.objective
                && p.merit == q.merit
                && p.step_norm == q.step_norm
        })
}

#[test]
fn fista_without_extrapolation_matches_constant_zero() {
    let fista = run(&ep1_program(), &ep1_cfg(), &[0.7]).unwrap();
    let constant = SolverConfig {
        schedule: Schedule::Constant(0.0),
        ..ep1_cfg()
    };
    assert!(same_path(
        &fista,
        &run(&ep1_program(), &constant, &[0.7]).unwrap()
    ));
}

#[test]
fn extrapolated_ep1_still_decreases_merit() {
    let cfg = SolverConfig {
        kappa_bar: 0.5,
        ..ep1_cfg()
    };
    let r = run(&ep1_program(), &cfg, &[1.0]).unwrap();
    assert_eq!(r.merit.alpha, Some(0.75));
    assert!(check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok());
    assert!(r.assumptions.is_clean());
    assert!((r.x[0] - X_STAR).abs() <= 1e-9);
}

#[test]
fn enhanced_escapes_zero() {
    let r = run_enhanced(&ep1_program(), &ep1_cfg(), &[0.0]).unwrap();
    assert!((r.iterates[1][0] - 1.0 / 6.0).abs() <= 1e-15);
    assert_eq!(r.trace[0].chosen_index, Some(0));
    assert_eq!(r.trace[0].active_count, Some(2));
    assert!((r.x[0] - X_STAR).abs() <= 1e-9);
    for (x0, target) in [(1.0, X_STAR), (-1.0, -X_STAR)] {
        let r = run_enhanced(&ep1_program(), &ep1_cfg(), &[x0]).unwrap();
        assert!((r.x[0] - target).abs() <= 1e-9);
        assert!(check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok());
    }
}

#[test]
fn single_component_enhanced_equals_epsg() {
    let inst = gen_rayleigh(6, 3, 0).unwrap();
    let prog = rayleigh_program(&inst.a, &inst.b).unwrap();
    let cfg = SolverConfig {
        tol: 1e-10,
        max_iters: 500,
        ..SolverConfig::default()
    };
    let a = run(&prog, &cfg, &inst.x0).unwrap();
    let b = run_enhanced(&prog, &cfg, &inst.x0).unwrap();
    assert!(same_path(&a, &b));
}

#[test]
fn rejects_bad_inputs() {
    let prog = ep1_program();
    assert!(matches!(
        run(&prog, &ep1_cfg(), &[2.0]),
        Err(SolverError::InfeasibleStart(_))
    ));
    let cfg = SolverConfig {
        delta: -1.0,
        ..ep1_cfg()
    };
    assert!(matches!(
        run(&prog, &cfg, &[0.5]),
        Err(SolverError::Config(_))
    ));
}

#[test]
fn ep1_rate_is_two_thirds() {
    let r = run(&ep1_program(), &ep1_cfg(), &[1.0]).unwrap();
    let errors: Vec<f64> = r.iterates.iter().map(|x| (x[0] - X_STAR).abs()).collect();
    let fit = estimate_rate(&errors).unwrap();
    assert!((0.616..=0.716).contains(&fit.rho));
    assert!(fit.r_squared >= 0.999);
}

proptest! {
    #[test]
    fn rate_recovers_geometric_ratio(rho in 0.05..0.95f64, c in 0.1..10.0f64) {
        let errors: Vec<f64> = (0..40).map(|n| c * rho.powi(n)).take_while(|e| *e > 1e-13).collect();
        prop_assume!(errors.len() >= 20);
        let fit = estimate_rate(&errors).unwrap();
        prop_assert!((fit.rho - rho).abs() <= 1e-9);
        prop_assert!(fit.r_squared >= 1.0 - 1e-9);
    }

    #[test]
    fn ep1_runs_decrease_merit_from_any_start(x0 in -1.0..1.0f64) {
        for r in [run(&ep1_program(), &ep1_cfg(), &[x0]).unwrap(), run_enhanced(&ep1_program(), &ep1_cfg(), &[x0]).unwrap()] {
            prop_assert!(check_sufficient_decrease(&r.trace, r.merit.alpha).is_ok());
            prop_assert!(r.assumptions.is_clean());
        }
    }
}
