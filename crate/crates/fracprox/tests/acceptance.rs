//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fracprox::experiments::{
    run_ep1, run_ep2, run_rayleigh, run_sharpe, Algorithm, Experiment, RunSettings, Trial,
    EP1_STRONG,
};
use fracprox::report::RECOVERY_TOL;
use fracprox_core::instances::{
    ep1_program, ep2_initial_point, ep2_program, gen_ep2, gen_rayleigh, gen_sharpe, sharpe_program,
    trial_rng,
};
use fracprox_core::linalg::DenseMatrix;
use fracprox_core::prox::{
    project_box, project_simplex, project_sphere, soft_threshold, ProxCache, ProxOracle,
    SphereIndicator,
};
use fracprox_core::qp::{kkt_residual, solve_qp, QpProblem, QpSettings};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn completed<R: Clone>(trials: &[Trial<R>]) -> Option<Vec<R>> {
    trials
        .iter()
        .map(|t| t.outcome.completed().cloned())
        .collect()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn ep1_settings(algorithm: Algorithm) -> RunSettings {
    RunSettings {
        algorithm,
        ..Experiment::Ep1.defaults()
    }
}

fn criterion_1() -> Verdict {
    let trials = run_ep1(
        &ep1_settings(Algorithm::Epsg),
        &[1.0, 0.3, 0.9, 0.0, -0.3, -1.0],
    );
    let Some(records) = completed(&trials) else {
        return verdict(false, "a run failed");
    };
    let mut worst = 0.0f64;
    let mut ok = true;
    for r in &records {
        if r.x0 > 0.0 {
            ok &= (r.x_final - EP1_STRONG).abs() <= 1e-9 && r.iterations <= 200;
            worst = worst.max((r.x_final - EP1_STRONG).abs());
        } else if r.x0 < 0.0 {
            ok &= (r.x_final + EP1_STRONG).abs() <= 1e-9;
            worst = worst.max((r.x_final + EP1_STRONG).abs());
        } else {
            ok &= r.max_abs_iterate == 0.0;
        }
    }
    let slowest = trials.iter().map(|t| t.cpu_seconds).fold(0.0, f64::max);
    let iters = records.iter().map(|r| r.iterations).max().unwrap_or(0);
    verdict(
        ok && slowest < 0.1,
        format!("max error {worst:.2e}, max iterations {iters}, zero start stays at 0, slowest run {slowest:.4}s"),
    )
}

fn criterion_2() -> Verdict {
    let trials = run_ep1(&ep1_settings(Algorithm::Enhanced), &[0.0]);
    let Some(r) = completed(&trials).and_then(|v| v.into_iter().next()) else {
        return verdict(false, "run failed");
    };
    let err = (r.x_final - EP1_STRONG).abs();
    let secs = trials[0].cpu_seconds;
    verdict(
        err <= 1e-9 && secs < 0.1,
        format!(
            "x = {:.12} (error {err:.2e}) in {} iterations, {secs:.4}s",
            r.x_final, r.iterations
        ),
    )
}

fn criterion_3() -> Verdict {
    let trials = run_ep1(&ep1_settings(Algorithm::Epsg), &[1.0]);
    let Some(rate) = completed(&trials).and_then(|v| v[0].rate) else {
        return verdict(false, "no rate fitted");
    };
    verdict(
        (0.616..=0.716).contains(&rate.rho) && rate.r_squared >= 0.999,
        format!(
            "rho {:.6}, r^2 {:.9} over {} samples",
            rate.rho, rate.r_squared, rate.samples
        ),
    )
}

fn criterion_4() -> Verdict {
    let starts = [1.0, 0.3, 0.9, 0.0, -0.3, -1.0];
    let mut flags: Vec<(String, bool)> = Vec::new();
    for alg in [Algorithm::Epsg, Algorithm::Enhanced] {
        for t in run_ep1(&ep1_settings(alg), &starts) {
            let ok = t
                .outcome
                .completed()
                .is_some_and(|r| r.merit_decrease_ok && r.assumptions_clean);
            flags.push((format!("ep1 {alg:?} x0={}", starts[t.trial]), ok));
        }
    }
    for t in run_ep2(&Experiment::Ep2.defaults()) {
        let ok = t
            .outcome
            .completed()
            .is_some_and(|r| r.merit_decrease_ok && r.assumptions_clean);
        flags.push((format!("ep2 trial {}", t.trial), ok));
    }
    for t in run_rayleigh(&Experiment::Rayleigh.defaults()) {
        let ok = t
            .outcome
            .completed()
            .is_some_and(|r| r.merit_decrease_ok && r.assumptions_clean);
        flags.push((format!("rayleigh trial {}", t.trial), ok));
    }
    for alg in [Algorithm::Enhanced, Algorithm::Epsg] {
        let s = RunSettings {
            algorithm: alg,
            ..Experiment::Sharpe.defaults()
        };
        for t in run_sharpe(&s) {
            let ok = t
                .outcome
                .completed()
                .is_some_and(|r| r.merit_decrease_ok && r.assumptions_clean);
            flags.push((format!("sharpe {alg:?} trial {}", t.trial), ok));
        }
    }
    let failed: Vec<&str> = flags
        .iter()
        .filter(|f| !f.1)
        .map(|f| f.0.as_str())
        .collect();
    verdict(
        failed.is_empty(),
        format!("{} runs checked, failures: {:?}", flags.len(), failed),
    )
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let trials = run_ep2(&Experiment::Ep2.defaults());
    let secs = start.elapsed().as_secs_f64();
    let Some(records) = completed(&trials) else {
        return verdict(false, "a trial failed");
    };
    let monotone = records
        .iter()
        .filter(|r| r.objective_final <= r.objective_init + 1e-9)
        .count();
    let recovered = records
        .iter()
        .filter(|r| r.support_recovered && r.err_ground_truth <= RECOVERY_TOL)
        .count();
    let terminated = records
        .iter()
        .filter(|r| r.status == "converged" && r.iterations <= 5000)
        .count();
    verdict(
        records.len() == 20 && monotone == 20 && recovered >= 16 && terminated == 20 && secs <= 120.0,
        format!("objective nonincreasing {monotone}/20, recovered {recovered}/20, converged {terminated}/20, {secs:.2}s"),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let trials = run_rayleigh(&Experiment::Rayleigh.defaults());
    let secs = start.elapsed().as_secs_f64();
    let Some(records) = completed(&trials) else {
        return verdict(false, "a trial failed");
    };
    let residual = records
        .iter()
        .map(|r| r.rayleigh_residual)
        .fold(0.0, f64::max);
    let gap = records.iter().map(|r| r.eigen_gap).fold(0.0, f64::max);
    let r2 = records
        .iter()
        .map(|r| r.rate.map_or(0.0, |f| f.r_squared))
        .fold(f64::INFINITY, f64::min);
    verdict(
        records.len() == 10 && residual <= 1e-8 && gap <= 1e-8 && r2 >= 0.98 && secs < 5.0,
        format!(
            "max residual {residual:.2e}, max eigen gap {gap:.2e}, min r^2 {r2:.4}, {secs:.2}s"
        ),
    )
}

/// Random feasible QP with a positive definite Hessian and a mix of one-sided,
/// two-sided and equality rows.
fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let mut p = DenseMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal)).gram();
    p.add_diag(0.1);
    let q = normal_vec(rng, n);
    let a = DenseMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let feasible = normal_vec(rng, n);
    let ax = a.matvec(&feasible);
    let mut l = vec![f64::NEG_INFINITY; m];
    let mut u = vec![f64::INFINITY; m];
    for i in 0..m {
        match rng.random_range(0..4) {
            0 => l[i] = ax[i] - rng.random::<f64>(),
            1 => u[i] = ax[i] + rng.random::<f64>(),
            2 => {
                l[i] = ax[i] - rng.random::<f64>();
                u[i] = ax[i] + rng.random::<f64>();
            }
            _ => {
                if i < n / 2 {
                    l[i] = ax[i];
                    u[i] = ax[i];
                } else {
                    l[i] = ax[i] - rng.random::<f64>();
                }
            }
        }
    }
    QpProblem::new(p, q, a, l, u).expect("valid QP")
}

/// Minimizes over every face spanned by at most `n` bound constraints and keeps
/// the best feasible face minimizer.
fn brute_force_qp(qp: &QpProblem) -> Option<(f64, Vec<f64>)> {
    let n = qp.num_vars();
    let m = qp.num_constraints();
    let mut equalities = Vec::new();
    let mut halfspaces = Vec::new();
    for i in 0..m {
        if qp.l[i] == qp.u[i] {
            equalities.push((i, qp.l[i]));
        } else {
            if qp.l[i].is_finite() {
                halfspaces.push((i, qp.l[i]));
            }
            if qp.u[i].is_finite() {
                halfspaces.push((i, qp.u[i]));
            }
        }
    }
    let pm = DMatrix::from_row_slice(n, n, qp.p.as_slice());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let h = halfspaces.len();
    for mask in 0u32..(1 << h) {
        let k = mask.count_ones() as usize + equalities.len();
        if k > n {
            continue;
        }
        let mut rows: Vec<(usize, f64)> = equalities.clone();
        let mut clash = false;
        for (j, hs) in halfspaces.iter().enumerate() {
            if mask >> j & 1 == 1 {
                clash |= rows.iter().any(|r| r.0 == hs.0);
                rows.push(*hs);
            }
        }
        if clash {
            continue;
        }
        let dim = n + k;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&pm);
        let mut rhs = DVector::zeros(dim);
        for j in 0..n {
            rhs[j] = -qp.q[j];
        }
        for (r, (i, bound)) in rows.iter().enumerate() {
            for j in 0..n {
                let v = qp.a.row(*i)[j];
                kkt[(n + r, j)] = v;
                kkt[(j, n + r)] = v;
            }
            rhs[n + r] = *bound;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x: Vec<f64> = sol.iter().take(n).copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let ax = qp.a.matvec(&x);
        let feasible = (0..m).all(|i| ax[i] >= qp.l[i] - 1e-9 && ax[i] <= qp.u[i] + 1e-9);
        if !feasible {
            continue;
        }
        let value = qp.objective(&x);
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, x));
        }
    }
    best
}

fn criterion_7() -> Verdict {
    let settings = QpSettings::default();
    let mut worst_value = 0.0f64;
    let mut worst_x = 0.0f64;
    let mut ok = true;
    for trial in 0..50 {
        let mut rng = trial_rng(77, trial);
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=8);
        let qp = random_qp(&mut rng, n, m);
        let Some((value, x_ref)) = brute_force_qp(&qp) else {
            ok = false;
            continue;
        };
        match solve_qp(&qp, &settings).and_then(|s| s.into_solved()) {
            Ok(sol) => {
                worst_value = worst_value.max((qp.objective(&sol.x) - value).abs());
                worst_x = worst_x.max(dist(&sol.x, &x_ref));
            }
            Err(_) => ok = false,
        }
    }
    let mut worst_kkt = 0.0f64;
    for trial in 0..100 {
        let mut rng = trial_rng(78, trial);
        let n = rng.random_range(7..=20);
        let m = rng.random_range(1..=30);
        let qp = random_qp(&mut rng, n, m);
        match solve_qp(&qp, &settings).and_then(|s| s.into_solved()) {
            Ok(sol) => worst_kkt = worst_kkt.max(kkt_residual(&qp, &sol.x, &sol.y).max()),
            Err(_) => ok = false,
        }
    }
    verdict(
        ok && worst_value <= 1e-7 && worst_x <= 1e-6 && worst_kkt <= 1e-7,
        format!("value error {worst_value:.2e}, minimizer error {worst_x:.2e}, KKT residual {worst_kkt:.2e}"),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = trial_rng(88, 0);
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let z = normal_vec(&mut rng, n);
        let w: Vec<f64> = normal_vec(&mut rng, n).iter().map(|v| 3.0 * v).collect();
        let lb: Vec<f64> = (0..n).map(|_| -rng.random::<f64>()).collect();
        let ub: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let t = rng.random_range(0.01..3.0);
        let d = dist(&z, &w);

        let pb = project_box(&z, &lb, &ub);
        check(
            "box idempotence",
            dist(&project_box(&pb, &lb, &ub), &pb) <= 1e-12,
        );
        check(
            "box lipschitz",
            dist(&pb, &project_box(&w, &lb, &ub)) <= d + 1e-12,
        );
        let ps = project_simplex(&z);
        check(
            "simplex idempotence",
            dist(&project_simplex(&ps), &ps) <= 1e-12,
        );
        check(
            "simplex lipschitz",
            dist(&ps, &project_simplex(&w)) <= d + 1e-12,
        );
        let pu = project_sphere(&z);
        check(
            "sphere idempotence",
            dist(&project_sphere(&pu), &pu) <= 1e-12,
        );
        let st = soft_threshold(&z, t);
        check(
            "soft threshold lipschitz",
            dist(&st, &soft_threshold(&w, t)) <= d + 1e-12,
        );
        let optimal = z.iter().zip(&st).all(|(zi, xi)| {
            let g = (zi - xi) / t;
            if *xi != 0.0 {
                (g - xi.signum()).abs() <= 1e-12
            } else {
                g.abs() <= 1.0 + 1e-12
            }
        });
        check("soft threshold optimality", optimal);
    }

    // Prox decrease on the experiment subproblems: the prox value beats every
    // feasible comparison point.
    let decrease = |prog: &dyn ProxOracle, t: f64, z: &[f64], p: &[f64], ys: &[Vec<f64>]| {
        let lhs = prog.value(p) + dist(p, z).powi(2) / (2.0 * t);
        lhs.is_finite()
            && ys
                .iter()
                .all(|y| lhs <= prog.value(y) + dist(y, z).powi(2) / (2.0 * t) + 1e-9)
    };

    let ep1 = ep1_program();
    for k in 0..20 {
        let z = [rng.random_range(-2.0..2.0)];
        let t = 0.25 + 0.1 * k as f64;
        let p = ep1
            .nonsmooth
            .prox(t, &z, &mut ProxCache::new())
            .expect("box prox");
        let ys: Vec<Vec<f64>> = (0..=20).map(|j| vec![-1.0 + 0.1 * j as f64]).collect();
        check(
            "ep1 prox decrease",
            decrease(&*ep1.nonsmooth, t, &z, &p, &ys),
        );
    }

    for trial in 0..3 {
        let inst = gen_ep2(32, 256, 6, 10.0, 2024, trial).expect("ep2 instance");
        let prog = ep2_program(&inst).expect("ep2 program");
        let x0 = ep2_initial_point(&inst, &Default::default()).expect("ep2 start");
        let mut ys = vec![inst.x_ground.clone(), x0.clone()];
        ys.push(
            x0.iter()
                .zip(&inst.x_ground)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        );
        let mut cache = ProxCache::new();
        let mut pair: Vec<Vec<f64>> = Vec::new();
        let mut anchors: Vec<Vec<f64>> = Vec::new();
        for t in [0.05, 0.5, 3.0] {
            let z: Vec<f64> = x0
                .iter()
                .map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let p = prog.nonsmooth.prox(t, &z, &mut cache).expect("ep2 prox");
            check("ep2 prox feasible", prog.nonsmooth.is_feasible(&p));
            check(
                "ep2 prox decrease",
                decrease(&*prog.nonsmooth, t, &z, &p, &ys),
            );
            if t == 0.5 {
                pair.push(p);
                anchors.push(z);
            }
        }
        let z2: Vec<f64> = anchors[0]
            .iter()
            .map(|v| v + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p2 = prog.nonsmooth.prox(0.5, &z2, &mut cache).expect("ep2 prox");
        check(
            "ep2 prox lipschitz",
            dist(&pair[0], &p2) <= dist(&anchors[0], &z2) + 1e-7,
        );
    }

    for trial in 0..3 {
        let inst = gen_sharpe(10, 3, 3, 5, trial).expect("sharpe instance");
        let prog = sharpe_program(&inst).expect("sharpe program");
        let ys: Vec<Vec<f64>> = (0..30)
            .map(|_| project_simplex(&normal_vec(&mut rng, 10)))
            .collect();
        let mut cache = ProxCache::new();
        for t in [0.1, 1.0] {
            let z = normal_vec(&mut rng, 10);
            let w: Vec<f64> = z
                .iter()
                .map(|v| v + 0.2 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let p = prog.nonsmooth.prox(t, &z, &mut cache).expect("sharpe prox");
            let pw = prog.nonsmooth.prox(t, &w, &mut cache).expect("sharpe prox");
            check(
                "sharpe prox decrease",
                decrease(&*prog.nonsmooth, t, &z, &p, &ys),
            );
            check(
                "sharpe prox lipschitz",
                dist(&p, &pw) <= dist(&z, &w) + 1e-7,
            );
        }
    }

    for trial in 0..3 {
        let inst = gen_rayleigh(20, 7, trial).expect("rayleigh instance");
        let ys: Vec<Vec<f64>> = (0..30)
            .map(|_| project_sphere(&normal_vec(&mut rng, 20)))
            .collect();
        let z: Vec<f64> = inst
            .x0
            .iter()
            .map(|v| 2.0 * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p = SphereIndicator
            .prox(1.0, &z, &mut ProxCache::new())
            .expect("sphere prox");
        check(
            "sphere prox decrease",
            decrease(&SphereIndicator, 1.0, &z, &p, &ys),
        );
    }

    failures.sort();
    failures.dedup();
    verdict(failures.is_empty(), format!("failures: {failures:?}"))
}

fn criterion_9() -> Verdict {
    let trials = run_sharpe(&Experiment::Sharpe.defaults());
    let Some(records) = completed(&trials) else {
        return verdict(false, "a trial failed");
    };
    let tol = Experiment::Sharpe.defaults().tol;
    let converged = records.iter().filter(|r| r.status == "converged").count();
    let merit = records.iter().filter(|r| r.merit_decrease_ok).count();
    let worst = records
        .iter()
        .map(|r| r.max_strong_residual)
        .fold(0.0, f64::max);
    let nonempty = records.iter().all(|r| !r.strong_residuals.is_empty());
    verdict(
        records.len() == 5 && converged == 5 && merit == 5 && nonempty && worst <= 10.0 * tol,
        format!("converged {converged}/5, merit nonincreasing {merit}/5, max strong residual {worst:.2e}"),
    )
}

fn run_cli(args: &[&str], out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_fracprox"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .is_ok_and(|s| s.success())
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().expect("temp dir");
    let commands: [&[&str]; 5] = [
        &["ep1"],
        &["ep1", "--algorithm", "enhanced", "--x0", "0"],
        &["ep2", "--seed", "2024"],
        &["rayleigh", "--seed", "7"],
        &["sharpe", "--seed", "5"],
    ];
    let mut mismatches = Vec::new();
    for (k, args) in commands.iter().enumerate() {
        let a = dir.path().join(format!("{k}a"));
        let b = dir.path().join(format!("{k}b"));
        if !run_cli(args, &a) || !run_cli(args, &b) {
            mismatches.push(format!("{} failed to run", args.join(" ")));
            continue;
        }
        for file in ["trials.jsonl", "summary.json"] {
            let same = match (std::fs::read(a.join(file)), std::fs::read(b.join(file))) {
                (Ok(x), Ok(y)) => x == y,
                _ => false,
            };
            if !same {
                mismatches.push(format!("{} {file}", args.join(" ")));
            }
        }
    }
    let same_instance = gen_ep2(32, 256, 6, 10.0, 9, 3).ok()
        == gen_ep2(32, 256, 6, 10.0, 9, 3).ok()
        && gen_sharpe(10, 3, 3, 9, 3).ok() == gen_sharpe(10, 3, 3, 9, 3).ok()
        && gen_rayleigh(20, 9, 3).ok() == gen_rayleigh(20, 9, 3).ok();
    verdict(
        mismatches.is_empty() && same_instance,
        format!(
            "{} commands run twice, mismatches: {mismatches:?}",
            commands.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("EP1 stationary points", criterion_1),
        ("EP1 escape with the enhanced solver", criterion_2),
        ("EP1 linear rate", criterion_3),
        ("sufficient decrease on every run", criterion_4),
        ("EP2 desk-scale recovery", criterion_5),
        ("Rayleigh quotient", criterion_6),
        ("QP oracle equivalence", criterion_7),
        ("prox properties", criterion_8),
        ("Sharpe strong stationarity", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status} {name}: {} [{:.2}s]",
            k + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
