//! Aggregates and result files.
//!
//! A run directory holds `trials.jsonl` (one row per trial), `summary.json`
//! (settings and aggregates) and `timing.json`. Only `timing.json` depends on the
//! machine; the other two are reproducible byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::experiments::{
    Ep1Record, Ep2Record, RayleighRecord, RunSettings, SharpeRecord, Trial, EP1_MATCH_TOL,
};
use crate::trace::write_trace_file;

/// Error allowed on the ground truth for a trial to count as recovered.
pub const RECOVERY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// `None` for an empty sample.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        };
        Some(Stats {
            mean: v.iter().sum::<f64>() / k as f64,
            median,
            min: v[0],
            max: v[k - 1],
        })
    }
}

fn completed<R>(trials: &[Trial<R>]) -> Vec<&R> {
    trials
        .iter()
        .filter_map(|t| t.outcome.completed())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Ep1Summary {
    pub runs: usize,
    pub completed: usize,
    pub strong: usize,
    pub stationary: usize,
    pub merit_decrease_ok: usize,
}

pub fn summarize_ep1(trials: &[Trial<Ep1Record>]) -> Ep1Summary {
    let done = completed(trials);
    Ep1Summary {
        runs: trials.len(),
        completed: done.len(),
        strong: done.iter().filter(|r| r.strong).count(),
        stationary: done.iter().filter(|r| r.distance <= EP1_MATCH_TOL).count(),
        merit_decrease_ok: done.iter().filter(|r| r.merit_decrease_ok).count(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Ep2Summary {
    pub trials: usize,
    pub completed: usize,
    pub converged: usize,
    pub recovered: usize,
    pub objective_nonincreasing: usize,
    pub merit_decrease_ok: usize,
    pub sparsity_init: Option<Stats>,
    pub sparsity_final: Option<Stats>,
    pub err_ground_truth: Option<Stats>,
    pub objective_init: Option<Stats>,
    pub objective_final: Option<Stats>,
    pub iterations: Option<Stats>,
}

pub fn summarize_ep2(trials: &[Trial<Ep2Record>]) -> Ep2Summary {
    let done = completed(trials);
    Ep2Summary {
        trials: trials.len(),
        completed: done.len(),
        converged: done.iter().filter(|r| r.status == "converged").count(),
        recovered: done
            .iter()
            .filter(|r| r.support_recovered && r.err_ground_truth <= RECOVERY_TOL)
            .count(),
        objective_nonincreasing: done
            .iter()
            .filter(|r| r.objective_final <= r.objective_init + 1e-9)
            .count(),
        merit_decrease_ok: done.iter().filter(|r| r.merit_decrease_ok).count(),
        sparsity_init: Stats::of(done.iter().map(|r| r.sparsity_init as f64)),
        sparsity_final: Stats::of(done.iter().map(|r| r.sparsity_final as f64)),
        err_ground_truth: Stats::of(done.iter().map(|r| r.err_ground_truth)),
        objective_init: Stats::of(done.iter().map(|r| r.objective_init)),
        objective_final: Stats::of(done.iter().map(|r| r.objective_final)),
        iterations: Stats::of(done.iter().map(|r| r.iterations as f64)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RayleighSummary {
    pub trials: usize,
    pub completed: usize,
    pub converged: usize,
    pub merit_decrease_ok: usize,
    pub rayleigh_residual: Option<Stats>,
    pub eigen_gap: Option<Stats>,
    pub rate_rho: Option<Stats>,
    pub rate_r_squared: Option<Stats>,
    pub iterations: Option<Stats>,
}

pub fn summarize_rayleigh(trials: &[Trial<RayleighRecord>]) -> RayleighSummary {
    let done = completed(trials);
    RayleighSummary {
        trials: trials.len(),
        completed: done.len(),
        converged: done.iter().filter(|r| r.status == "converged").count(),
        merit_decrease_ok: done.iter().filter(|r| r.merit_decrease_ok).count(),
        rayleigh_residual: Stats::of(done.iter().map(|r| r.rayleigh_residual)),
        eigen_gap: Stats::of(done.iter().map(|r| r.eigen_gap)),
        rate_rho: Stats::of(done.iter().filter_map(|r| r.rate.map(|f| f.rho))),
        rate_r_squared: Stats::of(done.iter().filter_map(|r| r.rate.map(|f| f.r_squared))),
        iterations: Stats::of(done.iter().map(|r| r.iterations as f64)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpeSummary {
    pub trials: usize,
    pub completed: usize,
    pub converged: usize,
    pub merit_decrease_ok: usize,
    pub max_strong_residual: Option<Stats>,
    pub objective_final: Option<Stats>,
    pub iterations: Option<Stats>,
}

pub fn summarize_sharpe(trials: &[Trial<SharpeRecord>]) -> SharpeSummary {
    let done = completed(trials);
    SharpeSummary {
        trials: trials.len(),
        completed: done.len(),
        converged: done.iter().filter(|r| r.status == "converged").count(),
        merit_decrease_ok: done.iter().filter(|r| r.merit_decrease_ok).count(),
        max_strong_residual: Stats::of(done.iter().map(|r| r.max_strong_residual)),
        objective_final: Stats::of(done.iter().map(|r| r.objective_final)),
        iterations: Stats::of(done.iter().map(|r| r.iterations as f64)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryFile<'a, S> {
    pub experiment: &'a str,
    pub settings: &'a RunSettings,
    pub summary: S,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingFile<'a> {
    pub experiment: &'a str,
    pub cpu_seconds: Vec<f64>,
    pub total_cpu_seconds: f64,
    pub stats: Option<Stats>,
}

pub fn timing<'a, R>(experiment: &'a str, trials: &[Trial<R>]) -> TimingFile<'a> {
    let cpu_seconds: Vec<f64> = trials.iter().map(|t| t.cpu_seconds).collect();
    TimingFile {
        experiment,
        total_cpu_seconds: cpu_seconds.iter().sum(),
        stats: Stats::of(cpu_seconds.iter().copied()),
        cpu_seconds,
    }
}

pub fn trials_jsonl<R: Serialize + Clone>(trials: &[Trial<R>]) -> serde_json::Result<String> {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(&t.row())?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `trials.jsonl`, `summary.json` and `timing.json` into `dir`.
pub fn write_run<R: Serialize + Clone, S: Serialize>(
    dir: &Path,
    experiment: &str,
    settings: &RunSettings,
    trials: &[Trial<R>],
    summary: S,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.jsonl"), trials_jsonl(trials)?)?;
    let summary = SummaryFile {
        experiment,
        settings,
        summary,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    let mut f = fs::File::create(dir.join("timing.json"))?;
    serde_json::to_writer_pretty(&mut f, &timing(experiment, trials))?;
    writeln!(f)?;
    Ok(())
}

/// Writes one `trial_NNN.csv` per trial that kept its trace.
pub fn write_traces<R>(dir: &Path, trials: &[Trial<R>]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for t in trials.iter().filter(|t| !t.trace.is_empty()) {
        write_trace_file(
            &dir.join(format!("trial_{:03}.csv", t.trial)),
            &t.trace,
            t.enhanced,
        )?;
    }
    Ok(())
}
