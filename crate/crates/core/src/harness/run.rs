//! `run` and `benchmark` orchestration and their result files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use crate::design::{run_state, RunRecord, Strategy};

use super::benchmarks::Reference;
use super::config::{ResolvedConfig, RunConfig};
use super::{format_number, HarnessError};

pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BENCHMARK_FILE: &str = "benchmark.csv";
pub const BENCHMARK_SUMMARY_FILE: &str = "benchmark_summary.csv";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: Vec<RunRecord>,
    pub reference: Reference,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn final_record(&self) -> &RunRecord {
        self.history.last().expect("history holds at least n0 records")
    }

    pub fn final_abs_err(&self) -> f64 {
        (self.final_record().mu1 - self.reference.value()).abs()
    }
}

fn load(path: &Path) -> Result<ResolvedConfig, HarnessError> {
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::load(path)?.resolve(base)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Output(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| HarnessError::Output(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Column names for the input coordinates.
pub fn x_columns(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".to_string()]
    } else {
        (1..=dim).map(|j| format!("x{j}")).collect()
    }
}

/// `iter,x...,y,mu1,sigma1,acq,abs_err`, one row per record.
pub fn history_csv(history: &[RunRecord], dim: usize, q: f64) -> String {
    let mut out = String::new();
    let header: Vec<String> = std::iter::once("iter".to_string())
        .chain(x_columns(dim))
        .chain(["y", "mu1", "sigma1", "acq", "abs_err"].map(String::from))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in history {
        let mut fields = vec![r.iteration.to_string()];
        fields.extend(r.chosen_x.iter().map(|v| format_number(*v)));
        for v in [r.observed_y, r.mu1, r.sigma1, r.acquisition_at_chosen, (r.mu1 - q).abs()] {
            fields.push(format_number(v));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Runs one design and writes `history.csv` and `summary.json`.
pub fn execute_run(cfg: &ResolvedConfig) -> Result<RunOutcome, HarnessError> {
    let raw = &cfg.raw;
    let strategy = raw.strategy.unwrap_or(Strategy::Acquisition);
    let problem = cfg.problem;
    let reference = problem.reference(&cfg.mixture);
    let state = run_state(&raw.design(strategy, raw.seed), &cfg.mixture, |x| problem.eval(x))?;
    let q = reference.value();
    let dim = cfg.mixture.dim();
    let hyper = state.hyper().clone();
    let history = state.into_history();
    write_file(&cfg.output, HISTORY_FILE, &history_csv(&history, dim, q))?;

    let last = history.last().expect("history holds at least n0 records");
    let abs_err = (last.mu1 - q).abs();
    let summary = json!({
        "benchmark": problem.name,
        "strategy": strategy,
        "seed": raw.seed,
        "dimension": dim,
        "samples": history.len(),
        "budget": raw.budget,
        "stopped_early": history.len() < raw.budget,
        "mu1": last.mu1,
        "sigma1": last.sigma1,
        "reference": reference,
        "abs_err": abs_err,
        "within_3_sigma": abs_err <= 3.0 * last.sigma1,
        "hyperparameters": if strategy == Strategy::MonteCarlo { serde_json::Value::Null } else { json!(hyper) },
        "mixture": cfg.mixture,
    });
    write_file(&cfg.output, SUMMARY_FILE, &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"))?;
    Ok(RunOutcome { history, reference, output_dir: cfg.output.clone() })
}

pub fn run_file(path: &Path) -> Result<RunOutcome, HarnessError> {
    execute_run(&load(path)?)
}

/// One `(strategy, seed)` trajectory in a benchmark.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub strategy: Strategy,
    pub seed: u64,
    pub history: Vec<RunRecord>,
}

/// Per-iteration quartiles of `|μ₁ − q|` across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSummary {
    pub strategy: Strategy,
    pub iteration: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    /// Sorted by strategy name, then seed.
    pub trajectories: Vec<Trajectory>,
    pub reference: Reference,
    pub summary: Vec<IterationSummary>,
    pub output_dir: PathBuf,
}

impl BenchmarkOutcome {
    pub fn final_errors(&self, strategy: Strategy) -> Vec<f64> {
        let q = self.reference.value();
        self.trajectories
            .iter()
            .filter(|t| t.strategy == strategy)
            .map(|t| (t.history.last().expect("non-empty").mu1 - q).abs())
            .collect()
    }

    pub fn final_median(&self, strategy: Strategy) -> f64 {
        quantile(&mut self.final_errors(strategy), 0.5)
    }

    /// Fraction of seeds whose final estimate lies within 3σ₁ of `q`.
    pub fn calibration(&self, strategy: Strategy) -> f64 {
        let q = self.reference.value();
        let runs: Vec<_> = self.trajectories.iter().filter(|t| t.strategy == strategy).collect();
        let hits = runs
            .iter()
            .filter(|t| {
                let r = t.history.last().expect("non-empty");
                (r.mu1 - q).abs() <= 3.0 * r.sigma1
            })
            .count();
        hits as f64 / runs.len().max(1) as f64
    }
}

/// Linear-interpolation quantile; sorts `values` in place.
pub fn quantile(values: &mut [f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let h = p * (values.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Runs every strategy over `seeds` seeds and writes the long-format
/// table, the per-iteration summary and `summary.json`.
pub fn execute_benchmark(cfg: &ResolvedConfig) -> Result<BenchmarkOutcome, HarnessError> {
    let raw = &cfg.raw;
    let problem = cfg.problem;
    let reference = problem.reference(&cfg.mixture);
    let q = reference.value();

    let mut strategies = raw.strategies.clone();
    strategies.sort_by_key(|s| s.name());
    strategies.dedup();
    let jobs: Vec<(Strategy, u64)> = strategies
        .iter()
        .flat_map(|s| (0..raw.seeds as u64).map(move |i| (*s, raw.seed.wrapping_add(i))))
        .collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<crate::error::Result<Vec<RunRecord>>>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(strategy, seed)) = jobs.get(i) else { break };
                let out = run_state(&raw.design(strategy, seed), &cfg.mixture, |x| problem.eval(x)).map(|s| s.into_history());
                results.lock().expect("no poisoned workers")[i] = Some(out);
            });
        }
    });
    let mut trajectories = Vec::with_capacity(jobs.len());
    for ((strategy, seed), res) in jobs.iter().zip(results.into_inner().expect("no poisoned workers")) {
        let history = res.expect("every job ran")?;
        trajectories.push(Trajectory { strategy: *strategy, seed: *seed, history });
    }

    let mut long = String::from("strategy,iter,seed,abs_err\n");
    for t in &trajectories {
        for r in &t.history {
            let _ = writeln!(long, "{},{},{},{}", t.strategy.name(), r.iteration, t.seed, format_number((r.mu1 - q).abs()));
        }
    }

    let mut summary = Vec::new();
    for s in &strategies {
        let runs: Vec<&Trajectory> = trajectories.iter().filter(|t| t.strategy == *s).collect();
        let longest = runs.iter().map(|t| t.history.len()).max().unwrap_or(0);
        for it in 0..longest {
            let mut errs: Vec<f64> = runs.iter().filter_map(|t| t.history.get(it)).map(|r| (r.mu1 - q).abs()).collect();
            summary.push(IterationSummary {
                strategy: *s,
                iteration: it + 1,
                median: quantile(&mut errs, 0.5),
                q1: quantile(&mut errs, 0.25),
                q3: quantile(&mut errs, 0.75),
                runs: errs.len(),
            });
        }
    }
    let mut table = String::from("strategy,iter,median_abs_err,q1_abs_err,q3_abs_err,runs\n");
    for r in &summary {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            r.strategy.name(),
            r.iteration,
            format_number(r.median),
            format_number(r.q1),
            format_number(r.q3),
            r.runs
        );
    }

    let outcome = BenchmarkOutcome { trajectories, reference, summary, output_dir: cfg.output.clone() };
    let per_strategy: serde_json::Map<String, serde_json::Value> = strategies
        .iter()
        .map(|s| {
            let mut errs = outcome.final_errors(*s);
            (
                s.name().to_string(),
                json!({
                    "final_median_abs_err": quantile(&mut errs, 0.5),
                    "final_q1_abs_err": quantile(&mut errs, 0.25),
                    "final_q3_abs_err": quantile(&mut errs, 0.75),
                    "calibrated_fraction": outcome.calibration(*s),
                }),
            )
        })
        .collect();
    let doc = json!({
        "benchmark": problem.name,
        "dimension": cfg.mixture.dim(),
        "budget": raw.budget,
        "n0": raw.n0,
        "seeds": (0..raw.seeds as u64).map(|i| raw.seed.wrapping_add(i)).collect::<Vec<_>>(),
        "reference": reference,
        "strategies": per_strategy,
    });
    write_file(&cfg.output, BENCHMARK_FILE, &long)?;
    write_file(&cfg.output, BENCHMARK_SUMMARY_FILE, &table)?;
    write_file(&cfg.output, SUMMARY_FILE, &(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"))?;
    Ok(outcome)
}

pub fn run_benchmark_file(path: &Path) -> Result<BenchmarkOutcome, HarnessError> {
    execute_benchmark(&load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&mut v, 0.5), 2.5);
        assert_eq!(quantile(&mut v, 0.0), 1.0);
        assert_eq!(quantile(&mut v, 1.0), 4.0);
        assert_eq!(quantile(&mut v, 0.25), 1.75);
    }

    #[test]
    fn columns() {
        assert_eq!(x_columns(1), vec!["x"]);
        assert_eq!(x_columns(2), vec!["x1", "x2"]);
    }
}
