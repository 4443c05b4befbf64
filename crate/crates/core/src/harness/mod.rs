//! Replicated experiments over an ε-grid, with CSV and JSON artifacts.

mod concentration;
mod config;
mod stats;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{default_eps_g, verify_trace, AnalysisConstants};
use crate::error::{Error, Result};
use crate::frank_wolfe::{initial_vertex, run, Algorithm, RunSettings, RunTrace};
use crate::oracle::{plan_sample_size, plan_warnings, NoiseModel, SampleMode, SamplePlan};
use crate::problem::Problem;

pub use concentration::{
    concentration_experiment, write_concentration, ConcentrationCell, ConcentrationReport,
    ExponentialFit,
};
pub use config::{parse_json, read_json, ConcentrationConfig, ExperimentConfig};
pub use stats::{
    binomial_std_err, fit_line, fit_loglog_slope, mean, quantile_sorted, std_dev, LineFit,
};

/// Random stream for replication `r` at grid index `eps_index`.
pub fn replication_rng(master_seed: u64, eps_index: usize, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((eps_index as u64) << 32) | r as u64);
    rng
}

/// Fills in every planner constant the problem determines, keeping any
/// value the caller set explicitly. `epsilon` always follows the grid.
pub fn resolve_plan(
    plan: &SamplePlan,
    problem: &Problem,
    consts: &AnalysisConstants,
    noise: &NoiseModel,
) -> Result<SamplePlan> {
    let d = problem.dim();
    let mut out = plan.clone().with("epsilon", consts.epsilon);
    if !out.params.contains_key("p_g") && !out.params.contains_key("one_minus_p_g") {
        let q = match plan.mode {
            SampleMode::BoundedVarianceAway | SampleMode::SubgaussianAway => {
                consts.one_minus_pg_away
            }
            _ => consts.one_minus_pg_standard,
        };
        out = out.with("one_minus_p_g", q);
    }
    out = out
        .with_default("V_g", noise.second_moment(d))
        .with_default("D", consts.diameter)
        .with_default("N", consts.n_vertices as f64)
        .with_default("omega", consts.omega)
        .with_default("eps_g", consts.eps_g)
        .with_default("mu", consts.mu)
        .with_default("M", consts.m_bound)
        .with_default("beta1", consts.beta1)
        .with_default("beta2", consts.beta2)
        .with_default("d", d as f64);
    let subgaussian = matches!(
        plan.mode,
        SampleMode::SubgaussianStandard | SampleMode::SubgaussianAway
    );
    if subgaussian && !out.params.contains_key("c") {
        // Coordinatewise Hoeffding/Gaussian tails with a union bound give
        // P(‖ḡ − ∇f‖ ≥ s) ≤ 2d·exp(−n s²/(2ρ²)).
        match noise.rho(d) {
            Some(rho) if rho > 0.0 => out = out.with("c", 1.0 / (2.0 * rho * rho)),
            _ => return Err(Error::MissingParam("c".into())),
        }
    }
    Ok(out)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub epsilon: f64,
    pub replication: usize,
    /// −1 when the run hit `max_iter`.
    #[serde(rename = "T_eps")]
    pub t_eps: i64,
    pub total_samples: u64,
    pub good_event_rate: f64,
    pub final_gap: f64,
    pub wall_ms: u64,
}

/// Trace file layout read by `verify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDocument {
    pub kind: Algorithm,
    pub constants: AnalysisConstants,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub runs: usize,
    pub censored: usize,
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    #[serde(rename = "std_T")]
    pub std_t: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub mean_total_samples: f64,
    pub good_event_rate: f64,
    /// `p_g − 3·stderr` when a planner formula sets the sample size.
    pub good_event_floor: Option<f64>,
    #[serde(rename = "bound_mean_T")]
    pub bound_mean_t: f64,
    /// Mean of `exp((δ/2)·T_ε)` over uncensored runs.
    pub emp_mgf: f64,
    pub n_per_iter: u64,
    /// Pooled mean of `Φ_{k+1}/Φ_k` over good pre-stopping iterations.
    pub lyapunov_ratio_mean: Option<f64>,
    pub lyapunov_ratio_bound: f64,
    /// Per-iteration decrease checks that failed on good iterations.
    pub inequality_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub per_epsilon: Vec<EpsilonSummary>,
    /// Fitted `d log mean_T / d log(1/ε)`.
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    /// Fitted `d log n / d log(1/ε)`.
    pub sample_slope: Option<f64>,
    pub sample_r2: Option<f64>,
    /// Grid points whose `mean_T` exceeds `bound_mean_T`.
    pub bound_violations: usize,
    pub warnings: Vec<String>,
}

struct Outcome {
    row: RunRow,
    steps: usize,
    good_steps: usize,
    good_iterations: usize,
    ratio_sum: f64,
    violations: usize,
    trace: Option<RunTrace>,
}

/// Result of an experiment before anything is written.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<RunRow>,
    pub summary: Summary,
    pub constants: Vec<AnalysisConstants>,
    /// Filled only when `save_traces` is set; `(ε-index, r, trace)`.
    pub traces: Vec<(usize, usize, RunTrace)>,
}

/// Runs every `(ε, replication)` cell and aggregates, without touching disk.
pub fn execute(config: &ExperimentConfig, problem: &Problem) -> Result<ExperimentOutput> {
    config.validate()?;
    let eps_g = config
        .eps_g
        .unwrap_or_else(|| default_eps_g(problem.geometry.diameter));
    let alg = config.algorithm;
    let mut warnings = Vec::new();

    let mut consts = Vec::new();
    let mut plans = Vec::new();
    let mut sizes = Vec::new();
    for &eps in &config.epsilon_grid {
        let c = AnalysisConstants::for_problem(problem, eps, eps_g)?;
        let plan = resolve_plan(&config.sampling, problem, &c, &config.noise)?;
        sizes.push(plan_sample_size(&plan)?);
        warnings.extend(plan_warnings(&plan));
        consts.push(c);
        plans.push(plan);
    }

    let cells: Vec<(usize, usize)> = (0..config.epsilon_grid.len())
        .flat_map(|i| (0..config.replications).map(move |r| (i, r)))
        .collect();
    let one_cell = |&(i, r): &(usize, usize)| -> Result<Outcome> {
        let settings = RunSettings {
            algorithm: alg,
            epsilon: config.epsilon_grid[i],
            eps_g: Some(eps_g),
            max_iter: config.max_iter,
            n_samples: sizes[i],
        };
        let mut rng = replication_rng(config.master_seed, i, r);
        let start = Instant::now();
        let trace = run(problem, &settings, &config.noise, &mut rng)?;
        let wall_ms = if config.record_wall_time {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        let report = verify_trace(&trace, &consts[i], alg)?;
        let steps = trace
            .records
            .iter()
            .filter(|r| r.step_type.is_some())
            .count();
        let good_steps = trace
            .records
            .iter()
            .filter(|r| r.step_type.is_some() && r.good_event)
            .count();
        Ok(Outcome {
            row: RunRow {
                epsilon: settings.epsilon,
                replication: r,
                t_eps: trace.t_eps.map_or(-1, |t| t as i64),
                total_samples: trace.total_samples,
                good_event_rate: trace.good_event_rate(),
                final_gap: trace.final_gap,
                wall_ms,
            },
            steps,
            good_steps,
            good_iterations: report.good_iterations,
            ratio_sum: report.lyapunov_ratio_mean.unwrap_or(0.0) * report.good_iterations as f64,
            violations: report.violations(),
            trace: config.save_traces.then_some(trace),
        })
    };

    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let outcomes: Vec<Outcome> =
        pool.install(|| cells.par_iter().map(one_cell).collect::<Result<_>>())?;

    let (x0, _) = initial_vertex(&problem.polytope)?;
    let gap0 = problem.gap(&problem.polytope.vertices()[x0])?;
    let mut per_epsilon = Vec::new();
    for (i, &eps) in config.epsilon_grid.iter().enumerate() {
        let reps = config.replications;
        let group = &outcomes[i * reps..(i + 1) * reps];
        let mut ts: Vec<f64> = group
            .iter()
            .filter(|o| o.row.t_eps >= 0)
            .map(|o| o.row.t_eps as f64)
            .collect();
        ts.sort_by(f64::total_cmp);
        let steps: usize = group.iter().map(|o| o.steps).sum();
        let good: usize = group.iter().map(|o| o.good_steps).sum();
        let good_iters: usize = group.iter().map(|o| o.good_iterations).sum();
        let rate = if steps == 0 {
            1.0
        } else {
            good as f64 / steps as f64
        };
        let floor = match plans[i].mode {
            SampleMode::Exact | SampleMode::Fixed => None,
            _ => {
                let q = plans[i]
                    .get("one_minus_p_g")
                    .or_else(|_| plans[i].get("p_g").map(|p| 1.0 - p))?;
                Some(1.0 - q - 3.0 * binomial_std_err(1.0 - q, steps.max(1)))
            }
        };
        if let Some(f) = floor {
            if rate < f {
                warnings.push(format!(
                    "epsilon {eps}: good_event_rate {rate} below floor {f}"
                ));
            }
        }
        let half_delta = consts[i].delta(alg) / 2.0;
        let censored = group.len() - ts.len();
        if censored > 0 {
            warnings.push(format!("epsilon {eps}: {censored} runs hit max_iter"));
        }
        per_epsilon.push(EpsilonSummary {
            epsilon: eps,
            runs: group.len(),
            censored,
            mean_t: mean(&ts),
            std_t: std_dev(&ts),
            q50: quantile_sorted(&ts, 0.5),
            q90: quantile_sorted(&ts, 0.9),
            q99: quantile_sorted(&ts, 0.99),
            mean_total_samples: mean(
                &group
                    .iter()
                    .map(|o| o.row.total_samples as f64)
                    .collect::<Vec<_>>(),
            ),
            good_event_rate: rate,
            good_event_floor: floor,
            bound_mean_t: consts[i].mean_stopping_time_bound(alg, gap0, 1),
            emp_mgf: mean(
                &ts.iter()
                    .map(|t| (half_delta * t).exp())
                    .collect::<Vec<_>>(),
            ),
            n_per_iter: sizes[i],
            lyapunov_ratio_mean: (good_iters > 0)
                .then(|| group.iter().map(|o| o.ratio_sum).sum::<f64>() / good_iters as f64),
            lyapunov_ratio_bound: (-consts[i].delta(alg)).exp(),
            inequality_violations: group.iter().map(|o| o.violations).sum(),
        });
    }

    let bound_violations = per_epsilon
        .iter()
        .filter(|s| s.mean_t > s.bound_mean_t)
        .count();
    let (slope, r2) = scaling_fit(&per_epsilon, |s| s.mean_t, "mean_T", &mut warnings);
    let (sample_slope, sample_r2) = if sizes.iter().all(|&n| n > 0) {
        scaling_fit(
            &per_epsilon,
            |s| s.n_per_iter as f64,
            "n_per_iter",
            &mut warnings,
        )
    } else {
        (None, None)
    };

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::new();
    for (o, &(i, r)) in outcomes.into_iter().zip(&cells) {
        if let Some(t) = o.trace {
            traces.push((i, r, t));
        }
        rows.push(o.row);
    }
    Ok(ExperimentOutput {
        rows,
        summary: Summary {
            algorithm: alg,
            per_epsilon,
            slope,
            r2,
            sample_slope,
            sample_r2,
            bound_violations,
            warnings,
        },
        constants: consts,
        traces,
    })
}

fn scaling_fit(
    per_eps: &[EpsilonSummary],
    value: impl Fn(&EpsilonSummary) -> f64,
    what: &str,
    warnings: &mut Vec<String>,
) -> (Option<f64>, Option<f64>) {
    if per_eps.len() < 3 {
        return (None, None);
    }
    let pts: Vec<(f64, f64)> = per_eps
        .iter()
        .map(|s| (1.0 / s.epsilon, value(s)))
        .collect();
    match fit_loglog_slope(&pts) {
        Ok((s, r2)) => (Some(s), Some(r2)),
        Err(e) => {
            warnings.push(format!("no {what} slope: {e}"));
            (None, None)
        }
    }
}

/// Builds the problem, runs the experiment, and writes `runs.csv`,
/// `summary.json` and optionally `traces/` under `output_dir`. Nothing is
/// left behind if any step fails.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    let problem = config.problem.build()?;
    let out = execute(config, &problem)?;
    write_outputs(&config.output_dir, &out, config.algorithm)?;
    Ok(out.summary)
}

/// Builds the problem from `cfg`, runs the concentration grid, and writes
/// the table when `output_dir` is set.
pub fn run_concentration(cfg: &ConcentrationConfig) -> Result<ConcentrationReport> {
    let problem = cfg.problem.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let report = concentration_experiment(
        &problem.objective,
        &problem.polytope,
        &cfg.noise,
        &cfg.n_grid,
        &cfg.s_grid,
        cfg.trials,
        &mut rng,
    )?;
    if let Some(dir) = &cfg.output_dir {
        write_concentration(dir, &report)?;
    }
    Ok(report)
}

pub fn write_outputs(dir: &Path, out: &ExperimentOutput, alg: Algorithm) -> Result<()> {
    fs::create_dir_all(dir)?;
    let staging = dir.join(format!(".staging-{}", std::process::id()));
    let result = stage_outputs(&staging, out, alg).and_then(|names| {
        for name in names {
            let target = dir.join(&name);
            if target.is_dir() {
                fs::remove_dir_all(&target)?;
            }
            fs::rename(staging.join(&name), target)?;
        }
        Ok(())
    });
    let _ = fs::remove_dir_all(&staging);
    result
}

fn stage_outputs(staging: &Path, out: &ExperimentOutput, alg: Algorithm) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(staging)?;
    let mut names = vec![PathBuf::from("runs.csv"), PathBuf::from("summary.json")];
    let mut w = csv::Writer::from_path(staging.join("runs.csv"))?;
    for row in &out.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    fs::write(
        staging.join("summary.json"),
        serde_json::to_string_pretty(&out.summary)?,
    )?;
    if !out.traces.is_empty() {
        let tdir = staging.join("traces");
        fs::create_dir_all(&tdir)?;
        for (i, r, trace) in &out.traces {
            let doc = TraceDocument {
                kind: alg,
                constants: out.constants[*i],
                trace: trace.clone(),
            };
            fs::write(
                tdir.join(format!("eps{i}_rep{r}.json")),
                serde_json::to_string(&doc)?,
            )?;
        }
        names.push(PathBuf::from("traces"));
    }
    Ok(names)
}
