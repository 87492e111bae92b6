//! Experiment runners: repeated enforcement sessions over parameter grids,
//! the check-cap (conservative release) sweep, and the fast-vs-naive scaling
//! benchmark, with CSV/JSON report writers.
//!
//! Repetitions fan out across worker threads; per-run seeds derive from the
//! master seed by a counter split that depends only on the run index, so the
//! same run index sees the same trajectory and mechanism draws under every
//! parameter combination, and aggregation is an ordered fold. Identical
//! config and seed give byte-identical CSVs (wall-clock fields live only in
//! the JSON report).

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{rngs::StdRng, Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ModelConfig};
use crate::enforce::{splitmix64, EnforceError, Mechanism, ReleaseSession, SessionConfig};
use crate::event::{Event, RegionMask};
use crate::grid::GridMap;
use crate::ingest::{ingest_trajectories, IngestError};
use crate::markov::{Distribution, MarkovModel, ModelError};
use crate::oracle::{bench_pair, BenchInstance, ENUM_GUARD};
use crate::twoworld::{AugmentedChain, EmissionColumn};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Enforce(#[from] EnforceError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Aggregates for one (ε, α, δ) parameter combination.
#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub repetitions: usize,
    pub horizon: usize,
    pub per_timestamp_mean_alpha: Vec<f64>,
    pub per_timestamp_std_alpha: Vec<f64>,
    pub per_timestamp_mean_dist_km: Vec<f64>,
    pub overall_mean_alpha: f64,
    pub mean_distance_km: f64,
    /// halvings_histogram[k] counts released observations that needed k
    /// halvings.
    pub halvings_histogram: Vec<u64>,
    pub conservative_releases: u64,
    pub forced_uniform_releases: u64,
    /// Wall-clock seconds for the whole cell; excluded from the CSVs.
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub epsilon: f64,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub run: usize,
    pub mean_alpha: f64,
    pub mean_dist_km: f64,
    pub halvings: u64,
    pub conservative: u64,
    pub forced_uniform: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellReport>,
    pub runs: Vec<RunSummary>,
}

/// Grid, model and events assembled from a config.
pub struct Workbench {
    pub grid: GridMap,
    pub model: MarkovModel,
    pub events: Vec<Event>,
    pub pi: Distribution,
}

impl Workbench {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let grid = config.grid.build()?;
        let m = grid.len();
        let model = match &config.model {
            ModelConfig::Synth { sigma } => {
                MarkovModel::synth_gaussian(grid.rows(), grid.cols(), *sigma)?
            }
            ModelConfig::Csv { path, resample_seconds, smoothing } => {
                let report = ingest_trajectories(Path::new(path), &grid, *resample_seconds)?;
                MarkovModel::train(&report.trajectories, m, *smoothing)?
            }
        };
        let events = config
            .events
            .iter()
            .map(|e| e.build(m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { grid, model, events, pi: Distribution::uniform(m) })
    }
}

fn combos(config: &ExperimentConfig) -> Vec<(f64, f64, Option<f64>)> {
    let epsilons = config.effective_epsilons();
    let mut out = Vec::new();
    match config.mechanism.mechanism.as_str() {
        "uniform" => {
            for &eps in &epsilons {
                out.push((eps, 0.0, None));
            }
        }
        "plm" => {
            for &eps in &epsilons {
                for &alpha in &config.effective_alphas() {
                    out.push((eps, alpha, None));
                }
            }
        }
        _ => {
            for &eps in &epsilons {
                for &alpha in &config.effective_alphas() {
                    for &delta in &config.effective_deltas() {
                        out.push((eps, alpha, Some(delta)));
                    }
                }
            }
        }
    }
    out
}

fn mechanism_for(config: &ExperimentConfig, alpha: f64, delta: Option<f64>) -> Mechanism {
    match config.mechanism.mechanism.as_str() {
        "uniform" => Mechanism::Uniform,
        "plm" => Mechanism::Plm { alpha, subsamples: config.mechanism.subsamples },
        _ => Mechanism::PlmDeltaSet {
            alpha,
            subsamples: config.mechanism.subsamples,
            delta: delta.unwrap_or(0.05),
        },
    }
}

struct RunOutcome {
    alphas: Vec<f64>,
    dists: Vec<f64>,
    halvings: u64,
    histogram: Vec<u64>,
    conservative: u64,
    forced: u64,
}

fn one_run(
    bench: &Workbench,
    config: &ExperimentConfig,
    mechanism: Mechanism,
    epsilon: f64,
    run: usize,
    budget_override: Option<Option<f64>>,
) -> Result<RunOutcome, ExperimentError> {
    let rep_base = splitmix64(config.run.seed ^ splitmix64(run as u64 + 1));
    let mut traj_rng = StdRng::seed_from_u64(splitmix64(rep_base ^ 0x7261_6a65));
    let trajectory = bench
        .model
        .sample_trajectory(&bench.pi, config.run.horizon, &mut traj_rng);

    let mut session_cfg = SessionConfig::new(epsilon, splitmix64(rep_base ^ 0x7365_7373));
    session_cfg.decay = config.run.decay;
    session_cfg.check_budget_ms = budget_override.unwrap_or(config.run.check_budget_ms);
    session_cfg.max_halvings = config.run.max_halvings;

    let mut session = ReleaseSession::new(
        bench.grid.clone(),
        bench.model.clone(),
        bench.events.clone(),
        config.run.horizon,
        mechanism,
        bench.pi.clone(),
        session_cfg,
    )?;
    let records = session.run(&trajectory)?;

    let mut histogram = vec![0u64; config.run.max_halvings as usize + 2];
    let mut halvings = 0u64;
    let mut forced = 0u64;
    for r in &records {
        halvings += u64::from(r.halvings);
        histogram[r.halvings as usize] += 1;
        forced += u64::from(r.forced_uniform);
    }
    Ok(RunOutcome {
        alphas: records.iter().map(|r| r.alpha_used).collect(),
        dists: records.iter().map(|r| r.distance_km).collect(),
        halvings,
        histogram,
        conservative: session.conservative_releases() as u64,
        forced,
    })
}

/// Run every parameter combination of the config for the configured number of
/// repetitions.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let bench = Workbench::from_config(config)?;
    let mut cells = Vec::new();
    let mut runs = Vec::new();
    for (epsilon, alpha, delta) in combos(config) {
        let mechanism = mechanism_for(config, alpha, delta);
        let started = Instant::now();
        let outcomes: Vec<RunOutcome> = (0..config.run.repetitions)
            .into_par_iter()
            .map(|run| one_run(&bench, config, mechanism, epsilon, run, None))
            .collect::<Result<_, _>>()?;
        let runtime_seconds = started.elapsed().as_secs_f64();

        let horizon = config.run.horizon;
        let n = outcomes.len() as f64;
        let mut mean_alpha = vec![0.0; horizon];
        let mut mean_dist = vec![0.0; horizon];
        for o in &outcomes {
            for t in 0..horizon {
                mean_alpha[t] += o.alphas[t] / n;
                mean_dist[t] += o.dists[t] / n;
            }
        }
        let mut std_alpha = vec![0.0; horizon];
        for o in &outcomes {
            for t in 0..horizon {
                std_alpha[t] += (o.alphas[t] - mean_alpha[t]).powi(2) / n;
            }
        }
        std_alpha.iter_mut().for_each(|v| *v = v.sqrt());

        let mut histogram = vec![0u64; config.run.max_halvings as usize + 2];
        let mut conservative = 0u64;
        let mut forced = 0u64;
        for o in &outcomes {
            for (h, c) in histogram.iter_mut().zip(&o.histogram) {
                *h += c;
            }
            conservative += o.conservative;
            forced += o.forced;
        }
        while histogram.len() > 1 && *histogram.last().unwrap() == 0 {
            histogram.pop();
        }

        for (run, o) in outcomes.iter().enumerate() {
            runs.push(RunSummary {
                epsilon,
                alpha,
                delta,
                run,
                mean_alpha: o.alphas.iter().sum::<f64>() / horizon as f64,
                mean_dist_km: o.dists.iter().sum::<f64>() / horizon as f64,
                halvings: o.halvings,
                conservative: o.conservative,
                forced_uniform: o.forced,
            });
        }

        cells.push(CellReport {
            epsilon,
            alpha,
            delta,
            repetitions: config.run.repetitions,
            horizon,
            overall_mean_alpha: mean_alpha.iter().sum::<f64>() / horizon as f64,
            mean_distance_km: mean_dist.iter().sum::<f64>() / horizon as f64,
            per_timestamp_mean_alpha: mean_alpha,
            per_timestamp_std_alpha: std_alpha,
            per_timestamp_mean_dist_km: mean_dist,
            halvings_histogram: histogram,
            conservative_releases: conservative,
            forced_uniform_releases: forced,
            runtime_seconds,
        });
    }
    Ok(ExperimentReport { cells, runs })
}

/// One row of the check-cap sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    /// None means the cap is disabled.
    pub threshold_ms: Option<f64>,
    pub mean_runtime_seconds: f64,
    pub conservative_releases: u64,
    pub mean_alpha: f64,
    pub mean_dist_km: f64,
}

/// Re-run the first parameter combination under each certification cap, with
/// identical seeds, reporting the conservative-release trade-off.
pub fn run_threshold_sweep(
    config: &ExperimentConfig,
    thresholds: &[Option<f64>],
) -> Result<Vec<ThresholdRow>, ExperimentError> {
    config.validate()?;
    let bench = Workbench::from_config(config)?;
    let (epsilon, alpha, delta) = combos(config)[0];
    let mechanism = mechanism_for(config, alpha, delta);
    let mut rows = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let started = Instant::now();
        let outcomes: Vec<RunOutcome> = (0..config.run.repetitions)
            .into_par_iter()
            .map(|run| one_run(&bench, config, mechanism, epsilon, run, Some(threshold)))
            .collect::<Result<_, _>>()?;
        let runtime = started.elapsed().as_secs_f64();
        let n = outcomes.len() as f64;
        rows.push(ThresholdRow {
            threshold_ms: threshold,
            mean_runtime_seconds: runtime / n,
            conservative_releases: outcomes.iter().map(|o| o.conservative).sum(),
            mean_alpha: outcomes
                .iter()
                .map(|o| o.alphas.iter().sum::<f64>() / o.alphas.len() as f64)
                .sum::<f64>()
                / n,
            mean_dist_km: outcomes
                .iter()
                .map(|o| o.dists.iter().sum::<f64>() / o.dists.len() as f64)
                .sum::<f64>()
                / n,
        });
    }
    Ok(rows)
}

/// Inputs of the scaling benchmark.
#[derive(Debug, Clone)]
pub struct ScalingSpec {
    pub m_grid: Vec<usize>,
    pub lengths: Vec<usize>,
    pub widths: Vec<usize>,
    /// Random instances averaged per table row.
    pub instances: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub m: usize,
    pub length: usize,
    pub width: usize,
    pub fast_ns: u128,
    /// None when the naive enumeration would exceed its guard.
    pub naive_ns: Option<u128>,
}

fn random_instance(m: usize, length: usize, width: usize, rng: &mut StdRng) -> BenchInstance {
    let mut mat = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let mut total = 0.0;
        for j in 0..m {
            let v = rng.gen::<f64>() + 1e-3;
            mat[[i, j]] = v;
            total += v;
        }
        for j in 0..m {
            mat[[i, j]] /= total;
        }
    }
    let model = MarkovModel::homogeneous(mat).expect("rows normalized");
    let pi = Distribution::random_simplex(m, rng);
    let width = width.min(m.saturating_sub(1)).max(1);
    let start = 2usize;
    let end = start + length - 1;
    let event = if rng.gen_bool(0.5) {
        let mut cells: Vec<usize> = (0..m).collect();
        for i in (1..cells.len()).rev() {
            cells.swap(i, rng.gen_range(0..=i));
        }
        Event::presence(RegionMask::from_cells(m, &cells[..width]), start, end)
            .expect("window is valid")
    } else {
        let masks = (start..=end)
            .map(|_| {
                let mut cells: Vec<usize> = (0..m).collect();
                for i in (1..cells.len()).rev() {
                    cells.swap(i, rng.gen_range(0..=i));
                }
                RegionMask::from_cells(m, &cells[..width])
            })
            .collect();
        Event::pattern(masks, start, end).expect("window is valid")
    };
    let emissions = (0..end)
        .map(|_| {
            EmissionColumn::new((0..m).map(|_| 0.05 + 0.95 * rng.gen::<f64>()).collect())
                .expect("likelihoods in range")
        })
        .collect();
    BenchInstance { model, pi, event, emissions, horizon: end }
}

fn within_guard(m: usize, horizon: usize) -> bool {
    let mut total = 1u64;
    for _ in 0..horizon {
        total = total.saturating_mul(m as u64);
        if total > ENUM_GUARD {
            return false;
        }
    }
    true
}

/// Time the fast path and (inside the guard) the naive baseline per
/// (m, length, width) point. Correctness is asserted before every timing.
pub fn run_scaling_bench(spec: &ScalingSpec) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &m in &spec.m_grid {
        for &length in &spec.lengths {
            for &width in &spec.widths {
                let mut fast_total = 0u128;
                let mut naive_total = 0u128;
                let mut naive_all = true;
                for inst_idx in 0..spec.instances {
                    let mut rng = StdRng::seed_from_u64(splitmix64(
                        spec.seed
                            ^ splitmix64((m as u64) << 40 | (length as u64) << 20 | width as u64)
                            ^ inst_idx as u64,
                    ));
                    let instance = random_instance(m, length, width, &mut rng);
                    if within_guard(m, instance.horizon) {
                        let (fast, naive) = bench_pair(&instance).expect("guard checked");
                        fast_total += fast;
                        naive_total += naive;
                    } else {
                        naive_all = false;
                        let chain = AugmentedChain::new(
                            instance.event.clone(),
                            instance.model.clone(),
                            instance.horizon,
                        )
                        .expect("instance is well-formed");
                        let started = Instant::now();
                        let mut evals = 0u32;
                        while started.elapsed().as_millis() < 2 {
                            std::hint::black_box(
                                chain.joint_scaled(&instance.pi, &instance.emissions).unwrap(),
                            );
                            evals += 1;
                        }
                        fast_total += started.elapsed().as_nanos() / evals as u128;
                    }
                }
                let n = spec.instances as u128;
                rows.push(BenchRow {
                    m,
                    length,
                    width,
                    fast_ns: fast_total / n,
                    naive_ns: naive_all.then_some(naive_total / n),
                });
            }
        }
    }
    rows
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn fmt_delta(delta: Option<f64>) -> String {
    delta.map_or_else(String::new, |d| format!("{d}"))
}

/// Write report.json, per_timestamp.csv and per_run.csv into a directory.
pub fn write_experiment_outputs(
    report: &ExperimentReport,
    out_dir: &Path,
) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_file(&out_dir.join("report.json"), &json)?;

    let mut per_t = String::from("epsilon,alpha,delta,t,mean_alpha,std_alpha,mean_dist_km\n");
    for cell in &report.cells {
        for t in 0..cell.horizon {
            let _ = writeln!(
                per_t,
                "{},{},{},{},{},{},{}",
                cell.epsilon,
                cell.alpha,
                fmt_delta(cell.delta),
                t + 1,
                cell.per_timestamp_mean_alpha[t],
                cell.per_timestamp_std_alpha[t],
                cell.per_timestamp_mean_dist_km[t]
            );
        }
    }
    write_file(&out_dir.join("per_timestamp.csv"), &per_t)?;

    let mut per_run =
        String::from("epsilon,alpha,delta,run,mean_alpha,mean_dist_km,halvings,conservative,forced_uniform\n");
    for r in &report.runs {
        let _ = writeln!(
            per_run,
            "{},{},{},{},{},{},{},{},{}",
            r.epsilon,
            r.alpha,
            fmt_delta(r.delta),
            r.run,
            r.mean_alpha,
            r.mean_dist_km,
            r.halvings,
            r.conservative,
            r.forced_uniform
        );
    }
    write_file(&out_dir.join("per_run.csv"), &per_run)
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<(), ExperimentError> {
    let mut out = String::from("m,length,width,fast_ns,naive_ns\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.m,
            r.length,
            r.width,
            r.fast_ns,
            r.naive_ns.map_or_else(String::new, |v| v.to_string())
        );
    }
    write_file(path, &out)
}

pub fn write_threshold_csv(rows: &[ThresholdRow], path: &Path) -> Result<(), ExperimentError> {
    let mut out =
        String::from("threshold_ms,mean_runtime_seconds,conservative_releases,mean_alpha,mean_dist_km\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.threshold_ms.map_or_else(|| "inf".into(), |v| v.to_string()),
            r.mean_runtime_seconds,
            r.conservative_releases,
            r.mean_alpha,
            r.mean_dist_km
        );
    }
    write_file(path, &out)
}
