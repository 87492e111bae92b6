//! Command-line front end. All real work lives in the library; this binary
//! parses arguments, loads files, and writes reports.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use eventpriv::checker::{build_conditions, certify, quantify_fixed_pi, CheckError, CheckVerdict, FeasibleSet, PrivacyParams};
use eventpriv::config::ExperimentConfig;
use eventpriv::enforce::{Mechanism, ReleaseSession, SessionConfig};
use eventpriv::event::Event;
use eventpriv::experiment::{
    run_experiment, run_scaling_bench, run_threshold_sweep, write_bench_csv,
    write_experiment_outputs, write_threshold_csv, ScalingSpec,
};
use eventpriv::grid::GridMap;
use eventpriv::ingest::ingest_trajectories;
use eventpriv::lppm::{planar_laplace_matrix, PlanarLaplaceSpec};
use eventpriv::markov::{Distribution, MarkovModel, ModelFile, Trajectory};
use eventpriv::twoworld::{AugmentedChain, CheckVectors, EmissionColumn};

#[derive(Parser)]
#[command(name = "eventpriv", version, about = "Spatiotemporal event privacy toolkit")]
struct Cli {
    /// Experiment TOML (grid, model, events, mechanism, sweep, run blocks)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a Markov model from trajectory CSVs (grid from --config)
    Train(TrainArgs),
    /// Generate the synthetic Gaussian-kernel model
    Synth(SynthArgs),
    /// Quantify event privacy of an observation trace
    Quantify(QuantifyArgs),
    /// Run a calibrated release session over a trajectory
    Enforce(EnforceArgs),
    /// Run the configured experiment grid and write reports
    Simulate,
    /// Fast-vs-naive scaling benchmark
    Bench(BenchArgs),
    /// Conservative-release sweep over certification caps
    SweepThreshold(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Trajectory CSV files (t,lat,lon or t,cell; blank line between trips)
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Resampling step in seconds (omit to keep every row)
    #[arg(long)]
    resample_seconds: Option<f64>,
    /// Additive smoothing pseudo-count
    #[arg(long, default_value_t = 0.5)]
    smoothing: f64,
    /// Output model path (defaults to <out>/model.json)
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Gaussian kernel scale in cell units
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct QuantifyArgs {
    /// Model JSON with m, transitions, pi
    #[arg(long)]
    model: PathBuf,
    /// Event JSON (object or list)
    #[arg(long)]
    event: PathBuf,
    #[arg(long)]
    epsilon: f64,
    /// Fixed initial distribution, comma-separated; omit to certify over all
    #[arg(long)]
    pi: Option<String>,
    /// Emission columns JSON (list of length-m likelihood rows)
    #[arg(long)]
    emissions: Option<PathBuf>,
    /// Mechanism budget per km; with --obs, builds emission columns from the
    /// planar Laplace matrix over the configured grid
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 3)]
    subsamples: usize,
    /// Observed cells, comma-separated (needs --alpha and --config)
    #[arg(long)]
    obs: Option<String>,
}

#[derive(Args)]
struct EnforceArgs {
    #[arg(long)]
    model: PathBuf,
    /// True trajectory CSV; the first trajectory in the file is used
    #[arg(long)]
    trajectory: PathBuf,
    /// Events JSON (object or list)
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    subsamples: usize,
    /// Enables the δ-location-set instantiation
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    decay: f64,
    #[arg(long)]
    check_budget_ms: Option<f64>,
    #[arg(long, default_value_t = 40)]
    max_halvings: u32,
    #[arg(long)]
    resample_seconds: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// State counts, comma-separated
    #[arg(long, default_value = "9")]
    m: String,
    /// Event lengths, comma list or a:b range
    #[arg(long, default_value = "5:15")]
    lengths: String,
    /// Event widths, comma list or a:b range
    #[arg(long, default_value = "5")]
    widths: String,
    #[arg(long, default_value_t = 3)]
    instances: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Caps in ms, comma-separated; `inf` disables the cap
    #[arg(long, default_value = "10,100,1000,inf")]
    thresholds: String,
}

/// Errors mapped onto the exit-code contract.
enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(args) => train(&cli, args),
        Command::Synth(args) => synth(&cli, args),
        Command::Quantify(args) => quantify(&cli, args),
        Command::Enforce(args) => enforce(&cli, args),
        Command::Simulate => simulate(&cli),
        Command::Bench(args) => bench(&cli, args),
        Command::SweepThreshold(args) => sweep_threshold(&cli, args),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    let text = fs::read_to_string(path).map_err(config_err)?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(config_err)?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    Ok(config)
}

fn load_grid(cli: &Cli) -> Result<GridMap, CliError> {
    load_config(cli)?.grid.build().map_err(config_err)
}

fn load_model(path: &Path) -> Result<(MarkovModel, Distribution), CliError> {
    let text = fs::read_to_string(path).map_err(data_err)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(data_err)?;
    file.into_parts().map_err(data_err)
}

fn load_events(path: &Path) -> Result<Vec<Event>, CliError> {
    let text = fs::read_to_string(path).map_err(data_err)?;
    if let Ok(events) = serde_json::from_str::<Vec<Event>>(&text) {
        return Ok(events);
    }
    serde_json::from_str::<Event>(&text)
        .map(|e| vec![e])
        .map_err(data_err)
}

fn write_out(cli: &Cli, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cli.out).map_err(data_err)?;
    let path = cli.out.join(name);
    fs::write(&path, contents).map_err(data_err)?;
    Ok(path)
}

fn parse_list(text: &str) -> Result<Vec<usize>, CliError> {
    if let Some((a, b)) = text.split_once(':') {
        let a: usize = a.trim().parse().map_err(config_err)?;
        let b: usize = b.trim().parse().map_err(config_err)?;
        if a > b {
            return Err(CliError::Config(format!("empty range {text}")));
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|v| v.trim().parse().map_err(config_err))
        .collect()
}

fn parse_floats(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(config_err))
        .collect()
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<(), CliError> {
    let grid = load_grid(cli)?;
    let mut trajectories = Vec::new();
    let mut dropped = 0usize;
    for input in &args.input {
        let report =
            ingest_trajectories(input, &grid, args.resample_seconds).map_err(data_err)?;
        dropped += report.dropped_rows;
        trajectories.extend(report.trajectories);
    }
    if dropped > 0 {
        eprintln!("note: dropped {dropped} out-of-grid rows");
    }
    let model = MarkovModel::train(&trajectories, grid.len(), args.smoothing).map_err(data_err)?;
    let pi = Distribution::uniform(grid.len());
    let file = ModelFile::from_parts(&model, &pi);
    let json = serde_json::to_string_pretty(&file).expect("model serializes");
    let path = match &args.model_out {
        Some(p) => {
            fs::write(p, &json).map_err(data_err)?;
            p.clone()
        }
        None => write_out(cli, "model.json", &json)?,
    };
    println!("trained model over {} trajectories -> {}", trajectories.len(), path.display());
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<(), CliError> {
    let model = MarkovModel::synth_gaussian(args.rows, args.cols, args.sigma).map_err(config_err)?;
    let pi = Distribution::uniform(args.rows * args.cols);
    let file = ModelFile::from_parts(&model, &pi);
    let json = serde_json::to_string_pretty(&file).expect("model serializes");
    let path = match &args.model_out {
        Some(p) => {
            fs::write(p, &json).map_err(data_err)?;
            p.clone()
        }
        None => write_out(cli, "model.json", &json)?,
    };
    println!("synthetic {}x{} model (sigma {}) -> {}", args.rows, args.cols, args.sigma, path.display());
    Ok(())
}

#[derive(Serialize)]
struct PrefixQuantification {
    t: usize,
    fixed_pi: Option<eventpriv::checker::RatioReport>,
    condition_1: Option<CheckVerdict>,
    condition_2: Option<CheckVerdict>,
}

#[derive(Serialize)]
struct EventQuantification {
    event: usize,
    prior_at_pi: f64,
    holds_at_pi: Option<bool>,
    certified_for_all_pi: Option<bool>,
    prefixes: Vec<PrefixQuantification>,
}

fn load_emission_columns(
    cli: &Cli,
    args: &QuantifyArgs,
    m: usize,
) -> Result<Vec<EmissionColumn>, CliError> {
    if let Some(path) = &args.emissions {
        let text = fs::read_to_string(path).map_err(data_err)?;
        let raw: Vec<Vec<f64>> = serde_json::from_str(&text).map_err(data_err)?;
        return raw
            .into_iter()
            .map(|v| {
                if v.len() != m {
                    return Err(CliError::Data(format!("emission column length != {m}")));
                }
                EmissionColumn::new(v).map_err(data_err)
            })
            .collect();
    }
    let (Some(alpha), Some(obs)) = (args.alpha, &args.obs) else {
        return Err(CliError::Config(
            "provide --emissions, or --alpha with --obs (and --config for the grid)".into(),
        ));
    };
    let grid = load_grid(cli)?;
    if grid.len() != m {
        return Err(CliError::Config(format!(
            "grid has {} cells but the model has {m}",
            grid.len()
        )));
    }
    let spec = PlanarLaplaceSpec::with_subsamples(alpha, args.subsamples).map_err(config_err)?;
    let matrix = planar_laplace_matrix(&grid, &spec);
    let cells = parse_list(obs)?;
    cells
        .into_iter()
        .map(|c| {
            if c >= m {
                return Err(CliError::Data(format!("observed cell {c} out of range")));
            }
            Ok(matrix.column(eventpriv::grid::CellIndex(c)))
        })
        .collect()
}

fn quantify(cli: &Cli, args: &QuantifyArgs) -> Result<(), CliError> {
    let (model, model_pi) = load_model(&args.model)?;
    let events = load_events(&args.event)?;
    let m = model.len();
    let emissions = load_emission_columns(cli, args, m)?;
    let params = PrivacyParams::new(args.epsilon).map_err(config_err)?;
    let pi = match &args.pi {
        Some(text) => {
            let probs = parse_floats(text)?;
            Some(Distribution::new(probs).map_err(config_err)?)
        }
        None => None,
    };
    let fixed = pi.as_ref().unwrap_or(&model_pi);
    let certify_all = pi.is_none();

    let mut out = Vec::new();
    for (idx, event) in events.iter().enumerate() {
        let horizon = event.end().max(emissions.len());
        let chain =
            AugmentedChain::new(event.clone(), model.clone(), horizon).map_err(config_err)?;
        let mut cv = CheckVectors::new(&chain);
        let mut prefixes = Vec::new();
        let mut all_certified = true;
        let mut all_hold = true;
        for t in 1..=emissions.len() {
            let fixed_report = match quantify_fixed_pi(event, &model, fixed, &emissions[..t], &params) {
                Ok(r) => {
                    all_hold &= r.holds;
                    Some(r)
                }
                Err(CheckError::DegeneratePrior { .. }) => None,
                Err(e) => return Err(data_err(e)),
            };
            let (condition_1, condition_2) = if certify_all {
                cv = cv.advance(&chain, t, &emissions[t - 1]).map_err(data_err)?;
                match build_conditions(&cv, &params, FeasibleSet::Simplex) {
                    Ok((c1, c2)) => {
                        let v1 = certify(&c1, None, 0);
                        let v2 = certify(&c2, None, 0);
                        all_certified &= v1.is_certified() && v2.is_certified();
                        (Some(v1), Some(v2))
                    }
                    Err(CheckError::DegenerateEvent) => {
                        all_certified = false;
                        (None, None)
                    }
                    Err(e) => return Err(data_err(e)),
                }
            } else {
                (None, None)
            };
            prefixes.push(PrefixQuantification { t, fixed_pi: fixed_report, condition_1, condition_2 });
        }
        out.push(EventQuantification {
            event: idx,
            prior_at_pi: chain.prior(fixed),
            holds_at_pi: (!certify_all).then_some(all_hold),
            certified_for_all_pi: certify_all.then_some(all_certified),
            prefixes,
        });
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
    Ok(())
}

fn enforce(cli: &Cli, args: &EnforceArgs) -> Result<(), CliError> {
    let grid = load_grid(cli)?;
    let (model, _) = load_model(&args.model)?;
    if model.len() != grid.len() {
        return Err(CliError::Config(format!(
            "model over {} states but grid has {} cells",
            model.len(),
            grid.len()
        )));
    }
    let events = load_events(&args.events)?;
    let ingest =
        ingest_trajectories(&args.trajectory, &grid, args.resample_seconds).map_err(data_err)?;
    if ingest.trajectories.len() > 1 {
        eprintln!(
            "note: {} trajectories in file, enforcing the first",
            ingest.trajectories.len()
        );
    }
    let trajectory: &Trajectory = &ingest.trajectories[0];
    let horizon = trajectory.len();

    let mechanism = match args.delta {
        Some(delta) => Mechanism::PlmDeltaSet { alpha: args.alpha, subsamples: args.subsamples, delta },
        None => Mechanism::Plm { alpha: args.alpha, subsamples: args.subsamples },
    };
    let mut cfg = SessionConfig::new(args.epsilon, cli.seed.unwrap_or(0));
    cfg.decay = args.decay;
    cfg.check_budget_ms = args.check_budget_ms;
    cfg.max_halvings = args.max_halvings;

    let m = grid.len();
    let mut session = ReleaseSession::new(
        grid,
        model,
        events,
        horizon,
        mechanism,
        Distribution::uniform(m),
        cfg,
    )
    .map_err(config_err)?;
    let records = session.run(trajectory).map_err(data_err)?;

    let mut csv = String::from("t,true_cell,obs_cell,alpha,halvings,dist_km\n");
    for r in &records {
        use std::fmt::Write as _;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.t, r.true_cell, r.observed_cell, r.alpha_used, r.halvings, r.distance_km
        );
    }
    let path = write_out(cli, "records.csv", &csv)?;
    println!(
        "released {} observations ({} conservative refusals) -> {}",
        records.len(),
        session.conservative_releases(),
        path.display()
    );
    Ok(())
}

fn simulate(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let report = run_experiment(&config).map_err(data_err)?;
    write_experiment_outputs(&report, &cli.out).map_err(data_err)?;
    for cell in &report.cells {
        println!(
            "epsilon {} alpha {} delta {:?}: mean released alpha {:.4}, mean distance {:.3} km, {} conservative",
            cell.epsilon,
            cell.alpha,
            cell.delta,
            cell.overall_mean_alpha,
            cell.mean_distance_km,
            cell.conservative_releases
        );
    }
    println!("reports -> {}", cli.out.display());
    Ok(())
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<(), CliError> {
    let spec = ScalingSpec {
        m_grid: parse_list(&args.m)?,
        lengths: parse_list(&args.lengths)?,
        widths: parse_list(&args.widths)?,
        instances: args.instances.max(1),
        seed: cli.seed.unwrap_or(0),
    };
    let rows = run_scaling_bench(&spec);
    fs::create_dir_all(&cli.out).map_err(data_err)?;
    let path = cli.out.join("bench.csv");
    write_bench_csv(&rows, &path).map_err(data_err)?;
    for r in &rows {
        println!(
            "m {:>4} length {:>3} width {:>3}: fast {:>12} ns naive {}",
            r.m,
            r.length,
            r.width,
            r.fast_ns,
            r.naive_ns.map_or_else(|| "(guarded)".into(), |v| format!("{v:>14} ns"))
        );
    }
    println!("bench table -> {}", path.display());
    Ok(())
}

fn sweep_threshold(cli: &Cli, args: &SweepArgs) -> Result<(), CliError> {
    let config = load_config(cli)?;
    let mut thresholds = Vec::new();
    for part in args.thresholds.split(',') {
        let part = part.trim();
        if part.eq_ignore_ascii_case("inf") || part.eq_ignore_ascii_case("none") {
            thresholds.push(None);
        } else {
            thresholds.push(Some(part.parse::<f64>().map_err(config_err)?));
        }
    }
    let rows = run_threshold_sweep(&config, &thresholds).map_err(data_err)?;
    fs::create_dir_all(&cli.out).map_err(data_err)?;
    let path = cli.out.join("threshold.csv");
    write_threshold_csv(&rows, &path).map_err(data_err)?;
    for r in &rows {
        println!(
            "cap {:>8}: mean runtime {:.4}s, {} conservative, mean alpha {:.4}, mean dist {:.3} km",
            r.threshold_ms.map_or_else(|| "inf".into(), |v| v.to_string()),
            r.mean_runtime_seconds,
            r.conservative_releases,
            r.mean_alpha,
            r.mean_dist_km
        );
    }
    println!("threshold table -> {}", path.display());
    Ok(())
}
