use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ldenet::lde_net::{load_checkpoint, LdeNetModel};
use ldenet::pipeline::{
    analyze_series, load_csv, make_supervised, metrics, predict_pairs, run_alpha_sweep, run_experiment,
    write_predictions_jsonl, ChaosConfig, ExperimentConfig, MetricsRow, PredictionRecord,
};
use ldenet::sde_numerics::{dyadic_grid, strong_error_curve, Drift, SdeSpec};
use ldenet::stable_rng::RngStream;

const OUTPUT_SCHEMA_VERSION: u32 = 1;
const PREDICT_STREAM: u64 = 3;
const CONVERGENCE_STREAM: u64 = 5;

#[derive(Parser)]
#[command(name = "ldenet", version, about = "Levy-noise neural SDE forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cao embedding dimension, Wolf exponent and Lyapunov time of a series.
    Analyze(AnalyzeArgs),
    /// Run a full experiment from a config file.
    Train(TrainArgs),
    /// Forecast a series with trained checkpoints.
    Predict(PredictArgs),
    /// Score predictions against a truth series.
    Evaluate(EvaluateArgs),
    /// Measure the strong convergence order of Euler-Maruyama with stable noise.
    Convergence(ConvergenceArgs),
    /// Train and evaluate one model family per stability index.
    SweepAlpha(SweepArgs),
}

#[derive(Args)]
struct SeriesArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "close")]
    value_column: String,
    #[arg(long)]
    timestamp_column: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 30)]
    m_max: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// A checkpoint file or a directory of `horizon_<h>.json` checkpoints.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    series: SeriesArgs,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// JSON-lines predictions from `predict` or `train`.
    #[arg(long)]
    pred: PathBuf,
    /// Truth series; rows are matched by `date_index`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "close")]
    value_column: String,
    /// Checkpoint file or directory whose normalization is applied before
    /// scoring; without it metrics are in data units.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Coarsest step is 2^-dt_from.
    #[arg(long, default_value_t = 4)]
    dt_from: u32,
    /// Finest step is 2^-dt_to.
    #[arg(long, default_value_t = 9)]
    dt_to: u32,
    /// Reference step is the finest step divided by this factor.
    #[arg(long, default_value_t = 64)]
    refinement: usize,
    /// Drift is -rate * x.
    #[arg(long, default_value_t = 1.0)]
    drift_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the JSON summary here instead of stderr.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.2,1.3,1.4,1.5,1.6,1.8")]
    alphas: Vec<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct AnalyzeReport {
    schema_version: u32,
    source: String,
    n: usize,
    chaos: ldenet::pipeline::ChaosSummary,
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let ds = load_csv(
        &args.series.input,
        &args.series.value_column,
        args.series.timestamp_column.as_deref(),
    )?;
    let config = ChaosConfig {
        tau: args.tau,
        m_max: args.m_max,
        ..ChaosConfig::default()
    };
    let chaos = analyze_series(&ds.values, &config)?;
    let report = AnalyzeReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        source: ds.source,
        n: ds.values.len(),
        chaos,
    };
    emit(args.output.as_deref(), &to_json(&report)?)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.seed)?;
    let dir = args.output.unwrap_or_else(|| config.output_dir.clone());
    let report = run_experiment(&config, &dir)?;
    for h in &report.horizons {
        eprintln!(
            "horizon {}: mse {:.6} (persistence {:.6}, ar {:.6})",
            h.horizon, h.lde_net.mse, h.persistence.mse, h.ar.mse
        );
    }
    eprintln!("artifacts written to {}", dir.display());
    Ok(())
}

fn load_models(path: &Path) -> Result<Vec<LdeNetModel>> {
    if path.is_file() {
        return Ok(vec![load_checkpoint(path)?]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut models = files
        .iter()
        .map(|f| load_checkpoint(f).with_context(|| format!("loading {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    if models.is_empty() {
        bail!("no checkpoints found in {}", path.display());
    }
    models.sort_by_key(|m| m.horizon);
    Ok(models)
}

fn predict_cmd(args: PredictArgs) -> Result<()> {
    let models = load_models(&args.checkpoint)?;
    let ds = load_csv(
        &args.series.input,
        &args.series.value_column,
        args.series.timestamp_column.as_deref(),
    )?;
    let mut records: Vec<PredictionRecord> = Vec::new();
    for model in &models {
        let norm = model.normalization;
        let series: Vec<f64> = ds.values.iter().map(|&v| norm.forward(v)).collect();
        let pairs = make_supervised(&series, model.embedding, model.horizon)?;
        let rng = RngStream::new(args.seed, PREDICT_STREAM).child(model.horizon as u64);
        records.extend(predict_pairs(model, &pairs, 0, &rng)?);
    }
    match args.output {
        Some(p) => write_predictions_jsonl(&p, &records)?,
        None => {
            let mut out = std::io::stdout().lock();
            for r in &records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let truth = load_csv(&args.truth, &args.value_column, None)?;
    let norms: BTreeMap<usize, ldenet::lde_net::Normalization> = match &args.checkpoint {
        Some(p) => load_models(p)?
            .into_iter()
            .map(|m| (m.horizon, m.normalization))
            .collect(),
        None => BTreeMap::new(),
    };
    let reader = BufReader::new(fs::File::open(&args.pred).with_context(|| format!("opening {}", args.pred.display()))?);
    let mut by_horizon: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord =
            serde_json::from_str(&line).with_context(|| format!("parsing prediction line {}", i + 1))?;
        let Some(&t) = truth.values.get(r.date_index) else {
            bail!("prediction line {} refers to row {} beyond the truth series", i + 1, r.date_index);
        };
        let (p, t) = match norms.get(&r.horizon) {
            Some(n) => (n.forward(r.mean), n.forward(t)),
            None if args.checkpoint.is_some() => bail!("no checkpoint for horizon {}", r.horizon),
            None => (r.mean, t),
        };
        let e = by_horizon.entry(r.horizon).or_default();
        e.0.push(p);
        e.1.push(t);
    }
    let rows = by_horizon
        .iter()
        .map(|(&h, (p, t))| Ok(metrics(p, t)?.with_horizon(h)))
        .collect::<Result<Vec<MetricsRow>>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["horizon", "mse", "rmse", "mae"])?;
    for r in &rows {
        w.write_record([r.horizon.to_string(), r.mse.to_string(), r.rmse.to_string(), r.mae.to_string()])?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    emit(args.output.as_deref(), &text)
}

#[derive(Serialize)]
struct ConvergenceSummary {
    schema_version: u32,
    alpha: f64,
    slope: f64,
    slope_stderr: f64,
    robust_slope: f64,
    expected_slope: f64,
    tolerance: f64,
    pass: bool,
}

fn convergence_cmd(args: ConvergenceArgs) -> Result<()> {
    let spec = SdeSpec {
        drift: Drift::Linear { rate: args.drift_rate },
        g: args.g,
        x0: 1.0,
        alpha: args.alpha,
        horizon_time: 1.0,
    };
    if args.dt_to <= args.dt_from {
        bail!("--dt-to must exceed --dt-from");
    }
    let grid = dyadic_grid(args.dt_from, args.dt_to);
    let report = strong_error_curve(
        &spec,
        &grid,
        args.paths,
        args.refinement,
        &RngStream::new(args.seed, CONVERGENCE_STREAM),
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dt", "mean_error", "median_of_means_error"])?;
    for ((dt, m), r) in report.dts.iter().zip(&report.mean_errors).zip(&report.median_of_means_errors) {
        w.write_record([dt.to_string(), m.to_string(), r.to_string()])?;
    }
    emit(args.csv.as_deref(), &String::from_utf8(w.into_inner()?)?)?;
    let expected = 1.0 / args.alpha;
    let tolerance = 0.2;
    let summary = ConvergenceSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        alpha: args.alpha,
        slope: report.slope,
        slope_stderr: report.slope_stderr,
        robust_slope: report.robust_slope,
        expected_slope: expected,
        tolerance,
        pass: report.slope_within(expected, tolerance),
    };
    let json = to_json(&summary)?;
    match args.json {
        Some(p) => fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
        None => eprint!("{json}"),
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.seed)?;
    let rows = run_alpha_sweep(&config, &args.alphas)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["alpha".to_string()];
    header.extend(config.horizons.iter().map(|h| format!("mse_t{h}")));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.alpha.to_string()];
        rec.extend(r.mse.iter().map(|(_, m)| m.to_string()));
        w.write_record(&rec)?;
    }
    emit(args.output.as_deref(), &String::from_utf8(w.into_inner()?)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Convergence(a) => convergence_cmd(a),
        Command::SweepAlpha(a) => sweep_cmd(a),
    }
}
