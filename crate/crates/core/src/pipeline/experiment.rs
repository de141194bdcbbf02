use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, EmbeddingChoice, ExperimentConfig};
use super::data::{load_csv, split_and_normalize, SeriesDataset, Split};
use super::metrics::{baseline_ar, baseline_persistence, horizon_sweep, metrics, HorizonSweep, MetricsRow};
use super::supervised::{make_supervised, SupervisedPairs};
use super::synthetic::ar1_stable;
use super::ChaosConfig;
use crate::chaos::{
    attractor_diameter, cao_curves, delay_embed, max_lyapunov_wolf, select_embedding_dim, CaoCurves,
    EmbeddingSpec, LyapunovReport,
};
use crate::error::{Error, Result};
use crate::lde_net::{
    alpha_sweep, diffusion_score, make_ood, predict, save_checkpoint, train, AlphaSweepRow, HorizonDataset,
    LdeNetModel, Normalization, TrainOutcome,
};
use crate::stable_rng::RngStream;
use crate::stats;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

// Stream ids keep the stages' random draws independent of each other.
const DATA_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const PREDICT_STREAM: u64 = 3;
const OOD_STREAM: u64 = 4;

/// Chaos diagnostics of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosSummary {
    pub tau: usize,
    pub cao: Option<CaoCurves>,
    /// Dimension from E1 saturation under the configured tolerance.
    pub cao_m: Option<usize>,
    /// Whether E2 leaves the configured band (deterministic signal).
    pub deterministic: bool,
    /// Dimension the Lyapunov exponent was estimated at.
    pub lyapunov_m: usize,
    pub lyapunov: Option<LyapunovReport>,
    pub chaotic: bool,
    pub warnings: Vec<String>,
}

/// Cao curves, then the Wolf exponent at the Cao dimension (or the fallback).
pub fn analyze_series(series: &[f64], config: &ChaosConfig) -> Result<ChaosSummary> {
    let mut warnings = Vec::new();
    let (cao, cao_m, deterministic) = match cao_curves(series, config.tau, config.m_max) {
        Ok(curves) => {
            let m = match select_embedding_dim(&curves, config.saturation_tol) {
                Ok(m) => Some(m),
                Err(e) => {
                    warnings.push(format!("embedding dimension: {e}"));
                    None
                }
            };
            let det = curves.deterministic_with_band(config.e2_band);
            (Some(curves), m, det)
        }
        Err(e @ Error::InsufficientData { .. }) => return Err(e),
        Err(e) => {
            warnings.push(format!("Cao analysis failed: {e}"));
            (None, None, false)
        }
    };
    let lyapunov_m = cao_m.unwrap_or(config.fallback_m);
    let spec = EmbeddingSpec::new(config.tau, lyapunov_m)?;
    let lyapunov = match delay_embed(series, spec) {
        Ok(points) => {
            let eps = config.eps_fraction * attractor_diameter(&points);
            let theiler = config.theiler.unwrap_or(config.tau * lyapunov_m);
            match max_lyapunov_wolf(series, spec, eps, theiler) {
                Ok(r) => Some(r),
                Err(e) => {
                    warnings.push(format!("Lyapunov estimate failed: {e}"));
                    None
                }
            }
        }
        Err(e) => {
            warnings.push(format!("Lyapunov estimate failed: {e}"));
            None
        }
    };
    if !deterministic {
        warnings.push("E2 stays near 1: the series is indistinguishable from noise".to_string());
    }
    let positive = lyapunov.as_ref().is_some_and(|r| r.chaotic);
    if !positive {
        warnings.push("largest Lyapunov exponent is not positive".to_string());
    }
    Ok(ChaosSummary {
        tau: config.tau,
        cao,
        cao_m,
        deterministic,
        lyapunov_m,
        lyapunov,
        chaotic: deterministic && positive,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSummary {
    pub tau: usize,
    pub m: usize,
    pub source: String,
}

fn choose_embedding(chaos: &ChaosSummary, config: &ChaosConfig) -> Result<EmbeddingSummary> {
    let fallback = |why: &str| {
        log::warn!("{why}; using fallback dimension {}", config.fallback_m);
        (config.fallback_m, format!("fallback ({why})"))
    };
    let (m, source) = match config.embedding {
        EmbeddingChoice::Cao => match chaos.cao_m {
            Some(m) => (m, "cao".to_string()),
            None => fallback("E1 did not saturate"),
        },
        EmbeddingChoice::LyapunovTime => match chaos.lyapunov.as_ref().and_then(|r| r.lyapunov_time) {
            Some(t) if t >= 1 => (t as usize, "lyapunov_time".to_string()),
            _ => fallback("no positive Lyapunov exponent"),
        },
        EmbeddingChoice::Fixed => (config.fixed_m.unwrap_or(config.fallback_m), "fixed".to_string()),
    };
    EmbeddingSpec::new(config.tau, m)?;
    Ok(EmbeddingSummary {
        tau: config.tau,
        m,
        source,
    })
}

/// Everything the model stages need, derived from a config.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: SeriesDataset,
    pub split: Split,
    pub chaos: ChaosSummary,
    pub embedding: EmbeddingSpec,
    pub embedding_summary: EmbeddingSummary,
    pub train_pairs: Vec<SupervisedPairs>,
    pub test_pairs: Vec<SupervisedPairs>,
}

impl PreparedData {
    pub fn train_sets(&self) -> Vec<HorizonDataset> {
        self.train_pairs.iter().cloned().map(SupervisedPairs::into_dataset).collect()
    }

    pub fn test_sets(&self) -> Vec<HorizonDataset> {
        self.test_pairs.iter().cloned().map(SupervisedPairs::into_dataset).collect()
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<SeriesDataset> {
    match &config.data {
        DataSource::Csv {
            path,
            value_column,
            timestamp_column,
        } => load_csv(path, value_column, timestamp_column.as_deref()),
        DataSource::Synthetic(spec) => ar1_stable(spec, &mut RngStream::new(config.seed, DATA_STREAM)),
    }
}

/// Load, split, analyse (train split only) and window the data.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate()?;
    let dataset = load_dataset(config).map_err(|e| e.in_stage("load"))?;
    let split = split_and_normalize(&dataset, &config.split).map_err(|e| e.in_stage("split"))?;
    let chaos = analyze_series(&split.train, &config.chaos).map_err(|e| e.in_stage("analyze"))?;
    for w in &chaos.warnings {
        log::warn!("{w}");
    }
    if !chaos.chaotic && config.chaos.strict {
        let lambda = chaos.lyapunov.as_ref().map_or(f64::NAN, |r| r.lambda);
        return Err(Error::NotChaotic { lambda }.in_stage("analyze"));
    }
    let embedding_summary = choose_embedding(&chaos, &config.chaos).map_err(|e| e.in_stage("embed"))?;
    let embedding = EmbeddingSpec::new(embedding_summary.tau, embedding_summary.m)?;
    let window = |series: &[f64]| -> Result<Vec<SupervisedPairs>> {
        config
            .horizons
            .iter()
            .map(|&h| make_supervised(series, embedding, h))
            .collect()
    };
    let train_pairs = window(&split.train).map_err(|e| e.in_stage("embed"))?;
    let test_pairs = window(&split.test).map_err(|e| e.in_stage("embed"))?;
    Ok(PreparedData {
        dataset,
        split,
        chaos,
        embedding,
        embedding_summary,
        train_pairs,
        test_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub out_of_range: usize,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub n_train_pairs: usize,
    pub n_test_pairs: usize,
    pub lde_net: MetricsRow,
    pub persistence: MetricsRow,
    pub ar: MetricsRow,
    /// Mean diffusion score on training, held-out and perturbed inputs.
    pub score_train: f64,
    pub score_test: f64,
    pub score_ood: f64,
    pub training_retries: usize,
    pub final_loss: f64,
    pub paths_discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub chaos: ChaosSummary,
    pub embedding: EmbeddingSummary,
    pub horizons: Vec<HorizonReport>,
    /// MSE against horizon for the LDE-Net models.
    pub sweep: Option<HorizonSweep>,
    pub baselines: String,
}

/// One test-set forecast, as written to `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub date_index: usize,
    pub horizon: usize,
    pub mean: f64,
    pub variance: f64,
    pub truth: f64,
    pub n_discarded: usize,
}

/// Forecasts every pair with `model`; pair `i` uses `rng.child(i)`.
pub fn predict_pairs(
    model: &LdeNetModel,
    pairs: &SupervisedPairs,
    index_offset: usize,
    rng: &RngStream,
) -> Result<Vec<PredictionRecord>> {
    let norm = model.normalization;
    pairs
        .inputs
        .iter()
        .zip(&pairs.labels)
        .zip(&pairs.label_index)
        .enumerate()
        .map(|(i, ((x, &y), &li))| {
            let p = predict(model, x, &rng.child(i as u64))?;
            Ok(PredictionRecord {
                date_index: index_offset + li,
                horizon: pairs.horizon,
                mean: p.mean,
                variance: p.variance,
                truth: norm.inverse(y),
                n_discarded: p.n_discarded,
            })
        })
        .collect()
}

fn mean_score(model: &LdeNetModel, inputs: &[Vec<f64>]) -> Result<f64> {
    let scores = inputs
        .iter()
        .map(|x| diffusion_score(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(stats::mean(&scores))
}

fn feature_std(inputs: &[Vec<f64>]) -> f64 {
    let d = inputs[0].len();
    let per: Vec<f64> = (0..d)
        .map(|j| stats::sample_variance(&inputs.iter().map(|x| x[j]).collect::<Vec<_>>()).sqrt())
        .collect();
    stats::mean(&per).max(1e-6)
}

/// Everything produced by a run, before it is written to disk.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub outcomes: Vec<TrainOutcome>,
    pub predictions: Vec<PredictionRecord>,
}

/// analyze → embed → train → predict → evaluate, in memory.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prep = prepare(config)?;
    let norm = prep.split.normalization;
    let outcomes = train(
        &prep.train_sets(),
        &config.model,
        config.integrator,
        prep.embedding,
        norm,
        &config.training,
        &RngStream::new(config.seed, TRAIN_STREAM),
    )
    .map_err(|e| e.in_stage("train"))?;

    let n_train = prep.split.train.len();
    let mut predictions = Vec::new();
    let mut horizons = Vec::with_capacity(outcomes.len());
    for ((outcome, test), train_pairs) in outcomes.iter().zip(&prep.test_pairs).zip(&prep.train_pairs) {
        let model = &outcome.model;
        let h = test.horizon;
        let records = predict_pairs(
            model,
            test,
            n_train,
            &RngStream::new(config.seed, PREDICT_STREAM).child(h as u64),
        )
        .map_err(|e| e.in_stage("predict"))?;

        let evaluate = || -> Result<HorizonReport> {
            let preds: Vec<f64> = records.iter().map(|r| norm.forward(r.mean)).collect();
            let lde_net = metrics(&preds, &test.labels)?.with_horizon(h);
            let persistence = baseline_persistence(test)?;
            let ar = baseline_ar(&prep.split.train, &prep.split.test, test, config.ar_order)?;
            let sigma = config.training.ood_sigma_factor * feature_std(&train_pairs.inputs);
            let mut ood_rng = RngStream::new(config.seed, OOD_STREAM).child(h as u64);
            let ood = make_ood(&test.inputs, sigma, &mut ood_rng)?;
            Ok(HorizonReport {
                horizon: h,
                n_train_pairs: train_pairs.len(),
                n_test_pairs: test.len(),
                lde_net,
                persistence,
                ar,
                score_train: mean_score(model, &train_pairs.inputs)?,
                score_test: mean_score(model, &test.inputs)?,
                score_ood: mean_score(model, &ood)?,
                training_retries: outcome.retries,
                final_loss: outcome.epochs.last().map_or(f64::NAN, |e| e.loss),
                paths_discarded: records.iter().map(|r| r.n_discarded).sum(),
            })
        };
        horizons.push(evaluate().map_err(|e| e.in_stage("evaluate"))?);
        predictions.extend(records);
    }
    let rows: Vec<MetricsRow> = horizons.iter().map(|r| r.lde_net).collect();
    let sweep = if rows.len() >= 3 {
        Some(horizon_sweep(&rows).map_err(|e| e.in_stage("evaluate"))?)
    } else {
        None
    };
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: config.seed,
        dataset: DatasetSummary {
            source: prep.dataset.source.clone(),
            n: prep.dataset.len(),
            n_train,
            n_test: prep.split.test.len(),
            out_of_range: prep.split.out_of_range,
            normalization: norm,
        },
        chaos: prep.chaos,
        embedding: prep.embedding_summary,
        horizons,
        sweep,
        baselines: format!(
            "persistence (y_t) and least-squares AR({}) stand in for ARIMA/LSTM",
            config.ar_order
        ),
    };
    Ok(ExperimentOutput {
        report,
        outcomes,
        predictions,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "horizon", "mse", "rmse", "mae"])?;
    for h in &report.horizons {
        for (name, row) in [("lde_net", &h.lde_net), ("persistence", &h.persistence), ("ar", &h.ar)] {
            w.write_record([
                name.to_string(),
                row.horizon.to_string(),
                row.mse.to_string(),
                row.rmse.to_string(),
                row.mae.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions_jsonl(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_artifacts(dir: &Path, config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::create_dir_all(dir.join("series"))?;
    write_json(&dir.join("config.json"), config)?;
    write_json(&dir.join("report.json"), &out.report)?;
    write_metrics_csv(&dir.join("metrics.csv"), &out.report)?;
    write_predictions_jsonl(&dir.join("predictions.jsonl"), &out.predictions)?;

    let mut curves = csv::Writer::from_path(dir.join("loss_curves.csv"))?;
    curves.write_record(["horizon", "epoch", "loss", "regression", "drift_path_norm", "diffusion_path_norm"])?;
    for o in &out.outcomes {
        save_checkpoint(&o.model, &dir.join("checkpoints").join(format!("horizon_{}.json", o.model.horizon)))?;
        for (e, s) in o.epochs.iter().enumerate() {
            curves.write_record([
                o.model.horizon.to_string(),
                e.to_string(),
                s.loss.to_string(),
                s.regression.to_string(),
                s.drift_path_norm.to_string(),
                s.diffusion_path_norm.to_string(),
            ])?;
        }
    }
    curves.flush()?;

    for h in &out.report.horizons {
        let mut w = csv::Writer::from_path(dir.join("series").join(format!("horizon_{}.csv", h.horizon)))?;
        w.write_record(["date_index", "truth", "mean", "variance"])?;
        for r in out.predictions.iter().filter(|r| r.horizon == h.horizon) {
            w.write_record([
                r.date_index.to_string(),
                r.truth.to_string(),
                r.mean.to_string(),
                r.variance.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Runs the full experiment and writes its artifacts to `output_dir`:
/// `report.json`, `metrics.csv`, `predictions.jsonl`, `loss_curves.csv`,
/// `config.json`, `checkpoints/horizon_<h>.json` and `series/horizon_<h>.csv`.
pub fn run_experiment(config: &ExperimentConfig, output_dir: &Path) -> Result<ExperimentReport> {
    let out = execute(config)?;
    write_artifacts(output_dir, config, &out).map_err(|e| e.in_stage("write"))?;
    Ok(out.report)
}

/// Trains and evaluates one model family per alpha on the configured data.
pub fn run_alpha_sweep(config: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<AlphaSweepRow>> {
    let prep = prepare(config)?;
    alpha_sweep(
        &prep.train_sets(),
        &prep.test_sets(),
        alphas,
        &config.model,
        config.integrator,
        prep.embedding,
        prep.split.normalization,
        &config.training,
        &RngStream::new(config.seed, TRAIN_STREAM),
    )
    .map_err(|e| e.in_stage("train"))
}
