use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, HorizonDataset, IntegratorConfig, LdeNetModel, ModelSpec, Normalization, TrainConfig};
use crate::chaos::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::stable_rng::RngStream;
use crate::stats;

/// Largest tolerated share of diverged paths in one prediction.
pub const MAX_DISCARD_FRACTION: f64 = 0.1;

/// Monte-Carlo forecast in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    pub samples: Vec<f64>,
    pub n_discarded: usize,
    /// Set when only one path survived, so the variance is meaningless.
    pub single_sample: bool,
}

/// Runs `n_paths` chains, path `p` on `rng.child(p)`, and aggregates the
/// readout of the terminal states. Diverged paths are dropped and counted.
pub fn predict(model: &LdeNetModel, x: &[f64], rng: &RngStream) -> Result<Prediction> {
    model.validate()?;
    let n_paths = model.integrator.n_paths;
    let outcomes: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = rng.child(p as u64);
            let increments = model.draw_increments(&mut stream)?;
            let trace = model.trace(x, &increments)?;
            Ok(model.readout.apply(trace.terminal()))
        })
        .collect();
    let mut samples = Vec::with_capacity(n_paths);
    let mut n_discarded = 0;
    for o in outcomes {
        match o {
            Ok(v) => samples.push(model.normalization.inverse(v)),
            Err(Error::Divergence { .. }) => n_discarded += 1,
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() || n_discarded as f64 > MAX_DISCARD_FRACTION * n_paths as f64 {
        return Err(Error::PredictionUnstable {
            discarded: n_discarded,
            total: n_paths,
        });
    }
    let single_sample = samples.len() == 1;
    if single_sample {
        log::warn!("prediction from a single path; variance reported as 0");
    }
    Ok(Prediction {
        mean: stats::mean(&samples),
        variance: stats::sample_variance(&samples),
        samples,
        n_discarded,
        single_sample,
    })
}

/// Test MSE per horizon for one stability index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    /// `(horizon, mse)` in normalized units.
    pub mse: Vec<(usize, f64)>,
}

/// Trains and evaluates one model family per `alpha`. Every family uses the
/// same child stream of `rng`, so rows differ only through `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep(
    train_sets: &[HorizonDataset],
    test_sets: &[HorizonDataset],
    alphas: &[f64],
    spec: &ModelSpec,
    integrator: IntegratorConfig,
    embedding: EmbeddingSpec,
    normalization: Normalization,
    config: &TrainConfig,
    rng: &RngStream,
) -> Result<Vec<AlphaSweepRow>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 1.0 && **a < 2.0)) {
        return Err(Error::invalid(format!("alpha must lie in (1, 2), got {a}")));
    }
    if train_sets.len() != test_sets.len() {
        return Err(Error::shape("train and test horizon sets differ"));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let integ = IntegratorConfig { alpha, ..integrator };
            let outcomes = train(train_sets, spec, integ, embedding, normalization, config, &rng.child(0))?;
            let mut mse = Vec::with_capacity(outcomes.len());
            for (outcome, test) in outcomes.iter().zip(test_sets) {
                let pred_rng = rng.child(1 + test.horizon as u64);
                let mut se = 0.0;
                for (i, (x, y)) in test.inputs.iter().zip(&test.labels).enumerate() {
                    let p = predict(&outcome.model, x, &pred_rng.child(i as u64))?;
                    let e = normalization.forward(p.mean) - y;
                    se += e * e;
                }
                mse.push((test.horizon, se / test.inputs.len().max(1) as f64));
            }
            Ok(AlphaSweepRow { alpha, mse })
        })
        .collect()
}
