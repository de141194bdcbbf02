use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loss_with_increments, IntegratorConfig, LdeNetModel, ModelGrads, ModelSpec, Normalization, TrainBatch};
use crate::chaos::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::neural::{path_norm, sgd_update, Parameters};
use crate::stable_rng::RngStream;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// OOD noise standard deviation as a multiple of each feature's std.
    pub ood_sigma_factor: f64,
    pub max_retries: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            grad_clip: Some(10.0),
            ood_sigma_factor: 2.0,
            max_retries: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.ood_sigma_factor > 0.0) {
            return Err(Error::invalid("OOD noise factor must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid("gradient clip must be positive"));
            }
        }
        Ok(())
    }
}

/// Supervised pairs for one forecast horizon, in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonDataset {
    pub horizon: usize,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub regression: f64,
    pub drift_path_norm: f64,
    pub diffusion_path_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LdeNetModel,
    pub epochs: Vec<EpochStats>,
    pub retries: usize,
    pub final_learning_rate: f64,
}

impl TrainOutcome {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// `x + ε` with `ε ~ N(0, noise_sigma²)` per coordinate.
pub fn make_ood(inputs: &[Vec<f64>], noise_sigma: f64, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise_sigma must be positive, got {noise_sigma}")));
    }
    Ok(inputs
        .iter()
        .map(|x| x.iter().map(|v| v + noise_sigma * rng.normal()).collect())
        .collect())
}

/// Like [`make_ood`] with one standard deviation per coordinate.
pub fn make_ood_per_feature(inputs: &[Vec<f64>], sigmas: &[f64], rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("every noise_sigma must be positive"));
    }
    inputs
        .iter()
        .map(|x| {
            if x.len() != sigmas.len() {
                return Err(Error::shape("input length differs from noise_sigma length"));
            }
            Ok(x.iter().zip(sigmas).map(|(v, s)| v + s * rng.normal()).collect())
        })
        .collect()
}

/// Rescales `grads` to norm at most `max_norm`; returns the norm before clipping.
pub fn clip_gradients(grads: &mut ModelGrads, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm && norm.is_finite() {
        grads.scale_in_place(max_norm / norm);
    }
    norm
}

fn feature_sigmas(inputs: &[Vec<f64>], factor: f64) -> Vec<f64> {
    let d = inputs[0].len();
    (0..d)
        .map(|j| {
            let col: Vec<f64> = inputs.iter().map(|x| x[j]).collect();
            factor * stats::sample_variance(&col).sqrt().max(1e-6)
        })
        .collect()
}

fn shuffle(idx: &mut [usize], rng: &mut RngStream) {
    for i in (1..idx.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::NonFiniteUpdate { .. })
}

fn run_epoch(
    model: &mut LdeNetModel,
    inputs: &[Vec<f64>],
    labels: &[f64],
    sigmas: &[f64],
    config: &TrainConfig,
    lr: f64,
    rng: &mut RngStream,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    shuffle(&mut order, rng);
    let mut total = 0.0;
    let mut regression = 0.0;
    for chunk in order.chunks(config.batch_size) {
        let batch_inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
        let ood_inputs = make_ood_per_feature(&batch_inputs, sigmas, rng)?;
        let batch = TrainBatch {
            labels: chunk.iter().map(|&i| labels[i]).collect(),
            inputs: batch_inputs,
            ood_inputs,
        };
        let increments = chunk
            .iter()
            .map(|_| model.draw_increments(rng))
            .collect::<Result<Vec<_>>>()?;
        let (parts, mut grads) = loss_with_increments(model, &batch, &increments)?;
        if !parts.total().is_finite() {
            return Err(Error::Divergence { step: 0 });
        }
        if let Some(c) = config.grad_clip {
            clip_gradients(&mut grads, c);
        }
        sgd_update(model, &grads, lr)?;
        let share = chunk.len() as f64 / inputs.len() as f64;
        total += share * parts.total();
        regression += share * parts.regression;
    }
    Ok(EpochStats {
        loss: total,
        regression,
        drift_path_norm: model.drift.iter().map(path_norm).sum(),
        diffusion_path_norm: path_norm(&model.diffusion),
    })
}

/// Trains one model with mini-batch SGD. A diverging epoch is rolled back and
/// retried at half the learning rate, at most `max_retries` times in total.
pub fn train_model(
    mut model: LdeNetModel,
    inputs: &[Vec<f64>],
    labels: &[f64],
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    if inputs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if inputs.len() != labels.len() {
        return Err(Error::shape("inputs and labels differ in length"));
    }
    let sigmas = feature_sigmas(inputs, config.ood_sigma_factor);
    let mut lr = config.learning_rate;
    let mut retries = 0;
    let mut epochs = Vec::with_capacity(config.epochs);
    while epochs.len() < config.epochs {
        let snapshot = model.clone();
        match run_epoch(&mut model, inputs, labels, &sigmas, config, lr, rng) {
            Ok(stats) => epochs.push(stats),
            Err(e) if is_divergence(&e) => {
                model = snapshot;
                if retries == config.max_retries {
                    return Err(Error::TrainingFailed {
                        retries,
                        cause: Box::new(e),
                    });
                }
                retries += 1;
                lr *= 0.5;
                log::warn!(
                    "horizon {}: epoch {} diverged ({e}); retrying with learning rate {lr}",
                    model.horizon,
                    epochs.len()
                );
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutcome {
        model,
        epochs,
        retries,
        final_learning_rate: lr,
    })
}

/// Trains one independent model per horizon; horizons run in parallel, each
/// on its own child stream of `rng`, so results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn train(
    datasets: &[HorizonDataset],
    spec: &ModelSpec,
    integrator: IntegratorConfig,
    embedding: EmbeddingSpec,
    normalization: Normalization,
    config: &TrainConfig,
    rng: &RngStream,
) -> Result<Vec<TrainOutcome>> {
    if datasets.is_empty() {
        return Err(Error::invalid("at least one horizon is required"));
    }
    datasets
        .par_iter()
        .map(|ds| {
            let mut stream = rng.child(ds.horizon as u64);
            let model = LdeNetModel::init(spec, integrator, embedding, ds.horizon, normalization, &mut stream)?;
            train_model(model, &ds.inputs, &ds.labels, config, &mut stream)
        })
        .collect()
}
