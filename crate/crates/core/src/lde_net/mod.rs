//! LDE-Net: a neural SDE driven by symmetric α-stable noise, integrated with a
//! fixed number of Euler–Maruyama sub-steps and trained with a regression
//! term plus an in/out-of-distribution classification term on the diffusion.

mod checkpoint;
mod model;
mod predict;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Widths, CHECKPOINT_FORMAT_VERSION};
pub use model::{
    EmTrace, InputAttention, InputAttentionGrads, LdeNetModel, ModelGrads, ModelSpec, Readout,
    DIVERGENCE_BOUND,
};
pub use predict::{alpha_sweep, predict, AlphaSweepRow, Prediction, MAX_DISCARD_FRACTION};
pub use train::{
    clip_gradients, make_ood, make_ood_per_feature, train, train_model, EpochStats, HorizonDataset, TrainConfig,
    TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable_rng::RngStream;

/// Driving noise of the EM chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Levy,
    /// α = 2, i.e. Gaussian increments with variance `2Δt`.
    Brownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Total pseudo-time of the chain.
    pub horizon_time: f64,
    pub steps: usize,
    pub alpha: f64,
    pub n_paths: usize,
    /// Optional symmetric clip on raw stable draws.
    pub clip: Option<f64>,
    pub noise: NoiseKind,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            horizon_time: 1.0,
            steps: 4,
            alpha: 1.5,
            n_paths: 1000,
            clip: None,
            noise: NoiseKind::Levy,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_time > 0.0 && self.horizon_time.is_finite()) {
            return Err(Error::invalid("integration time must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("at least one EM sub-step is required"));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        if self.noise == NoiseKind::Levy && !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (1, 2), got {}",
                self.alpha
            )));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::invalid("clip threshold must be positive"));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon_time / self.steps as f64
    }

    /// Stability index actually used for sampling.
    pub fn noise_alpha(&self) -> f64 {
        match self.noise {
            NoiseKind::Levy => self.alpha,
            NoiseKind::Brownian => 2.0,
        }
    }
}

/// Affine map between data units and the model's working units, fitted on
/// the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    MinMax { min: f64, max: f64 },
    ZScore { mean: f64, std: f64 },
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization::ZScore { mean: 0.0, std: 1.0 }
    }

    fn offset_scale(&self) -> (f64, f64) {
        match *self {
            Normalization::MinMax { min, max } => (min, max - min),
            Normalization::ZScore { mean, std } => (mean, std),
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        let (o, s) = self.offset_scale();
        (v - o) / s
    }

    pub fn inverse(&self, v: f64) -> f64 {
        let (o, s) = self.offset_scale();
        v * s + o
    }

    /// Factor converting a normalized variance back to data units.
    pub fn variance_scale(&self) -> f64 {
        let (_, s) = self.offset_scale();
        s * s
    }
}

/// Result of one sampled EM chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EmPath {
    pub terminal: Vec<f64>,
    /// `x_0, …, x_N`.
    pub path: Vec<Vec<f64>>,
    /// Scaled increments `Δt^{1/α} L_k`, row-major `N × d`.
    pub increments: Vec<f64>,
}

/// Samples one EM chain from input `x`.
pub fn em_forward(model: &LdeNetModel, x: &[f64], rng: &mut RngStream) -> Result<EmPath> {
    let increments = model.draw_increments(rng)?;
    em_with_increments(model, x, &increments)
}

/// EM chain with caller-supplied increments.
pub fn em_with_increments(model: &LdeNetModel, x: &[f64], increments: &[f64]) -> Result<EmPath> {
    let trace = model.trace(x, increments)?;
    Ok(EmPath {
        terminal: trace.terminal().to_vec(),
        path: trace.states,
        increments: trace.increments,
    })
}

/// Sigmoid output of the diffusion net at the initial state built from `x`.
pub fn diffusion_score(model: &LdeNetModel, x: &[f64]) -> Result<f64> {
    Ok(model::sigmoid(model.diffusion_logit_of(x)?))
}

/// Inputs, regression labels and perturbed out-of-distribution copies.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub ood_inputs: Vec<Vec<f64>>,
}

impl TrainBatch {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::invalid("batch is empty"));
        }
        if self.inputs.len() != self.labels.len() || self.inputs.len() != self.ood_inputs.len() {
            return Err(Error::shape(format!(
                "batch sizes differ: {} inputs, {} labels, {} ood inputs",
                self.inputs.len(),
                self.labels.len(),
                self.ood_inputs.len()
            )));
        }
        Ok(())
    }
}

/// Loss value broken into its three terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub regression: f64,
    pub in_distribution: f64,
    pub out_of_distribution: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.regression + self.in_distribution + self.out_of_distribution
    }
}

/// Loss and gradients with the given increments (one `N × d` block per input).
///
/// `L = mean (readout(x_N) - y)² + mean BCE(score(x_0), 0) + mean BCE(score(x̃_0), 1)`.
pub fn loss_with_increments(
    model: &LdeNetModel,
    batch: &TrainBatch,
    increments: &[Vec<f64>],
) -> Result<(LossParts, ModelGrads)> {
    batch.validate()?;
    if increments.len() != batch.inputs.len() {
        return Err(Error::shape("one increment block per input is required"));
    }
    let w = 1.0 / batch.inputs.len() as f64;
    let mut grads = model.zero_grads();
    let mut parts = LossParts {
        regression: 0.0,
        in_distribution: 0.0,
        out_of_distribution: 0.0,
    };
    for ((x, &y), eta) in batch.inputs.iter().zip(&batch.labels).zip(increments) {
        let trace = model.trace(x, eta)?;
        let r = model.readout.apply(trace.terminal());
        parts.regression += w * (r - y) * (r - y);
        parts.in_distribution += w * model::softplus(trace.diffusion_logit);
        model.backward_regression(&trace, y, w, w, &mut grads);
    }
    for x in &batch.ood_inputs {
        parts.out_of_distribution += w * model.backward_ood(x, w, &mut grads)?;
    }
    Ok((parts, grads))
}

/// Samples fresh increments from `rng` and evaluates the loss.
pub fn loss_total(model: &LdeNetModel, batch: &TrainBatch, rng: &mut RngStream) -> Result<(f64, ModelGrads)> {
    batch.validate()?;
    let increments = batch
        .inputs
        .iter()
        .map(|_| model.draw_increments(rng))
        .collect::<Result<Vec<_>>>()?;
    let (parts, grads) = loss_with_increments(model, batch, &increments)?;
    Ok((parts.total(), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::EmbeddingSpec;
    use crate::neural::{Activation, MlpParams};

    fn zero_model(d: usize, steps: usize) -> LdeNetModel {
        LdeNetModel {
            drift: vec![MlpParams::zeros(d, 3, d, Activation::Relu)],
            diffusion: MlpParams::zeros(d, 3, 1, Activation::Relu),
            readout: Readout::zeros(d),
            attention: None,
            integrator: IntegratorConfig {
                steps,
                ..IntegratorConfig::default()
            },
            horizon: 1,
            embedding: EmbeddingSpec { tau: 1, m: d },
            normalization: Normalization::identity(),
        }
    }

    /// Drift `f(x) = -x` realised exactly with ReLU: `-relu(x) + relu(-x)`.
    fn negative_identity_drift() -> MlpParams {
        let mut p = MlpParams::zeros(1, 2, 1, Activation::Relu);
        p.inner = vec![1.0, -1.0];
        p.outer = vec![-1.0, 1.0];
        p
    }

    #[test]
    fn zero_noise_gives_euler() {
        let mut model = zero_model(1, 4);
        model.drift = vec![negative_identity_drift()];
        let path = em_with_increments(&model, &[1.0], &[0.0; 4]).unwrap();
        assert!((path.terminal[0] - 0.75_f64.powi(4)).abs() < 1e-15);
        assert_eq!(path.path.len(), 5);
    }

    #[test]
    fn single_step_matches_definition() {
        let mut model = zero_model(1, 1);
        model.drift = vec![negative_identity_drift()];
        let eta = 0.3;
        let path = em_with_increments(&model, &[2.0], &[eta]).unwrap();
        assert!((path.terminal[0] - (2.0 - 2.0 + 0.5 * eta)).abs() < 1e-15);
    }

    #[test]
    fn zero_diffusion_params_score_half() {
        let model = zero_model(3, 4);
        for x in [[0.0, 0.0, 0.0], [5.0, -2.0, 1e3]] {
            assert_eq!(diffusion_score(&model, &x).unwrap(), 0.5);
        }
    }

    #[test]
    fn all_zero_model_loss() {
        let model = zero_model(2, 4);
        let batch = TrainBatch {
            inputs: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
            labels: vec![0.5, 0.5],
            ood_inputs: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        let mut rng = RngStream::new(1, 0);
        let (loss, _) = loss_total(&model, &batch, &mut rng).unwrap();
        assert!((loss - (0.25 + 2.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn divergence_reports_step() {
        let model = zero_model(1, 4);
        let err = em_with_increments(&model, &[0.0], &[0.0, f64::INFINITY, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 2 }));
    }

    #[test]
    fn integrator_rejects_bad_alpha() {
        for alpha in [1.0, 2.0, 0.5] {
            let cfg = IntegratorConfig {
                alpha,
                ..IntegratorConfig::default()
            };
            assert!(cfg.validate().is_err());
        }
        let brownian = IntegratorConfig {
            alpha: 2.0,
            noise: NoiseKind::Brownian,
            ..IntegratorConfig::default()
        };
        assert!(brownian.validate().is_ok());
    }

    #[test]
    fn dt_times_steps_is_total_time() {
        let cfg = IntegratorConfig::default();
        assert_eq!(cfg.dt() * cfg.steps as f64, cfg.horizon_time);
    }

    #[test]
    fn normalization_round_trips() {
        for n in [
            Normalization::MinMax { min: -3.0, max: 5.0 },
            Normalization::ZScore { mean: 2.0, std: 0.5 },
        ] {
            for v in [-3.0, 0.0, 1.25, 5.0] {
                assert!((n.inverse(n.forward(v)) - v).abs() < 1e-12);
            }
        }
        let mm = Normalization::MinMax { min: 2.0, max: 6.0 };
        assert_eq!(mm.forward(2.0), 0.0);
        assert_eq!(mm.forward(6.0), 1.0);
    }
}
