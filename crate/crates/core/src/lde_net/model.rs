use serde::{Deserialize, Serialize};

use super::{IntegratorConfig, Normalization};
use crate::chaos::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::neural::{Activation, AttentionBlock, AttentionGrads, MlpCache, MlpGrads, MlpParams, Parameters};
use crate::stable_rng::{RngStream, StableSampler};

/// States beyond this magnitude count as numerical blow-up.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Affine head `wᵀx + b` mapping the terminal state to a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Readout {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Attention over the input window. Each scalar `x_i` of the embedded input
/// becomes the token `x_i·lift + position_i`; the attended vector is added to
/// the input to form the initial state of the EM chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputAttention {
    pub block: AttentionBlock,
    pub lift: Vec<f64>,
    /// Row-major `d × d`; row `i` is the embedding of window position `i`.
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputAttentionGrads {
    pub block: AttentionGrads,
    pub lift: Vec<f64>,
    pub position: Vec<f64>,
}

impl InputAttention {
    pub fn init(dim: usize, rng: &mut RngStream) -> Self {
        let block = AttentionBlock::init(dim, 0.5, rng);
        let lift = (0..dim).map(|_| 0.1 * rng.normal()).collect();
        let position = (0..dim * dim).map(|_| 0.1 * rng.normal()).collect();
        Self {
            block,
            lift,
            position,
        }
    }

    pub fn tokens(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.lift.len();
        x.iter()
            .enumerate()
            .map(|(i, xi)| {
                (0..d)
                    .map(|c| xi * self.lift[c] + self.position[i * d + c])
                    .collect()
            })
            .collect()
    }

    fn zero_grads(&self) -> InputAttentionGrads {
        InputAttentionGrads {
            block: self.block.zero_grads(),
            lift: vec![0.0; self.lift.len()],
            position: vec![0.0; self.position.len()],
        }
    }
}

/// One horizon's LDE-Net: drift and diffusion networks composed by `N`
/// Euler–Maruyama sub-steps, an affine readout, and optional input attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdeNetModel {
    /// One shared drift net, or one per sub-step.
    pub drift: Vec<MlpParams>,
    /// Scalar-output net; its sigmoid is the diffusion coefficient.
    pub diffusion: MlpParams,
    pub readout: Readout,
    pub attention: Option<InputAttention>,
    pub integrator: IntegratorConfig,
    pub horizon: usize,
    pub embedding: EmbeddingSpec,
    pub normalization: Normalization,
}

/// Architecture choices for freshly initialised models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub drift_width: usize,
    pub diffusion_width: usize,
    pub activation: Activation,
    pub attention: bool,
    pub per_step_drift: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            drift_width: 32,
            diffusion_width: 32,
            activation: Activation::Relu,
            attention: false,
            per_step_drift: false,
        }
    }
}

/// Gradients for every trainable block of an [`LdeNetModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub drift: Vec<MlpGrads>,
    pub diffusion: MlpGrads,
    pub readout: Readout,
    pub attention: Option<InputAttentionGrads>,
}

/// Everything recorded along one EM chain; enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct EmTrace {
    pub input: Vec<f64>,
    pub tokens: Option<Vec<Vec<f64>>>,
    /// Initial state `x_0` (the input after the optional attention block).
    pub x0: Vec<f64>,
    /// The exact vector the diffusion net was evaluated on.
    pub diffusion_input: Vec<f64>,
    pub diffusion_logit: f64,
    pub diffusion: f64,
    diffusion_cache: MlpCache,
    /// `x_0, …, x_N`.
    pub states: Vec<Vec<f64>>,
    drift_caches: Vec<MlpCache>,
    /// Scaled increments `Δt^{1/α} L_k`, row-major `N × d`.
    pub increments: Vec<f64>,
}

impl EmTrace {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trace holds at least x_0")
    }
}

impl LdeNetModel {
    pub fn init(
        spec: &ModelSpec,
        integrator: IntegratorConfig,
        embedding: EmbeddingSpec,
        horizon: usize,
        normalization: Normalization,
        rng: &mut RngStream,
    ) -> Result<Self> {
        integrator.validate()?;
        if spec.drift_width == 0 || spec.diffusion_width == 0 {
            return Err(Error::invalid("network widths must be positive"));
        }
        let d = embedding.m;
        let n_drift = if spec.per_step_drift { integrator.steps } else { 1 };
        let drift = (0..n_drift)
            .map(|_| MlpParams::init(d, spec.drift_width, d, spec.activation, rng))
            .collect();
        let diffusion = MlpParams::init(d, spec.diffusion_width, 1, spec.activation, rng);
        let readout = Readout {
            weights: (0..d).map(|_| rng.normal() / d as f64).collect(),
            bias: 0.0,
        };
        let attention = spec.attention.then(|| InputAttention::init(d, rng));
        Ok(Self {
            drift,
            diffusion,
            readout,
            attention,
            integrator,
            horizon,
            embedding,
            normalization,
        })
    }

    pub fn dim(&self) -> usize {
        self.embedding.m
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        let d = self.dim();
        if self.drift.is_empty()
            || (self.drift.len() != 1 && self.drift.len() != self.integrator.steps)
        {
            return Err(Error::shape(format!(
                "expected 1 or {} drift nets, found {}",
                self.integrator.steps,
                self.drift.len()
            )));
        }
        for net in &self.drift {
            net.validate()?;
            if net.input_dim != d || net.output_dim != d {
                return Err(Error::shape("drift net must map d -> d"));
            }
        }
        self.diffusion.validate()?;
        if self.diffusion.input_dim != d || self.diffusion.output_dim != 1 {
            return Err(Error::shape("diffusion net must map d -> 1"));
        }
        if self.readout.weights.len() != d {
            return Err(Error::shape("readout must map d -> 1"));
        }
        if let Some(att) = &self.attention {
            if att.block.dim != d || att.lift.len() != d || att.position.len() != d * d {
                return Err(Error::shape("attention block dimension differs from d"));
            }
        }
        Ok(())
    }

    fn drift_net(&self, step: usize) -> &MlpParams {
        if self.drift.len() == 1 {
            &self.drift[0]
        } else {
            &self.drift[step]
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "model expects inputs of length {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input contains non-finite values"));
        }
        Ok(())
    }

    /// Initial state of the chain and, with attention, the tokens it used.
    pub fn initial_state(&self, x: &[f64]) -> Result<(Vec<f64>, Option<Vec<Vec<f64>>>)> {
        self.check_input(x)?;
        match &self.attention {
            None => Ok((x.to_vec(), None)),
            Some(att) => {
                let tokens = att.tokens(x);
                let attended = crate::neural::attention_apply(&att.block, &tokens)?;
                let x0 = x.iter().zip(&attended).map(|(a, b)| a + b).collect();
                Ok((x0, Some(tokens)))
            }
        }
    }

    fn diffusion_logit(&self, x0: &[f64]) -> (f64, MlpCache) {
        let mut cache = MlpCache {
            pre: Vec::new(),
            hidden: Vec::new(),
        };
        let mut out = [0.0];
        self.diffusion.forward_into(x0, &mut cache, &mut out);
        (out[0], cache)
    }

    pub fn sampler(&self) -> Result<StableSampler> {
        StableSampler::new(self.integrator.noise_alpha())?.with_clip(self.integrator.clip)
    }

    /// Draws the `N × d` scaled increments for one chain.
    pub fn draw_increments(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        let sampler = self.sampler()?;
        let dt = self.integrator.dt();
        Ok((0..self.integrator.steps * self.dim())
            .map(|_| sampler.increment(dt, rng))
            .collect())
    }

    /// Runs `x_{k+1} = x_k + f(x_k)Δt + g(x_0)·η_k` with the given increments.
    pub fn trace(&self, x: &[f64], increments: &[f64]) -> Result<EmTrace> {
        let d = self.dim();
        let steps = self.integrator.steps;
        if increments.len() != steps * d {
            return Err(Error::shape(format!(
                "expected {} increments, got {}",
                steps * d,
                increments.len()
            )));
        }
        let (x0, tokens) = self.initial_state(x)?;
        let (logit, diffusion_cache) = self.diffusion_logit(&x0);
        let g = sigmoid(logit);
        let dt = self.integrator.dt();
        let mut states = Vec::with_capacity(steps + 1);
        let mut caches = Vec::with_capacity(steps);
        states.push(x0.clone());
        let mut f = vec![0.0; d];
        for k in 0..steps {
            let mut cache = MlpCache {
                pre: Vec::new(),
                hidden: Vec::new(),
            };
            let xk = &states[k];
            self.drift_net(k).forward_into(xk, &mut cache, &mut f);
            let eta = &increments[k * d..(k + 1) * d];
            let next: Vec<f64> = (0..d).map(|i| xk[i] + f[i] * dt + g * eta[i]).collect();
            if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
                return Err(Error::Divergence { step: k + 1 });
            }
            states.push(next);
            caches.push(cache);
        }
        Ok(EmTrace {
            input: x.to_vec(),
            tokens,
            diffusion_input: x0.clone(),
            x0,
            diffusion_logit: logit,
            diffusion: g,
            diffusion_cache,
            states,
            drift_caches: caches,
            increments: increments.to_vec(),
        })
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            drift: self.drift.iter().map(|n| n.zero_grads()).collect(),
            diffusion: self.diffusion.zero_grads(),
            readout: Readout::zeros(self.dim()),
            attention: self.attention.as_ref().map(|a| a.zero_grads()),
        }
    }

    /// Pushes `dx0` (gradient w.r.t. the initial state) back through the
    /// attention block, if any.
    fn backprop_initial(&self, trace_tokens: Option<&Vec<Vec<f64>>>, input: &[f64], dx0: &[f64], grads: &mut ModelGrads) {
        if let (Some(att), Some(tokens), Some(ag)) =
            (&self.attention, trace_tokens, grads.attention.as_mut())
        {
            let d = self.dim();
            let dtokens = att.block.backward_into(tokens, dx0, &mut ag.block);
            for (i, dt) in dtokens.iter().enumerate() {
                for c in 0..d {
                    ag.lift[c] += dt[c] * input[i];
                    ag.position[i * d + c] += dt[c];
                }
            }
        }
    }

    /// Backward pass for `weight·(readout(x_N) - y)² + bce_weight·softplus(z)`
    /// on one trace, accumulating into `grads`.
    pub(crate) fn backward_regression(
        &self,
        trace: &EmTrace,
        label: f64,
        weight: f64,
        bce_weight: f64,
        grads: &mut ModelGrads,
    ) {
        let d = self.dim();
        let dt = self.integrator.dt();
        let xn = trace.terminal();
        let r = self.readout.apply(xn);
        let dr = 2.0 * weight * (r - label);
        for i in 0..d {
            grads.readout.weights[i] += dr * xn[i];
        }
        grads.readout.bias += dr;
        let mut adj: Vec<f64> = self.readout.weights.iter().map(|w| dr * w).collect();
        let mut dg = 0.0;
        let mut upstream = vec![0.0; d];
        let mut dx = vec![0.0; d];
        for k in (0..self.integrator.steps).rev() {
            let eta = &trace.increments[k * d..(k + 1) * d];
            dg += adj.iter().zip(eta).map(|(a, e)| a * e).sum::<f64>();
            for i in 0..d {
                upstream[i] = dt * adj[i];
                dx[i] = 0.0;
            }
            let slot = if self.drift.len() == 1 { 0 } else { k };
            self.drift_net(k).backward_into(
                &trace.states[k],
                &trace.drift_caches[k],
                &upstream,
                &mut grads.drift[slot],
                &mut dx,
            );
            for i in 0..d {
                adj[i] += dx[i];
            }
        }
        let s = trace.diffusion;
        let dz = dg * s * (1.0 - s) + bce_weight * s;
        self.backward_diffusion(trace, dz, &mut adj, grads);
        self.backprop_initial(trace.tokens.as_ref(), &trace.input, &adj, grads);
    }

    fn backward_diffusion(&self, trace: &EmTrace, dz: f64, dx0: &mut [f64], grads: &mut ModelGrads) {
        let mut dx = vec![0.0; self.dim()];
        self.diffusion.backward_into(
            &trace.diffusion_input,
            &trace.diffusion_cache,
            &[dz],
            &mut grads.diffusion,
            &mut dx,
        );
        for (a, b) in dx0.iter_mut().zip(&dx) {
            *a += b;
        }
    }

    /// Backward pass for `weight·softplus(-z)` (BCE with label 1) on an
    /// out-of-distribution input.
    pub(crate) fn backward_ood(&self, x: &[f64], weight: f64, grads: &mut ModelGrads) -> Result<f64> {
        let (x0, tokens) = self.initial_state(x)?;
        let (logit, cache) = self.diffusion_logit(&x0);
        let s = sigmoid(logit);
        let mut dx = vec![0.0; self.dim()];
        self.diffusion
            .backward_into(&x0, &cache, &[weight * (s - 1.0)], &mut grads.diffusion, &mut dx);
        self.backprop_initial(tokens.as_ref(), x, &dx, grads);
        Ok(softplus(-logit))
    }

    pub(crate) fn diffusion_logit_of(&self, x: &[f64]) -> Result<f64> {
        let (x0, _) = self.initial_state(x)?;
        Ok(self.diffusion_logit(&x0).0)
    }
}

fn push_mlp_blocks<'a>(out: &mut Vec<(&'static str, &'a [f64])>, prefix: [&'static str; 3], p: [&'a [f64]; 3]) {
    for (n, b) in prefix.into_iter().zip(p) {
        out.push((n, b));
    }
}

impl Parameters for LdeNetModel {
    fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::new();
        for net in &self.drift {
            push_mlp_blocks(
                &mut out,
                ["drift.outer", "drift.inner", "drift.bias"],
                [&net.outer, &net.inner, &net.bias],
            );
        }
        push_mlp_blocks(
            &mut out,
            ["diffusion.outer", "diffusion.inner", "diffusion.bias"],
            [&self.diffusion.outer, &self.diffusion.inner, &self.diffusion.bias],
        );
        out.push(("readout.weights", &self.readout.weights));
        out.push(("readout.bias", std::slice::from_ref(&self.readout.bias)));
        if let Some(att) = &self.attention {
            out.push(("attention.wq", &att.block.wq));
            out.push(("attention.wk", &att.block.wk));
            out.push(("attention.wv", &att.block.wv));
            out.push(("attention.lift", &att.lift));
            out.push(("attention.position", &att.position));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        for net in &mut self.drift {
            out.push(("drift.outer", &mut net.outer));
            out.push(("drift.inner", &mut net.inner));
            out.push(("drift.bias", &mut net.bias));
        }
        out.push(("diffusion.outer", &mut self.diffusion.outer));
        out.push(("diffusion.inner", &mut self.diffusion.inner));
        out.push(("diffusion.bias", &mut self.diffusion.bias));
        out.push(("readout.weights", &mut self.readout.weights));
        out.push(("readout.bias", std::slice::from_mut(&mut self.readout.bias)));
        if let Some(att) = &mut self.attention {
            out.push(("attention.wq", &mut att.block.wq));
            out.push(("attention.wk", &mut att.block.wk));
            out.push(("attention.wv", &mut att.block.wv));
            out.push(("attention.lift", &mut att.lift));
            out.push(("attention.position", &mut att.position));
        }
        out
    }
}

impl Parameters for ModelGrads {
    fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::new();
        for g in &self.drift {
            push_mlp_blocks(
                &mut out,
                ["drift.outer", "drift.inner", "drift.bias"],
                [&g.outer, &g.inner, &g.bias],
            );
        }
        push_mlp_blocks(
            &mut out,
            ["diffusion.outer", "diffusion.inner", "diffusion.bias"],
            [&self.diffusion.outer, &self.diffusion.inner, &self.diffusion.bias],
        );
        out.push(("readout.weights", &self.readout.weights));
        out.push(("readout.bias", std::slice::from_ref(&self.readout.bias)));
        if let Some(att) = &self.attention {
            out.push(("attention.wq", &att.block.wq));
            out.push(("attention.wk", &att.block.wk));
            out.push(("attention.wv", &att.block.wv));
            out.push(("attention.lift", &att.lift));
            out.push(("attention.position", &att.position));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        for g in &mut self.drift {
            out.push(("drift.outer", &mut g.outer));
            out.push(("drift.inner", &mut g.inner));
            out.push(("drift.bias", &mut g.bias));
        }
        out.push(("diffusion.outer", &mut self.diffusion.outer));
        out.push(("diffusion.inner", &mut self.diffusion.inner));
        out.push(("diffusion.bias", &mut self.diffusion.bias));
        out.push(("readout.weights", &mut self.readout.weights));
        out.push(("readout.bias", std::slice::from_mut(&mut self.readout.bias)));
        if let Some(att) = &mut self.attention {
            out.push(("attention.wq", &mut att.block.wq));
            out.push(("attention.wk", &mut att.block.wk));
            out.push(("attention.wv", &mut att.block.wv));
            out.push(("attention.lift", &mut att.lift));
            out.push(("attention.position", &mut att.position));
        }
        out
    }
}
