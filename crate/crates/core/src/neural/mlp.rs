use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::stable_rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative; the ReLU kink at exactly zero takes subgradient 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Two-layer network `f(x) = Σ_k ã_k σ(b_kᵀ x + c_k)`.
///
/// `outer` holds `ã_k` row-major (`width × output_dim`), `inner` holds `b_k`
/// row-major (`width × input_dim`) and `bias` holds `c_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input_dim: usize,
    pub width: usize,
    pub output_dim: usize,
    pub outer: Vec<f64>,
    pub inner: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Gradient of a scalar with respect to every [`MlpParams`] entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGrads {
    pub outer: Vec<f64>,
    pub inner: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Hidden-layer values retained from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input_dim: usize, width: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            width,
            output_dim,
            outer: vec![0.0; width * output_dim],
            inner: vec![0.0; width * input_dim],
            bias: vec![0.0; width],
            activation,
        }
    }

    /// Mean-field initialisation: outer weights with standard deviation
    /// `1/width`, inner weights uniform in `[-1/√d, 1/√d]`, zero biases.
    pub fn init(
        input_dim: usize,
        width: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let mut p = Self::zeros(input_dim, width, output_dim, activation);
        let outer_std = 1.0 / width as f64;
        for w in &mut p.outer {
            *w = outer_std * rng.normal();
        }
        let bound = 1.0 / (input_dim as f64).sqrt();
        for w in &mut p.inner {
            *w = bound * (2.0 * rng.open01() - 1.0);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer.len() != self.width * self.output_dim
            || self.inner.len() != self.width * self.input_dim
            || self.bias.len() != self.width
        {
            return Err(Error::shape(format!(
                "parameter arrays inconsistent with width {} ({}x{} -> {})",
                self.width, self.input_dim, self.width, self.output_dim
            )));
        }
        if self.blocks().iter().any(|(_, b)| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            outer: vec![0.0; self.outer.len()],
            inner: vec![0.0; self.inner.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "network expects input of length {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Forward pass writing the output into `out` and keeping the hidden layer.
    pub fn forward_into(&self, x: &[f64], cache: &mut MlpCache, out: &mut [f64]) {
        let d = self.input_dim;
        cache.pre.resize(self.width, 0.0);
        cache.hidden.resize(self.width, 0.0);
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..self.width {
            let row = &self.inner[k * d..(k + 1) * d];
            let z = row.iter().zip(x).map(|(b, xi)| b * xi).sum::<f64>() + self.bias[k];
            let h = self.activation.apply(z);
            cache.pre[k] = z;
            cache.hidden[k] = h;
            let a = &self.outer[k * self.output_dim..(k + 1) * self.output_dim];
            for (o, ak) in out.iter_mut().zip(a) {
                *o += ak * h;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        self.check_input(x)?;
        let mut cache = MlpCache {
            pre: Vec::new(),
            hidden: Vec::new(),
        };
        let mut out = vec![0.0; self.output_dim];
        self.forward_into(x, &mut cache, &mut out);
        Ok((out, cache))
    }

    /// Accumulates the gradients of `upstreamᵀ f(x)` into `grads` and `dx`.
    pub fn backward_into(
        &self,
        x: &[f64],
        cache: &MlpCache,
        upstream: &[f64],
        grads: &mut MlpGrads,
        dx: &mut [f64],
    ) {
        let d = self.input_dim;
        let o = self.output_dim;
        for k in 0..self.width {
            let a = &self.outer[k * o..(k + 1) * o];
            let mut dh = 0.0;
            for j in 0..o {
                grads.outer[k * o + j] += upstream[j] * cache.hidden[k];
                dh += upstream[j] * a[j];
            }
            let dz = dh * self.activation.derivative(cache.pre[k]);
            if dz == 0.0 {
                continue;
            }
            grads.bias[k] += dz;
            let row = &self.inner[k * d..(k + 1) * d];
            let grow = &mut grads.inner[k * d..(k + 1) * d];
            for i in 0..d {
                grow[i] += dz * x[i];
                dx[i] += dz * row[i];
            }
        }
    }

    /// Scales every parameter by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        let mut p = self.clone();
        for (_, b) in p.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= t);
        }
        p
    }
}

impl Parameters for MlpParams {
    fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("outer", &self.outer),
            ("inner", &self.inner),
            ("bias", &self.bias),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("outer", &mut self.outer),
            ("inner", &mut self.inner),
            ("bias", &mut self.bias),
        ]
    }
}

impl Parameters for MlpGrads {
    fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("outer", &self.outer),
            ("inner", &self.inner),
            ("bias", &self.bias),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("outer", &mut self.outer),
            ("inner", &mut self.inner),
            ("bias", &mut self.bias),
        ]
    }
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(params.forward(x)?.0)
}

/// Exact gradients of `upstreamᵀ · f(x)` with respect to the parameters and `x`.
pub fn mlp_backward(params: &MlpParams, x: &[f64], upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
    if upstream.len() != params.output_dim {
        return Err(Error::shape(format!(
            "upstream gradient has length {}, network output is {}",
            upstream.len(),
            params.output_dim
        )));
    }
    let (_, cache) = params.forward(x)?;
    let mut grads = params.zero_grads();
    let mut dx = vec![0.0; params.input_dim];
    params.backward_into(x, &cache, upstream, &mut grads, &mut dx);
    Ok((grads, dx))
}

/// `Σ_k ‖ã_k‖₁ (‖b_k‖₁ + |c_k|)`.
pub fn path_norm(params: &MlpParams) -> f64 {
    let (d, o) = (params.input_dim, params.output_dim);
    (0..params.width)
        .map(|k| {
            let a: f64 = params.outer[k * o..(k + 1) * o].iter().map(|v| v.abs()).sum();
            let b: f64 = params.inner[k * d..(k + 1) * d].iter().map(|v| v.abs()).sum();
            a * (b + params.bias[k].abs())
        })
        .sum()
}
