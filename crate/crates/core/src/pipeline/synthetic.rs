use serde::{Deserialize, Serialize};

use super::data::SeriesDataset;
use crate::error::{Error, Result};
use crate::stable_rng::{RngStream, StableSampler};

const BURN_IN: usize = 200;

/// `x_{t+1} = φ·x_t + scale·L_t` with `L_t ~ S_α(1, 0, 0)` i.i.d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub coefficient: f64,
    pub alpha: f64,
    pub scale: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 3000,
            coefficient: 0.8,
            alpha: 1.5,
            scale: 1.0,
        }
    }
}

/// AR(1) series with α-stable innovations, started from 0 after a burn-in.
pub fn ar1_stable(spec: &SyntheticSpec, rng: &mut RngStream) -> Result<SeriesDataset> {
    if spec.coefficient.abs() >= 1.0 {
        return Err(Error::invalid("AR coefficient must satisfy |phi| < 1"));
    }
    if !(spec.scale > 0.0) {
        return Err(Error::invalid("innovation scale must be positive"));
    }
    let sampler = StableSampler::new(spec.alpha)?;
    let mut x = 0.0;
    let mut values = Vec::with_capacity(spec.n);
    for t in 0..BURN_IN + spec.n {
        x = spec.coefficient * x + spec.scale * sampler.sample(rng);
        if t >= BURN_IN {
            values.push(x);
        }
    }
    SeriesDataset::from_values(values, "synthetic-ar1-stable")
}
