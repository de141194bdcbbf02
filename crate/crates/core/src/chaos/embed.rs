use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delay `tau` (samples) and embedding dimension `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub tau: usize,
    pub m: usize,
}

impl EmbeddingSpec {
    pub fn new(tau: usize, m: usize) -> Result<Self> {
        if tau == 0 || m == 0 {
            return Err(Error::invalid(format!(
                "embedding needs tau >= 1 and m >= 1, got tau={tau}, m={m}"
            )));
        }
        Ok(Self { tau, m })
    }

    /// Span of one embedded vector, `(m - 1)·τ`.
    pub fn span(&self) -> usize {
        (self.m - 1) * self.tau
    }

    /// Number of vectors a series of length `n` produces.
    pub fn vector_count(&self, n: usize) -> usize {
        n.saturating_sub(self.span())
    }
}

/// Vector `i` is `(x_i, x_{i+τ}, …, x_{i+(m-1)τ})`.
pub fn delay_embed(series: &[f64], spec: EmbeddingSpec) -> Result<Vec<Vec<f64>>> {
    let spec = EmbeddingSpec::new(spec.tau, spec.m)?;
    let needed = spec.span() + 1;
    if series.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: series.len(),
        });
    }
    Ok((0..spec.vector_count(series.len()))
        .map(|i| (0..spec.m).map(|k| series[i + k * spec.tau]).collect())
        .collect())
}
