use crate::chaos::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::lde_net::HorizonDataset;

/// Windowed (input, label) pairs with the series index of every label.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedPairs {
    pub horizon: usize,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// Index in the source series of each label.
    pub label_index: Vec<usize>,
}

impl SupervisedPairs {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn into_dataset(self) -> HorizonDataset {
        HorizonDataset {
            horizon: self.horizon,
            inputs: self.inputs,
            labels: self.labels,
        }
    }
}

/// Input `(x_{t-(m-1)τ}, …, x_t)`, label `x_{t+h}`, for every `t` with a full
/// window and an available label.
pub fn make_supervised(series: &[f64], embedding: EmbeddingSpec, horizon: usize) -> Result<SupervisedPairs> {
    if embedding.tau == 0 || embedding.m == 0 {
        return Err(Error::invalid("embedding tau and m must be at least 1"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let first_end = embedding.span();
    let needed = first_end + horizon + 1;
    if series.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: series.len(),
        });
    }
    let mut pairs = SupervisedPairs {
        horizon,
        inputs: Vec::new(),
        labels: Vec::new(),
        label_index: Vec::new(),
    };
    for t in first_end..series.len() - horizon {
        let input: Vec<f64> = (0..embedding.m)
            .map(|j| series[t - (embedding.m - 1 - j) * embedding.tau])
            .collect();
        let label = t + horizon;
        assert!(t < label, "look-ahead in supervised pair");
        pairs.inputs.push(input);
        pairs.labels.push(series[label]);
        pairs.label_index.push(label);
    }
    Ok(pairs)
}
