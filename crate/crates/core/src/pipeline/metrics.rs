use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::supervised::SupervisedPairs;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub horizon: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// MSE, RMSE and MAE of `predictions` against `truths`; horizon left at 0.
pub fn metrics(predictions: &[f64], truths: &[f64]) -> Result<MetricsRow> {
    if predictions.len() != truths.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = predictions.len() as f64;
    let (se, ae) = predictions
        .iter()
        .zip(truths)
        .fold((0.0, 0.0), |(se, ae), (p, t)| (se + (p - t) * (p - t), ae + (p - t).abs()));
    let mse = se / n;
    Ok(MetricsRow {
        horizon: 0,
        mse,
        rmse: mse.sqrt(),
        mae: ae / n,
    })
}

impl MetricsRow {
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Predicts `x_{t+h}` by `x_t`, the last input coordinate.
pub fn baseline_persistence(pairs: &SupervisedPairs) -> Result<MetricsRow> {
    let preds: Vec<f64> = pairs
        .inputs
        .iter()
        .map(|x| *x.last().expect("inputs are non-empty"))
        .collect();
    Ok(metrics(&preds, &pairs.labels)?.with_horizon(pairs.horizon))
}

/// `x_t = c + Σ_j φ_j x_{t-j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub intercept: f64,
    /// `φ_1, …, φ_p`.
    pub coefficients: Vec<f64>,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Iterated `steps`-ahead forecast from `history` (oldest first).
    pub fn forecast(&self, history: &[f64], steps: usize) -> f64 {
        let p = self.order();
        let mut window: Vec<f64> = history[history.len() - p..].to_vec();
        let mut next = window[p - 1];
        for _ in 0..steps {
            next = self.intercept
                + self
                    .coefficients
                    .iter()
                    .enumerate()
                    .map(|(j, phi)| phi * window[p - 1 - j])
                    .sum::<f64>();
            window.remove(0);
            window.push(next);
        }
        next
    }
}

/// Least-squares AR(p) fit with intercept.
pub fn fit_ar(series: &[f64], p: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::invalid("AR order must be at least 1"));
    }
    let rows = series.len().saturating_sub(p);
    if rows < p + 1 {
        return Err(Error::InsufficientData {
            needed: 2 * p + 1,
            got: series.len(),
        });
    }
    let x = DMatrix::from_fn(rows, p + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            series[r + p - c]
        }
    });
    let y = DVector::from_iterator(rows, series[p..].iter().copied());
    let svd = x.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    if svd.rank(tol) < p + 1 {
        return Err(Error::Rank);
    }
    let beta = svd.solve(&y, tol).map_err(|_| Error::Rank)?;
    Ok(ArModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

/// Fits AR(p) on `train` and forecasts each pair's label from the most
/// recent `p` values of `series` up to the pair's input end.
pub fn baseline_ar(train: &[f64], series: &[f64], pairs: &SupervisedPairs, p: usize) -> Result<MetricsRow> {
    let model = fit_ar(train, p)?;
    let h = pairs.horizon;
    let mut preds = Vec::with_capacity(pairs.len());
    let mut truths = Vec::with_capacity(pairs.len());
    for (&li, &y) in pairs.label_index.iter().zip(&pairs.labels) {
        let end = li - h;
        if end + 1 < p {
            continue;
        }
        preds.push(model.forecast(&series[..=end], h));
        truths.push(y);
    }
    Ok(metrics(&preds, &truths)?.with_horizon(h))
}

/// Per-horizon errors and how linearly they grow with the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSweep {
    pub rows: Vec<MetricsRow>,
    /// Pearson correlation between MSE and horizon.
    pub pearson: f64,
    pub slope: f64,
    pub intercept: f64,
}

pub fn horizon_sweep(rows: &[MetricsRow]) -> Result<HorizonSweep> {
    if rows.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: rows.len(),
        });
    }
    let h: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
    let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let fit = stats::fit_line(&h, &mse);
    Ok(HorizonSweep {
        rows: rows.to_vec(),
        pearson: stats::pearson(&h, &mse),
        slope: fit.slope,
        intercept: fit.intercept,
    })
}
