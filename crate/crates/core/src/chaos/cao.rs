use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{delay_embed, EmbeddingSpec};
use super::neighbors::{NeighborIndex, Norm};
use crate::error::{Error, Result};

pub const DEFAULT_SATURATION_TOL: f64 = 0.02;
pub const DEFAULT_E2_BAND: f64 = 0.1;

/// Neighbours closer than this are treated as coincident and skipped.
const COINCIDENT: f64 = 1e-12;

/// Cao's curves for `m = 1..=m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaoCurves {
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    /// Embedding dimension chosen by E1 saturation, if it saturated.
    pub selected_m: Option<usize>,
    /// True when some `E2(m)` leaves the band around 1.
    pub deterministic: bool,
}

impl CaoCurves {
    pub fn m_max(&self) -> usize {
        self.e1.len()
    }

    /// Largest `|E2(m) - 1|` over the computed dimensions.
    pub fn max_e2_deviation(&self) -> f64 {
        self.e2.iter().fold(0.0_f64, |acc, v| acc.max((v - 1.0).abs()))
    }

    /// Determinism verdict for a custom E2 band.
    pub fn deterministic_with_band(&self, band: f64) -> bool {
        self.e2.iter().any(|v| (v - 1.0).abs() > band)
    }
}

/// `E(m)` and `E*(m)` for a single dimension.
fn cao_means(series: &[f64], tau: usize, m: usize) -> Result<(f64, f64)> {
    let count = series.len() - m * tau;
    let points = delay_embed(&series[..count + (m - 1) * tau], EmbeddingSpec { tau, m })?;
    debug_assert_eq!(points.len(), count);
    let index = NeighborIndex::new(&points, Norm::Max);
    let per_point: Vec<Option<(f64, f64)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let nb = index.nearest(i, COINCIDENT, |_| true)?;
            let next = (series[i + m * tau] - series[nb.index + m * tau]).abs();
            Some((nb.dist.max(next) / nb.dist, next))
        })
        .collect();
    let mut a_sum = 0.0;
    let mut star_sum = 0.0;
    for (i, v) in per_point.into_iter().enumerate() {
        let (a, s) = v.ok_or(Error::DegenerateGeometry { step: i })?;
        a_sum += a;
        star_sum += s;
    }
    Ok((a_sum / count as f64, star_sum / count as f64))
}

/// Cao's E1 and E2 curves with maximum-norm nearest neighbours.
///
/// For each dimension `m` the nearest neighbour `n(i, m)` of every embedded
/// point is found once; `a(i, m)` compares the distance after appending the
/// next delayed coordinate to the distance before. `E1(m) = E(m+1)/E(m)`
/// saturates once the attractor is unfolded, and `E2(m) = E*(m+1)/E*(m)` stays
/// at 1 for every `m` only for a random series.
pub fn cao_curves(series: &[f64], tau: usize, m_max: usize) -> Result<CaoCurves> {
    if tau == 0 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    if m_max < 2 {
        return Err(Error::invalid(format!("m_max must be at least 2, got {m_max}")));
    }
    let needed = (m_max + 1) * tau + 2;
    if series.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: series.len(),
        });
    }
    let mut e = Vec::with_capacity(m_max + 1);
    let mut e_star = Vec::with_capacity(m_max + 1);
    for m in 1..=m_max + 1 {
        let (a, s) = cao_means(series, tau, m)?;
        e.push(a);
        e_star.push(s);
    }
    if e_star.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateGeometry { step: 0 });
    }
    let e1: Vec<f64> = e.windows(2).map(|w| w[1] / w[0]).collect();
    let e2: Vec<f64> = e_star.windows(2).map(|w| w[1] / w[0]).collect();
    let deterministic = e2.iter().any(|v| (v - 1.0).abs() > DEFAULT_E2_BAND);
    let mut curves = CaoCurves {
        e1,
        e2,
        selected_m: None,
        deterministic,
    };
    curves.selected_m = select_embedding_dim(&curves, DEFAULT_SATURATION_TOL).ok();
    Ok(curves)
}

/// Smallest `m` after which every successive E1 change stays below
/// `saturation_tol`; returns `m + 1`.
pub fn select_embedding_dim(curves: &CaoCurves, saturation_tol: f64) -> Result<usize> {
    let e1 = &curves.e1;
    if e1.is_empty() {
        return Err(Error::invalid("empty E1 curve"));
    }
    let diffs: Vec<f64> = e1.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    // diffs[k] is |E1(k+2) - E1(k+1)|; find the first k whose tail is all flat.
    let mut first_flat = None;
    for k in (0..diffs.len()).rev() {
        if diffs[k] < saturation_tol {
            first_flat = Some(k);
        } else {
            break;
        }
    }
    match first_flat {
        Some(k) => Ok(k + 2),
        None => Err(Error::NoSaturation {
            m_max: curves.m_max(),
        }),
    }
}
