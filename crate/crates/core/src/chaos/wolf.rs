use serde::{Deserialize, Serialize};

use super::embed::{delay_embed, EmbeddingSpec};
use super::neighbors::{Neighbor, NeighborIndex, Norm};
use crate::error::{Error, Result};

/// Default critical distance as a fraction of the attractor diameter.
pub const DEFAULT_EPS_FRACTION: f64 = 0.1;

/// Replacement neighbours are preferred when their separation vector lies
/// within this angle of the evolved one.
const MAX_REPLACEMENT_ANGLE_DEG: f64 = 30.0;

const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Maximum Lyapunov exponent in nats per sample.
    pub lambda: f64,
    /// `floor(1 / lambda)` when the series is chaotic.
    pub lyapunov_time: Option<u64>,
    /// Number of replacement periods `M`.
    pub iterations: usize,
    pub chaotic: bool,
}

/// Largest Euclidean distance between two embedded points.
pub fn attractor_diameter(points: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d = d.max(Norm::Euclidean.distance(a, b));
        }
    }
    d
}

/// Safe prediction horizon `floor(1 / lambda)` in samples.
pub fn lyapunov_time(lambda: f64) -> Result<u64> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok((1.0 / lambda).floor() as u64)
    } else {
        Err(Error::NotChaotic { lambda })
    }
}

/// Wolf orbit-tracking estimate of the maximum Lyapunov exponent.
///
/// A fiducial trajectory and its nearest neighbour are evolved together until
/// their separation exceeds `eps`. The log stretch of that period is
/// accumulated, and the neighbour is replaced by a point within `eps` whose
/// separation vector best preserves the evolved direction. Neighbours closer
/// in time than `theiler` samples are never used. The exponent is the total
/// log stretch divided by the elapsed number of samples.
pub fn max_lyapunov_wolf(
    series: &[f64],
    spec: EmbeddingSpec,
    eps: f64,
    theiler: usize,
) -> Result<LyapunovReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let points = delay_embed(series, spec)?;
    let n = points.len();
    if n < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS + spec.span(),
            got: series.len(),
        });
    }
    let index = NeighborIndex::new(&points, Norm::Euclidean);
    let usable = |fid: usize| move |j: usize| j.abs_diff(fid) > theiler && j + 1 < n;
    let cos_limit = MAX_REPLACEMENT_ANGLE_DEG.to_radians().cos();

    let first = index
        .nearest(0, f64::MIN_POSITIVE, usable(0))
        .ok_or(Error::DegenerateGeometry { step: 0 })?;
    let mut fid = 0usize;
    let mut nb = first.index;
    let mut start_len = first.dist;
    let mut log_stretch = 0.0;
    let mut iterations = 0usize;

    while fid + 1 < n && nb + 1 < n {
        let mut k = 0;
        let evolved = loop {
            k += 1;
            let len = index.distance(fid + k, nb + k);
            if len > eps || fid + k + 1 >= n || nb + k + 1 >= n {
                break len;
            }
        };
        if !(evolved > 0.0) {
            return Err(Error::DegenerateGeometry { step: iterations });
        }
        log_stretch += (evolved / start_len).ln();
        iterations += 1;
        let evolved_dir: Vec<f64> = points[nb + k]
            .iter()
            .zip(&points[fid + k])
            .map(|(a, b)| a - b)
            .collect();
        fid += k;
        if fid + 1 >= n {
            break;
        }

        let candidates = index.within(fid, eps, f64::MIN_POSITIVE, usable(fid));
        let replacement = best_aligned(&candidates, &points, fid, &evolved_dir, cos_limit)
            .or_else(|| {
                candidates
                    .iter()
                    .copied()
                    .min_by(|a, b| a.dist.total_cmp(&b.dist).then(a.index.cmp(&b.index)))
            })
            .or_else(|| index.nearest(fid, f64::MIN_POSITIVE, usable(fid)))
            .ok_or(Error::DegenerateGeometry { step: iterations })?;
        nb = replacement.index;
        start_len = replacement.dist;
    }

    if iterations == 0 || fid == 0 {
        return Err(Error::DegenerateGeometry { step: iterations });
    }
    let lambda = log_stretch / fid as f64;
    let chaotic = lambda > 0.0;
    Ok(LyapunovReport {
        lambda,
        lyapunov_time: if chaotic { lyapunov_time(lambda).ok() } else { None },
        iterations,
        chaotic,
    })
}

/// Candidate whose separation from the fiducial point makes the smallest
/// angle with `dir`, provided the angle is within the limit.
fn best_aligned(
    candidates: &[Neighbor],
    points: &[Vec<f64>],
    fid: usize,
    dir: &[f64],
    cos_limit: f64,
) -> Option<Neighbor> {
    let dir_norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dir_norm == 0.0 {
        return None;
    }
    let mut best: Option<(f64, Neighbor)> = None;
    for c in candidates {
        let dot: f64 = points[c.index]
            .iter()
            .zip(&points[fid])
            .zip(dir)
            .map(|((a, b), d)| (a - b) * d)
            .sum();
        let cos = dot / (c.dist * dir_norm);
        if cos >= cos_limit && best.is_none_or(|(bc, _)| cos > bc) {
            best = Some((cos, *c));
        }
    }
    best.map(|(_, c)| c)
}
