//! Symmetric α-stable variates and reproducible random streams.
//!
//! Standard variates `S_α(1, 0, 0)` (characteristic function `exp(-|t|^α)`)
//! are drawn with the Chambers–Mallows–Stuck transform of a uniform angle and
//! a unit exponential. The transform is exact for every `α ∈ (0, 2]`; `α = 2`
//! yields `N(0, 2)` and `α = 1` the standard Cauchy law.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Open01};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Parameters `(α, σ, β, μ)` of a stable law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub alpha: f64,
    pub sigma: f64,
    pub beta: f64,
    pub mu: f64,
}

impl StableParams {
    pub fn new(alpha: f64, sigma: f64, beta: f64, mu: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(beta.abs() <= 1.0) {
            return Err(Error::invalid(format!("|beta| must be <= 1, got {beta}")));
        }
        if !mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        Ok(Self {
            alpha,
            sigma,
            beta,
            mu,
        })
    }

    /// The standard symmetric law `S_α(1, 0, 0)`.
    pub fn standard(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0, 0.0, 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.beta == 0.0
    }

    /// Draws `σ·X + μ` with `X ~ S_α(1, 0, 0)`. Only symmetric laws are sampled.
    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        if !self.is_symmetric() {
            return Err(Error::invalid("only symmetric (beta = 0) stable laws can be sampled"));
        }
        Ok(self.sigma * StableSampler::new(self.alpha)?.sample(rng) + self.mu)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 2], got {alpha}")))
    }
}

/// SplitMix64 finaliser, used to derive child seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded random stream identified by `(seed, stream id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so distinct ids give independent, non-overlapping sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Deterministic child stream; children of distinct `(parent, index)` pairs
    /// never coincide with each other or with the parent.
    pub fn child(&self, index: u64) -> RngStream {
        let seed = mix64(self.seed ^ mix64(self.stream.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RngStream::new(seed, index)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn open01(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    /// Unit exponential.
    pub fn exp1(&mut self) -> f64 {
        -self.open01().ln()
    }

    /// Standard normal via the polar Box–Muller method.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.open01() - 1.0;
            let v = 2.0 * self.open01() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Sampler for `S_α(1, 0, 0)` with constants precomputed for a fixed α.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    alpha: f64,
    inv_alpha: f64,
    tail_exp: f64,
    clip: Option<f64>,
}

impl StableSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            inv_alpha: 1.0 / alpha,
            tail_exp: (1.0 - alpha) / alpha,
            clip: None,
        })
    }

    /// Clamps every standard draw to `[-threshold, threshold]`. Off by default.
    pub fn with_clip(mut self, threshold: Option<f64>) -> Result<Self> {
        if let Some(c) = threshold {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("clip threshold must be positive, got {c}")));
            }
        }
        self.clip = threshold;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let v = (rng.open01() - 0.5) * PI;
        let x = if self.alpha == 1.0 {
            v.tan()
        } else {
            let w = rng.exp1();
            let a = self.alpha;
            (a * v).sin() / v.cos().powf(self.inv_alpha)
                * (((1.0 - a) * v).cos() / w).powf(self.tail_exp)
        };
        match self.clip {
            Some(c) => x.clamp(-c, c),
            None => x,
        }
    }

    /// `dt^{1/α} · L` with `L ~ S_α(1, 0, 0)`.
    pub fn increment(&self, dt: f64, rng: &mut RngStream) -> f64 {
        dt.powf(self.inv_alpha) * self.sample(rng)
    }
}

/// One draw from `S_α(1, 0, 0)`.
pub fn sample_standard(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(StableSampler::new(alpha)?.sample(rng))
}

/// One Euler–Maruyama increment `dt^{1/α} · L`, `L ~ S_α(1, 0, 0)`.
pub fn sample_increment(alpha: f64, dt: f64, rng: &mut RngStream) -> Result<f64> {
    let sampler = StableSampler::new(alpha)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    Ok(sampler.increment(dt, rng))
}

/// KS distance between `(X_1 + … + X_n) / n^{1/α}` and fresh standard draws.
///
/// Small values confirm the stability property that makes the increments of
/// Lévy motion self-similar.
pub fn self_similarity_check(alpha: f64, n: usize, draws: usize, rng: &mut RngStream) -> Result<f64> {
    let sampler = StableSampler::new(alpha)?;
    if n == 0 {
        return Err(Error::invalid("aggregation count must be at least 1"));
    }
    if draws < 10_000 {
        return Err(Error::invalid(format!("need at least 10^4 draws, got {draws}")));
    }
    let scale = (n as f64).powf(1.0 / alpha);
    let aggregated: Vec<f64> = (0..draws)
        .map(|_| (0..n).map(|_| sampler.sample(rng)).sum::<f64>() / scale)
        .collect();
    let fresh: Vec<f64> = (0..draws).map(|_| sampler.sample(rng)).collect();
    Ok(stats::ks_two_sample(&aggregated, &fresh))
}

/// Log-log fit of the empirical two-sided survival `P(|X| > x)` on a
/// logarithmic grid of `points` thresholds in `[lo, hi]`; returns the slope.
pub fn tail_slope(samples: &[f64], lo: f64, hi: f64, points: usize) -> f64 {
    let mut mags: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len() as f64;
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for k in 0..points {
        let x = lo * (hi / lo).powf(k as f64 / (points - 1) as f64);
        let above = mags.len() - mags.partition_point(|&m| m <= x);
        if above > 0 {
            lx.push(x.ln());
            ly.push((above as f64 / n).ln());
        }
    }
    stats::fit_line(&lx, &ly).slope
}
