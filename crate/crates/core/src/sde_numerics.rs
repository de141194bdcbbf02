//! Euler–Maruyama for scalar SDEs `dX = f(X)dt + g dL^α` with closed-form
//! drift, and a coupled-refinement harness measuring the strong error order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable_rng::{RngStream, StableSampler};
use crate::stats;

/// Minimum path count for a strong-error estimate.
pub const MIN_PATHS: usize = 100;
/// Minimum ratio between the finest tested step and the reference step.
pub const MIN_REFERENCE_REFINEMENT: usize = 64;
const MOM_GROUPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Zero,
    /// `f(x) = -rate·x`.
    Linear { rate: f64 },
}

impl Drift {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { rate } => -rate * x,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { rate } => rate.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    pub drift: Drift,
    /// Constant diffusion coefficient.
    pub g: f64,
    pub x0: f64,
    pub alpha: f64,
    pub horizon_time: f64,
}

impl SdeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        if !(self.horizon_time > 0.0 && self.horizon_time.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !self.g.is_finite() || !self.x0.is_finite() || !self.drift.lipschitz().is_finite() {
            return Err(Error::invalid("SDE coefficients must be finite"));
        }
        Ok(())
    }
}

/// Path on the grid `kΔt, k = 0..=N`, with the scaled increments
/// `Δt^{1/α} L_k` that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
}

impl SdePath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path holds x0")
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("at least one step is required"));
    }
    Ok(())
}

/// `X_{k+1} = X_k + f(X_k)Δt + g·η_k` for the supplied increments `η`.
pub fn em_with_increments(spec: &SdeSpec, increments: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    check_steps(increments.len())?;
    let dt = spec.horizon_time / increments.len() as f64;
    let mut values = Vec::with_capacity(increments.len() + 1);
    let mut x = spec.x0;
    values.push(x);
    for (k, eta) in increments.iter().enumerate() {
        x += spec.drift.eval(x) * dt + spec.g * eta;
        if !x.is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        values.push(x);
    }
    Ok(values)
}

fn draw_increments(spec: &SdeSpec, steps: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let sampler = StableSampler::new(spec.alpha)?;
    let dt = spec.horizon_time / steps as f64;
    Ok((0..steps).map(|_| sampler.increment(dt, rng)).collect())
}

pub fn em_integrate(spec: &SdeSpec, steps: usize, rng: &mut RngStream) -> Result<SdePath> {
    spec.validate()?;
    check_steps(steps)?;
    let increments = draw_increments(spec, steps, rng)?;
    let values = em_with_increments(spec, &increments)?;
    Ok(SdePath { values, increments })
}

/// Sums of consecutive blocks of `factor` fine increments.
pub fn block_sums(fine: &[f64], factor: usize) -> Vec<f64> {
    fine.chunks(factor).map(|c| c.iter().sum()).collect()
}

/// Coarse and fine paths driven by the same noise: each coarse increment is
/// the sum of the `factor` fine increments it spans.
pub fn coupled_refinement(
    spec: &SdeSpec,
    coarse_steps: usize,
    factor: usize,
    rng: &mut RngStream,
) -> Result<(SdePath, SdePath)> {
    if factor < 2 {
        return Err(Error::invalid(format!("refinement factor must be at least 2, got {factor}")));
    }
    check_steps(coarse_steps)?;
    let fine = em_integrate(spec, coarse_steps * factor, rng)?;
    let coarse_inc = block_sums(&fine.increments, factor);
    let coarse = SdePath {
        values: em_with_increments(spec, &coarse_inc)?,
        increments: coarse_inc,
    };
    Ok((coarse, fine))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub alpha: f64,
    pub dts: Vec<f64>,
    pub mean_errors: Vec<f64>,
    pub median_of_means_errors: Vec<f64>,
    /// Log-log slope of mean error against dt.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    /// Same fit on the median-of-means errors.
    pub robust_slope: f64,
    pub n_paths: usize,
    pub reference_dt: f64,
}

impl ConvergenceReport {
    /// Whether the fitted order lies within `tol` of `target`.
    pub fn slope_within(&self, target: f64, tol: f64) -> bool {
        (self.slope - target).abs() <= tol
    }

    /// Number of places where the error grows as dt shrinks.
    pub fn inversions(&self) -> usize {
        self.mean_errors.windows(2).filter(|w| w[1] > w[0]).count()
    }
}

fn steps_for(dt: f64, horizon: f64) -> Result<usize> {
    let n = (horizon / dt).round();
    if !(n >= 1.0) || ((n * dt) - horizon).abs() > 1e-9 * horizon {
        return Err(Error::invalid(format!("dt = {dt} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Estimates `E max_k |x_ref(kΔt) - X_Δt(kΔt)|` for each `dt`, the maximum
/// taken over the coarse grid points, against a coupled reference path whose
/// step is `dt_min / reference_refinement`. Path `p` uses `rng.child(p)`.
pub fn strong_error_curve(
    spec: &SdeSpec,
    dts: &[f64],
    n_paths: usize,
    reference_refinement: usize,
    rng: &RngStream,
) -> Result<ConvergenceReport> {
    spec.validate()?;
    if n_paths < MIN_PATHS {
        return Err(Error::StatisticalPower {
            paths: n_paths,
            required: MIN_PATHS,
        });
    }
    if dts.len() < 2 {
        return Err(Error::invalid("the dt grid needs at least two points"));
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("the dt grid must be strictly decreasing"));
    }
    if reference_refinement < MIN_REFERENCE_REFINEMENT {
        return Err(Error::invalid(format!(
            "reference must be at least {MIN_REFERENCE_REFINEMENT}x finer than the finest dt"
        )));
    }
    let steps: Vec<usize> = dts
        .iter()
        .map(|&dt| steps_for(dt, spec.horizon_time))
        .collect::<Result<_>>()?;
    let ref_steps = steps[steps.len() - 1] * reference_refinement;
    if let Some(bad) = steps.iter().find(|&&n| ref_steps % n != 0) {
        return Err(Error::invalid(format!(
            "{bad} steps do not nest in the {ref_steps}-step reference grid"
        )));
    }

    let per_path: Vec<Result<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = rng.child(p as u64);
            let reference = em_integrate(spec, ref_steps, &mut stream)?;
            steps
                .iter()
                .map(|&n| {
                    let factor = ref_steps / n;
                    let coarse = em_with_increments(spec, &block_sums(&reference.increments, factor))?;
                    Ok(coarse
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (reference.values[k * factor] - c).abs())
                        .fold(0.0, f64::max))
                })
                .collect()
        })
        .collect();
    let per_path: Vec<Vec<f64>> = per_path.into_iter().collect::<Result<_>>()?;

    let column = |j: usize| -> Vec<f64> { per_path.iter().map(|e| e[j]).collect() };
    let mean_errors: Vec<f64> = (0..dts.len()).map(|j| stats::mean(&column(j))).collect();
    let median_of_means_errors: Vec<f64> = (0..dts.len())
        .map(|j| stats::median_of_means(&column(j), MOM_GROUPS))
        .collect();
    let log_dt: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let fit = stats::fit_line(&log_dt, &mean_errors.iter().map(|e| e.ln()).collect::<Vec<_>>());
    let robust = stats::fit_line(
        &log_dt,
        &median_of_means_errors.iter().map(|e| e.ln()).collect::<Vec<_>>(),
    );
    Ok(ConvergenceReport {
        alpha: spec.alpha,
        dts: dts.to_vec(),
        mean_errors,
        median_of_means_errors,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        robust_slope: robust.slope,
        n_paths,
        reference_dt: spec.horizon_time / ref_steps as f64,
    })
}

/// `2^-lo, …, 2^-hi`.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-(k as i32))).collect()
}
