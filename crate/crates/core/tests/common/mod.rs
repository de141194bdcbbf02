//! Independent reference implementations used as test oracles. None of them
//! call into the library code they check.

#![allow(dead_code)]

use std::f64::consts::PI;

use ldenet::chaos::EmbeddingSpec;
use ldenet::lde_net::{loss_with_increments, IntegratorConfig, LdeNetModel, ModelSpec, Normalization, TrainBatch};
use ldenet::neural::{Activation, MlpParams, Parameters};
use ldenet::stable_rng::RngStream;

/// CDF of `S_α(1, 0, 0)` from the inversion formula
/// `F(x) = 1/2 + (1/π) ∫_0^∞ e^{-t^α} sin(xt)/t dt`, by composite Simpson.
pub fn stable_cdf(alpha: f64, x: f64) -> f64 {
    // e^{-t^α} < 1e-17 beyond this point.
    let upper = 40f64.powf(1.0 / alpha);
    let n = 40_000;
    let h = upper / n as f64;
    let f = |t: f64| {
        if t == 0.0 {
            x
        } else {
            (-t.powf(alpha)).exp() * (x * t).sin() / t
        }
    };
    let mut sum = f(0.0) + f(upper);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(k as f64 * h);
    }
    0.5 + sum * h / 3.0 / PI
}

/// One-sample Kolmogorov–Smirnov distance against a CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
    }
}

/// Two-layer net evaluated from its definition; tracks the smallest
/// |pre-activation| seen, so ReLU kinks can be avoided in finite differences.
pub fn mlp_eval(p: &MlpParams, x: &[f64], min_pre: &mut f64) -> Vec<f64> {
    let mut out = vec![0.0; p.output_dim];
    for k in 0..p.width {
        let mut z = p.bias[k];
        for (j, xj) in x.iter().enumerate() {
            z += p.inner[k * p.input_dim + j] * xj;
        }
        *min_pre = min_pre.min(z.abs());
        let h = act(p.activation, z);
        for (o, out_o) in out.iter_mut().enumerate() {
            *out_o += p.outer[k * p.output_dim + o] * h;
        }
    }
    out
}

fn matmul_row(row: &[f64], w: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|b| (0..d).map(|a| row[a] * w[a * d + b]).sum()).collect()
}

/// Initial state, including the optional input attention.
pub fn initial_state(model: &LdeNetModel, x: &[f64]) -> Vec<f64> {
    let Some(att) = &model.attention else {
        return x.to_vec();
    };
    let d = x.len();
    let tokens: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|c| x[i] * att.lift[c] + att.position[i * d + c]).collect())
        .collect();
    let q: Vec<Vec<f64>> = tokens.iter().map(|t| matmul_row(t, &att.block.wq, d)).collect();
    let k: Vec<Vec<f64>> = tokens.iter().map(|t| matmul_row(t, &att.block.wk, d)).collect();
    let v: Vec<Vec<f64>> = tokens.iter().map(|t| matmul_row(t, &att.block.wv, d)).collect();
    let mut out = vec![0.0; d];
    for qi in &q {
        let scores: Vec<f64> = k
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for (j, s) in scores.iter().enumerate() {
            for c in 0..d {
                out[c] += s.exp() / z * v[j][c] / d as f64;
            }
        }
    }
    x.iter().zip(&out).map(|(a, b)| a + b).collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Three-term loss recomputed from scratch with frozen increments.
/// Returns the loss and the smallest |pre-activation| encountered.
pub fn oracle_loss(
    model: &LdeNetModel,
    inputs: &[Vec<f64>],
    labels: &[f64],
    ood: &[Vec<f64>],
    increments: &[Vec<f64>],
) -> (f64, f64) {
    let mut min_pre = f64::INFINITY;
    let d = model.embedding.m;
    let steps = model.integrator.steps;
    let dt = model.integrator.horizon_time / steps as f64;
    let b = inputs.len() as f64;
    let mut loss = 0.0;
    for ((x, y), eta) in inputs.iter().zip(labels).zip(increments) {
        let x0 = initial_state(model, x);
        let z = mlp_eval(&model.diffusion, &x0, &mut min_pre)[0];
        let g = sigmoid(z);
        let mut state = x0.clone();
        for k in 0..steps {
            let net = if model.drift.len() == 1 { &model.drift[0] } else { &model.drift[k] };
            let f = mlp_eval(net, &state, &mut min_pre);
            for i in 0..d {
                state[i] += f[i] * dt + g * eta[k * d + i];
            }
        }
        let r: f64 = model.readout.weights.iter().zip(&state).map(|(w, s)| w * s).sum::<f64>()
            + model.readout.bias;
        loss += (r - y).powi(2) / b;
        // BCE with label 0 is -ln(1 - g).
        loss += -(1.0 - g).ln() / b;
    }
    for x in ood {
        let x0 = initial_state(model, x);
        let g = sigmoid(mlp_eval(&model.diffusion, &x0, &mut min_pre)[0]);
        loss += -g.ln() / b;
    }
    (loss, min_pre)
}

/// Nearest neighbour by exhaustive scan, ties to the smaller index.
pub fn brute_nearest(
    points: &[Vec<f64>],
    query: usize,
    dist: impl Fn(&[f64], &[f64]) -> f64,
    min_dist: f64,
    accept: impl Fn(usize) -> bool,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in points.iter().enumerate() {
        if j == query || !accept(j) {
            continue;
        }
        let d = dist(&points[query], p);
        if d < min_dist {
            continue;
        }
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn logistic(n: usize, x0: f64) -> Vec<f64> {
    let mut x = x0;
    (0..n)
        .map(|_| {
            let v = x;
            x = 4.0 * x * (1.0 - x);
            v
        })
        .collect()
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub params: usize,
    /// Largest `|a - fd| / max(|a|, |fd|, 1e-4)` over all parameters.
    pub worst_relative: f64,
    pub worst_block: &'static str,
    /// Parameters failing `|a - fd| <= 1e-4·max(|a|, |fd|) + 1e-8`.
    pub failures: usize,
    pub loss_gap: f64,
}

pub struct GradCase {
    pub model: LdeNetModel,
    pub batch: TrainBatch,
    pub increments: Vec<Vec<f64>>,
}

fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.open01()
}

fn pick(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

/// A random small model, batch and frozen noise. ReLU cases are redrawn
/// until every pre-activation is at least 1e-3 away from the kink.
pub fn random_grad_case(rng: &mut RngStream, activation: Activation) -> GradCase {
    loop {
        let d = pick(rng, 1, 4);
        let spec = ModelSpec {
            drift_width: pick(rng, 1, 6),
            diffusion_width: pick(rng, 1, 6),
            activation,
            attention: rng.open01() < 0.5,
            per_step_drift: rng.open01() < 0.3,
        };
        let integrator = IntegratorConfig {
            steps: pick(rng, 1, 4),
            alpha: uniform(rng, 1.1, 1.9),
            n_paths: 1,
            ..IntegratorConfig::default()
        };
        let mut model = LdeNetModel::init(
            &spec,
            integrator,
            EmbeddingSpec { tau: 1, m: d },
            1,
            Normalization::identity(),
            rng,
        )
        .unwrap();
        // Move every parameter off its structured initial value.
        for (_, block) in model.blocks_mut() {
            for w in block.iter_mut() {
                *w += 0.3 * rng.normal();
            }
        }
        let b = pick(rng, 1, 3);
        let inputs: Vec<Vec<f64>> = (0..b).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        let labels: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
        let ood_inputs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|x| x.iter().map(|v| v + 2.0 * rng.normal()).collect())
            .collect();
        let increments: Vec<Vec<f64>> = (0..b)
            .map(|_| model.draw_increments(rng).unwrap().iter().map(|v| v.clamp(-5.0, 5.0)).collect())
            .collect();
        let (_, min_pre) = oracle_loss(&model, &inputs, &labels, &ood_inputs, &increments);
        if activation == Activation::Relu && min_pre < 1e-3 {
            continue;
        }
        return GradCase {
            model,
            batch: TrainBatch {
                inputs,
                labels,
                ood_inputs,
            },
            increments,
        };
    }
}

pub fn check_gradients(case: &GradCase) -> GradCheck {
    let h = 1e-5;
    let (parts, grads) = loss_with_increments(&case.model, &case.batch, &case.increments).unwrap();
    let b = &case.batch;
    let oracle = |m: &LdeNetModel| oracle_loss(m, &b.inputs, &b.labels, &b.ood_inputs, &case.increments).0;
    let loss_gap = (parts.total() - oracle(&case.model)).abs();
    let analytic: Vec<(&'static str, Vec<f64>)> =
        grads.blocks().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
    let mut report = GradCheck {
        params: 0,
        worst_relative: 0.0,
        worst_block: "",
        failures: 0,
        loss_gap,
    };
    for (bi, (name, g)) in analytic.iter().enumerate() {
        for (e, &a) in g.iter().enumerate() {
            let mut plus = case.model.clone();
            plus.blocks_mut()[bi].1[e] += h;
            let mut minus = case.model.clone();
            minus.blocks_mut()[bi].1[e] -= h;
            let fd = (oracle(&plus) - oracle(&minus)) / (2.0 * h);
            let diff = (a - fd).abs();
            let scale = a.abs().max(fd.abs());
            let rel = diff / scale.max(1e-4);
            if rel > report.worst_relative {
                report.worst_relative = rel;
                report.worst_block = name;
            }
            if diff > 1e-4 * scale + 1e-8 {
                report.failures += 1;
            }
            report.params += 1;
        }
    }
    report
}
