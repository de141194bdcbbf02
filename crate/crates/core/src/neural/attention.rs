use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::stable_rng::RngStream;

/// Single-head scaled dot-product attention over a window of `dim`-vectors.
///
/// Projections are row-major `dim × dim` matrices applied on the right,
/// `Q = X·W_q`. The attended rows are averaged into one output vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub dim: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGrads {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
}

fn project(x: &[Vec<f64>], w: &[f64], dim: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..dim)
                .map(|b| (0..dim).map(|a| row[a] * w[a * dim + b]).sum())
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Forward {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attn: Vec<Vec<f64>>,
    out: Vec<f64>,
}

impl AttentionBlock {
    pub fn identity(dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Self {
            dim,
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            wq: vec![0.0; dim * dim],
            wk: vec![0.0; dim * dim],
            wv: vec![0.0; dim * dim],
        }
    }

    /// Uniform entries in `[-scale/√dim, scale/√dim]`.
    pub fn init(dim: usize, scale: f64, rng: &mut RngStream) -> Self {
        let bound = scale / (dim as f64).sqrt();
        let mut block = Self::zeros(dim);
        for (_, b) in block.blocks_mut() {
            for w in b.iter_mut() {
                *w = bound * (2.0 * rng.open01() - 1.0);
            }
        }
        block
    }

    pub fn zero_grads(&self) -> AttentionGrads {
        AttentionGrads {
            wq: vec![0.0; self.wq.len()],
            wk: vec![0.0; self.wk.len()],
            wv: vec![0.0; self.wv.len()],
        }
    }

    fn check(&self, window: &[Vec<f64>]) -> Result<()> {
        if window.is_empty() {
            return Err(Error::shape("attention window is empty"));
        }
        if let Some(bad) = window.iter().find(|t| t.len() != self.dim) {
            return Err(Error::shape(format!(
                "attention token has length {}, block dimension is {}",
                bad.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn run(&self, window: &[Vec<f64>]) -> Forward {
        let d = self.dim;
        let n = window.len();
        let scale = 1.0 / (d as f64).sqrt();
        let q = project(window, &self.wq, d);
        let k = project(window, &self.wk, d);
        let v = project(window, &self.wv, d);
        let attn: Vec<Vec<f64>> = q
            .iter()
            .map(|qi| {
                let scores: Vec<f64> = k.iter().map(|kj| dot(qi, kj) * scale).collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / z).collect()
            })
            .collect();
        let mut out = vec![0.0; d];
        for row in &attn {
            for (j, a) in row.iter().enumerate() {
                for c in 0..d {
                    out[c] += a * v[j][c];
                }
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        Forward { q, k, v, attn, out }
    }

    /// Accumulates gradients of `upstreamᵀ · apply(window)` into `grads` and
    /// returns the gradient with respect to each window token.
    pub fn backward_into(
        &self,
        window: &[Vec<f64>],
        upstream: &[f64],
        grads: &mut AttentionGrads,
    ) -> Vec<Vec<f64>> {
        let d = self.dim;
        let n = window.len();
        let scale = 1.0 / (d as f64).sqrt();
        let f = self.run(window);
        // Every attended row receives upstream / n.
        let d_row: Vec<f64> = upstream.iter().map(|u| u / n as f64).collect();
        let mut dv = vec![vec![0.0; d]; n];
        let mut dq = vec![vec![0.0; d]; n];
        let mut dk = vec![vec![0.0; d]; n];
        let da: Vec<f64> = f.v.iter().map(|vj| dot(&d_row, vj)).collect();
        for i in 0..n {
            let weighted: f64 = f.attn[i].iter().zip(&da).map(|(a, g)| a * g).sum();
            for j in 0..n {
                let a = f.attn[i][j];
                for c in 0..d {
                    dv[j][c] += a * d_row[c];
                }
                let ds = a * (da[j] - weighted) * scale;
                for c in 0..d {
                    dq[i][c] += ds * f.k[j][c];
                    dk[j][c] += ds * f.q[i][c];
                }
            }
        }
        let mut dx = vec![vec![0.0; d]; n];
        for t in 0..n {
            for a in 0..d {
                let xa = window[t][a];
                for b in 0..d {
                    let idx = a * d + b;
                    grads.wq[idx] += xa * dq[t][b];
                    grads.wk[idx] += xa * dk[t][b];
                    grads.wv[idx] += xa * dv[t][b];
                    dx[t][a] += dq[t][b] * self.wq[idx]
                        + dk[t][b] * self.wk[idx]
                        + dv[t][b] * self.wv[idx];
                }
            }
        }
        dx
    }
}

impl Parameters for AttentionBlock {
    fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
        ]
    }
}

impl Parameters for AttentionGrads {
    fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        vec![("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
        ]
    }
}

/// `mean_i softmax(Q Kᵀ/√d)_i · V` for the tokens in `window`.
pub fn attention_apply(block: &AttentionBlock, window: &[Vec<f64>]) -> Result<Vec<f64>> {
    block.check(window)?;
    Ok(block.run(window).out)
}

pub fn attention_backward(
    block: &AttentionBlock,
    window: &[Vec<f64>],
    upstream: &[f64],
) -> Result<(AttentionGrads, Vec<Vec<f64>>)> {
    block.check(window)?;
    if upstream.len() != block.dim {
        return Err(Error::shape("upstream gradient length differs from block dimension"));
    }
    let mut grads = block.zero_grads();
    let dx = block.backward_into(window, upstream, &mut grads);
    Ok((grads, dx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_window_with_identity_is_passthrough() {
        let block = AttentionBlock::identity(3);
        let v = vec![0.2, -1.5, 4.0];
        let out = attention_apply(&block, &[v.clone()]).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_projections_give_zero() {
        let block = AttentionBlock::zeros(2);
        let window = vec![vec![1.0, 2.0], vec![3.0, -4.0], vec![0.5, 0.5]];
        assert_eq!(attention_apply(&block, &window).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn empty_window_is_shape_error() {
        let block = AttentionBlock::identity(2);
        assert!(matches!(attention_apply(&block, &[]), Err(Error::Shape(_))));
        assert!(matches!(attention_apply(&block, &[vec![1.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn output_dimension_matches_input() {
        let mut rng = RngStream::new(3, 0);
        let block = AttentionBlock::init(4, 1.0, &mut rng);
        let window: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        assert_eq!(attention_apply(&block, &window).unwrap().len(), 4);
    }
}
