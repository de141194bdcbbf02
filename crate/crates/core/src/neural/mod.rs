//! Two-layer perceptrons, the attention block and SGD, with hand-derived
//! gradients for the fixed architecture.

mod attention;
mod mlp;

pub use attention::{attention_apply, attention_backward, AttentionBlock, AttentionGrads};
pub use mlp::{mlp_backward, mlp_forward, path_norm, Activation, MlpCache, MlpGrads, MlpParams};

use crate::error::{Error, Result};

/// Named flat parameter blocks, used for generic updates and gradient checks.
pub trait Parameters {
    fn blocks(&self) -> Vec<(&'static str, &[f64])>;
    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn squared_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.iter())
            .map(|v| v * v)
            .sum()
    }

    fn scale_in_place(&mut self, t: f64) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= t);
        }
    }
}

/// Returns `params - lr * grads`.
pub fn sgd_step<P, G>(params: &P, grads: &G, lr: f64) -> Result<P>
where
    P: Parameters + Clone,
    G: Parameters,
{
    let mut next = params.clone();
    sgd_update(&mut next, grads, lr)?;
    Ok(next)
}

/// In-place form of [`sgd_step`]. Parameters are untouched on error.
pub fn sgd_update<P, G>(params: &mut P, grads: &G, lr: f64) -> Result<()>
where
    P: Parameters,
    G: Parameters,
{
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    let gb = grads.blocks();
    {
        let pb = params.blocks();
        if pb.len() != gb.len() {
            return Err(Error::shape("gradient and parameter block counts differ"));
        }
        for ((pn, p), (gn, g)) in pb.iter().zip(&gb) {
            if pn != gn || p.len() != g.len() {
                return Err(Error::shape(format!(
                    "gradient block `{gn}` ({}) does not match parameter block `{pn}` ({})",
                    g.len(),
                    p.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteUpdate {
                    block: gn.to_string(),
                });
            }
        }
    }
    for ((_, p), (_, g)) in params.blocks_mut().into_iter().zip(gb) {
        for (w, dw) in p.iter_mut().zip(g) {
            *w -= lr * dw;
        }
    }
    Ok(())
}
