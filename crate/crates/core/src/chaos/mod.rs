//! Phase-space reconstruction of scalar series.

mod cao;
mod embed;
pub mod neighbors;
mod wolf;

pub use cao::{cao_curves, select_embedding_dim, CaoCurves, DEFAULT_E2_BAND, DEFAULT_SATURATION_TOL};
pub use embed::{delay_embed, EmbeddingSpec};
pub use wolf::{
    attractor_diameter, lyapunov_time, max_lyapunov_wolf, LyapunovReport, DEFAULT_EPS_FRACTION,
};
