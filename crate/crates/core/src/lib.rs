//! Lévy-noise driven neural SDE forecasting for chaotic time series.
//!
//! The crate is organised bottom-up:
//!
//! * [`stable_rng`]: symmetric α-stable variates and reproducible random streams.
//! * [`chaos`]: delay embedding, Wolf maximum-Lyapunov estimation and Cao's
//!   embedding-dimension curves.
//! * [`neural`]: two-layer perceptrons with hand-written gradients, the
//!   attention block and SGD.
//! * [`lde_net`]: the Euler–Maruyama composed drift/diffusion network, its loss,
//!   training and Monte-Carlo prediction.
//! * [`sde_numerics`]: a stand-alone EM integrator for known SDEs and the
//!   strong-error convergence harness.
//! * [`pipeline`]: data ingestion, splitting, supervised windows, metrics,
//!   baselines and the experiment runner behind the CLI.

pub mod chaos;
pub mod error;
pub mod lde_net;
pub mod neural;
pub mod pipeline;
pub mod sde_numerics;
pub mod stable_rng;
pub mod stats;

pub use error::{Error, Result};
