//! Spatio-temporal graph convolutional trajectory prediction with a
//! conditional variational autoencoder.
//!
//! Pedestrians in a scene are nodes of a graph whose edges are weighted by
//! inverse distance. Two graph encoders produce diagonal Gaussians over a
//! latent transition tensor that keeps one column per pedestrian: a
//! conditional prior that sees only the 8 observed frames, and a recognition
//! network that also sees the 12 future frames during training. A decoder
//! fuses the observed graph with a latent sample and extrapolates a
//! per-pedestrian bivariate Gaussian over displacements for all 20 frames.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffcore`] - dense `f64` tensors and a define-by-run reverse-mode tape.
//! * [`trajdata`] - annotation parsing, resampling, windowing, window cache.
//! * [`stgraph`] - per-frame adjacency construction and normalization.
//! * [`model`] - parameters, layers and the prior / recognition / decoder networks.
//! * [`objective`] - bivariate Gaussian NLL, KL divergence, annealing.
//! * [`trainer`] - SGD with gradient accumulation, checkpoints, scene splits.
//! * [`evaluator`] - best-of-K ADE/FDE, constant-velocity baseline, latency.
//! * [`synthetic`] - small generated corpora for smoke tests and demos.
//!
//! Runnable walkthroughs live in `examples/`; the `stgcvae` binary wraps the
//! pipeline for batch experiments.

pub mod diffcore;
pub mod error;
pub mod evaluator;
pub mod kv;
pub mod model;
pub mod objective;
pub mod stgraph;
pub mod synthetic;
pub mod trainer;
pub mod trajdata;

pub use error::{Error, Result};

/// Observed frames per sequence.
pub const OBS_LEN: usize = 8;
/// Predicted frames per sequence.
pub const PRED_LEN: usize = 12;
/// Total frames per sequence window.
pub const SEQ_LEN: usize = OBS_LEN + PRED_LEN;
/// Frame period after resampling to 2.5 Hz, in seconds.
pub const FRAME_PERIOD: f64 = 0.4;
