//! Multi-view recurrent networks for sound classification with a variable
//! number of sensors.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, a reverse-mode tape, Adam, checkpoints.
//! - [`dsp`]: short-time Fourier analysis into magnitude spectra.
//! - [`data`]: clip banks, SNR-controlled mixing, labels and manifests.
//! - [`room`]: 2-D image-source room simulation with a moving source.
//! - [`models`]: the multi-view network and the three fusion baselines.
//! - [`pipeline`]: training, channel-count sweeps and reports.
//!
//! Data-parallel loops (per-example gradients, evaluation jobs) run on rayon
//! when the `parallel` feature is enabled and sequentially otherwise; see
//! [`exec`].

pub mod data;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod room;
pub mod seed;

pub use error::{Error, Result};
