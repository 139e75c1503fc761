//! Causal sensing-beam selection for mmWave initial access.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`channel`]: ULA steering vectors, DFT / oversampled-DFT codebooks,
//!   geometric multipath channels, beam gain and SNR.
//! * [`scene`]: synthetic scenes, noisy RSSI sweeps, labelled datasets and
//!   their text file format.
//! * [`lingam`]: DirectLiNGAM ordering and effect-matrix estimation.
//! * [`select`]: the causal beam selector and the correlation, Shapley and
//!   random baselines.
//! * [`mlp`]: a small fully connected softmax classifier trained with Adam.
//! * [`eval`]: top-k accuracy, effective spectral efficiency, overhead
//!   counters and the benchmark harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod eval;
pub mod lingam;
pub mod mlp;
pub mod scene;
pub mod select;
pub mod stream;
mod textio;

pub use error::{Error, Result};
