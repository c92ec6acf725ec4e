//! Keyword spotting with shifted delta coefficients.
//!
//! The crate is organised bottom-up:
//!
//! * [`dsp`]: pre-emphasis, framing, windowing, power spectra.
//! * [`features`]: mel, MFCC, PLP, RASTA-PLP and SDC front-ends, plus the
//!   KWSF feature-file format.
//! * [`nn`]: a small tape-based reverse-mode engine with the layers the
//!   matcher needs (conv, batch norm, GRU, attention, dense, dropout) and Adam.
//! * [`model`]: audio encoder, text encoder, cross-attention pattern
//!   extractor and discriminator, training and checkpoints.
//! * [`data`]: WAV I/O, tokenisation, manifests, batching and the synthetic
//!   keyword generator.
//! * [`metrics`]: AUC, EER, F1 and the SDC ablation grid.

pub mod data;
pub mod dsp;
pub mod features;
pub mod io_util;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nn;

pub use dsp::Waveform;
pub use features::{FeatureKind, FeatureMatrix, FrontEnd, FrontEndConfig, SdcConfig};
pub use matrix::Matrix;
pub use model::{Checkpoint, Model, ModelConfig};
