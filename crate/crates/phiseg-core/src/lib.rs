//! Phi-SegNet: a phase-supervised encoder-decoder segmenter with frequency
//! fusion blocks, reverse Fourier attention, and an unwrapped-phase loss,
//! built on a minimal f64 reverse-mode autodiff engine with exact 2-D
//! Fourier support.

pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
