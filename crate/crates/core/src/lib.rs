//! Spotforming with multiple microphone arrays.
//!
//! Each array is beamformed toward a target spot (oracle MVDR), and the
//! component common to every beamformer output is kept as the target. Two
//! extractors are provided: the conventional NMF over time-concatenated
//! amplitude spectrograms with a thresholded frame mask ([`nmf`]), and the
//! attractor-regularized nonnegative tensor factorization ([`ntf`]), which
//! labels each basis as common or array-specific while it fits.
//!
//! The factorizations and the STFT are generic over [`Scalar`] (`f32` or
//! `f64`); the room simulator, beamformer and metrics work in `f64`.
//! Concrete `f64` aliases are exported at the crate root.

pub mod beamform;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod harness;
pub mod nmf;
pub mod ntf;
pub mod roomsim;
pub mod scalar;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Waveform = signal::Waveform<f64>;
pub type ComplexSpectrogram = signal::ComplexSpectrogram<f64>;
pub type BfOutputTensor = beamform::BfOutputTensor<f64>;
pub type ConcatMatrix = nmf::ConcatMatrix<f64>;
pub type NmfModel = nmf::NmfModel<f64>;
pub type PropTensor = ntf::PropTensor<f64>;
pub type NtfModel = ntf::NtfModel<f64>;
pub type AttractorSet = ntf::AttractorSet<f64>;
pub type NtfFit = ntf::NtfFit<f64>;

pub type Waveform32 = signal::Waveform<f32>;
pub type NmfModel32 = nmf::NmfModel<f32>;
pub type NtfModel32 = ntf::NtfModel<f32>;
