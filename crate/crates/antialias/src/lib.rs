//! Frequency-domain analysis of subsampling in convolutional networks.
//!
//! The crate has three layers:
//!
//! * signal-processing primitives: DFT/FFT, spectrum folding, binomial
//!   low-pass kernels, notch filters, activation harmonic analysis
//!   ([`spectral`], [`filters`], [`activations`]);
//! * a layer-graph IR with an aliasing lint pass and filter-placement
//!   rewrites ([`graph`]);
//! * a small trainable CNN engine plus robustness benchmarks that execute
//!   those graphs at desk scale ([`nn`], [`bench`]).

pub mod activations;
pub mod bench;
pub mod error;
pub mod filters;
pub mod graph;
pub mod io;
pub mod nn;
pub mod spectral;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
