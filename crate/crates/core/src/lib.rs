//! handwave-core: a desk-scale micro-Doppler gesture recognition stack.
//!
//! The pipeline, end to end:
//!
//! ```text
//! radar  --(synthetic I/Q frames)-->  tfa  --(2ch spectrograms)-->  gan/nn
//!   |                                   |                             |
//!   gesture trajectories               STFT / CWT                De-DCGAN +
//!   + CW radar physics                 + normalization           CNN baseline
//! ```
//!
//! Everything numeric flows through [`tensor::Tensor`], a dense row-major
//! array with tape-based reverse-mode autodiff ([`tensor::graph::Graph`]).
//! Binary I/O uses the DGT1 container ([`container`]); randomness is always
//! drawn from named, seeded streams ([`rng::RngStream`]) so every artifact is
//! reproducible from a single master seed.

pub mod container;
pub mod dataset;
pub mod error;
pub mod gan;
pub mod nn;
pub mod radar;
pub mod rng;
pub mod tfa;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::graph::Graph;
pub use tensor::{Dtype, Element, Tensor};
