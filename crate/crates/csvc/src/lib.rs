//! Compressive-sensing video codec for surveillance-style footage.
//!
//! A sequence is split into GOPs: the first frame of each GOP is coded by a
//! block-DCT intra coder with rate search, and every other frame travels as
//! quantized Gaussian measurements of its residual against the *decoded* key
//! frame. The decoder rebuilds the measurement operator from a seed and
//! recovers each residual by total-variation minimization.

pub mod error;
pub mod frame;
pub mod intra;
pub mod io;
pub mod measurement;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod sweep;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
