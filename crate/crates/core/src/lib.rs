//! No-reference quality assessment for contrast-distorted grayscale images.
//!
//! Each image is reduced to three features: the Minkowski deviation of the
//! power-law transformed image, the same for its complement, and the
//! histogram entropy. Kernel machines then map the features to a quality
//! score or a distortion label.

pub mod cli;
pub mod eval;
pub mod features;
pub mod imgio;
pub mod ml;
pub mod pixelops;
pub mod synth;
