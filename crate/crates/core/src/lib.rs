//! Stroke-guided colorization of line art.
//!
//! The crate covers the whole training and inference path: forging
//! line-art/illustration pairs, sampling and preprocessing color hints, the
//! frozen feature extractors, the generator and conditional critic, the loss
//! stack, the trainer and Fréchet-distance evaluation.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod extractors;
pub mod hints;
pub mod inference;
pub mod losses;
pub mod networks;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
