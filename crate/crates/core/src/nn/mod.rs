//! Minimal layer toolkit over `tch` tensors: named parameters with seeded
//! initialization, convolution/linear layers that describe themselves, and Adam.

pub mod adam;
pub mod layers;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use layers::{Activation, Conv, ConvSpec, LayerInfo, LayerKind, Linear, LEAKY_SLOPE};
pub use params::{Init, ParamStore};
