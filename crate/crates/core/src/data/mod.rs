//! Illustration ingestion and synthetic line-art pair forging.

pub mod forge;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod types;
pub mod xdog;

pub use forge::{forge_dir, ForgeConfig, ForgeManifest, PairDataset};
pub use pipeline::{augment, darkness_scale, synthesize_pair, AugmentConfig, TrainingPair};
pub use types::{Illustration, LineArt, XdogParams};
pub use xdog::xdog_filter;
