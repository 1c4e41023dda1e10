//! Generator and conditional critic.

pub mod discriminator;
pub mod generator;
pub mod resnext;
pub mod shuffle;

pub use discriminator::{Discriminator, DiscriminatorConfig, DISCRIMINATOR_TAG};
pub use generator::{Generator, GeneratorConfig, GENERATOR_TAG};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};

use crate::nn::{Activation, LayerInfo, LayerKind, LEAKY_SLOPE};

/// Problems found by [`audit_layers`].
#[derive(Debug, Default, Clone, PartialEq)]
pub struct LayerAudit {
    pub convolutions: usize,
    pub activations: usize,
    pub violations: Vec<String>,
}

impl LayerAudit {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural rules for the adversarial networks: every convolution is followed
/// (after an optional residual add or pixel shuffle) by an activation, every hidden
/// activation is a leaky rectifier with slope 0.2, and `final_activation`, when
/// given, is the activation of the last convolution. Layer names hinting at
/// normalization are rejected outright.
pub fn audit_layers(layers: &[LayerInfo], final_activation: Option<Activation>) -> LayerAudit {
    let mut audit = LayerAudit::default();
    let last_conv = layers.iter().rposition(|l| matches!(l.kind, LayerKind::Conv { .. }));
    for (i, layer) in layers.iter().enumerate() {
        let lname = layer.name.to_ascii_lowercase();
        if ["norm", "bn", "running_mean", "running_var"].iter().any(|k| lname.contains(k)) {
            audit.violations.push(format!("{}: looks like a normalization layer", layer.name));
        }
        match &layer.kind {
            LayerKind::Conv { .. } => {
                audit.convolutions += 1;
                let act = layers[i + 1..]
                    .iter()
                    .find(|l| !matches!(l.kind, LayerKind::ResidualAdd | LayerKind::PixelShuffle(_)));
                let act = match act.map(|l| &l.kind) {
                    Some(LayerKind::Activation(a)) => *a,
                    _ => {
                        audit.violations.push(format!("{}: convolution without activation", layer.name));
                        continue;
                    }
                };
                let expected = match (Some(i) == last_conv, final_activation) {
                    (true, Some(f)) => f,
                    _ => Activation::LeakyRelu(LEAKY_SLOPE),
                };
                if act != expected {
                    audit
                        .violations
                        .push(format!("{}: activation {act:?}, expected {expected:?}", layer.name));
                }
            }
            LayerKind::Activation(_) => audit.activations += 1,
            _ => {}
        }
    }
    audit
}
