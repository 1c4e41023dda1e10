use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};
use crate::rng::{seeded, SeededRng};

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Normal with standard deviation `gain / sqrt(fan_in)`.
    ScaledNormal { gain: f64 },
}

/// Gain for a leaky-rectified layer with the given negative slope.
pub fn leaky_gain(slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}

fn fan_in(shape: &[i64]) -> i64 {
    shape.iter().skip(1).product::<i64>().max(1)
}

/// Ordered, named collection of trainable tensors.
///
/// Layers receive shallow clones of the tensors registered here, so updates made
/// through the store (optimizer steps, checkpoint loads) are visible to the layers.
pub struct ParamStore {
    kind: Kind,
    rng: SeededRng,
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new(kind: Kind, seed: u64) -> Self {
        ParamStore {
            kind,
            rng: seeded(seed),
            entries: Vec::new(),
        }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn var(&mut self, name: impl Into<String>, shape: &[i64], init: Init) -> Tensor {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter name {name}"
        );
        let numel: i64 = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; numel as usize],
            Init::ScaledNormal { gain } => {
                let std = gain / (fan_in(shape) as f64).sqrt();
                (0..numel)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        z * std
                    })
                    .collect()
            }
        };
        let t = Tensor::from_slice(&values)
            .view(shape)
            .to_kind(self.kind)
            .set_requires_grad(true);
        self.entries.push((name, t.shallow_clone()));
        t
    }

    pub fn named(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.shallow_clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_parameters(&self) -> i64 {
        self.entries.iter().map(|(_, t)| t.numel() as i64).sum()
    }

    pub fn set_trainable(&self, trainable: bool) {
        for (_, t) in &self.entries {
            let _ = t.set_requires_grad(trainable);
        }
    }

    pub fn zero_grad(&self) {
        for (_, t) in &self.entries {
            let mut g = t.grad();
            if g.defined() {
                let _ = g.detach_();
                let _ = g.zero_();
            }
        }
    }

    /// SHA-256 over names, shapes and raw values.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in &self.entries {
            hasher.update(name.as_bytes());
            for d in t.size() {
                hasher.update(d.to_le_bytes());
            }
            let values: Vec<f64> = Vec::try_from(&t.detach().to_kind(Kind::Double).view([-1])).unwrap_or_default();
            for v in values {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Detached copies keyed by name.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.detach().copy()))
            .collect()
    }

    /// Overwrite every parameter in place from `source`; names and shapes must match.
    pub fn load(&self, source: &BTreeMap<String, Tensor>) -> Result<()> {
        if source.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.entries.len(),
                source.len()
            )));
        }
        tch::no_grad(|| {
            for (name, t) in &self.entries {
                let src = source
                    .get(name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
                if src.size() != t.size() {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name}: shape {:?} != {:?}",
                        src.size(),
                        t.size()
                    )));
                }
                let mut dst = t.shallow_clone();
                dst.copy_(&src.to_kind(self.kind));
            }
            Ok(())
        })
    }
}
