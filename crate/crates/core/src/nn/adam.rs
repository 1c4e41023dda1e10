use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam over a [`ParamStore`], with moment buffers that can be exported and restored
/// exactly.
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    names: Vec<String>,
    params: Vec<Tensor>,
    exp_avg: Vec<Tensor>,
    exp_avg_sq: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let names = store.named().iter().map(|(n, _)| n.clone()).collect();
        let params = store.tensors();
        let exp_avg = params.iter().map(|p| p.detach().zeros_like()).collect();
        let exp_avg_sq = params.iter().map(|p| p.detach().zeros_like()).collect();
        Adam {
            config,
            step: 0,
            names,
            params,
            exp_avg,
            exp_avg_sq,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`. Parameters without a gradient are left alone.
    pub fn step(&mut self, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        tch::no_grad(|| {
            for ((p, m), v) in self.params.iter().zip(&mut self.exp_avg).zip(&mut self.exp_avg_sq) {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                let _ = m.g_mul_scalar_(beta1).g_add_(&(&g * (1.0 - beta1)));
                let _ = v.g_mul_scalar_(beta2).g_add_(&(&g * &g * (1.0 - beta2)));
                let denom = (&*v / bias2).sqrt() + eps;
                let update = (&*m / bias1) / denom * lr;
                let mut p = p.shallow_clone();
                let _ = p.g_sub_(&update);
            }
        });
    }

    /// Moment buffers keyed `"m.<param>"` / `"v.<param>"`.
    pub fn state_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (i, name) in self.names.iter().enumerate() {
            out.insert(format!("m.{name}"), self.exp_avg[i].copy());
            out.insert(format!("v.{name}"), self.exp_avg_sq[i].copy());
        }
        out
    }

    pub fn restore(&mut self, step: u64, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            for (prefix, buf) in [("m", &mut self.exp_avg[i]), ("v", &mut self.exp_avg_sq[i])] {
                let key = format!("{prefix}.{name}");
                let src = tensors
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {key}")))?;
                if src.size() != buf.size() {
                    return Err(Error::Checkpoint(format!("optimizer tensor {key} has wrong shape")));
                }
                *buf = src.to_kind(buf.kind()).copy();
            }
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use tch::Kind;

    #[test]
    fn matches_reference_update() {
        // Two steps of Adam on f(w) = w^2 from w = 1, computed by hand.
        let mut store = ParamStore::new(Kind::Double, 0);
        let w = store.var("w", &[1], Init::Zeros);
        tch::no_grad(|| {
            let _ = w.shallow_clone().fill_(1.0);
        });
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(&store, cfg);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            store.zero_grad();
            (&w * &w).sum(Kind::Double).backward();
            opt.step(0.1);
            let g = 2.0 * x;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + cfg.eps);
            assert!((w.double_value(&[0]) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn state_round_trip() {
        let mut store = ParamStore::new(Kind::Float, 0);
        let w = store.var("w", &[3], Init::ScaledNormal { gain: 1.0 });
        let mut opt = Adam::new(&store, AdamConfig::default());
        (&w * &w).sum(Kind::Float).backward();
        opt.step(1e-2);
        let state = opt.state_tensors();
        let mut fresh = Adam::new(&store, AdamConfig::default());
        fresh.restore(opt.steps_taken(), &state).unwrap();
        for (k, t) in fresh.state_tensors() {
            assert!(t.equal(&state[&k]));
        }
    }
}
