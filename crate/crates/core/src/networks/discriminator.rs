//! Conditional critic: strided convolutions down to stride 16, concatenation
//! with the local features, ResNeXt blocks, further strided stages and a
//! pooled linear head. The output is an unbounded score per image.

use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::generator::{check_conditioning, expect_map};
use super::resnext::ResNeXtBlock;
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv, ConvSpec, LayerInfo, LayerKind, Linear, ParamStore};

pub const DISCRIMINATOR_TAG: &str = "tintline.discriminator.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub base_width: i64,
    /// Output channels of the four stride-2 stages that reach stride 16.
    pub depth_plan: [i64; 4],
    /// ResNeXt blocks after the conditioning concat.
    pub blocks: usize,
    /// Extra stride-2 stages after the blocks.
    pub tail_stages: usize,
    pub cardinality: i64,
    /// Must equal the local feature channel count.
    pub cond_channels: i64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            base_width: 16,
            depth_plan: [32, 64, 128, 128],
            blocks: 2,
            tail_stages: 1,
            cardinality: 16,
            cond_channels: 128,
        }
    }
}

impl DiscriminatorConfig {
    pub fn full_scale() -> Self {
        DiscriminatorConfig {
            base_width: 64,
            depth_plan: [128, 256, 512, 512],
            blocks: 4,
            tail_stages: 3,
            cardinality: 32,
            cond_channels: 512,
        }
    }

    /// Spatial side of the final feature stage for a square input of `side`.
    pub fn final_side(&self, side: i64) -> i64 {
        let mut s = side;
        for _ in 0..(4 + self.tail_stages) {
            s = (s + 1) / 2;
        }
        s
    }

    pub fn validate(&self, image_side: i64) -> Result<()> {
        if self.base_width <= 0 || self.cond_channels <= 0 || self.depth_plan.iter().any(|&c| c <= 0) {
            return Err(Error::arg("discriminator widths must be positive"));
        }
        if image_side % 16 != 0 || self.final_side(image_side) < 1 {
            return Err(Error::arg(format!("discriminator cannot process side {image_side}")));
        }
        Ok(())
    }
}

pub struct Discriminator {
    pub config: DiscriminatorConfig,
    stem: Conv,
    downs: Vec<Conv>,
    fuse: Conv,
    blocks: Vec<ResNeXtBlock>,
    tail: Vec<Conv>,
    head: Linear,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, config: &DiscriminatorConfig) -> Result<Self> {
        config.validate(16)?;
        let lrelu = Activation::leaky;
        let k3 = ConvSpec::k(3);
        let stem = Conv::new(store, "d.stem", 3, config.base_width, k3, lrelu());
        let mut downs = Vec::new();
        let mut ch = config.base_width;
        for (i, &out) in config.depth_plan.iter().enumerate() {
            downs.push(Conv::new(store, &format!("d.down{}", i + 1), ch, out, k3.stride(2), lrelu()));
            ch = out;
        }
        let fuse = Conv::new(store, "d.fuse", ch + config.cond_channels, ch, k3, lrelu());
        let blocks = (0..config.blocks)
            .map(|b| ResNeXtBlock::new(store, &format!("d.block{b}"), ch, config.cardinality, 1))
            .collect();
        let tail = (0..config.tail_stages)
            .map(|t| Conv::new(store, &format!("d.tail{}", t + 1), ch, ch, k3.stride(2), lrelu()))
            .collect();
        let head = Linear::new(store, "d.head", ch, 1);
        Ok(Discriminator {
            config: config.clone(),
            stem,
            downs,
            fuse,
            blocks,
            tail,
            head,
        })
    }

    /// Scores `(N,)` for images `(N,3,H,W)` conditioned on features `(N,C_f,H/16,W/16)`.
    pub fn forward(&self, img: &Tensor, features: &Tensor) -> Result<Tensor> {
        check_conditioning(img, 3, "critic input")?;
        let size = img.size();
        let (n, h, w) = (size[0], size[2], size[3]);
        if h % 16 != 0 || w % 16 != 0 {
            return Err(Error::arg(format!("critic input {h}x{w} is not a multiple of 16")));
        }
        expect_map(features, "critic conditioning", [n, self.config.cond_channels, h / 16, w / 16])?;
        let mut x = self.stem.forward(img);
        for d in &self.downs {
            x = d.forward(&x);
        }
        x = self.fuse.forward(&Tensor::cat(&[&x, features], 1));
        for b in &self.blocks {
            x = b.forward(&x);
        }
        for t in &self.tail {
            x = t.forward(&x);
        }
        let pooled = x.mean_dim([2i64, 3].as_slice(), false, x.kind());
        Ok(self.head.forward(&pooled).view([n]))
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        self.stem.describe(&mut out);
        for d in &self.downs {
            d.describe(&mut out);
        }
        out.push(LayerInfo::new("d.concat", LayerKind::Concat));
        self.fuse.describe(&mut out);
        for b in &self.blocks {
            b.describe(&mut out);
        }
        for t in &self.tail {
            t.describe(&mut out);
        }
        out.push(LayerInfo::new("d.pool", LayerKind::GlobalAvgPool));
        self.head.describe(&mut out);
        out
    }
}
