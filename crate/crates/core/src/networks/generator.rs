//! U-Net colorization generator.
//!
//! The encoder takes the line art at full resolution and halves it down to
//! stride 16; the hint tensor joins at stride 4 and the local features at
//! stride 16. Four decoder stages (strides 16, 8, 4, 2) each fuse their
//! input with a skip connection, run a stack of ResNeXt blocks and upsample
//! ×2 with a sub-pixel convolution. A final convolution with `tanh` maps back
//! to RGB. There are no normalization layers.

use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::resnext::ResNeXtBlock;
use super::shuffle::pixel_shuffle;
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv, ConvSpec, LayerInfo, LayerKind, ParamStore};

pub const GENERATOR_TAG: &str = "tintline.generator.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Channels of the full-resolution encoder block.
    pub base_width: i64,
    /// ResNeXt blocks per decoder stage, outermost (stride 16) first.
    pub block_counts: [usize; 4],
    /// Dilation of the grouped convolution in each decoder stage.
    pub dilation_plan: [i64; 4],
    pub cardinality: i64,
    /// Training resolution; the network itself accepts any multiple of 16.
    pub image_side: i64,
    /// Channels of the local feature map.
    pub feature_channels: i64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_width: 16,
            block_counts: [4, 2, 2, 1],
            dilation_plan: [1, 2, 2, 2],
            cardinality: 16,
            image_side: 128,
            feature_channels: 128,
        }
    }
}

impl GeneratorConfig {
    /// Full-size layout: 20/10/10/5 blocks, 64 base channels, cardinality 32,
    /// 512-channel local features at 512².
    pub fn full_scale() -> Self {
        GeneratorConfig {
            base_width: 64,
            block_counts: [20, 10, 10, 5],
            dilation_plan: [1, 2, 2, 2],
            cardinality: 32,
            image_side: 512,
            feature_channels: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_side % 16 != 0 || self.image_side <= 0 {
            return Err(Error::arg(format!("image_side {} must be a positive multiple of 16", self.image_side)));
        }
        if self.base_width <= 0 || self.cardinality <= 0 || self.feature_channels <= 0 {
            return Err(Error::arg("generator widths must be positive"));
        }
        if self.dilation_plan.iter().any(|&d| d < 1) {
            return Err(Error::arg("dilation must be >= 1"));
        }
        Ok(())
    }

    /// Channel width of each decoder stage.
    fn decoder_widths(&self) -> [i64; 4] {
        let w = self.base_width;
        [8 * w, 4 * w, 2 * w, w]
    }
}

struct DecoderStage {
    fuse: Conv,
    blocks: Vec<ResNeXtBlock>,
    up: Conv,
}

impl DecoderStage {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = self.fuse.forward(x);
        for block in &self.blocks {
            h = block.forward(&h);
        }
        let up = pixel_shuffle(&self.up.linear_part(&h), 2).expect("upsample conv emits 4x channels");
        self.up.activation.apply(&up)
    }

    fn describe(&self, out: &mut Vec<LayerInfo>) {
        out.push(LayerInfo::new(format!("{}.concat", self.fuse.name), LayerKind::Concat));
        self.fuse.describe(out);
        for b in &self.blocks {
            b.describe(out);
        }
        let mut up = Vec::new();
        self.up.describe(&mut up);
        out.push(up.remove(0));
        out.push(LayerInfo::new(format!("{}.shuffle", self.up.name), LayerKind::PixelShuffle(2)));
        out.push(up.remove(0));
    }
}

pub struct Generator {
    pub config: GeneratorConfig,
    line_in: Conv,
    down2: Conv,
    down4: Conv,
    hint_in: Conv,
    fuse4: Conv,
    down8: Conv,
    down16: Conv,
    stages: Vec<DecoderStage>,
    out: Conv,
}

impl Generator {
    pub fn new(store: &mut ParamStore, config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let w = config.base_width;
        let lrelu = Activation::leaky;
        let k3 = ConvSpec::k(3);
        let line_in = Conv::new(store, "g.enc.line", 1, w, k3, lrelu());
        let down2 = Conv::new(store, "g.enc.down2", w, 2 * w, k3.stride(2), lrelu());
        let down4 = Conv::new(store, "g.enc.down4", 2 * w, 4 * w, k3.stride(2), lrelu());
        let hint_in = Conv::new(store, "g.enc.hint", 4, w, k3, lrelu());
        let fuse4 = Conv::new(store, "g.enc.fuse4", 5 * w, 4 * w, k3, lrelu());
        let down8 = Conv::new(store, "g.enc.down8", 4 * w, 8 * w, k3.stride(2), lrelu());
        let down16 = Conv::new(store, "g.enc.down16", 8 * w, 8 * w, k3.stride(2), lrelu());

        // (input channels to fuse, skip channels) per stage.
        let widths = config.decoder_widths();
        let skip_channels = [config.feature_channels, 8 * w, 4 * w, 2 * w];
        let mut stages = Vec::with_capacity(4);
        let mut incoming = 8 * w;
        for i in 0..4 {
            let width = widths[i];
            let next = if i + 1 < 4 { widths[i + 1] } else { w };
            let name = format!("g.dec{}", i + 1);
            let fuse = Conv::new(store, &format!("{name}.fuse"), incoming + skip_channels[i], width, k3, lrelu());
            let blocks = (0..config.block_counts[i])
                .map(|b| {
                    ResNeXtBlock::new(
                        store,
                        &format!("{name}.block{b}"),
                        width,
                        config.cardinality,
                        config.dilation_plan[i],
                    )
                })
                .collect();
            let up = Conv::new(store, &format!("{name}.up"), width, 4 * next, k3, lrelu());
            stages.push(DecoderStage { fuse, blocks, up });
            incoming = next;
        }
        let out = Conv::new(store, "g.out", 2 * w, 3, k3, Activation::Tanh);
        Ok(Generator {
            config: config.clone(),
            line_in,
            down2,
            down4,
            hint_in,
            fuse4,
            down8,
            down16,
            stages,
            out,
        })
    }

    /// Check `x: (N,1,H,W)`, `hints: (N,4,H/4,W/4)`, `features: (N,C_f,H/16,W/16)`.
    pub fn check_inputs(&self, x: &Tensor, hints: &Tensor, features: &Tensor) -> Result<()> {
        check_conditioning(x, 1, "line art")?;
        let size = x.size();
        let (n, h, w) = (size[0], size[2], size[3]);
        if h % 16 != 0 {
            return Err(Error::arg(format!("line-art height {h} is not a multiple of 16")));
        }
        if w % 16 != 0 {
            return Err(Error::arg(format!("line-art width {w} is not a multiple of 16")));
        }
        expect_map(hints, "hint tensor", [n, 4, h / 4, w / 4])?;
        expect_map(features, "local features", [n, self.config.feature_channels, h / 16, w / 16])
    }

    pub fn forward(&self, x: &Tensor, hints: &Tensor, features: &Tensor) -> Result<Tensor> {
        self.check_inputs(x, hints, features)?;
        let x = x.to_kind(features.kind());
        let hints = hints.to_kind(features.kind());
        let e1 = self.line_in.forward(&x);
        let e2 = self.down2.forward(&e1);
        let d4 = self.down4.forward(&e2);
        let h4 = self.hint_in.forward(&hints);
        let e4 = self.fuse4.forward(&Tensor::cat(&[d4, h4], 1));
        let e8 = self.down8.forward(&e4);
        let e16 = self.down16.forward(&e8);

        let skips = [features.shallow_clone(), e8, e4, e2];
        let mut h = e16;
        for (stage, skip) in self.stages.iter().zip(skips.iter()) {
            h = stage.forward(&Tensor::cat(&[&h, skip], 1));
        }
        Ok(self.out.forward(&Tensor::cat(&[h, e1], 1)))
    }

    pub fn blocks_per_stage(&self) -> Vec<(usize, Vec<i64>)> {
        self.stages
            .iter()
            .map(|s| (s.blocks.len(), s.blocks.iter().map(|b| b.dilation()).collect()))
            .collect()
    }

    /// Layer graph in forward order.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        self.line_in.describe(&mut out);
        self.down2.describe(&mut out);
        self.down4.describe(&mut out);
        self.hint_in.describe(&mut out);
        out.push(LayerInfo::new("g.enc.concat4", LayerKind::Concat));
        self.fuse4.describe(&mut out);
        self.down8.describe(&mut out);
        self.down16.describe(&mut out);
        for s in &self.stages {
            s.describe(&mut out);
        }
        out.push(LayerInfo::new("g.out.concat", LayerKind::Concat));
        self.out.describe(&mut out);
        out
    }
}

pub(crate) fn check_conditioning(t: &Tensor, channels: i64, what: &'static str) -> Result<()> {
    let size = t.size();
    if size.len() != 4 {
        return Err(Error::arg(format!("{what} must be rank 4 (N,C,H,W), got {size:?}")));
    }
    if size[1] != channels {
        return Err(Error::ShapeMismatch {
            what,
            dim: "channels",
            expected: channels,
            actual: size[1],
        });
    }
    Ok(())
}

pub(crate) fn expect_map(t: &Tensor, what: &'static str, expected: [i64; 4]) -> Result<()> {
    let size = t.size();
    if size.len() != 4 {
        return Err(Error::arg(format!("{what} must be rank 4 (N,C,H,W), got {size:?}")));
    }
    for (i, dim) in ["batch", "channels", "height", "width"].into_iter().enumerate() {
        if size[i] != expected[i] {
            return Err(Error::ShapeMismatch {
                what,
                dim,
                expected: expected[i],
                actual: size[i],
            });
        }
    }
    Ok(())
}
