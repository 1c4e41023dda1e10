use tch::Tensor;

use crate::nn::{Activation, Conv, ConvSpec, LayerInfo, LayerKind, ParamStore};

/// Init gain applied to the expanding convolution, so that deep stacks without
/// normalization start close to identity.
const RESIDUAL_INIT_SCALE: f64 = 0.1;

/// Bottleneck width: half the block width, at least one channel per group, and a
/// multiple of the cardinality.
pub fn bottleneck_width(width: i64, cardinality: i64) -> i64 {
    let half = (width / 2).max(cardinality);
    (half + cardinality - 1) / cardinality * cardinality
}

/// 1×1 reduce → 3×3 grouped (optionally dilated) → 1×1 expand, identity skip.
pub struct ResNeXtBlock {
    name: String,
    reduce: Conv,
    grouped: Conv,
    expand: Conv,
}

impl ResNeXtBlock {
    pub fn new(store: &mut ParamStore, name: &str, width: i64, cardinality: i64, dilation: i64) -> Self {
        let inner = bottleneck_width(width, cardinality);
        let reduce = Conv::new(store, &format!("{name}.reduce"), width, inner, ConvSpec::k(1), Activation::leaky());
        let grouped = Conv::new(
            store,
            &format!("{name}.grouped"),
            inner,
            inner,
            ConvSpec::k(3).dilation(dilation).groups(cardinality),
            Activation::leaky(),
        );
        // The rectifier runs after the residual sum.
        let expand = Conv::with_gain_scale(
            store,
            &format!("{name}.expand"),
            inner,
            width,
            ConvSpec::k(1),
            Activation::leaky(),
            RESIDUAL_INIT_SCALE,
        );
        ResNeXtBlock {
            name: name.to_string(),
            reduce,
            grouped,
            expand,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let branch = self.expand.linear_part(&self.grouped.forward(&self.reduce.forward(x)));
        self.expand.activation.apply(&(x + branch))
    }

    pub fn dilation(&self) -> i64 {
        self.grouped.spec.dilation
    }

    pub fn describe(&self, out: &mut Vec<LayerInfo>) {
        self.reduce.describe(out);
        self.grouped.describe(out);
        let mut expand = Vec::new();
        self.expand.describe(&mut expand);
        out.push(expand.remove(0));
        out.push(LayerInfo::new(format!("{}.skip", self.name), LayerKind::ResidualAdd));
        out.push(expand.remove(0));
    }
}
