use serde::Serialize;
use tch::Tensor;

use super::params::{leaky_gain, Init, ParamStore};

/// Slope of the leaky rectifier used by every hidden layer of G and D.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Activation {
    Identity,
    Relu,
    /// Smooth rectifier `ln(1 + e^x)`.
    Softplus,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu(LEAKY_SLOPE)
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        match *self {
            Activation::Identity => x.shallow_clone(),
            Activation::Relu => x.relu(),
            Activation::Softplus => x.softplus(),
            // max(x, slope * x) supports double backward for the gradient penalty.
            Activation::LeakyRelu(slope) => x.maximum(&(x * slope)),
            Activation::Tanh => x.tanh(),
        }
    }

    fn init_gain(&self) -> f64 {
        match *self {
            Activation::LeakyRelu(slope) => leaky_gain(slope),
            Activation::Relu | Activation::Softplus => leaky_gain(0.0),
            Activation::Identity | Activation::Tanh => 1.0,
        }
    }
}

/// Entry of a network's layer graph, in forward order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LayerKind {
    Conv {
        in_channels: i64,
        out_channels: i64,
        kernel: i64,
        stride: i64,
        dilation: i64,
        groups: i64,
    },
    Linear {
        in_features: i64,
        out_features: i64,
    },
    Activation(Activation),
    PixelShuffle(i64),
    Concat,
    ResidualAdd,
    GlobalAvgPool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerInfo {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerInfo {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub kernel: i64,
    pub stride: i64,
    pub dilation: i64,
    pub groups: i64,
}

impl ConvSpec {
    pub fn k(kernel: i64) -> Self {
        ConvSpec {
            kernel,
            stride: 1,
            dilation: 1,
            groups: 1,
        }
    }

    pub fn stride(self, stride: i64) -> Self {
        ConvSpec { stride, ..self }
    }

    pub fn dilation(self, dilation: i64) -> Self {
        ConvSpec { dilation, ..self }
    }

    pub fn groups(self, groups: i64) -> Self {
        ConvSpec { groups, ..self }
    }
}

/// 2-D convolution with "same"-style padding (`dilation * (kernel - 1) / 2`), bias,
/// followed by an activation.
pub struct Conv {
    pub name: String,
    weight: Tensor,
    bias: Tensor,
    pub in_channels: i64,
    pub out_channels: i64,
    pub spec: ConvSpec,
    pub activation: Activation,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: i64,
        out_channels: i64,
        spec: ConvSpec,
        activation: Activation,
    ) -> Self {
        Self::with_gain_scale(store, name, in_channels, out_channels, spec, activation, 1.0)
    }

    /// As [`Conv::new`] with the initialization gain multiplied by `scale`.
    pub fn with_gain_scale(
        store: &mut ParamStore,
        name: &str,
        in_channels: i64,
        out_channels: i64,
        spec: ConvSpec,
        activation: Activation,
        scale: f64,
    ) -> Self {
        assert_eq!(in_channels % spec.groups, 0, "{name}: in_channels not divisible by groups");
        assert_eq!(out_channels % spec.groups, 0, "{name}: out_channels not divisible by groups");
        let weight = store.var(
            format!("{name}.weight"),
            &[out_channels, in_channels / spec.groups, spec.kernel, spec.kernel],
            Init::ScaledNormal {
                gain: activation.init_gain() * scale,
            },
        );
        let bias = store.var(format!("{name}.bias"), &[out_channels], Init::Zeros);
        Conv {
            name: name.to_string(),
            weight,
            bias,
            in_channels,
            out_channels,
            spec,
            activation,
        }
    }

    /// Convolution without the activation.
    pub fn linear_part(&self, x: &Tensor) -> Tensor {
        let pad = self.spec.dilation * (self.spec.kernel - 1) / 2;
        x.conv2d(
            &self.weight,
            Some(&self.bias),
            [self.spec.stride, self.spec.stride],
            [pad, pad],
            [self.spec.dilation, self.spec.dilation],
            self.spec.groups,
        )
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.activation.apply(&self.linear_part(x))
    }

    pub fn describe(&self, out: &mut Vec<LayerInfo>) {
        out.push(LayerInfo::new(
            &self.name,
            LayerKind::Conv {
                in_channels: self.in_channels,
                out_channels: self.out_channels,
                kernel: self.spec.kernel,
                stride: self.spec.stride,
                dilation: self.spec.dilation,
                groups: self.spec.groups,
            },
        ));
        out.push(LayerInfo::new(
            format!("{}.act", self.name),
            LayerKind::Activation(self.activation),
        ));
    }
}

pub struct Linear {
    pub name: String,
    weight: Tensor,
    bias: Tensor,
    pub in_features: i64,
    pub out_features: i64,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_features: i64, out_features: i64) -> Self {
        let weight = store.var(
            format!("{name}.weight"),
            &[out_features, in_features],
            Init::ScaledNormal { gain: 1.0 },
        );
        let bias = store.var(format!("{name}.bias"), &[out_features], Init::Zeros);
        Linear {
            name: name.to_string(),
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.linear(&self.weight, Some(&self.bias))
    }

    pub fn describe(&self, out: &mut Vec<LayerInfo>) {
        out.push(LayerInfo::new(
            &self.name,
            LayerKind::Linear {
                in_features: self.in_features,
                out_features: self.out_features,
            },
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Kind;

    #[test]
    fn leaky_matches_definition_and_double_backward() {
        let x = Tensor::from_slice(&[-2.0f64, -0.5, 0.5, 3.0]).set_requires_grad(true);
        let y = Activation::leaky().apply(&x);
        let v: Vec<f64> = Vec::try_from(&y.detach()).unwrap();
        assert_eq!(v, vec![-0.4, -0.1, 0.5, 3.0]);
        let g = Tensor::run_backward(&[&(y.pow_tensor_scalar(2).sum(Kind::Double))], &[&x], true, true);
        // d/dx of y^2 = 2 y y'
        let gv: Vec<f64> = Vec::try_from(&g[0].detach()).unwrap();
        assert!((gv[0] - 2.0 * -0.4 * 0.2).abs() < 1e-12);
        assert!((gv[3] - 6.0).abs() < 1e-12);
        let gg = Tensor::run_backward(&[&g[0].sum(Kind::Double)], &[&x], false, false);
        assert!(gg[0].isfinite().all().int64_value(&[]) == 1);
    }

    #[test]
    fn conv_preserves_size_with_dilation() {
        let mut store = ParamStore::new(Kind::Float, 0);
        let conv = Conv::new(
            &mut store,
            "c",
            8,
            16,
            ConvSpec::k(3).dilation(2).groups(4),
            Activation::leaky(),
        );
        let x = Tensor::ones([2, 8, 12, 10], (Kind::Float, tch::Device::Cpu));
        assert_eq!(conv.forward(&x).size(), vec![2, 16, 12, 10]);
        let strided = Conv::new(&mut store, "s", 8, 4, ConvSpec::k(3).stride(2), Activation::leaky());
        assert_eq!(strided.forward(&x).size(), vec![2, 4, 6, 5]);
        assert_eq!(store.len(), 4);
    }
}
