//! Colour-hint construction at quarter resolution.
//!
//! Training hints are simulated from the ground truth: the illustration is
//! average-pooled 4×, and each quarter-resolution cell is revealed when a
//! uniform draw exceeds `|xi|`, with one `xi ~ N(1, 0.005)` per sample
//! (variance reading, so the standard deviation is `sqrt(0.005)`). User
//! strokes are max-pooled 4× and thinned on a checkerboard.

use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use tch::{Kind, Tensor};

use crate::data::Illustration;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Spatial reduction between the image and its hint tensor.
pub const HINT_STRIDE: usize = 4;

/// Mean of the per-sample threshold draw.
pub const XI_MEAN: f64 = 1.0;
/// Variance of the per-sample threshold draw.
pub const XI_VARIANCE: f64 = 0.005;

/// Masked quarter-resolution colours plus the binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct HintTensor {
    /// `(3, H/4, W/4)`, values in [-1, 1], exactly zero where the mask is zero.
    pub color: Array3<f32>,
    /// `(H/4, W/4)` with values in {0, 1}.
    pub mask: Array2<f32>,
}

impl HintTensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        HintTensor {
            color: Array3::zeros((3, height, width)),
            mask: Array2::zeros((height, width)),
        }
    }

    /// Empty hints for an image of the given full-resolution size.
    pub fn empty_for_image(height: usize, width: usize) -> Self {
        Self::zeros(height / HINT_STRIDE, width / HINT_STRIDE)
    }

    pub fn height(&self) -> usize {
        self.mask.nrows()
    }

    pub fn width(&self) -> usize {
        self.mask.ncols()
    }

    pub fn active_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.0).count()
    }

    pub fn density(&self) -> f64 {
        self.active_cells() as f64 / self.mask.len().max(1) as f64
    }

    pub fn is_empty(&self) -> bool {
        self.active_cells() == 0 && self.color.iter().all(|&c| c == 0.0)
    }

    /// Channel-first `(4, h, w)` layout: colour channels then mask.
    pub fn to_array(&self) -> Array3<f32> {
        let mut out = Array3::zeros((4, self.height(), self.width()));
        out.slice_mut(s![0..3, .., ..]).assign(&self.color);
        out.index_axis_mut(Axis(0), 3).assign(&self.mask);
        out
    }

    pub fn to_tensor(&self) -> Tensor {
        crate::tensor::from_array3(&self.to_array())
    }

    /// Stack a batch into `(N, 4, h, w)`.
    pub fn batch(hints: &[HintTensor]) -> Tensor {
        let parts: Vec<Tensor> = hints.iter().map(|h| h.to_tensor()).collect();
        Tensor::stack(&parts, 0).to_kind(Kind::Float)
    }
}

/// `4×4` average pooling of a channel-first image.
pub fn average_pool4(img: &Array3<f32>) -> Array3<f32> {
    let (c, h, w) = img.dim();
    let (qh, qw) = (h / HINT_STRIDE, w / HINT_STRIDE);
    Array3::from_shape_fn((c, qh, qw), |(ch, y, x)| {
        let block = img.slice(s![
            ch,
            y * HINT_STRIDE..(y + 1) * HINT_STRIDE,
            x * HINT_STRIDE..(x + 1) * HINT_STRIDE
        ]);
        block.sum() / (HINT_STRIDE * HINT_STRIDE) as f32
    })
}

/// Reveal mask `[r > |xi|]`.
pub fn threshold_mask(uniform: &Array2<f32>, xi: f64) -> Array2<f32> {
    let t = xi.abs() as f32;
    uniform.mapv(|r| if r > t { 1.0 } else { 0.0 })
}

/// Combine pooled colours with a mask so colours vanish outside it.
pub fn masked_hints(pooled: &Array3<f32>, mask: Array2<f32>) -> HintTensor {
    let mut color = pooled.clone();
    for mut plane in color.axis_iter_mut(Axis(0)) {
        plane.zip_mut_with(&mask, |c, &m| *c = if m > 0.0 { *c } else { 0.0 });
    }
    HintTensor { color, mask }
}

pub fn sample_training_hints(y: &Illustration, rng: &mut SeededRng) -> Result<HintTensor> {
    let (h, w) = (y.height(), y.width());
    if h % HINT_STRIDE != 0 || w % HINT_STRIDE != 0 {
        return Err(Error::arg(format!(
            "illustration {h}x{w} not divisible by the hint stride {HINT_STRIDE}"
        )));
    }
    let normal = Normal::new(XI_MEAN, XI_VARIANCE.sqrt()).expect("valid normal");
    let xi = normal.sample(rng);
    let (qh, qw) = (h / HINT_STRIDE, w / HINT_STRIDE);
    let uniform = Array2::from_shape_simple_fn((qh, qw), || rng.random::<f32>());
    let pooled = average_pool4(&y.pixels);
    Ok(masked_hints(&pooled, threshold_mask(&uniform, xi)))
}

/// User stroke layer: straight-alpha RGBA in [0, 1], channel-first.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeImage {
    pub rgba: Array3<f32>,
}

impl StrokeImage {
    pub fn new(rgba: Array3<f32>) -> Result<Self> {
        if rgba.shape()[0] != 4 {
            return Err(Error::ShapeMismatch {
                what: "stroke image",
                dim: "channels",
                expected: 4,
                actual: rgba.shape()[0] as i64,
            });
        }
        if rgba.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite stroke value".into()));
        }
        if rgba.index_axis(Axis(0), 3).iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidData("stroke alpha outside [0, 1]".into()));
        }
        Ok(StrokeImage { rgba })
    }

    pub fn transparent(height: usize, width: usize) -> Self {
        StrokeImage {
            rgba: Array3::zeros((4, height, width)),
        }
    }

    pub fn height(&self) -> usize {
        self.rgba.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.rgba.shape()[2]
    }

    /// Paint an opaque axis-aligned block with a unit-range RGB colour.
    pub fn paint_rect(&mut self, top: usize, left: usize, height: usize, width: usize, rgb: [f32; 3]) {
        let (h, w) = (self.height(), self.width());
        for y in top.min(h)..(top + height).min(h) {
            for x in left.min(w)..(left + width).min(w) {
                for c in 0..3 {
                    self.rgba[[c, y, x]] = rgb[c];
                }
                self.rgba[[3, y, x]] = 1.0;
            }
        }
    }

    /// Grow the layer to `height × width` with transparent pixels (right/bottom).
    pub fn pad_to(&self, height: usize, width: usize) -> StrokeImage {
        let mut rgba = Array3::zeros((4, height, width));
        rgba.slice_mut(s![.., 0..self.height(), 0..self.width()])
            .assign(&self.rgba);
        StrokeImage { rgba }
    }
}

/// Whether a quarter-resolution cell survives stroke thinning.
#[inline]
pub fn checkerboard_keeps(row: usize, col: usize) -> bool {
    (row + col) % 2 == 0
}

/// Max-pool strokes to quarter resolution and thin them on a fixed checkerboard.
pub fn preprocess_user_strokes(strokes: &StrokeImage, target: (usize, usize)) -> Result<HintTensor> {
    let (h, w) = (strokes.height(), strokes.width());
    if (h, w) != target {
        let (dim, expected, actual) = if h != target.0 {
            ("height", target.0, h)
        } else {
            ("width", target.1, w)
        };
        return Err(Error::ShapeMismatch {
            what: "strokes vs line art",
            dim,
            expected: expected as i64,
            actual: actual as i64,
        });
    }
    if h % HINT_STRIDE != 0 || w % HINT_STRIDE != 0 {
        return Err(Error::arg(format!(
            "stroke layer {h}x{w} not divisible by the hint stride {HINT_STRIDE}"
        )));
    }
    let (qh, qw) = (h / HINT_STRIDE, w / HINT_STRIDE);
    let mut hints = HintTensor::zeros(qh, qw);
    for qy in 0..qh {
        for qx in 0..qw {
            if !checkerboard_keeps(qy, qx) {
                continue;
            }
            let mut best: Option<(f32, usize, usize)> = None;
            for y in qy * HINT_STRIDE..(qy + 1) * HINT_STRIDE {
                for x in qx * HINT_STRIDE..(qx + 1) * HINT_STRIDE {
                    let a = strokes.rgba[[3, y, x]];
                    if a > 0.0 && best.is_none_or(|(b, _, _)| a > b) {
                        best = Some((a, y, x));
                    }
                }
            }
            if let Some((_, y, x)) = best {
                hints.mask[[qy, qx]] = 1.0;
                for c in 0..3 {
                    hints.color[[c, qy, qx]] = strokes.rgba[[c, y, x]] * 2.0 - 1.0;
                }
            }
        }
    }
    Ok(hints)
}
