use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Luma weights used for every colour-to-grey conversion.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Parameters of the extended difference-of-Gaussians filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XdogParams {
    /// Blur scale of the narrow Gaussian, in pixels.
    pub sigma: f32,
    /// Ratio between the wide and the narrow blur scale.
    pub kappa: f32,
    /// Weight of the wide Gaussian in the difference.
    pub tau: f32,
    /// Steepness of the soft threshold ramp.
    pub phi: f32,
    /// Threshold level on the filter response.
    pub epsilon_t: f32,
}

impl Default for XdogParams {
    fn default() -> Self {
        XdogParams {
            sigma: 0.4,
            kappa: 4.5,
            tau: 0.95,
            phi: 1e9,
            epsilon_t: 0.0,
        }
    }
}

impl XdogParams {
    pub fn with_sigma(self, sigma: f32) -> Self {
        XdogParams { sigma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.sigma, self.kappa, self.tau, self.phi, self.epsilon_t]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::arg(format!("non-finite XDoG parameter in {self:?}")));
        }
        if self.sigma <= 0.0 {
            return Err(Error::arg(format!("XDoG sigma must be > 0, got {}", self.sigma)));
        }
        if self.kappa <= 1.0 {
            return Err(Error::arg(format!("XDoG kappa must be > 1, got {}", self.kappa)));
        }
        if self.phi <= 0.0 {
            return Err(Error::arg(format!("XDoG phi must be > 0, got {}", self.phi)));
        }
        Ok(())
    }
}

/// Ground-truth colour image, channel-first, values in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Illustration {
    pub pixels: Array3<f32>,
    pub source_id: String,
}

impl Illustration {
    pub fn new(pixels: Array3<f32>, source_id: impl Into<String>) -> Result<Self> {
        if pixels.shape()[0] != 3 {
            return Err(Error::ShapeMismatch {
                what: "illustration",
                dim: "channels",
                expected: 3,
                actual: pixels.shape()[0] as i64,
            });
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite illustration pixel {v}")));
        }
        if pixels.iter().any(|&v| !(-1.0..=1.0).contains(&v)) {
            return Err(Error::InvalidData("illustration pixels outside [-1, 1]".into()));
        }
        Ok(Illustration {
            pixels,
            source_id: source_id.into(),
        })
    }

    /// Builds from an RGB array with values in [0, 1].
    pub fn from_unit_rgb(rgb: Array3<f32>, source_id: impl Into<String>) -> Result<Self> {
        let pixels = rgb.mapv(|v| (v * 2.0 - 1.0).clamp(-1.0, 1.0));
        Self::new(pixels, source_id)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    /// RGB in [0, 1].
    pub fn to_unit_rgb(&self) -> Array3<f32> {
        self.pixels.mapv(|v| (v + 1.0) * 0.5)
    }

    /// BT.601 luma of the image, in [0, 1].
    pub fn luma(&self) -> Array2<f32> {
        luma(&self.to_unit_rgb())
    }

    /// Training-side shape contract: both sides at least 64 and divisible by 16.
    pub fn check_training_shape(&self) -> Result<()> {
        for (dim, v) in [("height", self.height()), ("width", self.width())] {
            if v < 64 || v % 16 != 0 {
                return Err(Error::arg(format!(
                    "illustration {dim} {v} must be >= 64 and divisible by 16"
                )));
            }
        }
        Ok(())
    }
}

/// Greyscale line drawing with values in [0, 1], 1 being blank background.
#[derive(Debug, Clone, PartialEq)]
pub struct LineArt {
    pub pixels: Array2<f32>,
}

impl LineArt {
    pub fn new(pixels: Array2<f32>) -> Result<Self> {
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite line-art pixel".into()));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidData("line-art pixels outside [0, 1]".into()));
        }
        Ok(LineArt { pixels })
    }

    pub fn blank(height: usize, width: usize) -> Self {
        LineArt {
            pixels: Array2::ones((height, width)),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    /// Shape in channel-first convention, `(1, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (1, self.height(), self.width())
    }
}

pub fn luma(rgb: &Array3<f32>) -> Array2<f32> {
    let mut out = Array2::<f32>::zeros((rgb.shape()[1], rgb.shape()[2]));
    for (c, w) in LUMA_WEIGHTS.iter().enumerate() {
        out.scaled_add(*w, &rgb.index_axis(Axis(0), c));
    }
    out.mapv_inplace(|v| v.clamp(0.0, 1.0));
    out
}
