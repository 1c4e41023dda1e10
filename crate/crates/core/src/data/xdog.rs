//! Extended difference-of-Gaussians line extraction.
//!
//! The response `S = G(sigma) - tau * G(kappa * sigma)` is computed on a
//! greyscale image and mapped through a soft threshold:
//! `1` where `S >= epsilon_t`, `1 + tanh(phi * (S - epsilon_t))` elsewhere.
//! With a very large `phi` the ramp degenerates into a hard step.

use ndarray::Array2;

use super::types::{LineArt, XdogParams};
use crate::error::{Error, Result};

/// Normalized 1-D Gaussian taps covering `[-radius, radius]`, `radius = ceil(3 * scale)`.
pub fn gaussian_kernel(scale: f32) -> Vec<f32> {
    let radius = (3.0 * scale).ceil().max(1.0) as i64;
    let denom = 2.0 * (scale as f64) * (scale as f64);
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / total) as f32).collect()
}

/// Mirror an out-of-range index back into `[0, len)` without repeating the edge sample.
#[inline]
pub fn reflect_index(i: i64, len: usize) -> usize {
    let len = len as i64;
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i.rem_euclid(period);
    (if m < len { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(img: &Array2<f32>, scale: f32) -> Array2<f32> {
    let kernel = gaussian_kernel(scale);
    let radius = (kernel.len() / 2) as i64;
    let (h, w) = img.dim();

    let mut rows = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, tap) in kernel.iter().enumerate() {
                let sx = reflect_index(x as i64 + k as i64 - radius, w);
                acc += tap * img[[y, sx]];
            }
            rows[[y, x]] = acc;
        }
    }

    let mut out = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (k, tap) in kernel.iter().enumerate() {
                let sy = reflect_index(y as i64 + k as i64 - radius, h);
                acc += tap * rows[[sy, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Soft threshold applied to the difference-of-Gaussians response.
#[inline]
pub fn xdog_threshold(response: f32, params: &XdogParams) -> f32 {
    let shifted = response - params.epsilon_t;
    if shifted >= 0.0 {
        1.0
    } else {
        (1.0 + (params.phi * shifted).tanh()).clamp(0.0, 1.0)
    }
}

pub fn xdog_filter(grey: &Array2<f32>, params: &XdogParams) -> Result<LineArt> {
    params.validate()?;
    if grey.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite pixel in XDoG input".into()));
    }
    let narrow = gaussian_blur(grey, params.sigma);
    let wide = gaussian_blur(grey, params.sigma * params.kappa);
    let mut out = narrow;
    out.zip_mut_with(&wide, |n, &w| {
        *n = xdog_threshold(*n - params.tau * w, params);
    });
    LineArt::new(out)
}
