//! Synthetic pair forging and joint augmentation of (line art, illustration) pairs.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb};
use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{Illustration, LineArt, XdogParams};
use super::xdog::xdog_filter;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Narrow-blur scales picked uniformly per synthesized pair; they vary line thickness.
pub const SIGMA_CHOICES: [f32; 3] = [0.3, 0.4, 0.5];

/// Range of the line darkness factor used during training.
pub const DARKNESS_RANGE: (f32, f32) = (0.7, 1.0);

pub const FLIP_PROBABILITY: f64 = 0.5;

/// Spatially aligned training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub line_art: LineArt,
    pub illustration: Illustration,
}

impl TrainingPair {
    pub fn new(line_art: LineArt, illustration: Illustration) -> Result<Self> {
        if line_art.height() != illustration.height() || line_art.width() != illustration.width() {
            return Err(Error::arg(format!(
                "pair not aligned: line art {}x{}, illustration {}x{}",
                line_art.height(),
                line_art.width(),
                illustration.height(),
                illustration.width()
            )));
        }
        Ok(TrainingPair {
            line_art,
            illustration,
        })
    }
}

pub fn pick_sigma(rng: &mut SeededRng) -> f32 {
    SIGMA_CHOICES[rng.random_range(0..SIGMA_CHOICES.len())]
}

/// Forge a line art from the illustration's luma with a randomly chosen blur scale.
/// Returns the pair and the sigma that was used.
pub fn synthesize_pair(
    illustration: &Illustration,
    base: &XdogParams,
    rng: &mut SeededRng,
) -> Result<(TrainingPair, f32)> {
    let sigma = pick_sigma(rng);
    let line_art = xdog_filter(&illustration.luma(), &base.with_sigma(sigma))?;
    Ok((TrainingPair::new(line_art, illustration.clone())?, sigma))
}

/// `1 - lambda * (1 - x)`: lightens lines towards grey, leaves the white background unchanged.
pub fn darkness_scale(line_art: &LineArt, lambda: f32) -> Result<LineArt> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("darkness lambda {lambda} outside [0, 1]")));
    }
    Ok(LineArt {
        pixels: line_art.pixels.mapv(|x| 1.0 - lambda * (1.0 - x)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Output side; inputs are resized so their shorter side equals it, then cropped square.
    pub side: usize,
    pub flip_probability: f64,
    pub darkness: (f32, f32),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            side: 128,
            flip_probability: FLIP_PROBABILITY,
            darkness: DARKNESS_RANGE,
        }
    }
}

impl AugmentConfig {
    pub fn with_side(side: usize) -> Self {
        AugmentConfig {
            side,
            ..Self::default()
        }
    }
}

/// Draws made by one [`augment`] call, recorded for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub top: usize,
    pub left: usize,
    pub flipped: bool,
    pub lambda: f32,
}

fn resized_dims(h: usize, w: usize, side: usize) -> (usize, usize) {
    let short = h.min(w) as f64;
    let scale = side as f64 / short;
    let nh = ((h as f64 * scale).round() as usize).max(side);
    let nw = ((w as f64 * scale).round() as usize).max(side);
    (nh, nw)
}

/// Bicubic resize of a channel-first array.
pub fn resize_channels(img: &Array3<f32>, height: usize, width: usize) -> Array3<f32> {
    let (c, h, w) = img.dim();
    if (h, w) == (height, width) {
        return img.clone();
    }
    let mut out = Array3::<f32>::zeros((c, height, width));
    for ch in 0..c {
        let plane: ImageBuffer<Luma<f32>, Vec<f32>> =
            ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([img[[ch, y as usize, x as usize]]]));
        let resized = imageops::resize(&plane, width as u32, height as u32, FilterType::CatmullRom);
        for (x, y, p) in resized.enumerate_pixels() {
            out[[ch, y as usize, x as usize]] = p[0];
        }
    }
    out
}

/// Bicubic resize of an RGB array in [-1, 1]; overshoot is clamped back into range.
pub fn resize_rgb(img: &Array3<f32>, height: usize, width: usize) -> Array3<f32> {
    let (_, h, w) = img.dim();
    if (h, w) == (height, width) {
        return img.clone();
    }
    let buf: ImageBuffer<Rgb<f32>, Vec<f32>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([img[[0, y, x]], img[[1, y, x]], img[[2, y, x]]])
    });
    let resized = imageops::resize(&buf, width as u32, height as u32, FilterType::CatmullRom);
    Array3::from_shape_fn((3, height, width), |(c, y, x)| {
        resized.get_pixel(x as u32, y as u32)[c].clamp(-1.0, 1.0)
    })
}

/// Resize an illustration so its shorter side equals `side`.
pub fn resize_illustration(illustration: &Illustration, side: usize) -> Illustration {
    let (nh, nw) = resized_dims(illustration.height(), illustration.width(), side);
    Illustration {
        pixels: resize_rgb(&illustration.pixels, nh, nw),
        source_id: illustration.source_id.clone(),
    }
}

fn resize_line_art(line_art: &LineArt, height: usize, width: usize) -> LineArt {
    let planar = line_art.pixels.clone().insert_axis(Axis(0));
    let resized = resize_channels(&planar, height, width);
    LineArt {
        pixels: resized.index_axis(Axis(0), 0).mapv(|v| v.clamp(0.0, 1.0)),
    }
}

/// Joint resize → crop → flip of a pair, then darkness scaling of the line art only.
pub fn augment(pair: &TrainingPair, cfg: &AugmentConfig, rng: &mut SeededRng) -> Result<(TrainingPair, AugmentDraw)> {
    let side = cfg.side;
    if side == 0 {
        return Err(Error::arg("augment side must be positive"));
    }
    let (h, w) = (pair.illustration.height(), pair.illustration.width());
    let (nh, nw) = if h.min(w) == side { (h, w) } else { resized_dims(h, w, side) };
    let color = resize_rgb(&pair.illustration.pixels, nh, nw);
    let line = if (nh, nw) == (h, w) {
        pair.line_art.clone()
    } else {
        resize_line_art(&pair.line_art, nh, nw)
    };

    let top = rng.random_range(0..=nh - side);
    let left = rng.random_range(0..=nw - side);
    let flipped = rng.random_bool(cfg.flip_probability);
    let lambda = rng.random_range(cfg.darkness.0..=cfg.darkness.1);

    let mut color: Array3<f32> = color.slice(s![.., top..top + side, left..left + side]).to_owned();
    let mut line: Array2<f32> = line.pixels.slice(s![top..top + side, left..left + side]).to_owned();
    if flipped {
        color = color.slice(s![.., .., ..;-1]).to_owned();
        line = line.slice(s![.., ..;-1]).to_owned();
    }
    let line = darkness_scale(&LineArt { pixels: line }, lambda)?;
    let illustration = Illustration {
        pixels: color,
        source_id: pair.illustration.source_id.clone(),
    };
    Ok((
        TrainingPair::new(line, illustration)?,
        AugmentDraw {
            top,
            left,
            flipped,
            lambda,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn ramp_pair(h: usize, w: usize) -> TrainingPair {
        let color = Array3::from_shape_fn((3, h, w), |(c, y, x)| {
            (((c * 13 + y * 5 + x * 3) % 97) as f32 / 48.0 - 1.0).clamp(-1.0, 1.0)
        });
        let line = Array2::from_shape_fn((h, w), |(y, x)| ((y * 3 + x) % 17) as f32 / 16.0);
        TrainingPair::new(LineArt::new(line).unwrap(), Illustration::new(color, "ramp").unwrap()).unwrap()
    }

    #[test]
    fn darkness_examples() {
        let x = LineArt::new(Array2::from_elem((2, 2), 0.0)).unwrap();
        let y = darkness_scale(&x, 0.7).unwrap();
        assert!(y.pixels.iter().all(|&v| (v - 0.3).abs() < 1e-7));

        let white = LineArt::blank(3, 3);
        for lambda in [0.0, 0.7, 0.85, 1.0] {
            assert!(darkness_scale(&white, lambda).unwrap().pixels.iter().all(|&v| v == 1.0));
        }

        let pair = ramp_pair(8, 8);
        assert_eq!(darkness_scale(&pair.line_art, 1.0).unwrap(), pair.line_art);
        assert!(darkness_scale(&pair.line_art, 1.2).is_err());
        assert!(darkness_scale(&pair.line_art, -0.1).is_err());
    }

    #[test]
    fn augment_output_shapes() {
        for (h, w, side) in [(80, 96, 64), (64, 64, 64), (40, 50, 64), (128, 100, 64)] {
            let (out, _) = augment(&ramp_pair(h, w), &AugmentConfig::with_side(side), &mut seeded(3)).unwrap();
            assert_eq!(out.line_art.shape(), (1, side, side));
            assert_eq!(out.illustration.pixels.dim(), (3, side, side));
            assert!(out.illustration.pixels.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn flip_is_applied_jointly() {
        // At the target side no resize happens, so the output is an exact crop (+flip) of the input.
        let pair = ramp_pair(64, 80);
        let cfg = AugmentConfig {
            darkness: (1.0, 1.0),
            ..AugmentConfig::with_side(64)
        };
        let mut saw_flip = false;
        for seed in 0..20 {
            let (out, draw) = augment(&pair, &cfg, &mut seeded(seed)).unwrap();
            saw_flip |= draw.flipped;
            for y in 0..64 {
                for x in 0..64 {
                    let sx = if draw.flipped { draw.left + 63 - x } else { draw.left + x };
                    assert_eq!(out.line_art.pixels[[y, x]], pair.line_art.pixels[[y, sx]]);
                    for c in 0..3 {
                        assert_eq!(out.illustration.pixels[[c, y, x]], pair.illustration.pixels[[c, y, sx]]);
                    }
                }
            }
        }
        assert!(saw_flip);
    }

    #[test]
    fn augment_is_deterministic() {
        let pair = ramp_pair(70, 90);
        let cfg = AugmentConfig::with_side(64);
        let a = augment(&pair, &cfg, &mut seeded(11)).unwrap();
        let b = augment(&pair, &cfg, &mut seeded(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn misaligned_pair_rejected() {
        let line = LineArt::blank(8, 8);
        let color = Illustration::new(Array3::zeros((3, 8, 9)), "x").unwrap();
        assert!(TrainingPair::new(line, color).is_err());
    }
}
