//! Colorization of a single line art with optional user strokes.
//!
//! [`Colorizer::colorize_png`] is the one entry point shared by the command
//! line and the HTTP service, so both produce the same bytes for the same input.

use std::path::{Path, PathBuf};

use image::DynamicImage;
use ndarray::{s, Array2, Array3};
use tch::{Kind, Tensor};

use crate::checkpoint::Container;
use crate::data::io::{decode_image, encode_png, grey_array, image_dimensions, rgb_image, rgba_array};
use crate::data::LineArt;
use crate::error::{Error, Result};
use crate::extractors::FeatureExtractor;
use crate::hints::{preprocess_user_strokes, HintTensor, StrokeImage};
use crate::networks::{Generator, GeneratorConfig};
use crate::nn::ParamStore;
use crate::trainer::{extractor_from_section, Trainer, TRAINING_TAG};

pub const DEFAULT_MAX_SIDE: u32 = 1024;

/// Inputs are padded to a multiple of this before the networks run.
pub const SIZE_MULTIPLE: usize = 16;

pub fn padded_len(n: usize) -> usize {
    n.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE
}

/// Pad bottom and right with white background.
pub fn pad_line_art(line: &LineArt, height: usize, width: usize) -> LineArt {
    let mut pixels = Array2::ones((height, width));
    pixels
        .slice_mut(s![..line.height(), ..line.width()])
        .assign(&line.pixels);
    LineArt { pixels }
}

/// Output of one colorization.
#[derive(Debug, Clone)]
pub struct Colorized {
    /// RGB in `[0, 1]`, `(3, H, W)` at the input size.
    pub rgb: Array3<f32>,
    /// Hints fed to the generator, at the padded quarter resolution.
    pub hints: HintTensor,
    pub padded: (usize, usize),
}

pub struct Colorizer {
    pub model_id: String,
    pub source: Option<PathBuf>,
    pub iteration: u64,
    pub config: GeneratorConfig,
    generator: Generator,
    f1: FeatureExtractor,
    _params: ParamStore,
}

impl Colorizer {
    pub fn from_container(c: &Container, model_id: impl Into<String>) -> Result<Self> {
        c.expect_tag(TRAINING_TAG)?;
        let config: GeneratorConfig = serde_json::from_value(c.meta["config"]["generator"].clone())?;
        let mut params = ParamStore::new(Kind::Float, 0);
        let generator = Generator::new(&mut params, &config)?;
        params.load(&c.section("g"))?;
        params.set_trainable(false);
        let f1 = extractor_from_section(c, "f1")?;
        if f1.channels() != config.feature_channels {
            return Err(Error::ArchitectureMismatch {
                expected: format!("local features with {} channels", config.feature_channels),
                found: f1.architecture_tag(),
            });
        }
        Ok(Colorizer {
            model_id: model_id.into(),
            source: None,
            iteration: c.meta["iteration"].as_u64().unwrap_or(0),
            config,
            generator,
            f1,
            _params: params,
        })
    }

    /// Load a training checkpoint; the model id is the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".to_string());
        let mut c = Self::from_container(&Container::load(path)?, id)?;
        c.source = Some(path.to_path_buf());
        Ok(c)
    }

    pub fn from_trainer(trainer: &Trainer, model_id: impl Into<String>) -> Result<Self> {
        Self::from_container(&trainer.to_container()?, model_id)
    }

    /// Colorize `line`, using `strokes` (same size as `line`) as hints when given.
    pub fn colorize(&self, line: &LineArt, strokes: Option<&StrokeImage>) -> Result<Colorized> {
        let (h, w) = (line.height(), line.width());
        if h == 0 || w == 0 {
            return Err(Error::arg("line art is empty"));
        }
        let (ph, pw) = (padded_len(h), padded_len(w));
        let hints = match strokes {
            Some(st) => {
                if st.height() != h || st.width() != w {
                    // Reports the first disagreeing dimension.
                    preprocess_user_strokes(st, (h, w))?;
                }
                preprocess_user_strokes(&st.pad_to(ph, pw), (ph, pw))?
            }
            None => HintTensor::empty_for_image(ph, pw),
        };
        let padded = pad_line_art(line, ph, pw);
        let out = tch::no_grad(|| -> Result<Tensor> {
            let x = crate::tensor::from_array2(&padded.pixels).view([1, 1, ph as i64, pw as i64]);
            let features = self.f1.forward(&x)?;
            let y = self.generator.forward(&x, &hints.to_tensor().unsqueeze(0), &features)?;
            Ok(y.get(0).narrow(1, 0, h as i64).narrow(2, 0, w as i64))
        })?;
        let rgb = crate::tensor::to_array3(&((out + 1.0) / 2.0).clamp(0.0, 1.0))?;
        Ok(Colorized {
            rgb,
            hints,
            padded: (ph, pw),
        })
    }

    /// Full byte-level pipeline: size checks on the headers, decode, colorize, PNG encode.
    pub fn colorize_png(&self, line_png: &[u8], strokes_png: Option<&[u8]>, max_side: u32) -> Result<(Vec<u8>, Colorized)> {
        let (w, h) = image_dimensions(line_png)?;
        check_side(w, h, max_side, "line art")?;
        if let Some(bytes) = strokes_png {
            let (sw, sh) = image_dimensions(bytes)?;
            check_side(sw, sh, max_side, "strokes")?;
            for (dim, expected, actual) in [("height", h, sh), ("width", w, sw)] {
                if expected != actual {
                    return Err(Error::ShapeMismatch {
                        what: "strokes vs line art",
                        dim,
                        expected: expected as i64,
                        actual: actual as i64,
                    });
                }
            }
        }
        let line = LineArt::new(grey_array(&decode_image(line_png)?))?;
        let strokes = strokes_png
            .map(|b| decode_image(b).and_then(|img| StrokeImage::new(rgba_array(&img))))
            .transpose()?;
        let result = self.colorize(&line, strokes.as_ref())?;
        let png = encode_png(&DynamicImage::ImageRgb8(rgb_image(&result.rgb)))?;
        Ok((png, result))
    }
}

fn check_side(w: u32, h: u32, max_side: u32, what: &str) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::arg(format!("{what} is empty")));
    }
    if w > max_side || h > max_side {
        return Err(Error::arg(format!("{what} is {w}x{h}, larger than the {max_side} pixel limit")));
    }
    Ok(())
}
