//! Fréchet distance between embedded image sets, and batch auto-colorization.

use std::path::{Path, PathBuf};

use image::DynamicImage;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{s, Array3};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::forge::{list_images, SkippedFile};
use crate::data::io::{encode_png, grey_array, read_image, rgb_array, rgb_image, write_atomic};
use crate::data::LineArt;
use crate::error::{Error, Result};
use crate::extractors::{ExtractorKind, FeatureExtractor};
use crate::inference::Colorizer;

/// Mean and covariance of a set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub count: usize,
}

impl GaussianSummary {
    /// Sample mean and unbiased covariance of the rows of `embeddings`.
    pub fn from_embeddings(embeddings: &[Vec<f64>]) -> Result<Self> {
        let n = embeddings.len();
        if n < 2 {
            return Err(Error::arg(format!("need at least 2 embeddings for a covariance, got {n}")));
        }
        let d = embeddings[0].len();
        if d == 0 || embeddings.iter().any(|e| e.len() != d) {
            return Err(Error::arg("embeddings must be non-empty and of equal length"));
        }
        if embeddings.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| embeddings[i][j]);
        let mean: DVector<f64> = x.row_mean().transpose();
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut covariance = centered.transpose() * &centered / (n as f64 - 1.0);
        symmetrize(&mut covariance);
        Ok(GaussianSummary {
            mean,
            covariance,
            count: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Frechet distance together with how many eigenvalues had to be clamped to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetReport {
    pub distance: f64,
    pub clamped_eigenvalues: usize,
    /// Clamped eigenvalues over all eigenvalues inspected (two decompositions of size d).
    pub clamped_fraction: f64,
}

/// Square root of a symmetric positive semi-definite matrix, clamping negative
/// eigenvalues to zero. Returns the root and the number clamped.
fn psd_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(m.clone());
    let clamped = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    (v * DMatrix::from_diagonal(&roots) * v.transpose(), clamped)
}

/// `‖μa − μb‖² + tr Σa + tr Σb − 2 tr (Σa^{1/2} Σb Σa^{1/2})^{1/2}`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<FrechetReport> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            what: "gaussian summaries",
            dim: "embedding",
            expected: a.dim() as i64,
            actual: b.dim() as i64,
        });
    }
    let (root_a, clamped_a) = psd_sqrt(&a.covariance);
    let mut inner = &root_a * &b.covariance * &root_a;
    symmetrize(&mut inner);
    let eig = SymmetricEigen::new(inner);
    let clamped_b = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    let trace_root: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let diff = &a.mean - &b.mean;
    let distance = diff.norm_squared() + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_root;
    let clamped = clamped_a + clamped_b;
    Ok(FrechetReport {
        // Rounding can leave a tiny negative value for identical sets.
        distance: distance.max(0.0),
        clamped_eigenvalues: clamped,
        clamped_fraction: clamped as f64 / (2 * a.dim()) as f64,
    })
}

/// Maps an RGB image (`(3, H, W)`, `[0, 1]`) to a fixed-length vector.
pub trait Embedder {
    fn tag(&self) -> String;
    fn embed(&self, rgb: &Array3<f32>) -> Result<Vec<f64>>;
}

/// Spatially pooled activations of a frozen extractor. Images are center-cropped
/// to a multiple of the extractor stride; the local extractor sees the luma.
pub struct ExtractorEmbedder<'a>(pub &'a FeatureExtractor);

impl Embedder for ExtractorEmbedder<'_> {
    fn tag(&self) -> String {
        self.0.architecture_tag()
    }

    fn embed(&self, rgb: &Array3<f32>) -> Result<Vec<f64>> {
        let stride = self.0.stride() as usize;
        let (_, h, w) = rgb.dim();
        let (ch, cw) = (h / stride * stride, w / stride * stride);
        if ch == 0 || cw == 0 {
            return Err(Error::arg(format!("image {h}x{w} smaller than the extractor stride {stride}")));
        }
        let (top, left) = ((h - ch) / 2, (w - cw) / 2);
        let crop = rgb.slice(s![.., top..top + ch, left..left + cw]).to_owned();
        let x = match self.0.kind() {
            ExtractorKind::Local => {
                let grey = crate::data::types::luma(&crop);
                crate::tensor::from_array2(&grey).view([1, 1, ch as i64, cw as i64])
            }
            ExtractorKind::Perceptual => (crate::tensor::from_array3(&crop) * 2.0 - 1.0).unsqueeze(0),
        };
        let pooled = tch::no_grad(|| self.0.pooled(&x))?;
        crate::tensor::to_vec_f64(&pooled)
    }
}

/// Embeddings supplied by an external tool, looked up by image file name.
pub struct PrecomputedEmbedder {
    pub tag: String,
    pub vectors: std::collections::BTreeMap<String, Vec<f64>>,
}

/// Embed every image and summarize. At least two images are required.
pub fn embed_set(images: &[Array3<f32>], embedder: &dyn Embedder) -> Result<GaussianSummary> {
    if images.len() < 2 {
        return Err(Error::arg(format!("need at least 2 images to embed, got {}", images.len())));
    }
    let embeddings = images.iter().map(|img| embedder.embed(img)).collect::<Result<Vec<_>>>()?;
    GaussianSummary::from_embeddings(&embeddings)
}

/// Read every image of a directory as RGB in `[0, 1]`, sorted by file name.
pub fn load_image_set(dir: &Path) -> Result<Vec<(PathBuf, Array3<f32>)>> {
    list_images(dir)?
        .into_iter()
        .map(|p| Ok((p.clone(), rgb_array(&read_image(&p)?))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidResult {
    pub distance: f64,
    pub embed_tag: String,
    pub dim: usize,
    pub count_a: usize,
    pub count_b: usize,
    pub clamped_eigenvalues: usize,
    pub clamped_fraction: f64,
}

impl FidResult {
    pub fn new(a: &GaussianSummary, b: &GaussianSummary, embed_tag: impl Into<String>) -> Result<Self> {
        let report = frechet_distance(a, b)?;
        Ok(FidResult {
            distance: report.distance,
            embed_tag: embed_tag.into(),
            dim: a.dim(),
            count_a: a.count,
            count_b: b.count,
            clamped_eigenvalues: report.clamped_eigenvalues,
            clamped_fraction: report.clamped_fraction,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoColorizedFile {
    pub source: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoColorizeManifest {
    pub model_id: String,
    pub files: Vec<AutoColorizedFile>,
    pub skipped: Vec<SkippedFile>,
}

pub const AUTO_COLORIZE_MANIFEST: &str = "manifest.json";

/// Colorize every line art in `input` without hints, writing `<stem>.png` files
/// and a manifest into `output`. Unreadable inputs are skipped and recorded.
pub fn auto_colorize_set(colorizer: &Colorizer, input: &Path, output: &Path) -> Result<AutoColorizeManifest> {
    let mut manifest = AutoColorizeManifest {
        model_id: colorizer.model_id.clone(),
        files: Vec::new(),
        skipped: Vec::new(),
    };
    for path in list_images(input)? {
        let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let line = match read_image(&path).and_then(|img| LineArt::new(grey_array(&img))) {
            Ok(l) => l,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                manifest.skipped.push(SkippedFile {
                    source,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let result = colorizer.colorize(&line, None)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = format!("{stem}.png");
        write_atomic(&output.join(&name), &encode_png(&DynamicImage::ImageRgb8(rgb_image(&result.rgb)))?)?;
        manifest.files.push(AutoColorizedFile { source, output: name });
    }
    write_atomic(
        &output.join(AUTO_COLORIZE_MANIFEST),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

impl PrecomputedEmbedder {
    /// Vectors in the order of `names`; every name must be present.
    pub fn lookup(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        names
            .iter()
            .map(|n| {
                self.vectors
                    .get(n)
                    .cloned()
                    .ok_or_else(|| Error::arg(format!("no external embedding for {n}")))
            })
            .collect()
    }
}

/// Covariance helper on a tensor `(N, D)`, used to cross-check the nalgebra path.
pub fn tensor_covariance(x: &Tensor) -> Tensor {
    let x = x.to_kind(Kind::Double);
    let n = x.size()[0] as f64;
    let c = &x - x.mean_dim(0, true, Kind::Double);
    c.transpose(0, 1).matmul(&c) / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(mean: Vec<f64>, diag: Vec<f64>) -> GaussianSummary {
        GaussianSummary {
            mean: DVector::from_vec(mean),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(diag)),
            count: 10,
        }
    }

    #[test]
    fn identical_summaries_have_zero_distance() {
        let emb: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64 * 0.1, (i as f64).sin()]).collect();
        let s = GaussianSummary::from_embeddings(&emb).unwrap();
        assert!(frechet_distance(&s, &s).unwrap().distance <= 1e-6);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let a = summary(vec![1.0], vec![4.0]);
        let b = summary(vec![3.0], vec![9.0]);
        // (1-3)^2 + (2-3)^2
        assert!((frechet_distance(&a, &b).unwrap().distance - 5.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_matches_tensor_route() {
        let emb: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, 1.0 / (1.0 + i as f64), (i % 3) as f64]).collect();
        let s = GaussianSummary::from_embeddings(&emb).unwrap();
        let flat: Vec<f64> = emb.iter().flatten().copied().collect();
        let t = tensor_covariance(&Tensor::from_slice(&flat).view([7, 3]));
        for i in 0..3 {
            for j in 0..3 {
                assert!((s.covariance[(i, j)] - t.double_value(&[i as i64, j as i64])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_validation() {
        assert!(GaussianSummary::from_embeddings(&[vec![1.0]]).is_err());
        assert!(GaussianSummary::from_embeddings(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let a = summary(vec![0.0], vec![1.0]);
        let b = summary(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(frechet_distance(&a, &b).is_err());
    }

    #[test]
    fn negative_eigenvalues_are_clamped_and_counted() {
        let mut a = summary(vec![0.0, 0.0], vec![1.0, 1.0]);
        a.covariance[(1, 1)] = -1e-9;
        let r = frechet_distance(&a, &a).unwrap();
        assert!(r.clamped_eigenvalues >= 1);
        assert!(r.clamped_fraction > 0.0 && r.clamped_fraction <= 1.0);
    }
}
