//! Frozen feature extractors.
//!
//! * Local features (F1): six convolutions on the line art, four of them with
//!   stride 2, giving a rectified `(C_f, H/16, W/16)` map that conditions both
//!   the generator and the critic. Pretrained on a multi-label tagging task.
//! * Perceptual features (F2): four convolutions on an RGB image with smooth
//!   softplus rectifiers, output stride 4, used by the content loss. Pretrained
//!   on a shape classification task.
//!
//! Both are frozen after pretraining. An extractor that was neither pretrained
//! nor loaded refuses to run.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tch::{Kind, Reduction, Tensor};

use crate::checkpoint::Container;
use crate::data::synth::{hsv_to_rgb, shape_drawing, SHAPE_CLASSES};
use crate::data::{Illustration, LineArt};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Conv, ConvSpec, Linear, ParamStore};
use crate::rng::{seeded, substream};

pub const LOCAL_TAG: &str = "tintline.f1.v1";
pub const PERCEPTUAL_TAG: &str = "tintline.f2.v1";

/// Smallest corpus accepted by the pretraining routines.
pub const MIN_PRETRAIN_CORPUS: usize = 200;

/// Tags derived by [`derive_tags`]: six hue buckets, three saturation levels,
/// three line-density levels.
pub const NUM_TAGS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorKind {
    Local,
    Perceptual,
}

impl ExtractorKind {
    fn label(self) -> &'static str {
        match self {
            ExtractorKind::Local => "local",
            ExtractorKind::Perceptual => "perceptual",
        }
    }

    pub fn stride(self) -> i64 {
        match self {
            ExtractorKind::Local => 16,
            ExtractorKind::Perceptual => 4,
        }
    }

    pub fn input_channels(self) -> i64 {
        match self {
            ExtractorKind::Local => 1,
            ExtractorKind::Perceptual => 3,
        }
    }

    /// (output channels, stride) of every convolution except the last, which
    /// emits the configured channel count with stride 1.
    fn plan(self) -> &'static [(i64, i64)] {
        match self {
            ExtractorKind::Local => &[(32, 2), (64, 2), (128, 2), (128, 1), (128, 2)],
            ExtractorKind::Perceptual => &[(16, 1), (32, 2), (32, 1)],
        }
    }

    fn activation(self) -> Activation {
        match self {
            ExtractorKind::Local => Activation::Relu,
            // A smooth embedding keeps the content loss differentiable everywhere.
            ExtractorKind::Perceptual => Activation::Softplus,
        }
    }

    /// The perceptual extractor's final convolution has stride 2.
    fn last_stride(self) -> i64 {
        match self {
            ExtractorKind::Local => 1,
            ExtractorKind::Perceptual => 2,
        }
    }
}

pub struct FeatureExtractor {
    kind: ExtractorKind,
    channels: i64,
    store: ParamStore,
    convs: Vec<Conv>,
    /// Provenance of the weights; `None` until pretrained or loaded.
    manifest: Option<serde_json::Value>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("tag", &self.architecture_tag())
            .field("initialized", &self.is_initialized())
            .finish()
    }
}

impl FeatureExtractor {
    /// Fresh, uninitialized architecture; `forward` fails until weights are
    /// pretrained, loaded, or explicitly randomized.
    pub fn new(kind: ExtractorKind, channels: i64, dtype: Kind, seed: u64) -> Result<Self> {
        if channels <= 0 {
            return Err(Error::arg("extractor channels must be positive"));
        }
        let mut store = ParamStore::new(dtype, seed);
        let prefix = match kind {
            ExtractorKind::Local => "f1",
            ExtractorKind::Perceptual => "f2",
        };
        let mut convs = Vec::new();
        let mut ch = kind.input_channels();
        for (i, &(out, stride)) in kind.plan().iter().enumerate() {
            let spec = ConvSpec::k(3).stride(stride);
            convs.push(Conv::new(&mut store, &format!("{prefix}.conv{}", i + 1), ch, out, spec, kind.activation()));
            ch = out;
        }
        let last = format!("{prefix}.conv{}", convs.len() + 1);
        let spec = ConvSpec::k(3).stride(kind.last_stride());
        convs.push(Conv::new(&mut store, &last, ch, channels, spec, kind.activation()));
        Ok(FeatureExtractor {
            kind,
            channels,
            store,
            convs,
            manifest: None,
        })
    }

    pub fn local(channels: i64, seed: u64) -> Result<Self> {
        Self::new(ExtractorKind::Local, channels, Kind::Float, seed)
    }

    pub fn perceptual(channels: i64, seed: u64) -> Result<Self> {
        Self::new(ExtractorKind::Perceptual, channels, Kind::Float, seed)
    }

    /// Mark the seeded initial weights as usable and freeze them. For tests and
    /// smoke runs where pretraining is not the point; recorded in the manifest.
    pub fn with_random_weights(mut self, seed: u64) -> Self {
        self.manifest = Some(json!({"init": "random", "seed": seed}));
        self.store.set_trainable(false);
        self
    }

    pub fn kind(&self) -> ExtractorKind {
        self.kind
    }

    pub fn channels(&self) -> i64 {
        self.channels
    }

    pub fn stride(&self) -> i64 {
        self.kind.stride()
    }

    pub fn dtype(&self) -> Kind {
        self.store.kind()
    }

    pub fn architecture_tag(&self) -> String {
        let base = match self.kind {
            ExtractorKind::Local => LOCAL_TAG,
            ExtractorKind::Perceptual => PERCEPTUAL_TAG,
        };
        format!("{base}/c{}", self.channels)
    }

    pub fn is_initialized(&self) -> bool {
        self.manifest.is_some()
    }

    pub fn manifest(&self) -> Option<&serde_json::Value> {
        self.manifest.as_ref()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn fingerprint(&self) -> String {
        self.store.fingerprint()
    }

    /// Feature map `(N, C, H/s, W/s)` for input `(N, C_in, H, W)`.
    ///
    /// Line art is expected in `[0, 1]` (white = 1), RGB in `[-1, 1]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if !self.is_initialized() {
            return Err(Error::ExtractorNotInitialized(match self.kind {
                ExtractorKind::Local => "local features (F1) have no pretrained or loaded weights",
                ExtractorKind::Perceptual => "perceptual features (F2) have no pretrained or loaded weights",
            }));
        }
        self.check_input(x)?;
        Ok(self.features(x))
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let size = x.size();
        let what = match self.kind {
            ExtractorKind::Local => "local feature input",
            ExtractorKind::Perceptual => "perceptual feature input",
        };
        if size.len() != 4 {
            return Err(Error::arg(format!("{what} must be rank 4 (N,C,H,W), got {size:?}")));
        }
        if size[1] != self.kind.input_channels() {
            return Err(Error::ShapeMismatch {
                what,
                dim: "channels",
                expected: self.kind.input_channels(),
                actual: size[1],
            });
        }
        let s = self.stride();
        if size[2] % s != 0 || size[3] % s != 0 {
            return Err(Error::arg(format!(
                "{what} {}x{} is not a multiple of {s}",
                size[2], size[3]
            )));
        }
        Ok(())
    }

    fn features(&self, x: &Tensor) -> Tensor {
        let x = x.to_kind(self.dtype());
        // Ink is the signal: map white to zero so zero padding means a blank background.
        let mut h = match self.kind {
            ExtractorKind::Local => 1.0 - x,
            ExtractorKind::Perceptual => x,
        };
        for conv in &self.convs {
            h = conv.forward(&h);
        }
        h
    }

    /// Spatially averaged features `(N, C)`.
    pub fn pooled(&self, x: &Tensor) -> Result<Tensor> {
        let f = self.forward(x)?;
        Ok(f.mean_dim([2i64, 3].as_slice(), false, f.kind()))
    }

    pub fn to_container(&self) -> Result<Container> {
        let manifest = self
            .manifest
            .clone()
            .ok_or(Error::ExtractorNotInitialized("cannot save an uninitialized extractor"))?;
        let meta = json!({
            "kind": self.kind,
            "channels": self.channels,
            "manifest": manifest,
        });
        let mut c = Container::new(self.architecture_tag(), meta);
        c.insert_section("params", self.store.snapshot());
        Ok(c)
    }

    pub fn from_container(c: &Container, dtype: Kind) -> Result<Self> {
        let kind: ExtractorKind = serde_json::from_value(c.meta["kind"].clone())?;
        let channels = c.meta["channels"]
            .as_i64()
            .ok_or_else(|| Error::Checkpoint("extractor channels missing".into()))?;
        let mut ex = Self::new(kind, channels, dtype, 0)?;
        c.expect_tag(&ex.architecture_tag())?;
        ex.store.load(&c.section("params"))?;
        ex.store.set_trainable(false);
        ex.manifest = Some(c.meta["manifest"].clone());
        Ok(ex)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    /// Load an extractor and check that it is of the expected kind.
    pub fn load(path: &Path, expected: ExtractorKind, dtype: Kind) -> Result<Self> {
        let ex = Self::from_container(&Container::load(path)?, dtype)?;
        if ex.kind != expected {
            return Err(Error::ArchitectureMismatch {
                expected: expected.label().to_string(),
                found: ex.kind.label().to_string(),
            });
        }
        Ok(ex)
    }

    /// Copy of this extractor in another floating-point precision.
    pub fn to_dtype(&self, dtype: Kind) -> Result<Self> {
        Self::from_container(&self.to_container()?, dtype)
    }
}

fn rgb_to_hsv(rgb: [f32; 3]) -> (f32, f32, f32) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0, s, max)
}

fn bucket(value: f32, edges: &[f32]) -> usize {
    edges.iter().take_while(|&&e| value >= e).count()
}

/// Multi-hot tags for a pair: hue buckets holding at least a fifth of the
/// saturated pixels, a saturation level, and an ink-density level.
pub fn derive_tags(line_art: &LineArt, illustration: &Illustration) -> Vec<f32> {
    let rgb = illustration.to_unit_rgb();
    let (_, h, w) = rgb.dim();
    let mut hue_counts = [0usize; 6];
    let mut saturated = 0usize;
    let mut sat_sum = 0.0f32;
    for y in 0..h {
        for x in 0..w {
            let (hue, s, v) = rgb_to_hsv([rgb[[0, y, x]], rgb[[1, y, x]], rgb[[2, y, x]]]);
            sat_sum += s;
            if s > 0.2 && v > 0.15 {
                saturated += 1;
                hue_counts[((hue * 6.0) as usize).min(5)] += 1;
            }
        }
    }
    let mut tags = vec![0.0f32; NUM_TAGS];
    for (i, &c) in hue_counts.iter().enumerate() {
        if saturated > 0 && c * 5 >= saturated {
            tags[i] = 1.0;
        }
    }
    let mean_sat = sat_sum / (h * w).max(1) as f32;
    tags[6 + bucket(mean_sat, &[0.2, 0.45])] = 1.0;
    let ink = line_art.pixels.iter().filter(|&&v| v < 0.5).count() as f32 / line_art.pixels.len().max(1) as f32;
    tags[9 + bucket(ink, &[0.05, 0.15])] = 1.0;
    tags
}

/// Labelled shape drawings, class `i % SHAPE_CLASSES` for item `i`.
pub fn shape_corpus(count: usize, side: usize, seed: u64) -> Vec<(LineArt, usize)> {
    let mut rng = substream(seed, "shape-corpus");
    (0..count)
        .map(|i| {
            let class = i % SHAPE_CLASSES;
            (shape_drawing(class, side, &mut rng), class)
        })
        .collect()
}

/// Shape drawings rendered with random ink and background colours, as `[-1, 1]` RGB.
pub fn colored_shape_corpus(count: usize, side: usize, seed: u64) -> Vec<(Array3<f32>, usize)> {
    let mut rng = substream(seed, "colored-shape-corpus");
    (0..count)
        .map(|i| {
            let class = i % SHAPE_CLASSES;
            let drawing = shape_drawing(class, side, &mut rng);
            let background = hsv_to_rgb(rng.random(), rng.random_range(0.0..0.6), rng.random_range(0.6..1.0));
            let ink = hsv_to_rgb(rng.random(), rng.random_range(0.3..1.0), rng.random_range(0.0..0.5));
            let img = Array3::from_shape_fn((3, side, side), |(c, y, x)| {
                let t = drawing.pixels[[y, x]];
                (background[c] * t + ink[c] * (1.0 - t)) * 2.0 - 1.0
            });
            (img, class)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub channels: i64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Held-out loss is evaluated every this many steps and after the last one.
    pub eval_every: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            channels: 128,
            steps: 300,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            holdout_fraction: 0.1,
            eval_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub corpus_size: usize,
    pub heldout_size: usize,
    pub train_loss: Vec<f64>,
    /// `(step, loss)` on the held-out split.
    pub heldout_curve: Vec<(usize, f64)>,
}

enum Targets {
    /// `(N, T)` multi-hot.
    Tags(Tensor),
    /// `(N,)` class indices.
    Classes(Tensor, i64),
}

impl Targets {
    fn width(&self) -> i64 {
        match self {
            Targets::Tags(t) => t.size()[1],
            Targets::Classes(_, k) => *k,
        }
    }

    fn loss(&self, logits: &Tensor, idx: &Tensor) -> Tensor {
        match self {
            Targets::Tags(t) => logits.binary_cross_entropy_with_logits::<Tensor>(
                &t.index_select(0, idx).to_kind(logits.kind()),
                None,
                None,
                Reduction::Mean,
            ),
            Targets::Classes(c, _) => logits.cross_entropy_for_logits(&c.index_select(0, idx)),
        }
    }
}

fn check_corpus(count: usize) -> Result<()> {
    if count < MIN_PRETRAIN_CORPUS {
        return Err(Error::CorpusTooSmall {
            found: count,
            required: MIN_PRETRAIN_CORPUS,
        });
    }
    Ok(())
}

fn stack_lines(items: &[&Array2<f32>]) -> Result<Tensor> {
    let first = items.first().map(|a| a.dim()).unwrap_or((0, 0));
    if items.iter().any(|a| a.dim() != first) {
        return Err(Error::arg("pretraining images must all have the same size"));
    }
    Ok(crate::tensor::batch2(items))
}

fn pretrain(
    mut extractor: FeatureExtractor,
    inputs: Tensor,
    targets: Targets,
    cfg: &PretrainConfig,
    task: &str,
) -> Result<(FeatureExtractor, PretrainReport)> {
    let n = inputs.size()[0] as usize;
    check_corpus(n)?;
    extractor.check_input(&inputs)?;
    if cfg.batch_size == 0 || cfg.eval_every == 0 || !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::arg("invalid pretraining configuration"));
    }
    let mut order: Vec<i64> = (0..n as i64).collect();
    order.shuffle(&mut substream(cfg.seed, "pretrain-split"));
    let heldout = ((n as f64 * cfg.holdout_fraction).round() as usize).max(1);
    let (test_idx, train_idx) = order.split_at(heldout);
    let test_idx = Tensor::from_slice(test_idx);
    let train_idx = train_idx.to_vec();

    let mut head_store = ParamStore::new(extractor.dtype(), cfg.seed ^ 0x5eed);
    let head = Linear::new(&mut head_store, "probe", extractor.channels, targets.width());
    let mut opt = Adam::new(&extractor.store, AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 });
    let mut head_opt = Adam::new(&head_store, AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 });
    let mut rng = substream(cfg.seed, "pretrain-batches");

    let logits = |ex: &FeatureExtractor, idx: &Tensor| {
        let f = ex.features(&inputs.index_select(0, idx));
        head.forward(&f.mean_dim([2i64, 3].as_slice(), false, f.kind()))
    };
    let heldout_loss = |ex: &FeatureExtractor| tch::no_grad(|| targets.loss(&logits(ex, &test_idx), &test_idx).double_value(&[]));

    let mut report = PretrainReport {
        corpus_size: n,
        heldout_size: heldout,
        train_loss: Vec::with_capacity(cfg.steps),
        heldout_curve: Vec::new(),
    };
    extractor.store.set_trainable(true);
    for step in 1..=cfg.steps {
        let batch: Vec<i64> = (0..cfg.batch_size)
            .map(|_| train_idx[rng.random_range(0..train_idx.len())])
            .collect();
        let idx = Tensor::from_slice(&batch);
        extractor.store.zero_grad();
        head_store.zero_grad();
        let loss = targets.loss(&logits(&extractor, &idx), &idx);
        let value = loss.double_value(&[]);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{task} pretraining loss at step {step}")));
        }
        loss.backward();
        opt.step(cfg.lr);
        head_opt.step(cfg.lr);
        report.train_loss.push(value);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            report.heldout_curve.push((step, heldout_loss(&extractor)));
        }
    }
    extractor.store.set_trainable(false);
    extractor.manifest = Some(json!({
        "init": "pretrained",
        "task": task,
        "config": cfg,
        "corpus_size": n,
        "final_heldout_loss": report.heldout_curve.last().map(|c| c.1),
    }));
    Ok((extractor, report))
}

/// Pretrain local features on multi-label tags of line-art images.
///
/// `corpus` pairs a line art with its tag vector (all vectors equally long).
pub fn pretrain_f1(corpus: &[(LineArt, Vec<f32>)], cfg: &PretrainConfig) -> Result<(FeatureExtractor, PretrainReport)> {
    check_corpus(corpus.len())?;
    let tags = corpus[0].1.len();
    if tags == 0 || corpus.iter().any(|(_, t)| t.len() != tags) {
        return Err(Error::arg("tag vectors must be non-empty and equally long"));
    }
    let lines: Vec<&Array2<f32>> = corpus.iter().map(|(l, _)| &l.pixels).collect();
    let flat: Vec<f32> = corpus.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    let targets = Tensor::from_slice(&flat).view([corpus.len() as i64, tags as i64]);
    let ex = FeatureExtractor::local(cfg.channels, cfg.seed)?;
    pretrain(ex, stack_lines(&lines)?, Targets::Tags(targets), cfg, "tags")
}

/// Pretrain perceptual features on RGB image classification.
pub fn pretrain_f2(
    corpus: &[(Array3<f32>, usize)],
    num_classes: usize,
    cfg: &PretrainConfig,
) -> Result<(FeatureExtractor, PretrainReport)> {
    check_corpus(corpus.len())?;
    if corpus.iter().any(|(_, c)| *c >= num_classes) {
        return Err(Error::arg("class index out of range"));
    }
    let first = corpus[0].0.dim();
    if first.0 != 3 || corpus.iter().any(|(a, _)| a.dim() != first) {
        return Err(Error::arg("classification images must be RGB and equally sized"));
    }
    let images: Vec<&Array3<f32>> = corpus.iter().map(|(a, _)| a).collect();
    let classes: Vec<i64> = corpus.iter().map(|(_, c)| *c as i64).collect();
    let ex = FeatureExtractor::perceptual(cfg.channels, cfg.seed)?;
    let targets = Targets::Classes(Tensor::from_slice(&classes), num_classes as i64);
    pretrain(ex, crate::tensor::batch3(&images), targets, cfg, "classification")
}

/// Held-out accuracy of a softmax regression on frozen, pooled, standardized
/// local features.
pub fn linear_probe_accuracy(
    extractor: &FeatureExtractor,
    train: &[(LineArt, usize)],
    test: &[(LineArt, usize)],
    num_classes: usize,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::arg("probe splits must be non-empty"));
    }
    let embed = |set: &[(LineArt, usize)]| -> Result<(Tensor, Tensor)> {
        let lines: Vec<&Array2<f32>> = set.iter().map(|(l, _)| &l.pixels).collect();
        let x = tch::no_grad(|| extractor.pooled(&stack_lines(&lines)?))?;
        let y: Vec<i64> = set.iter().map(|(_, c)| *c as i64).collect();
        Ok((x.to_kind(Kind::Float), Tensor::from_slice(&y)))
    };
    let (xtr, ytr) = embed(train)?;
    let (xte, yte) = embed(test)?;
    let mean = xtr.mean_dim(0, true, Kind::Float);
    let std = xtr.std_dim(0, false, true) + 1e-6;
    let xtr = (&xtr - &mean) / &std;
    let xte = (&xte - &mean) / &std;

    let mut store = ParamStore::new(Kind::Float, seeded(seed).random());
    let head = Linear::new(&mut store, "probe", extractor.channels, num_classes as i64);
    let mut opt = Adam::new(&store, AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 });
    for _ in 0..steps {
        store.zero_grad();
        head.forward(&xtr).cross_entropy_for_logits(&ytr).backward();
        opt.step(1e-2);
    }
    let pred = tch::no_grad(|| head.forward(&xte).argmax(1, false));
    Ok(pred.eq_tensor(&yte).to_kind(Kind::Double).mean(Kind::Double).double_value(&[]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use tch::Device;

    #[test]
    fn uninitialized_extractor_refuses() {
        let ex = FeatureExtractor::local(16, 0).unwrap();
        let x = Tensor::ones([1, 1, 32, 32], (Kind::Float, Device::Cpu));
        let err = ex.forward(&x).unwrap_err();
        assert!(matches!(err, Error::ExtractorNotInitialized(_)));
        assert!(err.to_string().contains("extractor not initialized"));
        assert!(ex.save(Path::new("/nonexistent/x")).is_err());
    }

    #[test]
    fn output_shapes_and_rectified() {
        let f1 = FeatureExtractor::local(24, 0).unwrap().with_random_weights(0);
        let x = Tensor::rand([2, 1, 64, 96], (Kind::Float, Device::Cpu));
        let y = f1.forward(&x).unwrap();
        assert_eq!(y.size(), vec![2, 24, 4, 6]);
        assert!(y.min().double_value(&[]) >= 0.0);

        let f2 = FeatureExtractor::perceptual(128, 0).unwrap().with_random_weights(0);
        let y = f2.forward(&Tensor::rand([1, 3, 128, 128], (Kind::Float, Device::Cpu))).unwrap();
        assert_eq!(y.size(), vec![1, 128, 32, 32]);
        assert!(f2.forward(&Tensor::rand([1, 1, 128, 128], (Kind::Float, Device::Cpu))).is_err());
        assert!(f1.forward(&Tensor::rand([1, 1, 40, 32], (Kind::Float, Device::Cpu))).is_err());
    }

    #[test]
    fn architecture_layout() {
        let f1 = FeatureExtractor::local(128, 0).unwrap();
        assert_eq!(f1.convs.len(), 6);
        assert_eq!(f1.convs.iter().filter(|c| c.spec.stride == 2).count(), 4);
        let f2 = FeatureExtractor::perceptual(128, 0).unwrap();
        assert_eq!(f2.convs.iter().map(|c| c.spec.stride).product::<i64>(), 4);
    }

    #[test]
    fn tags_are_multi_hot_with_one_level_each() {
        let mut rng = seeded(3);
        let ill = crate::data::synth::random_illustration(32, 32, &mut rng, "x");
        let line = shape_drawing(0, 32, &mut rng);
        let tags = derive_tags(&line, &ill);
        assert_eq!(tags.len(), NUM_TAGS);
        assert_eq!(tags[6..9].iter().sum::<f32>(), 1.0);
        assert_eq!(tags[9..12].iter().sum::<f32>(), 1.0);
        assert!(tags.iter().all(|&t| t == 0.0 || t == 1.0));
    }

    #[test]
    fn hsv_round_trip() {
        for &(h, s, v) in &[(0.1f32, 0.5f32, 0.8f32), (0.6, 1.0, 0.3), (0.9, 0.2, 1.0)] {
            let (h2, s2, v2) = rgb_to_hsv(hsv_to_rgb(h, s, v));
            assert!((h - h2).abs() < 1e-4 && (s - s2).abs() < 1e-4 && (v - v2).abs() < 1e-4);
        }
    }

    #[test]
    fn small_corpus_refused() {
        let corpus: Vec<(LineArt, Vec<f32>)> = shape_corpus(199, 32, 0)
            .into_iter()
            .map(|(l, c)| (l, vec![c as f32]))
            .collect();
        let err = pretrain_f1(&corpus, &PretrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::CorpusTooSmall { found: 199, required: 200 }));
    }
}
