//! Alternating critic/generator training with checkpoints and JSONL metrics.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tch::{Kind, Tensor};

use crate::checkpoint::Container;
use crate::data::{augment, AugmentConfig, PairDataset};
use crate::error::{Error, Result};
use crate::extractors::{ExtractorKind, FeatureExtractor};
use crate::hints::{sample_training_hints, HintTensor};
use crate::losses::{
    adversarial_loss, content_loss, critic_loss, discriminator_total, drift_penalty, finite_value, generator_total,
    gradient_penalty, interpolate, sample_mixing_weights, LossReport, LossWeights,
};
use crate::networks::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::nn::{Adam, AdamConfig, ParamStore};
use crate::rng::{substream, SeededRng};
use crate::tensor::{batch2, batch3};

pub const TRAINING_TAG: &str = "tintline.training.v1";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub total_iterations: u64,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// First iteration (zero-based) trained with `lr_final`.
    pub lr_drop_at: u64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    /// Critic updates per generator update. Zero trains the generator on the
    /// content loss alone, which only makes sense with a zero adversarial weight.
    pub critic_updates: u32,
    pub checkpoint_every: u64,
    pub augment: AugmentConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Local-feature extractor checkpoint.
    pub f1_path: Option<PathBuf>,
    /// Perceptual-feature extractor checkpoint.
    pub f2_path: Option<PathBuf>,
    /// Use seeded random extractor weights instead of checkpoints. Meant for
    /// smoke runs; recorded in every checkpoint.
    pub random_extractors: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 4,
            total_iterations: 250_000,
            lr_initial: 1e-4,
            lr_final: 1e-5,
            lr_drop_at: 125_000,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            critic_updates: 1,
            checkpoint_every: 5_000,
            augment: AugmentConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            f1_path: None,
            f2_path: None,
            random_extractors: false,
        }
    }
}

impl TrainConfig {
    /// Compact networks at `side`² with random frozen extractors, for CPU smoke runs.
    pub fn small(side: usize) -> Self {
        let mut cfg = TrainConfig::default();
        cfg.augment.side = side;
        cfg.generator.image_side = side as i64;
        cfg.generator.base_width = 8;
        cfg.generator.block_counts = [2, 1, 1, 1];
        cfg.generator.cardinality = 8;
        cfg.generator.feature_channels = 32;
        cfg.discriminator.base_width = 8;
        cfg.discriminator.depth_plan = [16, 32, 64, 64];
        cfg.discriminator.blocks = 1;
        cfg.discriminator.cardinality = 8;
        cfg.discriminator.cond_channels = 32;
        cfg.random_extractors = true;
        cfg
    }

    /// Step schedule: `lr_initial` before `lr_drop_at`, `lr_final` from then on.
    pub fn learning_rate(&self, iteration: u64) -> f64 {
        if iteration < self.lr_drop_at {
            self.lr_initial
        } else {
            self.lr_final
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size must be positive"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::arg("checkpoint_every must be positive"));
        }
        if self.critic_updates == 0 && self.weights.adversarial != 0.0 {
            return Err(Error::arg("critic_updates = 0 requires a zero adversarial weight"));
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0) {
            return Err(Error::arg("learning rates must be positive"));
        }
        let side = self.augment.side as i64;
        if side != self.generator.image_side {
            return Err(Error::arg(format!(
                "augment side {side} differs from generator image_side {}",
                self.generator.image_side
            )));
        }
        self.generator.validate()?;
        self.discriminator.validate(side)?;
        if self.generator.feature_channels != self.discriminator.cond_channels {
            return Err(Error::arg("generator and critic disagree on local feature channels"));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// One assembled minibatch.
pub struct Batch {
    /// `(N, 1, H, W)` in `[0, 1]`.
    pub line: Tensor,
    /// `(N, 3, H, W)` in `[-1, 1]`.
    pub color: Tensor,
    /// `(N, 4, H/4, W/4)`.
    pub hints: Tensor,
}

/// One JSONL metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    #[serde(flatten)]
    pub losses: LossReport,
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub start_iteration: u64,
    pub end_iteration: u64,
    pub checkpoints: Vec<PathBuf>,
    pub last: Option<LossReport>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator,
    pub critic: Discriminator,
    pub f1: FeatureExtractor,
    pub f2: FeatureExtractor,
    g_params: ParamStore,
    d_params: ParamStore,
    g_opt: Adam,
    d_opt: Adam,
    rng: SeededRng,
    iteration: u64,
}

fn load_extractor(path: &Option<PathBuf>, kind: ExtractorKind, random: bool, seed: u64, channels: i64) -> Result<FeatureExtractor> {
    match (path, random) {
        (Some(p), _) => FeatureExtractor::load(p, kind, Kind::Float),
        (None, true) => Ok(FeatureExtractor::new(kind, channels, Kind::Float, seed)?.with_random_weights(seed)),
        (None, false) => Err(Error::ExtractorNotInitialized(match kind {
            ExtractorKind::Local => "no local-feature checkpoint configured (f1_path)",
            ExtractorKind::Perceptual => "no perceptual-feature checkpoint configured (f2_path)",
        })),
    }
}

impl Trainer {
    /// Fresh trainer. Extractors come from the configured checkpoints.
    pub fn new(config: TrainConfig) -> Result<Self> {
        let f1 = load_extractor(
            &config.f1_path,
            ExtractorKind::Local,
            config.random_extractors,
            config.seed ^ 0xf1,
            config.generator.feature_channels,
        )?;
        let f2 = load_extractor(&config.f2_path, ExtractorKind::Perceptual, config.random_extractors, config.seed ^ 0xf2, 128)?;
        Self::with_extractors(config, f1, f2)
    }

    pub fn with_extractors(config: TrainConfig, f1: FeatureExtractor, f2: FeatureExtractor) -> Result<Self> {
        config.validate()?;
        if !f1.is_initialized() || !f2.is_initialized() {
            return Err(Error::ExtractorNotInitialized("training needs pretrained or loaded extractors"));
        }
        if f1.kind() != ExtractorKind::Local || f2.kind() != ExtractorKind::Perceptual {
            return Err(Error::arg("extractors passed in the wrong order"));
        }
        if f1.channels() != config.generator.feature_channels {
            return Err(Error::ArchitectureMismatch {
                expected: format!("local features with {} channels", config.generator.feature_channels),
                found: f1.architecture_tag(),
            });
        }
        let mut g_params = ParamStore::new(Kind::Float, substream(config.seed, "generator-init").random());
        let generator = Generator::new(&mut g_params, &config.generator)?;
        let mut d_params = ParamStore::new(Kind::Float, substream(config.seed, "critic-init").random());
        let critic = Discriminator::new(&mut d_params, &config.discriminator)?;
        let g_opt = Adam::new(&g_params, config.adam);
        let d_opt = Adam::new(&d_params, config.adam);
        let rng = substream(config.seed, "training");
        Ok(Trainer {
            config,
            generator,
            critic,
            f1,
            f2,
            g_params,
            d_params,
            g_opt,
            d_opt,
            rng,
            iteration: 0,
        })
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn generator_params(&self) -> &ParamStore {
        &self.g_params
    }

    pub fn critic_params(&self) -> &ParamStore {
        &self.d_params
    }

    /// Draw a minibatch: random pairs, augmentation, training hints.
    pub fn sample_batch(&mut self, dataset: &PairDataset) -> Result<Batch> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset(PathBuf::from("<dataset>")));
        }
        let mut lines = Vec::with_capacity(self.config.batch_size);
        let mut colors = Vec::with_capacity(self.config.batch_size);
        let mut hints = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let pair = &dataset.pairs[self.rng.random_range(0..dataset.len())];
            let (aug, _) = augment(pair, &self.config.augment, &mut self.rng)?;
            hints.push(sample_training_hints(&aug.illustration, &mut self.rng)?);
            lines.push(aug.line_art.pixels);
            colors.push(aug.illustration.pixels);
        }
        Ok(Batch {
            line: batch2(&lines.iter().collect::<Vec<_>>()),
            color: batch3(&colors.iter().collect::<Vec<_>>()),
            hints: HintTensor::batch(&hints),
        })
    }

    fn local_features(&self, line: &Tensor) -> Result<Tensor> {
        tch::no_grad(|| self.f1.forward(line))
    }

    /// Critic update on `batch`. Returns (critic, gp, drift, mean real score, mean fake score).
    fn critic_step(&mut self, batch: &Batch, features: &Tensor, lr: f64) -> Result<[f64; 5]> {
        let w = self.config.weights;
        let fake = tch::no_grad(|| self.generator.forward(&batch.line, &batch.hints, features))?;
        self.d_params.zero_grad();
        let real_scores = self.critic.forward(&batch.color, features)?;
        let fake_scores = self.critic.forward(&fake, features)?;
        let critic = critic_loss(&real_scores, &fake_scores)?;
        let eps = sample_mixing_weights(batch.color.size()[0] as usize, &mut self.rng);
        let mixed = interpolate(&batch.color, &fake, &eps)?;
        let gp = gradient_penalty(|y| self.critic.forward(y, features), &mixed, w.gradient_penalty)?;
        let drift = drift_penalty(&real_scores, w.drift)?;
        let total = &critic + &gp + &drift;
        let values = [
            finite_value(&critic, "critic loss")?,
            finite_value(&gp, "gradient penalty")?,
            finite_value(&drift, "drift penalty")?,
            finite_value(&real_scores.mean(Kind::Double), "real scores")?,
            finite_value(&fake_scores.mean(Kind::Double), "fake scores")?,
        ];
        finite_value(&total, "critic total")?;
        total.backward();
        self.d_opt.step(lr);
        Ok(values)
    }

    /// Generator update on `batch`. Returns (content, adversarial).
    fn generator_update(&mut self, batch: &Batch, features: &Tensor, lr: f64) -> Result<(f64, f64)> {
        let weight = self.config.weights.adversarial;
        self.g_params.zero_grad();
        // The critic is only differentiated through, not updated, here.
        self.d_params.set_trainable(false);
        let out = (|| -> Result<(f64, f64)> {
            let fake = self.generator.forward(&batch.line, &batch.hints, features)?;
            let content = content_loss(&self.f2, &fake, &batch.color)?;
            let (total, adv) = if weight == 0.0 {
                // Zero weight: the adversarial term is reported but kept out of the graph.
                let adv = tch::no_grad(|| adversarial_loss(&self.critic.forward(&fake.detach(), features)?))?;
                (content.shallow_clone(), adv)
            } else {
                let adv = adversarial_loss(&self.critic.forward(&fake, features)?)?;
                (&content + &adv * weight, adv)
            };
            let values = (finite_value(&content, "content loss")?, finite_value(&adv, "adversarial loss")?);
            finite_value(&total, "generator total")?;
            total.backward();
            Ok(values)
        })();
        self.d_params.set_trainable(true);
        let values = out?;
        self.g_opt.step(lr);
        Ok(values)
    }

    /// One iteration on a given batch: `critic_updates` critic updates, then a
    /// generator update.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossReport> {
        let lr = self.config.learning_rate(self.iteration);
        let features = self.local_features(&batch.line)?;
        let mut critic_values = [0.0; 5];
        for _ in 0..self.config.critic_updates {
            critic_values = self.critic_step(batch, &features, lr)?;
        }
        let [critic, gp, drift, d_real, d_fake] = critic_values;
        let (content, adversarial) = self.generator_update(batch, &features, lr)?;
        self.iteration += 1;
        Ok(LossReport {
            content,
            adversarial,
            critic,
            gradient_penalty: gp,
            drift,
            total_g: generator_total(content, adversarial, &self.config.weights),
            total_d: discriminator_total(critic, gp, drift),
            d_real,
            d_fake,
        })
    }

    /// Sample a batch from `dataset` and run [`Trainer::train_step`].
    pub fn step(&mut self, dataset: &PairDataset) -> Result<LossReport> {
        let batch = self.sample_batch(dataset)?;
        self.train_step(&batch)
    }

    /// Content loss of the current generator on `batch`, without updating anything.
    pub fn evaluate_content(&self, batch: &Batch) -> Result<f64> {
        tch::no_grad(|| {
            let features = self.f1.forward(&batch.line)?;
            let fake = self.generator.forward(&batch.line, &batch.hints, &features)?;
            finite_value(&content_loss(&self.f2, &fake, &batch.color)?, "content loss")
        })
    }

    /// Run until `total_iterations`, writing metrics and periodic checkpoints
    /// into `out_dir`. `observe` sees every iteration's report.
    pub fn fit<F>(&mut self, dataset: &PairDataset, out_dir: &Path, mut observe: F) -> Result<FitSummary>
    where
        F: FnMut(u64, &LossReport),
    {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset(out_dir.to_path_buf()));
        }
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let metrics_path = out_dir.join(METRICS_FILE);
        let mut metrics = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&metrics_path)
            .map_err(|e| Error::io(&metrics_path, e))?;
        let start = Instant::now();
        let mut summary = FitSummary {
            start_iteration: self.iteration,
            end_iteration: self.iteration,
            checkpoints: Vec::new(),
            last: None,
        };
        while self.iteration < self.config.total_iterations {
            let lr = self.config.learning_rate(self.iteration);
            let report = match self.step(dataset) {
                Ok(r) => r,
                Err(e @ Error::NonFinite(_)) => {
                    let diagnostic = json!({
                        "iteration": self.iteration + 1,
                        "error": e.to_string(),
                        "last_report": summary.last,
                        "last_checkpoint": summary.checkpoints.last(),
                    });
                    let path = out_dir.join(DIAGNOSTIC_FILE);
                    crate::data::io::write_atomic(&path, serde_json::to_string_pretty(&diagnostic)?.as_bytes())?;
                    log::error!("training aborted: {e}; diagnostic written to {}", path.display());
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            let record = MetricsRecord {
                iteration: self.iteration,
                losses: report,
                lr,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            writeln!(metrics, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(&metrics_path, e))?;
            observe(self.iteration, &report);
            summary.last = Some(report);
            if self.iteration % self.config.checkpoint_every == 0 || self.iteration == self.config.total_iterations {
                let path = out_dir.join(format!("ckpt_{:08}.ckpt", self.iteration));
                let container = self.to_container()?;
                container.save(&path)?;
                container.save(&out_dir.join(LATEST_CHECKPOINT))?;
                log::info!("iteration {}: checkpoint {}", self.iteration, path.display());
                summary.checkpoints.push(path);
            }
        }
        summary.end_iteration = self.iteration;
        Ok(summary)
    }

    pub fn to_container(&self) -> Result<Container> {
        let f1 = self.f1.to_container()?;
        let f2 = self.f2.to_container()?;
        let meta = json!({
            "iteration": self.iteration,
            "config": self.config,
            "config_hash": self.config.hash(),
            "rng": self.rng,
            "g_opt_steps": self.g_opt.steps_taken(),
            "d_opt_steps": self.d_opt.steps_taken(),
            "generator_tag": crate::networks::GENERATOR_TAG,
            "critic_tag": crate::networks::DISCRIMINATOR_TAG,
            "f1": {"tag": f1.architecture_tag, "meta": f1.meta},
            "f2": {"tag": f2.architecture_tag, "meta": f2.meta},
        });
        let mut c = Container::new(TRAINING_TAG, meta);
        c.insert_section("g", self.g_params.snapshot());
        c.insert_section("d", self.d_params.snapshot());
        c.insert_section("opt_g", self.g_opt.state_tensors());
        c.insert_section("opt_d", self.d_opt.state_tensors());
        for (name, t) in f1.tensors {
            c.tensors.insert(format!("f1/{name}"), t);
        }
        for (name, t) in f2.tensors {
            c.tensors.insert(format!("f2/{name}"), t);
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    /// Restore the complete training state from a checkpoint.
    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_tag(TRAINING_TAG)?;
        let config: TrainConfig = serde_json::from_value(c.meta["config"].clone())?;
        let f1 = extractor_from_section(c, "f1")?;
        let f2 = extractor_from_section(c, "f2")?;
        let mut t = Self::with_extractors(config, f1, f2)?;
        t.g_params.load(&c.section("g"))?;
        t.d_params.load(&c.section("d"))?;
        let steps = |key: &str| {
            c.meta[key]
                .as_u64()
                .ok_or_else(|| Error::Checkpoint(format!("{key} missing")))
        };
        t.g_opt.restore(steps("g_opt_steps")?, &c.section("opt_g"))?;
        t.d_opt.restore(steps("d_opt_steps")?, &c.section("opt_d"))?;
        t.rng = serde_json::from_value(c.meta["rng"].clone())?;
        t.iteration = steps("iteration")?;
        Ok(t)
    }

    pub fn resume(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Rebuild an extractor stored under `prefix` in a training checkpoint.
pub fn extractor_from_section(c: &Container, prefix: &str) -> Result<FeatureExtractor> {
    let info = &c.meta[prefix];
    let tag = info["tag"]
        .as_str()
        .ok_or_else(|| Error::Checkpoint(format!("{prefix} tag missing")))?;
    let mut sub = Container::new(tag, info["meta"].clone());
    let key = format!("{prefix}/");
    for (name, t) in &c.tensors {
        if let Some(rest) = name.strip_prefix(&key) {
            sub.tensors.insert(rest.to_string(), t.shallow_clone());
        }
    }
    FeatureExtractor::from_container(&sub, Kind::Float)
}
