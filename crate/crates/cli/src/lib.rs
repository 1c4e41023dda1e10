//! Command implementations behind the `tintline` binary.

pub mod error;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::s;
use serde_json::{json, Value};
use tch::Kind;
use tintline::checkpoint::Container;
use tintline::data::forge::{write_synthetic_illustrations, ForgeConfig};
use tintline::data::io::write_atomic;
use tintline::data::{forge_dir, Illustration, LineArt, PairDataset, XdogParams};
use tintline::evaluation::{
    auto_colorize_set, embed_set, load_image_set, ExtractorEmbedder, FidResult, GaussianSummary, PrecomputedEmbedder,
};
use tintline::extractors::{
    colored_shape_corpus, derive_tags, pretrain_f1, pretrain_f2, ExtractorKind, FeatureExtractor, PretrainConfig,
};
use tintline::inference::{Colorizer, DEFAULT_MAX_SIDE};
use tintline::trainer::{extractor_from_section, TrainConfig, Trainer, TRAINING_TAG};

use crate::error::{CliError, CliResult};
use crate::manifest::{RunRecorder, RUN_LOG};

#[derive(Debug, Parser)]
#[command(name = "tintline", version, about = "Stroke-guided line-art colorization")]
pub struct Cli {
    /// Run log to append to, instead of `runs.jsonl` in the command's output directory.
    #[arg(long, global = true, value_name = "FILE")]
    pub run_log: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forge (line art, illustration) training pairs from a folder of illustrations.
    Forge(ForgeArgs),
    /// Pretrain the local feature extractor on tags derived from forged pairs.
    #[command(name = "pretrain-f1")]
    PretrainF1(PretrainF1Args),
    /// Pretrain the perceptual feature extractor on a synthetic classification task.
    #[command(name = "pretrain-f2")]
    PretrainF2(PretrainF2Args),
    /// Train the generator and critic.
    Train(TrainArgs),
    /// Colorize one line art, optionally guided by a stroke layer.
    Colorize(ColorizeArgs),
    /// Colorize every line art in a folder without hints.
    #[command(name = "auto-colorize")]
    AutoColorize(AutoColorizeArgs),
    /// Fréchet distance between two image folders in a feature space.
    Fid(FidArgs),
    /// Run the HTTP colorization service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ForgeArgs {
    /// Folder of PNG/JPEG illustrations.
    #[arg(long, value_name = "DIR", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Destination for `<id>_line.png`, `<id>_color.png` and `manifest.json`.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    /// Short side after resizing.
    #[arg(long, default_value_t = 128)]
    pub side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generate this many procedural illustrations into `<output>/source` and forge those.
    #[arg(long, value_name = "N", conflicts_with = "input")]
    pub synthetic: Option<usize>,
    /// Ratio of the wide to the narrow blur.
    #[arg(long, default_value_t = 4.5)]
    pub kappa: f32,
    /// Weight of the wide blur.
    #[arg(long, default_value_t = 0.95)]
    pub tau: f32,
    /// Steepness of the threshold ramp.
    #[arg(long, default_value_t = 1e9)]
    pub phi: f32,
    /// Threshold level.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f32,
}

#[derive(Debug, Args)]
pub struct PretrainF1Args {
    /// Forged pair folder (output of `forge`).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Extractor checkpoint to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub channels: i64,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the corpus held out for the loss curve.
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
}

#[derive(Debug, Args)]
pub struct PretrainF2Args {
    /// Extractor checkpoint to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Number of synthetic training images.
    #[arg(long, default_value_t = 600)]
    pub count: usize,
    /// Side of the synthetic images.
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: i64,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training configuration; missing keys take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Forged pair folder.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output folder for checkpoints and metrics.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Continue from a training checkpoint; its stored configuration is used.
    #[arg(long, value_name = "CKPT")]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `total_iterations`.
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Local feature extractor checkpoint.
    #[arg(long, value_name = "FILE")]
    pub f1: Option<PathBuf>,
    /// Perceptual feature extractor checkpoint.
    #[arg(long, value_name = "FILE")]
    pub f2: Option<PathBuf>,
    /// Use frozen random extractors (smoke runs only).
    #[arg(long)]
    pub random_extractors: bool,
    /// Log losses every this many iterations.
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
}

#[derive(Debug, Args)]
pub struct ColorizeArgs {
    /// Line art image (converted to greyscale).
    #[arg(long, value_name = "FILE")]
    pub line: PathBuf,
    /// RGBA stroke layer of the same size; omitted means no hints.
    #[arg(long, value_name = "FILE")]
    pub strokes: Option<PathBuf>,
    /// Training checkpoint.
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    /// Output PNG.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_SIDE)]
    pub max_side: u32,
}

#[derive(Debug, Args)]
pub struct AutoColorizeArgs {
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,
    #[arg(long, value_name = "CKPT")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedChoice {
    F1,
    F2,
    External,
}

#[derive(Debug, Args)]
pub struct FidArgs {
    #[arg(long, value_name = "DIR")]
    pub set_a: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub set_b: PathBuf,
    /// Feature space.
    #[arg(long, value_enum)]
    pub embed: EmbedChoice,
    /// Report JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Extractor checkpoint, or a training checkpoint holding both extractors (f1/f2).
    #[arg(long, value_name = "FILE")]
    pub extractor: Option<PathBuf>,
    /// Precomputed vectors `{"tag": .., "vectors": {name: [..]}}` (external). Keys are
    /// `<set folder name>/<file name>` or just the file name.
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Folder of `*.ckpt` training checkpoints.
    #[arg(long, value_name = "DIR", env = "MODEL_DIR")]
    pub models: PathBuf,
    #[arg(long, value_name = "HOST:PORT", env = "BIND_ADDR", default_value = tintline_service::config::DEFAULT_BIND)]
    pub bind: std::net::SocketAddr,
    #[arg(long, env = "MAX_SIDE", default_value_t = DEFAULT_MAX_SIDE)]
    pub max_side: u32,
    /// Loaded models kept in memory.
    #[arg(long, env = "MODEL_CACHE", default_value_t = tintline_service::config::DEFAULT_CACHE)]
    pub cache: usize,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Forge(_) => "forge",
            Command::PretrainF1(_) => "pretrain-f1",
            Command::PretrainF2(_) => "pretrain-f2",
            Command::Train(_) => "train",
            Command::Colorize(_) => "colorize",
            Command::AutoColorize(_) => "auto-colorize",
            Command::Fid(_) => "fid",
            Command::Serve(_) => "serve",
        }
    }

    /// Folder whose run log records this invocation.
    fn log_dir(&self) -> PathBuf {
        let parent = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
        match self {
            Command::Forge(a) => a.output.clone(),
            Command::PretrainF1(a) => parent(&a.out),
            Command::PretrainF2(a) => parent(&a.out),
            Command::Train(a) => a.out.clone(),
            Command::Colorize(a) => parent(&a.out),
            Command::AutoColorize(a) => a.output.clone(),
            Command::Fid(a) => parent(&a.out),
            Command::Serve(_) => PathBuf::new(),
        }
    }
}

/// Run a parsed command line and append its record to the run log.
pub fn run(cli: Cli) -> CliResult<()> {
    let log = cli.run_log.clone().unwrap_or_else(|| cli.command.log_dir().join(RUN_LOG));
    let mut rec = RunRecorder::new(cli.command.name(), Value::Null, None);
    let result = dispatch(&cli.command, &mut rec);
    let record = rec.finish(result.as_ref().err().map(|e| e.to_string()));
    if let Err(e) = manifest::append(&log, &record) {
        log::warn!("cannot append run log {}: {e}", log.display());
    }
    result
}

fn dispatch(cmd: &Command, rec: &mut RunRecorder) -> CliResult<()> {
    match cmd {
        Command::Forge(a) => forge(a, rec),
        Command::PretrainF1(a) => pretrain_local(a, rec),
        Command::PretrainF2(a) => pretrain_perceptual(a, rec),
        Command::Train(a) => train(a, rec),
        Command::Colorize(a) => colorize(a, rec),
        Command::AutoColorize(a) => auto_colorize(a, rec),
        Command::Fid(a) => fid(a, rec),
        Command::Serve(a) => serve(a, rec),
    }
}

fn set_config(rec: &mut RunRecorder, config: Value, seed: Option<u64>) {
    rec.configure(config, seed);
}

fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::BadArgs(format!("{what} {} is not a folder", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::BadArgs(format!("{what} {} does not exist", path.display())))
    }
}

fn load_colorizer(path: &Path) -> CliResult<Colorizer> {
    Colorizer::load(path).map_err(|e| CliError::model_load(path, e))
}

pub fn forge(a: &ForgeArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let xdog = XdogParams {
        kappa: a.kappa,
        tau: a.tau,
        phi: a.phi,
        epsilon_t: a.epsilon,
        ..XdogParams::default()
    };
    xdog.validate().map_err(|e| CliError::BadArgs(e.to_string()))?;
    if a.side == 0 {
        return Err(CliError::BadArgs("--side must be positive".into()));
    }
    let cfg = ForgeConfig {
        side: a.side,
        seed: a.seed,
        xdog,
    };
    set_config(rec, json!({"forge": cfg, "synthetic": a.synthetic}), Some(a.seed));
    let input = match (&a.input, a.synthetic) {
        (_, Some(n)) => {
            let dir = a.output.join("source");
            write_synthetic_illustrations(&dir, n, a.side, a.seed)?;
            dir
        }
        (Some(dir), None) => {
            require_dir(dir, "--input")?;
            dir.clone()
        }
        (None, None) => return Err(CliError::BadArgs("--input or --synthetic is required".into())),
    };
    rec.input(&input);
    let manifest = forge_dir(&input, &a.output, &cfg)?;
    rec.output(&a.output);
    println!(
        "forged {} pairs into {} ({} skipped)",
        manifest.files.len(),
        a.output.display(),
        manifest.skipped.len()
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> CliResult<PairDataset> {
    require_dir(dir, "--data")?;
    Ok(PairDataset::load(dir)?)
}

/// Centre crop a pair to `side`².
fn square_crop(line: &LineArt, ill: &Illustration, side: usize) -> CliResult<(LineArt, Illustration)> {
    let (top, left) = ((line.height() - side) / 2, (line.width() - side) / 2);
    let l = LineArt::new(line.pixels.slice(s![top..top + side, left..left + side]).to_owned())?;
    let i = Illustration::new(
        ill.pixels.slice(s![.., top..top + side, left..left + side]).to_owned(),
        ill.source_id.clone(),
    )?;
    Ok((l, i))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    Ok(write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())?)
}

fn report_path(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}

pub fn pretrain_local(a: &PretrainF1Args, rec: &mut RunRecorder) -> CliResult<()> {
    let cfg = PretrainConfig {
        channels: a.channels,
        steps: a.steps,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        holdout_fraction: a.holdout,
        ..PretrainConfig::default()
    };
    set_config(rec, json!({"pretrain": cfg}), Some(a.seed));
    let ds = load_dataset(&a.data)?;
    rec.input(&a.data);
    // Batching needs equal sizes: crop every pair to the largest common square
    // whose side is a multiple of 16.
    let side = ds.pairs.iter().map(|p| p.line_art.height().min(p.line_art.width())).min().unwrap_or(0) / 16 * 16;
    if side == 0 {
        return Err(CliError::BadArgs("pairs must be at least 16 pixels on each side".into()));
    }
    let corpus = ds
        .pairs
        .iter()
        .map(|p| {
            let (l, i) = square_crop(&p.line_art, &p.illustration, side)?;
            let tags = derive_tags(&l, &i);
            Ok((l, tags))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (extractor, report) = pretrain_f1(&corpus, &cfg)?;
    extractor.save(&a.out)?;
    write_json(&report_path(&a.out), &report)?;
    rec.output(&a.out);
    rec.output(report_path(&a.out));
    println!(
        "local extractor written to {} (held-out loss {:.4})",
        a.out.display(),
        report.heldout_curve.last().map_or(f64::NAN, |c| c.1)
    );
    Ok(())
}

pub fn pretrain_perceptual(a: &PretrainF2Args, rec: &mut RunRecorder) -> CliResult<()> {
    let cfg = PretrainConfig {
        channels: a.channels,
        steps: a.steps,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        ..PretrainConfig::default()
    };
    set_config(rec, json!({"pretrain": cfg, "count": a.count, "side": a.side}), Some(a.seed));
    if a.side == 0 || a.side % 4 != 0 {
        return Err(CliError::BadArgs("--side must be a positive multiple of 4".into()));
    }
    let corpus = colored_shape_corpus(a.count, a.side, a.seed);
    let (extractor, report) = pretrain_f2(&corpus, tintline::data::synth::SHAPE_CLASSES, &cfg)?;
    extractor.save(&a.out)?;
    write_json(&report_path(&a.out), &report)?;
    rec.output(&a.out);
    rec.output(report_path(&a.out));
    println!("perceptual extractor written to {}", a.out.display());
    Ok(())
}

fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(path) => {
            require_file(path, "--config")?;
            let text = fs::read_to_string(path).map_err(|e| CliError::BadArgs(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::BadArgs(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.total_iterations = n;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(k) = a.checkpoint_every {
        cfg.checkpoint_every = k;
    }
    if let Some(p) = &a.f1 {
        cfg.f1_path = Some(p.clone());
    }
    if let Some(p) = &a.f2 {
        cfg.f2_path = Some(p.clone());
    }
    if a.random_extractors {
        cfg.random_extractors = true;
    }
    cfg.validate().map_err(|e| CliError::BadArgs(e.to_string()))?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let mut trainer = match &a.resume {
        Some(path) => {
            require_file(path, "--resume")?;
            let mut t = Trainer::resume(path).map_err(|e| CliError::model_load(path, e))?;
            if let Some(n) = a.iterations {
                t.config.total_iterations = n;
            }
            if let Some(k) = a.checkpoint_every {
                t.config.checkpoint_every = k;
            }
            t
        }
        None => Trainer::new(train_config(a)?)?,
    };
    set_config(rec, serde_json::to_value(&trainer.config)?, Some(trainer.config.seed));
    rec.input(&a.data);
    if let Some(p) = &a.resume {
        rec.input(p);
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::Other(format!("{}: {e}", a.out.display())))?;
    write_json(&a.out.join("config.json"), &trainer.config)?;
    let every = a.log_every.max(1);
    let summary = trainer.fit(&ds, &a.out, |it, r| {
        if it % every == 0 {
            log::info!(
                "iteration {it}: content {:.5} adversarial {:.4} critic {:.4} gp {:.4}",
                r.content,
                r.adversarial,
                r.critic,
                r.gradient_penalty
            );
        }
    })?;
    for c in &summary.checkpoints {
        rec.output(c);
    }
    rec.output(a.out.join(tintline::trainer::METRICS_FILE));
    println!(
        "trained iterations {}..{} into {}",
        summary.start_iteration,
        summary.end_iteration,
        a.out.display()
    );
    Ok(())
}

fn read_input(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    require_file(path, what)?;
    fs::read(path).map_err(|e| CliError::BadArgs(format!("{what} {}: {e}", path.display())))
}

pub fn colorize(a: &ColorizeArgs, rec: &mut RunRecorder) -> CliResult<()> {
    set_config(
        rec,
        json!({"checkpoint": a.checkpoint, "max_side": a.max_side, "strokes": a.strokes.is_some()}),
        None,
    );
    let line = read_input(&a.line, "--line")?;
    let strokes = a.strokes.as_ref().map(|p| read_input(p, "--strokes")).transpose()?;
    let model = load_colorizer(&a.checkpoint)?;
    rec.input(&a.line);
    if let Some(p) = &a.strokes {
        rec.input(p);
    }
    rec.input(&a.checkpoint);
    let (png, result) = model
        .colorize_png(&line, strokes.as_deref(), a.max_side)
        .map_err(|e| match e {
            tintline::Error::Decode(m) => CliError::Decode {
                path: a.line.display().to_string(),
                message: m,
            },
            other => other.into(),
        })?;
    write_atomic(&a.out, &png)?;
    rec.output(&a.out);
    let (_, h, w) = result.rgb.dim();
    println!("wrote {} ({w}x{h}, {} hint cells)", a.out.display(), result.hints.active_cells());
    Ok(())
}

pub fn auto_colorize(a: &AutoColorizeArgs, rec: &mut RunRecorder) -> CliResult<()> {
    set_config(rec, json!({"checkpoint": a.checkpoint}), None);
    require_dir(&a.input, "--input")?;
    let model = load_colorizer(&a.checkpoint)?;
    fs::create_dir_all(&a.output).map_err(|e| CliError::Other(format!("{}: {e}", a.output.display())))?;
    rec.input(&a.input);
    rec.input(&a.checkpoint);
    let manifest = auto_colorize_set(&model, &a.input, &a.output)?;
    rec.output(&a.output);
    println!(
        "colorized {} line arts into {} ({} skipped)",
        manifest.files.len(),
        a.output.display(),
        manifest.skipped.len()
    );
    Ok(())
}

/// Load an extractor of `kind` from an extractor checkpoint or a training checkpoint.
fn load_extractor(path: &Path, kind: ExtractorKind) -> CliResult<FeatureExtractor> {
    require_file(path, "--extractor")?;
    let c = Container::load(path).map_err(|e| CliError::model_load(path, e))?;
    let ex = if c.architecture_tag == TRAINING_TAG {
        let prefix = match kind {
            ExtractorKind::Local => "f1",
            ExtractorKind::Perceptual => "f2",
        };
        extractor_from_section(&c, prefix)
    } else {
        FeatureExtractor::from_container(&c, Kind::Float)
    }
    .map_err(|e| CliError::model_load(path, e))?;
    if ex.kind() != kind {
        return Err(CliError::model_load(
            path,
            tintline::Error::ArchitectureMismatch {
                expected: format!("{kind:?} extractor"),
                found: ex.architecture_tag(),
            },
        ));
    }
    Ok(ex)
}

fn external_vectors(path: &Path, dir: &Path, files: &[PathBuf]) -> CliResult<(String, Vec<Vec<f64>>)> {
    require_file(path, "--vectors")?;
    let v: Value = serde_json::from_slice(&fs::read(path).map_err(|e| CliError::BadArgs(e.to_string()))?)
        .map_err(|e| CliError::BadArgs(format!("{}: {e}", path.display())))?;
    let vectors = serde_json::from_value(v["vectors"].clone())
        .map_err(|e| CliError::BadArgs(format!("{}: vectors: {e}", path.display())))?;
    let embedder = PrecomputedEmbedder {
        tag: v["tag"].as_str().unwrap_or("external").to_string(),
        vectors,
    };
    let set = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let names: Vec<String> = files
        .iter()
        .map(|f| {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let qualified = format!("{set}/{name}");
            if embedder.vectors.contains_key(&qualified) {
                qualified
            } else {
                name
            }
        })
        .collect();
    let rows = embedder.lookup(&names).map_err(|e| CliError::BadArgs(e.to_string()))?;
    Ok((embedder.tag, rows))
}

pub fn fid(a: &FidArgs, rec: &mut RunRecorder) -> CliResult<()> {
    set_config(
        rec,
        json!({"embed": format!("{:?}", a.embed).to_lowercase(), "extractor": a.extractor, "vectors": a.vectors}),
        None,
    );
    require_dir(&a.set_a, "--set-a")?;
    require_dir(&a.set_b, "--set-b")?;
    rec.input(&a.set_a);
    rec.input(&a.set_b);
    let (tag, sa, sb) = match a.embed {
        EmbedChoice::External => {
            let vectors = a
                .vectors
                .as_ref()
                .ok_or_else(|| CliError::BadArgs("--embed external needs --vectors".into()))?;
            rec.input(vectors);
            let list = |d: &Path| tintline::data::forge::list_images(d).map_err(CliError::from);
            let (ta, ra) = external_vectors(vectors, &a.set_a, &list(&a.set_a)?)?;
            let (_, rb) = external_vectors(vectors, &a.set_b, &list(&a.set_b)?)?;
            (ta, GaussianSummary::from_embeddings(&ra)?, GaussianSummary::from_embeddings(&rb)?)
        }
        choice => {
            let kind = if choice == EmbedChoice::F1 {
                ExtractorKind::Local
            } else {
                ExtractorKind::Perceptual
            };
            let path = a
                .extractor
                .as_ref()
                .ok_or_else(|| CliError::BadArgs("--embed f1/f2 needs --extractor".into()))?;
            let ex = load_extractor(path, kind)?;
            rec.input(path);
            let images = |d: &Path| -> CliResult<Vec<_>> {
                Ok(load_image_set(d)?.into_iter().map(|(_, img)| img).collect())
            };
            let embedder = ExtractorEmbedder(&ex);
            let sa = embed_set(&images(&a.set_a)?, &embedder)?;
            let sb = embed_set(&images(&a.set_b)?, &embedder)?;
            (ex.architecture_tag(), sa, sb)
        }
    };
    let result = FidResult::new(&sa, &sb, tag)?;
    if result.clamped_fraction >= 0.05 {
        log::warn!(
            "{} of {} eigenvalues clamped; the covariance estimate is poorly conditioned",
            result.clamped_eigenvalues,
            result.dim
        );
    }
    write_json(&a.out, &result)?;
    rec.output(&a.out);
    println!("FID {:.6} ({})", result.distance, result.embed_tag);
    Ok(())
}

pub fn serve(a: &ServeArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let config = tintline_service::ServiceConfig {
        model_dir: a.models.clone(),
        max_side: a.max_side,
        bind_addr: a.bind,
        cache_capacity: a.cache,
        ..Default::default()
    };
    set_config(
        rec,
        json!({"models": a.models, "bind": a.bind.to_string(), "max_side": a.max_side, "cache": a.cache}),
        None,
    );
    require_dir(&a.models, "--models")?;
    rec.input(&a.models);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    runtime
        .block_on(tintline_service::serve(config))
        .map_err(|e| CliError::Other(e.to_string()))
}
