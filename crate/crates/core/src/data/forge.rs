//! Directory-level forging of synthetic training pairs, and loading them back.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{load_illustration, load_line_art, save_illustration, save_line_art, write_atomic};
use super::pipeline::{resize_illustration, synthesize_pair, TrainingPair};
use super::synth::random_illustration;
use super::types::XdogParams;
use crate::error::{Error, Result};
use crate::rng::substream;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForgeConfig {
    pub side: usize,
    pub seed: u64,
    pub xdog: XdogParams,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            side: 128,
            seed: 0,
            xdog: XdogParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForgedFile {
    pub id: String,
    pub source: String,
    pub line: String,
    pub color: String,
    pub sigma: f32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SkippedFile {
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForgeManifest {
    pub seed: u64,
    pub side: usize,
    pub params: XdogParams,
    pub files: Vec<ForgedFile>,
    #[serde(default)]
    pub skipped: Vec<SkippedFile>,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Forge `<id>_line.png` / `<id>_color.png` for every image in `input`.
///
/// Each image is resized so its short side equals `cfg.side`, then filtered; its
/// randomness comes from a sub-stream keyed by the file stem, so results do not
/// depend on processing order.
pub fn forge_dir(input: &Path, output: &Path, cfg: &ForgeConfig) -> Result<ForgeManifest> {
    cfg.xdog.validate()?;
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let mut files = Vec::new();
    let mut skipped = Vec::new();
    for path in list_images(input)? {
        let source = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let illustration = match load_illustration(&path) {
            Ok(i) => i,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedFile {
                    source,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let id = illustration.source_id.clone();
        let resized = resize_illustration(&illustration, cfg.side);
        let mut rng = substream(cfg.seed, &id);
        let (pair, sigma) = synthesize_pair(&resized, &cfg.xdog, &mut rng)?;
        let line = format!("{id}_line.png");
        let color = format!("{id}_color.png");
        save_line_art(&output.join(&line), &pair.line_art)?;
        save_illustration(&output.join(&color), &pair.illustration)?;
        files.push(ForgedFile {
            id,
            source,
            line,
            color,
            sigma,
        });
    }
    let manifest = ForgeManifest {
        seed: cfg.seed,
        side: cfg.side,
        params: cfg.xdog,
        files,
        skipped,
    };
    write_atomic(&output.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Write `count` procedural illustrations as PNGs into `dir`.
pub fn write_synthetic_illustrations(dir: &Path, count: usize, side: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let id = format!("synth{i:05}");
            let ill = random_illustration(side, side, &mut substream(seed, &id), &id);
            let path = dir.join(format!("{id}.png"));
            save_illustration(&path, &ill)?;
            Ok(path)
        })
        .collect()
}

/// Forged pairs loaded into memory.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pub manifest: ForgeManifest,
    pub pairs: Vec<TrainingPair>,
}

impl PairDataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ForgeManifest = serde_json::from_slice(&bytes)?;
        if manifest.files.is_empty() {
            return Err(Error::EmptyDataset(dir.to_path_buf()));
        }
        let pairs = manifest
            .files
            .iter()
            .map(|f| {
                let mut illustration = load_illustration(&dir.join(&f.color))?;
                illustration.source_id = f.id.clone();
                TrainingPair::new(load_line_art(&dir.join(&f.line))?, illustration)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairDataset { manifest, pairs })
    }

    pub fn from_pairs(pairs: Vec<TrainingPair>, seed: u64, side: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset(PathBuf::from("<memory>")));
        }
        let files = pairs
            .iter()
            .map(|p| ForgedFile {
                id: p.illustration.source_id.clone(),
                source: String::new(),
                line: String::new(),
                color: String::new(),
                sigma: f32::NAN,
            })
            .collect();
        Ok(PairDataset {
            manifest: ForgeManifest {
                seed,
                side,
                params: XdogParams::default(),
                files,
                skipped: Vec::new(),
            },
            pairs,
        })
    }

    /// `count` procedural illustrations of `side`², forged in memory.
    pub fn synthetic(count: usize, side: usize, seed: u64) -> Result<Self> {
        let xdog = XdogParams::default();
        let pairs = (0..count)
            .map(|i| {
                let id = format!("synth{i:05}");
                let mut rng = substream(seed, &id);
                let ill = random_illustration(side, side, &mut rng, &id);
                Ok(synthesize_pair(&ill, &xdog, &mut rng)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(pairs, seed, side)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
