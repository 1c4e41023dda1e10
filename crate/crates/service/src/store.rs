//! Read-only model store: checkpoints are discovered once, loaded in the
//! background on first use and kept in a small LRU cache.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::Value;
use tintline::checkpoint::Container;
use tintline::inference::Colorizer;

use crate::ServiceError;

pub const CHECKPOINT_EXTENSION: &str = "ckpt";

pub type SharedModel = Arc<Mutex<Colorizer>>;
pub type Loader = Arc<dyn Fn(&Path) -> tintline::Result<Colorizer> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelState {
    Unloaded,
    Loading,
    Ready,
    Failed,
}

enum Slot {
    Unloaded,
    Loading,
    Ready(SharedModel),
    Failed(String),
}

impl Slot {
    fn state(&self) -> ModelState {
        match self {
            Slot::Unloaded => ModelState::Unloaded,
            Slot::Loading => ModelState::Loading,
            Slot::Ready(_) => ModelState::Ready,
            Slot::Failed(_) => ModelState::Failed,
        }
    }
}

struct Entry {
    path: PathBuf,
    summary: Value,
    slot: Slot,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub id: String,
    pub state: ModelState,
    pub path: PathBuf,
    /// Training iteration and generator configuration from the checkpoint header.
    pub summary: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub enum Lookup {
    Ready(SharedModel),
    Loading,
    Failed(String),
    Unknown,
}

struct Inner {
    entries: BTreeMap<String, Entry>,
    /// Ready models, most recently used last.
    recent: VecDeque<String>,
}

pub struct ModelStore {
    capacity: usize,
    loader: Loader,
    inner: Mutex<Inner>,
}

fn summarize(path: &Path) -> Value {
    match Container::peek(path) {
        Ok((tag, meta)) => serde_json::json!({
            "architecture_tag": tag,
            "iteration": meta["iteration"],
            "config_hash": meta["config_hash"],
            "generator": meta["config"]["generator"],
        }),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    }
}

impl ModelStore {
    /// Index every `*.ckpt` file in `dir`; the model id is the file stem.
    pub fn scan(dir: &Path, capacity: usize) -> Result<Self, ServiceError> {
        Self::with_loader(dir, capacity, Arc::new(|p: &Path| Colorizer::load(p)))
    }

    pub fn with_loader(dir: &Path, capacity: usize, loader: Loader) -> Result<Self, ServiceError> {
        let read = std::fs::read_dir(dir)
            .map_err(|e| ServiceError::Config(format!("cannot read model directory {}: {e}", dir.display())))?;
        let mut entries = BTreeMap::new();
        for path in read.filter_map(|e| e.ok().map(|e| e.path())) {
            if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(CHECKPOINT_EXTENSION) {
                continue;
            }
            let Some(id) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) else {
                continue;
            };
            let summary = summarize(&path);
            entries.insert(
                id,
                Entry {
                    path,
                    summary,
                    slot: Slot::Unloaded,
                },
            );
        }
        Ok(ModelStore {
            capacity: capacity.max(1),
            loader,
            inner: Mutex::new(Inner {
                entries,
                recent: VecDeque::new(),
            }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn ids(&self) -> Vec<String> {
        self.lock().entries.keys().cloned().collect()
    }

    /// The first id in sorted order, used when a request names no model.
    pub fn default_id(&self) -> Option<String> {
        self.lock().entries.keys().next().cloned()
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.lock()
            .entries
            .iter()
            .map(|(id, e)| ModelInfo {
                id: id.clone(),
                state: e.slot.state(),
                path: e.path.clone(),
                summary: e.summary.clone(),
                error: match &e.slot {
                    Slot::Failed(msg) => Some(msg.clone()),
                    _ => None,
                },
            })
            .collect()
    }

    /// `loading` while any load is in flight, `ok` once a model is ready,
    /// `idle` when nothing is loaded, `no_models` for an empty directory.
    pub fn status(&self) -> &'static str {
        let inner = self.lock();
        let states: Vec<ModelState> = inner.entries.values().map(|e| e.slot.state()).collect();
        if states.is_empty() {
            "no_models"
        } else if states.contains(&ModelState::Loading) {
            "loading"
        } else if states.contains(&ModelState::Ready) {
            "ok"
        } else {
            "idle"
        }
    }

    /// Ready model, or start loading it in the background.
    pub fn get(self: &Arc<Self>, id: &str) -> Lookup {
        let mut inner = self.lock();
        let Some(entry) = inner.entries.get_mut(id) else {
            return Lookup::Unknown;
        };
        match &entry.slot {
            Slot::Ready(m) => {
                let m = m.clone();
                inner.recent.retain(|r| r != id);
                inner.recent.push_back(id.to_string());
                Lookup::Ready(m)
            }
            Slot::Loading => Lookup::Loading,
            Slot::Failed(msg) => Lookup::Failed(msg.clone()),
            Slot::Unloaded => {
                entry.slot = Slot::Loading;
                let path = entry.path.clone();
                drop(inner);
                self.spawn_load(id.to_string(), path);
                Lookup::Loading
            }
        }
    }

    fn spawn_load(self: &Arc<Self>, id: String, path: PathBuf) {
        let store = Arc::clone(self);
        std::thread::spawn(move || {
            log::info!("loading model {id} from {}", path.display());
            let result = (store.loader)(&path);
            let mut inner = store.lock();
            match result {
                Ok(model) => {
                    if let Some(e) = inner.entries.get_mut(&id) {
                        e.slot = Slot::Ready(Arc::new(Mutex::new(model)));
                    }
                    inner.recent.push_back(id.clone());
                    while inner.recent.len() > store.capacity {
                        let evicted = inner.recent.pop_front().expect("non-empty");
                        if let Some(e) = inner.entries.get_mut(&evicted) {
                            log::info!("evicting model {evicted}");
                            e.slot = Slot::Unloaded;
                        }
                    }
                    log::info!("model {id} ready");
                }
                Err(e) => {
                    log::error!("model {id} failed to load: {e}");
                    if let Some(entry) = inner.entries.get_mut(&id) {
                        entry.slot = Slot::Failed(e.to_string());
                    }
                }
            }
        });
    }

    /// Block until `id` is ready or failed. Meant for startup and tests.
    pub fn wait_ready(self: &Arc<Self>, id: &str, timeout: std::time::Duration) -> Lookup {
        let start = std::time::Instant::now();
        loop {
            match self.get(id) {
                Lookup::Loading if start.elapsed() < timeout => std::thread::sleep(std::time::Duration::from_millis(10)),
                other => return other,
            }
        }
    }
}
