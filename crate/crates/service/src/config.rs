use std::net::SocketAddr;
use std::path::PathBuf;

use tintline::inference::DEFAULT_MAX_SIDE;

use crate::ServiceError;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_CACHE: usize = 2;
pub const DEFAULT_MAX_BODY: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Directory scanned for `*.ckpt` training checkpoints.
    pub model_dir: PathBuf,
    /// Largest accepted image side, checked on the PNG header before decoding.
    pub max_side: u32,
    pub bind_addr: SocketAddr,
    /// Loaded models kept in memory; the least recently used one is dropped first.
    pub cache_capacity: usize,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            model_dir: PathBuf::from("models"),
            max_side: DEFAULT_MAX_SIDE,
            bind_addr: DEFAULT_BIND.parse().expect("valid default address"),
            cache_capacity: DEFAULT_CACHE,
            max_body_bytes: DEFAULT_MAX_BODY,
        }
    }
}

impl ServiceConfig {
    /// Reads `MODEL_DIR`, `MAX_SIDE`, `BIND_ADDR`, `MODEL_CACHE` and `MAX_BODY_BYTES`.
    pub fn from_env() -> Result<Self, ServiceError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        fn parse<T: std::str::FromStr>(key: &str, raw: Option<String>, default: T) -> Result<T, ServiceError> {
            match raw {
                None => Ok(default),
                Some(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| ServiceError::Config(format!("{key}={v:?} is not valid"))),
            }
        }
        let d = ServiceConfig::default();
        let cfg = ServiceConfig {
            model_dir: get("MODEL_DIR").map(PathBuf::from).unwrap_or(d.model_dir),
            max_side: parse("MAX_SIDE", get("MAX_SIDE"), d.max_side)?,
            bind_addr: parse("BIND_ADDR", get("BIND_ADDR"), d.bind_addr)?,
            cache_capacity: parse("MODEL_CACHE", get("MODEL_CACHE"), d.cache_capacity)?,
            max_body_bytes: parse("MAX_BODY_BYTES", get("MAX_BODY_BYTES"), d.max_body_bytes)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.max_side == 0 {
            return Err(ServiceError::Config("MAX_SIDE must be positive".into()));
        }
        if self.cache_capacity == 0 {
            return Err(ServiceError::Config("MODEL_CACHE must be positive".into()));
        }
        Ok(())
    }
}
