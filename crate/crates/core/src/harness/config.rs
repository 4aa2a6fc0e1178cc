//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::embedding::DEFAULT_DIMENSION;
use crate::envs::{EnvName, EnvSpec};
use crate::memory::DEFAULT_K;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Hashing,
    Http,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub env: EnvName,
    pub task_seed: u64,
    /// Episode seeds. Collection uses the first one; evaluation runs all.
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    pub llm_endpoint: String,
    pub llm_model: String,
    /// Name of the environment variable holding the API credential.
    pub llm_api_key_env: String,
    pub encoder: EncoderKind,
    pub encoder_dim: usize,
    pub embed_endpoint: String,
    pub embed_model: String,
    pub k_high: usize,
    pub k_low: usize,
    /// Overrides the environment's own budget when set.
    pub step_budget: Option<usize>,
    pub max_retries: usize,
    pub run_dir: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvName::TextHouse,
            task_seed: 0,
            seeds: vec![0],
            n_train: 6,
            n_test: 6,
            backend: BackendKind::Scripted,
            script: None,
            llm_endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            llm_model: "default".into(),
            llm_api_key_env: "H2R_API_KEY".into(),
            encoder: EncoderKind::Hashing,
            encoder_dim: DEFAULT_DIMENSION,
            embed_endpoint: "http://127.0.0.1:8000/v1/embeddings".into(),
            embed_model: "default".into(),
            k_high: DEFAULT_K,
            k_low: DEFAULT_K,
            step_budget: None,
            max_retries: crate::agent::DEFAULT_MAX_RETRIES,
            run_dir: PathBuf::from("run"),
            templates_dir: None,
            workers: 1,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.to_string(),
    }
}

fn num<N: std::str::FromStr>(key: &str, value: &str) -> Result<N, ConfigError>
where
    N::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

impl RunConfig {
    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.into(),
                });
            };
            cfg.set(k.trim(), v.trim(), base)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Applies a single `key=value` pair, as from a command-line override.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let path = |v: &str| base.join(v);
        match key {
            "env" => self.env = EnvName::parse(value).ok_or_else(|| bad(key, value, "unknown environment"))?,
            "task_seed" => self.task_seed = num(key, value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| num(key, s.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "n_train" => self.n_train = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "backend" => {
                self.backend = match value {
                    "scripted" => BackendKind::Scripted,
                    "remote" => BackendKind::Remote,
                    _ => return Err(bad(key, value, "expected scripted or remote")),
                }
            }
            "script" => self.script = Some(path(value)),
            "llm_endpoint" => self.llm_endpoint = value.into(),
            "llm_model" => self.llm_model = value.into(),
            "llm_api_key_env" => self.llm_api_key_env = value.into(),
            "encoder" => {
                self.encoder = match value {
                    "hashing" => EncoderKind::Hashing,
                    "http" => EncoderKind::Http,
                    _ => return Err(bad(key, value, "expected hashing or http")),
                }
            }
            "encoder_dim" => self.encoder_dim = num(key, value)?,
            "embed_endpoint" => self.embed_endpoint = value.into(),
            "embed_model" => self.embed_model = value.into(),
            "k_high" => self.k_high = num(key, value)?,
            "k_low" => self.k_low = num(key, value)?,
            "step_budget" => self.step_budget = Some(num(key, value)?),
            "max_retries" => self.max_retries = num(key, value)?,
            "run_dir" => self.run_dir = path(value),
            "templates_dir" => self.templates_dir = Some(path(value)),
            "workers" => self.workers = num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        if self.backend == BackendKind::Scripted && self.script.is_none() {
            return Err(ConfigError::Invalid("the scripted backend needs a script path".into()));
        }
        if self.encoder_dim == 0 {
            return Err(ConfigError::Invalid("encoder_dim must be positive".into()));
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> EnvSpec {
        let mut spec = EnvSpec::for_name(self.env);
        if let Some(b) = self.step_budget {
            spec.step_budget = b;
        }
        spec
    }

    /// Renders the configuration so that `parse(to_text(), "/")` gives it
    /// back. Paths are written as they are stored.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "env = {}", self.env);
        let _ = writeln!(s, "task_seed = {}", self.task_seed);
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "n_train = {}", self.n_train);
        let _ = writeln!(s, "n_test = {}", self.n_test);
        let backend = match self.backend {
            BackendKind::Scripted => "scripted",
            BackendKind::Remote => "remote",
        };
        let _ = writeln!(s, "backend = {backend}");
        if let Some(p) = &self.script {
            let _ = writeln!(s, "script = {}", p.display());
        }
        let _ = writeln!(s, "llm_endpoint = {}", self.llm_endpoint);
        let _ = writeln!(s, "llm_model = {}", self.llm_model);
        let _ = writeln!(s, "llm_api_key_env = {}", self.llm_api_key_env);
        let encoder = match self.encoder {
            EncoderKind::Hashing => "hashing",
            EncoderKind::Http => "http",
        };
        let _ = writeln!(s, "encoder = {encoder}");
        let _ = writeln!(s, "encoder_dim = {}", self.encoder_dim);
        let _ = writeln!(s, "embed_endpoint = {}", self.embed_endpoint);
        let _ = writeln!(s, "embed_model = {}", self.embed_model);
        let _ = writeln!(s, "k_high = {}", self.k_high);
        let _ = writeln!(s, "k_low = {}", self.k_low);
        if let Some(b) = self.step_budget {
            let _ = writeln!(s, "step_budget = {b}");
        }
        let _ = writeln!(s, "max_retries = {}", self.max_retries);
        let _ = writeln!(s, "run_dir = {}", self.run_dir.display());
        if let Some(p) = &self.templates_dir {
            let _ = writeln!(s, "templates_dir = {}", p.display());
        }
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }
}
