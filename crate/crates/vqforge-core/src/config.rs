//! Toolchain configuration: one JSON document, every field optional
//! with shipped defaults. The API key never lives in the file; it comes
//! from the `VQFORGE_API_KEY` environment variable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, MockScript, ReplayStore, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::localizer::LocalizerConfig;
use crate::prompting::{default_exemplars, load_exemplars, FewShotExemplar};
use crate::vq::{load_templates, parse_templates, TemplateSet, DEFAULT_TEMPLATES};

pub const API_KEY_ENV: &str = "VQFORGE_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Live { url: String },
    Replay { store: PathBuf },
    Mock {
        #[serde(default)]
        script: Option<PathBuf>,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { script: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub backend: BackendConfig,
    /// When set, every exchange is also appended to this store.
    pub record_store: Option<PathBuf>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub templates_path: Option<PathBuf>,
    pub exemplars_path: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub timeout_s: f64,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub interpreter: String,
    pub localizer: LocalizerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            record_store: None,
            model: "gpt-3.5-turbo".to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            templates_path: None,
            exemplars_path: None,
            seeds: vec![1, 2, 3, 4, 5],
            timeout_s: 30.0,
            parallelism: 4,
            output_dir: PathBuf::from("runs"),
            interpreter: "python3".to_string(),
            localizer: LocalizerConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("referenced path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("seeds list must be non-empty")]
    NoSeeds,
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Store(#[from] crate::gateway::StoreError),
    #[error(transparent)]
    Template(#[from] crate::vq::TemplateError),
    #[error(transparent)]
    Exemplar(#[from] crate::prompting::ExemplarError),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let config: Config = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        let mut paths: Vec<&PathBuf> = Vec::new();
        paths.extend(self.templates_path.iter());
        paths.extend(self.exemplars_path.iter());
        paths.extend(self.localizer.builtins_path.iter());
        match &self.backend {
            BackendConfig::Replay { store } => paths.push(store),
            BackendConfig::Mock { script: Some(script) } => paths.push(script),
            _ => {}
        }
        for path in paths {
            if !path.exists() {
                return Err(ConfigError::MissingPath(path.clone()));
            }
        }
        Ok(())
    }

    pub fn runs(&self) -> usize {
        self.seeds.len()
    }

    /// Construct the gateway described by the backend section, reading
    /// the API key from the environment for live backends.
    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let gateway = match &self.backend {
            BackendConfig::Live { url } => {
                Gateway::live(url.clone(), std::env::var(API_KEY_ENV).ok())
            }
            BackendConfig::Replay { store } => Gateway::replay(ReplayStore::open(store)?),
            BackendConfig::Mock { script } => {
                let script = match script {
                    Some(path) => MockScript::load(path)?,
                    None => MockScript::default(),
                };
                Gateway::mock(script)
            }
        };
        Ok(match &self.record_store {
            Some(path) => gateway.with_recording(ReplayStore::open(path)?),
            None => gateway,
        })
    }

    pub fn templates(&self) -> Result<TemplateSet, ConfigError> {
        Ok(match &self.templates_path {
            Some(path) => load_templates(path)?,
            None => parse_templates(DEFAULT_TEMPLATES)?,
        })
    }

    pub fn exemplars(&self) -> Result<Vec<FewShotExemplar>, ConfigError> {
        Ok(match &self.exemplars_path {
            Some(path) => load_exemplars(path)?,
            None => default_exemplars(),
        })
    }
}
