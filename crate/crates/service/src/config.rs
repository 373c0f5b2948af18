use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crs_core::artifacts::{ArtifactPaths, RemoteSettings};
use crs_core::normalize::MAX_BODY_BYTES;
use crs_core::Mode;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub mode: Mode,
    /// Largest `text` accepted by analyze and paraphrase.
    pub max_body_bytes: usize,
    /// Largest JSONL body accepted by batch.
    pub batch_max_bytes: usize,
    pub request_timeout_ms: u64,
    /// Origins allowed by CORS. Empty disables CORS headers.
    pub cors_origins: Vec<String>,
    pub artifacts: ArtifactPaths,
    pub remote: RemoteSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            mode: Mode::default(),
            max_body_bytes: MAX_BODY_BYTES,
            batch_max_bytes: 16 * 1024 * 1024,
            request_timeout_ms: 10_000,
            cors_origins: vec!["http://localhost:5173".into()],
            artifacts: ArtifactPaths::default(),
            remote: RemoteSettings::default(),
        }
    }
}

/// Environment variables that override the file.
pub const ENV_KEYS: [&str; 11] = [
    "CRS_ADDR",
    "CRS_MODE",
    "CRS_RULESET",
    "CRS_MODEL",
    "CRS_MULTILABEL_MODEL",
    "CRS_TOX_LEXICON",
    "CRS_VALENCE_LEXICON",
    "CRS_THESAURUS",
    "CRS_REMOTE_SCORER_URL",
    "CRS_REMOTE_SCORER_KEY",
    "CRS_REWRITER_URL",
];

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Apply `CRS_*` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ServiceError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        for (k, v) in vars {
            let v: String = v.into();
            let path = || Some(PathBuf::from(&v));
            match k.as_ref() {
                "CRS_ADDR" => {
                    self.addr = v
                        .parse()
                        .map_err(|e| ServiceError::Config(format!("CRS_ADDR {v:?}: {e}")))?
                }
                "CRS_MODE" => {
                    self.mode = v
                        .parse()
                        .map_err(|e| ServiceError::Config(format!("CRS_MODE: {e}")))?
                }
                "CRS_RULESET" => self.artifacts.ruleset = path(),
                "CRS_MODEL" => self.artifacts.model = path(),
                "CRS_MULTILABEL_MODEL" => self.artifacts.multilabel_model = path(),
                "CRS_TOX_LEXICON" => self.artifacts.toxicity_lexicon = path(),
                "CRS_VALENCE_LEXICON" => self.artifacts.valence_lexicon = path(),
                "CRS_THESAURUS" => self.artifacts.thesaurus = path(),
                "CRS_REMOTE_SCORER_URL" => self.remote.scorer_url = Some(v),
                "CRS_REMOTE_SCORER_KEY" => self.remote.scorer_key = Some(v),
                "CRS_REWRITER_URL" => self.remote.rewriter_url = Some(v),
                _ => {}
            }
        }
        Ok(())
    }

    /// File (if any) plus the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(
            ENV_KEYS
                .iter()
                .filter_map(|k| std::env::var(k).ok().map(|v| (*k, v))),
        )?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.max_body_bytes == 0 || self.max_body_bytes > MAX_BODY_BYTES {
            return Err(ServiceError::Config(format!(
                "max_body_bytes must be in 1..={MAX_BODY_BYTES}, got {}",
                self.max_body_bytes
            )));
        }
        if self.request_timeout_ms == 0 {
            return Err(ServiceError::Config(
                "request_timeout_ms must be positive".into(),
            ));
        }
        for (name, p) in self.artifacts.iter() {
            if !p.is_file() {
                return Err(ServiceError::Config(format!(
                    "{name} artifact {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }
}
