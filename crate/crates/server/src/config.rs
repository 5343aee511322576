use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use disentangle_core::SessionConfig;
use serde::Deserialize;

use crate::error::ConfigError;

/// Model used when no package path is configured.
pub const BUILTIN_TOY: &str = "builtin:toy";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// Package directory, or `builtin:toy`.
    pub model: String,
    pub bind: SocketAddr,
    /// Average-vector cache. Without one the average is recomputed at startup.
    pub cache_dir: Option<PathBuf>,
    pub store_dir: PathBuf,
    /// Session logs are appended here as `<session>.jsonl`.
    pub log_dir: Option<PathBuf>,
    pub average_samples: usize,
    pub average_seed: u64,
    pub plugins: PluginPaths,
    pub session: SessionConfig,
}

/// Evaluation plugins advertised to clients; the service itself never runs them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PluginPaths {
    pub detector: Option<String>,
    pub embedder: Option<String>,
    pub classifier: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            model: BUILTIN_TOY.into(),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            cache_dir: None,
            store_dir: PathBuf::from("directions"),
            log_dir: None,
            average_samples: 1000,
            average_seed: 0,
            plugins: PluginPaths::default(),
            session: SessionConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path` if given, then applies `DISENTANGLE_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p).map_err(|e| ConfigError::Read(p.to_path_buf(), e))?)?,
            None => Self::default(),
        };
        base.with_env(std::env::vars())
    }

    /// Applies overrides from `DISENTANGLE_MODEL`, `_PORT`, `_BIND`, `_CACHE_DIR`,
    /// `_STORE_DIR`, `_LOG_DIR` and `_PLUGIN_{DETECTOR,EMBEDDER,CLASSIFIER}`.
    pub fn with_env(mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("DISENTANGLE_") else {
                continue;
            };
            let bad = |e: &dyn std::fmt::Display| ConfigError::Env(key.clone(), e.to_string());
            match name {
                "MODEL" => self.model = value,
                "BIND" => self.bind = value.parse().map_err(|e| bad(&e))?,
                "PORT" => self.bind.set_port(value.parse().map_err(|e| bad(&e))?),
                "CACHE_DIR" => self.cache_dir = Some(value.into()),
                "STORE_DIR" => self.store_dir = value.into(),
                "LOG_DIR" => self.log_dir = Some(value.into()),
                "AVERAGE_SAMPLES" => self.average_samples = value.parse().map_err(|e| bad(&e))?,
                "PLUGIN_DETECTOR" => self.plugins.detector = Some(value),
                "PLUGIN_EMBEDDER" => self.plugins.embedder = Some(value),
                "PLUGIN_CLASSIFIER" => self.plugins.classifier = Some(value),
                _ => tracing::debug!("ignoring unknown setting {key}"),
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let cfg = ServerConfig::from_toml(
            r#"
            model = "pkg"
            bind = "0.0.0.0:9000"
            average_samples = 16
            [session]
            test_seeds = [5, 6]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.session.test_seeds, vec![5, 6]);
        assert_eq!(cfg.session.default_strength, 1.0);
        let cfg = cfg
            .with_env([
                ("DISENTANGLE_PORT".to_string(), "9100".to_string()),
                ("DISENTANGLE_MODEL".to_string(), "other".to_string()),
                ("HOME".to_string(), "/x".to_string()),
            ])
            .unwrap();
        assert_eq!(cfg.bind.port(), 9100);
        assert_eq!(cfg.model, "other");
        assert_eq!(cfg.average_samples, 16);
    }

    #[test]
    fn bad_values() {
        assert!(ServerConfig::from_toml("colour = 1").is_err());
        let err = ServerConfig::default()
            .with_env([("DISENTANGLE_PORT".to_string(), "http".to_string())])
            .unwrap_err();
        assert!(err.to_string().contains("DISENTANGLE_PORT"));
    }
}
