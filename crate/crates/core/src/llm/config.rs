//! Live provider settings. Precedence: command-line flag > environment > config file.

use std::path::Path;

use serde::{Deserialize, Serialize};

pub const ENV_ENDPOINT: &str = "MATFLOW_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "MATFLOW_LLM_MODEL";
pub const ENV_API_KEY: &str = "MATFLOW_LLM_API_KEY";
pub const ENV_TIMEOUT: &str = "MATFLOW_LLM_TIMEOUT_SECS";

pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: f64,
}

/// One layer of optional settings (a file, the environment, or flags).
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct ProviderOverrides {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub timeout_secs: Option<u64>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read provider config {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("invalid provider setting: {0}")]
    Invalid(String),
    #[error("provider {0} not configured (set it via flag, {1}, or the config file)")]
    Missing(&'static str, &'static str),
}

impl ProviderOverrides {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let timeout_secs = match get(ENV_TIMEOUT) {
            Some(t) => Some(t.trim().parse().map_err(|_| ConfigError::Invalid(format!("{ENV_TIMEOUT}={t}")))?),
            None => None,
        };
        Ok(ProviderOverrides {
            endpoint: get(ENV_ENDPOINT),
            model: get(ENV_MODEL),
            api_key: get(ENV_API_KEY),
            timeout_secs,
            temperature: None,
        })
    }

    /// Fill unset fields from `lower`.
    pub fn over(self, lower: ProviderOverrides) -> ProviderOverrides {
        ProviderOverrides {
            endpoint: self.endpoint.or(lower.endpoint),
            model: self.model.or(lower.model),
            api_key: self.api_key.or(lower.api_key),
            timeout_secs: self.timeout_secs.or(lower.timeout_secs),
            temperature: self.temperature.or(lower.temperature),
        }
    }
}

impl ProviderConfig {
    pub fn resolve(flags: ProviderOverrides, env: ProviderOverrides, file: ProviderOverrides) -> Result<Self, ConfigError> {
        let m = flags.over(env).over(file);
        Ok(ProviderConfig {
            endpoint: m.endpoint.ok_or(ConfigError::Missing("endpoint", ENV_ENDPOINT))?,
            model: m.model.ok_or(ConfigError::Missing("model", ENV_MODEL))?,
            api_key: m.api_key,
            timeout_secs: m.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS),
            temperature: m.temperature.unwrap_or(0.0),
        })
    }
}
