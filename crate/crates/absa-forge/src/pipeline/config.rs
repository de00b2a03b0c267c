//! Run configuration: a single TOML document with a gateway section, a
//! global seed, and per-stage sections. Command-line flags override config
//! fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::gateway::{GatewayMode, HttpTransport, LlmGateway, RetryPolicy, DEFAULT_LANGUAGES};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub gateway: GatewayConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Chat-completions endpoint URL; unset means cassette-only operation.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub cassette: Option<PathBuf>,
    pub mode: Option<GatewayMode>,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub concurrency: usize,
    pub languages: Vec<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        GatewayConfig {
            endpoint: None,
            model: "default".to_string(),
            auth_env: None,
            cassette: None,
            mode: None,
            max_attempts: retry.max_attempts,
            backoff_base_ms: retry.backoff_base_ms,
            concurrency: 8,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
        toml::from_str(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

impl GatewayConfig {
    /// Resolve mode: explicit config wins; otherwise cassette + endpoint
    /// means record, cassette alone means replay, endpoint alone means
    /// passthrough.
    pub fn resolved_mode(&self) -> Result<GatewayMode, PipelineError> {
        if let Some(mode) = self.mode {
            return Ok(mode);
        }
        match (&self.cassette, &self.endpoint) {
            (Some(_), Some(_)) => Ok(GatewayMode::Record),
            (Some(_), None) => Ok(GatewayMode::Replay),
            (None, Some(_)) => Ok(GatewayMode::Passthrough),
            (None, None) => Err(PipelineError::Config(
                "gateway needs a cassette, an endpoint, or both".to_string(),
            )),
        }
    }

    pub fn build_gateway(&self) -> Result<LlmGateway, PipelineError> {
        let mode = self.resolved_mode()?;
        let mut builder = LlmGateway::builder(mode)
            .model(&self.model)
            .concurrency(self.concurrency)
            .languages(self.languages.clone())
            .retry(RetryPolicy {
                max_attempts: self.max_attempts,
                backoff_base_ms: self.backoff_base_ms,
            });
        if let Some(cassette) = &self.cassette {
            builder = builder.cassette_path(cassette.clone());
        }
        if mode != GatewayMode::Replay {
            let endpoint = self.endpoint.as_ref().ok_or_else(|| {
                PipelineError::Config(format!("{mode:?} mode needs an endpoint"))
            })?;
            let token = self
                .auth_env
                .as_ref()
                .and_then(|var| std::env::var(var).ok());
            builder = builder.transport(Box::new(HttpTransport::new(endpoint, token)));
        }
        Ok(builder.build()?)
    }
}
