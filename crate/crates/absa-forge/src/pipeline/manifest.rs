//! Run manifests: input/output digests, the effective stage configuration
//! digest, gateway call counts, and wall-clock timestamps. Timestamps are
//! recorded only for runs that touch a live endpoint, so replay runs are
//! byte-identical end to end.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::gateway::{GatewayMode, LlmGateway};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unix_timestamp: Option<u64>,
    pub gateway_calls: BTreeMap<String, u64>,
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| super::io_err(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: digest_bytes(&bytes),
    })
}

impl RunManifest {
    /// Build a manifest for a finished stage. `effective_config` should be
    /// the resolved stage parameters serialized to JSON.
    pub fn build(
        stage: &str,
        inputs: &[&Path],
        outputs: &[&Path],
        effective_config: &serde_json::Value,
        gateway: Option<&LlmGateway>,
    ) -> Result<Self, PipelineError> {
        let live_run = gateway
            .map(|g| g.mode() != GatewayMode::Replay)
            .unwrap_or(false);
        Ok(RunManifest {
            stage: stage.to_string(),
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
            outputs: outputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
            config_sha256: digest_bytes(effective_config.to_string().as_bytes()),
            unix_timestamp: live_run.then(|| {
                SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            }),
            gateway_calls: gateway.map(|g| g.call_counts()).unwrap_or_default(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let body = serde_json::to_string_pretty(self).expect("manifest serialization");
        std::fs::write(path, body).map_err(|e| super::io_err(path, e))
    }
}
