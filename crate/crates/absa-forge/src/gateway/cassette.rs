//! Recorded request/response store. The on-disk form is a JSON object
//! mapping request fingerprints to response strings, with stable key order.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{GenParams, Message};

#[derive(Debug, thiserror::Error)]
pub enum CassetteError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cassette {path}: {message}")]
    Malformed { path: String, message: String },
}

/// Stable content hash of a request: any change to message content, order,
/// or params yields a different fingerprint.
pub fn fingerprint(messages: &[Message], params: &GenParams) -> String {
    #[derive(serde::Serialize)]
    struct View<'a> {
        messages: &'a [Message],
        params: &'a GenParams,
    }
    let canonical = serde_json::to_string(&View { messages, params })
        .expect("request serialization is infallible");
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(digest)
}

#[derive(Debug, Default, Clone)]
pub struct Cassette {
    entries: BTreeMap<String, String>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, CassetteError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CassetteError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let entries: BTreeMap<String, String> =
            serde_json::from_str(&raw).map_err(|e| CassetteError::Malformed {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(Cassette { entries })
    }

    /// Load an existing cassette or start fresh; record mode appends to
    /// whatever is already there.
    pub fn load_or_empty(path: &Path) -> Result<Self, CassetteError> {
        if path.exists() {
            Cassette::load(path)
        } else {
            Ok(Cassette::default())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CassetteError> {
        let io = |e: std::io::Error| CassetteError::Io {
            path: path.display().to_string(),
            source: e,
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io)?;
            }
        }
        let body = serde_json::to_string_pretty(&self.entries)
            .expect("cassette serialization is infallible");
        std::fs::write(path, body).map_err(io)
    }

    pub fn get(&self, fingerprint: &str) -> Option<String> {
        self.entries.get(fingerprint).cloned()
    }

    pub fn insert(&mut self, fingerprint: String, response: String) {
        self.entries.insert(fingerprint, response);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Role;

    fn msgs(content: &str) -> Vec<Message> {
        vec![Message {
            role: Role::User,
            content: content.to_string(),
        }]
    }

    #[test]
    fn fingerprint_is_stable_across_calls() {
        let params = GenParams::deterministic(64, true);
        let messages = msgs("hello");
        assert_eq!(fingerprint(&messages, &params), fingerprint(&messages, &params));
    }

    #[test]
    fn fingerprint_tracks_content_order_and_params() {
        let params = GenParams::deterministic(64, false);
        let base = fingerprint(&msgs("hello"), &params);
        assert_ne!(base, fingerprint(&msgs("hello!"), &params));

        let two = vec![
            Message { role: Role::System, content: "a".into() },
            Message { role: Role::User, content: "b".into() },
        ];
        let swapped = vec![two[1].clone(), two[0].clone()];
        assert_ne!(fingerprint(&two, &params), fingerprint(&swapped, &params));

        let hotter = GenParams { temperature: 0.3, ..params };
        assert_ne!(base, fingerprint(&msgs("hello"), &hotter));
    }

    #[test]
    fn save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut cassette = Cassette::default();
        cassette.insert("b".into(), "2".into());
        cassette.insert("a".into(), "1".into());
        cassette.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        Cassette::load(&path).unwrap().save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
