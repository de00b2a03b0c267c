//! absa-forge: a batch toolkit for building, augmenting, and evaluating
//! five-class aspect-based sentiment datasets.
//!
//! The pipeline stages — corpus ingestion and cleaning, specification-first
//! synthetic generation, unknown-class injection, dataset upscaling,
//! reasoning-chain forging with targeted masking and sequence packing, and an
//! LLM evaluation harness — all run deterministically offline against a
//! record/replay gateway.

pub mod corpus;
pub mod domain;
pub mod eval;
pub mod gateway;
pub mod inject;
pub mod json_extract;
pub mod jsonl;
pub mod pipeline;
pub mod reasoning;
pub mod upsd;
pub mod upscale;

use sha2::{Digest, Sha256};

/// Derive a child seed from a root seed and a label, so stages (and
/// per-sample streams) get independent, reproducible RNG streams.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is at least 8 bytes"))
}
