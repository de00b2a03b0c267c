//! Corpus construction: ingest heterogeneous sources into the canonical
//! format, then clean — dedup-merge, leakage removal, statistics, uniform
//! sampling for overall-sentiment pools, and translation orchestration.

pub mod adapters;

use std::collections::HashMap;
use std::collections::HashSet;

use indexmap::IndexSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{manifest_of, sample_merge, AspectLabel, Dataset, Sample, SentimentPolarity};
use crate::gateway::{GatewayError, LlmGateway};

pub use adapters::{AdapterRegistry, SourceAdapter, SourceDescriptor};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{file}:{line}: {cause}")]
    AdapterParseError {
        file: String,
        line: usize,
        cause: String,
    },
    #[error("unknown adapter {0:?}")]
    UnknownAdapter(String),
    #[error("descriptor {id}: {message}")]
    BadDescriptor { id: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pool of {pool} samples is too small for n = {requested}")]
    PoolTooSmall { pool: usize, requested: usize },
}

/// Per-dataset statistics: sample count, unique aspects, and annotation
/// counts per polarity class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub dataset: String,
    pub samples: usize,
    pub unique_aspects: usize,
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
    pub mixed: usize,
    pub unknown: usize,
}

impl StatsRow {
    pub fn total_annotations(&self) -> usize {
        self.positive + self.negative + self.neutral + self.mixed + self.unknown
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    /// Fixed-width text rendering, one dataset per row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "dataset", "samples", "aspects", "pos", "neg", "neu", "mixed", "unk"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
                row.dataset,
                row.samples,
                row.unique_aspects,
                row.positive,
                row.negative,
                row.neutral,
                row.mixed,
                row.unknown
            ));
        }
        out
    }
}

/// A train/eval text collision found by `leak_check`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakPair {
    pub train_index: usize,
    pub eval_index: usize,
    pub normalized_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LeakReport {
    pub collisions: Vec<LeakPair>,
    pub removed_count: usize,
}

/// Parse one source file under its descriptor's adapter. Duplicates are kept;
/// dedup happens in a later stage.
pub fn ingest(
    descriptor: &SourceDescriptor,
    registry: &AdapterRegistry,
) -> Result<Dataset, CorpusError> {
    let adapter = registry
        .get(&descriptor.format)
        .ok_or_else(|| CorpusError::UnknownAdapter(descriptor.format.clone()))?;
    let content =
        std::fs::read_to_string(&descriptor.path).map_err(|e| CorpusError::Io {
            path: descriptor.path.clone(),
            source: e,
        })?;
    let samples = adapter.parse(descriptor, &content)?;
    let mut dataset = Dataset::new(samples, Default::default());
    dataset.manifest = vec![(descriptor.id.clone(), dataset.len())];
    Ok(dataset)
}

/// Merge samples that share a normalized text, preserving first-occurrence
/// order. Conflicting aspect labels collapse to mixed via `sample_merge`.
pub fn dedup_merge(dataset: &Dataset) -> Dataset {
    let mut order: Vec<String> = Vec::new();
    let mut merged: HashMap<String, Sample> = HashMap::new();
    for sample in &dataset.samples {
        let key = sample.normalized_text();
        match merged.get_mut(&key) {
            Some(existing) => {
                *existing = sample_merge(existing, sample)
                    .expect("samples under one key share normalized text");
            }
            None => {
                order.push(key.clone());
                merged.insert(key, sample.clone());
            }
        }
    }
    let samples: Vec<Sample> = order
        .into_iter()
        .map(|key| merged.remove(&key).expect("key recorded on first sight"))
        .collect();
    let manifest = manifest_of(&samples);
    Dataset {
        samples,
        split: dataset.split,
        manifest,
    }
}

/// Remove every train sample whose normalized text also appears in `eval`.
/// The eval set is never modified.
pub fn leak_check(train: &Dataset, eval: &Dataset) -> (Dataset, LeakReport) {
    let eval_index: HashMap<String, usize> = eval
        .samples
        .iter()
        .enumerate()
        .map(|(idx, s)| (s.normalized_text(), idx))
        .collect();
    let mut kept = Vec::with_capacity(train.len());
    let mut report = LeakReport::default();
    for (train_index, sample) in train.samples.iter().enumerate() {
        let key = sample.normalized_text();
        match eval_index.get(&key) {
            Some(&eval_index_hit) => {
                report.collisions.push(LeakPair {
                    train_index,
                    eval_index: eval_index_hit,
                    normalized_text: key,
                });
                report.removed_count += 1;
            }
            None => kept.push(sample.clone()),
        }
    }
    let manifest = manifest_of(&kept);
    (
        Dataset {
            samples: kept,
            split: train.split,
            manifest,
        },
        report,
    )
}

/// Exact counts for one dataset; unique aspects are counted under normalized
/// label equality.
pub fn dataset_stats(name: &str, dataset: &Dataset) -> StatsRow {
    let mut unique: HashSet<String> = HashSet::new();
    let mut counts = [0usize; 5];
    for sample in &dataset.samples {
        for (label, polarity) in sample.aspects() {
            unique.insert(label.key().to_string());
            let slot = match polarity {
                SentimentPolarity::Positive => 0,
                SentimentPolarity::Negative => 1,
                SentimentPolarity::Neutral => 2,
                SentimentPolarity::Mixed => 3,
                SentimentPolarity::Unknown => 4,
            };
            counts[slot] += 1;
        }
    }
    StatsRow {
        dataset: name.to_string(),
        samples: dataset.len(),
        unique_aspects: unique.len(),
        positive: counts[0],
        negative: counts[1],
        neutral: counts[2],
        mixed: counts[3],
        unknown: counts[4],
    }
}

/// Uniformly sample `n` datapoints without replacement from the concatenated
/// pools, keeping only each sample's overall sentiment (aspect maps are
/// emptied: these feed document-level evaluation via the overall-sentiment
/// pseudo-aspect). Deterministic under `seed`.
pub fn sample_overalls(sources: &[&Dataset], n: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let pool: Vec<&Sample> = sources.iter().flat_map(|d| d.samples.iter()).collect();
    if pool.len() < n {
        return Err(CorpusError::PoolTooSmall {
            pool: pool.len(),
            requested: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    let samples: Vec<Sample> = picked
        .into_iter()
        .map(|idx| {
            let mut sample = pool[idx].clone();
            sample.aspects_mut().clear();
            sample.reasoning = None;
            sample
        })
        .collect();
    Ok(Dataset::new(samples, Default::default()))
}

/// Outcome of translating a dataset; failed samples are dropped, not fatal.
#[derive(Debug)]
pub struct TranslationOutcome {
    pub dataset: Dataset,
    pub dropped: usize,
}

/// Translate every sample's text and aspect names into `language` through the
/// gateway. Polarities are preserved; provenance gains a ":translated" suffix.
pub fn translate_dataset(
    dataset: &Dataset,
    language: &str,
    gateway: &LlmGateway,
) -> Result<TranslationOutcome, GatewayError> {
    let mut samples = Vec::with_capacity(dataset.len());
    let mut dropped = 0usize;
    for sample in &dataset.samples {
        match translate_sample(sample, language, gateway) {
            Ok(translated) => samples.push(translated),
            Err(GatewayError::LanguageNotConfigured(lang)) => {
                return Err(GatewayError::LanguageNotConfigured(lang))
            }
            Err(_) => dropped += 1,
        }
    }
    Ok(TranslationOutcome {
        dataset: Dataset::new(samples, dataset.split),
        dropped,
    })
}

fn translate_sample(
    sample: &Sample,
    language: &str,
    gateway: &LlmGateway,
) -> Result<Sample, GatewayError> {
    let text = gateway.translate_text(sample.text(), &sample.language, language)?;
    let mut aspects = crate::domain::AspectMap::new();
    for (label, polarity) in sample.aspects() {
        let name = gateway.translate_text(label.name(), &sample.language, language)?;
        let translated = AspectLabel::new(&name)
            .map_err(|e| GatewayError::InvalidParams(format!("translated aspect: {e}")))?;
        // Two aspect names may translate to the same target term; resolve
        // collisions like any other label conflict.
        match aspects.get_mut(&translated) {
            Some(existing) => *existing = crate::domain::polarity_merge(*existing, *polarity),
            None => {
                aspects.insert(translated, *polarity);
            }
        }
    }
    let mut out = Sample::new(
        &text,
        aspects,
        sample.overall,
        language,
        &format!("{}:translated", sample.source),
    )
    .map_err(|e| GatewayError::InvalidParams(format!("translated sample: {e}")))?;
    out.reasoning = sample.reasoning.clone();
    Ok(out)
}

/// The distinct aspect labels across a dataset, in first-occurrence order.
pub fn aspect_universe(dataset: &Dataset) -> IndexSet<AspectLabel> {
    let mut universe = IndexSet::new();
    for sample in &dataset.samples {
        for label in sample.aspects().keys() {
            universe.insert(label.clone());
        }
    }
    universe
}
