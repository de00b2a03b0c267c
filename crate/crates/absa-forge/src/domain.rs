//! Core data model: five-class sentiment polarities, aspect labels, samples,
//! datasets, and the merge semantics the rest of the toolkit relies on.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

/// The five sentiment classes. `Mixed` marks conflicting sentiment toward one
/// aspect; `Unknown` marks an aspect the text does not address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SentimentPolarity {
    Positive,
    Negative,
    Neutral,
    Mixed,
    Unknown,
}

impl SentimentPolarity {
    pub const ALL: [SentimentPolarity; 5] = [
        SentimentPolarity::Positive,
        SentimentPolarity::Negative,
        SentimentPolarity::Neutral,
        SentimentPolarity::Mixed,
        SentimentPolarity::Unknown,
    ];

    /// The three classic polarities, used by three-class evaluation and the
    /// upscaler's validity check.
    pub const THREE: [SentimentPolarity; 3] = [
        SentimentPolarity::Positive,
        SentimentPolarity::Negative,
        SentimentPolarity::Neutral,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SentimentPolarity::Positive => "positive",
            SentimentPolarity::Negative => "negative",
            SentimentPolarity::Neutral => "neutral",
            SentimentPolarity::Mixed => "mixed",
            SentimentPolarity::Unknown => "unknown",
        }
    }
}

impl fmt::Display for SentimentPolarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentPolarity {
    type Err = DomainError;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        polarity_parse(raw)
    }
}

impl Serialize for SentimentPolarity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SentimentPolarity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        polarity_parse(&raw).map_err(D::Error::custom)
    }
}

/// Parse one of the five polarity strings, case-insensitively and ignoring
/// surrounding whitespace. Anything else is rejected.
pub fn polarity_parse(raw: &str) -> Result<SentimentPolarity, DomainError> {
    match raw.trim().to_lowercase().as_str() {
        "positive" => Ok(SentimentPolarity::Positive),
        "negative" => Ok(SentimentPolarity::Negative),
        "neutral" => Ok(SentimentPolarity::Neutral),
        "mixed" => Ok(SentimentPolarity::Mixed),
        "unknown" => Ok(SentimentPolarity::Unknown),
        _ => Err(DomainError::UnknownPolarity(raw.to_string())),
    }
}

/// Merge two polarity labels for the same aspect: equal labels keep their
/// value, any two distinct labels collapse to `mixed`.
pub fn polarity_merge(p1: SentimentPolarity, p2: SentimentPolarity) -> SentimentPolarity {
    if p1 == p2 {
        p1
    } else {
        SentimentPolarity::Mixed
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("unknown polarity: {0:?}")]
    UnknownPolarity(String),
    #[error("aspect label is empty after trimming")]
    EmptyAspect,
    #[error("sample text is empty")]
    EmptyText,
    #[error("duplicate aspect {0:?} in one sample")]
    DuplicateAspect(String),
    #[error("cannot merge samples with different texts: {0:?} vs {1:?}")]
    TextMismatch(String, String),
}

/// Unicode NFC, trim, collapse internal whitespace runs to a single space,
/// lower-case. Used for aspect equality and duplicate-text detection.
pub fn normalize_text(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut pending_space = false;
    for ch in nfc.trim().chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for lc in ch.to_lowercase() {
                out.push(lc);
            }
        }
    }
    out
}

/// An aspect term. Keeps the original (trimmed) surface form for display and
/// serialization; equality and hashing go through the normalized form, so
/// "Battery Life", "battery  life", and "battery life" are all one label.
#[derive(Debug, Clone)]
pub struct AspectLabel {
    name: String,
    key: String,
}

impl AspectLabel {
    pub fn new(name: &str) -> Result<Self, DomainError> {
        let trimmed = name.trim();
        if trimmed.is_empty() {
            return Err(DomainError::EmptyAspect);
        }
        Ok(AspectLabel {
            name: trimmed.to_string(),
            key: normalize_text(trimmed),
        })
    }

    /// Original surface form (whitespace-trimmed).
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Normalized comparison key.
    pub fn key(&self) -> &str {
        &self.key
    }
}

impl PartialEq for AspectLabel {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for AspectLabel {}

impl std::hash::Hash for AspectLabel {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl fmt::Display for AspectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl Serialize for AspectLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name)
    }
}

impl<'de> Deserialize<'de> for AspectLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        AspectLabel::new(&raw).map_err(D::Error::custom)
    }
}

/// Insertion-ordered aspect -> polarity map.
pub type AspectMap = IndexMap<AspectLabel, SentimentPolarity>;

/// Status of an LLM-produced rationale attached to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainStatus {
    Generated,
    Refined,
    Rejected,
}

/// A reasoning chain bootstrapped from an LLM, with its verification outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub text: String,
    pub status: ChainStatus,
    pub source_answer_correct: bool,
}

impl ReasoningChain {
    /// A chain worth training on: either correct on the first try or fixed by
    /// a refinement round.
    pub fn is_kept(&self) -> bool {
        match self.status {
            ChainStatus::Generated => self.source_answer_correct,
            ChainStatus::Refined => true,
            ChainStatus::Rejected => false,
        }
    }
}

/// One text with its aspect annotations, optional overall sentiment, language
/// tag, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    text: String,
    aspects: AspectMap,
    pub overall: Option<SentimentPolarity>,
    pub language: String,
    pub source: String,
    pub reasoning: Option<ReasoningChain>,
}

impl Sample {
    pub fn new(
        text: &str,
        aspects: AspectMap,
        overall: Option<SentimentPolarity>,
        language: &str,
        source: &str,
    ) -> Result<Self, DomainError> {
        if text.trim().is_empty() {
            return Err(DomainError::EmptyText);
        }
        Ok(Sample {
            text: text.to_string(),
            aspects,
            overall,
            language: language.to_string(),
            source: source.to_string(),
            reasoning: None,
        })
    }

    /// Build the aspect map from (name, polarity) pairs, rejecting duplicate
    /// labels under normalized equality.
    pub fn aspect_map(pairs: &[(&str, SentimentPolarity)]) -> Result<AspectMap, DomainError> {
        let mut map = AspectMap::new();
        for (name, polarity) in pairs {
            let label = AspectLabel::new(name)?;
            if map.contains_key(&label) {
                return Err(DomainError::DuplicateAspect(label.name().to_string()));
            }
            map.insert(label, *polarity);
        }
        Ok(map)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn aspects(&self) -> &AspectMap {
        &self.aspects
    }

    pub fn aspects_mut(&mut self) -> &mut AspectMap {
        &mut self.aspects
    }

    pub fn normalized_text(&self) -> String {
        normalize_text(&self.text)
    }

    pub fn with_reasoning(mut self, chain: ReasoningChain) -> Self {
        self.reasoning = Some(chain);
        self
    }
}

/// Marker appended to provenance when merging had to reconcile conflicting
/// overall sentiments.
pub const OVERALL_MERGED_TAG: &str = "overall-merged";

fn merge_sources(s1: &str, s2: &str) -> String {
    let mut tags: Vec<&str> = Vec::new();
    for tag in s1.split('+').chain(s2.split('+')) {
        if !tag.is_empty() && !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    tags.join("+")
}

/// Merge two samples with the same normalized text: aspect maps are unified,
/// with colliding aspects resolved by `polarity_merge`; provenance tags are
/// concatenated (deduplicated).
pub fn sample_merge(s1: &Sample, s2: &Sample) -> Result<Sample, DomainError> {
    if s1.normalized_text() != s2.normalized_text() {
        return Err(DomainError::TextMismatch(
            s1.text.clone(),
            s2.text.clone(),
        ));
    }
    let mut aspects = s1.aspects.clone();
    for (label, polarity) in &s2.aspects {
        match aspects.get_mut(label) {
            Some(existing) => *existing = polarity_merge(*existing, *polarity),
            None => {
                aspects.insert(label.clone(), *polarity);
            }
        }
    }
    let mut overall_conflict = false;
    let overall = match (s1.overall, s2.overall) {
        (Some(a), Some(b)) => {
            overall_conflict = a != b;
            Some(polarity_merge(a, b))
        }
        (Some(a), None) | (None, Some(a)) => Some(a),
        (None, None) => None,
    };
    let mut source = merge_sources(&s1.source, &s2.source);
    if overall_conflict && !source.split('+').any(|t| t == OVERALL_MERGED_TAG) {
        source = format!("{source}+{OVERALL_MERGED_TAG}");
    }
    Ok(Sample {
        text: s1.text.clone(),
        aspects,
        overall,
        language: s1.language.clone(),
        source,
        reasoning: s1.reasoning.clone().or_else(|| s2.reasoning.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Ordered collection of samples with a split tag and per-source counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Split,
    pub manifest: Vec<(String, usize)>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split) -> Self {
        let manifest = manifest_of(&samples);
        Dataset {
            samples,
            split,
            manifest,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-source sample counts in first-occurrence order; sums to the sample count.
pub fn manifest_of(samples: &[Sample]) -> Vec<(String, usize)> {
    let mut counts: IndexMap<String, usize> = IndexMap::new();
    for sample in samples {
        *counts.entry(sample.source.clone()).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

// Canonical JSONL record. Field names and polarity strings are bit-exact
// lowercase; `reasoning` is carried only when present so reasoned datasets
// can flow between pipeline stages.
#[derive(Serialize, Deserialize)]
struct SampleRecord {
    text: String,
    aspects: IndexMap<String, String>,
    overall: Option<String>,
    language: String,
    source: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    reasoning: Option<ReasoningChain>,
}

impl Serialize for Sample {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let record = SampleRecord {
            text: self.text.clone(),
            aspects: self
                .aspects
                .iter()
                .map(|(label, polarity)| (label.name().to_string(), polarity.to_string()))
                .collect(),
            overall: self.overall.map(|p| p.to_string()),
            language: self.language.clone(),
            source: self.source.clone(),
            reasoning: self.reasoning.clone(),
        };
        record.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Sample {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let record = SampleRecord::deserialize(deserializer)?;
        let mut aspects = AspectMap::new();
        for (name, polarity) in &record.aspects {
            let label = AspectLabel::new(name).map_err(D::Error::custom)?;
            let polarity = polarity_parse(polarity).map_err(D::Error::custom)?;
            if aspects.insert(label.clone(), polarity).is_some() {
                return Err(D::Error::custom(DomainError::DuplicateAspect(
                    label.name().to_string(),
                )));
            }
        }
        let overall = match record.overall {
            Some(raw) => Some(polarity_parse(&raw).map_err(D::Error::custom)?),
            None => None,
        };
        let mut sample = Sample::new(
            &record.text,
            aspects,
            overall,
            &record.language,
            &record.source,
        )
        .map_err(D::Error::custom)?;
        sample.reasoning = record.reasoning;
        Ok(sample)
    }
}
