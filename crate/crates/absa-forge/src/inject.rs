//! Unknown-class injection: probabilistically augment samples with aspects
//! that are absent from their text, labeled `unknown`, each candidate
//! verified by an LLM judge.

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::domain::{AspectLabel, Dataset, Sample, SentimentPolarity};
use crate::gateway::LlmGateway;

#[derive(Debug, thiserror::Error)]
pub enum InjectError {
    #[error("invalid injection config: {0}")]
    BadConfig(String),
    #[error("universe leaves only {available} candidates, need {requested}")]
    InsufficientCandidates { available: usize, requested: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InjectionConfig {
    /// Probability that a sample is modified at all.
    pub p: f64,
    /// Minimum number of unknown aspects added to a modified sample.
    pub a: u32,
    /// Maximum number of unknown aspects added to a modified sample.
    pub b: u32,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            p: 0.25,
            a: 2,
            b: 4,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<(), InjectError> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(InjectError::BadConfig(format!("p = {} outside (0, 1]", self.p)));
        }
        if self.a < 1 || self.a > self.b {
            return Err(InjectError::BadConfig(format!(
                "need 1 <= a <= b, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Pick `n` aspects from the universe that the sample does not already carry.
/// Deterministic under the rng state.
pub fn candidate_aspects(
    universe: &IndexSet<AspectLabel>,
    sample: &Sample,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AspectLabel>, InjectError> {
    let available: Vec<&AspectLabel> = universe
        .iter()
        .filter(|label| !sample.aspects().contains_key(*label))
        .collect();
    if available.len() < n {
        return Err(InjectError::InsufficientCandidates {
            available: available.len(),
            requested: n,
        });
    }
    let picked = rand::seq::index::sample(rng, available.len(), n);
    Ok(picked.into_iter().map(|idx| available[idx].clone()).collect())
}

/// Per-run injection summary.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InjectionReport {
    pub modified: usize,
    pub skipped: usize,
    pub injected_aspects: usize,
    /// Samples selected for modification where every candidate was rejected
    /// (by the judge or by a gateway error); left untouched.
    pub unmodified_after_judging: usize,
    pub gateway_errors: usize,
}

/// Run the injection pass. The modification draw consumes exactly one value
/// per sample from a dedicated stream, so the set of modified indices depends
/// only on (seed, sample index); candidate selection uses a per-sample stream
/// derived from the same seed.
pub fn inject_unknowns(
    dataset: &Dataset,
    config: &InjectionConfig,
    gateway: &LlmGateway,
) -> Result<(Dataset, InjectionReport), InjectError> {
    config.validate()?;
    let universe = crate::corpus::aspect_universe(dataset);
    let mut decision_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "inject:decision"));
    let mut report = InjectionReport::default();
    let mut samples = Vec::with_capacity(dataset.len());

    for (index, sample) in dataset.samples.iter().enumerate() {
        let r: f64 = decision_rng.gen();
        if r > config.p {
            report.skipped += 1;
            samples.push(sample.clone());
            continue;
        }
        let mut sample_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("inject:sample:{index}")));
        let n = sample_rng.gen_range(config.a..=config.b) as usize;
        let candidates = candidate_aspects(&universe, sample, n, &mut sample_rng)?;
        let mut approved = Vec::new();
        let mut had_gateway_error = false;
        for candidate in candidates {
            match gateway.judge_aspect_absent(sample.text(), &candidate) {
                Ok(true) => approved.push(candidate),
                Ok(false) => {}
                Err(_) => {
                    had_gateway_error = true;
                    report.gateway_errors += 1;
                }
            }
        }
        if had_gateway_error && approved.is_empty() {
            samples.push(sample.clone());
            continue;
        }
        if approved.is_empty() {
            report.unmodified_after_judging += 1;
            samples.push(sample.clone());
            continue;
        }
        let mut modified = sample.clone();
        for label in approved {
            debug_assert!(!modified.aspects().contains_key(&label));
            modified.aspects_mut().insert(label, SentimentPolarity::Unknown);
            report.injected_aspects += 1;
        }
        report.modified += 1;
        samples.push(modified);
    }
    Ok((Dataset::new(samples, dataset.split), report))
}
