//! Stage composition: run configuration, gateway wiring, output manifests,
//! and the ABSA-mix assembly pipeline. Stages communicate only through files
//! in the canonical formats; re-running a stage in replay mode with the same
//! inputs is byte-identical.

pub mod config;
pub mod manifest;

pub use config::{GatewayConfig, RunConfig};
pub use manifest::{digest_file, RunManifest};

use std::path::{Path, PathBuf};

use crate::corpus::{dedup_merge, leak_check, LeakReport};
use crate::derive_seed;
use crate::domain::{Dataset, Sample, Split};
use crate::gateway::{GatewayError, LlmGateway};
use crate::inject::{inject_unknowns, InjectionConfig, InjectionReport};
use crate::jsonl;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Inject(#[from] crate::inject::InjectError),
    #[error(transparent)]
    Upscale(#[from] crate::upscale::UpscaleError),
    #[error(transparent)]
    Forge(#[from] crate::upsd::ForgeError),
    #[error(transparent)]
    Reasoning(#[from] crate::reasoning::ReasoningError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Vocab(#[from] crate::reasoning::tokenizer::VocabError),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Everything compose-mix needs: the component datasets, the evaluation
/// splits to leak-check against, the pre-upscaled split to append, and the
/// injection parameters.
#[derive(Debug, Clone)]
pub struct ComposeInputs {
    pub public: Vec<PathBuf>,
    pub synth: Vec<PathBuf>,
    pub eval: Vec<PathBuf>,
    pub upscaled: Option<PathBuf>,
    pub injection: InjectionConfig,
    /// Source ids dropped from the composed training set (sources known to
    /// degrade encoder training stay in evaluation sets only).
    pub exclude_sources: Vec<String>,
}

#[derive(Debug)]
pub struct ComposeOutcome {
    pub dataset: Dataset,
    pub leak_report: LeakReport,
    pub injection_report: InjectionReport,
}

/// Assemble the mixed training set: dedup-merge public and synthetic
/// sources, remove leaks against every eval split, inject unknown-class
/// aspects, then append the upscaled split.
pub fn compose_mix(
    inputs: &ComposeInputs,
    gateway: &LlmGateway,
) -> Result<ComposeOutcome, PipelineError> {
    let mut samples: Vec<Sample> = Vec::new();
    for path in inputs.public.iter().chain(&inputs.synth) {
        samples.extend(jsonl::read_samples(path)?);
    }
    if !inputs.exclude_sources.is_empty() {
        samples.retain(|s| !s.source.split('+').any(|tag| inputs.exclude_sources.iter().any(|x| x == tag)));
    }
    let merged = dedup_merge(&Dataset::new(samples, Split::Train));

    let mut train = merged;
    let mut leak_report = LeakReport::default();
    for path in &inputs.eval {
        let eval = Dataset::new(jsonl::read_samples(path)?, Split::Test);
        let (survivor, report) = leak_check(&train, &eval);
        train = survivor;
        leak_report.removed_count += report.removed_count;
        leak_report.collisions.extend(report.collisions);
    }

    // p = 0 composes without the unknown class; the injection stage itself
    // requires p > 0.
    let (mut composed, injection_report) = if inputs.injection.p == 0.0 {
        (train, InjectionReport::default())
    } else {
        inject_unknowns(&train, &inputs.injection, gateway)?
    };

    if let Some(path) = &inputs.upscaled {
        let upscaled = jsonl::read_samples(path)?;
        composed.samples.extend(upscaled);
        composed.manifest = crate::domain::manifest_of(&composed.samples);
    }

    Ok(ComposeOutcome {
        dataset: composed,
        leak_report,
        injection_report,
    })
}

/// Per-stage seed derivation from the run's global seed.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    derive_seed(global, &format!("stage:{stage}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SentimentPolarity;
    use crate::gateway::testing::ScriptedTransport;
    use crate::gateway::GatewayMode;

    fn write_fixture(dir: &Path, name: &str, count: usize, prefix: &str) -> PathBuf {
        let samples: Vec<Sample> = (0..count)
            .map(|i| {
                Sample::new(
                    &format!("{prefix} sample number {i}."),
                    Sample::aspect_map(&[(&format!("aspect{}", i % 7), SentimentPolarity::Positive)])
                        .unwrap(),
                    None,
                    "en",
                    name,
                )
                .unwrap()
            })
            .collect();
        let path = dir.join(format!("{name}.jsonl"));
        jsonl::write_samples(&path, &samples).unwrap();
        path
    }

    #[test]
    fn compose_mix_builds_the_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let public = write_fixture(dir.path(), "public", 40, "Public");
        let synth = write_fixture(dir.path(), "synth", 10, "Synth");
        // Two eval texts collide with public ones.
        let eval_samples: Vec<Sample> = (0..2)
            .map(|i| {
                Sample::new(
                    &format!("Public sample number {i}."),
                    Sample::aspect_map(&[("aspect0", SentimentPolarity::Positive)]).unwrap(),
                    None,
                    "en",
                    "eval",
                )
                .unwrap()
            })
            .collect();
        let eval = dir.path().join("eval.jsonl");
        jsonl::write_samples(&eval, &eval_samples).unwrap();
        let upscaled = write_fixture(dir.path(), "upscaled", 5, "Upscaled");

        let gateway = LlmGateway::builder(GatewayMode::Record)
            .cassette_path(dir.path().join("cassette.json"))
            .transport(Box::new(ScriptedTransport(|_: &serde_json::Value| Ok("yes".into()))))
            .build()
            .unwrap();
        let inputs = ComposeInputs {
            public: vec![public],
            synth: vec![synth],
            eval: vec![eval],
            upscaled: Some(upscaled),
            injection: InjectionConfig { p: 0.25, a: 2, b: 4, seed: 7 },
            exclude_sources: vec![],
        };
        let outcome = compose_mix(&inputs, &gateway).unwrap();
        // 50 merged, 2 leaked, 5 upscaled appended.
        assert_eq!(outcome.dataset.len(), 53);
        assert_eq!(outcome.leak_report.removed_count, 2);
        let manifest_total: usize = outcome.dataset.manifest.iter().map(|(_, n)| n).sum();
        assert_eq!(manifest_total, 53);
        assert!(outcome.injection_report.modified > 0);
    }

    #[test]
    fn zero_probability_composes_without_unknown_labels() {
        let dir = tempfile::tempdir().unwrap();
        let public = write_fixture(dir.path(), "public", 20, "Public");
        let gateway = LlmGateway::builder(GatewayMode::Record)
            .cassette_path(dir.path().join("cassette.json"))
            .transport(Box::new(ScriptedTransport(|_: &serde_json::Value| Ok("yes".into()))))
            .build()
            .unwrap();
        let inputs = ComposeInputs {
            public: vec![public],
            synth: vec![],
            eval: vec![],
            upscaled: None,
            injection: InjectionConfig { p: 0.0, a: 2, b: 4, seed: 7 },
            exclude_sources: vec![],
        };
        let outcome = compose_mix(&inputs, &gateway).unwrap();
        assert_eq!(outcome.injection_report.modified, 0);
        assert!(outcome.dataset.samples.iter().all(|s| {
            s.aspects().values().all(|p| *p != SentimentPolarity::Unknown)
        }));
        assert!(gateway.call_counts().is_empty());
    }

    #[test]
    fn excluded_sources_are_dropped_before_merge() {
        let dir = tempfile::tempdir().unwrap();
        let public = write_fixture(dir.path(), "keep", 10, "Keep");
        let mams = write_fixture(dir.path(), "mams", 5, "Mams");
        let gateway = LlmGateway::builder(GatewayMode::Record)
            .cassette_path(dir.path().join("cassette.json"))
            .transport(Box::new(ScriptedTransport(|_: &serde_json::Value| Ok("yes".into()))))
            .build()
            .unwrap();
        let inputs = ComposeInputs {
            public: vec![public, mams],
            synth: vec![],
            eval: vec![],
            upscaled: None,
            injection: InjectionConfig { p: 0.0, a: 2, b: 4, seed: 7 },
            exclude_sources: vec!["mams".to_string()],
        };
        let outcome = compose_mix(&inputs, &gateway).unwrap();
        assert_eq!(outcome.dataset.len(), 10);
        assert!(outcome.dataset.samples.iter().all(|s| s.source == "keep"));
    }

    #[test]
    fn stage_seeds_differ_per_stage() {
        assert_ne!(stage_seed(1, "inject"), stage_seed(1, "upscale"));
        assert_eq!(stage_seed(1, "inject"), stage_seed(1, "inject"));
    }
}
