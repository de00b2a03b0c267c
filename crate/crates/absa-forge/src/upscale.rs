//! Dataset upscaling: grow a dataset with style-matched synthetic samples
//! that prioritize the neutral class, one generated sample per batch of
//! exemplars, looping until the synthetic count reaches the original size.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AspectLabel, AspectMap, Dataset, Sample, SentimentPolarity};
use crate::gateway::{ChatRequest, GatewayError, GenParams, LlmGateway};
use crate::json_extract::extract_json_object;

#[derive(Debug, thiserror::Error)]
pub enum UpscaleError {
    #[error("invalid upscale config: {0}")]
    BadConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("hit the {max_passes}-pass cap with only {generated} of {target} unique samples")]
    MaxPassesExceeded {
        max_passes: u32,
        generated: usize,
        target: usize,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UpscaleConfig {
    pub batch_size: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    /// Termination guarantee for degenerate generators.
    pub max_passes: u32,
    /// Accept all five polarity classes instead of the classic three.
    pub five_class: bool,
}

impl Default for UpscaleConfig {
    fn default() -> Self {
        UpscaleConfig {
            batch_size: 10,
            temperature: 0.3,
            top_p: 0.95,
            seed: 0,
            max_passes: 50,
            five_class: false,
        }
    }
}

impl UpscaleConfig {
    pub fn validate(&self) -> Result<(), UpscaleError> {
        if self.batch_size < 1 {
            return Err(UpscaleError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.max_passes < 1 {
            return Err(UpscaleError::BadConfig("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

const UPSCALE_SYSTEM: &str = "You generate additional training samples for aspect-based \
sentiment analysis. You always answer with a single JSON object and nothing else.";

/// Prompt with every batch sample serialized alongside its labels, asking for
/// one new sample in the same style with neutral sentiment prioritized.
pub fn build_upscale_prompt(batch: &[&Sample], config: &UpscaleConfig) -> ChatRequest {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let mut exemplars = String::new();
    for (i, sample) in batch.iter().enumerate() {
        let labels: Vec<String> = sample
            .aspects()
            .iter()
            .map(|(label, polarity)| format!("{label}: {polarity}"))
            .collect();
        exemplars.push_str(&format!(
            "{}. text: {:?}\n   aspects: {}\n",
            i + 1,
            sample.text(),
            labels.join(", ")
        ));
    }
    let allowed = if config.five_class {
        "positive, negative, neutral, mixed, unknown"
    } else {
        "positive, negative, neutral"
    };
    let user = format!(
        "Here is a batch of labeled samples:\n\n{exemplars}\n\
        Write ONE new sample that matches the style, topic, and structure of this batch. \
        Prioritize including at least one aspect with *neutral* sentiment where it fits \
        naturally. Allowed sentiment values: {allowed}.\n\n\
        Answer with a single JSON object: {{\"text\": \"...\", \"aspects\": {{\"<aspect>\": \
        \"<sentiment>\"}}}}. Answer with that JSON object only."
    );
    let params = GenParams {
        temperature: config.temperature,
        top_p: config.top_p,
        max_tokens: 512,
        json_mode: true,
    };
    ChatRequest::system_user(UPSCALE_SYSTEM, &user, params, "upscale")
}

/// Parse one completion into a sample; `None` when it fails validation.
/// Valid means: a JSON object with non-empty text and at least one aspect,
/// every polarity drawn from the allowed class set.
fn parse_generated(completion: &str, config: &UpscaleConfig) -> Option<Sample> {
    let value = extract_json_object(completion).ok()?;
    let object = value.as_object()?;
    let text = object.get("text")?.as_str()?;
    let aspects_obj = object.get("aspects")?.as_object()?;
    if aspects_obj.is_empty() {
        return None;
    }
    let mut aspects = AspectMap::new();
    for (name, polarity) in aspects_obj {
        let label = AspectLabel::new(name).ok()?;
        let polarity = crate::domain::polarity_parse(polarity.as_str()?).ok()?;
        if !config.five_class && !SentimentPolarity::THREE.contains(&polarity) {
            return None;
        }
        if aspects.insert(label, polarity).is_some() {
            return None;
        }
    }
    Sample::new(text, aspects, None, "en", "synthetic:upscale").ok()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpscaleStats {
    pub passes: u32,
    pub generated: usize,
    pub invalid_completions: usize,
    pub duplicates_discarded: usize,
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
    pub mixed: usize,
    pub unknown: usize,
    pub neutral_share: f64,
}

/// Run the upscaling loop. Per pass: shuffle the originals (seeded),
/// partition into batches of `batch_size` (final partial batch included),
/// generate one sample per batch, keep valid parses that collide with
/// neither the originals nor earlier generations. Returns the generated
/// samples only.
pub fn upscale(
    dataset: &Dataset,
    config: &UpscaleConfig,
    gateway: &LlmGateway,
) -> Result<(Dataset, UpscaleStats), UpscaleError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(UpscaleError::EmptyDataset);
    }
    let target = dataset.len();
    let mut seen: HashSet<String> = dataset
        .samples
        .iter()
        .map(|s| s.normalized_text())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut generated: Vec<Sample> = Vec::with_capacity(target);
    let mut passes = 0u32;
    let mut invalid = 0usize;
    let mut duplicates = 0usize;

    while generated.len() < target {
        if passes >= config.max_passes {
            return Err(UpscaleError::MaxPassesExceeded {
                max_passes: config.max_passes,
                generated: generated.len(),
                target,
            });
        }
        passes += 1;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let requests: Vec<ChatRequest> = order
            .chunks(config.batch_size)
            .map(|chunk| {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
                build_upscale_prompt(&batch, config)
            })
            .collect();
        for completion in gateway.complete_many(&requests) {
            let Ok(completion) = completion else {
                invalid += 1;
                continue;
            };
            match parse_generated(&completion, config) {
                Some(sample) => {
                    if seen.insert(sample.normalized_text()) {
                        generated.push(sample);
                    } else {
                        duplicates += 1;
                    }
                }
                None => invalid += 1,
            }
        }
    }

    let out = Dataset::new(generated, dataset.split);
    let row = crate::corpus::dataset_stats("upscale", &out);
    let total = row.total_annotations().max(1);
    let stats = UpscaleStats {
        passes,
        generated: out.len(),
        invalid_completions: invalid,
        duplicates_discarded: duplicates,
        positive: row.positive,
        negative: row.negative,
        neutral: row.neutral,
        mixed: row.mixed,
        unknown: row.unknown,
        neutral_share: row.neutral as f64 / total as f64,
    };
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Split;
    use crate::gateway::testing::ScriptedTransport;
    use crate::gateway::GatewayMode;
    use std::sync::atomic::{AtomicUsize, Ordering};

    pub(crate) fn originals(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| {
                Sample::new(
                    &format!("Original sample number {i}."),
                    Sample::aspect_map(&[("service", SentimentPolarity::Positive)]).unwrap(),
                    None,
                    "en",
                    "semeval",
                )
                .unwrap()
            })
            .collect();
        Dataset::new(samples, Split::Train)
    }

    fn gateway_with(
        dir: &std::path::Path,
        script: impl Fn(&serde_json::Value) -> String + Send + Sync + 'static,
    ) -> LlmGateway {
        LlmGateway::builder(GatewayMode::Record)
            .cassette_path(dir.join("upscale.json"))
            .transport(Box::new(ScriptedTransport(move |body: &serde_json::Value| Ok(script(body)))))
            .build()
            .unwrap()
    }

    fn unique_completion(n: usize) -> String {
        serde_json::json!({
            "text": format!("Fresh synthetic sample {n}."),
            "aspects": {"food": "neutral"},
        })
        .to_string()
    }

    #[test]
    fn prompt_embeds_exactly_the_batch() {
        let data = originals(10);
        let batch: Vec<&Sample> = data.samples.iter().collect();
        let config = UpscaleConfig::default();
        let prompt = build_upscale_prompt(&batch, &config);
        let user = &prompt.messages[1].content;
        for sample in &data.samples {
            assert!(user.contains(sample.text()));
        }
        assert!(user.contains("10."));
        assert!(!user.contains("11."));
        assert_eq!(prompt.params.temperature, 0.3);
        assert_eq!(prompt.params.top_p, 0.95);

        let single = build_upscale_prompt(&batch[..1], &config);
        assert!(single.messages[1].content.contains("1."));
        assert!(!single.messages[1].content.contains("2."));

        assert_eq!(build_upscale_prompt(&batch, &config), build_upscale_prompt(&batch, &config));
    }

    #[test]
    fn simulated_run_matches_the_loop_arithmetic() {
        // 25 originals, batch 10 -> ceil(25/10) = 3 calls per pass; unique
        // completions accumulate 3 per pass, so 9 passes reach 27 >= 25.
        let dir = tempfile::tempdir().unwrap();
        let counter = AtomicUsize::new(0);
        let gateway = gateway_with(dir.path(), move |_| {
            unique_completion(counter.fetch_add(1, Ordering::SeqCst))
        });
        let config = UpscaleConfig { seed: 21, ..Default::default() };
        let (out, stats) = upscale(&originals(25), &config, &gateway).unwrap();
        assert_eq!(stats.passes, 9);
        assert_eq!(out.len(), 27);
        assert!(out.samples.iter().all(|s| s.source == "synthetic:upscale"));
        assert_eq!(gateway.call_counts()["upscale"], 27);
    }

    #[test]
    fn degenerate_generator_hits_the_pass_cap() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = gateway_with(dir.path(), |_| unique_completion(0));
        let config = UpscaleConfig { seed: 21, max_passes: 5, ..Default::default() };
        let err = upscale(&originals(25), &config, &gateway).unwrap_err();
        assert!(matches!(
            err,
            UpscaleError::MaxPassesExceeded { max_passes: 5, generated: 1, target: 25 }
        ));
    }

    #[test]
    fn collisions_with_originals_are_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let counter = AtomicUsize::new(0);
        let gateway = gateway_with(dir.path(), move |_| {
            let n = counter.fetch_add(1, Ordering::SeqCst);
            if n == 0 {
                // Echo an original text back; must not count.
                serde_json::json!({
                    "text": "Original sample number 0.",
                    "aspects": {"food": "neutral"},
                })
                .to_string()
            } else {
                unique_completion(n)
            }
        });
        let config = UpscaleConfig { seed: 21, ..Default::default() };
        let (out, stats) = upscale(&originals(3), &config, &gateway).unwrap();
        assert!(out
            .samples
            .iter()
            .all(|s| !s.text().starts_with("Original sample")));
        assert!(stats.duplicates_discarded >= 1);
    }

    #[test]
    fn three_class_mode_rejects_wider_polarities() {
        let config = UpscaleConfig::default();
        let mixed = r#"{"text": "Some text.", "aspects": {"food": "mixed"}}"#;
        assert!(parse_generated(mixed, &config).is_none());
        let five = UpscaleConfig { five_class: true, ..config };
        assert!(parse_generated(mixed, &five).is_some());
    }

    #[test]
    fn single_sample_dataset_upscales_in_one_pass() {
        let dir = tempfile::tempdir().unwrap();
        let counter = AtomicUsize::new(0);
        let gateway = gateway_with(dir.path(), move |_| {
            unique_completion(counter.fetch_add(1, Ordering::SeqCst))
        });
        let config = UpscaleConfig { seed: 1, ..Default::default() };
        let (out, stats) = upscale(&originals(1), &config, &gateway).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(stats.passes, 1);
    }

    #[test]
    fn same_seed_and_cassette_reproduce_the_output() {
        let dir = tempfile::tempdir().unwrap();
        let counter = AtomicUsize::new(0);
        let gateway = gateway_with(dir.path(), move |_| {
            unique_completion(counter.fetch_add(1, Ordering::SeqCst))
        });
        let config = UpscaleConfig { seed: 21, ..Default::default() };
        let (first, _) = upscale(&originals(8), &config, &gateway).unwrap();
        gateway.persist().unwrap();

        let replay = LlmGateway::replay(&dir.path().join("upscale.json")).unwrap();
        let (second, _) = upscale(&originals(8), &config, &replay).unwrap();
        assert_eq!(first.samples, second.samples);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = gateway_with(dir.path(), |_| unique_completion(0));
        assert!(matches!(
            upscale(&Dataset::new(vec![], Split::Train), &UpscaleConfig::default(), &gateway),
            Err(UpscaleError::EmptyDataset)
        ));
    }
}
