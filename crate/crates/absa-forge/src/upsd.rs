//! Specification-first synthetic data generation: sample aspect-sentiment
//! specs from a seed corpus, prompt an LLM to write text that embeds them
//! (with persona-driven stylistic variation), and validate the echoed labels
//! against the spec before accepting a sample.

use std::path::Path;

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::dedup_merge;
use crate::domain::{
    AspectLabel, AspectMap, ChainStatus, Dataset, ReasoningChain, Sample, SentimentPolarity,
};
use crate::gateway::{ChatRequest, GatewayError, GenParams, LlmGateway};
use crate::json_extract::extract_json_object;

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("seed corpus schema error: {0}")]
    CorpusSchemaError(String),
    #[error("label policy error: {0}")]
    BadPolicy(String),
    #[error("completion unparseable: {0}")]
    GenerationUnparseable(String),
    #[error("echoed labels disagree with the spec: {0}")]
    SpecMismatch(String),
    #[error("failure budget exhausted: collected {collected} of {target} in {attempted} attempts")]
    BudgetExhausted {
        collected: usize,
        target: usize,
        attempted: usize,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One aspect with keywords that guide (but never label) generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AspectEntry {
    pub aspect: String,
    #[serde(default)]
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub aspects: Vec<AspectEntry>,
}

/// Categories, aspects, keywords, and persona style templates that
/// parameterize spec sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedCorpus {
    pub version: u32,
    pub categories: Vec<Category>,
    pub personas: Vec<String>,
}

pub fn load_seed_corpus(path: &Path) -> Result<SeedCorpus, ForgeError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| ForgeError::CorpusSchemaError(format!("{}: {e}", path.display())))?;
    let corpus: SeedCorpus =
        serde_json::from_str(&raw).map_err(|e| ForgeError::CorpusSchemaError(e.to_string()))?;
    validate_corpus(&corpus)?;
    Ok(corpus)
}

fn validate_corpus(corpus: &SeedCorpus) -> Result<(), ForgeError> {
    if corpus.categories.is_empty() {
        return Err(ForgeError::CorpusSchemaError("no categories".to_string()));
    }
    let mut names = std::collections::HashSet::new();
    for category in &corpus.categories {
        if !names.insert(category.name.clone()) {
            return Err(ForgeError::CorpusSchemaError(format!(
                "duplicate category name {:?}",
                category.name
            )));
        }
        if category.aspects.is_empty() {
            return Err(ForgeError::CorpusSchemaError(format!(
                "category {:?} has no aspects",
                category.name
            )));
        }
        for entry in &category.aspects {
            if entry.aspect.trim().is_empty() {
                return Err(ForgeError::CorpusSchemaError(format!(
                    "category {:?} has an empty aspect",
                    category.name
                )));
            }
        }
    }
    if corpus.personas.is_empty() {
        return Err(ForgeError::CorpusSchemaError("no personas".to_string()));
    }
    if corpus.personas.iter().any(|p| p.trim().is_empty()) {
        return Err(ForgeError::CorpusSchemaError("empty persona".to_string()));
    }
    Ok(())
}

/// Sampling weights over the five polarity classes, in canonical order
/// (positive, negative, neutral, mixed, unknown). Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelPolicy(pub [f64; 5]);

impl LabelPolicy {
    pub fn uniform() -> Self {
        LabelPolicy([0.2; 5])
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.0.iter().any(|w| *w < 0.0) {
            return Err(ForgeError::BadPolicy("negative weight".to_string()));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ForgeError::BadPolicy(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// A sampled generation specification: the labels come first, the text is
/// generated to match them.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSpec {
    pub category: String,
    pub pairs: AspectMap,
    pub keywords: Vec<String>,
    pub persona: String,
    pub constraints: Option<String>,
}

pub const MAX_PAIRS: usize = 6;
const KEYWORDS_PER_ASPECT: usize = 2;

/// Draw one spec: category uniform, pair count uniform in [1, 6] (capped by
/// the category's aspect count), polarities from the policy, persona uniform.
pub fn sample_spec(
    corpus: &SeedCorpus,
    rng: &mut ChaCha8Rng,
    policy: &LabelPolicy,
) -> Result<GenerationSpec, ForgeError> {
    policy.validate()?;
    let category = corpus
        .categories
        .get(rng.gen_range(0..corpus.categories.len()))
        .expect("non-empty categories");
    let max_pairs = MAX_PAIRS.min(category.aspects.len());
    let pair_count = rng.gen_range(1..=max_pairs);
    let mut indices: Vec<usize> = (0..category.aspects.len()).collect();
    indices.shuffle(rng);
    indices.truncate(pair_count);

    let weights = WeightedIndex::new(policy.0.iter().map(|w| w.max(0.0)))
        .map_err(|e| ForgeError::BadPolicy(e.to_string()))?;
    let mut pairs = AspectMap::new();
    let mut keywords = Vec::new();
    for idx in indices {
        let entry = &category.aspects[idx];
        let label = AspectLabel::new(&entry.aspect)
            .map_err(|e| ForgeError::CorpusSchemaError(e.to_string()))?;
        let polarity = SentimentPolarity::ALL[weights.sample(rng)];
        pairs.insert(label, polarity);
        let mut pool: Vec<&String> = entry.keywords.iter().collect();
        pool.shuffle(rng);
        for kw in pool.into_iter().take(KEYWORDS_PER_ASPECT) {
            keywords.push(kw.clone());
        }
    }
    let persona = corpus.personas[rng.gen_range(0..corpus.personas.len())].clone();
    Ok(GenerationSpec {
        category: category.name.clone(),
        pairs,
        keywords,
        persona,
        constraints: None,
    })
}

const GENERATION_SYSTEM: &str = "You write short, realistic review-style texts for sentiment \
analysis training data. You always answer with a single JSON object and nothing else.";

const COT_EXAMPLES: &str = r#"Example:
Specification:
  category: electronics
  battery life: positive
  screen: mixed
Answer:
{"reasoning": "The battery should be praised outright. The screen needs both a good and a bad side in the same text so its sentiment is mixed: bright colors but bad glare. The text must not take a stance on anything else.", "text": "Charged it on Monday and it is still going strong on Friday. The screen is gorgeous indoors, though outside the glare makes it nearly unusable.", "aspects": {"battery life": "positive", "screen": "mixed"}}

Example:
Specification:
  category: hospitality
  cleanliness: negative
  wifi: unknown
Answer:
{"reasoning": "Cleanliness must be criticized. The wifi is labeled unknown, so the text must not mention connectivity at all, directly or indirectly.", "text": "There was dust on every shelf and the sheets smelled musty. Front desk shrugged when I mentioned it.", "aspects": {"cleanliness": "negative", "wifi": "unknown"}}"#;

/// Build the generation prompt for a spec: aspect-sentiment pairs, guiding
/// keywords, the persona instruction, worked reasoning examples, and the
/// required JSON answer shape.
pub fn build_generation_prompt(spec: &GenerationSpec) -> ChatRequest {
    let mut pair_lines = String::new();
    for (label, polarity) in &spec.pairs {
        pair_lines.push_str(&format!("  {label}: {polarity}\n"));
    }
    let keywords = if spec.keywords.is_empty() {
        String::new()
    } else {
        format!("Keywords to draw inspiration from: {}.\n", spec.keywords.join(", "))
    };
    let constraints = spec
        .constraints
        .as_deref()
        .map(|c| format!("Additional constraints: {c}\n"))
        .unwrap_or_default();
    let user = format!(
        "{COT_EXAMPLES}\n\n\
        Write one text in the category \"{category}\" that expresses exactly these sentiments \
        toward these aspects:\n{pair_lines}\
        {keywords}\
        Style instruction: {persona}\n\
        {constraints}\
        Rules: a \"mixed\" aspect must receive both praise and criticism in the same text; an \
        \"unknown\" aspect must not be mentioned or implied at all; a \"neutral\" aspect is \
        mentioned without any positive or negative stance.\n\n\
        Answer with a single JSON object with keys \"reasoning\" (how the text will embed each \
        sentiment), \"text\" (the generated text), and \"aspects\" (echoing the aspect-to-sentiment \
        mapping above, verbatim). Answer with that JSON object only.",
        category = spec.category,
        pair_lines = pair_lines,
        keywords = keywords,
        persona = spec.persona,
        constraints = constraints,
    );
    ChatRequest::system_user(
        GENERATION_SYSTEM,
        &user,
        GenParams::deterministic(1024, true),
        "upsd",
    )
}

/// Parse and validate one completion for a spec. The accepted sample carries
/// the spec's pairs as ground truth; the echoed pair list must agree.
pub fn accept_completion(
    spec: &GenerationSpec,
    completion: &str,
) -> Result<Sample, ForgeError> {
    let value = extract_json_object(completion)
        .map_err(|e| ForgeError::GenerationUnparseable(e.to_string()))?;
    let object = value.as_object().expect("extract_json_object yields objects");
    let reasoning = object
        .get("reasoning")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ForgeError::GenerationUnparseable("missing reasoning field".to_string()))?;
    if reasoning.trim().is_empty() {
        return Err(ForgeError::GenerationUnparseable("empty reasoning".to_string()));
    }
    let text = object
        .get("text")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ForgeError::GenerationUnparseable("missing text field".to_string()))?;
    let echoed = object
        .get("aspects")
        .and_then(|v| v.as_object())
        .ok_or_else(|| ForgeError::GenerationUnparseable("missing aspects object".to_string()))?;

    let mut echoed_map: IndexMap<AspectLabel, SentimentPolarity> = IndexMap::new();
    for (name, polarity) in echoed {
        let label = AspectLabel::new(name)
            .map_err(|e| ForgeError::GenerationUnparseable(e.to_string()))?;
        let polarity_str = polarity
            .as_str()
            .ok_or_else(|| ForgeError::GenerationUnparseable("non-string polarity".to_string()))?;
        let polarity = crate::domain::polarity_parse(polarity_str)
            .map_err(|e| ForgeError::GenerationUnparseable(e.to_string()))?;
        echoed_map.insert(label, polarity);
    }
    if echoed_map.len() != spec.pairs.len() {
        return Err(ForgeError::SpecMismatch(format!(
            "spec has {} pairs, completion echoed {}",
            spec.pairs.len(),
            echoed_map.len()
        )));
    }
    for (label, polarity) in &spec.pairs {
        match echoed_map.get(label) {
            Some(p) if p == polarity => {}
            Some(p) => {
                return Err(ForgeError::SpecMismatch(format!(
                    "aspect {:?}: spec says {polarity}, completion says {p}",
                    label.name()
                )))
            }
            None => {
                return Err(ForgeError::SpecMismatch(format!(
                    "aspect {:?} missing from echo",
                    label.name()
                )))
            }
        }
    }
    let sample = Sample::new(text, spec.pairs.clone(), None, "en", "synthetic:upsd")
        .map_err(|e| ForgeError::GenerationUnparseable(e.to_string()))?;
    Ok(sample.with_reasoning(ReasoningChain {
        text: reasoning.to_string(),
        status: ChainStatus::Generated,
        source_answer_correct: true,
    }))
}

/// Generate one sample for a spec through the gateway.
pub fn generate_sample(
    spec: &GenerationSpec,
    gateway: &LlmGateway,
) -> Result<Sample, ForgeError> {
    let completion = gateway.complete(&build_generation_prompt(spec))?;
    accept_completion(spec, &completion)
}

/// Forge a dataset of `count` unique valid samples, spending at most
/// 2 x count generation attempts. Specs are drawn sequentially from one
/// seeded stream; generation calls fan out through the gateway in waves and
/// results are consumed in spec order.
pub fn forge_dataset(
    corpus: &SeedCorpus,
    count: usize,
    policy: &LabelPolicy,
    gateway: &LlmGateway,
    rng_seed: u64,
) -> Result<Dataset, ForgeError> {
    assert!(count > 0, "count must be positive");
    policy.validate()?;
    let budget = count * 2;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut collected: Vec<Sample> = Vec::with_capacity(count);
    let mut seen_texts = std::collections::HashSet::new();
    let mut attempted = 0usize;

    while collected.len() < count && attempted < budget {
        let wave = (count - collected.len()).min(budget - attempted);
        let specs: Vec<GenerationSpec> = (0..wave)
            .map(|_| sample_spec(corpus, &mut rng, policy))
            .collect::<Result<_, _>>()?;
        let requests: Vec<ChatRequest> = specs.iter().map(build_generation_prompt).collect();
        let completions = gateway.complete_many(&requests);
        attempted += wave;
        for (spec, completion) in specs.iter().zip(completions) {
            let Ok(completion) = completion else { continue };
            let Ok(sample) = accept_completion(spec, &completion) else {
                continue;
            };
            if seen_texts.insert(sample.normalized_text()) {
                collected.push(sample);
            }
        }
    }
    if collected.len() < count {
        return Err(ForgeError::BudgetExhausted {
            collected: collected.len(),
            target: count,
            attempted,
        });
    }
    Ok(dedup_merge(&Dataset::new(collected, Default::default())))
}
