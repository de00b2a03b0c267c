//! Reasoning-chain forging: two-phase rationale bootstrapping (generate, then
//! refine wrong answers against the ground truth), curation, thinking-template
//! rendering, targeted masking, sequence packing, and decoder targets.

pub mod decoder;
pub mod mask;
pub mod pack;
pub mod template;
pub mod tokenizer;

pub use decoder::{render_decoder_target, DecoderTarget, DecoderTargetRecord};
pub use mask::{targeted_mask, MaskedSequence, DEFAULT_MASK_RATIO, IGNORE_LABEL};
pub use pack::{assign_packs, pack, pack_masked, unpack, MaskedPack, PackedEntry, PackedSequence};
pub use template::{
    render_encoder_cls_input, render_encoder_template, FieldSpans, Span, TokenSequence,
};
pub use tokenizer::{tokenizer_by_name, ReferenceTokenizer, TokenId, Tokenizer, Vocab};

use indexmap::IndexMap;

use crate::domain::{
    polarity_parse, AspectLabel, ChainStatus, ReasoningChain, Sample, SentimentPolarity,
};
use crate::gateway::{ChatRequest, GatewayError, GenParams, LlmGateway};
use crate::json_extract::extract_json_object;

#[derive(Debug, thiserror::Error)]
pub enum ReasoningError {
    #[error("sample has no aspects to reason about")]
    NoAspects,
    #[error("sample text is empty")]
    EmptyText,
    #[error("reasoning chain is empty")]
    EmptyReasoning,
    #[error("completion unparseable: {0}")]
    GenerationUnparseable(String),
    #[error("sequence has an empty sentiments span")]
    EmptySentimentSpan,
    #[error("selection budget {budget} cannot cover {sentiment_tokens} sentiment tokens")]
    RatioTooSmall {
        budget: usize,
        sentiment_tokens: usize,
    },
    #[error("sequence {index} has {len} tokens, exceeding l_max = {l_max}")]
    SequenceTooLong {
        index: usize,
        len: usize,
        l_max: usize,
    },
    #[error("thinking mode requires a reasoning chain")]
    MissingChain,
    #[error("thinking mode requires a curated chain")]
    UncuratedChain,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Labels predicted alongside a reasoning chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictedLabels {
    pub aspects: IndexMap<AspectLabel, SentimentPolarity>,
    pub overall: Option<SentimentPolarity>,
}

impl PredictedLabels {
    /// Correct means every gold aspect (and the overall label, when present)
    /// is predicted with the gold polarity. Extra predicted keys are ignored.
    pub fn matches(&self, sample: &Sample) -> bool {
        for (label, gold) in sample.aspects() {
            if self.aspects.get(label) != Some(gold) {
                return false;
            }
        }
        if let Some(gold_overall) = sample.overall {
            if self.overall != Some(gold_overall) {
                return false;
            }
        }
        true
    }
}

const REASONING_SYSTEM: &str = "You are an expert in aspect-based sentiment analysis. You think \
step by step and always answer with a single JSON object and nothing else.";

const REASONING_EXAMPLES: &str = r#"Example:
Text: "The screen is stunning but the battery barely lasts half a day."
Aspects: screen, battery
Answer:
{"reasoning": "The screen is called stunning, clear praise, so screen is positive. The battery barely lasting half a day is a complaint, so battery is negative.", "aspects": {"screen": "positive", "battery": "negative"}}

Example:
Text: "Decent hotel. The pool was warm yet overcrowded."
Aspects: pool, parking
Answer:
{"reasoning": "The pool gets praise for being warm and criticism for overcrowding, both aimed at the same aspect, so pool is mixed. Parking is never mentioned or implied, so parking is unknown.", "aspects": {"pool": "mixed", "parking": "unknown"}}"#;

fn aspect_list(sample: &Sample) -> String {
    let mut names: Vec<String> = sample
        .aspects()
        .keys()
        .map(|l| l.name().to_string())
        .collect();
    if sample.overall.is_some() {
        names.push(crate::eval::OVERALL_SENTIMENT_KEY.to_string());
    }
    names.join(", ")
}

fn generation_request(sample: &Sample) -> ChatRequest {
    let user = format!(
        "{REASONING_EXAMPLES}\n\n\
         Text: {:?}\n\
         Aspects: {}\n\n\
         Reason step by step about the sentiment the text expresses toward each aspect, then \
         answer with a single JSON object with keys \"reasoning\" and \"aspects\" (mapping every \
         listed aspect to one of: positive, negative, neutral, mixed, unknown).",
        sample.text(),
        aspect_list(sample),
    );
    ChatRequest::system_user(REASONING_SYSTEM, &user, GenParams::deterministic(1024, true), "reason")
}

fn refinement_request(sample: &Sample, chain: &ReasoningChain) -> ChatRequest {
    let gold: Vec<String> = sample
        .aspects()
        .iter()
        .map(|(label, polarity)| format!("{label}: {polarity}"))
        .chain(
            sample
                .overall
                .map(|o| format!("{}: {o}", crate::eval::OVERALL_SENTIMENT_KEY)),
        )
        .collect();
    let user = format!(
        "Text: {:?}\n\
         Aspects: {}\n\n\
         An earlier attempt reasoned as follows and reached a wrong conclusion:\n{:?}\n\n\
         The correct labels are:\n{}\n\n\
         Revise the reasoning so it leads to exactly these labels. Answer with a single JSON \
         object with keys \"reasoning\" and \"aspects\" (mapping every listed aspect to its \
         correct sentiment).",
        sample.text(),
        aspect_list(sample),
        chain.text,
        gold.join("\n"),
    );
    ChatRequest::system_user(REASONING_SYSTEM, &user, GenParams::deterministic(1024, true), "refine")
}

fn parse_reasoning_completion(
    completion: &str,
) -> Result<(String, PredictedLabels), ReasoningError> {
    let value = extract_json_object(completion)
        .map_err(|e| ReasoningError::GenerationUnparseable(e.to_string()))?;
    let object = value.as_object().expect("extraction yields objects");
    let reasoning = object
        .get("reasoning")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ReasoningError::GenerationUnparseable("missing reasoning field".into()))?;
    if reasoning.trim().is_empty() {
        return Err(ReasoningError::GenerationUnparseable("empty reasoning".into()));
    }
    let aspects_obj = object
        .get("aspects")
        .and_then(|v| v.as_object())
        .ok_or_else(|| ReasoningError::GenerationUnparseable("missing aspects object".into()))?;
    let overall_key = crate::domain::normalize_text(crate::eval::OVERALL_SENTIMENT_KEY);
    let mut labels = PredictedLabels::default();
    for (name, polarity) in aspects_obj {
        let Some(polarity_str) = polarity.as_str() else { continue };
        let Ok(polarity) = polarity_parse(polarity_str) else { continue };
        let Ok(label) = AspectLabel::new(name) else { continue };
        if label.key() == overall_key {
            labels.overall.get_or_insert(polarity);
        } else {
            labels.aspects.entry(label).or_insert(polarity);
        }
    }
    Ok((reasoning.to_string(), labels))
}

/// Phase one: prompt for a rationale with worked examples and record whether
/// the model's own answer matched the ground truth.
pub fn generate_reasoning(
    sample: &Sample,
    gateway: &LlmGateway,
) -> Result<(ReasoningChain, PredictedLabels), ReasoningError> {
    if sample.aspects().is_empty() {
        return Err(ReasoningError::NoAspects);
    }
    let completion = gateway.complete(&generation_request(sample))?;
    let (reasoning, labels) = parse_reasoning_completion(&completion)?;
    let chain = ReasoningChain {
        text: reasoning,
        status: ChainStatus::Generated,
        source_answer_correct: labels.matches(sample),
    };
    Ok((chain, labels))
}

/// Phase two: show the wrong rationale together with the correct answer and
/// ask for a revision. Still-wrong revisions, refusals, and unparseable
/// output all reject the chain; rejection is an outcome, not an error.
pub fn refine_reasoning(
    sample: &Sample,
    chain: &ReasoningChain,
    gateway: &LlmGateway,
) -> Result<ReasoningChain, ReasoningError> {
    debug_assert!(!chain.source_answer_correct, "only wrong answers are refined");
    let completion = match gateway.complete(&refinement_request(sample, chain)) {
        Ok(completion) => completion,
        Err(GatewayError::ReplayMiss(fp)) => return Err(GatewayError::ReplayMiss(fp).into()),
        Err(_) => {
            return Ok(ReasoningChain {
                text: chain.text.clone(),
                status: ChainStatus::Rejected,
                source_answer_correct: false,
            })
        }
    };
    match parse_reasoning_completion(&completion) {
        Ok((revised, labels)) if labels.matches(sample) => Ok(ReasoningChain {
            text: revised,
            status: ChainStatus::Refined,
            source_answer_correct: false,
        }),
        // Wrong again, refused, or unparseable: discard.
        _ => Ok(ReasoningChain {
            text: chain.text.clone(),
            status: ChainStatus::Rejected,
            source_answer_correct: false,
        }),
    }
}

/// Keep exactly the pairs whose chain is either correct-at-first-try or
/// successfully refined.
pub fn curate(pairs: Vec<(Sample, ReasoningChain)>) -> Vec<(Sample, ReasoningChain)> {
    pairs.into_iter().filter(|(_, chain)| chain.is_kept()).collect()
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ReasonReport {
    pub total: usize,
    pub correct_first_try: usize,
    pub refined: usize,
    pub rejected: usize,
    pub unparseable: usize,
}

/// Run both phases over a dataset and curate. Samples without aspects are
/// skipped; generation failures count as rejections.
pub fn reason_dataset(
    samples: &[Sample],
    gateway: &LlmGateway,
) -> Result<(Vec<(Sample, ReasoningChain)>, ReasonReport), ReasoningError> {
    let mut report = ReasonReport::default();
    let mut pairs = Vec::new();
    for sample in samples {
        if sample.aspects().is_empty() {
            continue;
        }
        report.total += 1;
        let (chain, _) = match generate_reasoning(sample, gateway) {
            Ok(result) => result,
            Err(ReasoningError::Gateway(GatewayError::ReplayMiss(fp))) => {
                return Err(GatewayError::ReplayMiss(fp).into())
            }
            Err(_) => {
                report.unparseable += 1;
                report.rejected += 1;
                continue;
            }
        };
        let final_chain = if chain.source_answer_correct {
            report.correct_first_try += 1;
            chain
        } else {
            let refined = refine_reasoning(sample, &chain, gateway)?;
            match refined.status {
                ChainStatus::Refined => report.refined += 1,
                _ => report.rejected += 1,
            }
            refined
        };
        pairs.push((sample.clone(), final_chain));
    }
    Ok((curate(pairs), report))
}
