//! Decoder training targets: instruction prompt plus a JSON completion, with
//! a loss mask that excludes every prompt token. Thinking mode prepends the
//! rationale under a leading `<thoughts>` key.

use serde::{Deserialize, Serialize};

use super::tokenizer::{TokenId, Tokenizer};
use super::ReasoningError;
use crate::domain::{ReasoningChain, Sample};
use crate::eval::parse::THOUGHTS_KEY;
use crate::eval::prompt::{eval_user_prompt, queried_aspects};
use crate::eval::ClassMode;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTarget {
    pub prompt_text: String,
    pub completion_text: String,
    pub prompt_tokens: Vec<TokenId>,
    pub completion_tokens: Vec<TokenId>,
    /// One flag per token of prompt ++ completion: false over the prompt,
    /// true over the completion.
    pub loss_mask: Vec<bool>,
}

impl DecoderTarget {
    pub fn total_len(&self) -> usize {
        self.prompt_tokens.len() + self.completion_tokens.len()
    }
}

/// JSONL record for decoder target files: the strings plus a run-length
/// encoded loss mask ([flag, count] pairs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderTargetRecord {
    pub prompt: String,
    pub completion: String,
    pub loss_mask_rle: Vec<(u8, usize)>,
}

impl From<&DecoderTarget> for DecoderTargetRecord {
    fn from(target: &DecoderTarget) -> Self {
        let mut rle: Vec<(u8, usize)> = Vec::new();
        for &flag in &target.loss_mask {
            let bit = flag as u8;
            match rle.last_mut() {
                Some((last, count)) if *last == bit => *count += 1,
                _ => rle.push((bit, 1)),
            }
        }
        DecoderTargetRecord {
            prompt: target.prompt_text.clone(),
            completion: target.completion_text.clone(),
            loss_mask_rle: rle,
        }
    }
}

/// Render one sample to a decoder target. In thinking mode the completion's
/// first key is `<thoughts>` carrying the (curated) chain text, followed by
/// the aspect keys in sample order, then the overall pseudo-aspect.
pub fn render_decoder_target(
    sample: &Sample,
    chain: Option<&ReasoningChain>,
    thinking: bool,
    class_mode: ClassMode,
    tokenizer: &mut dyn Tokenizer,
) -> Result<DecoderTarget, ReasoningError> {
    if thinking {
        let chain = chain.ok_or(ReasoningError::MissingChain)?;
        if !chain.is_kept() {
            return Err(ReasoningError::UncuratedChain);
        }
    }
    let aspects = queried_aspects(sample, true);
    let prompt_text = eval_user_prompt(sample.text(), &aspects, class_mode, true);

    // serde_json preserves insertion order, so key order is the contract.
    let mut object = serde_json::Map::new();
    if thinking {
        let chain = chain.expect("checked above");
        object.insert(
            THOUGHTS_KEY.to_string(),
            serde_json::Value::String(chain.text.clone()),
        );
    }
    for (label, polarity) in sample.aspects() {
        object.insert(
            label.name().to_string(),
            serde_json::Value::String(polarity.to_string()),
        );
    }
    if let Some(overall) = sample.overall {
        object.insert(
            crate::eval::OVERALL_SENTIMENT_KEY.to_string(),
            serde_json::Value::String(overall.to_string()),
        );
    }
    let completion_text = serde_json::Value::Object(object).to_string();

    let prompt_tokens = tokenizer.encode(&prompt_text);
    let completion_tokens = tokenizer.encode(&completion_text);
    let mut loss_mask = vec![false; prompt_tokens.len()];
    loss_mask.extend(std::iter::repeat_n(true, completion_tokens.len()));
    Ok(DecoderTarget {
        prompt_text,
        completion_text,
        prompt_tokens,
        completion_tokens,
        loss_mask,
    })
}
