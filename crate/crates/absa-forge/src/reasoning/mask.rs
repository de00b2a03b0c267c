//! Targeted masking: the 30% selection budget always includes every
//! sentiment-label token, then conventional 80/10/10 corruption is applied to
//! the selected positions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::TokenSequence;
use super::tokenizer::{TokenId, Vocab, MASK, NUM_RESERVED};
use super::ReasoningError;

/// Label value at unselected positions.
pub const IGNORE_LABEL: i64 = -100;

pub const DEFAULT_MASK_RATIO: f64 = 0.30;

/// A sequence after corruption: inputs, original ids at selected positions
/// (`IGNORE_LABEL` elsewhere), and the selection mask itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub input_tokens: Vec<TokenId>,
    pub labels: Vec<i64>,
    pub selection_mask: Vec<bool>,
}

impl MaskedSequence {
    pub fn len(&self) -> usize {
        self.input_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_tokens.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.selection_mask.iter().filter(|s| **s).count()
    }
}

/// Select ceil(ratio * L) positions — all sentiment-span positions plus a
/// uniform draw over the rest (reserved delimiter tokens excluded) — then
/// corrupt each selected position: 80% [MASK], 10% random non-special token,
/// 10% unchanged.
pub fn targeted_mask(
    seq: &TokenSequence,
    ratio: f64,
    rng: &mut ChaCha8Rng,
    vocab: &Vocab,
) -> Result<MaskedSequence, ReasoningError> {
    let len = seq.len();
    let sentiments = seq.spans.sentiments;
    if sentiments.is_empty() {
        return Err(ReasoningError::EmptySentimentSpan);
    }
    let budget = (ratio * len as f64).ceil() as usize;
    if budget < sentiments.len() {
        return Err(ReasoningError::RatioTooSmall {
            budget,
            sentiment_tokens: sentiments.len(),
        });
    }

    let mut selected = vec![false; len];
    selected[sentiments.start..sentiments.end].fill(true);
    let fill = budget - sentiments.len();
    let eligible: Vec<usize> = (0..len)
        .filter(|&idx| !sentiments.contains(idx) && !Vocab::is_reserved(seq.tokens[idx]))
        .collect();
    if eligible.len() < fill {
        return Err(ReasoningError::RatioTooSmall {
            budget,
            sentiment_tokens: sentiments.len() + eligible.len(),
        });
    }
    for pick in rand::seq::index::sample(rng, eligible.len(), fill) {
        selected[eligible[pick]] = true;
    }

    let mut input_tokens = seq.tokens.clone();
    let mut labels = vec![IGNORE_LABEL; len];
    let regular_vocab = vocab.len() as u32 - NUM_RESERVED;
    for idx in 0..len {
        if !selected[idx] {
            continue;
        }
        labels[idx] = seq.tokens[idx] as i64;
        let roll: f64 = rng.gen();
        if roll < 0.8 {
            input_tokens[idx] = MASK;
        } else if roll < 0.9 && regular_vocab > 0 {
            input_tokens[idx] = NUM_RESERVED + rng.gen_range(0..regular_vocab);
        }
        // else: keep the original token
    }
    Ok(MaskedSequence {
        input_tokens,
        labels,
        selection_mask: selected,
    })
}
