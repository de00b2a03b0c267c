//! Rendering samples into token sequences: the four-field thinking template
//! for masked-language-model pretraining, and the classic
//! `[CLS] text [SEP] aspect [SEP]` classification input.

use serde::{Deserialize, Serialize};

use super::tokenizer::{TokenId, Tokenizer, CLS, SEP};
use super::ReasoningError;
use crate::domain::{ReasoningChain, Sample};

/// Half-open token index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx >= self.start && idx < self.end
    }

    pub fn shifted(&self, offset: usize) -> Span {
        Span::new(self.start + offset, self.end + offset)
    }
}

/// Named field spans within a rendered sequence. Disjoint, ordered, in
/// bounds; unused fields are empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FieldSpans {
    pub text: Span,
    pub aspects: Span,
    pub reasoning: Span,
    pub sentiments: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<TokenId>,
    pub spans: FieldSpans,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub const FIELD_INPUT_TEXT: &str = "<input text>:";
pub const FIELD_INPUT_ASPECTS: &str = "<input aspects>:";
pub const FIELD_REASONING: &str = "<intermediate reasoning>:";
pub const FIELD_OUTPUT_SENTIMENTS: &str = "<output sentiments for aspects>:";

/// Render the four-field template. The sentiments field lists the polarity
/// words alone, in aspect order, so the sentiments span covers exactly the
/// sentiment classification tokens.
pub fn render_encoder_template(
    sample: &Sample,
    chain: &ReasoningChain,
    tokenizer: &mut dyn Tokenizer,
) -> Result<TokenSequence, ReasoningError> {
    if chain.text.trim().is_empty() {
        return Err(ReasoningError::EmptyReasoning);
    }
    if sample.aspects().is_empty() {
        return Err(ReasoningError::NoAspects);
    }
    let aspect_list = sample
        .aspects()
        .keys()
        .map(|label| label.name().to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let sentiment_list = sample
        .aspects()
        .values()
        .map(|polarity| polarity.as_str().to_string())
        .collect::<Vec<_>>()
        .join(" ");

    let mut tokens = Vec::new();
    let mut push = |tokenizer: &mut dyn Tokenizer, piece: &str| -> Span {
        let start = tokens.len();
        tokens.extend(tokenizer.encode(piece));
        Span::new(start, tokens.len())
    };

    push(tokenizer, FIELD_INPUT_TEXT);
    let text = push(tokenizer, sample.text());
    push(tokenizer, FIELD_INPUT_ASPECTS);
    let aspects = push(tokenizer, &aspect_list);
    push(tokenizer, FIELD_REASONING);
    let reasoning = push(tokenizer, &chain.text);
    push(tokenizer, FIELD_OUTPUT_SENTIMENTS);
    let sentiments = push(tokenizer, &sentiment_list);

    debug_assert_eq!(sentiments.len(), sample.aspects().len());
    Ok(TokenSequence {
        tokens,
        spans: FieldSpans {
            text,
            aspects,
            reasoning,
            sentiments,
        },
    })
}

/// `[CLS] text [SEP] aspect [SEP]` input for per-aspect classification.
pub fn render_encoder_cls_input(
    text: &str,
    aspect: &str,
    tokenizer: &mut dyn Tokenizer,
) -> Result<TokenSequence, ReasoningError> {
    if text.trim().is_empty() {
        return Err(ReasoningError::EmptyText);
    }
    if aspect.trim().is_empty() {
        return Err(ReasoningError::NoAspects);
    }
    let mut tokens = vec![CLS];
    let text_start = tokens.len();
    tokens.extend(tokenizer.encode(text));
    let text_span = Span::new(text_start, tokens.len());
    tokens.push(SEP);
    let aspect_start = tokens.len();
    tokens.extend(tokenizer.encode(aspect));
    let aspect_span = Span::new(aspect_start, tokens.len());
    tokens.push(SEP);
    Ok(TokenSequence {
        tokens,
        spans: FieldSpans {
            text: text_span,
            aspects: aspect_span,
            reasoning: Span::default(),
            sentiments: Span::default(),
        },
    })
}
