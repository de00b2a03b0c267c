//! Robust parsing of model predictions out of completion text.

use indexmap::IndexMap;

use super::prompt::OVERALL_SENTIMENT_KEY;
use super::EvalError;
use crate::domain::{normalize_text, polarity_parse, AspectLabel, AspectMap, SentimentPolarity};
use crate::json_extract::extract_json_object;

/// Predicted aspect polarities plus the optional overall sentiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub aspects: AspectMap,
    pub overall: Option<SentimentPolarity>,
}

/// The reasoning key emitted by thinking-mode models; ignored for scoring.
pub const THOUGHTS_KEY: &str = "<thoughts>";

/// Lenient parse: strip code fences and surrounding prose, take the outermost
/// balanced JSON object, then read aspect -> polarity entries. A `<thoughts>`
/// key is skipped; an unparseable polarity drops only that aspect (it will
/// score as wrong); on duplicate keys the first occurrence wins.
pub fn parse_response(raw: &str) -> Result<PredictionSet, EvalError> {
    let value = extract_json_object(raw).map_err(|_| EvalError::NoJsonFound)?;
    Ok(from_object(value.as_object().expect("extraction yields objects")))
}

/// Strict parse for constrained-decoding backends: the whole (trimmed)
/// response must be one JSON object.
pub fn parse_response_strict(raw: &str) -> Result<PredictionSet, EvalError> {
    let value: serde_json::Value =
        serde_json::from_str(raw.trim()).map_err(|_| EvalError::NoJsonFound)?;
    let object = value.as_object().ok_or(EvalError::NoJsonFound)?;
    Ok(from_object(object))
}

fn from_object(object: &serde_json::Map<String, serde_json::Value>) -> PredictionSet {
    let overall_key = normalize_text(OVERALL_SENTIMENT_KEY);
    let mut aspects: IndexMap<AspectLabel, SentimentPolarity> = IndexMap::new();
    let mut overall = None;
    for (key, value) in object {
        if key == THOUGHTS_KEY {
            continue;
        }
        let Some(polarity_str) = value.as_str() else {
            continue;
        };
        let Ok(polarity) = polarity_parse(polarity_str) else {
            continue;
        };
        let Ok(label) = AspectLabel::new(key) else {
            continue;
        };
        if label.key() == overall_key {
            if overall.is_none() {
                overall = Some(polarity);
            }
            continue;
        }
        aspects.entry(label).or_insert(polarity);
    }
    PredictionSet { aspects, overall }
}
