//! Unpadded sequence packing: concatenate complete samples, [SEP]-delimited,
//! into sequences of up to `l_max` tokens. Greedy and order-preserving:
//! a sample that does not fit the current pack starts a new one.

use serde::{Deserialize, Serialize};

use super::mask::{MaskedSequence, IGNORE_LABEL};
use super::template::{FieldSpans, TokenSequence};
use super::tokenizer::{TokenId, SEP};
use super::ReasoningError;

/// One sample's placement inside a pack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedEntry {
    pub offset: usize,
    pub len: usize,
    pub spans: FieldSpans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub tokens: Vec<TokenId>,
    pub entries: Vec<PackedEntry>,
}

impl PackedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sample_tokens(&self, idx: usize) -> &[TokenId] {
        let entry = &self.entries[idx];
        &self.tokens[entry.offset..entry.offset + entry.len]
    }
}

/// Greedy in-order assignment of sequence indices to packs, accounting for
/// one delimiter token between samples in the same pack.
pub fn assign_packs(lengths: &[usize], l_max: usize) -> Result<Vec<Vec<usize>>, ReasoningError> {
    assert!(l_max >= 1, "l_max must be positive");
    if let Some(idx) = lengths.iter().position(|&len| len > l_max) {
        return Err(ReasoningError::SequenceTooLong {
            index: idx,
            len: lengths[idx],
            l_max,
        });
    }
    let mut packs: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut used = 0usize;
    for (idx, &len) in lengths.iter().enumerate() {
        let cost = if current.is_empty() { len } else { len + 1 };
        if used + cost <= l_max {
            current.push(idx);
            used += cost;
        } else {
            packs.push(std::mem::take(&mut current));
            current.push(idx);
            used = len;
        }
    }
    if !current.is_empty() {
        packs.push(current);
    }
    Ok(packs)
}

/// Pack rendered sequences; span bookkeeping is offset-adjusted per pack.
pub fn pack(sequences: &[TokenSequence], l_max: usize) -> Result<Vec<PackedSequence>, ReasoningError> {
    let lengths: Vec<usize> = sequences.iter().map(|s| s.len()).collect();
    let assignment = assign_packs(&lengths, l_max)?;
    let mut packs = Vec::with_capacity(assignment.len());
    for group in assignment {
        let mut tokens: Vec<TokenId> = Vec::new();
        let mut entries = Vec::with_capacity(group.len());
        for idx in group {
            if !tokens.is_empty() {
                tokens.push(SEP);
            }
            let seq = &sequences[idx];
            let offset = tokens.len();
            tokens.extend_from_slice(&seq.tokens);
            entries.push(PackedEntry {
                offset,
                len: seq.len(),
                spans: FieldSpans {
                    text: seq.spans.text.shifted(offset),
                    aspects: seq.spans.aspects.shifted(offset),
                    reasoning: seq.spans.reasoning.shifted(offset),
                    sentiments: seq.spans.sentiments.shifted(offset),
                },
            });
        }
        debug_assert!(tokens.len() <= l_max);
        packs.push(PackedSequence { tokens, entries });
    }
    Ok(packs)
}

/// Reproduce the original sequence stream from packs (delimiters dropped).
pub fn unpack(packs: &[PackedSequence]) -> Vec<Vec<TokenId>> {
    let mut out = Vec::new();
    for pack in packs {
        for idx in 0..pack.entries.len() {
            out.push(pack.sample_tokens(idx).to_vec());
        }
    }
    out
}

/// A pack of masked sequences — the pretraining artifact layout: corrupted
/// inputs, MLM labels, the selection mask, and per-sample boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedPack {
    pub input_tokens: Vec<TokenId>,
    pub labels: Vec<i64>,
    pub selection_mask: Vec<bool>,
    /// (offset, len) of each packed sample.
    pub boundaries: Vec<(usize, usize)>,
}

/// Pack masked sequences with the same greedy policy; delimiter positions
/// carry the ignore label and are never selected.
pub fn pack_masked(masked: &[MaskedSequence], l_max: usize) -> Result<Vec<MaskedPack>, ReasoningError> {
    let lengths: Vec<usize> = masked.iter().map(|m| m.len()).collect();
    let assignment = assign_packs(&lengths, l_max)?;
    let mut packs = Vec::with_capacity(assignment.len());
    for group in assignment {
        let mut out = MaskedPack {
            input_tokens: Vec::new(),
            labels: Vec::new(),
            selection_mask: Vec::new(),
            boundaries: Vec::new(),
        };
        for idx in group {
            if !out.input_tokens.is_empty() {
                out.input_tokens.push(SEP);
                out.labels.push(IGNORE_LABEL);
                out.selection_mask.push(false);
            }
            let seq = &masked[idx];
            out.boundaries.push((out.input_tokens.len(), seq.len()));
            out.input_tokens.extend_from_slice(&seq.input_tokens);
            out.labels.extend_from_slice(&seq.labels);
            out.selection_mask.extend_from_slice(&seq.selection_mask);
        }
        packs.push(out);
    }
    Ok(packs)
}
