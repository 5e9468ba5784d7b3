//! WordPiece tokenization with whole-word grouping.
//!
//! Word-level scores and masks apply to whole words, so every sequence
//! carries spans mapping each word to its contiguous run of subtokens.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalize::NormalizationPolicy;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

impl SpecialIds {
    pub fn contains(&self, id: u32) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }

    /// Specials that mark sequence structure. [UNK] is excluded: it stands
    /// in for unmatched words, so it appears inside word spans.
    pub fn is_structural(&self, id: u32) -> bool {
        id == self.pad || id == self.cls || id == self.sep || id == self.mask
    }
}

/// BERT-style vocabulary: one token per line, id = 0-based line number.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    specials: SpecialIds,
}

impl Vocab {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let token = raw.trim_end_matches('\r');
            if token.trim().is_empty() {
                return Err(Error::VocabEmptyToken {
                    path: path.to_path_buf(),
                    line: idx + 1,
                });
            }
            tokens.push(token.to_string());
        }
        Vocab::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if let Some(&first) = index.get(token) {
                return Err(Error::VocabDuplicate {
                    token: token.clone(),
                    first_line: first as usize + 1,
                    second_line: id + 1,
                });
            }
            index.insert(token.clone(), id as u32);
        }
        let special = |name: &'static str| -> Result<u32> {
            index
                .get(name)
                .copied()
                .ok_or(Error::VocabMissingSpecial { token: name })
        };
        let specials = SpecialIds {
            pad: special(PAD)?,
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            mask: special(MASK)?,
        };
        Ok(Vocab {
            tokens,
            index,
            specials,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn specials(&self) -> &SpecialIds {
        &self.specials
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.specials.contains(id)
    }

    pub fn is_continuation(&self, id: u32) -> bool {
        self.tokens[id as usize].starts_with(CONTINUATION_PREFIX)
    }

    /// Ids eligible as random replacements: everything except the five
    /// special tokens.
    pub fn replacement_pool(&self) -> Vec<u32> {
        (0..self.tokens.len() as u32)
            .filter(|&id| !self.is_special(id))
            .collect()
    }
}

/// Greedy longest-match-first WordPiece. Any unmatched step, or a word
/// longer than `max_chars` characters, maps the whole word to [UNK].
pub fn tokenize_word(vocab: &Vocab, word: &str, max_chars: usize) -> Vec<u32> {
    let unk = vec![vocab.specials.unk];
    if word.is_empty() {
        return unk;
    }
    let boundaries: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n_chars = boundaries.len() - 1;
    if n_chars > max_chars {
        return unk;
    }

    let mut ids = Vec::new();
    let mut start = 0usize; // index into boundaries
    while start < n_chars {
        let mut matched = None;
        for end in (start + 1..=n_chars).rev() {
            let piece = &word[boundaries[start]..boundaries[end]];
            let candidate = if start == 0 {
                vocab.id_of(piece)
            } else {
                vocab.id_of(&format!("{CONTINUATION_PREFIX}{piece}"))
            };
            if let Some(id) = candidate {
                matched = Some((id, end));
                break;
            }
        }
        match matched {
            Some((id, end)) => {
                ids.push(id);
                start = end;
            }
            None => return unk,
        }
    }
    ids
}

/// Tokenized text with word spans. Spans are half-open `(start, end)` index
/// ranges into `token_ids`, sorted and disjoint, covering exactly the
/// non-special positions. `word_scores` stays empty until the scoring
/// stage fills it (one score per span).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordGroupedSequence {
    pub token_ids: Vec<u32>,
    pub word_spans: Vec<(usize, usize)>,
    pub word_surfaces: Vec<String>,
    pub word_scores: Vec<f64>,
}

impl WordGroupedSequence {
    pub fn word_count(&self) -> usize {
        self.word_spans.len()
    }

    /// Check the span partition invariant against a vocabulary: sorted,
    /// disjoint, in-bounds, non-empty spans that cover exactly the
    /// positions not holding a structural special ([PAD]/[CLS]/[SEP]/
    /// [MASK]), with continuation pieces never starting a span.
    pub fn spans_partition_nonspecial(&self, vocab: &Vocab) -> bool {
        let structural = |id: u32| vocab.specials().is_structural(id);
        let mut covered = vec![false; self.token_ids.len()];
        let mut prev_end = 0usize;
        for (i, &(start, end)) in self.word_spans.iter().enumerate() {
            if start >= end || end > self.token_ids.len() {
                return false;
            }
            if i > 0 && start < prev_end {
                return false;
            }
            prev_end = end;
            for (pos, flag) in covered[start..end].iter_mut().enumerate() {
                if structural(self.token_ids[start + pos]) {
                    return false;
                }
                *flag = true;
            }
            if vocab.is_continuation(self.token_ids[start]) {
                return false;
            }
        }
        self.token_ids
            .iter()
            .zip(&covered)
            .all(|(&id, &c)| c != structural(id))
    }
}

/// Is this character split into its own single-character word? ASCII
/// punctuation only; everything else counts as a word character.
fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
}

/// Normalize, split on whitespace, split punctuation characters into
/// standalone words, and tokenize each word.
pub fn tokenize_text(
    vocab: &Vocab,
    text: &str,
    policy: &NormalizationPolicy,
) -> WordGroupedSequence {
    let normalized = policy.apply(text);
    let mut seq = WordGroupedSequence::default();
    for chunk in normalized.split_whitespace() {
        let mut word_start = 0usize;
        let flush = |start: usize, end: usize, seq: &mut WordGroupedSequence| {
            if start < end {
                append_word(vocab, &chunk[start..end], &mut *seq);
            }
        };
        for (idx, c) in chunk.char_indices() {
            if is_punctuation(c) {
                flush(word_start, idx, &mut seq);
                append_word(vocab, &chunk[idx..idx + c.len_utf8()], &mut seq);
                word_start = idx + c.len_utf8();
            }
        }
        flush(word_start, chunk.len(), &mut seq);
    }
    seq
}

fn append_word(vocab: &Vocab, word: &str, seq: &mut WordGroupedSequence) {
    let ids = tokenize_word(vocab, word, DEFAULT_MAX_WORD_CHARS);
    let start = seq.token_ids.len();
    seq.token_ids.extend_from_slice(&ids);
    seq.word_spans.push((start, seq.token_ids.len()));
    seq.word_surfaces.push(word.to_string());
}
