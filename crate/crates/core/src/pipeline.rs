//! Corpus-to-training-data pipeline: pack sentences into fixed-length
//! sequences, attach word scores and masking probabilities, sample
//! whole-word masks, apply 80/10/10 corruption, and emit MLM examples.
//!
//! Every random decision is keyed by (rng_seed, doc_id, seq_index,
//! unit_index), so output bytes are identical for any worker count.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lexicon::SeedLexicon;
use crate::maskfn::{neutral_score, MaskFnConfig, ScoreSample};
use crate::normalize::NormalizationPolicy;
use crate::rng::{domain, CounterRng};
use crate::scorer::ScoreModel;
use crate::tokenizer::{tokenize_text, Vocab, WordGroupedSequence};

/// Sentinel in `label_ids` for positions that carry no prediction target.
pub const LABEL_IGNORE: i32 = -100;

pub const DEFAULT_MAX_SEQ_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Word-level masking probabilities from the calibrated function.
    Selective,
    /// Every token independently at the target rate (token masking).
    RandomTm,
    /// Every word independently at the target rate (whole-word masking).
    RandomWwm,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Selective => "selective",
            Strategy::RandomTm => "random_tm",
            Strategy::RandomWwm => "random_wwm",
        }
    }
}

impl clap::ValueEnum for Strategy {
    fn value_variants<'a>() -> &'a [Self] {
        &[Strategy::Selective, Strategy::RandomTm, Strategy::RandomWwm]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

/// ceil(1.5 * target_rate * max_seq_len), at least 1.
pub fn default_max_predictions(max_seq_len: usize, target_rate: f64) -> usize {
    ((1.5 * target_rate * max_seq_len as f64).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub max_seq_len: usize,
    pub max_predictions: usize,
    pub rng_seed: u64,
    pub strategy: Strategy,
}

impl SequenceConfig {
    pub fn new(strategy: Strategy, rng_seed: u64) -> Self {
        SequenceConfig {
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            max_predictions: default_max_predictions(DEFAULT_MAX_SEQ_LEN, 0.15),
            rng_seed,
            strategy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_seq_len < 8 {
            return Err(Error::Config(format!(
                "max_seq_len must be at least 8, got {}",
                self.max_seq_len
            )));
        }
        if self.max_predictions == 0 {
            return Err(Error::Config("max_predictions must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One MLM training example, serialized as a JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub input_ids: Vec<u32>,
    pub label_ids: Vec<i32>,
    pub attention_len: usize,
    pub masked_positions: Vec<usize>,
    pub doc_id: u64,
    pub seq_index: u64,
}

/// A corpus document: consecutive non-blank lines, one sentence per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: u64,
    pub sentences: Vec<String>,
}

/// Split corpus text into documents at blank lines. Empty documents are
/// skipped; ids number the non-empty documents in order.
pub fn parse_corpus(text: &str) -> Vec<Document> {
    let mut docs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(Document {
                    id: docs.len() as u64,
                    sentences: std::mem::take(&mut current),
                });
            }
        } else {
            current.push(line.to_string());
        }
    }
    if !current.is_empty() {
        docs.push(Document {
            id: docs.len() as u64,
            sentences: current,
        });
    }
    docs
}

pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&text))
}

/// A [CLS] ... [SEP] framed sequence tagged with its origin ids.
#[derive(Debug, Clone)]
pub struct PackedSequence {
    pub seq: WordGroupedSequence,
    pub doc_id: u64,
    pub seq_index: u64,
}

/// Greedily pack consecutive sentences of one document into framed
/// sequences of at most `max_seq_len` tokens. A sentence that alone
/// exceeds the content budget is truncated at a word-span boundary; a
/// word that fits no sequence at all is dropped with its sentence tail.
pub fn build_sequences(
    doc: &Document,
    vocab: &Vocab,
    policy: &NormalizationPolicy,
    max_seq_len: usize,
) -> Vec<PackedSequence> {
    let budget = max_seq_len.saturating_sub(2);
    let mut packed: Vec<PackedSequence> = Vec::new();
    let mut acc = WordGroupedSequence::default();

    let flush = |acc: &mut WordGroupedSequence, packed: &mut Vec<PackedSequence>| {
        if acc.token_ids.is_empty() {
            return;
        }
        let content = std::mem::take(acc);
        let mut seq = WordGroupedSequence {
            token_ids: Vec::with_capacity(content.token_ids.len() + 2),
            word_spans: Vec::with_capacity(content.word_spans.len()),
            word_surfaces: content.word_surfaces,
            word_scores: Vec::new(),
        };
        seq.token_ids.push(vocab.specials().cls);
        seq.token_ids.extend_from_slice(&content.token_ids);
        seq.token_ids.push(vocab.specials().sep);
        seq.word_spans
            .extend(content.word_spans.iter().map(|&(s, e)| (s + 1, e + 1)));
        packed.push(PackedSequence {
            seq,
            doc_id: doc.id,
            seq_index: packed.len() as u64,
        });
    };

    for sentence in &doc.sentences {
        let mut sent = tokenize_text(vocab, sentence, policy);
        if sent.token_ids.is_empty() {
            continue;
        }
        if sent.token_ids.len() > budget {
            // Truncate to the last whole word that fits an empty sequence.
            let keep_spans = sent
                .word_spans
                .iter()
                .take_while(|&&(_, end)| end <= budget)
                .count();
            if keep_spans == 0 {
                continue;
            }
            let cut = sent.word_spans[keep_spans - 1].1;
            sent.token_ids.truncate(cut);
            sent.word_spans.truncate(keep_spans);
            sent.word_surfaces.truncate(keep_spans);
            flush(&mut acc, &mut packed);
            acc = sent;
            flush(&mut acc, &mut packed);
            continue;
        }
        if acc.token_ids.len() + sent.token_ids.len() > budget {
            flush(&mut acc, &mut packed);
        }
        let offset = acc.token_ids.len();
        acc.token_ids.extend_from_slice(&sent.token_ids);
        acc.word_spans
            .extend(sent.word_spans.iter().map(|&(s, e)| (s + offset, e + offset)));
        acc.word_surfaces.append(&mut sent.word_surfaces);
    }
    flush(&mut acc, &mut packed);
    packed
}

/// Fill `word_scores` and return the per-word masking probabilities.
/// Special tokens sit outside every span, so they carry no probability.
pub fn score_sequence(
    seq: &mut WordGroupedSequence,
    model: &ScoreModel,
    table: &EmbeddingTable,
    mask_cfg: &MaskFnConfig,
) -> Result<Vec<f64>> {
    seq.word_scores = seq
        .word_surfaces
        .iter()
        .map(|w| model.score_word(w, table))
        .collect();
    seq.word_scores
        .iter()
        .map(|&s| mask_cfg.probability(s))
        .collect()
}

/// A unit chosen for corruption: a whole word span, or a single token
/// under the token-masking strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedUnit {
    /// Stable coordinate for the unit's random streams: span index for
    /// word-level strategies, absolute token position for token masking.
    pub unit_index: u64,
    pub start: usize,
    pub end: usize,
    pub probability: f64,
}

impl SelectedUnit {
    pub fn token_count(&self) -> usize {
        self.end - self.start
    }
}

/// Sample the units to corrupt. Each unit is selected independently with
/// its probability; if the selection exceeds `max_predictions` tokens,
/// units are dropped in increasing probability order (ties: later
/// position first) until it fits; if nothing is selected, the
/// highest-probability unit that fits the cap is forced (ties: earliest).
/// An empty result means no unit fits the cap and the sequence cannot be
/// masked at all.
pub fn select_masks(
    seq: &WordGroupedSequence,
    word_probs: &[f64],
    cfg: &SequenceConfig,
    doc_id: u64,
    seq_index: u64,
) -> SelectionOutcome {
    let mut candidates: Vec<SelectedUnit> = Vec::new();
    match cfg.strategy {
        Strategy::Selective | Strategy::RandomWwm => {
            for (i, &(start, end)) in seq.word_spans.iter().enumerate() {
                candidates.push(SelectedUnit {
                    unit_index: i as u64,
                    start,
                    end,
                    probability: word_probs[i],
                });
            }
        }
        Strategy::RandomTm => {
            for &(start, end) in &seq.word_spans {
                for pos in start..end {
                    candidates.push(SelectedUnit {
                        unit_index: pos as u64,
                        start: pos,
                        end: pos + 1,
                        probability: word_probs.first().copied().unwrap_or(0.0),
                    });
                }
            }
        }
    }

    let mut selected: Vec<SelectedUnit> = candidates
        .iter()
        .filter(|u| {
            let mut rng = CounterRng::new(
                cfg.rng_seed,
                domain::SELECT,
                &[doc_id, seq_index, u.unit_index],
            );
            rng.next_f64() < u.probability
        })
        .cloned()
        .collect();

    let mut outcome = SelectionOutcome::default();

    let mut total: usize = selected.iter().map(SelectedUnit::token_count).sum();
    if total > cfg.max_predictions {
        // Drop order: lowest probability first, later position first on
        // ties.
        let mut drop_order: Vec<usize> = (0..selected.len()).collect();
        drop_order.sort_by(|&a, &b| {
            selected[a]
                .probability
                .partial_cmp(&selected[b].probability)
                .expect("probabilities are finite")
                .then(selected[b].start.cmp(&selected[a].start))
        });
        let mut dropped = vec![false; selected.len()];
        for &i in &drop_order {
            if total <= cfg.max_predictions {
                break;
            }
            dropped[i] = true;
            total -= selected[i].token_count();
            outcome.cap_dropped += 1;
        }
        let mut kept = Vec::with_capacity(selected.len());
        for (i, unit) in selected.into_iter().enumerate() {
            if !dropped[i] {
                kept.push(unit);
            }
        }
        selected = kept;
    }

    if selected.is_empty() {
        let forced = candidates
            .iter()
            .filter(|u| u.token_count() <= cfg.max_predictions)
            .fold(None::<&SelectedUnit>, |best, u| match best {
                None => Some(u),
                Some(b) if u.probability > b.probability => Some(u),
                Some(b) if u.probability == b.probability && u.start < b.start => Some(u),
                Some(b) => Some(b),
            });
        if let Some(unit) = forced {
            selected.push(unit.clone());
            outcome.forced = true;
        }
    }

    selected.sort_by_key(|u| u.start);
    outcome.units = selected;
    outcome
}

#[derive(Debug, Clone, Default)]
pub struct SelectionOutcome {
    pub units: Vec<SelectedUnit>,
    pub forced: bool,
    pub cap_dropped: u64,
}

/// Per-fate unit counts from one corruption pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FateTally {
    pub mask_units: u64,
    pub replace_units: u64,
    pub keep_units: u64,
}

/// Apply 80/10/10 corruption: one fate draw per unit (all its tokens share
/// it), independent replacement draws per token from the non-special
/// vocabulary, labels holding the original ids at every selected position.
pub fn corrupt(
    seq: &WordGroupedSequence,
    units: &[SelectedUnit],
    vocab: &Vocab,
    cfg: &SequenceConfig,
    doc_id: u64,
    seq_index: u64,
) -> (MaskedExample, FateTally) {
    let attention_len = seq.token_ids.len();
    debug_assert!(attention_len <= cfg.max_seq_len);
    let mut input_ids = seq.token_ids.clone();
    let mut label_ids = vec![LABEL_IGNORE; cfg.max_seq_len];
    let mut masked_positions = Vec::new();
    let mut tally = FateTally::default();
    let pool = vocab.replacement_pool();

    for unit in units {
        let fate = CounterRng::new(
            cfg.rng_seed,
            domain::FATE,
            &[doc_id, seq_index, unit.unit_index],
        )
        .next_f64();
        let mut replace_rng = CounterRng::new(
            cfg.rng_seed,
            domain::REPLACE,
            &[doc_id, seq_index, unit.unit_index],
        );
        if fate < 0.8 {
            tally.mask_units += 1;
        } else if fate < 0.9 {
            tally.replace_units += 1;
        } else {
            tally.keep_units += 1;
        }
        for pos in unit.start..unit.end {
            label_ids[pos] = seq.token_ids[pos] as i32;
            masked_positions.push(pos);
            if fate < 0.8 {
                input_ids[pos] = vocab.specials().mask;
            } else if fate < 0.9 {
                input_ids[pos] = pool[replace_rng.next_below(pool.len() as u64) as usize];
            }
        }
    }

    input_ids.resize(cfg.max_seq_len, vocab.specials().pad);
    masked_positions.sort_unstable();

    (
        MaskedExample {
            input_ids,
            label_ids,
            attention_len,
            masked_positions,
            doc_id,
            seq_index,
        },
        tally,
    )
}

/// Reservoir-sample per-token word scores from the corpus: each content
/// token contributes its word's score, so frequent words weigh more. With
/// fewer tokens than `cap` the sample is the exact token population.
pub fn collect_score_sample(
    documents: &[Document],
    vocab: &Vocab,
    policy: &NormalizationPolicy,
    model: &ScoreModel,
    table: &EmbeddingTable,
    cap: usize,
    rng_seed: u64,
) -> Result<ScoreSample> {
    let mut reservoir: Vec<f64> = Vec::with_capacity(cap.min(1 << 20));
    let mut rng = CounterRng::new(rng_seed, domain::RESERVOIR, &[]);
    let mut seen: u64 = 0;
    for doc in documents {
        for sentence in &doc.sentences {
            let seq = tokenize_text(vocab, sentence, policy);
            for (i, &(start, end)) in seq.word_spans.iter().enumerate() {
                let score = model.score_word(&seq.word_surfaces[i], table);
                for _ in start..end {
                    if reservoir.len() < cap {
                        reservoir.push(score);
                    } else {
                        let j = rng.next_below(seen + 1);
                        if (j as usize) < cap {
                            reservoir[j as usize] = score;
                        }
                    }
                    seen += 1;
                }
            }
        }
    }
    ScoreSample::from_scores(reservoir)
}

/// Aggregated statistics for one run, written next to the JSONL output.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub strategy: Strategy,
    pub mask_config: MaskFnConfig,
    pub rng_seed: u64,
    pub max_seq_len: usize,
    pub max_predictions: usize,
    pub documents: u64,
    pub sequences: u64,
    pub examples: u64,
    pub sequences_dropped: u64,
    pub content_tokens: u64,
    pub selected_positions: u64,
    pub selected_units: u64,
    pub mask_fate_units: u64,
    pub replace_fate_units: u64,
    pub keep_fate_units: u64,
    pub forced_selections: u64,
    pub cap_dropped_units: u64,
    pub mean_prob_all_words: f64,
    /// Mean masking probability over seed-lexicon word occurrences and the
    /// enrichment ratio against all words; absent without a lexicon.
    pub mean_prob_seed_words: Option<f64>,
    pub enrichment_ratio: Option<f64>,
}

impl RunReport {
    /// Realized fraction of content tokens selected for prediction.
    pub fn realized_mask_rate(&self) -> f64 {
        if self.content_tokens == 0 {
            0.0
        } else {
            self.selected_positions as f64 / self.content_tokens as f64
        }
    }

    /// Stable key=value rendering for the run-report file.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("strategy", self.strategy.name().to_string());
        push("mask_family", self.mask_config.family.name().to_string());
        push("sidedness", self.mask_config.sidedness.name().to_string());
        push("alpha", format!("{:.6}", self.mask_config.alpha));
        push("beta", format!("{:.6}", self.mask_config.beta));
        push("gamma", format!("{:.6}", self.mask_config.gamma));
        push("target_rate", format!("{:.6}", self.mask_config.target_rate));
        push("rng_seed", self.rng_seed.to_string());
        push("max_seq_len", self.max_seq_len.to_string());
        push("max_predictions", self.max_predictions.to_string());
        push("documents", self.documents.to_string());
        push("sequences", self.sequences.to_string());
        push("examples", self.examples.to_string());
        push("sequences_dropped", self.sequences_dropped.to_string());
        push("content_tokens", self.content_tokens.to_string());
        push("selected_positions", self.selected_positions.to_string());
        push("realized_mask_rate", format!("{:.6}", self.realized_mask_rate()));
        push("selected_units", self.selected_units.to_string());
        push("mask_fate_units", self.mask_fate_units.to_string());
        push("replace_fate_units", self.replace_fate_units.to_string());
        push("keep_fate_units", self.keep_fate_units.to_string());
        push("forced_selections", self.forced_selections.to_string());
        push("cap_dropped_units", self.cap_dropped_units.to_string());
        push("mean_prob_all_words", format!("{:.6}", self.mean_prob_all_words));
        if let Some(seed_mean) = self.mean_prob_seed_words {
            push("mean_prob_seed_words", format!("{seed_mean:.6}"));
        }
        if let Some(ratio) = self.enrichment_ratio {
            push("enrichment_ratio", format!("{ratio:.6}"));
        }
        out
    }
}

/// Everything a pipeline run reads. All references are immutable and
/// shared across workers. `scorer` is required for the selective strategy
/// only; the random baselines assign every unit the same probability and
/// never look at a word score.
pub struct PipelineInputs<'a> {
    pub documents: &'a [Document],
    pub vocab: &'a Vocab,
    pub scorer: Option<(&'a ScoreModel, &'a EmbeddingTable)>,
    pub mask_cfg: &'a MaskFnConfig,
    pub seq_cfg: &'a SequenceConfig,
    pub policy: &'a NormalizationPolicy,
    pub lexicon: Option<&'a SeedLexicon>,
    pub workers: usize,
}

#[derive(Debug, Clone, Default)]
struct DocTally {
    sequences: u64,
    examples: u64,
    dropped: u64,
    content_tokens: u64,
    selected_positions: u64,
    selected_units: u64,
    mask_units: u64,
    replace_units: u64,
    keep_units: u64,
    forced: u64,
    cap_dropped: u64,
    prob_sum_all: f64,
    prob_count_all: u64,
    prob_sum_seed: f64,
    prob_count_seed: u64,
}

struct DocResult {
    lines: String,
    tally: DocTally,
}

fn process_document(
    doc: &Document,
    inputs: &PipelineInputs<'_>,
    effective_cfg: &MaskFnConfig,
) -> Result<DocResult> {
    let mut tally = DocTally::default();
    let mut lines = String::new();
    for mut packed in build_sequences(doc, inputs.vocab, inputs.policy, inputs.seq_cfg.max_seq_len)
    {
        tally.sequences += 1;
        let probs = match (inputs.seq_cfg.strategy, inputs.scorer) {
            (Strategy::Selective, Some((model, table))) => {
                score_sequence(&mut packed.seq, model, table, effective_cfg)?
            }
            (Strategy::Selective, None) => {
                unreachable!("run_pipeline rejects selective runs without a scorer")
            }
            // Baselines: one flat probability per unit, no scores needed.
            _ => {
                let p = effective_cfg.probability(neutral_score(effective_cfg.sidedness))?;
                vec![p; packed.seq.word_spans.len()]
            }
        };
        for (i, &p) in probs.iter().enumerate() {
            tally.prob_sum_all += p;
            tally.prob_count_all += 1;
            if let Some(lex) = inputs.lexicon {
                if lex.class_of(&packed.seq.word_surfaces[i]).is_some() {
                    tally.prob_sum_seed += p;
                    tally.prob_count_seed += 1;
                }
            }
        }
        tally.content_tokens += packed
            .seq
            .word_spans
            .iter()
            .map(|&(s, e)| (e - s) as u64)
            .sum::<u64>();

        let outcome = select_masks(
            &packed.seq,
            &probs,
            inputs.seq_cfg,
            packed.doc_id,
            packed.seq_index,
        );
        tally.cap_dropped += outcome.cap_dropped;
        if outcome.forced {
            tally.forced += 1;
        }
        if outcome.units.is_empty() {
            tally.dropped += 1;
            continue;
        }
        let (example, fates) = corrupt(
            &packed.seq,
            &outcome.units,
            inputs.vocab,
            inputs.seq_cfg,
            packed.doc_id,
            packed.seq_index,
        );
        tally.selected_units += outcome.units.len() as u64;
        tally.selected_positions += example.masked_positions.len() as u64;
        tally.mask_units += fates.mask_units;
        tally.replace_units += fates.replace_units;
        tally.keep_units += fates.keep_units;
        tally.examples += 1;
        lines.push_str(&serde_json::to_string(&example).expect("example serializes"));
        lines.push('\n');
    }
    Ok(DocResult { lines, tally })
}

/// Run the pipeline over all documents, writing JSONL to `out`. Documents
/// are sharded across `workers` threads; results merge in document order,
/// so the output and report are identical for any worker count.
pub fn run_pipeline(inputs: &PipelineInputs<'_>, out: &mut dyn std::io::Write) -> Result<RunReport> {
    inputs.seq_cfg.validate()?;
    inputs.mask_cfg.validate()?;
    if inputs.seq_cfg.strategy == Strategy::Selective && inputs.scorer.is_none() {
        return Err(Error::Config(
            "selective masking requires a trained score model and embeddings".to_string(),
        ));
    }
    let effective_cfg = match inputs.seq_cfg.strategy {
        Strategy::Selective => *inputs.mask_cfg,
        Strategy::RandomTm | Strategy::RandomWwm => {
            MaskFnConfig::random_baseline(inputs.mask_cfg.target_rate)
        }
    };

    let workers = inputs.workers.max(1).min(inputs.documents.len().max(1));
    let chunk_size = inputs.documents.len().div_ceil(workers.max(1)).max(1);
    let chunks: Vec<&[Document]> = inputs.documents.chunks(chunk_size).collect();

    let results: Vec<Result<Vec<DocResult>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|doc| process_document(doc, inputs, &effective_cfg))
                        .collect::<Result<Vec<DocResult>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pipeline worker panicked"))
            .collect()
    });

    let mut merged = DocTally::default();
    let mut buffer = String::new();
    for chunk_result in results {
        for doc_result in chunk_result? {
            buffer.push_str(&doc_result.lines);
            let t = doc_result.tally;
            merged.sequences += t.sequences;
            merged.examples += t.examples;
            merged.dropped += t.dropped;
            merged.content_tokens += t.content_tokens;
            merged.selected_positions += t.selected_positions;
            merged.selected_units += t.selected_units;
            merged.mask_units += t.mask_units;
            merged.replace_units += t.replace_units;
            merged.keep_units += t.keep_units;
            merged.forced += t.forced;
            merged.cap_dropped += t.cap_dropped;
            merged.prob_sum_all += t.prob_sum_all;
            merged.prob_count_all += t.prob_count_all;
            merged.prob_sum_seed += t.prob_sum_seed;
            merged.prob_count_seed += t.prob_count_seed;
        }
    }
    out.write_all(buffer.as_bytes())
        .map_err(|e| Error::io("<output>", e))?;

    let mean_all = if merged.prob_count_all == 0 {
        0.0
    } else {
        merged.prob_sum_all / merged.prob_count_all as f64
    };
    let mean_seed = (merged.prob_count_seed > 0)
        .then(|| merged.prob_sum_seed / merged.prob_count_seed as f64);
    let enrichment = match (inputs.lexicon, mean_seed) {
        (Some(_), Some(seed_mean)) if mean_all > 0.0 => Some(seed_mean / mean_all),
        _ => None,
    };

    Ok(RunReport {
        strategy: inputs.seq_cfg.strategy,
        mask_config: effective_cfg,
        rng_seed: inputs.seq_cfg.rng_seed,
        max_seq_len: inputs.seq_cfg.max_seq_len,
        max_predictions: inputs.seq_cfg.max_predictions,
        documents: inputs.documents.len() as u64,
        sequences: merged.sequences,
        examples: merged.examples,
        sequences_dropped: merged.dropped,
        content_tokens: merged.content_tokens,
        selected_positions: merged.selected_positions,
        selected_units: merged.selected_units,
        mask_fate_units: merged.mask_units,
        replace_fate_units: merged.replace_units,
        keep_fate_units: merged.keep_units,
        forced_selections: merged.forced,
        cap_dropped_units: merged.cap_dropped,
        mean_prob_all_words: mean_all,
        mean_prob_seed_words: mean_seed,
        enrichment_ratio: enrichment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskfn::{MaskFamily, Sidedness};
    use crate::tokenizer::{CLS, MASK, PAD, SEP, UNK};

    fn test_vocab() -> Vocab {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for c in 'a'..='z' {
            tokens.push(c.to_string());
        }
        for c in 'a'..='z' {
            tokens.push(format!("##{c}"));
        }
        tokens.extend(
            ["good", "movie", "virus", "the", "un", "##aff", "##able", "!", "."]
                .map(String::from),
        );
        Vocab::from_tokens(tokens).unwrap()
    }

    fn linear_cfg() -> MaskFnConfig {
        MaskFnConfig {
            family: MaskFamily::Linear,
            sidedness: Sidedness::TwoSided,
            alpha: 5.0,
            beta: 5.0,
            gamma: 0.0,
            target_rate: 0.15,
        }
    }

    fn neutral_model(dim: usize) -> ScoreModel {
        // Unit weights along the first axis; OOV words score 5.
        let (lex, table) = tiny_training(dim);
        crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap()
    }

    fn tiny_training(dim: usize) -> (SeedLexicon, EmbeddingTable) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.vec");
        let mut text = format!("2 {dim}\n");
        text.push_str(&format!("the {}\n", vec!["-1"; dim].join(" ")));
        text.push_str(&format!("virus {}\n", vec!["1"; dim].join(" ")));
        std::fs::write(&path, &text).unwrap();
        let table = EmbeddingTable::load(&path, &NormalizationPolicy::default()).unwrap();
        let lex = SeedLexicon::new(["the"], ["virus"], &NormalizationPolicy::default()).unwrap();
        (lex, table)
    }

    #[test]
    fn parses_documents_at_blank_lines() {
        let docs = parse_corpus("a b\nc d\n\n\n e f\n\n");
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, 0);
        assert_eq!(docs[0].sentences, vec!["a b", "c d"]);
        assert_eq!(docs[1].id, 1);
        assert_eq!(docs[1].sentences, vec![" e f"]);
        assert!(parse_corpus("").is_empty());
        assert!(parse_corpus("\n\n \n").is_empty());
    }

    #[test]
    fn packs_two_short_sentences_into_one_sequence() {
        let vocab = test_vocab();
        let doc = Document {
            id: 0,
            sentences: vec![
                "good movie good movie good".to_string(),
                "the virus the virus the".to_string(),
            ],
        };
        let packed = build_sequences(&doc, &vocab, &NormalizationPolicy::default(), 64);
        assert_eq!(packed.len(), 1);
        let seq = &packed[0].seq;
        assert_eq!(seq.token_ids.len(), 12);
        assert_eq!(seq.token_ids[0], vocab.specials().cls);
        assert_eq!(*seq.token_ids.last().unwrap(), vocab.specials().sep);
        assert_eq!(seq.word_count(), 10);
        assert!(seq.spans_partition_nonspecial(&vocab));
    }

    #[test]
    fn truncates_overlong_sentence_at_word_boundary() {
        let vocab = test_vocab();
        let long: String = vec!["unaffable"; 100].join(" "); // 300 tokens
        let doc = Document {
            id: 0,
            sentences: vec![long],
        };
        let packed = build_sequences(&doc, &vocab, &NormalizationPolicy::default(), 128);
        assert_eq!(packed.len(), 1);
        let seq = &packed[0].seq;
        assert!(seq.token_ids.len() <= 128);
        // 126-token budget fits 42 three-piece words exactly.
        assert_eq!(seq.word_count(), 42);
        assert_eq!(seq.token_ids.len(), 128);
        assert!(seq.spans_partition_nonspecial(&vocab));
    }

    #[test]
    fn sequences_respect_length_and_framing_over_varied_corpora() {
        let vocab = test_vocab();
        let policy = NormalizationPolicy::default();
        let mut rng = CounterRng::new(77, domain::SHUFFLE, &[9]);
        let wordlist = ["good", "movie", "virus", "the", "unaffable", "zzz", "!"];
        for max_seq_len in [8, 16, 33, 128] {
            for _ in 0..20 {
                let n_sents = 1 + rng.next_below(6) as usize;
                let sentences: Vec<String> = (0..n_sents)
                    .map(|_| {
                        let n_words = 1 + rng.next_below(40) as usize;
                        (0..n_words)
                            .map(|_| wordlist[rng.next_below(7) as usize])
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect();
                let doc = Document { id: 0, sentences };
                for packed in build_sequences(&doc, &vocab, &policy, max_seq_len) {
                    let seq = &packed.seq;
                    assert!(seq.token_ids.len() <= max_seq_len);
                    assert_eq!(seq.token_ids[0], vocab.specials().cls);
                    assert_eq!(*seq.token_ids.last().unwrap(), vocab.specials().sep);
                    assert!(seq.spans_partition_nonspecial(&vocab));
                    assert!(seq.word_count() > 0);
                }
            }
        }
    }

    #[test]
    fn all_oov_words_get_zero_probability() {
        let vocab = test_vocab();
        let model = neutral_model(2);
        let (_, table) = tiny_training(2);
        let mut seq = tokenize_text(&vocab, "good movie !", &NormalizationPolicy::default());
        let probs = score_sequence(&mut seq, &model, &table, &linear_cfg()).unwrap();
        assert_eq!(seq.word_scores, vec![5.0, 5.0, 5.0]);
        assert_eq!(probs, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn seed_word_probability_dominates_oov() {
        let vocab = test_vocab();
        let (lex, table) = tiny_training(2);
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 100, 1).unwrap();
        let mut seq = tokenize_text(&vocab, "virus movie", &NormalizationPolicy::default());
        let probs = score_sequence(&mut seq, &model, &table, &linear_cfg()).unwrap();
        assert!(probs[0] >= probs[1], "seed {} oov {}", probs[0], probs[1]);
        assert!(probs[0] > 0.5);
    }

    fn packed_with_probs(
        vocab: &Vocab,
        text: &str,
        max_seq_len: usize,
    ) -> (WordGroupedSequence, Vec<f64>) {
        let doc = Document {
            id: 0,
            sentences: vec![text.to_string()],
        };
        let packed = build_sequences(&doc, vocab, &NormalizationPolicy::default(), max_seq_len);
        assert_eq!(packed.len(), 1);
        let seq = packed.into_iter().next().unwrap().seq;
        let probs = vec![0.0; seq.word_count()];
        (seq, probs)
    }

    #[test]
    fn zero_probabilities_force_exactly_one_unit() {
        let vocab = test_vocab();
        let (seq, probs) = packed_with_probs(&vocab, "good movie virus", 32);
        let cfg = SequenceConfig::new(Strategy::Selective, 5);
        let outcome = select_masks(&seq, &probs, &cfg, 0, 0);
        assert!(outcome.forced);
        assert_eq!(outcome.units.len(), 1);
        // Ties on probability 0 resolve to the earliest span.
        assert_eq!(outcome.units[0].start, 1);
    }

    #[test]
    fn certain_probabilities_select_everything_under_cap() {
        let vocab = test_vocab();
        let (seq, _) = packed_with_probs(&vocab, "good movie virus", 32);
        let probs = vec![1.0; seq.word_count()];
        let cfg = SequenceConfig {
            max_predictions: 20,
            ..SequenceConfig::new(Strategy::Selective, 5)
        };
        let outcome = select_masks(&seq, &probs, &cfg, 0, 0);
        assert_eq!(outcome.units.len(), 3);
        assert!(!outcome.forced);
        assert_eq!(outcome.cap_dropped, 0);
    }

    /// Reference drop rule: recompute the kept set by brute force.
    fn reference_cap(units: &[SelectedUnit], cap: usize) -> Vec<SelectedUnit> {
        let mut kept: Vec<SelectedUnit> = units.to_vec();
        loop {
            let total: usize = kept.iter().map(SelectedUnit::token_count).sum();
            if total <= cap {
                break;
            }
            // Drop the lowest-probability unit, preferring the latest
            // position on ties.
            let worst = kept
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.probability
                        .partial_cmp(&b.probability)
                        .unwrap()
                        .then(b.start.cmp(&a.start))
                })
                .map(|(i, _)| i)
                .unwrap();
            kept.remove(worst);
        }
        kept
    }

    #[test]
    fn cap_trims_selection_in_documented_order() {
        let vocab = test_vocab();
        let words: String = vec!["good"; 64].join(" ");
        let (seq, _) = packed_with_probs(&vocab, &words, 128);
        assert_eq!(seq.word_count(), 64);
        let probs = vec![1.0; 64];
        let cfg = SequenceConfig {
            max_predictions: 20,
            ..SequenceConfig::new(Strategy::Selective, 5)
        };
        let outcome = select_masks(&seq, &probs, &cfg, 3, 1);

        let all_units: Vec<SelectedUnit> = seq
            .word_spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| SelectedUnit {
                unit_index: i as u64,
                start: s,
                end: e,
                probability: 1.0,
            })
            .collect();
        let expected = reference_cap(&all_units, 20);
        assert_eq!(outcome.units, expected);
        let total: usize = outcome.units.iter().map(SelectedUnit::token_count).sum();
        assert_eq!(total, 20);
        assert_eq!(outcome.cap_dropped, 44);
    }

    #[test]
    fn mixed_probability_cap_matches_reference() {
        let vocab = test_vocab();
        let words: String = ["unaffable", "good", "virus", "movie", "unaffable", "the"].join(" ");
        let (seq, _) = packed_with_probs(&vocab, &words, 64);
        let probs = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        for cap in 1..=10 {
            let cfg = SequenceConfig {
                max_predictions: cap,
                ..SequenceConfig::new(Strategy::Selective, 5)
            };
            let outcome = select_masks(&seq, &probs, &cfg, 0, 0);
            let all_units: Vec<SelectedUnit> = seq
                .word_spans
                .iter()
                .enumerate()
                .map(|(i, &(s, e))| SelectedUnit {
                    unit_index: i as u64,
                    start: s,
                    end: e,
                    probability: 1.0,
                })
                .collect();
            let mut expected = reference_cap(&all_units, cap);
            expected.sort_by_key(|u| u.start);
            if expected.is_empty() {
                // Nothing survives the cap; the force rule picks the best
                // unit that fits.
                assert_eq!(outcome.units.len().min(1), outcome.units.len());
                if let Some(u) = outcome.units.first() {
                    assert!(u.token_count() <= cap);
                }
            } else {
                assert_eq!(outcome.units, expected, "cap {cap}");
            }
        }
    }

    #[test]
    fn token_strategy_selects_single_positions() {
        let vocab = test_vocab();
        let (seq, _) = packed_with_probs(&vocab, "unaffable virus unaffable", 32);
        let probs = vec![1.0; seq.word_count()];
        let cfg = SequenceConfig {
            max_predictions: 29,
            ..SequenceConfig::new(Strategy::RandomTm, 5)
        };
        let outcome = select_masks(&seq, &probs, &cfg, 0, 0);
        assert_eq!(outcome.units.len(), 7);
        assert!(outcome.units.iter().all(|u| u.token_count() == 1));
    }

    #[test]
    fn corruption_bookkeeping_is_exact() {
        let vocab = test_vocab();
        let cfg = SequenceConfig::new(Strategy::Selective, 11);
        let mut mask_seen = false;
        let mut keep_seen = false;
        let mut replace_seen = false;
        for doc_id in 0..200 {
            let (seq, _) = packed_with_probs(&vocab, "unaffable virus good movie the", 32);
            let probs = vec![1.0; seq.word_count()];
            let outcome = select_masks(&seq, &probs, &cfg, doc_id, 0);
            let (example, tally) = corrupt(&seq, &outcome.units, &vocab, &cfg, doc_id, 0);

            assert_eq!(example.input_ids.len(), cfg.max_seq_len);
            assert_eq!(example.label_ids.len(), cfg.max_seq_len);
            assert_eq!(example.attention_len, seq.token_ids.len());
            let expected_positions: Vec<usize> = outcome
                .units
                .iter()
                .flat_map(|u| u.start..u.end)
                .collect();
            assert_eq!(example.masked_positions, expected_positions);
            for pos in 0..cfg.max_seq_len {
                if example.masked_positions.contains(&pos) {
                    assert_eq!(example.label_ids[pos], seq.token_ids[pos] as i32);
                } else {
                    assert_eq!(example.label_ids[pos], LABEL_IGNORE);
                    if pos < example.attention_len {
                        assert_eq!(example.input_ids[pos], seq.token_ids[pos]);
                    } else {
                        assert_eq!(example.input_ids[pos], vocab.specials().pad);
                    }
                }
            }
            // Unit atomicity of the fate draw: within one unit, tokens are
            // either all [MASK] or none are.
            for unit in &outcome.units {
                let masked: Vec<bool> = (unit.start..unit.end)
                    .map(|p| example.input_ids[p] == vocab.specials().mask)
                    .collect();
                assert!(masked.iter().all(|&m| m) || masked.iter().all(|&m| !m));
                let unchanged = (unit.start..unit.end)
                    .all(|p| example.input_ids[p] == seq.token_ids[p]);
                if masked[0] {
                    mask_seen = true;
                } else if unchanged {
                    keep_seen = true;
                } else {
                    replace_seen = true;
                    for p in unit.start..unit.end {
                        if example.input_ids[p] != seq.token_ids[p] {
                            assert!(!vocab.is_special(example.input_ids[p]));
                        }
                    }
                }
            }
            let total = tally.mask_units + tally.replace_units + tally.keep_units;
            assert_eq!(total, outcome.units.len() as u64);
        }
        assert!(mask_seen && keep_seen && replace_seen);
    }

    #[test]
    fn fate_frequencies_are_roughly_eighty_ten_ten() {
        let vocab = test_vocab();
        let cfg = SequenceConfig::new(Strategy::Selective, 13);
        let (seq, _) = packed_with_probs(&vocab, "good movie virus the unaffable", 32);
        let probs = vec![1.0; seq.word_count()];
        let mut totals = FateTally::default();
        for doc_id in 0..2000 {
            let outcome = select_masks(&seq, &probs, &cfg, doc_id, 0);
            let (_, tally) = corrupt(&seq, &outcome.units, &vocab, &cfg, doc_id, 0);
            totals.mask_units += tally.mask_units;
            totals.replace_units += tally.replace_units;
            totals.keep_units += tally.keep_units;
        }
        let n = (totals.mask_units + totals.replace_units + totals.keep_units) as f64;
        assert!((totals.mask_units as f64 / n - 0.8).abs() < 0.02);
        assert!((totals.replace_units as f64 / n - 0.1).abs() < 0.02);
        assert!((totals.keep_units as f64 / n - 0.1).abs() < 0.02);
    }

    #[allow(clippy::too_many_arguments)]
    fn full_inputs<'a>(
        documents: &'a [Document],
        vocab: &'a Vocab,
        model: &'a ScoreModel,
        table: &'a EmbeddingTable,
        mask_cfg: &'a MaskFnConfig,
        seq_cfg: &'a SequenceConfig,
        policy: &'a NormalizationPolicy,
        lexicon: Option<&'a SeedLexicon>,
        workers: usize,
    ) -> PipelineInputs<'a> {
        PipelineInputs {
            documents,
            vocab,
            scorer: Some((model, table)),
            mask_cfg,
            seq_cfg,
            policy,
            lexicon,
            workers,
        }
    }

    #[test]
    fn empty_corpus_produces_empty_output_and_zero_report() {
        let vocab = test_vocab();
        let (lex, table) = tiny_training(2);
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap();
        let cfg = linear_cfg();
        let seq_cfg = SequenceConfig::new(Strategy::Selective, 1);
        let policy = NormalizationPolicy::default();
        let docs: Vec<Document> = Vec::new();
        let inputs = full_inputs(&docs, &vocab, &model, &table, &cfg, &seq_cfg, &policy, None, 2);
        let mut out = Vec::new();
        let report = run_pipeline(&inputs, &mut out).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.examples, 0);
        assert_eq!(report.content_tokens, 0);
        assert_eq!(report.realized_mask_rate(), 0.0);
    }

    #[test]
    fn reruns_and_worker_counts_yield_identical_bytes() {
        let vocab = test_vocab();
        let (lex, table) = tiny_training(2);
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap();
        let cfg = MaskFnConfig::random_baseline(0.3);
        let seq_cfg = SequenceConfig::new(Strategy::RandomWwm, 99);
        let policy = NormalizationPolicy::default();
        let text: String = (0..40)
            .map(|i| {
                let sent = "good movie virus the unaffable movie good";
                if i % 5 == 4 {
                    format!("{sent}\n\n")
                } else {
                    format!("{sent}\n")
                }
            })
            .collect();
        let docs = parse_corpus(&text);
        assert!(docs.len() >= 8);

        let mut outputs = Vec::new();
        for workers in [1, 3, 1] {
            let inputs = full_inputs(
                &docs, &vocab, &model, &table, &cfg, &seq_cfg, &policy, None, workers,
            );
            let mut out = Vec::new();
            let report = run_pipeline(&inputs, &mut out).unwrap();
            assert!(report.examples > 0);
            outputs.push((out, report.to_key_value()));
        }
        assert_eq!(outputs[0].0, outputs[1].0, "1 vs 3 workers");
        assert_eq!(outputs[0].0, outputs[2].0, "rerun");
        assert_eq!(outputs[0].1, outputs[1].1, "report 1 vs 3 workers");
    }

    #[test]
    fn random_baselines_run_without_a_scorer_selective_does_not() {
        let vocab = test_vocab();
        let (lex, table) = tiny_training(2);
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap();
        let cfg = MaskFnConfig::random_baseline(0.3);
        let seq_cfg = SequenceConfig::new(Strategy::RandomWwm, 99);
        let policy = NormalizationPolicy::default();
        let docs = parse_corpus("good movie virus the\nmovie good virus\n");

        let mut scorerless = Vec::new();
        let inputs = PipelineInputs {
            documents: &docs,
            vocab: &vocab,
            scorer: None,
            mask_cfg: &cfg,
            seq_cfg: &seq_cfg,
            policy: &policy,
            lexicon: None,
            workers: 1,
        };
        run_pipeline(&inputs, &mut scorerless).unwrap();

        // A supplied scorer is ignored by the baselines: identical bytes.
        let mut with_scorer = Vec::new();
        let inputs = full_inputs(&docs, &vocab, &model, &table, &cfg, &seq_cfg, &policy, None, 1);
        run_pipeline(&inputs, &mut with_scorer).unwrap();
        assert_eq!(scorerless, with_scorer);

        let selective = SequenceConfig::new(Strategy::Selective, 99);
        let inputs = PipelineInputs {
            documents: &docs,
            vocab: &vocab,
            scorer: None,
            mask_cfg: &cfg,
            seq_cfg: &selective,
            policy: &policy,
            lexicon: None,
            workers: 1,
        };
        let err = run_pipeline(&inputs, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
    }

    #[test]
    fn report_counts_are_consistent() {
        let vocab = test_vocab();
        let (lex, table) = tiny_training(2);
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap();
        let cfg = linear_cfg();
        let seq_cfg = SequenceConfig::new(Strategy::Selective, 7);
        let policy = NormalizationPolicy::default();
        let docs = parse_corpus("virus the virus movie\nthe virus good\n\ngood movie virus the\n");
        let inputs = full_inputs(
            &docs,
            &vocab,
            &model,
            &table,
            &cfg,
            &seq_cfg,
            &policy,
            Some(&lex),
            1,
        );
        let mut out = Vec::new();
        let report = run_pipeline(&inputs, &mut out).unwrap();
        assert_eq!(report.documents, 2);
        assert_eq!(
            report.selected_units,
            report.mask_fate_units + report.replace_fate_units + report.keep_fate_units
        );
        assert!(report.enrichment_ratio.is_some());
        assert!(report.enrichment_ratio.unwrap() > 1.0);

        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len() as u64, report.examples);
        for line in lines {
            let example: MaskedExample = serde_json::from_str(line).unwrap();
            assert!(!example.masked_positions.is_empty());
            assert!(example.masked_positions.len() <= seq_cfg.max_predictions);
        }
        let rendered = report.to_key_value();
        assert!(rendered.contains("strategy=selective"));
        assert!(rendered.contains("enrichment_ratio="));
    }

    #[test]
    fn reservoir_sample_is_exact_below_cap_and_capped_above() {
        let vocab = test_vocab();
        let (lex, table) = tiny_training(2);
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap();
        let policy = NormalizationPolicy::default();
        let docs = parse_corpus("virus the good\nmovie virus\n");
        let sample =
            collect_score_sample(&docs, &vocab, &policy, &model, &table, 1000, 3).unwrap();
        assert_eq!(sample.len(), 5);

        let capped = collect_score_sample(&docs, &vocab, &policy, &model, &table, 3, 3).unwrap();
        assert_eq!(capped.len(), 3);
        let capped_again =
            collect_score_sample(&docs, &vocab, &policy, &model, &table, 3, 3).unwrap();
        let a: Vec<(f64, f64)> = capped.iter().collect();
        let b: Vec<(f64, f64)> = capped_again.iter().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sequence_config_validation() {
        let mut cfg = SequenceConfig::new(Strategy::Selective, 0);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.max_predictions, 29);
        cfg.max_seq_len = 4;
        assert!(cfg.validate().is_err());
        cfg.max_seq_len = 128;
        cfg.max_predictions = 0;
        assert!(cfg.validate().is_err());
    }
}
