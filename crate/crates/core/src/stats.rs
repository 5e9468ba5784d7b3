//! Post-hoc verification of emitted JSONL training data. Reads examples
//! back, restores the original tokens from the labels, reconstructs word
//! boundaries from the continuation prefix, and reports realized mask
//! rate, whole-word violations, corruption fates, and seed-word
//! enrichment.
//!
//! Fates are re-derived per masked position: `[MASK]` input means a mask
//! fate, input equal to the original means kept, anything else means
//! replaced. A replacement draw can coincidentally pick the original
//! token, so a small fraction of replace fates is counted as kept; the
//! bias is bounded by one part in the replacement pool size.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lexicon::SeedLexicon;
use crate::pipeline::{MaskedExample, LABEL_IGNORE};
use crate::tokenizer::{Vocab, CONTINUATION_PREFIX};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsReport {
    pub examples: u64,
    pub content_tokens: u64,
    pub masked_positions: u64,
    /// Reconstructed word occurrences and how many were mask targets.
    pub words: u64,
    pub masked_words: u64,
    /// Words with some but not all positions selected.
    pub whole_word_violations: u64,
    /// Masked positions pointing at structural specials or padding, plus
    /// label/mask mismatches. Always 0 for pipeline output.
    pub structural_violations: u64,
    /// Maximal runs of selected positions within one word, by fate.
    pub masked_units: u64,
    pub mask_fate_units: u64,
    pub replace_fate_units: u64,
    pub keep_fate_units: u64,
    /// Per-position fates over all selected positions.
    pub mask_fate_positions: u64,
    pub replace_fate_positions: u64,
    pub keep_fate_positions: u64,
    /// Seed-word occurrences, present only when a lexicon is supplied.
    pub seed_words: Option<u64>,
    pub masked_seed_words: Option<u64>,
}

impl StatsReport {
    pub fn realized_mask_rate(&self) -> f64 {
        if self.content_tokens == 0 {
            0.0
        } else {
            self.masked_positions as f64 / self.content_tokens as f64
        }
    }

    /// Fraction of seed-word occurrences masked over the fraction of all
    /// word occurrences masked.
    pub fn enrichment_ratio(&self) -> Option<f64> {
        let seed_words = self.seed_words?;
        let masked_seed = self.masked_seed_words?;
        if seed_words == 0 || self.words == 0 || self.masked_words == 0 {
            return None;
        }
        let seed_rate = masked_seed as f64 / seed_words as f64;
        let all_rate = self.masked_words as f64 / self.words as f64;
        Some(seed_rate / all_rate)
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("examples", self.examples.to_string());
        push("content_tokens", self.content_tokens.to_string());
        push("masked_positions", self.masked_positions.to_string());
        push("realized_mask_rate", format!("{:.6}", self.realized_mask_rate()));
        push("words", self.words.to_string());
        push("masked_words", self.masked_words.to_string());
        push("whole_word_violations", self.whole_word_violations.to_string());
        push("structural_violations", self.structural_violations.to_string());
        push("masked_units", self.masked_units.to_string());
        push("mask_fate_units", self.mask_fate_units.to_string());
        push("replace_fate_units", self.replace_fate_units.to_string());
        push("keep_fate_units", self.keep_fate_units.to_string());
        push("mask_fate_positions", self.mask_fate_positions.to_string());
        push("replace_fate_positions", self.replace_fate_positions.to_string());
        push("keep_fate_positions", self.keep_fate_positions.to_string());
        if let (Some(seed), Some(masked)) = (self.seed_words, self.masked_seed_words) {
            push("seed_words", seed.to_string());
            push("masked_seed_words", masked.to_string());
        }
        if let Some(ratio) = self.enrichment_ratio() {
            push("enrichment_ratio", format!("{ratio:.6}"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Mask,
    Replace,
    Keep,
}

/// One reconstructed word occurrence inside an example.
struct ReconstructedWord {
    start: usize,
    end: usize,
    surface: String,
}

/// Rebuild word boundaries from restored original ids: a continuation
/// token extends the current word only when it directly follows the
/// previous content position.
fn reconstruct_words(
    originals: &[u32],
    content: &[bool],
    vocab: &Vocab,
) -> Vec<ReconstructedWord> {
    let mut words: Vec<ReconstructedWord> = Vec::new();
    let mut prev_content: Option<usize> = None;
    for (pos, &id) in originals.iter().enumerate() {
        if !content[pos] {
            continue;
        }
        let piece = vocab.token(id);
        let continues = prev_content == Some(pos.wrapping_sub(1))
            && piece.starts_with(CONTINUATION_PREFIX)
            && !words.is_empty();
        if continues {
            let word = words.last_mut().expect("continuation follows a word");
            word.end = pos + 1;
            word.surface.push_str(&piece[CONTINUATION_PREFIX.len()..]);
        } else {
            words.push(ReconstructedWord {
                start: pos,
                end: pos + 1,
                surface: piece.to_string(),
            });
        }
        prev_content = Some(pos);
    }
    words
}

fn accumulate(
    report: &mut StatsReport,
    example: &MaskedExample,
    vocab: &Vocab,
    lexicon: Option<&SeedLexicon>,
) -> std::result::Result<(), String> {
    report.examples += 1;
    let len = example.attention_len.min(example.input_ids.len());

    // Restore the original token at every position; labels hold it at
    // selected positions, the input is untouched elsewhere.
    let mut originals = vec![0u32; len];
    let mut selected = vec![false; len];
    for pos in 0..len {
        let label = example.label_ids.get(pos).copied().unwrap_or(LABEL_IGNORE);
        if label == LABEL_IGNORE {
            originals[pos] = example.input_ids[pos];
        } else if label < 0 {
            return Err(format!("negative label {label} at position {pos}"));
        } else {
            originals[pos] = label as u32;
            selected[pos] = true;
        }
    }
    for (pos, &id) in example.input_ids.iter().chain(originals.iter()).enumerate() {
        if id as usize >= vocab.len() {
            return Err(format!(
                "token id {id} out of vocabulary range at position {}",
                pos % example.input_ids.len().max(1)
            ));
        }
    }
    for &pos in &example.masked_positions {
        if pos >= len || !selected[pos] {
            report.structural_violations += 1;
        }
    }
    for (pos, &sel) in selected.iter().enumerate() {
        if sel && !example.masked_positions.contains(&pos) {
            report.structural_violations += 1;
        }
    }

    let content: Vec<bool> = originals
        .iter()
        .map(|&id| !vocab.specials().is_structural(id))
        .collect();
    for pos in 0..len {
        if selected[pos] && !content[pos] {
            report.structural_violations += 1;
        }
    }
    report.content_tokens += content.iter().filter(|&&c| c).count() as u64;
    report.masked_positions += selected.iter().filter(|&&s| s).count() as u64;

    let fate_of = |pos: usize| -> Fate {
        let input = example.input_ids[pos];
        if input == vocab.specials().mask {
            Fate::Mask
        } else if input == originals[pos] {
            Fate::Keep
        } else {
            Fate::Replace
        }
    };

    for word in reconstruct_words(&originals, &content, vocab) {
        report.words += 1;
        let positions = word.start..word.end;
        let sel_count = positions.clone().filter(|&p| selected[p]).count();
        if sel_count > 0 {
            report.masked_words += 1;
            if sel_count < word.end - word.start {
                report.whole_word_violations += 1;
            }
        }
        if let Some(lex) = lexicon {
            if lex.class_of(&word.surface).is_some() {
                *report.seed_words.get_or_insert(0) += 1;
                if sel_count > 0 {
                    *report.masked_seed_words.get_or_insert(0) += 1;
                }
            }
        }

        // Maximal runs of selected positions within this word; the run's
        // fate comes from its first position.
        let mut pos = word.start;
        while pos < word.end {
            if !selected[pos] {
                pos += 1;
                continue;
            }
            let fate = fate_of(pos);
            report.masked_units += 1;
            match fate {
                Fate::Mask => report.mask_fate_units += 1,
                Fate::Replace => report.replace_fate_units += 1,
                Fate::Keep => report.keep_fate_units += 1,
            }
            while pos < word.end && selected[pos] {
                match fate_of(pos) {
                    Fate::Mask => report.mask_fate_positions += 1,
                    Fate::Replace => report.replace_fate_positions += 1,
                    Fate::Keep => report.keep_fate_positions += 1,
                }
                pos += 1;
            }
        }
    }

    if lexicon.is_some() {
        report.seed_words.get_or_insert(0);
        report.masked_seed_words.get_or_insert(0);
    }
    Ok(())
}

/// Analyze one JSONL training file.
pub fn analyze_jsonl(
    path: &Path,
    vocab: &Vocab,
    lexicon: Option<&SeedLexicon>,
) -> Result<StatsReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut report = StatsReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: MaskedExample = serde_json::from_str(&line).map_err(|e| Error::Jsonl {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        accumulate(&mut report, &example, vocab, lexicon).map_err(|detail| Error::Jsonl {
            path: path.to_path_buf(),
            line: i + 1,
            detail,
        })?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskfn::MaskFnConfig;
    use crate::normalize::NormalizationPolicy;
    use crate::pipeline::{
        parse_corpus, run_pipeline, PipelineInputs, SequenceConfig, Strategy,
    };
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
        tokens.extend(["good", "movie", "virus", "the", "un", "##aff", "##able"].map(String::from));
        Vocab::from_tokens(tokens).unwrap()
    }

    fn example_for(
        vocab: &Vocab,
        text: &str,
        strategy: Strategy,
        seed: u64,
    ) -> (Vec<u8>, StatsReport) {
        let dir = tempfile::tempdir().unwrap();
        let emb = dir.path().join("emb.vec");
        std::fs::write(&emb, "2 2\nthe -1 -1\nvirus 1 1\n").unwrap();
        let policy = NormalizationPolicy::default();
        let table = crate::embeddings::EmbeddingTable::load(&emb, &policy).unwrap();
        let lex = SeedLexicon::new(["the"], ["virus"], &policy).unwrap();
        let model = crate::scorer::train_scorer(&lex, &table, 1.0, 50, 1).unwrap();
        let cfg = MaskFnConfig::random_baseline(0.4);
        let seq_cfg = SequenceConfig {
            max_seq_len: 32,
            max_predictions: 12,
            rng_seed: seed,
            strategy,
        };
        let docs = parse_corpus(text);
        let inputs = PipelineInputs {
            documents: &docs,
            vocab,
            scorer: Some((&model, &table)),
            mask_cfg: &cfg,
            seq_cfg: &seq_cfg,
            policy: &policy,
            lexicon: Some(&lex),
            workers: 1,
        };
        let mut out = Vec::new();
        run_pipeline(&inputs, &mut out).unwrap();

        let jsonl = dir.path().join("examples.jsonl");
        std::fs::write(&jsonl, &out).unwrap();
        let report = analyze_jsonl(&jsonl, vocab, Some(&lex)).unwrap();
        (out, report)
    }

    #[test]
    fn reconstructs_words_and_counts_cleanly() {
        let vocab = test_vocab();
        let corpus = "unaffable virus the movie\ngood virus unaffable the\n";
        let (out, report) = example_for(&vocab, corpus, Strategy::RandomWwm, 21);
        assert!(!out.is_empty());
        assert_eq!(report.examples, 1);
        // 8 words over two sentences packed into one sequence.
        assert_eq!(report.words, 8);
        assert_eq!(report.content_tokens, 12);
        assert_eq!(report.whole_word_violations, 0);
        assert_eq!(report.structural_violations, 0);
        assert_eq!(report.seed_words, Some(4));
        assert_eq!(
            report.mask_fate_positions + report.replace_fate_positions
                + report.keep_fate_positions,
            report.masked_positions
        );
        assert!(report.masked_units >= 1);
    }

    #[test]
    fn whole_word_strategies_have_zero_violations_token_strategy_some() {
        let vocab = test_vocab();
        let corpus: String = (0..60)
            .map(|i| {
                if i % 6 == 5 {
                    "unaffable virus unaffable good unaffable\n\n".to_string()
                } else {
                    "unaffable virus unaffable good unaffable\n".to_string()
                }
            })
            .collect();
        for strategy in [Strategy::Selective, Strategy::RandomWwm] {
            let (_, report) = example_for(&vocab, &corpus, strategy, 3);
            assert_eq!(report.whole_word_violations, 0, "{strategy:?}");
            assert!(report.masked_positions > 0);
        }
        let (_, report) = example_for(&vocab, &corpus, Strategy::RandomTm, 3);
        assert!(
            report.whole_word_violations > 0,
            "token masking should split some multi-token word"
        );
    }

    #[test]
    fn realized_rate_matches_pipeline_report() {
        let vocab = test_vocab();
        let corpus: String = "good movie virus the unaffable\n".repeat(40);
        let (_, report) = example_for(&vocab, &corpus, Strategy::RandomWwm, 9);
        assert!(report.masked_positions > 0);
        let rate = report.realized_mask_rate();
        assert!(rate > 0.2 && rate < 0.6, "rate {rate}");
        assert!(report.enrichment_ratio().is_some());
    }

    #[test]
    fn detects_partial_word_coverage() {
        let vocab = test_vocab();
        // Hand-build an example where only one of three pieces of
        // "unaffable" is selected.
        let un = vocab.id_of("un").unwrap();
        let aff = vocab.id_of("##aff").unwrap();
        let able = vocab.id_of("##able").unwrap();
        let cls = vocab.specials().cls;
        let sep = vocab.specials().sep;
        let mask = vocab.specials().mask;
        let mut label_ids = vec![LABEL_IGNORE; 8];
        label_ids[2] = aff as i32;
        let example = MaskedExample {
            input_ids: vec![cls, un, mask, able, sep, 0, 0, 0],
            label_ids,
            attention_len: 5,
            masked_positions: vec![2],
            doc_id: 0,
            seq_index: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, format!("{}\n", serde_json::to_string(&example).unwrap())).unwrap();
        let report = analyze_jsonl(&path, &vocab, None).unwrap();
        assert_eq!(report.words, 1);
        assert_eq!(report.whole_word_violations, 1);
        assert_eq!(report.mask_fate_units, 1);
        assert_eq!(report.structural_violations, 0);
        assert_eq!(report.seed_words, None);
    }

    #[test]
    fn flags_masked_structural_positions() {
        let vocab = test_vocab();
        let good = vocab.id_of("good").unwrap();
        let cls = vocab.specials().cls;
        let sep = vocab.specials().sep;
        let mut label_ids = vec![LABEL_IGNORE; 8];
        label_ids[0] = cls as i32;
        label_ids[1] = good as i32;
        let example = MaskedExample {
            input_ids: vec![vocab.specials().mask, vocab.specials().mask, sep, 0, 0, 0, 0, 0],
            label_ids,
            attention_len: 3,
            masked_positions: vec![0, 1],
            doc_id: 0,
            seq_index: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, format!("{}\n", serde_json::to_string(&example).unwrap())).unwrap();
        let report = analyze_jsonl(&path, &vocab, None).unwrap();
        assert_eq!(report.structural_violations, 1);
    }

    #[test]
    fn malformed_line_is_a_data_error() {
        let vocab = test_vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"input_ids\": [1,2\n").unwrap();
        let err = analyze_jsonl(&path, &vocab, None).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_DATA);
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn report_rendering_is_stable() {
        let report = StatsReport {
            examples: 2,
            content_tokens: 100,
            masked_positions: 15,
            words: 40,
            masked_words: 9,
            seed_words: Some(5),
            masked_seed_words: Some(4),
            ..StatsReport::default()
        };
        let text = report.to_key_value();
        assert!(text.contains("realized_mask_rate=0.150000"));
        assert!(text.contains("enrichment_ratio="));
        let ratio = report.enrichment_ratio().unwrap();
        assert!((ratio - (0.8 / 0.225)).abs() < 1e-12);
    }
}
