//! Synthetic bundled assets for offline tests and demos: a toy embedding
//! table, a small WordPiece vocabulary, two seed word lists, a corpus
//! with controlled word frequencies, and a ready-to-run config. All
//! assets are generated from one fixed seed and verified by checksum.
//!
//! The corpus is built from exact per-word occurrence quotas rather than
//! independent sampling so the score distribution has fine, predictable
//! granularity: the two seed classes sit at the score extremes with
//! little mass, two graded word ramps spread smoothly across the rest of
//! the range, and a large neutral block sits near the middle. That shape
//! keeps a 15% target mask rate reachable for every masking family on
//! either sidedness, and makes seed words far likelier to be masked than
//! the average word.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{MaskFnSection, PathsSection, RunConfig, ScorerSection, SequenceSection};
use crate::error::{Error, Result};
use crate::maskfn::{MaskFamily, Sidedness};
use crate::normalize::NormalizationPolicy;
use crate::pipeline::Strategy;
use crate::rng::{domain, shuffle, CounterRng};
use crate::tokenizer::{tokenize_word, Vocab, CLS, DEFAULT_MAX_WORD_CHARS, MASK, PAD, SEP, UNK};

/// Seed baked into the committed fixture set.
pub const FIXTURE_SEED: u64 = 13;

pub const EMBEDDING_DIM: usize = 16;
pub const SEEDS_PER_CLASS: usize = 30;
pub const GRADED_PER_SIDE: usize = 55;
pub const NEUTRAL_WORDS: usize = 50;
pub const TOTAL_WORD_OCCURRENCES: usize = 3600;
pub const DOCUMENTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureAsset {
    pub path: String,
    pub sha256: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestFile {
    assets: BTreeMap<String, FixtureAsset>,
}

#[derive(Debug, Clone)]
pub struct FixtureManifest {
    assets: BTreeMap<String, FixtureAsset>,
    base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").expect("hex formatting");
    }
    out
}

impl FixtureManifest {
    pub fn load(path: &Path) -> Result<FixtureManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ManifestFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(FixtureManifest {
            assets: file.assets,
            base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.assets.keys().map(String::as_str)
    }

    pub fn asset(&self, name: &str) -> Result<&FixtureAsset> {
        self.assets.get(name).ok_or_else(|| Error::UnknownFixture {
            name: name.to_string(),
        })
    }

    pub fn asset_path(&self, name: &str) -> Result<PathBuf> {
        Ok(self.base_dir.join(&self.asset(name)?.path))
    }

    /// Read an asset and verify its checksum against the manifest.
    pub fn load_asset(&self, name: &str) -> Result<Vec<u8>> {
        let asset = self.asset(name)?;
        let path = self.base_dir.join(&asset.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let actual = sha256_hex(&bytes);
        if actual != asset.sha256 {
            return Err(Error::FixtureChecksum {
                name: name.to_string(),
                expected: asset.sha256.clone(),
                actual,
            });
        }
        Ok(bytes)
    }
}

const CONSONANTS: &[char] = &[
    'b', 'c', 'd', 'f', 'g', 'j', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z',
];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// Corpus-only words with letters the generator never uses, so they stay
/// out of the embedding table.
const OOV_WORDS: &[(&str, usize)] = &[("unaffable", 60), ("zyxwort", 20), ("qhywell", 20)];

/// Pronounceable 4- or 5-letter word: alternating consonant/vowel.
fn make_word(rng: &mut CounterRng, taken: &BTreeSet<String>) -> String {
    loop {
        let len = 4 + rng.next_below(2) as usize;
        let mut word = String::with_capacity(len);
        for i in 0..len {
            let c = if i % 2 == 0 {
                CONSONANTS[rng.next_below(CONSONANTS.len() as u64) as usize]
            } else {
                VOWELS[rng.next_below(VOWELS.len() as u64) as usize]
            };
            word.push(c);
        }
        if !taken.contains(&word) {
            return word;
        }
    }
}

fn make_words(rng: &mut CounterRng, taken: &mut BTreeSet<String>, count: usize) -> Vec<String> {
    (0..count)
        .map(|_| {
            let word = make_word(rng, taken);
            taken.insert(word.clone());
            word
        })
        .collect()
}

/// All embedded word categories with their class-axis coordinates.
struct WordDesign {
    negative_seeds: Vec<String>,
    positive_seeds: Vec<String>,
    graded_negative: Vec<(String, f64)>,
    graded_positive: Vec<(String, f64)>,
    neutral: Vec<String>,
}

fn design_words(seed: u64) -> WordDesign {
    let mut taken: BTreeSet<String> = OOV_WORDS.iter().map(|(w, _)| w.to_string()).collect();
    let mut rng = CounterRng::new(seed, domain::SHUFFLE, &[100]);
    let negative_seeds = make_words(&mut rng, &mut taken, SEEDS_PER_CLASS);
    let positive_seeds = make_words(&mut rng, &mut taken, SEEDS_PER_CLASS);
    let graded_neg_words = make_words(&mut rng, &mut taken, GRADED_PER_SIDE);
    let graded_pos_words = make_words(&mut rng, &mut taken, GRADED_PER_SIDE);
    let neutral = make_words(&mut rng, &mut taken, NEUTRAL_WORDS);

    // Two interleaved ramps over (0, 0.9]; the positive grid is offset so
    // no positive magnitude ever equals a negative one, keeping two-sided
    // extremity ties impossible.
    let step = 0.85 / (GRADED_PER_SIDE as f64 - 1.0);
    let graded_negative = graded_neg_words
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, -(0.05 + step * i as f64)))
        .collect();
    let graded_positive = graded_pos_words
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, 0.0578 + step * i as f64))
        .collect();

    WordDesign {
        negative_seeds,
        positive_seeds,
        graded_negative,
        graded_positive,
        neutral,
    }
}

fn push_embedding_row(out: &mut String, rng: &mut CounterRng, word: &str, axis: f64) {
    out.push_str(word);
    write!(out, " {axis:?}").expect("format");
    for _ in 1..EMBEDDING_DIM {
        let noise = (rng.next_f64() - 0.5) * 0.1;
        write!(out, " {noise:?}").expect("format");
    }
    out.push('\n');
}

fn render_embeddings(design: &WordDesign, seed: u64) -> String {
    let mut rng = CounterRng::new(seed, domain::SHUFFLE, &[101]);
    let count = 2 * SEEDS_PER_CLASS + 2 * GRADED_PER_SIDE + NEUTRAL_WORDS;
    let mut out = format!("{count} {EMBEDDING_DIM}\n");
    for word in &design.negative_seeds {
        let axis = -(0.96 + rng.next_f64() * 0.04);
        push_embedding_row(&mut out, &mut rng, word, axis);
    }
    for word in &design.positive_seeds {
        let axis = 0.96 + rng.next_f64() * 0.04;
        push_embedding_row(&mut out, &mut rng, word, axis);
    }
    for (word, axis) in &design.graded_negative {
        push_embedding_row(&mut out, &mut rng, word, *axis);
    }
    for (word, axis) in &design.graded_positive {
        push_embedding_row(&mut out, &mut rng, word, *axis);
    }
    for word in &design.neutral {
        let axis = (rng.next_f64() - 0.5) * 0.04;
        push_embedding_row(&mut out, &mut rng, word, axis);
    }
    out
}

/// 120-token WordPiece vocabulary: five specials, single letters with
/// continuations, curated two-letter pieces, the un/##aff/##able triple,
/// and punctuation.
fn vocab_tokens() -> Vec<String> {
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
    tokens.extend(["un", "##aff", "##able"].map(String::from));
    let initials = ["th", "re", "in", "er", "an", "on", "at", "en", "es", "or", "st"];
    tokens.extend(initials.map(String::from));
    let continuations = [
        "##th", "##er", "##re", "##in", "##an", "##on", "##at", "##en", "##es", "##ed", "##ing",
        "##le", "##nt", "##st", "##ar", "##or", "##it", "##is", "##te", "##al", "##nd", "##se",
        "##ve", "##ra", "##ld", "##ur", "##ta", "##ne", "##ri", "##to", "##el", "##la", "##lo",
        "##ca", "##co", "##da", "##de", "##di", "##do", "##du", "##ba", "##be", "##bi",
    ];
    tokens.extend(continuations.map(String::from));
    tokens.extend([".", "!", "?", ",", "'", "-"].map(String::from));
    tokens
}

/// Exact per-word occurrence quotas for the corpus.
fn occurrence_quotas(design: &WordDesign) -> Vec<(String, usize)> {
    let mut quotas: Vec<(String, usize)> = Vec::new();
    for word in design.negative_seeds.iter().chain(&design.positive_seeds) {
        quotas.push((word.clone(), 3));
    }
    for (word, _) in design.graded_negative.iter().chain(&design.graded_positive) {
        quotas.push((word.clone(), 9));
    }
    for (word, count) in OOV_WORDS {
        quotas.push((word.to_string(), *count));
    }
    let used: usize = quotas.iter().map(|(_, c)| c).sum();
    let remaining = TOTAL_WORD_OCCURRENCES - used;
    let base = remaining / NEUTRAL_WORDS;
    let extra = remaining % NEUTRAL_WORDS;
    for (i, word) in design.neutral.iter().enumerate() {
        quotas.push((word.clone(), base + usize::from(i < extra)));
    }
    quotas
}

fn render_corpus(design: &WordDesign, seed: u64) -> String {
    let mut occurrences: Vec<&str> = Vec::with_capacity(TOTAL_WORD_OCCURRENCES);
    let quotas = occurrence_quotas(design);
    for (word, count) in &quotas {
        for _ in 0..*count {
            occurrences.push(word);
        }
    }
    debug_assert_eq!(occurrences.len(), TOTAL_WORD_OCCURRENCES);
    shuffle(&mut occurrences, seed, &[102]);

    let mut rng = CounterRng::new(seed, domain::SHUFFLE, &[103]);
    let mut sentences: Vec<String> = Vec::new();
    let mut cursor = 0;
    while cursor < occurrences.len() {
        let len = (12 + rng.next_below(7) as usize).min(occurrences.len() - cursor);
        let words = &occurrences[cursor..cursor + len];
        cursor += len;
        let punct = match sentences.len() {
            i if i % 11 == 10 => "?",
            i if i % 7 == 6 => "!",
            _ => ".",
        };
        sentences.push(format!("{}{punct}", words.join(" ")));
    }

    let per_doc = sentences.len().div_ceil(DOCUMENTS);
    let mut out = String::new();
    for (i, sentence) in sentences.iter().enumerate() {
        if i > 0 && i % per_doc == 0 {
            out.push('\n');
        }
        out.push_str(sentence);
        out.push('\n');
    }
    out
}

fn render_seed_list(words: &[String], class_label: &str) -> String {
    let mut out = format!("# {class_label} seed words\n");
    for word in words {
        out.push_str(word);
        out.push('\n');
    }
    out
}

fn fixture_config(seed: u64) -> RunConfig {
    RunConfig {
        rng_seed: seed,
        workers: 2,
        calibration_sample_cap: 1_000_000,
        paths: PathsSection {
            corpus: "corpus.txt".into(),
            embeddings: "embeddings.vec".into(),
            vocab: "vocab.txt".into(),
            seed_negative: "seeds_negative.txt".into(),
            seed_positive: "seeds_positive.txt".into(),
            output_dir: "out".into(),
            model: None,
        },
        scorer: ScorerSection {
            reg_c: 1.0,
            epochs: 100,
        },
        mask_fn: MaskFnSection {
            family: MaskFamily::Step,
            sidedness: Sidedness::TwoSided,
            ..MaskFnSection::default()
        },
        sequence: SequenceSection {
            max_seq_len: 128,
            max_predictions: Some(38),
            strategy: Strategy::Selective,
        },
        normalization: NormalizationPolicy::default(),
    }
}

/// Generate the full fixture set into `dir` and write its manifest.
/// Output is byte-identical for a given seed.
pub fn generate(dir: &Path, seed: u64) -> Result<FixtureManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let design = design_words(seed);

    let vocab_text = {
        let tokens = vocab_tokens();
        assert_eq!(tokens.len(), 120, "fixture vocabulary drifted");
        let mut text = tokens.join("\n");
        text.push('\n');
        text
    };
    let vocab = Vocab::from_tokens(vocab_tokens())?;
    let pieces: Vec<&str> = tokenize_word(&vocab, "unaffable", DEFAULT_MAX_WORD_CHARS)
        .iter()
        .map(|&id| vocab.token(id))
        .collect();
    assert_eq!(
        pieces,
        ["un", "##aff", "##able"],
        "showcase word must split into its documented pieces"
    );

    let embeddings_text = render_embeddings(&design, seed);
    let corpus_text = render_corpus(&design, seed);
    let neg_text = render_seed_list(&design.negative_seeds, "negative-class");
    let pos_text = render_seed_list(&design.positive_seeds, "positive-class");
    let config_text = {
        let config = fixture_config(seed);
        toml::to_string_pretty(&config)
            .map_err(|e| Error::Config(format!("cannot serialize fixture config: {e}")))?
    };

    let files: [(&str, &str, String, &str); 6] = [
        (
            "toy_vocab",
            "vocab.txt",
            vocab_text,
            "WordPiece vocabulary, 120 tokens",
        ),
        (
            "toy_embeddings",
            "embeddings.vec",
            embeddings_text,
            "word embeddings, 220 words, 16 dimensions",
        ),
        (
            "corpus",
            "corpus.txt",
            corpus_text,
            "synthetic corpus, 12 documents with quota-controlled word frequencies",
        ),
        (
            "seeds_negative",
            "seeds_negative.txt",
            neg_text,
            "negative-class seed words",
        ),
        (
            "seeds_positive",
            "seeds_positive.txt",
            pos_text,
            "positive-class seed words",
        ),
        (
            "config",
            "config.toml",
            config_text,
            "ready-to-run configuration with fixture-relative paths",
        ),
    ];

    let mut assets = BTreeMap::new();
    for (name, file_name, content, description) in files {
        let path = dir.join(file_name);
        std::fs::write(&path, &content).map_err(|e| Error::io(&path, e))?;
        assets.insert(
            name.to_string(),
            FixtureAsset {
                path: file_name.to_string(),
                sha256: sha256_hex(content.as_bytes()),
                description: description.to_string(),
            },
        );
    }

    let manifest = ManifestFile { assets };
    let manifest_text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
    let manifest_path = dir.join("manifest.toml");
    std::fs::write(&manifest_path, manifest_text).map_err(|e| Error::io(&manifest_path, e))?;

    FixtureManifest::load(&manifest_path)
}
