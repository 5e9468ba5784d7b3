//! Linear max-margin separator between the seed classes, plus the mapping
//! from signed hyperplane distance to a task score in [0, 10].
//!
//! Training walks the seed words in global sorted-word order with a
//! label-independent shuffle, so retraining with swapped classes negates
//! every arithmetic step exactly and scores mirror: s' = 10 - s.

use std::io::{Read, Write};
use std::path::Path;

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lexicon::{SeedClass, SeedLexicon};
use crate::rng;

const MODEL_MAGIC: &[u8; 4] = b"SMKM";
const MODEL_FORMAT_VERSION: u32 = 1;

/// Default neutral score for out-of-vocabulary words.
pub const DEFAULT_OOV_SCORE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    /// Fraction of embedded seed words on the correct side of the plane.
    pub accuracy: f64,
    /// Minimum signed geometric margin over embedded seed words.
    pub margin: f64,
    /// Total subgradient steps taken (epochs x points).
    pub iterations: usize,
    /// Seed words skipped because the embedding table lacks them.
    pub dropped_words: usize,
    /// Embedded seed words that anchored score 0.
    pub class_lo_count: usize,
    /// Embedded seed words that anchored score 10.
    pub class_hi_count: usize,
}

/// Trained separator: unit-norm weights, bias, distance->score scale, and
/// the score assigned to words without embeddings.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    w: Vec<f64>,
    b: f64,
    k: f64,
    oov_score: f64,
    training_stats: Option<TrainingStats>,
}

impl ScoreModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    /// Scale factor mapping signed distance to score units.
    pub fn scale(&self) -> f64 {
        self.k
    }

    pub fn oov_score(&self) -> f64 {
        self.oov_score
    }

    pub fn set_oov_score(&mut self, score: f64) -> Result<()> {
        if !(0.0..=10.0).contains(&score) {
            return Err(Error::Config(format!(
                "oov_score must be in [0, 10], got {score}"
            )));
        }
        self.oov_score = score;
        Ok(())
    }

    /// Present only on freshly trained models; not persisted.
    pub fn training_stats(&self) -> Option<&TrainingStats> {
        self.training_stats.as_ref()
    }

    /// Signed distance w.x + b (w has unit norm).
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// clamp(5 + k * (w.x + b), 0, 10).
    pub fn score_vector(&self, x: &[f64]) -> f64 {
        (5.0 + self.k * self.signed_distance(x)).clamp(0.0, 10.0)
    }

    /// Score for a normalized word; out-of-vocabulary words get
    /// `oov_score`.
    pub fn score_word(&self, word: &str, table: &EmbeddingTable) -> f64 {
        match table.get(word) {
            Some(x) => self.score_vector(x),
            None => self.oov_score,
        }
    }

    /// Serialize to the flat model format:
    /// magic `SMKM`, then little-endian u32 format version (1), u32 dim,
    /// f64 k, f64 b, f64 oov_score, then dim f64 weight components.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(4 + 4 + 4 + 8 * (3 + self.w.len()));
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.w.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.k.to_le_bytes());
        buf.extend_from_slice(&self.b.to_le_bytes());
        buf.extend_from_slice(&self.oov_score.to_le_bytes());
        for &c in &self.w {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let fail = |detail: String| Error::ModelFormat {
            path: path.to_path_buf(),
            detail,
        };

        if bytes.len() < 12 {
            return Err(fail("truncated header".to_string()));
        }
        if &bytes[0..4] != MODEL_MAGIC {
            return Err(fail("bad magic".to_string()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(fail(format!("unsupported format version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let expected = 12 + 8 * (3 + dim);
        if bytes.len() != expected {
            return Err(fail(format!(
                "expected {expected} bytes for dim {dim}, got {}",
                bytes.len()
            )));
        }
        let f64_at = |offset: usize| {
            f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
        };
        let k = f64_at(12);
        let b = f64_at(20);
        let oov_score = f64_at(28);
        let w: Vec<f64> = (0..dim).map(|i| f64_at(36 + 8 * i)).collect();

        if !k.is_finite() || k <= 0.0 {
            return Err(fail(format!("scale must be a positive finite number, got {k}")));
        }
        if !b.is_finite() || w.iter().any(|c| !c.is_finite()) {
            return Err(fail("non-finite model parameters".to_string()));
        }
        if !(0.0..=10.0).contains(&oov_score) {
            return Err(fail(format!("oov_score out of [0, 10]: {oov_score}")));
        }
        let norm = dot(&w, &w).sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(fail(format!("weights not unit-norm (got {norm})")));
        }

        Ok(ScoreModel {
            w,
            b,
            k,
            oov_score,
            training_stats: None,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train the separator with primal subgradient descent on the hinge loss
/// (step schedule 1/(lambda * t), lambda = 1/(reg_c * n)), rescale (w, b)
/// to unit weight norm, then anchor the score scale so the 95th percentile
/// of |w.x + b| over embedded seed words maps to 5 score units.
pub fn train_scorer(
    lexicon: &SeedLexicon,
    table: &EmbeddingTable,
    reg_c: f64,
    epochs: usize,
    rng_seed: u64,
) -> Result<ScoreModel> {
    if !(reg_c.is_finite() && reg_c > 0.0) {
        return Err(Error::Config(format!("reg_c must be positive, got {reg_c}")));
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be positive".to_string()));
    }

    // Sorted-word order keeps the training sequence independent of class
    // membership, which the mirror property relies on.
    let mut points: Vec<(&[f64], f64)> = Vec::new();
    let mut dropped = 0usize;
    let mut lo_count = 0usize;
    let mut hi_count = 0usize;
    for (word, class) in lexicon.iter_all_sorted() {
        match table.get(word) {
            Some(x) => {
                points.push((x, class.label()));
                match class {
                    SeedClass::Negative => lo_count += 1,
                    SeedClass::Positive => hi_count += 1,
                }
            }
            None => dropped += 1,
        }
    }
    if lo_count == 0 || hi_count == 0 {
        return Err(Error::ClassNoEmbeddedWords {
            class: if lo_count == 0 { "lo" } else { "hi" },
        });
    }
    let first = points[0].0;
    if points.iter().all(|(x, _)| *x == first) {
        return Err(Error::DegenerateTrainingSet);
    }

    let n = points.len();
    let dim = table.dim();
    let lambda = 1.0 / (reg_c * n as f64);
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut t = 0u64;

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        rng::shuffle(&mut order, rng_seed, &[epoch as u64]);
        for &i in &order {
            let (x, y) = points[i];
            t += 1;
            let decay = 1.0 - 1.0 / t as f64;
            for c in w.iter_mut() {
                *c *= decay;
            }
            if y * (dot(&w, x) + b) < 1.0 {
                let eta = 1.0 / (lambda * t as f64);
                for (c, xi) in w.iter_mut().zip(x) {
                    *c += eta * y * xi;
                }
                b += eta * y;
            }
        }
    }

    let norm = dot(&w, &w).sqrt();
    if norm < 1e-12 {
        return Err(Error::DegenerateTrainingSet);
    }
    for c in w.iter_mut() {
        *c /= norm;
    }
    b /= norm;

    let mut distances: Vec<f64> = points.iter().map(|(x, _)| (dot(&w, x) + b).abs()).collect();
    distances.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let p95 = percentile_nearest_rank(&distances, 0.95);
    if p95 < 1e-12 {
        return Err(Error::DegenerateTrainingSet);
    }
    let k = 5.0 / p95;

    let mut correct = 0usize;
    let mut margin = f64::INFINITY;
    for (x, y) in &points {
        let m = y * (dot(&w, x) + b);
        if m > 0.0 {
            correct += 1;
        }
        margin = margin.min(m);
    }

    Ok(ScoreModel {
        w,
        b,
        k,
        oov_score: DEFAULT_OOV_SCORE,
        training_stats: Some(TrainingStats {
            accuracy: correct as f64 / n as f64,
            margin,
            iterations: t as usize,
            dropped_words: dropped,
            class_lo_count: lo_count,
            class_hi_count: hi_count,
        }),
    })
}

/// Nearest-rank percentile of an ascending-sorted sample: the smallest
/// element whose rank covers fraction `p` of the data.
pub(crate) fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}
