//! Seed lexicons: two disjoint word classes that anchor the score scale.
//!
//! The negative class anchors score 0, the positive class score 10.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalize::NormalizationPolicy;

/// Which end of the score scale a seed class anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedClass {
    /// Anchors score 0.
    Negative,
    /// Anchors score 10.
    Positive,
}

impl SeedClass {
    pub fn label(self) -> f64 {
        match self {
            SeedClass::Negative => -1.0,
            SeedClass::Positive => 1.0,
        }
    }

    pub fn anchor_score(self) -> f64 {
        match self {
            SeedClass::Negative => 0.0,
            SeedClass::Positive => 10.0,
        }
    }
}

/// Two disjoint, normalized, deduplicated seed word classes.
#[derive(Debug, Clone)]
pub struct SeedLexicon {
    negative: BTreeSet<String>,
    positive: BTreeSet<String>,
}

impl SeedLexicon {
    /// Build from raw word lists. Words are normalized, deduplicated within
    /// a class, and checked for cross-class overlap.
    pub fn new<I, J, S, T>(negative: I, positive: J, policy: &NormalizationPolicy) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let negative: BTreeSet<String> = negative
            .into_iter()
            .map(|w| policy.apply(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();
        let positive: BTreeSet<String> = positive
            .into_iter()
            .map(|w| policy.apply(w.as_ref()))
            .filter(|w| !w.is_empty())
            .collect();

        if negative.is_empty() {
            return Err(Error::EmptySeedClass {
                path: "<negative>".into(),
            });
        }
        if positive.is_empty() {
            return Err(Error::EmptySeedClass {
                path: "<positive>".into(),
            });
        }
        if let Some(word) = negative.intersection(&positive).next() {
            return Err(Error::WordInBothClasses { word: word.clone() });
        }

        Ok(SeedLexicon { negative, positive })
    }

    /// Load both classes from one-word-per-line text files. Blank lines and
    /// `#` comment lines are skipped; a line with internal whitespace is a
    /// data error.
    pub fn load(
        negative_path: &Path,
        positive_path: &Path,
        policy: &NormalizationPolicy,
    ) -> Result<Self> {
        let negative = read_word_list(negative_path)?;
        let positive = read_word_list(positive_path)?;
        if negative.is_empty() {
            return Err(Error::EmptySeedClass {
                path: negative_path.to_path_buf(),
            });
        }
        if positive.is_empty() {
            return Err(Error::EmptySeedClass {
                path: positive_path.to_path_buf(),
            });
        }
        SeedLexicon::new(negative, positive, policy)
    }

    pub fn class_of(&self, word: &str) -> Option<SeedClass> {
        if self.negative.contains(word) {
            Some(SeedClass::Negative)
        } else if self.positive.contains(word) {
            Some(SeedClass::Positive)
        } else {
            None
        }
    }

    pub fn negative(&self) -> &BTreeSet<String> {
        &self.negative
    }

    pub fn positive(&self) -> &BTreeSet<String> {
        &self.positive
    }

    pub fn len(&self) -> usize {
        self.negative.len() + self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees both classes are non-empty
    }

    /// All seed words with labels, in global sorted-word order. Training
    /// consumes this order so it is independent of class membership.
    pub fn iter_all_sorted(&self) -> impl Iterator<Item = (&str, SeedClass)> {
        let mut all: Vec<(&str, SeedClass)> = self
            .negative
            .iter()
            .map(|w| (w.as_str(), SeedClass::Negative))
            .chain(
                self.positive
                    .iter()
                    .map(|w| (w.as_str(), SeedClass::Positive)),
            )
            .collect();
        all.sort_unstable_by(|a, b| a.0.cmp(b.0));
        all.into_iter()
    }

    /// The same lexicon with class roles exchanged.
    pub fn swap_classes(&self) -> SeedLexicon {
        SeedLexicon {
            negative: self.positive.clone(),
            positive: self.negative.clone(),
        }
    }
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut words = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.split_whitespace().count() > 1 {
            return Err(Error::MultiWordEntry {
                path: path.to_path_buf(),
                line: idx + 1,
                entry: line.to_string(),
            });
        }
        words.push(line.to_string());
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> NormalizationPolicy {
        NormalizationPolicy::default()
    }

    #[test]
    fn builds_and_classifies() {
        let lex =
            SeedLexicon::new(["the", "of"], ["virus", "infection"], &policy()).unwrap();
        assert_eq!(lex.class_of("virus"), Some(SeedClass::Positive));
        assert_eq!(lex.class_of("the"), Some(SeedClass::Negative));
        assert_eq!(lex.class_of("unseen"), None);
        assert_eq!(lex.len(), 4);
    }

    #[test]
    fn normalizes_and_dedupes() {
        let lex = SeedLexicon::new(["The", "the", "THE"], ["Virus"], &policy()).unwrap();
        assert_eq!(lex.negative().len(), 1);
        assert_eq!(lex.class_of("virus"), Some(SeedClass::Positive));
    }

    #[test]
    fn rejects_empty_class() {
        let err = SeedLexicon::new(Vec::<&str>::new(), vec!["virus"], &policy()).unwrap_err();
        assert!(err.to_string().starts_with("empty seed class"), "{err}");
    }

    #[test]
    fn rejects_cross_class_overlap() {
        let err = SeedLexicon::new(["good", "bad"], ["good"], &policy()).unwrap_err();
        assert_eq!(err.to_string(), "word in both classes: good");
    }

    #[test]
    fn overlap_detected_after_normalization() {
        let err = SeedLexicon::new(["Good"], ["gOOD"], &policy()).unwrap_err();
        assert_eq!(err.to_string(), "word in both classes: good");
    }

    #[test]
    fn sorted_iteration_interleaves_classes() {
        let lex = SeedLexicon::new(["b", "d"], ["a", "c"], &policy()).unwrap();
        let order: Vec<&str> = lex.iter_all_sorted().map(|(w, _)| w).collect();
        assert_eq!(order, ["a", "b", "c", "d"]);
    }

    #[test]
    fn swap_exchanges_roles() {
        let lex = SeedLexicon::new(["x"], ["y"], &policy()).unwrap();
        let swapped = lex.swap_classes();
        assert_eq!(swapped.class_of("x"), Some(SeedClass::Positive));
        assert_eq!(swapped.class_of("y"), Some(SeedClass::Negative));
    }

    #[test]
    fn load_rejects_multi_word_lines() {
        let dir = tempfile::tempdir().unwrap();
        let neg = dir.path().join("neg.txt");
        let pos = dir.path().join("pos.txt");
        std::fs::write(&neg, "the\nof and\n").unwrap();
        std::fs::write(&pos, "virus\n").unwrap();
        let err = SeedLexicon::load(&neg, &pos, &policy()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("neg.txt:2"), "{msg}");
        assert!(msg.contains("multi-word entry"), "{msg}");
    }

    #[test]
    fn load_skips_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let neg = dir.path().join("neg.txt");
        let pos = dir.path().join("pos.txt");
        std::fs::write(&neg, "# function words\nthe\n\nof\n").unwrap();
        std::fs::write(&pos, "virus\n").unwrap();
        let lex = SeedLexicon::load(&neg, &pos, &policy()).unwrap();
        assert_eq!(lex.negative().len(), 2);
    }

    #[test]
    fn load_reports_empty_file_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let neg = dir.path().join("neg.txt");
        let pos = dir.path().join("pos.txt");
        std::fs::write(&neg, "# only comments\n").unwrap();
        std::fs::write(&pos, "virus\n").unwrap();
        let err = SeedLexicon::load(&neg, &pos, &policy()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("empty seed class"), "{msg}");
        assert!(msg.contains("neg.txt"), "{msg}");
    }
}
