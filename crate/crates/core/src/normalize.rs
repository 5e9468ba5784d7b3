//! Word normalization shared by lexicons, embeddings, and the tokenizer.
//!
//! All word lookups in the pipeline go through the same policy so a seed
//! word, an embedding row, and a corpus token agree on their key form.

use unicode_normalization::UnicodeNormalization;

/// Normalization applied to every word before lookup or comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NormalizationPolicy {
    /// Lowercase after Unicode NFC normalization.
    pub lowercase: bool,
    /// Drop combining marks after NFD decomposition (accent stripping).
    pub strip_accents: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy {
            lowercase: true,
            strip_accents: false,
        }
    }
}

impl NormalizationPolicy {
    /// Normalize one word: NFC, then optional lowercasing, then optional
    /// accent stripping. Surrounding whitespace is trimmed.
    pub fn apply(&self, word: &str) -> String {
        let trimmed = word.trim();
        let mut out: String = trimmed.nfc().collect();
        if self.lowercase {
            out = out.to_lowercase();
        }
        if self.strip_accents {
            out = out
                .nfd()
                .filter(|c| !is_combining_mark(*c))
                .collect::<String>()
                .nfc()
                .collect();
        }
        out
    }
}

fn is_combining_mark(c: char) -> bool {
    // Unicode combining-mark blocks commonly produced by NFD decomposition.
    matches!(c,
        '\u{0300}'..='\u{036F}'
        | '\u{1AB0}'..='\u{1AFF}'
        | '\u{1DC0}'..='\u{1DFF}'
        | '\u{20D0}'..='\u{20FF}'
        | '\u{FE20}'..='\u{FE2F}')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lowercases_and_keeps_accents() {
        let p = NormalizationPolicy::default();
        assert_eq!(p.apply("Virus"), "virus");
        assert_eq!(p.apply("  Sp읽ead  ".trim()), "sp읽ead");
        assert_eq!(p.apply("Café"), "café");
    }

    #[test]
    fn strip_accents_removes_combining_marks() {
        let p = NormalizationPolicy {
            lowercase: true,
            strip_accents: true,
        };
        assert_eq!(p.apply("Café"), "cafe");
        assert_eq!(p.apply("naïve"), "naive");
    }

    #[test]
    fn nfc_unifies_composed_and_decomposed_forms() {
        let p = NormalizationPolicy::default();
        let composed = "caf\u{00E9}";
        let decomposed = "cafe\u{0301}";
        assert_eq!(p.apply(composed), p.apply(decomposed));
    }

    #[test]
    fn trims_whitespace() {
        let p = NormalizationPolicy::default();
        assert_eq!(p.apply("  word\t"), "word");
    }
}
