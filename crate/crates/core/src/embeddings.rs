//! Word-embedding table loaded from text format.
//!
//! File layout: a header line `<count> <dim>` followed by one row per word,
//! `<word> <v1> ... <v_dim>`, whitespace-separated. Words are normalized on
//! load; when normalization collapses two rows to one key, the first row
//! wins and the collision is counted.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalize::NormalizationPolicy;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
    collisions: usize,
}

impl EmbeddingTable {
    /// Load from the text format. Line numbers in errors are 1-based with
    /// the header as line 1.
    pub fn load(path: &Path, policy: &NormalizationPolicy) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();

        let (_, header) = lines.next().ok_or_else(|| Error::EmbeddingHeader {
            path: path.to_path_buf(),
            detail: "empty file".to_string(),
        })?;
        let mut header_parts = header.split_whitespace();
        let count: usize = header_parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::EmbeddingHeader {
                path: path.to_path_buf(),
                detail: format!("expected `<count> <dim>`, got {header:?}"),
            })?;
        let dim: usize = header_parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::EmbeddingHeader {
                path: path.to_path_buf(),
                detail: format!("expected `<count> <dim>`, got {header:?}"),
            })?;
        if header_parts.next().is_some() {
            return Err(Error::EmbeddingHeader {
                path: path.to_path_buf(),
                detail: format!("expected `<count> <dim>`, got {header:?}"),
            });
        }
        if dim == 0 {
            return Err(Error::EmbeddingHeader {
                path: path.to_path_buf(),
                detail: "dimension must be positive".to_string(),
            });
        }

        let mut table = EmbeddingTable {
            dim,
            words: Vec::with_capacity(count),
            vectors: Vec::with_capacity(count * dim),
            index: HashMap::with_capacity(count),
            collisions: 0,
        };

        let mut rows = 0usize;
        for (idx, raw) in lines {
            let line_no = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let mut parts = raw.split_whitespace();
            let word = parts.next().expect("non-empty line has a first token");
            let mut vector = Vec::with_capacity(dim);
            for (j, tok) in parts.enumerate() {
                if j >= dim {
                    vector.push(f64::NAN); // overflow sentinel, length checked below
                    break;
                }
                let v: f64 = tok.parse().map_err(|_| Error::EmbeddingRow {
                    path: path.to_path_buf(),
                    line: line_no,
                    detail: format!("component {} is not a number: {tok:?}", j + 1),
                })?;
                if !v.is_finite() {
                    return Err(Error::EmbeddingRow {
                        path: path.to_path_buf(),
                        line: line_no,
                        detail: format!("component {} is not finite", j + 1),
                    });
                }
                vector.push(v);
            }
            if vector.len() != dim || vector.last().is_some_and(|v| v.is_nan()) {
                let got = if vector.last().is_some_and(|v| v.is_nan()) {
                    format!("more than {dim}")
                } else {
                    vector.len().to_string()
                };
                return Err(Error::EmbeddingRow {
                    path: path.to_path_buf(),
                    line: line_no,
                    detail: format!("expected {dim} components, got {got}"),
                });
            }
            rows += 1;
            let key = policy.apply(word);
            if table.index.contains_key(&key) {
                table.collisions += 1;
                continue;
            }
            let slot = table.words.len();
            table.index.insert(key.clone(), slot);
            table.words.push(key);
            table.vectors.extend_from_slice(&vector);
        }

        if rows != count {
            return Err(Error::EmbeddingRow {
                path: path.to_path_buf(),
                line: rows + 1,
                detail: format!("header declares {count} rows, file has {rows}"),
            });
        }

        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Rows dropped because normalization collapsed their word onto an
    /// earlier row's key.
    pub fn collisions(&self) -> usize {
        self.collisions
    }

    /// Vector for a normalized word.
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}
