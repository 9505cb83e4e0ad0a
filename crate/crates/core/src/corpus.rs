//! Per-entity documents and their segmentation into retrievable chunks.
//!
//! The corpus file is UTF-8 JSON-object-per-line with fields `entity_id`,
//! `title`, `text`. At most one document per entity; on duplicates the last
//! record wins and a warning count is returned. Chunking is a sliding window
//! over whitespace-tokenized words: a word is a maximal non-whitespace run,
//! no sentence-boundary logic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::kg::EntityId;

/// Default chunk window, in words.
pub const DEFAULT_CHUNK_SIZE_WORDS: usize = 100;
/// Default overlap between consecutive chunks, in words.
pub const DEFAULT_CHUNK_OVERLAP_WORDS: usize = 20;

/// One entity's document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "entity_id")]
    pub entity: EntityId,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
}

/// A contiguous word window of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub entity: EntityId,
    /// Ordinal of this chunk within its document, starting at 0.
    pub index: usize,
    pub text: String,
    /// Half-open word range `[start, end)` in the document's word sequence.
    pub word_span: (usize, usize),
}

/// Immutable map entity → document.
#[derive(Debug, Default, Clone)]
pub struct Corpus {
    docs: BTreeMap<EntityId, Document>,
}

/// A loaded corpus plus the number of duplicate-entity records that were
/// overwritten (last record wins).
#[derive(Debug)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub duplicate_warnings: usize,
}

impl Corpus {
    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Self {
        Self {
            docs: docs.into_iter().map(|d| (d.entity.clone(), d)).collect(),
        }
    }

    /// Load from a line-delimited JSON file.
    pub fn load(path: &Path) -> Result<LoadedCorpus, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut docs: BTreeMap<EntityId, Document> = BTreeMap::new();
        let mut duplicate_warnings = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CorpusError::BadRecord {
                    line: lineno,
                    message: e.to_string(),
                })?;
            if value.get("entity_id").and_then(|v| v.as_str()).is_none() {
                return Err(CorpusError::MissingEntityId { line: lineno });
            }
            let doc: Document =
                serde_json::from_value(value).map_err(|e| CorpusError::BadRecord {
                    line: lineno,
                    message: e.to_string(),
                })?;
            if docs.insert(doc.entity.clone(), doc).is_some() {
                duplicate_warnings += 1;
            }
        }
        Ok(LoadedCorpus {
            corpus: Corpus { docs },
            duplicate_warnings,
        })
    }

    pub fn get(&self, entity: &EntityId) -> Option<&Document> {
        self.docs.get(entity)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Split a document into overlapping word windows.
///
/// Stride is `size_words - overlap_words`; the final partial window is kept
/// when non-empty, and windows stop once one reaches the end of the text.
/// Empty text yields an empty list.
pub fn chunk_document(
    doc: &Document,
    size_words: usize,
    overlap_words: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    if size_words == 0 || overlap_words >= size_words {
        return Err(CorpusError::OverlapTooLarge {
            size: size_words,
            overlap: overlap_words,
        });
    }
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    let stride = size_words - overlap_words;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let end = (start + size_words).min(words.len());
        chunks.push(Chunk {
            entity: doc.entity.clone(),
            index: chunks.len(),
            text: words[start..end].join(" "),
            word_span: (start, end),
        });
        if end == words.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn doc(entity: &str, text: &str) -> Document {
        Document {
            entity: EntityId::from(entity),
            title: entity.to_owned(),
            text: text.to_owned(),
        }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_two_records() {
        let f = write_temp(
            "{\"entity_id\":\"a\",\"title\":\"A\",\"text\":\"alpha\"}\n\
             {\"entity_id\":\"b\",\"title\":\"B\",\"text\":\"beta\"}\n",
        );
        let loaded = Corpus::load(f.path()).unwrap();
        assert_eq!(loaded.corpus.len(), 2);
        assert_eq!(loaded.duplicate_warnings, 0);
    }

    #[test]
    fn load_duplicate_entity_last_wins() {
        let f = write_temp(
            "{\"entity_id\":\"a\",\"title\":\"A\",\"text\":\"first\"}\n\
             {\"entity_id\":\"a\",\"title\":\"A\",\"text\":\"second\"}\n",
        );
        let loaded = Corpus::load(f.path()).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.duplicate_warnings, 1);
        assert_eq!(loaded.corpus.get(&EntityId::from("a")).unwrap().text, "second");
    }

    #[test]
    fn load_keeps_empty_text() {
        let f = write_temp("{\"entity_id\":\"a\",\"title\":\"A\",\"text\":\"\"}\n");
        let loaded = Corpus::load(f.path()).unwrap();
        assert_eq!(loaded.corpus.get(&EntityId::from("a")).unwrap().text, "");
    }

    #[test]
    fn load_missing_entity_id_is_error() {
        let f = write_temp("{\"title\":\"A\",\"text\":\"x\"}\n");
        let err = Corpus::load(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingEntityId { line: 1 }));
    }

    #[test]
    fn chunk_spans_enumerated_by_hand() {
        // 10 words, size 4, overlap 2 → stride 2 → (0,4),(2,6),(4,8),(6,10)
        let d = doc("a", "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9");
        let chunks = chunk_document(&d, 4, 2).unwrap();
        let spans: Vec<_> = chunks.iter().map(|c| c.word_span).collect();
        assert_eq!(spans, vec![(0, 4), (2, 6), (4, 8), (6, 10)]);
        assert_eq!(chunks[1].text, "w2 w3 w4 w5");
        assert_eq!(chunks[1].index, 1);
    }

    #[test]
    fn chunk_short_text_single_window() {
        let d = doc("a", "w0 w1 w2");
        let chunks = chunk_document(&d, 4, 2).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].word_span, (0, 3));
    }

    #[test]
    fn chunk_empty_text_is_empty() {
        let d = doc("a", "");
        assert!(chunk_document(&d, 4, 2).unwrap().is_empty());
    }

    #[test]
    fn chunk_overlap_ge_size_is_error() {
        let d = doc("a", "x y z");
        assert!(chunk_document(&d, 4, 4).is_err());
        assert!(chunk_document(&d, 0, 0).is_err());
    }

    /// Brute-force window enumerator used as an independent oracle.
    fn enumerate_windows(n: usize, size: usize, stride: usize) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + size).min(n);
            spans.push((start, end));
            if end == n {
                break;
            }
            start += stride;
        }
        spans
    }

    proptest! {
        #[test]
        fn chunks_reconstruct_word_sequence(
            n in 0usize..200,
            size in 1usize..30,
            overlap_frac in 0usize..29,
        ) {
            let overlap = overlap_frac % size;
            let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let d = doc("a", &words.join(" "));
            let chunks = chunk_document(&d, size, overlap).unwrap();

            // Dropping each chunk's overlapping prefix reconstructs the text.
            let mut restored: Vec<String> = Vec::new();
            for c in &chunks {
                let (s, e) = c.word_span;
                let skip = restored.len().saturating_sub(s);
                let chunk_words: Vec<String> =
                    c.text.split_whitespace().map(str::to_owned).collect();
                prop_assert_eq!(chunk_words.len(), e - s);
                restored.extend(chunk_words.into_iter().skip(skip));
            }
            prop_assert_eq!(restored, words);
        }

        #[test]
        fn chunk_count_matches_closed_form_and_oracle(
            n in 0usize..200,
            size in 1usize..30,
            overlap_frac in 0usize..29,
        ) {
            let overlap = overlap_frac % size;
            let stride = size - overlap;
            let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let d = doc("a", &words.join(" "));
            let chunks = chunk_document(&d, size, overlap).unwrap();

            let oracle = enumerate_windows(n, size, stride);
            let spans: Vec<_> = chunks.iter().map(|c| c.word_span).collect();
            prop_assert_eq!(&spans, &oracle);

            // Closed form: ceil((n-overlap)/stride), floored at one window
            // for non-empty text (the first window always exists).
            let expected = if n == 0 {
                0
            } else {
                ((n.saturating_sub(overlap)) + stride - 1) / stride
            }
            .max(usize::from(n > 0));
            prop_assert_eq!(chunks.len(), expected);
        }
    }
}
