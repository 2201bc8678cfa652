//! Context-window preprocessing.
//!
//! Each sentence becomes a 5-slot input `[prev2, prev1, target, next1, next2]`
//! joined by a separator token; slots past either end of the document hold a
//! pad token. Sentences can first be cleaned of stopwords.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::SentenceRecord;

pub const DEFAULT_PAD: &str = "<pad>";
pub const DEFAULT_SEPARATOR: &str = "</s>";
pub const WINDOW_SLOTS: usize = 5;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("sentence index {index} out of range for a document of {len} sentences")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("records out of order at position {position}: {message}")]
    Ordering { position: usize, message: String },
    #[error("stopword list is empty")]
    EmptyStopwords,
    #[error("invalid stopword {0:?}: entries must be single lowercase words")]
    BadStopword(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercase stopword set.
#[derive(Debug, Clone, PartialEq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    pub fn new<I, S>(words: I) -> Result<Self, ContextError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || w.chars().any(char::is_whitespace) || w.to_lowercase() != w {
                return Err(ContextError::BadStopword(w.to_string()));
            }
            set.insert(w.to_string());
        }
        if set.is_empty() {
            return Err(ContextError::EmptyStopwords);
        }
        Ok(Self { words: set })
    }

    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(BUNDLED_STOPWORDS).expect("bundled stopword list is valid")
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ContextError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ContextError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ContextError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Drops whitespace tokens whose lowercase, punctuation-trimmed form is a
/// stopword. Surviving tokens keep their original spelling.
pub fn strip_stopwords(text: &str, sw: &StopwordList) -> String {
    text.split_whitespace()
        .filter(|tok| {
            let core = tok.trim_matches(|c: char| !c.is_alphanumeric());
            !sw.contains(&core.to_lowercase())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Pad and separator tokens used when rendering windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowStyle {
    pub pad_token: String,
    pub separator: String,
}

impl Default for WindowStyle {
    fn default() -> Self {
        Self {
            pad_token: DEFAULT_PAD.to_string(),
            separator: DEFAULT_SEPARATOR.to_string(),
        }
    }
}

impl WindowStyle {
    pub fn with_pad(pad_token: impl Into<String>) -> Self {
        Self {
            pad_token: pad_token.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextWindow {
    pub target_doc: String,
    pub target_index: usize,
    pub slots: [String; WINDOW_SLOTS],
    pub rendered: String,
}

impl ContextWindow {
    /// Number of slots holding the pad token, target excluded.
    pub fn pad_count(&self, pad_token: &str) -> usize {
        self.slots
            .iter()
            .enumerate()
            .filter(|&(s, v)| s != 2 && v == pad_token)
            .count()
    }
}

pub fn build_window<S: AsRef<str>>(
    doc_id: &str,
    doc: &[S],
    i: usize,
    style: &WindowStyle,
) -> Result<ContextWindow, ContextError> {
    if i >= doc.len() {
        return Err(ContextError::IndexOutOfRange {
            index: i,
            len: doc.len(),
        });
    }
    let slot = |offset: isize| -> String {
        i.checked_add_signed(offset)
            .and_then(|j| doc.get(j))
            .map_or_else(|| style.pad_token.clone(), |s| s.as_ref().to_string())
    };
    let slots = [slot(-2), slot(-1), slot(0), slot(1), slot(2)];
    let rendered = slots.join(&format!(" {} ", style.separator));
    Ok(ContextWindow {
        target_doc: doc_id.to_string(),
        target_index: i,
        slots,
        rendered,
    })
}

/// One line of windowed JSONL output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindowRecord {
    pub doc_id: String,
    pub sent_index: usize,
    pub input: String,
}

/// Splits records into per-document runs, checking that each document is
/// contiguous and its indices run 0, 1, 2, ...
fn document_runs(records: &[SentenceRecord]) -> Result<Vec<&[SentenceRecord]>, ContextError> {
    let mut runs = Vec::new();
    let mut seen = HashSet::new();
    let mut start = 0;
    for (pos, r) in records.iter().enumerate() {
        if pos > start && r.doc_id != records[start].doc_id {
            runs.push(&records[start..pos]);
            start = pos;
        }
        if pos == start && !seen.insert(r.doc_id.as_str()) {
            return Err(ContextError::Ordering {
                position: pos,
                message: format!("document {:?} appears in more than one run", r.doc_id),
            });
        }
        if r.sent_index != pos - start {
            return Err(ContextError::Ordering {
                position: pos,
                message: format!(
                    "document {:?}: expected sent_index {}, found {}",
                    r.doc_id,
                    pos - start,
                    r.sent_index
                ),
            });
        }
    }
    if start < records.len() {
        runs.push(&records[start..]);
    }
    Ok(runs)
}

/// Windows every sentence of a grouped, ordered corpus. `stopwords = None`
/// skips cleaning. Output follows input order.
pub fn windowize_corpus(
    records: &[SentenceRecord],
    stopwords: Option<&StopwordList>,
    style: &WindowStyle,
) -> Result<Vec<WindowRecord>, ContextError> {
    let runs = document_runs(records)?;
    let per_doc: Vec<Vec<WindowRecord>> = runs
        .par_iter()
        .map(|run| {
            let cleaned: Vec<String> = run
                .iter()
                .map(|r| match stopwords {
                    Some(sw) => strip_stopwords(&r.text, sw),
                    None => r.text.clone(),
                })
                .collect();
            let doc_id = &run[0].doc_id;
            (0..run.len())
                .map(|i| {
                    let w = build_window(doc_id, &cleaned, i, style)?;
                    Ok(WindowRecord {
                        doc_id: w.target_doc,
                        sent_index: i,
                        input: w.rendered,
                    })
                })
                .collect::<Result<Vec<_>, ContextError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}
