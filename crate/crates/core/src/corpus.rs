//! Corpus data model and on-disk formats.
//!
//! - corpus: JSON lines, one [`SentenceRecord`] per line
//! - embeddings: `EMB1` binary (magic, rows u32 LE, dims u32 LE, f32 LE row-major)
//! - partition: JSON object `doc_id -> "train" | "eval"`
//! - labels: JSON object holding a serialized [`LabelArray`]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::Dense;

/// Number of rhetorical role classes.
pub const NUM_CLASSES: usize = 13;

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown role label {0:?}")]
    Taxonomy(String),
    #[error("duplicate sentence ({doc_id}, {sent_index})")]
    DuplicateKey { doc_id: String, sent_index: usize },
    #[error("document {doc_id}: sentence indices are not contiguous from 0 (missing {missing})")]
    NonContiguous { doc_id: String, missing: usize },
    #[error("embedding file has bad magic bytes {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("embedding file truncated or oversized: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid embedding shape {rows}x{dims}")]
    BadShape { rows: usize, dims: usize },
    #[error("sentence {index} ({doc_id}) is in the train partition but has no label")]
    MissingLabel { index: usize, doc_id: String },
    #[error("no supervision available: every document is in the eval partition")]
    NoSupervision,
    #[error("partition names unknown document {0:?}")]
    UnknownDocument(String),
    #[error("document {0:?} is not assigned to a partition")]
    UnassignedDocument(String),
    #[error("invalid partition value {value:?} for {doc_id:?} (expected \"train\" or \"eval\")")]
    BadPartition { doc_id: String, value: String },
    #[error("invalid label file: {0}")]
    BadLabels(String),
}

fn io_err(path: &Path, source: io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The 13 rhetorical roles, with codes 0..=12 in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum RoleLabel {
    Preamble = 0,
    Fac,
    Rlc,
    Issue,
    ArgPetitioner,
    ArgRespondent,
    Analysis,
    Sta,
    PreRelied,
    PreNotRelied,
    Ratio,
    Rpc,
    None,
}

impl RoleLabel {
    pub const ALL: [RoleLabel; NUM_CLASSES] = [
        RoleLabel::Preamble,
        RoleLabel::Fac,
        RoleLabel::Rlc,
        RoleLabel::Issue,
        RoleLabel::ArgPetitioner,
        RoleLabel::ArgRespondent,
        RoleLabel::Analysis,
        RoleLabel::Sta,
        RoleLabel::PreRelied,
        RoleLabel::PreNotRelied,
        RoleLabel::Ratio,
        RoleLabel::Rpc,
        RoleLabel::None,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// Canonical upper-case name.
    pub fn name(self) -> &'static str {
        match self {
            RoleLabel::Preamble => "PREAMBLE",
            RoleLabel::Fac => "FAC",
            RoleLabel::Rlc => "RLC",
            RoleLabel::Issue => "ISSUE",
            RoleLabel::ArgPetitioner => "ARG_PETITIONER",
            RoleLabel::ArgRespondent => "ARG_RESPONDENT",
            RoleLabel::Analysis => "ANALYSIS",
            RoleLabel::Sta => "STA",
            RoleLabel::PreRelied => "PRE_RELIED",
            RoleLabel::PreNotRelied => "PRE_NOT_RELIED",
            RoleLabel::Ratio => "RATIO",
            RoleLabel::Rpc => "RPC",
            RoleLabel::None => "NONE",
        }
    }
}

impl fmt::Display for RoleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoleLabel {
    type Err = CorpusError;

    /// Case-insensitive, so the mixed-case spellings `Ratio` and `None` parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CorpusError::Taxonomy(s.to_string()))
    }
}

impl Serialize for RoleLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RoleLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One sentence of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub doc_id: String,
    pub sent_index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<RoleLabel>,
}

/// Reads a JSONL corpus. Global sentence index is the 0-based line number;
/// blank lines are not allowed.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_corpus(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<SentenceRecord>, CorpusError> {
    #[derive(Deserialize)]
    struct Raw {
        doc_id: String,
        sent_index: usize,
        text: String,
        #[serde(default)]
        label: Option<String>,
    }

    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(Path::new("<corpus>"), e))?;
        let raw: Raw = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let label = raw.label.map(|s| s.parse()).transpose()?;
        records.push(SentenceRecord {
            doc_id: raw.doc_id,
            sent_index: raw.sent_index,
            text: raw.text,
            label,
        });
    }
    validate_records(&records)?;
    Ok(records)
}

/// Checks key uniqueness and per-document index contiguity.
pub fn validate_records(records: &[SentenceRecord]) -> Result<(), CorpusError> {
    let mut seen: HashSet<(&str, usize)> = HashSet::with_capacity(records.len());
    let mut per_doc: HashMap<&str, usize> = HashMap::new();
    for r in records {
        if !seen.insert((r.doc_id.as_str(), r.sent_index)) {
            return Err(CorpusError::DuplicateKey {
                doc_id: r.doc_id.clone(),
                sent_index: r.sent_index,
            });
        }
        *per_doc.entry(r.doc_id.as_str()).or_default() += 1;
    }
    // With unique keys, contiguity from 0 holds iff every index is below the count.
    for r in records {
        let count = per_doc[r.doc_id.as_str()];
        if r.sent_index >= count {
            let missing = (0..count)
                .find(|i| !seen.contains(&(r.doc_id.as_str(), *i)))
                .unwrap_or(0);
            return Err(CorpusError::NonContiguous {
                doc_id: r.doc_id.clone(),
                missing,
            });
        }
    }
    Ok(())
}

pub fn write_corpus(records: &[SentenceRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Sentence embeddings, one row per corpus sentence, stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self, CorpusError> {
        if rows == 0 || dims == 0 || data.len() != rows * dims {
            return Err(CorpusError::BadShape { rows, dims });
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(CorpusError::NonFinite {
                row: p / dims,
                col: p % dims,
            });
        }
        Ok(Self { rows, dims, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, CorpusError> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(CorpusError::BadShape {
                rows: rows.len(),
                dims,
            });
        }
        Self::new(rows.len(), dims, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Widens to a dense `f64` matrix for the models.
    pub fn to_dense(&self) -> Dense {
        Dense::from_vec(
            self.rows,
            self.dims,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(EMB_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        if bytes.len() < EMB_HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != EMB_MAGIC {
                return Err(CorpusError::BadMagic(bytes[..4].to_vec()));
            }
            return Err(CorpusError::Truncated {
                expected: EMB_HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != EMB_MAGIC {
            return Err(CorpusError::BadMagic(bytes[..4].to_vec()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dims = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = rows
            .checked_mul(dims)
            .and_then(|c| c.checked_mul(4))
            .and_then(|c| c.checked_add(EMB_HEADER_LEN))
            .ok_or(CorpusError::BadShape { rows, dims })?;
        if bytes.len() != expected {
            return Err(CorpusError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let data: Vec<f32> = bytes[EMB_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, dims, data)
    }
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, m.to_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, CorpusError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Eval,
}

/// Assignment of every document to the train or eval side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionSpec(pub BTreeMap<String, Partition>);

impl PartitionSpec {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| CorpusError::Parse {
                line: e.line().saturating_sub(1),
                message: e.to_string(),
            })?;
        let mut out = BTreeMap::new();
        for (doc_id, value) in raw {
            let p = match value.as_str() {
                "train" => Partition::Train,
                "eval" => Partition::Eval,
                _ => return Err(CorpusError::BadPartition { doc_id, value }),
            };
            out.insert(doc_id, p);
        }
        Ok(Self(out))
    }

    pub fn get(&self, doc_id: &str) -> Option<Partition> {
        self.0.get(doc_id).copied()
    }
}

/// Per-sentence labels plus a mask of hidden (to-be-predicted) sentences.
///
/// Masked sentences keep their true label in `assignments` so they can be
/// scored later; [`LabelArray::onehot`] never exposes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelArray {
    assignments: Vec<Option<RoleLabel>>,
    mask: Vec<bool>,
}

impl LabelArray {
    pub fn new(assignments: Vec<Option<RoleLabel>>, mask: Vec<bool>) -> Result<Self, CorpusError> {
        let la = Self { assignments, mask };
        la.validate()?;
        Ok(la)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.assignments.len() != self.mask.len() {
            return Err(CorpusError::BadLabels(format!(
                "{} assignments but {} mask entries",
                self.assignments.len(),
                self.mask.len()
            )));
        }
        if let Some(i) = (0..self.len()).find(|&i| !self.mask[i] && self.assignments[i].is_none()) {
            return Err(CorpusError::BadLabels(format!(
                "sentence {i} is unmasked but unlabeled"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        NUM_CLASSES
    }

    pub fn assignment(&self, i: usize) -> Option<RoleLabel> {
        self.assignments[i]
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Class codes visible to training: `Some(code)` on unmasked rows.
    pub fn train_targets(&self) -> Vec<Option<usize>> {
        self.assignments
            .iter()
            .zip(&self.mask)
            .map(|(a, &m)| if m { None } else { a.map(RoleLabel::code) })
            .collect()
    }

    /// `n × 13` supervision matrix; masked rows are zero.
    pub fn onehot(&self) -> Dense {
        let mut y = Dense::zeros(self.len(), NUM_CLASSES);
        for (i, t) in self.train_targets().into_iter().enumerate() {
            if let Some(c) = t {
                y.set(i, c, 1.0);
            }
        }
        y
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let la: Self =
            serde_json::from_str(&text).map_err(|e| CorpusError::BadLabels(e.to_string()))?;
        la.validate()?;
        Ok(la)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("labels serialize")
    }
}

/// Combines all documents into one label array, masking the eval side.
/// Returns the array and the masked (eval) indices in ascending order.
pub fn split_mask(
    records: &[SentenceRecord],
    spec: &PartitionSpec,
) -> Result<(LabelArray, Vec<usize>), CorpusError> {
    let docs: HashSet<&str> = records.iter().map(|r| r.doc_id.as_str()).collect();
    if let Some(unknown) = spec.0.keys().find(|d| !docs.contains(d.as_str())) {
        return Err(CorpusError::UnknownDocument(unknown.clone()));
    }
    let mut assignments = Vec::with_capacity(records.len());
    let mut mask = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let part = spec
            .get(&r.doc_id)
            .ok_or_else(|| CorpusError::UnassignedDocument(r.doc_id.clone()))?;
        if part == Partition::Train && r.label.is_none() {
            return Err(CorpusError::MissingLabel {
                index: i,
                doc_id: r.doc_id.clone(),
            });
        }
        assignments.push(r.label);
        mask.push(part == Partition::Eval);
    }
    if !records.is_empty() && mask.iter().all(|&m| m) {
        return Err(CorpusError::NoSupervision);
    }
    let la = LabelArray::new(assignments, mask)?;
    let masked = la.masked_indices();
    Ok((la, masked))
}
