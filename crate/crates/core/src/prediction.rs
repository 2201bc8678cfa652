//! Per-sentence predictions shared by both models, and their JSONL form.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::RoleLabel;
use crate::linalg::Dense;

/// One predicted sentence. `undecided` marks rows with no score mass; those
/// are reported as `NONE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: RoleLabel,
    pub scores: Vec<f64>,
    pub undecided: bool,
}

/// Index of the largest entry; ties go to the lowest index. `None` if the
/// row is all zeros (or empty).
pub fn argmax(row: &[f64]) -> Option<usize> {
    if row.iter().all(|&v| v == 0.0) {
        return None;
    }
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    Some(best)
}

/// Argmax prediction for each requested row of a score matrix.
pub fn predict_rows(scores: &Dense, indices: &[usize]) -> Vec<Prediction> {
    indices
        .iter()
        .map(|&i| {
            let row = scores.row(i);
            let (label, undecided) = match argmax(row).and_then(RoleLabel::from_code) {
                Some(l) => (l, false),
                None => (RoleLabel::None, true),
            };
            Prediction {
                index: i,
                label,
                scores: row.to_vec(),
                undecided,
            }
        })
        .collect()
}

pub fn write_predictions<W: Write>(mut w: W, preds: &[Prediction]) -> io::Result<()> {
    for p in preds {
        let line = serde_json::to_string(p).map_err(io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<Prediction>, String> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction =
            serde_json::from_str(&line).map_err(|e| format!("line {lineno}: {e}"))?;
        out.push(p);
    }
    Ok(out)
}
