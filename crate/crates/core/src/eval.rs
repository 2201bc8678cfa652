//! Scoring predictions against held-out gold labels.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{LabelArray, RoleLabel, NUM_CLASSES};
use crate::prediction::Prediction;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no prediction for masked sentence {0}")]
    Missing(usize),
    #[error("prediction for sentence {0}, which is not masked")]
    Extra(usize),
    #[error("duplicate prediction for sentence {0}")]
    Duplicate(usize),
    #[error("masked sentence {0} has no gold label")]
    NoGold(usize),
    #[error("nothing to evaluate: no masked sentences")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: RoleLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(rename = "model")]
    pub model_name: String,
    pub n_eval: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores `predictions` over exactly the `masked_indices` of `gold`.
///
/// Macro-F1 averages over classes that occur in the gold labels or the
/// predictions; a class absent from both has no defined F1 and is skipped.
pub fn evaluate(
    model_name: &str,
    predictions: &[Prediction],
    gold: &LabelArray,
    masked_indices: &[usize],
) -> Result<EvalReport, EvalError> {
    if masked_indices.is_empty() {
        return Err(EvalError::Empty);
    }
    let wanted: HashSet<usize> = masked_indices.iter().copied().collect();
    let mut seen = HashSet::with_capacity(predictions.len());
    let mut confusion = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for p in predictions {
        if !wanted.contains(&p.index) {
            return Err(EvalError::Extra(p.index));
        }
        if !seen.insert(p.index) {
            return Err(EvalError::Duplicate(p.index));
        }
        let g = gold.assignment(p.index).ok_or(EvalError::NoGold(p.index))?;
        confusion[g.code()][p.label.code()] += 1;
    }
    if let Some(&missing) = masked_indices.iter().find(|i| !seen.contains(i)) {
        return Err(EvalError::Missing(missing));
    }

    let n_eval = predictions.len() as u64;
    let trace: u64 = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    let mut f1_sum = 0.0;
    let mut f1_count = 0usize;
    for label in RoleLabel::ALL {
        let c = label.code();
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if support > 0 || predicted > 0 {
            f1_sum += f1;
            f1_count += 1;
        }
        per_class.push(ClassMetrics {
            label,
            precision,
            recall,
            f1,
            support,
        });
    }

    Ok(EvalReport {
        model_name: model_name.to_string(),
        n_eval,
        accuracy: ratio(trace, n_eval),
        macro_f1: f1_sum / f1_count as f64,
        per_class,
        confusion,
    })
}

/// Summary table in the style of a results table: one row per model with
/// accuracy as a percentage and macro-F1, both at two decimals.
pub fn render_summary(reports: &[EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.model_name.len())
        .chain(["Model".len()])
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    writeln!(out, "{:<width$}  {:>8}  {:>8}", "Model", "Accuracy", "Macro-F1").unwrap();
    writeln!(out, "{}", "-".repeat(width + 20)).unwrap();
    for r in reports {
        writeln!(
            out,
            "{:<width$}  {:>7.2}%  {:>8.2}",
            r.model_name,
            r.accuracy * 100.0,
            r.macro_f1
        )
        .unwrap();
    }
    out
}

/// Per-class breakdown and confusion matrix for one report.
pub fn render_detail(r: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "== {} (n_eval = {}) ==", r.model_name, r.n_eval).unwrap();
    writeln!(
        out,
        "{:<15} {:>9} {:>9} {:>9} {:>8}",
        "class", "precision", "recall", "f1", "support"
    )
    .unwrap();
    for m in &r.per_class {
        writeln!(
            out,
            "{:<15} {:>9.2} {:>9.2} {:>9.2} {:>8}",
            m.label.name(),
            m.precision,
            m.recall,
            m.f1,
            m.support
        )
        .unwrap();
    }
    writeln!(out, "confusion (rows = gold, columns = predicted):").unwrap();
    let header: Vec<String> = (0..NUM_CLASSES).map(|c| format!("{c:>3}")).collect();
    writeln!(out, "   {}", header.join(" ")).unwrap();
    for (c, row) in r.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>3}")).collect();
        writeln!(out, "{c:>2} {}", cells.join(" ")).unwrap();
    }
    out
}

pub fn report_json(r: &EvalReport) -> String {
    serde_json::to_string(r).expect("report serializes")
}
