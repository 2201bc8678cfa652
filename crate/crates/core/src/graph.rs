//! Thresholded cosine-similarity graph over sentence embeddings.
//!
//! An undirected edge `(i, j)` exists iff `cos(x_i, x_j) > threshold`, and its
//! weight is the cosine itself. The graph never stores self-edges; the GCN
//! normalization adds unit self-loops on its own.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::EmbeddingMatrix;
use crate::linalg::{Csr, ExactSum};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vectors have different lengths ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("embedding row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("threshold {0} outside [0, 1)")]
    BadThreshold(f64),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("graph file line {line}: {message}")]
    Format { line: usize, message: String },
}

fn format_err(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Format {
        line,
        message: message.into(),
    }
}

/// Cosine similarity with `f64` accumulation, clamped to `[-1, 1]`.
pub fn cosine(x: &[f32], y: &[f32]) -> Result<f64, GraphError> {
    if x.len() != y.len() {
        return Err(GraphError::Dimension(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(GraphError::ZeroNorm);
    }
    let (mut dot, mut xx, mut yy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(GraphError::ZeroNorm);
    }
    Ok((dot / (xx.sqrt() * yy.sqrt())).clamp(-1.0, 1.0))
}

/// Weighted undirected sentence graph stored as its upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceGraph {
    n: usize,
    threshold: f64,
    /// `(i, j, w)` with `i < j`, sorted lexicographically by `(i, j)`.
    edges: Vec<(usize, usize, f64)>,
    degree: Vec<f64>,
}

impl SentenceGraph {
    /// Validates and sorts the edge list, then derives the degree vector.
    pub fn from_edges(
        n: usize,
        threshold: f64,
        mut edges: Vec<(usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        if !(0.0..1.0).contains(&threshold) {
            return Err(GraphError::BadThreshold(threshold));
        }
        for (k, &(i, j, w)) in edges.iter().enumerate() {
            if i >= j {
                return Err(format_err(k, format!("edge ({i}, {j}) must have i < j")));
            }
            if j >= n {
                return Err(format_err(k, format!("edge ({i}, {j}) out of range for n={n}")));
            }
            if !(w > threshold && w <= 1.0) {
                return Err(format_err(
                    k,
                    format!("weight {w} not in ({threshold}, 1]"),
                ));
            }
        }
        edges.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(k) = edges.windows(2).position(|p| (p[0].0, p[0].1) == (p[1].0, p[1].1)) {
            return Err(format_err(
                k + 1,
                format!("duplicate edge ({}, {})", edges[k].0, edges[k].1),
            ));
        }
        Ok(Self::from_sorted_unchecked(n, threshold, edges))
    }

    fn from_sorted_unchecked(n: usize, threshold: f64, edges: Vec<(usize, usize, f64)>) -> Self {
        // Correctly rounded row sums: independent of node numbering.
        let mut acc = vec![ExactSum::new(); n];
        for &(i, j, w) in &edges {
            acc[i].add(w);
            acc[j].add(w);
        }
        let degree = acc.iter().map(ExactSum::value).collect();
        Self {
            n,
            threshold,
            edges,
            degree,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// `A_ij`, symmetric in its arguments, zero on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        if key.0 == key.1 {
            return 0.0;
        }
        self.edges
            .binary_search_by_key(&key, |&(a, b, _)| (a, b))
            .map_or(0.0, |p| self.edges[p].2)
    }

    /// Full symmetric adjacency as CSR.
    pub fn adjacency(&self) -> Csr {
        let mut trip = Vec::with_capacity(2 * self.edges.len());
        for &(i, j, w) in &self.edges {
            trip.push((i, j, w));
            trip.push((j, i, w));
        }
        Csr::from_triplets(self.n, self.n, &trip)
    }

    pub fn to_sgraph(&self) -> String {
        let mut out = format!("#SGRAPH1 n={} threshold={}\n", self.n, self.threshold);
        for &(i, j, w) in &self.edges {
            writeln!(out, "{i}\t{j}\t{w}").unwrap();
        }
        out
    }

    pub fn from_sgraph(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| format_err(0, "empty file"))?;
        let (n, threshold) = parse_header(header)?;
        if !(0.0..1.0).contains(&threshold) {
            return Err(GraphError::BadThreshold(threshold));
        }
        let mut edges = Vec::new();
        let mut prev: Option<(usize, usize)> = None;
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(format_err(lineno, "expected i<TAB>j<TAB>weight"));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|_| format_err(lineno, format!("bad index {:?}", fields[0])))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|_| format_err(lineno, format!("bad index {:?}", fields[1])))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| format_err(lineno, format!("bad weight {:?}", fields[2])))?;
            if i >= j {
                return Err(format_err(lineno, format!("ordering: expected i < j, got {i} >= {j}")));
            }
            if j >= n {
                return Err(format_err(lineno, format!("index {j} out of range for n={n}")));
            }
            if !(w > threshold && w <= 1.0) {
                return Err(format_err(
                    lineno,
                    format!("weight {w} not in ({threshold}, 1]"),
                ));
            }
            if prev.is_some_and(|p| p >= (i, j)) {
                return Err(format_err(lineno, "edges must be strictly increasing by (i, j)"));
            }
            prev = Some((i, j));
            edges.push((i, j, w));
        }
        Ok(Self::from_sorted_unchecked(n, threshold, edges))
    }
}

fn parse_header(line: &str) -> Result<(usize, f64), GraphError> {
    let bad = || format_err(0, format!("bad header {line:?}"));
    let mut parts = line.split(' ');
    if parts.next() != Some("#SGRAPH1") {
        return Err(bad());
    }
    let n = parts
        .next()
        .and_then(|p| p.strip_prefix("n="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    let t = parts
        .next()
        .and_then(|p| p.strip_prefix("threshold="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((n, t))
}

pub fn write_graph(g: &SentenceGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    fs::write(path, g.to_sgraph()).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<SentenceGraph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SentenceGraph::from_sgraph(&text)
}

/// Exact all-pairs construction. Rows are scanned in parallel; each pair is
/// evaluated once, so the output is independent of how work is split.
pub fn build_graph(m: &EmbeddingMatrix, threshold: f64) -> Result<SentenceGraph, GraphError> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(GraphError::BadThreshold(threshold));
    }
    let n = m.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| m.row(i).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(GraphError::ZeroNormRow(i));
    }

    let per_row: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &rows[i];
            let mut out = Vec::new();
            for j in i + 1..n {
                let dot: f64 = xi.iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let c = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                if c > threshold {
                    out.push((i, j, c));
                }
            }
            out
        })
        .collect();
    let edges = per_row.into_iter().flatten().collect();
    Ok(SentenceGraph::from_sorted_unchecked(n, threshold, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// `D^{-1/2} A D^{-1/2}`; isolated nodes keep zero rows.
    Diffusion,
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree of `A + I`.
    Gcn,
}

/// Symmetrically normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    mode: NormMode,
    matrix: Csr,
    isolated: Vec<usize>,
}

impl NormalizedGraph {
    pub fn mode(&self) -> NormMode {
        self.mode
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Nodes with zero degree in the underlying graph.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }
}

pub fn normalize(g: &SentenceGraph, mode: NormMode) -> NormalizedGraph {
    let isolated: Vec<usize> = (0..g.n()).filter(|&i| g.degree()[i] == 0.0).collect();
    let mut trip = Vec::with_capacity(2 * g.edges().len() + g.n());
    match mode {
        NormMode::Diffusion => {
            let d = g.degree();
            for &(i, j, w) in g.edges() {
                let v = w / (d[i] * d[j]).sqrt();
                trip.push((i, j, v));
                trip.push((j, i, v));
            }
        }
        NormMode::Gcn => {
            let d: Vec<f64> = g.degree().iter().map(|v| v + 1.0).collect();
            for i in 0..g.n() {
                trip.push((i, i, 1.0 / d[i]));
            }
            for &(i, j, w) in g.edges() {
                let v = w / (d[i] * d[j]).sqrt();
                trip.push((i, j, v));
                trip.push((j, i, v));
            }
        }
    }
    NormalizedGraph {
        mode,
        matrix: Csr::from_triplets(g.n(), g.n(), &trip),
        isolated,
    }
}
