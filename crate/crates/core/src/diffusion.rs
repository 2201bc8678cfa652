//! Semi-supervised label diffusion.
//!
//! Scores evolve as `F ← α·P·F + (1 − α)·Y` from `F = Y`, whose fixed point is
//! `F* = (1 − α)(I − αP)⁻¹ Y`. The iterative route only needs sparse products;
//! the closed form solves the dense system directly.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{NormMode, NormalizedGraph};
use crate::linalg::Dense;
use crate::prediction::{predict_rows, Prediction};

/// Largest graph accepted by [`diffuse_closed_form`].
pub const CLOSED_FORM_MAX_NODES: usize = 20_000;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTol(f64),
    #[error("max_iters must be at least 1")]
    BadMaxIters,
    #[error("graph has {graph} nodes but label matrix has {labels} rows")]
    Dimension { graph: usize, labels: usize },
    #[error("diffusion requires a diffusion-normalized graph")]
    WrongMode,
    #[error("{0} nodes exceeds the closed-form limit of {CLOSED_FORM_MAX_NODES}; use the iterative solver")]
    TooLarge(usize),
    #[error("linear system (I - alpha P) is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            max_iters: 1000,
            tol: 1e-8,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DiffusionError::BadAlpha(self.alpha));
        }
        if !(self.tol > 0.0) {
            return Err(DiffusionError::BadTol(self.tol));
        }
        if self.max_iters == 0 {
            return Err(DiffusionError::BadMaxIters);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionResult {
    /// `n × k` score matrix.
    pub scores: Dense,
    /// Iterations performed; 0 for the closed form.
    pub iterations_run: usize,
    pub converged: bool,
    /// Nodes whose score row is entirely zero.
    pub undecided: Vec<usize>,
}

impl DiffusionResult {
    fn new(scores: Dense, iterations_run: usize, converged: bool) -> Self {
        let undecided = (0..scores.rows())
            .filter(|&i| scores.row(i).iter().all(|&v| v == 0.0))
            .collect();
        Self {
            scores,
            iterations_run,
            converged,
            undecided,
        }
    }

    /// `max |α·P·F + (1 − α)·Y − F|` for the stored scores.
    pub fn fixed_point_residual(&self, p: &NormalizedGraph, y: &Dense, alpha: f64) -> f64 {
        step(p, &self.scores, y, alpha).max_abs_diff(&self.scores)
    }
}

fn check_inputs(p: &NormalizedGraph, y: &Dense, cfg: &DiffusionConfig) -> Result<(), DiffusionError> {
    cfg.validate()?;
    if p.mode() != NormMode::Diffusion {
        return Err(DiffusionError::WrongMode);
    }
    if p.n() != y.rows() {
        return Err(DiffusionError::Dimension {
            graph: p.n(),
            labels: y.rows(),
        });
    }
    Ok(())
}

fn step(p: &NormalizedGraph, f: &Dense, y: &Dense, alpha: f64) -> Dense {
    let mut next = p.matrix().mul_dense(f);
    for (v, &prior) in next.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *v = alpha * *v + (1.0 - alpha) * prior;
    }
    next
}

/// Fixed-point iteration until the largest entry change drops below `tol`.
pub fn diffuse_iterative(
    p: &NormalizedGraph,
    y: &Dense,
    cfg: &DiffusionConfig,
) -> Result<DiffusionResult, DiffusionError> {
    check_inputs(p, y, cfg)?;
    let mut f = y.clone();
    for it in 1..=cfg.max_iters {
        let next = step(p, &f, y, cfg.alpha);
        let change = next.max_abs_diff(&f);
        f = next;
        if change < cfg.tol {
            return Ok(DiffusionResult::new(f, it, true));
        }
    }
    Ok(DiffusionResult::new(f, cfg.max_iters, false))
}

/// Solves `(I − αP)·F = (1 − α)·Y`. The system matrix is symmetric positive
/// definite for `0 < α < 1`, so Cholesky is tried first with LU as fallback.
pub fn diffuse_closed_form(
    p: &NormalizedGraph,
    y: &Dense,
    cfg: &DiffusionConfig,
) -> Result<DiffusionResult, DiffusionError> {
    check_inputs(p, y, cfg)?;
    let n = p.n();
    if n > CLOSED_FORM_MAX_NODES {
        return Err(DiffusionError::TooLarge(n));
    }
    let k = y.cols();
    let mut system = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for (j, v) in p.matrix().row(i) {
            system[(i, j)] -= cfg.alpha * v;
        }
    }
    let rhs = DMatrix::from_fn(n, k, |i, c| (1.0 - cfg.alpha) * y.get(i, c));
    let sol = match system.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => system.lu().solve(&rhs).ok_or(DiffusionError::Singular)?,
    };
    let scores = Dense::from_vec(
        n,
        k,
        (0..n)
            .flat_map(|i| (0..k).map(move |c| (i, c)))
            .map(|(i, c)| sol[(i, c)])
            .collect(),
    );
    Ok(DiffusionResult::new(scores, 0, true))
}

/// Argmax labels for the masked rows.
pub fn predict(result: &DiffusionResult, masked_indices: &[usize]) -> Vec<Prediction> {
    predict_rows(&result.scores, masked_indices)
}
