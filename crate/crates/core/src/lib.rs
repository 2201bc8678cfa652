//! Rhetorical role labeling for sentences of long documents.
//!
//! Sentences arrive as precomputed embedding vectors (one row per sentence).
//! From those we build a thresholded cosine-similarity graph and classify the
//! unlabeled sentences with either semi-supervised label diffusion or a
//! two-layer graph convolutional network. A separate preprocessor turns a
//! corpus into 5-sentence context windows ready for an encoder.
//!
//! Module map:
//!
//! - [`corpus`]: role taxonomy, corpus records, embedding files, label masking
//! - [`graph`]: cosine graph construction, normalization, `SGRAPH1` files
//! - [`diffusion`]: iterative and closed-form label diffusion
//! - [`gcn`]: two-layer GCN with hand-derived gradients and Adam training
//! - [`context`]: stopword cleaning and context windows
//! - [`eval`]: accuracy / per-class / macro-F1 reports
//! - [`cli`]: the `rolegraph` command line

pub mod cli;
pub mod context;
pub mod corpus;
pub mod diffusion;
pub mod eval;
pub mod gcn;
pub mod graph;
pub mod linalg;
pub mod prediction;
pub mod synth;

pub use corpus::{EmbeddingMatrix, LabelArray, RoleLabel, SentenceRecord};
pub use graph::{NormalizedGraph, NormMode, SentenceGraph};
