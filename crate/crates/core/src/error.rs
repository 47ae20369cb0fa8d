//! Crate-wide error type. Contract violations carry enough context to
//! name the offending shapes, fields, or tensors.

use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by any operation in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape in {op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },

    #[error("non-finite value in {op} at flat index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: &'static str },

    #[error("empty effective batch")]
    EmptyBatch,

    #[error("degenerate embedding at row {row}")]
    DegenerateEmbedding { row: usize },

    #[error("invalid {field}: {detail}")]
    InvalidConfig { field: &'static str, detail: String },

    #[error("token id {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("no class present in both prediction and ground truth")]
    AllClassesAbsent,

    #[error("infeasible dataset request: {detail}")]
    Infeasible { detail: String },

    #[error("malformed tensor blob: {detail}")]
    Codec { detail: String },
}

pub type Result<T> = core::result::Result<T, Error>;
