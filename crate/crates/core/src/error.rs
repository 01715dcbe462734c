//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cyclic rewrite-rule set kept changing a token for the full pass
    /// budget.
    #[error("no rewrite fixpoint for {token:?} after {passes} passes (rule ids {rule_ids:?})")]
    FixpointNotReached { token: String, passes: usize, rule_ids: Vec<usize> },

    #[error("bad rewrite rule at line {line}: {reason}")]
    BadRule { line: usize, reason: String },

    #[error("no token survives the min-count threshold")]
    EmptyVocabulary,

    #[error("line {0}: label is not one of negative/neutral/positive")]
    BadLabel(usize),

    #[error("line {0}: expected `text<TAB>label`")]
    BadRow(usize),

    #[error("split leaves an empty {part} part for class {class}")]
    DegenerateSplit { part: &'static str, class: usize },

    #[error("invalid split fractions: {0}")]
    BadSplitSpec(String),

    #[error("corpus contains no trainable tokens")]
    EmptyCorpus,

    #[error("co-occurrence matrix is empty")]
    EmptyCooc,

    #[error("nearest-neighbour query has zero norm")]
    ZeroQuery,

    #[error("bad file header: {0}")]
    BadHeader(String),

    #[error("dimension mismatch{}: expected {expected}, got {got}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DimMismatch { expected: usize, got: usize, line: Option<usize> },

    #[error("class {0} has no training instances")]
    MissingClass(usize),

    #[error("training loss became non-finite; lower the learning rate")]
    NonFiniteLoss,

    #[error("sequence has no valid (non-pad) step")]
    AllPadSequence,

    #[error("empty train or validation split")]
    EmptySplit,

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
