//! Crate-wide error type with stable short codes.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A corpus or adaptation text with no usable lines.
    EmptyCorpus,
    /// A token id at or beyond the vocabulary size.
    IdOutOfRange { id: usize, vocab: usize },
    /// Feature synthesis asked for an utterance with no tokens.
    EmptyUtterance,
    /// A lattice with labels to emit but no frames.
    EmptyLattice,
    /// The CTC target cannot be aligned within the given frame count.
    CtcInfeasible { needed: usize, frames: usize },
    /// Operand dimensions do not agree.
    ShapeMismatch(String),
    /// A gradient contained NaN or infinity.
    NonFiniteGradient(String),
    /// Training or adaptation produced a non-finite loss.
    Diverged(String),
    /// External LM parameters do not match the vocabulary predictor.
    LmShapeMismatch(String),
    /// Operation called on a model variant that does not support it.
    WrongVariant { op: &'static str, variant: &'static str },
    /// Bad run configuration (unknown key, bad value).
    Config(String),
    /// File-system failure, usually a missing input.
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed on-disk artifact (manifest, checkpoint, ARPA file...).
    Format(String),
}

impl Error {
    /// Stable machine-readable code, used in tests and CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyCorpus => "empty-corpus",
            Error::IdOutOfRange { .. } => "id-out-of-range",
            Error::EmptyUtterance => "empty-utterance",
            Error::EmptyLattice => "empty-lattice",
            Error::CtcInfeasible { .. } => "ctc-infeasible",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::NonFiniteGradient(_) => "non-finite-gradient",
            Error::Diverged(_) => "diverged",
            Error::LmShapeMismatch(_) => "lm-shape-mismatch",
            Error::WrongVariant { .. } => "wrong-variant",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCorpus => write!(f, "empty-corpus: no usable text lines"),
            Error::IdOutOfRange { id, vocab } => {
                write!(f, "id-out-of-range: token id {id} with vocabulary size {vocab}")
            }
            Error::EmptyUtterance => write!(f, "empty-utterance: no tokens to synthesize"),
            Error::EmptyLattice => write!(f, "empty-lattice: labels to emit but zero frames"),
            Error::CtcInfeasible { needed, frames } => {
                write!(f, "ctc-infeasible: target needs {needed} frames, lattice has {frames}")
            }
            Error::ShapeMismatch(msg) => write!(f, "shape-mismatch: {msg}"),
            Error::NonFiniteGradient(name) => write!(f, "non-finite-gradient: {name}"),
            Error::Diverged(msg) => write!(f, "diverged: {msg}"),
            Error::LmShapeMismatch(msg) => write!(f, "lm-shape-mismatch: {msg}"),
            Error::WrongVariant { op, variant } => {
                write!(f, "wrong-variant: {op} is not defined for the {variant} variant")
            }
            Error::Config(msg) => write!(f, "config: {msg}"),
            Error::Io { path, source } => write!(f, "io: {}: {source}", path.display()),
            Error::Format(msg) => write!(f, "format: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
