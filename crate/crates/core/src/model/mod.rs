//! Recurrent cells, the stacked (bi)directional tagger, and its on-disk
//! container.

mod cell;
mod io;
mod layer;
mod tagger;

pub use cell::{lstm_step, rnn_step, Cell, CellKind, Gate, LstmCellParams, LstmState, RnnCellParams};
pub use io::{load_model, save_model, MAGIC, VERSION};
pub use layer::{backward_layer, run_bilayer, run_layer, Direction};
pub use tagger::{
    argmax, DropoutMasks, ForwardPass, Gradients, Layer, Mode, Params, Tagger, TaggerConfig, DEFAULT_DROPOUT,
    DEFAULT_HIDDEN, DEFAULT_LAYERS, FORGET_BIAS_INIT,
};

use std::fmt;

#[derive(Debug)]
pub enum ModelError {
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    EmptySequence,
    LabelOutOfRange {
        index: usize,
        labels: usize,
    },
    InvalidConfig(String),
    Io(std::io::Error),
    BadMagic,
    UnsupportedVersion(u32),
    TruncatedFile,
    ChecksumMismatch,
    BadConfigRecord(String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::DimensionMismatch { what, expected, found } => {
                write!(f, "{}: expected length {}, found {}", what, expected, found)
            }
            ModelError::EmptySequence => write!(f, "empty sequence"),
            ModelError::LabelOutOfRange { index, labels } => {
                write!(f, "label index {} out of range for {} labels", index, labels)
            }
            ModelError::InvalidConfig(m) => write!(f, "invalid model configuration: {}", m),
            ModelError::Io(e) => write!(f, "I/O error: {}", e),
            ModelError::BadMagic => write!(f, "not a model file (bad magic)"),
            ModelError::UnsupportedVersion(v) => write!(f, "unsupported model format version {}", v),
            ModelError::TruncatedFile => write!(f, "model file is truncated"),
            ModelError::ChecksumMismatch => write!(f, "model file checksum mismatch"),
            ModelError::BadConfigRecord(m) => write!(f, "bad configuration record: {}", m),
        }
    }
}

impl std::error::Error for ModelError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ModelError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ModelError::TruncatedFile
        } else {
            ModelError::Io(e)
        }
    }
}
