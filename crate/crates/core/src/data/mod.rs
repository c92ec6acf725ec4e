//! Audio ingestion, tokenisation, pair manifests, padded batches and the
//! synthetic keyword generator.

mod batch;
mod manifest;
mod synth;
mod text;
mod wav;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::features::kwsf::KwsfError;
use crate::features::FeatureError;

pub use batch::{make_batches, Batch, BatchOrder, Dataset, TextBatch, TextInput};
pub use manifest::{load_manifest, parse_manifest, save_manifest, Example, Manifest};
pub use synth::{char_tone_table, render_keyword, synth_dataset, SynthParams, CHAR_TONES};
pub use text::{tokenize, ALPHABET};
pub use wav::{encode_wav, read_wav, write_wav, SAMPLE_RATE};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed WAV file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("unsupported WAV {field} in {path}: {msg}")]
    UnsupportedFormat {
        path: PathBuf,
        field: &'static str,
        msg: String,
    },
    #[error("cannot tokenize character {0:?}")]
    Tokenize(char),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature extraction failed for {path}: {source}")]
    Feature {
        path: PathBuf,
        #[source]
        source: FeatureError,
    },
    #[error("text features {path}: {source}")]
    TextFeatures {
        path: PathBuf,
        #[source]
        source: KwsfError,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}
