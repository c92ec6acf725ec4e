//! Feature-extracted datasets and zero-padded mini-batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::Manifest;
use super::text::tokenize;
use super::wav::read_wav;
use super::DataError;
use crate::features::{kwsf, FrontEnd};
use crate::matrix::Matrix;
use crate::nn::Tensor;

/// Text side of one example.
#[derive(Debug, Clone, PartialEq)]
pub enum TextInput {
    Tokens(Vec<usize>),
    /// Precomputed per-character rows.
    Features(Matrix),
}

impl TextInput {
    pub fn len(&self) -> usize {
        match self {
            TextInput::Tokens(t) => t.len(),
            TextInput::Features(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every example of a manifest with its audio features extracted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Matrix>,
    pub texts: Vec<TextInput>,
    pub labels: Vec<u8>,
    pub front_end: FrontEnd,
}

impl Dataset {
    pub fn from_manifest(manifest: &Manifest, front_end: &FrontEnd) -> Result<Self, DataError> {
        if manifest.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let mut ds = Dataset {
            features: Vec::with_capacity(manifest.len()),
            texts: Vec::with_capacity(manifest.len()),
            labels: Vec::with_capacity(manifest.len()),
            front_end: front_end.clone(),
        };
        for ex in &manifest.examples {
            let wave = read_wav(&ex.audio)?;
            let feats = front_end.extract(&wave).map_err(|source| DataError::Feature {
                path: ex.audio.clone(),
                source,
            })?;
            let text = match &ex.text_features {
                Some(p) => {
                    let file = kwsf::load(p).map_err(|source| DataError::TextFeatures {
                        path: p.clone(),
                        source,
                    })?;
                    TextInput::Features(file.matrix)
                }
                None => TextInput::Tokens(tokenize(&ex.text)?),
            };
            ds.features.push(feats.into_matrix());
            ds.texts.push(text);
            ds.labels.push(ex.label);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.front_end.dim()
    }
}

/// Padded text for a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum TextBatch {
    Tokens(Vec<Vec<usize>>),
    /// `[B, N_max, E]`, zero-padded, with true row counts.
    Features { data: Tensor, lengths: Vec<usize> },
}

impl TextBatch {
    pub fn lengths(&self) -> Vec<usize> {
        match self {
            TextBatch::Tokens(t) => t.iter().map(Vec::len).collect(),
            TextBatch::Features { lengths, .. } => lengths.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Dataset positions of the items.
    pub indices: Vec<usize>,
    /// `[B, T_max, D]`, zero past each item's length.
    pub features: Tensor,
    pub lengths: Vec<usize>,
    pub text: TextBatch,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrder {
    Sequential,
    /// Seeded permutation; callers derive a fresh seed per epoch.
    Shuffled { seed: u64 },
}

fn pad_rows(mats: &[&Matrix], lengths: &[usize]) -> Result<Tensor, DataError> {
    let dim = mats[0].cols();
    if let Some(m) = mats.iter().find(|m| m.cols() != dim) {
        return Err(DataError::Invalid(format!("mixed widths {} and {dim} in one batch", m.cols())));
    }
    let t_max = lengths.iter().copied().max().unwrap_or(0);
    let mut data = vec![0.0; mats.len() * t_max * dim];
    for (b, m) in mats.iter().enumerate() {
        let off = b * t_max * dim;
        data[off..off + m.as_slice().len()].copy_from_slice(m.as_slice());
    }
    Tensor::new(&[mats.len(), t_max, dim], data).map_err(|e| DataError::Invalid(e.to_string()))
}

/// Splits `subset` (dataset positions) into batches of at most
/// `batch_size`, each zero-padded to its own longest item.
pub fn make_batches(
    dataset: &Dataset,
    subset: &[usize],
    batch_size: usize,
    order: BatchOrder,
) -> Result<Vec<Batch>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Invalid("batch size must be at least 1".into()));
    }
    if subset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut idx = subset.to_vec();
    if let BatchOrder::Shuffled { seed } = order {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    idx.chunks(batch_size)
        .map(|chunk| {
            let mats: Vec<&Matrix> = chunk.iter().map(|&i| &dataset.features[i]).collect();
            let lengths: Vec<usize> = mats.iter().map(|m| m.rows()).collect();
            let features = pad_rows(&mats, &lengths)?;
            let text = match &dataset.texts[chunk[0]] {
                TextInput::Tokens(_) => TextBatch::Tokens(
                    chunk
                        .iter()
                        .map(|&i| match &dataset.texts[i] {
                            TextInput::Tokens(t) => Ok(t.clone()),
                            TextInput::Features(_) => Err(mixed_text()),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                TextInput::Features(_) => {
                    let rows: Vec<&Matrix> = chunk
                        .iter()
                        .map(|&i| match &dataset.texts[i] {
                            TextInput::Features(m) => Ok(m),
                            TextInput::Tokens(_) => Err(mixed_text()),
                        })
                        .collect::<Result<_, _>>()?;
                    let lengths: Vec<usize> = rows.iter().map(|m| m.rows()).collect();
                    TextBatch::Features {
                        data: pad_rows(&rows, &lengths)?,
                        lengths,
                    }
                }
            };
            Ok(Batch {
                indices: chunk.to_vec(),
                features,
                lengths,
                text,
                labels: chunk.iter().map(|&i| f64::from(dataset.labels[i])).collect(),
            })
        })
        .collect()
}

fn mixed_text() -> DataError {
    DataError::Invalid("batch mixes token text with precomputed text features".into())
}
