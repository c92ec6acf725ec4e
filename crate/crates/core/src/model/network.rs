//! The audio/text matcher: audio encoder, text encoder, cross-attention
//! pattern extractor and recurrent discriminator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TextSource};
use super::ModelError;
use crate::data::{Batch, TextBatch, TextInput, ALPHABET};
use crate::matrix::Matrix;
use crate::nn::layers::{dropout, time_mask, BatchNorm, BiGru, Conv2d, CrossAttention, Dense, Embedding};
use crate::nn::{Graph, Mode, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
struct Layers {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    audio_grus: Vec<BiGru>,
    audio_proj: Dense,
    embedding: Option<Embedding>,
    text_gru: BiGru,
    text_proj: Dense,
    attention: CrossAttention,
    disc_gru: BiGru,
    disc_out: Dense,
}

/// Parameters plus the layer wiring that reads them.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    layers: Layers,
}

impl Model {
    /// Fresh model with Xavier-initialised weights drawn from `config.seed`.
    /// Weights are rounded to `f32` so checkpoints store them exactly.
    pub fn new(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let c = config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut p = ParamStore::new();
        let feat_dim = c.feature_dim();
        let k = c.conv_kernel;
        let conv1 = Conv2d::new(&mut p, "audio.conv1", k, 1, c.conv_filters, c.conv_stride, &mut rng);
        let bn1 = BatchNorm::new(&mut p, "audio.bn1", c.conv_filters);
        let conv2 = Conv2d::new(&mut p, "audio.conv2", k, c.conv_filters, c.conv_filters, 1, &mut rng);
        let bn2 = BatchNorm::new(&mut p, "audio.bn2", c.conv_filters);
        let mut audio_grus = Vec::new();
        let mut width = feat_dim * c.conv_filters;
        for i in 0..c.audio_gru_layers {
            audio_grus.push(BiGru::new(&mut p, &format!("audio.gru{}", i + 1), width, c.gru_hidden, &mut rng));
            width = 2 * c.gru_hidden;
        }
        let audio_proj = Dense::new(&mut p, "audio.proj", width, c.embed_dim, &mut rng);
        let embedding = (c.text_source == TextSource::Chars)
            .then(|| Embedding::new(&mut p, "text.embedding", ALPHABET.chars().count(), c.char_embed_dim, &mut rng));
        let text_gru = BiGru::new(&mut p, "text.gru", c.char_embed_dim, c.gru_hidden, &mut rng);
        let text_proj = Dense::new(&mut p, "text.proj", 2 * c.gru_hidden, c.embed_dim, &mut rng);
        let attention = CrossAttention::new(&mut p, "attention", c.embed_dim, c.embed_dim, c.embed_dim, &mut rng);
        let disc_gru = BiGru::new(&mut p, "disc.gru", c.embed_dim, c.disc_hidden, &mut rng);
        let disc_out = Dense::new(&mut p, "disc.out", 2 * c.disc_hidden, 1, &mut rng);
        p.round_to_f32();
        Ok(Self {
            config: config.clone(),
            params: p,
            layers: Layers {
                conv1,
                bn1,
                conv2,
                bn2,
                audio_grus,
                audio_proj,
                embedding,
                text_gru,
                text_proj,
                attention,
                disc_gru,
                disc_out,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces all parameter values; names and shapes must match.
    pub fn set_params(&mut self, params: ParamStore) -> Result<(), ModelError> {
        let same_layout = params.len() == self.params.len()
            && self
                .params
                .iter()
                .zip(params.iter())
                .all(|((_, n1, t1), (_, n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same_layout {
            return Err(ModelError::ConfigMismatch(
                "parameter names or shapes differ from the model built for this configuration".into(),
            ));
        }
        for (id, _, t) in params.iter() {
            *self.params.value_mut(id) = t.clone();
        }
        Ok(())
    }

    /// Audio time length after the strided convolution.
    pub fn audio_len(&self, frames: usize) -> usize {
        frames.div_ceil(self.config.conv_stride)
    }

    fn drop(&self, g: &mut Graph, x: Var, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Var, ModelError> {
        Ok(dropout(g, x, self.config.dropout, mode, rng)?)
    }

    /// `features: [B,T,F]` → `E_a: [B, ceil(T/stride), D]`, zero past each
    /// item's (strided) length.
    pub fn audio_encode(
        &self,
        g: &mut Graph,
        features: &Tensor,
        lengths: &[usize],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<usize>), ModelError> {
        let &[bs, t, f] = features.shape() else {
            return Err(ModelError::ConfigMismatch(format!(
                "audio features must be [B,T,F], got {:?}",
                features.shape()
            )));
        };
        if f != self.config.feature_dim() {
            return Err(ModelError::ConfigMismatch(format!(
                "features have {f} columns but the model expects {} ({} front-end)",
                self.config.feature_dim(),
                self.config.feature
            )));
        }
        if lengths.iter().any(|&l| l == 0 || l > t) {
            return Err(ModelError::ConfigMismatch(format!("audio lengths {lengths:?} invalid for T={t}")));
        }
        let (l, p) = (&self.layers, &self.params);
        let x = g.constant(features.clone().reshape(&[bs, t, f, 1])?);
        let h = l.conv1.forward(g, p, x)?;
        let lens: Vec<usize> = lengths.iter().map(|&n| self.audio_len(n)).collect();
        let h = l.bn1.forward(g, p, h, Some(&lens), mode)?;
        let mut h = g.relu(h);
        if self.config.dropout_after_conv {
            h = self.drop(g, h, mode, rng)?;
        }
        let h = l.conv2.forward(g, p, h)?;
        let h = l.bn2.forward(g, p, h, Some(&lens), mode)?;
        let mut h = g.relu(h);
        if self.config.dropout_after_conv {
            h = self.drop(g, h, mode, rng)?;
        }
        let t2 = g.shape(h)[1];
        let mut h = g.reshape(h, &[bs, t2, f * self.config.conv_filters])?;
        for gru in &l.audio_grus {
            h = gru.forward(g, p, h, &lens)?;
            h = self.drop(g, h, mode, rng)?;
        }
        let e = l.audio_proj.forward(g, p, h)?;
        let e = self.drop(g, e, mode, rng)?;
        let shape = g.shape(e).to_vec();
        let e = g.mul_const(e, time_mask(&shape, &lens))?;
        Ok((e, lens))
    }

    /// Character sequences → `E_t: [B, N_max, D]`.
    pub fn text_encode(
        &self,
        g: &mut Graph,
        text: &TextBatch,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<usize>), ModelError> {
        let (l, p) = (&self.layers, &self.params);
        let lens = text.lengths();
        if lens.contains(&0) {
            return Err(ModelError::ConfigMismatch("empty text in batch".into()));
        }
        let x = match (text, &l.embedding) {
            (TextBatch::Tokens(ids), Some(emb)) => emb.forward(g, p, ids)?,
            (TextBatch::Features { data, .. }, None) => {
                let width = data.shape()[2];
                if width != self.config.char_embed_dim {
                    return Err(ModelError::ConfigMismatch(format!(
                        "text features have {width} columns, expected {}",
                        self.config.char_embed_dim
                    )));
                }
                g.constant(data.clone())
            }
            (TextBatch::Tokens(_), None) => {
                return Err(ModelError::ConfigMismatch(
                    "model expects precomputed text features but got characters".into(),
                ))
            }
            (TextBatch::Features { .. }, Some(_)) => {
                return Err(ModelError::ConfigMismatch(
                    "model embeds characters but got precomputed text features".into(),
                ))
            }
        };
        let x = self.drop(g, x, mode, rng)?;
        let h = l.text_gru.forward(g, p, x, &lens)?;
        let h = self.drop(g, h, mode, rng)?;
        let e = l.text_proj.forward(g, p, h)?;
        let e = self.drop(g, e, mode, rng)?;
        let shape = g.shape(e).to_vec();
        let e = g.mul_const(e, time_mask(&shape, &lens))?;
        Ok((e, lens))
    }

    /// Cross-attention with text queries over audio keys/values, then the
    /// discriminator. Returns `[B]` logits and the attention weights.
    pub fn match_logits(
        &self,
        g: &mut Graph,
        audio: Var,
        audio_lens: &[usize],
        text: Var,
        text_lens: &[usize],
    ) -> Result<(Var, Var), ModelError> {
        let (l, p) = (&self.layers, &self.params);
        let (ctx, weights) = l.attention.forward(g, p, text, audio, audio_lens)?;
        let shape = g.shape(ctx).to_vec();
        let ctx = g.mul_const(ctx, time_mask(&shape, text_lens))?;
        let fwd = l.disc_gru.fwd.forward(g, p, ctx, text_lens)?;
        let bwd = l.disc_gru.bwd.forward(g, p, ctx, text_lens)?;
        let last: Vec<usize> = text_lens.iter().map(|&n| n - 1).collect();
        let fwd_last = g.select_time(fwd, &last)?;
        let bwd_first = g.select_time(bwd, &vec![0; text_lens.len()])?;
        let summary = g.concat_last(fwd_last, bwd_first)?;
        let logit = l.disc_out.forward(g, p, summary)?;
        let logit = g.reshape(logit, &[text_lens.len()])?;
        Ok((logit, weights))
    }

    /// Full forward pass over a batch, returning `[B]` logits.
    pub fn forward(&self, g: &mut Graph, batch: &Batch, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Var, ModelError> {
        let (ea, alen) = self.audio_encode(g, &batch.features, &batch.lengths, mode, rng)?;
        let (et, tlen) = self.text_encode(g, &batch.text, mode, rng)?;
        Ok(self.match_logits(g, ea, &alen, et, &tlen)?.0)
    }

    /// Eval-mode match probabilities for a batch.
    pub fn score_batch(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.forward(&mut g, batch, Mode::Eval, &mut rng)?;
        let probs = g.sigmoid(logits);
        Ok(g.value(probs).data().to_vec())
    }

    /// Eval-mode `E_a` (`m × D`) of one utterance.
    pub fn audio_embedding(&self, features: &Matrix) -> Result<Matrix, ModelError> {
        let mut g = Graph::new();
        let t = Tensor::new(&[1, features.rows(), features.cols()], features.as_slice().to_vec())?;
        let (e, lens) = self.audio_encode(&mut g, &t, &[features.rows()], Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(Matrix::from_vec(lens[0], self.config.embed_dim, g.value(e).data().to_vec()))
    }

    /// Eval-mode `E_t` (`n × D`) of one text.
    pub fn text_embedding(&self, text: &TextInput) -> Result<Matrix, ModelError> {
        let batch = match text {
            TextInput::Tokens(t) => TextBatch::Tokens(vec![t.clone()]),
            TextInput::Features(m) => TextBatch::Features {
                data: Tensor::new(&[1, m.rows(), m.cols()], m.as_slice().to_vec())?,
                lengths: vec![m.rows()],
            },
        };
        let mut g = Graph::new();
        let (e, lens) = self.text_encode(&mut g, &batch, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(Matrix::from_vec(lens[0], self.config.embed_dim, g.value(e).data().to_vec()))
    }

    /// Match probability of one `E_a` / `E_t` pair.
    pub fn match_score(&self, audio: &Matrix, text: &Matrix) -> Result<f64, ModelError> {
        let d = self.config.embed_dim;
        if audio.cols() != d || text.cols() != d || audio.rows() == 0 || text.rows() == 0 {
            return Err(ModelError::Nn(crate::nn::NnError::Shape(format!(
                "embeddings must be non-empty with {d} columns, got {:?} and {:?}",
                audio.shape(),
                text.shape()
            ))));
        }
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(&[1, audio.rows(), d], audio.as_slice().to_vec())?);
        let t = g.constant(Tensor::new(&[1, text.rows(), d], text.as_slice().to_vec())?);
        let (logit, _) = self.match_logits(&mut g, a, &[audio.rows()], t, &[text.rows()])?;
        let p = g.sigmoid(logit);
        Ok(g.value(p).item())
    }

    /// Cross-attention context (`n × D`) and weights (`n × m`) for one
    /// `E_a` / `E_t` pair.
    pub fn attention(&self, audio: &Matrix, text: &Matrix) -> Result<(Matrix, Matrix), ModelError> {
        let d = self.config.embed_dim;
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(&[1, audio.rows(), d], audio.as_slice().to_vec())?);
        let t = g.constant(Tensor::new(&[1, text.rows(), d], text.as_slice().to_vec())?);
        let (ctx, w) = self.layers.attention.forward(&mut g, &self.params, t, a, &[audio.rows()])?;
        Ok((
            Matrix::from_vec(text.rows(), d, g.value(ctx).data().to_vec()),
            Matrix::from_vec(text.rows(), audio.rows(), g.value(w).data().to_vec()),
        ))
    }
}
