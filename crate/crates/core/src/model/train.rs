//! Mini-batch BCE training with Adam and validation-based model selection.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::ModelConfig;
use super::network::Model;
use super::ModelError;
use crate::data::{make_batches, BatchOrder, Dataset, Manifest};
use crate::metrics::{auc, eer, ScoredSet};
use crate::nn::{Adam, Graph, Mode};

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_auc,val_eer";

const SPLIT_STREAM: u64 = 0x7661_6c69_6461_7465;
const DROPOUT_STREAM: u64 = 0x6472_6f70_6f75_7421;
const SHUFFLE_STREAM: u64 = 0x7368_7566_666c_6521;

/// One history row. Validation fields are NaN when there is no validation
/// split (or, for AUC/EER, when it holds a single class).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: f64,
    pub val_eer: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the selected epoch (the initial weights when no
    /// epoch ran).
    pub best: Checkpoint,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Eval-mode loss and match probabilities over part of a dataset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub scores: ScoredSet,
}

/// Stratified split: `floor(fraction·n_c)` items of each class, chosen by a
/// seeded shuffle, go to validation. Both returned lists are sorted.
pub fn split_validation(labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_val = (fraction * idx.len() as f64).floor() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn evaluate(model: &Model, dataset: &Dataset, subset: &[usize]) -> Result<Evaluation, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut loss_sum, mut scores, mut labels) = (0.0, Vec::new(), Vec::new());
    for batch in make_batches(dataset, subset, model.config().batch_size, BatchOrder::Sequential)? {
        let mut g = Graph::new();
        let logits = model.forward(&mut g, &batch, Mode::Eval, &mut rng)?;
        let loss = g.sigmoid_bce(logits, &batch.labels)?;
        loss_sum += g.value(loss).item() * batch.len() as f64;
        let probs = g.sigmoid(logits);
        scores.extend_from_slice(g.value(probs).data());
        labels.extend(batch.indices.iter().map(|&i| dataset.labels[i]));
    }
    Ok(Evaluation {
        loss: loss_sum / subset.len() as f64,
        scores: ScoredSet::new(scores, labels)?,
    })
}

fn check_dataset(dataset: &Dataset, cfg: &ModelConfig) -> Result<(), ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if dataset.front_end != cfg.front_end() {
        return Err(ModelError::ConfigMismatch(format!(
            "dataset features are {:?} but the model expects {:?}",
            dataset.front_end.kind, cfg.feature
        )));
    }
    let positives = dataset.labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(ModelError::DegenerateDataset(0));
    }
    if positives == dataset.len() {
        return Err(ModelError::DegenerateDataset(1));
    }
    Ok(())
}

/// Higher AUC wins, then lower loss. NaN AUC ranks below everything.
fn better(auc: f64, loss: f64, best: Option<(f64, f64)>) -> bool {
    let Some((best_auc, best_loss)) = best else {
        return true;
    };
    let a = if auc.is_nan() { f64::NEG_INFINITY } else { auc };
    let b = if best_auc.is_nan() { f64::NEG_INFINITY } else { best_auc };
    a > b || (a == b && loss < best_loss)
}

pub fn train(dataset: &Dataset, cfg: &ModelConfig, epochs: usize) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    check_dataset(dataset, cfg)?;
    let (train_idx, val_idx) = split_validation(&dataset.labels, cfg.val_fraction, cfg.seed);
    log::info!(
        "training on {} pairs, validating on {} ({} epochs)",
        train_idx.len(),
        val_idx.len(),
        epochs
    );
    let mut model = Model::new(cfg)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let mut best = Checkpoint::from_model(&model, 0);
    let mut best_key = None;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(epochs);
    let mut step = 0u64;
    for epoch in 1..=epochs {
        let order = BatchOrder::Shuffled {
            seed: (cfg.seed ^ SHUFFLE_STREAM).wrapping_add(epoch as u64),
        };
        let mut loss_sum = 0.0;
        for batch in make_batches(dataset, &train_idx, cfg.batch_size, order)? {
            let mut g = Graph::new();
            let logits = model.forward(&mut g, &batch, Mode::Train, &mut drop_rng)?;
            let loss = g.sigmoid_bce(logits, &batch.labels)?;
            loss_sum += g.value(loss).item() * batch.len() as f64;
            let grads = g.backward(loss);
            let buffers = g.take_buffer_updates();
            let params = model.params_mut();
            adam.step(params, &grads)?;
            for (id, value) in buffers {
                *params.value_mut(id) = value;
            }
            params.round_to_f32();
            step += 1;
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let mut stats = EpochStats {
            epoch,
            train_loss,
            val_loss: f64::NAN,
            val_auc: f64::NAN,
            val_eer: f64::NAN,
        };
        let key = if val_idx.is_empty() {
            (f64::NAN, train_loss)
        } else {
            let ev = evaluate(&model, dataset, &val_idx)?;
            stats.val_loss = ev.loss;
            stats.val_auc = auc(&ev.scores).unwrap_or(f64::NAN);
            stats.val_eer = eer(&ev.scores).unwrap_or(f64::NAN);
            (stats.val_auc, ev.loss)
        };
        log::info!(
            "epoch {epoch}: train_loss {:.4} val_loss {:.4} val_auc {:.4} val_eer {:.4}",
            stats.train_loss,
            stats.val_loss,
            stats.val_auc,
            stats.val_eer
        );
        if better(key.0, key.1, best_key) {
            best_key = Some(key);
            best_epoch = epoch;
            best = Checkpoint::from_model(&model, step);
        }
        history.push(stats);
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// Extracts features with the configured front-end, then trains.
pub fn train_manifest(manifest: &Manifest, cfg: &ModelConfig, epochs: usize) -> Result<TrainOutcome, ModelError> {
    if manifest.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    cfg.validate()?;
    let dataset = Dataset::from_manifest(manifest, &cfg.front_end())?;
    train(&dataset, cfg, epochs)
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for s in history {
        writeln!(out, "{},{},{},{},{}", s.epoch, s.train_loss, s.val_loss, s.val_auc, s.val_eer).unwrap();
    }
    out
}
