//! Training loop for the hybrid model: rMSprop updates, early stopping
//! with patience and best-model snapshotting, and evaluation.

mod metrics;

pub use metrics::{evaluate_predictions, ClassMetrics, EvaluationReport};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabeledDataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::net::{cross_entropy, HybridModel};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmspropConfig {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig { lr: 0.01, rho: 0.9, eps: 1e-7 }
    }
}

/// Per-tensor accumulator of squared gradients:
/// `acc <- rho*acc + (1-rho)*g^2`, `p <- p - lr*g/(sqrt(acc) + eps)`.
#[derive(Debug, Clone)]
pub struct Rmsprop<F> {
    cfg: RmspropConfig,
    acc: Vec<Vec<F>>,
}

impl<F: Scalar> Rmsprop<F> {
    /// Accumulators sized from the gradient views of the model being
    /// trained.
    pub fn new(cfg: RmspropConfig, view_lens: &[usize]) -> Self {
        Rmsprop { cfg, acc: view_lens.iter().map(|&l| vec![F::zero(); l]).collect() }
    }

    pub fn step(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.acc.len());
        let rho = cast::<F>(self.cfg.rho);
        let one_minus_rho = cast::<F>(1.0 - self.cfg.rho);
        let lr = cast::<F>(self.cfg.lr);
        let eps = cast::<F>(self.cfg.eps);
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.acc) {
            for i in 0..p.len() {
                let gi = g[i];
                acc[i] = rho * acc[i] + one_minus_rho * gi * gi;
                p[i] = p[i] - lr * gi / (acc[i].sqrt() + eps);
            }
        }
    }
}

/// Strict-improvement early stopping: a new best validation loss resets
/// the counter; `patience` consecutive non-improving epochs stop training.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    since_improve: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best_loss: f64::INFINITY, best_epoch: 0, since_improve: 0 }
    }

    /// Returns true when `val_loss` strictly improves on the best so far.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.since_improve = 0;
            true
        } else {
            self.since_improve += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improve >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: RmspropConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 50,
            patience: 5,
            batch_size: 32,
            seed: 1,
            optimizer: RmspropConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

pub struct FitResult<F> {
    /// Snapshot from the best validation epoch.
    pub model: HybridModel<F>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Mean validation cross-entropy and accuracy over a frozen model.
pub fn validation_metrics<F: Scalar>(
    model: &HybridModel<F>,
    ds: &LabeledDataset,
) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    for (seq, &label) in ds.sequences.iter().zip(&ds.labels) {
        let probs = model.forward(seq)?;
        loss += cross_entropy(&probs, label).to_f64().unwrap();
        if crate::shallow::argmax_lowest(&probs) == label {
            correct += 1;
        }
    }
    Ok((loss / ds.len() as f64, correct as f64 / ds.len() as f64))
}

/// Train with rMSprop, epoch-level shuffling, gradient clipping at the
/// model's configured global norm, and early stopping on validation loss.
/// Returns the snapshot from the best epoch plus the per-epoch history.
pub fn fit<F: Scalar>(
    mut model: HybridModel<F>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &FitConfig,
) -> Result<FitResult<F>> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySplit);
    }
    let view_lens: Vec<usize> = model.trainable_params_mut().iter().map(|v| v.len()).collect();
    let mut optimizer = Rmsprop::<F>::new(cfg.optimizer, &view_lens);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    let mut best: Option<HybridModel<F>> = None;
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let clip = model.config.clip_norm;

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for chunk in indices.chunks(cfg.batch_size.max(1)) {
            let seqs: Vec<Vec<u32>> =
                chunk.iter().map(|&i| train.sequences[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (loss, mut grads) = model.backward_batch(&seqs, &labels)?;
            let loss = loss.to_f64().unwrap();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            epoch_loss += loss * chunk.len() as f64;
            grads.clip_global_norm(clip);
            let grad_views = grads.views();
            let mut param_views = model.trainable_params_mut();
            optimizer.step(&mut param_views, &grad_views);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let (val_loss, val_accuracy) = validation_metrics(&model, val)?;
        history.push(EpochRecord { epoch, train_loss, val_loss, val_accuracy });
        if stopper.observe(epoch, val_loss) {
            best = Some(model.clone());
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(FitResult {
        model: best.expect("first epoch always improves on +inf"),
        history,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
    })
}

/// Evaluate a hybrid model on a labeled set.
pub fn evaluate_model<F: Scalar>(
    model: &HybridModel<F>,
    test: &LabeledDataset,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut preds = Vec::with_capacity(test.len());
    for seq in &test.sequences {
        preds.push(model.predict(seq)?);
    }
    evaluate_predictions(&test.labels, &preds, NUM_CLASSES)
}

/// One line per epoch: `epoch<TAB>train_loss<TAB>val_loss<TAB>val_accuracy`.
pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in history {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            rec.epoch, rec.train_loss, rec.val_loss, rec.val_accuracy
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
