//! GloVe: weighted least squares over a distance-weighted co-occurrence
//! matrix, optimized with AdaGrad over shuffled entries.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::mat::{dot, Mat};
use crate::scalar::{cast, Scalar};

use super::hogwild::SharedMat;
use super::{content_tokens, total_tokens, EmbeddingMatrix, Method};

/// Sparse symmetric co-occurrence counts: each ordered in-window pair
/// contributes 1/distance to both (i, j) and (j, i).
#[derive(Debug, Clone)]
pub struct CoocMatrix {
    window: usize,
    entries: HashMap<(u32, u32), f64>,
}

impl CoocMatrix {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &x)| (i, j, x))
    }
}

/// Accumulate distance-weighted co-occurrences within `window`, symmetric.
pub fn build_cooc(sentences: &[Vec<u32>], window: usize) -> Result<CoocMatrix> {
    assert!(window >= 1, "window must be at least 1");
    if total_tokens(sentences) == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut entries: HashMap<(u32, u32), f64> = HashMap::new();
    for sentence in sentences {
        for t in 0..sentence.len() {
            let hi = (t + window).min(sentence.len().saturating_sub(1));
            for c in (t + 1)..=hi {
                let w = 1.0 / (c - t) as f64;
                *entries.entry((sentence[t], sentence[c])).or_insert(0.0) += w;
                *entries.entry((sentence[c], sentence[t])).or_insert(0.0) += w;
            }
        }
    }
    Ok(CoocMatrix { window, entries })
}

/// GloVe loss weight: `(x / x_max)^alpha`, clamped to 1 at and above
/// `x_max`, so frequent pairs stop dominating the objective.
pub fn glove_weight<F: Scalar>(x: f64, x_max: f64, alpha: f64) -> F {
    debug_assert!(x > 0.0, "weight is defined for positive counts");
    if x < x_max {
        cast((x / x_max).powf(alpha))
    } else {
        F::one()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GloveConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub x_max: f64,
    pub alpha: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig { dim: 200, epochs: 20, lr: 0.05, x_max: 100.0, alpha: 0.75, seed: 1, workers: 1 }
    }
}

/// Fit word and context vectors plus biases minimizing
/// `sum f(X_ij) (w_i . w~_j + b_i + b~_j - ln X_ij)^2`.
///
/// Returns the matrix (input vectors are the average of the word and
/// context vectors) and the mean weighted squared error per epoch.
pub fn train_glove<F: Scalar>(
    cooc: &CoocMatrix,
    vocab: &Vocabulary,
    cfg: &GloveConfig,
) -> Result<(EmbeddingMatrix<F>, Vec<f64>)> {
    if cooc.is_empty() {
        return Err(Error::EmptyCooc);
    }
    let rows = vocab.content_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = 0.5 / cfg.dim as f64;
    let mut w = Mat::<F>::uniform(rows, cfg.dim, -half, half, &mut rng);
    let mut wt = Mat::<F>::uniform(rows, cfg.dim, -half, half, &mut rng);
    let mut b = Mat::<F>::uniform(rows, 1, -half, half, &mut rng);
    let mut bt = Mat::<F>::uniform(rows, 1, -half, half, &mut rng);
    // AdaGrad accumulators start at one: the first step size is exactly lr.
    let mut acc_w = ones::<F>(rows, cfg.dim);
    let mut acc_wt = ones::<F>(rows, cfg.dim);
    let mut acc_b = ones::<F>(rows, 1);
    let mut acc_bt = ones::<F>(rows, 1);

    let mut entries: Vec<(u32, u32, f64)> = cooc.iter().collect();
    // deterministic base order before the first shuffle
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let workers = cfg.workers.max(1);
    for _ in 0..cfg.epochs {
        entries.shuffle(&mut rng);
        let loss_bits = AtomicU64::new(0f64.to_bits());
        {
            let w_s = SharedMat::new(&mut w);
            let wt_s = SharedMat::new(&mut wt);
            let b_s = SharedMat::new(&mut b);
            let bt_s = SharedMat::new(&mut bt);
            let aw_s = SharedMat::new(&mut acc_w);
            let awt_s = SharedMat::new(&mut acc_wt);
            let ab_s = SharedMat::new(&mut acc_b);
            let abt_s = SharedMat::new(&mut acc_bt);
            let tensors =
                (&w_s, &wt_s, &b_s, &bt_s, &aw_s, &awt_s, &ab_s, &abt_s);
            if workers == 1 {
                let loss = glove_epoch(tensors, &entries, cfg);
                add_f64_atomic(&loss_bits, loss);
            } else {
                std::thread::scope(|scope| {
                    for wk in 0..workers {
                        let shard: Vec<(u32, u32, f64)> = entries
                            .iter()
                            .skip(wk)
                            .step_by(workers)
                            .copied()
                            .collect();
                        let loss_ref = &loss_bits;
                        scope.spawn(move || {
                            let loss = glove_epoch(tensors, &shard, cfg);
                            add_f64_atomic(loss_ref, loss);
                        });
                    }
                });
            }
        }
        epoch_loss.push(f64::from_bits(loss_bits.load(Ordering::Relaxed)) / entries.len() as f64);
    }

    // published vectors: average of word and context vectors
    let mut input = Mat::<F>::zeros(rows, cfg.dim);
    let half_f = cast::<F>(0.5);
    for r in 0..rows {
        for j in 0..cfg.dim {
            input[(r, j)] = (w[(r, j)] + wt[(r, j)]) * half_f;
        }
    }
    let matrix = EmbeddingMatrix::new(
        Method::Glove,
        cooc.window(),
        content_tokens(vocab),
        input,
        wt,
        None,
    );
    Ok((matrix, epoch_loss))
}

type GloveTensors<'a, 'b, F> = (
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
    &'a SharedMat<'b, F>,
);

fn glove_epoch<F: Scalar>(
    tensors: GloveTensors<'_, '_, F>,
    entries: &[(u32, u32, f64)],
    cfg: &GloveConfig,
) -> f64 {
    let (w, wt, b, bt, acc_w, acc_wt, acc_b, acc_bt) = tensors;
    let lr = cast::<F>(cfg.lr);
    let mut loss = 0.0f64;
    for &(i, j, x) in entries {
        let (i, j) = (i as usize, j as usize);
        // six rows from six distinct matrices: no aliasing even when i == j
        let wi = unsafe { w.row(i) };
        let wj = unsafe { wt.row(j) };
        let bi = unsafe { b.row(i) };
        let btj = unsafe { bt.row(j) };
        let aw = unsafe { acc_w.row(i) };
        let awt = unsafe { acc_wt.row(j) };
        let ab = unsafe { acc_b.row(i) };
        let abt = unsafe { acc_bt.row(j) };

        let f = glove_weight::<F>(x, cfg.x_max, cfg.alpha);
        let diff = dot(wi, wj) + bi[0] + btj[0] - cast::<F>(x.ln());
        loss += (f * diff * diff).to_f64().unwrap();
        let g_common = cast::<F>(2.0) * f * diff;

        for k in 0..cfg.dim {
            let gw = g_common * wj[k];
            let gwt = g_common * wi[k];
            // update with the pre-step accumulator, then grow it
            wi[k] = wi[k] - lr * gw / aw[k].sqrt();
            wj[k] = wj[k] - lr * gwt / awt[k].sqrt();
            aw[k] += gw * gw;
            awt[k] += gwt * gwt;
        }
        bi[0] = bi[0] - lr * g_common / ab[0].sqrt();
        btj[0] = btj[0] - lr * g_common / abt[0].sqrt();
        ab[0] += g_common * g_common;
        abt[0] += g_common * g_common;
    }
    loss
}

fn add_f64_atomic(bits: &AtomicU64, v: f64) {
    let mut cur = bits.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(cur) + v).to_bits();
        match bits.compare_exchange(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(now) => cur = now,
        }
    }
}

fn ones<F: Scalar>(rows: usize, cols: usize) -> Mat<F> {
    let mut m = Mat::zeros(rows, cols);
    m.fill(F::one());
    m
}

/// Loss of a single co-occurrence entry under the current parameters.
pub fn glove_entry_loss<F: Scalar>(
    wi: &[F],
    wj: &[F],
    bi: F,
    bj: F,
    x: f64,
    x_max: f64,
    alpha: f64,
) -> F {
    let diff = dot(wi, wj) + bi + bj - cast::<F>(x.ln());
    glove_weight::<F>(x, x_max, alpha) * diff * diff
}

/// Analytic gradients of [`glove_entry_loss`] with respect to both vectors
/// and both biases.
pub fn glove_entry_grads<F: Scalar>(
    wi: &[F],
    wj: &[F],
    bi: F,
    bj: F,
    x: f64,
    x_max: f64,
    alpha: f64,
) -> (F, Vec<F>, Vec<F>, F, F) {
    let f = glove_weight::<F>(x, x_max, alpha);
    let diff = dot(wi, wj) + bi + bj - cast::<F>(x.ln());
    let loss = f * diff * diff;
    let g = cast::<F>(2.0) * f * diff;
    let d_wi = wj.iter().map(|&v| g * v).collect();
    let d_wj = wi.iter().map(|&v| g * v).collect();
    (loss, d_wi, d_wj, g, g)
}
