//! Continuous bag-of-words trainer with negative sampling.
//!
//! For every corpus position the mean of the context input vectors predicts
//! the center word against sampled noise words under the logistic loss.
//! Plain SGD, learning rate decaying linearly to 1% of its initial value
//! over all scheduled positions.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::mat::{axpy, dot, scale, Mat};
use crate::scalar::{cast, log_sigmoid, sigmoid, Scalar};

use super::hogwild::SharedMat;
use super::{
    content_counts, content_tokens, init_input, total_tokens, EmbeddingMatrix, Method,
    NegativeSampler, SgdConfig,
};

pub fn train_cbow<F: Scalar>(
    sentences: &[Vec<u32>],
    vocab: &Vocabulary,
    cfg: &SgdConfig,
) -> Result<EmbeddingMatrix<F>> {
    assert!(cfg.window >= 1, "window must be at least 1");
    let rows = vocab.content_len();
    assert!(rows > 0, "vocabulary has no content tokens");
    let n_tokens = total_tokens(sentences);
    if n_tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    let sampler = NegativeSampler::from_counts(&content_counts(vocab));
    let mut input = init_input::<F>(rows, cfg.dim, cfg.seed);
    let mut output = Mat::<F>::zeros(rows, cfg.dim);
    let total = (n_tokens * cfg.epochs) as u64;
    let processed = AtomicU64::new(0);
    {
        let input_shared = SharedMat::new(&mut input);
        let output_shared = SharedMat::new(&mut output);
        let workers = cfg.workers.max(1);
        if workers == 1 {
            cbow_worker(&input_shared, &output_shared, sentences, 1, 0, &sampler, cfg, &processed, total);
        } else {
            std::thread::scope(|scope| {
                for w in 0..workers {
                    let input_ref = &input_shared;
                    let output_ref = &output_shared;
                    let sampler_ref = &sampler;
                    let processed_ref = &processed;
                    scope.spawn(move || {
                        cbow_worker(
                            input_ref, output_ref, sentences, workers, w, sampler_ref, cfg,
                            processed_ref, total,
                        )
                    });
                }
            });
        }
    }
    Ok(EmbeddingMatrix::new(
        Method::W2v,
        cfg.window,
        content_tokens(vocab),
        input,
        output,
        None,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cbow_worker<F: Scalar>(
    input: &SharedMat<F>,
    output: &SharedMat<F>,
    sentences: &[Vec<u32>],
    stride: usize,
    offset: usize,
    sampler: &NegativeSampler,
    cfg: &SgdConfig,
    processed: &AtomicU64,
    total: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, offset));
    let mut hidden = vec![F::zero(); cfg.dim];
    let mut err = vec![F::zero(); cfg.dim];
    for _ in 0..cfg.epochs {
        for sentence in sentences.iter().skip(offset).step_by(stride) {
            for t in 0..sentence.len() {
                let done = processed.fetch_add(1, Ordering::Relaxed);
                let lr = cfg.lr * (1.0 - done as f64 / total as f64).max(0.01);
                let lo = t.saturating_sub(cfg.window);
                let hi = (t + cfg.window).min(sentence.len() - 1);
                let n_ctx = hi - lo;
                if n_ctx == 0 {
                    continue;
                }
                hidden.fill(F::zero());
                for c in lo..=hi {
                    if c == t {
                        continue;
                    }
                    axpy(F::one(), unsafe { input.row(sentence[c] as usize) }, &mut hidden);
                }
                let inv_ctx = cast::<F>(1.0 / n_ctx as f64);
                scale(inv_ctx, &mut hidden);

                err.fill(F::zero());
                let center = sentence[t];
                let lr_f = cast::<F>(lr);
                for k in 0..=cfg.negatives {
                    let (target, label) = if k == 0 {
                        (center, F::one())
                    } else {
                        let neg = sampler.draw(&mut rng);
                        if neg == center {
                            continue;
                        }
                        (neg, F::zero())
                    };
                    let row = unsafe { output.row(target as usize) };
                    let g = sigmoid(dot(&hidden, row)) - label;
                    // err uses the pre-update output row
                    axpy(g, row, &mut err);
                    axpy(-lr_f * g, &hidden, row);
                }
                let step = -lr_f * inv_ctx;
                for c in lo..=hi {
                    if c == t {
                        continue;
                    }
                    axpy(step, &err, unsafe { input.row(sentence[c] as usize) });
                }
            }
        }
    }
}

pub(crate) fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Negative-sampling logistic loss of one CBOW example under the current
/// matrices. Reference path for gradient checks; the trainer's fused loop
/// must agree with the gradients of this function.
pub fn cbow_example_loss<F: Scalar>(
    input: &Mat<F>,
    output: &Mat<F>,
    context: &[u32],
    center: u32,
    negatives: &[u32],
) -> F {
    let hidden = mean_rows(input, context);
    let mut loss = -log_sigmoid(dot(&hidden, output.row(center as usize)));
    for &n in negatives {
        loss = loss - log_sigmoid(-dot(&hidden, output.row(n as usize)));
    }
    loss
}

/// Analytic gradients of [`cbow_example_loss`]: per distinct input row and
/// per distinct output row, accumulated over repeats.
pub fn cbow_example_grads<F: Scalar>(
    input: &Mat<F>,
    output: &Mat<F>,
    context: &[u32],
    center: u32,
    negatives: &[u32],
) -> (F, Vec<(u32, Vec<F>)>, Vec<(u32, Vec<F>)>) {
    let dim = input.cols();
    let hidden = mean_rows(input, context);
    let mut loss = F::zero();
    let mut d_hidden = vec![F::zero(); dim];
    let mut d_output: BTreeMap<u32, Vec<F>> = BTreeMap::new();
    let targets = std::iter::once((center, true)).chain(negatives.iter().map(|&n| (n, false)));
    for (target, positive) in targets {
        let row = output.row(target as usize);
        let s = dot(&hidden, row);
        let (label, pair_loss) = if positive {
            (F::one(), -log_sigmoid(s))
        } else {
            (F::zero(), -log_sigmoid(-s))
        };
        loss = loss + pair_loss;
        let g = sigmoid(s) - label;
        axpy(g, row, &mut d_hidden);
        axpy(g, &hidden, d_output.entry(target).or_insert_with(|| vec![F::zero(); dim]));
    }
    let inv_ctx = cast::<F>(1.0 / context.len() as f64);
    let mut d_input: BTreeMap<u32, Vec<F>> = BTreeMap::new();
    for &c in context {
        axpy(inv_ctx, &d_hidden, d_input.entry(c).or_insert_with(|| vec![F::zero(); dim]));
    }
    (loss, d_input.into_iter().collect(), d_output.into_iter().collect())
}

fn mean_rows<F: Scalar>(mat: &Mat<F>, rows: &[u32]) -> Vec<F> {
    assert!(!rows.is_empty(), "context must be non-empty");
    let mut mean = vec![F::zero(); mat.cols()];
    for &r in rows {
        axpy(F::one(), mat.row(r as usize), &mut mean);
    }
    scale(cast::<F>(1.0 / rows.len() as f64), &mut mean);
    mean
}
