//! Subword skip-gram trainer.
//!
//! The center word's representation is the average of its word vector and
//! its character n-gram bucket vectors (word bracketed as `<word>`); that
//! representation predicts each context word against sampled noise words.
//! The input-side gradient is split equally over all contributing vectors.
//!
//! Bucket vectors start at zero: untouched buckets then stay exactly zero,
//! which keeps the sidecar file sparse and makes unseen-n-gram lookups
//! contribute nothing.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::mat::{axpy, dot, scale, Mat};
use crate::scalar::{cast, log_sigmoid, sigmoid, Scalar};

use super::hogwild::SharedMat;
use super::w2v::worker_seed;
use super::{
    bucket_ids, content_counts, content_tokens, init_input, total_tokens, EmbeddingMatrix, Method,
    NegativeSampler, SgdConfig, SubwordConfig, SubwordTable,
};

pub fn train_fasttext<F: Scalar>(
    sentences: &[Vec<u32>],
    vocab: &Vocabulary,
    cfg: &SgdConfig,
    subword: &SubwordConfig,
) -> Result<EmbeddingMatrix<F>> {
    assert!(cfg.window >= 1, "window must be at least 1");
    assert!(
        subword.min_n >= 1 && subword.min_n <= subword.max_n,
        "need 1 <= min_n <= max_n"
    );
    let rows = vocab.content_len();
    assert!(rows > 0, "vocabulary has no content tokens");
    let n_tokens = total_tokens(sentences);
    if n_tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    let tokens = content_tokens(vocab);
    // n-gram buckets resolved once per vocabulary word
    let word_buckets: Vec<Vec<u32>> =
        tokens.iter().map(|t| bucket_ids(t, subword)).collect();

    let sampler = NegativeSampler::from_counts(&content_counts(vocab));
    let mut input = init_input::<F>(rows, cfg.dim, cfg.seed);
    let mut buckets = Mat::<F>::zeros(subword.buckets, cfg.dim);
    let mut output = Mat::<F>::zeros(rows, cfg.dim);
    let total = (n_tokens * cfg.epochs) as u64;
    let processed = AtomicU64::new(0);
    {
        let input_shared = SharedMat::new(&mut input);
        let bucket_shared = SharedMat::new(&mut buckets);
        let output_shared = SharedMat::new(&mut output);
        let workers = cfg.workers.max(1);
        if workers == 1 {
            fasttext_worker(
                &input_shared, &bucket_shared, &output_shared, sentences, &word_buckets, 1, 0,
                &sampler, cfg, &processed, total,
            );
        } else {
            std::thread::scope(|scope| {
                for w in 0..workers {
                    let input_ref = &input_shared;
                    let bucket_ref = &bucket_shared;
                    let output_ref = &output_shared;
                    let sampler_ref = &sampler;
                    let processed_ref = &processed;
                    let word_buckets_ref = &word_buckets;
                    scope.spawn(move || {
                        fasttext_worker(
                            input_ref, bucket_ref, output_ref, sentences, word_buckets_ref,
                            workers, w, sampler_ref, cfg, processed_ref, total,
                        )
                    });
                }
            });
        }
    }
    // Stored word vectors become the composed representation the model
    // trained with; the raw bucket table stays for OOV queries.
    for (r, ids) in word_buckets.iter().enumerate() {
        let mut composed = input.row(r).to_vec();
        for &b in ids {
            axpy(F::one(), buckets.row(b as usize), &mut composed);
        }
        scale(cast::<F>(1.0 / (ids.len() + 1) as f64), &mut composed);
        input.row_mut(r).copy_from_slice(&composed);
    }
    Ok(EmbeddingMatrix::new(
        Method::FastText,
        cfg.window,
        tokens,
        input,
        output,
        Some(SubwordTable { config: *subword, vectors: buckets }),
    ))
}

#[allow(clippy::too_many_arguments)]
fn fasttext_worker<F: Scalar>(
    input: &SharedMat<F>,
    buckets: &SharedMat<F>,
    output: &SharedMat<F>,
    sentences: &[Vec<u32>],
    word_buckets: &[Vec<u32>],
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
                let lr_f = cast::<F>(lr);
                let center = sentence[t] as usize;
                let grams = &word_buckets[center];
                let inv_parts = cast::<F>(1.0 / (grams.len() + 1) as f64);

                let lo = t.saturating_sub(cfg.window);
                let hi = (t + cfg.window).min(sentence.len() - 1);
                for c in lo..=hi {
                    if c == t {
                        continue;
                    }
                    // representation recomposed from the current rows
                    hidden.fill(F::zero());
                    axpy(F::one(), unsafe { input.row(center) }, &mut hidden);
                    for &b in grams {
                        axpy(F::one(), unsafe { buckets.row(b as usize) }, &mut hidden);
                    }
                    scale(inv_parts, &mut hidden);

                    let ctx = sentence[c];
                    err.fill(F::zero());
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, F::one())
                        } else {
                            let neg = sampler.draw(&mut rng);
                            if neg == ctx {
                                continue;
                            }
                            (neg, F::zero())
                        };
                        let row = unsafe { output.row(target as usize) };
                        let g = sigmoid(dot(&hidden, row)) - label;
                        axpy(g, row, &mut err);
                        axpy(-lr_f * g, &hidden, row);
                    }
                    let step = -lr_f * inv_parts;
                    axpy(step, &err, unsafe { input.row(center) });
                    for &b in grams {
                        axpy(step, &err, unsafe { buckets.row(b as usize) });
                    }
                }
            }
        }
    }
}

/// Skip-gram loss of one (center, context) example where the center
/// representation averages the word row and its bucket rows.
pub fn skipgram_example_loss<F: Scalar>(
    input: &Mat<F>,
    buckets: &Mat<F>,
    output: &Mat<F>,
    center: u32,
    center_buckets: &[u32],
    context: u32,
    negatives: &[u32],
) -> F {
    let hidden = compose(input, buckets, center, center_buckets);
    let mut loss = -log_sigmoid(dot(&hidden, output.row(context as usize)));
    for &n in negatives {
        loss = loss - log_sigmoid(-dot(&hidden, output.row(n as usize)));
    }
    loss
}

/// Analytic gradients of [`skipgram_example_loss`]: the word-row gradient,
/// per distinct bucket-row gradients, and per distinct output-row gradients.
#[allow(clippy::type_complexity)]
pub fn skipgram_example_grads<F: Scalar>(
    input: &Mat<F>,
    buckets: &Mat<F>,
    output: &Mat<F>,
    center: u32,
    center_buckets: &[u32],
    context: u32,
    negatives: &[u32],
) -> (F, Vec<F>, Vec<(u32, Vec<F>)>, Vec<(u32, Vec<F>)>) {
    let dim = input.cols();
    let hidden = compose(input, buckets, center, center_buckets);
    let mut loss = F::zero();
    let mut d_hidden = vec![F::zero(); dim];
    let mut d_output: BTreeMap<u32, Vec<F>> = BTreeMap::new();
    let targets = std::iter::once((context, true)).chain(negatives.iter().map(|&n| (n, false)));
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
    let inv_parts = cast::<F>(1.0 / (center_buckets.len() + 1) as f64);
    let mut d_word = vec![F::zero(); dim];
    axpy(inv_parts, &d_hidden, &mut d_word);
    let mut d_buckets: BTreeMap<u32, Vec<F>> = BTreeMap::new();
    for &b in center_buckets {
        axpy(inv_parts, &d_hidden, d_buckets.entry(b).or_insert_with(|| vec![F::zero(); dim]));
    }
    (loss, d_word, d_buckets.into_iter().collect(), d_output.into_iter().collect())
}

fn compose<F: Scalar>(input: &Mat<F>, buckets: &Mat<F>, center: u32, grams: &[u32]) -> Vec<F> {
    let mut hidden = input.row(center as usize).to_vec();
    for &b in grams {
        axpy(F::one(), buckets.row(b as usize), &mut hidden);
    }
    scale(cast::<F>(1.0 / (grams.len() + 1) as f64), &mut hidden);
    hidden
}

#[cfg(test)]
mod tests {
    use super::super::encode_sentence;
    use super::*;
    use crate::mat::cosine;

    fn vocab_of(tokens: &[&str]) -> Vocabulary {
        let stream: Vec<String> = tokens
            .iter()
            .flat_map(|t| std::iter::repeat(t.to_string()).take(5))
            .collect();
        Vocabulary::build(stream, 1).unwrap()
    }

    #[test]
    fn word_above_max_ngram_length_uses_word_vector_alone() {
        let vocab = vocab_of(&["acha", "thik"]);
        let sub = SubwordConfig { min_n: 7, max_n: 7, buckets: 64 };
        let sentences = vec![vec![0u32, 1]];
        let cfg = SgdConfig { dim: 4, window: 1, epochs: 1, negatives: 1, ..Default::default() };
        let m = train_fasttext::<f64>(&sentences, &vocab, &cfg, &sub).unwrap();
        // bracketed "acha" has 6 chars < 7: no n-grams, so every bucket row
        // stayed at its zero init
        assert!(m.subword().unwrap().vectors.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oov_vector_is_mean_of_its_bucket_rows() {
        let vocab = vocab_of(&["acha", "achi", "kese"]);
        let sub = SubwordConfig { min_n: 3, max_n: 4, buckets: 128 };
        let sentences = vec![vec![0u32, 1, 2], vec![2, 1, 0]];
        let cfg = SgdConfig { dim: 6, window: 2, epochs: 3, ..Default::default() };
        let m = train_fasttext::<f64>(&sentences, &vocab, &cfg, &sub).unwrap();

        let oov = "achaa";
        assert!(m.row_of(oov).is_none());
        let got = m.vector(oov).unwrap();
        let ids = bucket_ids(oov, &sub);
        let table = m.subword().unwrap();
        let mut want = vec![0.0f64; 6];
        for &b in &ids {
            axpy(1.0, table.vectors.row(b as usize), &mut want);
        }
        scale(1.0 / ids.len() as f64, &mut want);
        assert_eq!(got, want);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut input = Mat::<f64>::uniform(4, 3, -0.7, 0.7, &mut rng);
        let mut buckets = Mat::<f64>::uniform(8, 3, -0.7, 0.7, &mut rng);
        let mut output = Mat::<f64>::uniform(4, 3, -0.7, 0.7, &mut rng);
        let center = 0u32;
        let center_buckets = [1u32, 5, 5];
        let context = 2u32;
        let negatives = [1u32, 3];
        let (_, d_word, d_buckets, d_output) = skipgram_example_grads(
            &input, &buckets, &output, center, &center_buckets, context, &negatives,
        );
        let h = 1e-5;
        let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-8);
        let loss = |input: &Mat<f64>, buckets: &Mat<f64>, output: &Mat<f64>| {
            skipgram_example_loss(input, buckets, output, center, &center_buckets, context, &negatives)
        };
        for j in 0..3 {
            let orig = input[(0, j)];
            input[(0, j)] = orig + h;
            let up = loss(&input, &buckets, &output);
            input[(0, j)] = orig - h;
            let down = loss(&input, &buckets, &output);
            input[(0, j)] = orig;
            assert!(rel(d_word[j], (up - down) / (2.0 * h)) < 1e-5);
        }
        for (row, grad) in &d_buckets {
            for j in 0..3 {
                let orig = buckets[(*row as usize, j)];
                buckets[(*row as usize, j)] = orig + h;
                let up = loss(&input, &buckets, &output);
                buckets[(*row as usize, j)] = orig - h;
                let down = loss(&input, &buckets, &output);
                buckets[(*row as usize, j)] = orig;
                assert!(rel(grad[j], (up - down) / (2.0 * h)) < 1e-5);
            }
        }
        for (row, grad) in &d_output {
            for j in 0..3 {
                let orig = output[(*row as usize, j)];
                output[(*row as usize, j)] = orig + h;
                let up = loss(&input, &buckets, &output);
                output[(*row as usize, j)] = orig - h;
                let down = loss(&input, &buckets, &output);
                output[(*row as usize, j)] = orig;
                assert!(rel(grad[j], (up - down) / (2.0 * h)) < 1e-5);
            }
        }
    }

    #[test]
    fn shared_context_words_end_up_close() {
        let mut sentences_text: Vec<Vec<String>> = Vec::new();
        for i in 0..150 {
            let a = format!("ctx{}", i % 4);
            let b = format!("ctx{}", (i + 1) % 4);
            let word = if i % 2 == 0 { "acha" } else { "zabardast" };
            sentences_text.push(vec![a, word.to_string(), b]);
            sentences_text.push(vec![
                format!("nctx{}", i % 4),
                format!("noise{}", i % 4),
                format!("nctx{}", (i + 2) % 4),
            ]);
        }
        let stream: Vec<String> = sentences_text.iter().flatten().cloned().collect();
        let vocab = Vocabulary::build(stream, 1).unwrap();
        let sentences: Vec<Vec<u32>> =
            sentences_text.iter().map(|s| encode_sentence(s, &vocab)).collect();
        let cfg = SgdConfig {
            dim: 16,
            window: 2,
            epochs: 15,
            negatives: 5,
            lr: 0.05,
            seed: 13,
            workers: 1,
        };
        let sub = SubwordConfig { min_n: 3, max_n: 5, buckets: 4096 };
        let m = train_fasttext::<f64>(&sentences, &vocab, &cfg, &sub).unwrap();
        let acha = m.vector("acha").unwrap();
        let zab = m.vector("zabardast").unwrap();
        for i in 0..4 {
            let other = m.vector(&format!("noise{i}")).unwrap();
            assert!(cosine(&acha, &zab) > cosine(&acha, &other));
        }
    }

    #[test]
    fn multi_worker_training_stays_finite_and_separates() {
        let mut sentences_text: Vec<Vec<String>> = Vec::new();
        for i in 0..100 {
            sentences_text.push(vec![
                format!("a{}", i % 3),
                "acha".into(),
                format!("a{}", (i + 1) % 3),
            ]);
            sentences_text.push(vec![
                format!("b{}", i % 3),
                "bura".into(),
                format!("b{}", (i + 1) % 3),
            ]);
        }
        let stream: Vec<String> = sentences_text.iter().flatten().cloned().collect();
        let vocab = Vocabulary::build(stream, 1).unwrap();
        let sentences: Vec<Vec<u32>> =
            sentences_text.iter().map(|s| encode_sentence(s, &vocab)).collect();
        let cfg = SgdConfig {
            dim: 8,
            window: 2,
            epochs: 10,
            negatives: 3,
            lr: 0.05,
            seed: 3,
            workers: 2,
        };
        let sub = SubwordConfig { min_n: 3, max_n: 4, buckets: 512 };
        let m = train_fasttext::<f64>(&sentences, &vocab, &cfg, &sub).unwrap();
        assert!(m.input().as_slice().iter().all(|v| v.is_finite()));
        let acha = m.vector("acha").unwrap();
        let a0 = m.vector("a0").unwrap();
        let b0 = m.vector("b0").unwrap();
        assert!(cosine(&acha, &a0) > cosine(&acha, &b0));
    }
}
