//! Neural word embeddings trained from scratch: CBOW with negative
//! sampling, subword skip-gram, and GloVe over a distance-weighted
//! co-occurrence matrix. Plus lookup, mean-pooled document vectors,
//! nearest-neighbour queries, and a plain-text interchange format.
//!
//! Trainers work in "row space": sentence encodings are row indices into
//! the embedding matrix (vocabulary content ids shifted down by the four
//! specials), with out-of-vocabulary tokens dropped from the stream.

mod fasttext;
mod glove;
mod hogwild;
mod sampler;
mod subword;
mod w2v;

pub use fasttext::{skipgram_example_grads, skipgram_example_loss, train_fasttext};
pub use glove::{
    build_cooc, glove_entry_grads, glove_entry_loss, glove_weight, train_glove, CoocMatrix,
    GloveConfig,
};
pub use sampler::NegativeSampler;
pub use subword::{bucket_ids, fnv1a, ngrams};
pub use w2v::{cbow_example_grads, cbow_example_loss, train_cbow};

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Vocabulary, SPECIALS};
use crate::error::{Error, Result};
use crate::mat::{axpy, cosine, norm, scale, Mat};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    W2v,
    FastText,
    Glove,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::W2v => "w2v",
            Method::FastText => "fasttext",
            Method::Glove => "glove",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "w2v" => Some(Method::W2v),
            "fasttext" => Some(Method::FastText),
            "glove" => Some(Method::Glove),
            _ => None,
        }
    }
}

/// Character n-gram hashing setup for the subword model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig { min_n: 3, max_n: 6, buckets: 1 << 21 }
    }
}

/// Hashed n-gram bucket vectors kept alongside a fastText matrix; resolves
/// out-of-vocabulary queries.
#[derive(Debug, Clone)]
pub struct SubwordTable<F> {
    pub config: SubwordConfig,
    pub vectors: Mat<F>,
}

/// Shared SGD hyperparameters for the CBOW and fastText trainers.
#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub lr: f64,
    pub seed: u64,
    /// More than one worker switches to unsynchronized (hogwild) updates
    /// and forfeits bit-reproducibility.
    pub workers: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { dim: 200, window: 10, epochs: 20, negatives: 5, lr: 0.025, seed: 1, workers: 1 }
    }
}

/// A trained V x dim embedding with its training-side context vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix<F> {
    method: Method,
    dim: usize,
    window: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    input: Mat<F>,
    output: Mat<F>,
    subword: Option<SubwordTable<F>>,
}

impl<F: Scalar> EmbeddingMatrix<F> {
    pub(crate) fn new(
        method: Method,
        window: usize,
        tokens: Vec<String>,
        input: Mat<F>,
        output: Mat<F>,
        subword: Option<SubwordTable<F>>,
    ) -> Self {
        let dim = input.cols();
        debug_assert_eq!(tokens.len(), input.rows());
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        EmbeddingMatrix { method, dim, window, tokens, index, input, output, subword }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn subword(&self) -> Option<&SubwordTable<F>> {
        self.subword.as_ref()
    }

    pub fn input(&self) -> &Mat<F> {
        &self.input
    }

    pub fn output(&self) -> &Mat<F> {
        &self.output
    }

    pub fn row_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn row_vector(&self, row: usize) -> &[F] {
        self.input.row(row)
    }

    /// Vector for a token. In-vocabulary tokens read their row; unknown
    /// tokens are resolved through n-gram buckets when a subword table is
    /// present (mean of bucket vectors, zero if the word is too short to
    /// produce any n-gram).
    pub fn vector(&self, token: &str) -> Option<Vec<F>> {
        if let Some(row) = self.row_of(token) {
            return Some(self.input.row(row).to_vec());
        }
        let table = self.subword.as_ref()?;
        let ids = bucket_ids(token, &table.config);
        let mut v = vec![F::zero(); self.dim];
        if ids.is_empty() {
            return Some(v);
        }
        for &b in &ids {
            axpy(F::one(), table.vectors.row(b as usize), &mut v);
        }
        scale(cast::<F>(1.0 / ids.len() as f64), &mut v);
        Some(v)
    }

    /// Mean of the vectors of resolvable tokens; all-unresolvable or empty
    /// input gives the zero vector.
    pub fn doc_embed<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<F> {
        let mut acc = vec![F::zero(); self.dim];
        let mut n = 0usize;
        for t in tokens {
            let resolvable = match self.method {
                Method::FastText => self.vector(t.as_ref()),
                _ => self.row_of(t.as_ref()).map(|r| self.input.row(r).to_vec()),
            };
            if let Some(v) = resolvable {
                axpy(F::one(), &v, &mut acc);
                n += 1;
            }
        }
        if n > 0 {
            scale(cast::<F>(1.0 / n as f64), &mut acc);
        }
        acc
    }

    /// Exact top-k cosine ranking over the vocabulary, descending, ties
    /// broken lexically. `k` is clamped to the vocabulary size.
    pub fn nearest(&self, query: &[F], k: usize) -> Result<Vec<(String, F)>> {
        assert!(k >= 1, "k must be at least 1");
        if norm(query) == F::zero() {
            return Err(Error::ZeroQuery);
        }
        let mut scored: Vec<(usize, F)> = (0..self.tokens.len())
            .map(|r| (r, cosine(query, self.input.row(r))))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| self.tokens[a.0].cmp(&self.tokens[b.0]))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(r, s)| (self.tokens[r].clone(), s)).collect())
    }

    /// Write the text interchange format: header `V dim`, then one
    /// `token f1 .. f_dim` line per word at eight significant digits. A
    /// fastText matrix also writes `<path>.subword` with its non-zero
    /// bucket vectors.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{} {}", self.tokens.len(), self.dim)?;
        for (r, token) in self.tokens.iter().enumerate() {
            write!(w, "{token}")?;
            for v in self.input.row(r) {
                write!(w, " {v:.7e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        if let Some(table) = &self.subword {
            let mut sw = BufWriter::new(fs::File::create(sidecar_path(path))?);
            writeln!(
                sw,
                "{} {} {} {}",
                table.config.buckets, self.dim, table.config.min_n, table.config.max_n
            )?;
            for b in 0..table.config.buckets {
                let row = table.vectors.row(b);
                if row.iter().all(|v| *v == F::zero()) {
                    continue;
                }
                write!(sw, "{b}")?;
                for v in row {
                    write!(sw, " {v:.7e}")?;
                }
                writeln!(sw)?;
            }
            sw.flush()?;
        }
        Ok(())
    }

    /// Load the text format. The method is inferred from the presence of
    /// the subword sidecar; training-side vectors and the window are not
    /// part of the interchange format.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(fs::File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::BadHeader("empty file".into()))??;
        let (vocab_size, dim) = parse_header2(&header)?;
        let mut tokens = Vec::with_capacity(vocab_size);
        let mut data: Vec<F> = Vec::with_capacity(vocab_size * dim);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let lineno = i + 2;
            let mut parts = line.split(' ');
            let token = parts
                .next()
                .ok_or_else(|| Error::Parse { line: lineno, reason: "missing token".into() })?;
            let values = parse_floats::<F>(parts, lineno)?;
            if values.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: values.len(),
                    line: Some(lineno),
                });
            }
            tokens.push(token.to_string());
            data.extend(values);
        }
        if tokens.len() != vocab_size {
            return Err(Error::BadHeader(format!(
                "header says {vocab_size} rows, file has {}",
                tokens.len()
            )));
        }
        let input = Mat::from_vec(vocab_size, dim, data);
        let output = Mat::zeros(vocab_size, dim);

        let sidecar = sidecar_path(path);
        let (method, subword) = if sidecar.exists() {
            (Method::FastText, Some(load_subword::<F>(&sidecar, dim)?))
        } else {
            (Method::W2v, None)
        };
        Ok(EmbeddingMatrix::new(method, 0, tokens, input, output, subword))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".subword");
    os.into()
}

fn parse_header2(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let a = it.next().and_then(|s| s.parse().ok());
    let b = it.next().and_then(|s| s.parse().ok());
    match (a, b, it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(Error::BadHeader(format!("expected `V dim`, got {line:?}"))),
    }
}

fn parse_floats<'a, F: Scalar>(
    parts: impl Iterator<Item = &'a str>,
    lineno: usize,
) -> Result<Vec<F>> {
    let mut out = Vec::new();
    for p in parts {
        if p.is_empty() {
            continue;
        }
        let v: f64 = p
            .parse()
            .map_err(|e| Error::Parse { line: lineno, reason: format!("bad float {p:?}: {e}") })?;
        out.push(cast(v));
    }
    Ok(out)
}

fn load_subword<F: Scalar>(path: &Path, dim: usize) -> Result<SubwordTable<F>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::BadHeader("empty subword file".into()))??;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::BadHeader(format!("bad subword header: {e}")))?;
    if fields.len() != 4 {
        return Err(Error::BadHeader("expected `buckets dim min_n max_n`".into()));
    }
    let (buckets, sdim, min_n, max_n) = (fields[0], fields[1], fields[2], fields[3]);
    if sdim != dim {
        return Err(Error::DimMismatch { expected: dim, got: sdim, line: Some(1) });
    }
    let mut vectors = Mat::zeros(buckets, dim);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = i + 2;
        let mut parts = line.split(' ');
        let bucket: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse { line: lineno, reason: "missing bucket index".into() })?;
        let values = parse_floats::<F>(parts, lineno)?;
        if values.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: values.len(), line: Some(lineno) });
        }
        vectors.row_mut(bucket).copy_from_slice(&values);
    }
    Ok(SubwordTable { config: SubwordConfig { min_n, max_n, buckets }, vectors })
}

/// Encode one sentence for embedding training: vocabulary content ids are
/// shifted into matrix-row space, out-of-vocabulary tokens are dropped.
pub fn encode_sentence<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<u32> {
    tokens
        .iter()
        .filter_map(|t| vocab.id(t.as_ref()))
        .filter(|&id| id >= SPECIALS.len() as u32)
        .map(|id| id - SPECIALS.len() as u32)
        .collect()
}

pub(crate) fn content_tokens(vocab: &Vocabulary) -> Vec<String> {
    vocab.content_ids().map(|id| vocab.token(id).to_string()).collect()
}

pub(crate) fn content_counts(vocab: &Vocabulary) -> Vec<u64> {
    vocab.content_ids().map(|id| vocab.count(id)).collect()
}

/// Word-vector init: uniform in [-0.5/dim, 0.5/dim], seeded.
pub(crate) fn init_input<F: Scalar>(rows: usize, dim: usize, seed: u64) -> Mat<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    Mat::uniform(rows, dim, -half, half, &mut rng)
}

pub(crate) fn total_tokens(sentences: &[Vec<u32>]) -> usize {
    sentences.iter().map(|s| s.len()).sum()
}
