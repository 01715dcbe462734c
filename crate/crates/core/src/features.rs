//! Bag-of-words counting and TF-IDF vectorization for the shallow
//! baselines.
//!
//! Vectors span the full vocabulary id range; the four special ids are
//! never counted, so their components stay zero. Unknown words are simply
//! absent, which keeps encoding total.

use crate::corpus::{Vocabulary, SPECIALS};
use crate::error::{Error, Result};
use crate::mat::norm;
use crate::scalar::{cast, Scalar};

/// Raw term counts of an id sequence over a V-length vector.
pub fn count_vector<F: Scalar>(sequence: &[u32], vocab_len: usize) -> Vec<F> {
    let mut counts = vec![F::zero(); vocab_len];
    for &id in sequence {
        if id >= SPECIALS.len() as u32 && (id as usize) < vocab_len {
            counts[id as usize] += F::one();
        }
    }
    counts
}

/// Smoothed idf model: `idf_t = ln((1+N)/(1+df_t)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel<F> {
    idf: Vec<F>,
    df: Vec<u64>,
    n_docs: usize,
}

impl<F: Scalar> TfidfModel<F> {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf(&self) -> &[F] {
        &self.idf
    }

    pub fn df(&self) -> &[u64] {
        &self.df
    }

    pub fn to_parts(&self) -> (Vec<f64>, Vec<u64>, usize) {
        (self.idf.iter().map(|v| v.to_f64().unwrap()).collect(), self.df.clone(), self.n_docs)
    }

    pub fn from_parts(idf: &[f64], df: Vec<u64>, n_docs: usize) -> Self {
        TfidfModel { idf: idf.iter().map(|&v| cast(v)).collect(), df, n_docs }
    }
}

/// Fit document frequencies over id sequences (each token counted once per
/// document).
pub fn fit_tfidf<F: Scalar>(documents: &[Vec<u32>], vocab: &Vocabulary) -> Result<TfidfModel<F>> {
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let v = vocab.len();
    let mut df = vec![0u64; v];
    let mut seen = vec![false; v];
    for doc in documents {
        seen.iter_mut().for_each(|s| *s = false);
        for &id in doc {
            let id = id as usize;
            if id >= SPECIALS.len() && id < v && !seen[id] {
                seen[id] = true;
                df[id] += 1;
            }
        }
    }
    let n = documents.len();
    let idf = df
        .iter()
        .map(|&d| cast::<F>(((1 + n) as f64 / (1 + d) as f64).ln() + 1.0))
        .collect();
    Ok(TfidfModel { idf, df, n_docs: n })
}

/// `count_t * idf_t`, scaled to unit L2 norm. An all-zero vector stays
/// all-zero.
pub fn transform_tfidf<F: Scalar>(sequence: &[u32], model: &TfidfModel<F>) -> Vec<F> {
    let mut v = count_vector::<F>(sequence, model.idf.len());
    for (x, &idf) in v.iter_mut().zip(&model.idf) {
        *x *= idf;
    }
    let n = norm(&v);
    if n > F::zero() {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}
