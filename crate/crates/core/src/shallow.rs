//! Shallow baselines: multinomial Naive Bayes, multinomial Logistic
//! Regression, and a linear one-vs-rest SVM.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{axpy, dot, Mat};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShallowKind {
    Nb,
    Lr,
    Svm,
}

impl ShallowKind {
    pub fn name(self) -> &'static str {
        match self {
            ShallowKind::Nb => "nb",
            ShallowKind::Lr => "lr",
            ShallowKind::Svm => "svm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nb" => Some(ShallowKind::Nb),
            "lr" => Some(ShallowKind::Lr),
            "svm" => Some(ShallowKind::Svm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Params<F> {
    NaiveBayes { log_priors: Vec<F>, log_likelihood: Mat<F> },
    Linear { weights: Mat<F>, biases: Vec<F> },
}

#[derive(Debug, Clone)]
pub struct ShallowModel<F> {
    kind: ShallowKind,
    classes: usize,
    dim: usize,
    params: Params<F>,
}

impl<F: Scalar> ShallowModel<F> {
    pub fn kind(&self) -> ShallowKind {
        self.kind
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-class decision scores: log-posteriors for NB, logits for LR,
    /// margins for SVM.
    pub fn scores(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: x.len(), line: None });
        }
        Ok(match &self.params {
            Params::NaiveBayes { log_priors, log_likelihood } => (0..self.classes)
                .map(|c| log_priors[c] + dot(log_likelihood.row(c), x))
                .collect(),
            Params::Linear { weights, biases } => (0..self.classes)
                .map(|c| dot(weights.row(c), x) + biases[c])
                .collect(),
        })
    }

    /// Argmax of [`Self::scores`], ties resolved to the lowest class id.
    pub fn predict(&self, x: &[F]) -> Result<usize> {
        Ok(argmax_lowest(&self.scores(x)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ShallowFile::from(self);
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: ShallowFile = serde_json::from_str(&text)
            .map_err(|e| Error::CheckpointMismatch(format!("bad shallow model file: {e}")))?;
        file.into_model()
    }
}

pub fn argmax_lowest<F: Scalar>(scores: &[F]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Laplace-smoothed multinomial Naive Bayes over raw count vectors.
pub fn nb_fit<F: Scalar>(
    counts: &[Vec<F>],
    labels: &[usize],
    n_classes: usize,
    alpha: f64,
) -> Result<ShallowModel<F>> {
    assert!(alpha > 0.0, "alpha must be positive");
    assert_eq!(counts.len(), labels.len());
    let dim = counts.first().map(|c| c.len()).unwrap_or(0);
    let mut class_counts = vec![0usize; n_classes];
    let mut token_totals = Mat::<F>::zeros(n_classes, dim);
    for (x, &y) in counts.iter().zip(labels) {
        class_counts[y] += 1;
        axpy(F::one(), x, token_totals.row_mut(y));
    }
    if let Some(missing) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    let n = labels.len() as f64;
    let log_priors =
        class_counts.iter().map(|&c| cast::<F>((c as f64 / n).ln())).collect();
    let alpha_f = cast::<F>(alpha);
    let mut log_likelihood = Mat::<F>::zeros(n_classes, dim);
    for c in 0..n_classes {
        let total: F = token_totals.row(c).iter().copied().sum();
        let denom = total + alpha_f * cast::<F>(dim as f64);
        for t in 0..dim {
            log_likelihood[(c, t)] = ((token_totals[(c, t)] + alpha_f) / denom).ln();
        }
    }
    Ok(ShallowModel {
        kind: ShallowKind::Nb,
        classes: n_classes,
        dim,
        params: Params::NaiveBayes { log_priors, log_likelihood },
    })
}

/// Softmax cross-entropy with an L2 penalty `(l2/2)·||W||²` (biases
/// unregularized): mean loss over the batch plus penalty, and its exact
/// gradients. Shared by the trainer and the finite-difference checks.
pub fn lr_loss_and_grads<F: Scalar>(
    weights: &Mat<F>,
    biases: &[F],
    xs: &[Vec<F>],
    ys: &[usize],
    l2: f64,
) -> (F, Mat<F>, Vec<F>) {
    let classes = weights.rows();
    let dim = weights.cols();
    let inv_n = cast::<F>(1.0 / xs.len() as f64);
    let mut loss = F::zero();
    let mut d_w = Mat::<F>::zeros(classes, dim);
    let mut d_b = vec![F::zero(); classes];
    let mut logits = vec![F::zero(); classes];
    for (x, &y) in xs.iter().zip(ys) {
        weights.matvec(x, &mut logits);
        for (l, &b) in logits.iter_mut().zip(biases) {
            *l += b;
        }
        let probs = crate::net::softmax(&logits);
        loss += -probs[y].max(cast(1e-12)).ln() * inv_n;
        for c in 0..classes {
            let delta = (probs[c] - if c == y { F::one() } else { F::zero() }) * inv_n;
            axpy(delta, x, d_w.row_mut(c));
            d_b[c] += delta;
        }
    }
    let l2_f = cast::<F>(l2);
    for c in 0..classes {
        let row = weights.row(c);
        loss += cast::<F>(0.5) * l2_f * dot(row, row);
        axpy(l2_f, row, d_w.row_mut(c));
    }
    (loss, d_w, d_b)
}

/// Full-batch gradient descent on the softmax objective. Returns the model
/// and the per-epoch loss trace.
pub fn lr_fit<F: Scalar>(
    xs: &[Vec<F>],
    ys: &[usize],
    n_classes: usize,
    l2: f64,
    lr: f64,
    epochs: usize,
) -> Result<(ShallowModel<F>, Vec<f64>)> {
    assert!(l2 >= 0.0);
    assert_eq!(xs.len(), ys.len());
    let dim = xs.first().map(|x| x.len()).unwrap_or(0);
    let mut weights = Mat::<F>::zeros(n_classes, dim);
    let mut biases = vec![F::zero(); n_classes];
    let lr_f = cast::<F>(lr);
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, d_w, d_b) = lr_loss_and_grads(&weights, &biases, xs, ys, l2);
        let loss = loss.to_f64().unwrap();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        history.push(loss);
        axpy(-lr_f, d_w.as_slice(), weights.as_mut_slice());
        axpy(-lr_f, &d_b, &mut biases);
    }
    Ok((
        ShallowModel {
            kind: ShallowKind::Lr,
            classes: n_classes,
            dim,
            params: Params::Linear { weights, biases },
        },
        history,
    ))
}

/// One-vs-rest hinge objective:
/// `sum_c [ ||w_c||²/2 + C·sum_i max(0, 1 − y_ic·s_ic) ] / N`.
pub fn svm_objective<F: Scalar>(
    weights: &Mat<F>,
    biases: &[F],
    xs: &[Vec<F>],
    ys: &[usize],
    c_param: f64,
) -> f64 {
    let n = xs.len() as f64;
    let mut total = 0.0;
    for class in 0..weights.rows() {
        let row = weights.row(class);
        total += 0.5 * dot(row, row).to_f64().unwrap();
        for (x, &y) in xs.iter().zip(ys) {
            let target = if y == class { 1.0 } else { -1.0 };
            let s = (dot(row, x) + biases[class]).to_f64().unwrap();
            total += c_param * (1.0 - target * s).max(0.0);
        }
    }
    total / n
}

/// Per-class one-vs-rest hinge loss with L2 regularization, per-example
/// SGD in data order. Returns the model and the post-epoch objective trace.
pub fn svm_fit<F: Scalar>(
    xs: &[Vec<F>],
    ys: &[usize],
    n_classes: usize,
    c_param: f64,
    lr: f64,
    epochs: usize,
) -> Result<(ShallowModel<F>, Vec<f64>)> {
    assert!(c_param > 0.0, "C must be positive");
    assert_eq!(xs.len(), ys.len());
    let dim = xs.first().map(|x| x.len()).unwrap_or(0);
    let n = xs.len();
    let mut weights = Mat::<F>::zeros(n_classes, dim);
    let mut biases = vec![F::zero(); n_classes];
    let lr_f = cast::<F>(lr);
    let c_f = cast::<F>(c_param);
    let reg_scale = cast::<F>(1.0 / n as f64);
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        for (x, &y) in xs.iter().zip(ys) {
            for class in 0..n_classes {
                let target = if y == class { F::one() } else { -F::one() };
                let margin = target * (dot(weights.row(class), x) + biases[class]);
                // regularizer share of this example
                let shrink = lr_f * reg_scale;
                let row = weights.row_mut(class);
                for w in row.iter_mut() {
                    *w -= shrink * *w;
                }
                if margin < F::one() {
                    axpy(lr_f * c_f * target, x, weights.row_mut(class));
                    biases[class] += lr_f * c_f * target;
                }
            }
        }
        let obj = svm_objective(&weights, &biases, xs, ys, c_param);
        if !obj.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        history.push(obj);
    }
    Ok((
        ShallowModel {
            kind: ShallowKind::Svm,
            classes: n_classes,
            dim,
            params: Params::Linear { weights, biases },
        },
        history,
    ))
}

#[derive(Serialize, Deserialize)]
struct ShallowFile {
    kind: String,
    classes: usize,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_priors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    log_likelihood: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    biases: Option<Vec<f64>>,
}

impl ShallowFile {
    fn from<F: Scalar>(m: &ShallowModel<F>) -> Self {
        let to64 = |v: &[F]| v.iter().map(|x| x.to_f64().unwrap()).collect::<Vec<f64>>();
        match &m.params {
            Params::NaiveBayes { log_priors, log_likelihood } => ShallowFile {
                kind: m.kind.name().into(),
                classes: m.classes,
                dim: m.dim,
                log_priors: Some(to64(log_priors)),
                log_likelihood: Some(log_likelihood.to_f64_vec()),
                weights: None,
                biases: None,
            },
            Params::Linear { weights, biases } => ShallowFile {
                kind: m.kind.name().into(),
                classes: m.classes,
                dim: m.dim,
                log_priors: None,
                log_likelihood: None,
                weights: Some(weights.to_f64_vec()),
                biases: Some(to64(biases)),
            },
        }
    }

    fn into_model<F: Scalar>(self) -> Result<ShallowModel<F>> {
        let kind = ShallowKind::parse(&self.kind)
            .ok_or_else(|| Error::CheckpointMismatch(format!("unknown kind {:?}", self.kind)))?;
        let from64 = |v: Vec<f64>| v.into_iter().map(|x| cast::<F>(x)).collect::<Vec<F>>();
        let params = match kind {
            ShallowKind::Nb => {
                let lp = self.log_priors.ok_or_else(|| miss("log_priors"))?;
                let ll = self.log_likelihood.ok_or_else(|| miss("log_likelihood"))?;
                if ll.len() != self.classes * self.dim {
                    return Err(Error::CheckpointMismatch("likelihood shape".into()));
                }
                Params::NaiveBayes {
                    log_priors: from64(lp),
                    log_likelihood: Mat::from_f64_vec(self.classes, self.dim, &ll),
                }
            }
            ShallowKind::Lr | ShallowKind::Svm => {
                let w = self.weights.ok_or_else(|| miss("weights"))?;
                let b = self.biases.ok_or_else(|| miss("biases"))?;
                if w.len() != self.classes * self.dim {
                    return Err(Error::CheckpointMismatch("weight shape".into()));
                }
                Params::Linear {
                    weights: Mat::from_f64_vec(self.classes, self.dim, &w),
                    biases: from64(b),
                }
            }
        };
        Ok(ShallowModel { kind, classes: self.classes, dim: self.dim, params })
    }
}

fn miss(field: &str) -> Error {
    Error::CheckpointMismatch(format!("missing field {field}"))
}
