//! Multi-class evaluation: confusion matrix, accuracy, and per-class /
//! macro / weighted precision, recall, F1.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Confusion rows are true classes, columns are predictions. The 0/0 case
/// (no true and no predicted instances of a class) scores 0 and pulls the
/// macro means down.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n: usize,
}

pub fn evaluate_predictions(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<EvaluationReport> {
    assert_eq!(y_true.len(), y_pred.len());
    if y_true.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let n = y_true.len();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let fp: usize = (0..n_classes).filter(|&r| r != c).map(|r| confusion[r][c]).sum();
        let fn_: usize = (0..n_classes).filter(|&k| k != c).map(|k| confusion[c][k]).sum();
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics { precision, recall, f1, support: tp + fn_ });
    }
    let k = n_classes as f64;
    Ok(EvaluationReport {
        accuracy: correct as f64 / n as f64,
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        confusion,
        per_class,
        n,
    })
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

impl EvaluationReport {
    /// Support-weighted means, the alternative averaging convention.
    pub fn weighted_precision(&self) -> f64 {
        self.weighted(|m| m.precision)
    }

    pub fn weighted_recall(&self) -> f64 {
        self.weighted(|m| m.recall)
    }

    pub fn weighted_f1(&self) -> f64 {
        self.weighted(|m| m.f1)
    }

    fn weighted(&self, f: impl Fn(&ClassMetrics) -> f64) -> f64 {
        let total: usize = self.per_class.iter().map(|m| m.support).sum();
        if total == 0 {
            return 0.0;
        }
        self.per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    }

    /// Plain-text table for terminal output.
    pub fn to_table_string(&self, label_names: &[&str]) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:>12}", "true\\pred"));
        for name in label_names {
            out.push_str(&format!("{name:>12}"));
        }
        out.push('\n');
        for (r, row) in self.confusion.iter().enumerate() {
            out.push_str(&format!("{:>12}", label_names[r]));
            for v in row {
                out.push_str(&format!("{v:>12}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("\naccuracy        {:.4}\n", self.accuracy));
        out.push_str(&format!("macro precision {:.4}\n", self.macro_precision));
        out.push_str(&format!("macro recall    {:.4}\n", self.macro_recall));
        out.push_str(&format!("macro f1        {:.4}\n", self.macro_f1));
        out
    }

    /// Machine-readable `key<TAB>value` lines.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n\t{}\n", self.n));
        out.push_str(&format!("accuracy\t{}\n", self.accuracy));
        out.push_str(&format!("macro_precision\t{}\n", self.macro_precision));
        out.push_str(&format!("macro_recall\t{}\n", self.macro_recall));
        out.push_str(&format!("macro_f1\t{}\n", self.macro_f1));
        out.push_str(&format!("weighted_precision\t{}\n", self.weighted_precision()));
        out.push_str(&format!("weighted_recall\t{}\n", self.weighted_recall()));
        out.push_str(&format!("weighted_f1\t{}\n", self.weighted_f1()));
        for (r, row) in self.confusion.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                out.push_str(&format!("confusion_{r}_{c}\t{v}\n"));
            }
        }
        out
    }
}
