//! Unigram negative sampler with the count^0.75 distortion.

use rand::Rng;

/// Cumulative distribution over matrix rows with P(row) proportional to
/// count^0.75. Draws are binary searches over the cumulative table.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn from_counts(counts: &[u64]) -> Self {
        assert!(!counts.is_empty(), "sampler needs at least one row");
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        NegativeSampler { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Per-row probabilities (differences of the cumulative table).
    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u32 {
        let u: f64 = rng.gen();
        self.cumulative.partition_point(|&c| c <= u) as u32
    }
}
