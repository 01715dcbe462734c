//! Vocabulary construction and labeled-dataset ingestion.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::textnorm::{normalize_document, NormalizedToken, RuleSet};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

pub const NUM_CLASSES: usize = 3;
/// Fixed label order so confusion matrices are reproducible.
pub const LABEL_NAMES: [&str; 3] = ["negative", "neutral", "positive"];

pub fn parse_label(s: &str) -> Option<usize> {
    LABEL_NAMES.iter().position(|&n| n == s)
}

/// Bidirectional token/id map with raw frequency counts. Ids are dense:
/// the four specials occupy 0..=3 (PAD first, so id 0 masks), content
/// tokens follow in descending-count order with lexical tie-break.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
    min_count: u64,
}

impl Vocabulary {
    /// Count a normalized token stream and keep tokens with frequency
    /// `>= min_count`. Counts stay raw (pre-filter) for the retained tokens.
    pub fn build<I, S>(stream: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut raw: HashMap<String, u64> = HashMap::new();
        for token in stream {
            *raw.entry(token.as_ref().to_string()).or_insert(0) += 1;
        }
        let mut kept: Vec<(String, u64)> =
            raw.into_iter().filter(|&(_, c)| c >= min_count).collect();
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_counted(kept, min_count))
    }

    fn from_counted(kept: Vec<(String, u64)>, min_count: u64) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0u64; SPECIALS.len()];
        for (t, c) in kept {
            tokens.push(t);
            counts.push(c);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index, counts, min_count }
    }

    /// Total size including the four specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= SPECIALS.len()
    }

    /// Number of content (non-special) tokens.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - SPECIALS.len()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    /// Ids of content tokens, in id order.
    pub fn content_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (SPECIALS.len() as u32)..(self.tokens.len() as u32)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for id in self.content_ids() {
            out.push_str(self.token(id));
            out.push('\t');
            out.push_str(&self.count(id).to_string());
            out.push('\n');
        }
        let mut f = fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Load a `token<TAB>count` file; line order defines the ids after the
    /// specials. The file does not carry the original threshold, so
    /// `min_count` is taken as the smallest stored count.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut kept = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let token = parts.next().unwrap_or("").to_string();
            let count: u64 = parts
                .next()
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    reason: "expected `token<TAB>count`".into(),
                })?
                .trim()
                .parse()
                .map_err(|e| Error::Parse { line: lineno + 1, reason: format!("bad count: {e}") })?;
            kept.push((token, count));
        }
        if kept.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let min_count = kept.iter().map(|&(_, c)| c).min().unwrap_or(1);
        Ok(Self::from_counted(kept, min_count))
    }
}

/// Token-id sequences padded to a fixed length, with class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub sequences: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
    pub max_len: usize,
}

impl LabeledDataset {
    pub fn new(max_len: usize) -> Self {
        LabeledDataset { sequences: Vec::new(), labels: Vec::new(), max_len }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, sequence: Vec<u32>, label: usize) {
        debug_assert_eq!(sequence.len(), self.max_len);
        self.sequences.push(sequence);
        self.labels.push(label);
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        LabeledDataset {
            sequences: idx.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            max_len: self.max_len,
        }
    }
}

/// Encode normalized tokens as ids, mapping out-of-vocabulary tokens to UNK,
/// right-padding with PAD and truncating at `max_len`.
pub fn encode_padded(tokens: &[NormalizedToken], vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> =
        tokens.iter().take(max_len).map(|t| vocab.id_or_unk(t.as_str())).collect();
    ids.resize(max_len, PAD);
    ids
}

/// Read a `text<TAB>label` TSV, normalizing the text column with `rules`.
pub fn load_labeled_tsv(
    path: impl AsRef<Path>,
    rules: &RuleSet,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    labeled_from_str(&text, rules, vocab, max_len)
}

pub fn labeled_from_str(
    text: &str,
    rules: &RuleSet,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset::new(max_len);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::BadRow(lineno + 1));
        }
        let label = parse_label(cols[1].trim()).ok_or(Error::BadLabel(lineno + 1))?;
        let tokens = normalize_document(cols[0], rules)?;
        ds.push(encode_padded(&tokens, vocab, max_len), label);
    }
    Ok(ds)
}

/// Train/validation/test proportions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        if train < 0.0 || val < 0.0 || test < 0.0 {
            return Err(Error::BadSplitSpec("fractions must be non-negative".into()));
        }
        if ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::BadSplitSpec(format!(
                "fractions sum to {}, expected 1.0",
                train + val + test
            )));
        }
        Ok(SplitSpec { train, val, test, seed })
    }
}

/// Stratified index split: per class, proportions match the spec within one
/// instance (largest-remainder rounding, leftover preference train > val >
/// test). Errors if any part would be empty for a class that is present.
pub fn stratified_indices(
    labels: &[usize],
    n_classes: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    const PART_NAMES: [&str; 3] = ["train", "val", "test"];
    for class in 0..n_classes {
        let mut members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n = members.len();
        let fracs = [spec.train, spec.val, spec.test];
        let exact: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
        let mut alloc: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
        let mut leftover = n - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - alloc[a] as f64;
            let rb = exact[b] - alloc[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &p in &order {
            if leftover == 0 {
                break;
            }
            alloc[p] += 1;
            leftover -= 1;
        }
        for (p, &count) in alloc.iter().enumerate() {
            if count == 0 {
                return Err(Error::DegenerateSplit { part: PART_NAMES[p], class });
            }
        }
        let mut cursor = 0usize;
        for (p, &count) in alloc.iter().enumerate() {
            parts[p].extend_from_slice(&members[cursor..cursor + count]);
            cursor += count;
        }
    }
    let [train, val, test] = parts;
    Ok((train, val, test))
}

pub fn stratified_split(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    if ds.is_empty() {
        return Err(Error::EmptySplit);
    }
    let (tr, va, te) = stratified_indices(&ds.labels, NUM_CLASSES, spec)?;
    Ok((ds.subset(&tr), ds.subset(&va), ds.subset(&te)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::RuleSet;

    fn vocab_from(pairs: &[(&str, u64)], min_count: u64) -> Result<Vocabulary> {
        let stream: Vec<String> = pairs
            .iter()
            .flat_map(|&(t, c)| std::iter::repeat(t.to_string()).take(c as usize))
            .collect();
        Vocabulary::build(stream, min_count)
    }

    #[test]
    fn min_count_threshold_is_inclusive() {
        let v = vocab_from(&[("a", 6), ("b", 4)], 5).unwrap();
        assert_eq!(v.content_len(), 1);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), None);

        let v = vocab_from(&[("a", 5)], 5).unwrap();
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.count(4), 5);
    }

    #[test]
    fn ids_ordered_by_count_then_lexical() {
        let v = vocab_from(&[("y", 7), ("x", 7), ("z", 2)], 5).unwrap();
        assert_eq!(v.id("x"), Some(4));
        assert_eq!(v.id("y"), Some(5));
        assert_eq!(v.id("z"), None);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(matches!(vocab_from(&[("a", 1)], 5), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn vocabulary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        let v = vocab_from(&[("acha", 9), ("phone", 5), ("hai", 5)], 5).unwrap();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v.len(), loaded.len());
        for id in v.content_ids() {
            assert_eq!(v.token(id), loaded.token(id));
            assert_eq!(v.count(id), loaded.count(id));
            assert_eq!(loaded.id(v.token(id)), Some(id));
        }
    }

    #[test]
    fn labeled_rows_encode_pad_and_labels() {
        let v = vocab_from(&[("acha", 5), ("phone", 5)], 5).unwrap();
        let rules = RuleSet::empty();
        let ds =
            labeled_from_str("acha phone\tpositive\n\tneutral\n", &rules, &v, 4).unwrap();
        assert_eq!(ds.sequences[0], vec![v.id("acha").unwrap(), v.id("phone").unwrap(), PAD, PAD]);
        assert_eq!(ds.labels[0], 2);
        assert_eq!(ds.sequences[1], vec![PAD; 4]);
        assert_eq!(ds.labels[1], 1);
    }

    #[test]
    fn bad_rows_and_labels_are_rejected() {
        let v = vocab_from(&[("acha", 5)], 5).unwrap();
        let rules = RuleSet::empty();
        assert!(matches!(
            labeled_from_str("acha\tgreat\n", &rules, &v, 4),
            Err(Error::BadLabel(1))
        ));
        assert!(matches!(
            labeled_from_str("acha\tpositive\textra\n", &rules, &v, 4),
            Err(Error::BadRow(1))
        ));
    }

    #[test]
    fn oov_tokens_become_unk() {
        let v = vocab_from(&[("acha", 5)], 5).unwrap();
        let ds = labeled_from_str("acha zzz\tnegative\n", &RuleSet::empty(), &v, 3).unwrap();
        assert_eq!(ds.sequences[0], vec![4, UNK, PAD]);
    }

    fn toy_dataset(per_class: [usize; 3]) -> LabeledDataset {
        let mut ds = LabeledDataset::new(2);
        for (class, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                ds.push(vec![4 + (i % 2) as u32, PAD], class);
            }
        }
        ds
    }

    #[test]
    fn split_sizes_match_fractions() {
        let ds = toy_dataset([50, 30, 20]);
        let spec = SplitSpec::new(0.6, 0.1, 0.3, 11).unwrap();
        let (tr, va, te) = stratified_split(&ds, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (60, 10, 30));
    }

    #[test]
    fn single_class_split_is_proportional() {
        let ds = toy_dataset([0, 10, 0]);
        let spec = SplitSpec::new(0.6, 0.1, 0.3, 3).unwrap();
        let (tr, va, te) = stratified_split(&ds, &spec).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (6, 1, 3));
        assert!(tr.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn split_is_seed_deterministic_and_a_partition() {
        let ds = toy_dataset([9, 7, 8]);
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 42).unwrap();
        let a = stratified_indices(&ds.labels, 3, &spec).unwrap();
        let b = stratified_indices(&ds.labels, 3, &spec).unwrap();
        assert_eq!(a, b);

        let mut all: Vec<usize> =
            a.0.iter().chain(a.1.iter()).chain(a.2.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_split_is_reported() {
        let ds = toy_dataset([3, 3, 3]);
        let spec = SplitSpec::new(0.6, 0.1, 0.3, 0).unwrap();
        assert!(matches!(
            stratified_split(&ds, &spec),
            Err(Error::DegenerateSplit { part: "val", .. })
        ));
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec::new(0.5, 0.2, 0.3, 0).is_ok());
        assert!(SplitSpec::new(0.5, 0.2, 0.2, 0).is_err());
        assert!(SplitSpec::new(-0.1, 0.6, 0.5, 0).is_err());
    }
}
