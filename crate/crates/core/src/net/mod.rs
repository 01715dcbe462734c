//! The multi-channel hybrid classifier.
//!
//! Three channels (one per embedding family) each run three uni-directional
//! GRUs: the center GRU reads the word stream itself, the left GRU reads the
//! stream shifted right behind a begin-of-sequence token, and the right GRU
//! reads the stream shifted left ahead of an end-of-sequence token,
//! processed back to front. Shifts are built over the valid (non-pad)
//! prefix, so the left context of the first word is BOS and the right
//! context of the last word is EOS regardless of padding. Per step the
//! three hidden states concatenate to 3H per channel, 9H across channels;
//! an optional Bi-GRU refines that to 2H'. Max-over-time pooling (valid
//! steps only) feeds a dense softmax head.
//!
//! "Static" embedding tables are never touched by training; in
//! static+non-static mode each channel's right table is fine-tuned while
//! left and center stay frozen.

mod gru;

pub use gru::{gru_backward, run_gru, Direction, GruCell, GruGrads, GruRun, StepState};

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, BOS, EOS, NUM_CLASSES, PAD};
use crate::embed::{EmbeddingMatrix, Method};
use crate::error::{Error, Result};
use crate::mat::{axpy, Mat};
use crate::scalar::{cast, Scalar};

pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln p_label`, with probabilities clamped at 1e-12.
pub fn cross_entropy<F: Scalar>(probs: &[F], label: usize) -> F {
    -probs[label].max(cast(1e-12)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticMode {
    /// All nine embedding tables frozen.
    AllStatic,
    /// Left and center tables frozen, right tables fine-tuned.
    StaticPlusNonStatic,
}

impl StaticMode {
    pub fn name(self) -> &'static str {
        match self {
            StaticMode::AllStatic => "all",
            StaticMode::StaticPlusNonStatic => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(StaticMode::AllStatic),
            "mixed" => Some(StaticMode::StaticPlusNonStatic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub bigru_hidden: usize,
    pub static_mode: StaticMode,
    pub use_bigru: bool,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            bigru_hidden: 64,
            static_mode: StaticMode::StaticPlusNonStatic,
            use_bigru: true,
            seed: 1,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable<F> {
    pub vectors: Mat<F>,
    pub trainable: bool,
}

impl<F: Scalar> EmbeddingTable<F> {
    /// Rows for every vocabulary id. PAD and the other specials start at
    /// zero; content tokens copy their pretrained vector (the subword path
    /// resolves tokens missing from a fastText matrix; tokens unknown to a
    /// w2v/GloVe matrix stay zero).
    fn from_pretrained(vocab: &Vocabulary, matrix: &EmbeddingMatrix<F>, trainable: bool) -> Self {
        let mut vectors = Mat::zeros(vocab.len(), matrix.dim());
        for id in vocab.content_ids() {
            if let Some(v) = matrix.vector(vocab.token(id)) {
                vectors.row_mut(id as usize).copy_from_slice(&v);
            }
        }
        EmbeddingTable { vectors, trainable }
    }
}

#[derive(Debug, Clone)]
pub struct Channel<F> {
    pub source: Method,
    pub left_table: EmbeddingTable<F>,
    pub center_table: EmbeddingTable<F>,
    pub right_table: EmbeddingTable<F>,
    pub left_cell: GruCell<F>,
    pub center_cell: GruCell<F>,
    pub right_cell: GruCell<F>,
}

impl<F: Scalar> Channel<F> {
    pub fn dim(&self) -> usize {
        self.left_table.vectors.cols()
    }
}

#[derive(Debug, Clone)]
pub struct HybridModel<F> {
    pub channels: Vec<Channel<F>>,
    pub bigru: Option<(GruCell<F>, GruCell<F>)>,
    pub dense_w: Mat<F>,
    pub dense_b: Vec<F>,
    pub config: ModelConfig,
}

impl<F: Scalar> HybridModel<F> {
    /// Assemble the model from three pretrained matrices (one per channel).
    /// All nine GRUs and the optional Bi-GRU pair get their own
    /// Glorot-initialized weights; the right tables start from the same
    /// pretrained vectors as their frozen siblings.
    pub fn new(
        vocab: &Vocabulary,
        pretrained: [&EmbeddingMatrix<F>; 3],
        config: ModelConfig,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let channels = pretrained
            .iter()
            .map(|m| {
                let trainable_right = config.static_mode == StaticMode::StaticPlusNonStatic;
                Channel {
                    source: m.method(),
                    left_table: EmbeddingTable::from_pretrained(vocab, m, false),
                    center_table: EmbeddingTable::from_pretrained(vocab, m, false),
                    right_table: EmbeddingTable::from_pretrained(vocab, m, trainable_right),
                    left_cell: GruCell::glorot(h, m.dim(), &mut rng),
                    center_cell: GruCell::glorot(h, m.dim(), &mut rng),
                    right_cell: GruCell::glorot(h, m.dim(), &mut rng),
                }
            })
            .collect();
        let unified_dim = 9 * h;
        let bigru = if config.use_bigru {
            Some((
                GruCell::glorot(config.bigru_hidden, unified_dim, &mut rng),
                GruCell::glorot(config.bigru_hidden, unified_dim, &mut rng),
            ))
        } else {
            None
        };
        let pooled_dim = if config.use_bigru { 2 * config.bigru_hidden } else { unified_dim };
        HybridModel {
            channels,
            bigru,
            dense_w: Mat::glorot(NUM_CLASSES, pooled_dim, &mut rng),
            dense_b: vec![F::zero(); NUM_CLASSES],
            config,
        }
    }

    pub fn pooled_dim(&self) -> usize {
        self.dense_w.cols()
    }

    pub fn vocab_rows(&self) -> usize {
        self.channels[0].left_table.vectors.rows()
    }

    /// Class probabilities for one padded id sequence.
    pub fn forward(&self, seq: &[u32]) -> Result<Vec<F>> {
        Ok(self.forward_one(seq)?.probs)
    }

    pub fn forward_batch(&self, seqs: &[Vec<u32>]) -> Result<Vec<Vec<F>>> {
        assert!(!seqs.is_empty(), "batch must be non-empty");
        seqs.iter().map(|s| self.forward(s)).collect()
    }

    /// Argmax class, ties to the lowest id.
    pub fn predict(&self, seq: &[u32]) -> Result<usize> {
        let probs = self.forward(seq)?;
        Ok(crate::shallow::argmax_lowest(&probs))
    }

    /// Probabilities produced for a sequence with no valid step: pooling is
    /// empty, so only the dense bias speaks. Streaming consumers use this
    /// instead of the `AllPadSequence` error.
    pub fn degenerate_probs(&self) -> Vec<F> {
        softmax(&self.dense_b)
    }

    /// Mean cross-entropy loss and summed-then-averaged gradients over a
    /// batch. Static tables get no gradient tensor at all.
    pub fn backward_batch(&self, seqs: &[Vec<u32>], labels: &[usize]) -> Result<(F, ModelGrads<F>)> {
        assert_eq!(seqs.len(), labels.len());
        assert!(!seqs.is_empty(), "batch must be non-empty");
        let mut grads = ModelGrads::zeros_like(self);
        let mut loss = F::zero();
        for (seq, &label) in seqs.iter().zip(labels) {
            let cache = self.forward_one(seq)?;
            loss += cross_entropy(&cache.probs, label);
            self.backward_one(seq, &cache, label, &mut grads);
        }
        let inv = cast::<F>(1.0 / seqs.len() as f64);
        loss *= inv;
        for view in grads.views_mut() {
            for g in view {
                *g *= inv;
            }
        }
        Ok((loss, grads))
    }

    fn forward_one(&self, seq: &[u32]) -> Result<SeqCache<F>> {
        let valid = valid_len(seq);
        if valid == 0 {
            return Err(Error::AllPadSequence);
        }
        let len = seq.len();
        let h = self.config.hidden;
        let mut channels = Vec::with_capacity(self.channels.len());
        for ch in &self.channels {
            let stream_ids = build_streams(seq, valid);
            let tables = [&ch.left_table, &ch.center_table, &ch.right_table];
            let xs: Vec<Vec<Vec<F>>> = (0..3)
                .map(|s| {
                    (0..len)
                        .map(|t| {
                            if t < valid {
                                tables[s].vectors.row(stream_ids[s][t] as usize).to_vec()
                            } else {
                                vec![F::zero(); ch.dim()]
                            }
                        })
                        .collect()
                })
                .collect();
            let runs = [
                run_gru(&ch.left_cell, &xs[0], valid, Direction::Forward),
                run_gru(&ch.center_cell, &xs[1], valid, Direction::Forward),
                run_gru(&ch.right_cell, &xs[2], valid, Direction::Backward),
            ];
            channels.push(ChannelCache { stream_ids, xs, runs });
        }

        let unified_dim = 9 * h;
        let mut unified = vec![vec![F::zero(); unified_dim]; len];
        for (t, row) in unified.iter_mut().enumerate().take(valid) {
            let mut off = 0;
            for cc in &channels {
                for run in &cc.runs {
                    row[off..off + h].copy_from_slice(&run.outputs[t]);
                    off += h;
                }
            }
        }

        let bigru = self.bigru.as_ref().map(|(fwd, bwd)| {
            (
                run_gru(fwd, &unified, valid, Direction::Forward),
                run_gru(bwd, &unified, valid, Direction::Backward),
            )
        });

        let pooled_dim = self.pooled_dim();
        let mut pooled = vec![F::neg_infinity(); pooled_dim];
        let mut pool_src = vec![0usize; pooled_dim];
        for t in 0..valid {
            for k in 0..pooled_dim {
                let v = match &bigru {
                    Some((fwd, bwd)) => {
                        let hb = self.config.bigru_hidden;
                        if k < hb {
                            fwd.outputs[t][k]
                        } else {
                            bwd.outputs[t][k - hb]
                        }
                    }
                    None => unified[t][k],
                };
                if v > pooled[k] {
                    pooled[k] = v;
                    pool_src[k] = t;
                }
            }
        }

        let mut logits = self.dense_b.clone();
        self.dense_w.matvec_acc(&pooled, &mut logits);
        let probs = softmax(&logits);
        Ok(SeqCache { valid, channels, unified, bigru, pooled, pool_src, probs })
    }

    fn backward_one(&self, seq: &[u32], cache: &SeqCache<F>, label: usize, grads: &mut ModelGrads<F>) {
        let h = self.config.hidden;
        let len = seq.len();

        // softmax + cross entropy fuse to probs - onehot
        let mut d_logits = cache.probs.clone();
        d_logits[label] -= F::one();

        grads.dense_w.outer_acc(&d_logits, &cache.pooled);
        axpy(F::one(), &d_logits, &mut grads.dense_b);
        let mut d_pooled = vec![F::zero(); cache.pooled.len()];
        self.dense_w.tr_matvec_acc(&d_logits, &mut d_pooled);

        // pooling: gradient only at the argmax step of each component
        let mut d_unified = vec![vec![F::zero(); 9 * h]; len];
        match (&self.bigru, &cache.bigru) {
            (Some((fwd_cell, bwd_cell)), Some((fwd_run, bwd_run))) => {
                let hb = self.config.bigru_hidden;
                let mut d_fwd = vec![vec![F::zero(); hb]; len];
                let mut d_bwd = vec![vec![F::zero(); hb]; len];
                for k in 0..d_pooled.len() {
                    let t = cache.pool_src[k];
                    if k < hb {
                        d_fwd[t][k] = d_pooled[k];
                    } else {
                        d_bwd[t][k - hb] = d_pooled[k];
                    }
                }
                let (g_fwd, g_bwd) = grads.bigru.as_mut().expect("bigru grads");
                let dx_f = gru_backward(fwd_cell, &cache.unified, fwd_run, &d_fwd, g_fwd);
                let dx_b = gru_backward(bwd_cell, &cache.unified, bwd_run, &d_bwd, g_bwd);
                for t in 0..len {
                    axpy(F::one(), &dx_f[t], &mut d_unified[t]);
                    axpy(F::one(), &dx_b[t], &mut d_unified[t]);
                }
            }
            _ => {
                for k in 0..d_pooled.len() {
                    d_unified[cache.pool_src[k]][k] = d_pooled[k];
                }
            }
        }

        for (c, (ch, cc)) in self.channels.iter().zip(&cache.channels).enumerate() {
            let cells = [&ch.left_cell, &ch.center_cell, &ch.right_cell];
            let tables = [&ch.left_table, &ch.center_table, &ch.right_table];
            for s in 0..3 {
                let off = c * 3 * h + s * h;
                let d_outputs: Vec<Vec<F>> =
                    d_unified.iter().map(|row| row[off..off + h].to_vec()).collect();
                let cell_grads = &mut grads.channels[c].cells[s];
                let d_xs = gru_backward(cells[s], &cc.xs[s], &cc.runs[s], &d_outputs, cell_grads);
                if tables[s].trainable {
                    let table_grad = grads.channels[c].tables[s]
                        .as_mut()
                        .expect("trainable table has a gradient tensor");
                    for t in 0..cache.valid {
                        let row = cc.stream_ids[s][t] as usize;
                        axpy(F::one(), &d_xs[t], table_grad.row_mut(row));
                    }
                }
            }
        }
    }

    /// Mutable views of every trainable tensor, in the canonical order
    /// shared with [`ModelGrads::views`].
    pub fn trainable_params_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for ch in &mut self.channels {
            for table in [&mut ch.left_table, &mut ch.center_table, &mut ch.right_table] {
                if table.trainable {
                    out.push(table.vectors.as_mut_slice());
                }
            }
            for cell in [&mut ch.left_cell, &mut ch.center_cell, &mut ch.right_cell] {
                out.extend(cell_slices_mut(cell));
            }
        }
        if let Some((fwd, bwd)) = &mut self.bigru {
            out.extend(cell_slices_mut(fwd));
            out.extend(cell_slices_mut(bwd));
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(&mut self.dense_b);
        out
    }

    /// Name, shape, and trainability of every tensor in the model.
    pub fn inventory(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        let table_info = |name: String, t: &EmbeddingTable<F>| TensorInfo {
            name,
            rows: t.vectors.rows(),
            cols: t.vectors.cols(),
            trainable: t.trainable,
        };
        for (c, ch) in self.channels.iter().enumerate() {
            let src = ch.source.name();
            out.push(table_info(format!("channel{c}.{src}.left.table"), &ch.left_table));
            out.push(table_info(format!("channel{c}.{src}.center.table"), &ch.center_table));
            out.push(table_info(format!("channel{c}.{src}.right.table"), &ch.right_table));
            for (s, cell) in
                [("left", &ch.left_cell), ("center", &ch.center_cell), ("right", &ch.right_cell)]
            {
                out.extend(cell_inventory(&format!("channel{c}.{src}.{s}.gru"), cell));
            }
        }
        if let Some((fwd, bwd)) = &self.bigru {
            out.extend(cell_inventory("bigru.forward", fwd));
            out.extend(cell_inventory("bigru.backward", bwd));
        }
        out.push(TensorInfo {
            name: "dense.weights".into(),
            rows: self.dense_w.rows(),
            cols: self.dense_w.cols(),
            trainable: true,
        });
        out.push(TensorInfo {
            name: "dense.biases".into(),
            rows: self.dense_b.len(),
            cols: 1,
            trainable: true,
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

fn cell_inventory<F: Scalar>(prefix: &str, cell: &GruCell<F>) -> Vec<TensorInfo> {
    let mat = |n: &str, m: &Mat<F>| TensorInfo {
        name: format!("{prefix}.{n}"),
        rows: m.rows(),
        cols: m.cols(),
        trainable: true,
    };
    let vec = |n: &str, v: &[F]| TensorInfo {
        name: format!("{prefix}.{n}"),
        rows: v.len(),
        cols: 1,
        trainable: true,
    };
    vec![
        mat("w_z", &cell.w_z),
        mat("w_r", &cell.w_r),
        mat("w_h", &cell.w_h),
        mat("u_z", &cell.u_z),
        mat("u_r", &cell.u_r),
        mat("u_h", &cell.u_h),
        vec("b_z", &cell.b_z),
        vec("b_r", &cell.b_r),
        vec("b_h", &cell.b_h),
    ]
}

fn cell_slices_mut<F: Scalar>(cell: &mut GruCell<F>) -> [&mut [F]; 9] {
    [
        cell.w_z.as_mut_slice(),
        cell.w_r.as_mut_slice(),
        cell.w_h.as_mut_slice(),
        cell.u_z.as_mut_slice(),
        cell.u_r.as_mut_slice(),
        cell.u_h.as_mut_slice(),
        &mut cell.b_z,
        &mut cell.b_r,
        &mut cell.b_h,
    ]
}

fn grad_cell_slices<F: Scalar>(g: &GruGrads<F>) -> [&[F]; 9] {
    [
        g.w_z.as_slice(),
        g.w_r.as_slice(),
        g.w_h.as_slice(),
        g.u_z.as_slice(),
        g.u_r.as_slice(),
        g.u_h.as_slice(),
        &g.b_z,
        &g.b_r,
        &g.b_h,
    ]
}

fn grad_cell_slices_mut<F: Scalar>(g: &mut GruGrads<F>) -> [&mut [F]; 9] {
    [
        g.w_z.as_mut_slice(),
        g.w_r.as_mut_slice(),
        g.w_h.as_mut_slice(),
        g.u_z.as_mut_slice(),
        g.u_r.as_mut_slice(),
        g.u_h.as_mut_slice(),
        &mut g.b_z,
        &mut g.b_r,
        &mut g.b_h,
    ]
}

/// Number of leading non-pad ids; padding is always a suffix.
pub fn valid_len(seq: &[u32]) -> usize {
    seq.iter().position(|&id| id == PAD).unwrap_or(seq.len())
}

/// Left/center/right context streams over the valid prefix: the left
/// stream shifts right behind BOS, the right stream shifts left ahead of
/// EOS. Positions beyond `valid` carry PAD and are masked downstream.
pub fn build_streams(seq: &[u32], valid: usize) -> [Vec<u32>; 3] {
    let len = seq.len();
    let mut left = vec![PAD; len];
    let mut center = vec![PAD; len];
    let mut right = vec![PAD; len];
    for t in 0..valid {
        left[t] = if t == 0 { BOS } else { seq[t - 1] };
        center[t] = seq[t];
        right[t] = if t + 1 < valid { seq[t + 1] } else { EOS };
    }
    [left, center, right]
}

struct ChannelCache<F> {
    stream_ids: [Vec<u32>; 3],
    xs: Vec<Vec<Vec<F>>>,
    runs: [GruRun<F>; 3],
}

struct SeqCache<F> {
    valid: usize,
    channels: Vec<ChannelCache<F>>,
    unified: Vec<Vec<F>>,
    bigru: Option<(GruRun<F>, GruRun<F>)>,
    pooled: Vec<F>,
    pool_src: Vec<usize>,
    probs: Vec<F>,
}

/// Per-channel gradient tensors; a `None` table means the table is static
/// and receives no gradient at all.
pub struct ChannelGrads<F> {
    pub tables: [Option<Mat<F>>; 3],
    pub cells: [GruGrads<F>; 3],
}

pub struct ModelGrads<F> {
    pub channels: Vec<ChannelGrads<F>>,
    pub bigru: Option<(GruGrads<F>, GruGrads<F>)>,
    pub dense_w: Mat<F>,
    pub dense_b: Vec<F>,
}

impl<F: Scalar> ModelGrads<F> {
    pub fn zeros_like(model: &HybridModel<F>) -> Self {
        let channels = model
            .channels
            .iter()
            .map(|ch| {
                let table = |t: &EmbeddingTable<F>| {
                    t.trainable.then(|| Mat::zeros(t.vectors.rows(), t.vectors.cols()))
                };
                ChannelGrads {
                    tables: [
                        table(&ch.left_table),
                        table(&ch.center_table),
                        table(&ch.right_table),
                    ],
                    cells: [
                        GruGrads::zeros_like(&ch.left_cell),
                        GruGrads::zeros_like(&ch.center_cell),
                        GruGrads::zeros_like(&ch.right_cell),
                    ],
                }
            })
            .collect();
        ModelGrads {
            channels,
            bigru: model
                .bigru
                .as_ref()
                .map(|(f, b)| (GruGrads::zeros_like(f), GruGrads::zeros_like(b))),
            dense_w: Mat::zeros(model.dense_w.rows(), model.dense_w.cols()),
            dense_b: vec![F::zero(); model.dense_b.len()],
        }
    }

    /// Views in the canonical order shared with
    /// [`HybridModel::trainable_params_mut`].
    pub fn views(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for ch in &self.channels {
            for table in ch.tables.iter().flatten() {
                out.push(table.as_slice());
            }
            for cell in &ch.cells {
                out.extend(grad_cell_slices(cell));
            }
        }
        if let Some((f, b)) = &self.bigru {
            out.extend(grad_cell_slices(f));
            out.extend(grad_cell_slices(b));
        }
        out.push(self.dense_w.as_slice());
        out.push(&self.dense_b);
        out
    }

    pub fn views_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for ch in &mut self.channels {
            for table in ch.tables.iter_mut().flatten() {
                out.push(table.as_mut_slice());
            }
            for cell in &mut ch.cells {
                out.extend(grad_cell_slices_mut(cell));
            }
        }
        if let Some((f, b)) = &mut self.bigru {
            out.extend(grad_cell_slices_mut(f));
            out.extend(grad_cell_slices_mut(b));
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(&mut self.dense_b);
        out
    }

    pub fn global_norm(&self) -> f64 {
        let mut sum = 0.0f64;
        for view in self.views() {
            for &g in view {
                let g = g.to_f64().unwrap();
                sum += g * g;
            }
        }
        sum.sqrt()
    }

    /// Rescale all gradients so the global norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let factor = cast::<F>(max_norm / norm);
            for view in self.views_mut() {
                for g in view {
                    *g *= factor;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// checkpoint format

#[derive(Serialize, Deserialize)]
pub struct TensorData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TensorData {
    fn from_mat<F: Scalar>(m: &Mat<F>) -> Self {
        TensorData { rows: m.rows(), cols: m.cols(), data: m.to_f64_vec() }
    }

    fn to_mat<F: Scalar>(&self) -> Result<Mat<F>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::CheckpointMismatch(format!(
                "tensor {}x{} carries {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Mat::from_f64_vec(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
pub struct CellData {
    pub w_z: TensorData,
    pub w_r: TensorData,
    pub w_h: TensorData,
    pub u_z: TensorData,
    pub u_r: TensorData,
    pub u_h: TensorData,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl CellData {
    fn from_cell<F: Scalar>(c: &GruCell<F>) -> Self {
        let v64 = |v: &[F]| v.iter().map(|x| x.to_f64().unwrap()).collect();
        CellData {
            w_z: TensorData::from_mat(&c.w_z),
            w_r: TensorData::from_mat(&c.w_r),
            w_h: TensorData::from_mat(&c.w_h),
            u_z: TensorData::from_mat(&c.u_z),
            u_r: TensorData::from_mat(&c.u_r),
            u_h: TensorData::from_mat(&c.u_h),
            b_z: v64(&c.b_z),
            b_r: v64(&c.b_r),
            b_h: v64(&c.b_h),
        }
    }

    fn to_cell<F: Scalar>(&self) -> Result<GruCell<F>> {
        let vf = |v: &[f64]| v.iter().map(|&x| cast::<F>(x)).collect::<Vec<F>>();
        Ok(GruCell {
            w_z: self.w_z.to_mat()?,
            w_r: self.w_r.to_mat()?,
            w_h: self.w_h.to_mat()?,
            u_z: self.u_z.to_mat()?,
            u_r: self.u_r.to_mat()?,
            u_h: self.u_h.to_mat()?,
            b_z: vf(&self.b_z),
            b_r: vf(&self.b_r),
            b_h: vf(&self.b_h),
        })
    }
}

#[derive(Serialize, Deserialize)]
pub struct TableData {
    pub tensor: TensorData,
    pub trainable: bool,
}

#[derive(Serialize, Deserialize)]
pub struct ChannelData {
    pub source: String,
    pub left_table: TableData,
    pub center_table: TableData,
    pub right_table: TableData,
    pub left_cell: CellData,
    pub center_cell: CellData,
    pub right_cell: CellData,
}

/// Self-describing checkpoint: architecture config, every tensor, and the
/// pipeline metadata `predict` needs (vocabulary, normalization rules,
/// padded length).
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub precision: String,
    pub hidden: usize,
    pub bigru_hidden: usize,
    pub static_mode: String,
    pub use_bigru: bool,
    pub seed: u64,
    pub clip_norm: f64,
    pub channels: Vec<ChannelData>,
    pub bigru: Option<(CellData, CellData)>,
    pub dense_w: TensorData,
    pub dense_b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<(String, u64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_path: Option<String>,
}

impl<F: Scalar> HybridModel<F> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let table = |t: &EmbeddingTable<F>| TableData {
            tensor: TensorData::from_mat(&t.vectors),
            trainable: t.trainable,
        };
        Checkpoint {
            precision: F::PRECISION.to_string(),
            hidden: self.config.hidden,
            bigru_hidden: self.config.bigru_hidden,
            static_mode: self.config.static_mode.name().to_string(),
            use_bigru: self.config.use_bigru,
            seed: self.config.seed,
            clip_norm: self.config.clip_norm,
            channels: self
                .channels
                .iter()
                .map(|ch| ChannelData {
                    source: ch.source.name().to_string(),
                    left_table: table(&ch.left_table),
                    center_table: table(&ch.center_table),
                    right_table: table(&ch.right_table),
                    left_cell: CellData::from_cell(&ch.left_cell),
                    center_cell: CellData::from_cell(&ch.center_cell),
                    right_cell: CellData::from_cell(&ch.right_cell),
                })
                .collect(),
            bigru: self
                .bigru
                .as_ref()
                .map(|(f, b)| (CellData::from_cell(f), CellData::from_cell(b))),
            dense_w: TensorData::from_mat(&self.dense_w),
            dense_b: self.dense_b.iter().map(|v| v.to_f64().unwrap()).collect(),
            vocab: None,
            max_len: None,
            rules: None,
            rules_path: None,
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        if cp.channels.len() != 3 {
            return Err(Error::CheckpointMismatch(format!(
                "expected 3 channels, found {}",
                cp.channels.len()
            )));
        }
        let static_mode = StaticMode::parse(&cp.static_mode).ok_or_else(|| {
            Error::CheckpointMismatch(format!("unknown static mode {:?}", cp.static_mode))
        })?;
        if cp.use_bigru != cp.bigru.is_some() {
            return Err(Error::CheckpointMismatch(
                "bigru flag disagrees with stored tensors".into(),
            ));
        }
        let mut channels = Vec::with_capacity(3);
        for cd in &cp.channels {
            let source = Method::parse(&cd.source).ok_or_else(|| {
                Error::CheckpointMismatch(format!("unknown channel source {:?}", cd.source))
            })?;
            let table = |t: &TableData| -> Result<EmbeddingTable<F>> {
                Ok(EmbeddingTable { vectors: t.tensor.to_mat()?, trainable: t.trainable })
            };
            let ch = Channel {
                source,
                left_table: table(&cd.left_table)?,
                center_table: table(&cd.center_table)?,
                right_table: table(&cd.right_table)?,
                left_cell: cd.left_cell.to_cell()?,
                center_cell: cd.center_cell.to_cell()?,
                right_cell: cd.right_cell.to_cell()?,
            };
            let dim = ch.left_table.vectors.cols();
            for (cell, name) in
                [(&ch.left_cell, "left"), (&ch.center_cell, "center"), (&ch.right_cell, "right")]
            {
                if cell.input_dim() != dim {
                    return Err(Error::CheckpointMismatch(format!(
                        "{name} cell input dim {} disagrees with table dim {dim}",
                        cell.input_dim()
                    )));
                }
                if cell.hidden() != cp.hidden {
                    return Err(Error::CheckpointMismatch("hidden size mismatch".into()));
                }
            }
            channels.push(ch);
        }
        let bigru = match &cp.bigru {
            Some((f, b)) => Some((f.to_cell()?, b.to_cell()?)),
            None => None,
        };
        let dense_w = cp.dense_w.to_mat()?;
        let pooled_dim =
            if cp.use_bigru { 2 * cp.bigru_hidden } else { 9 * cp.hidden };
        if dense_w.cols() != pooled_dim || dense_w.rows() != NUM_CLASSES {
            return Err(Error::CheckpointMismatch(format!(
                "dense layer is {}x{}, expected {}x{}",
                dense_w.rows(),
                dense_w.cols(),
                NUM_CLASSES,
                pooled_dim
            )));
        }
        Ok(HybridModel {
            channels,
            bigru,
            dense_w,
            dense_b: cp.dense_b.iter().map(|&v| cast(v)).collect(),
            config: ModelConfig {
                hidden: cp.hidden,
                bigru_hidden: cp.bigru_hidden,
                static_mode,
                use_bigru: cp.use_bigru,
                seed: cp.seed,
                clip_norm: cp.clip_norm,
            },
        })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_vec(self)
            .map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::CheckpointMismatch(format!("bad checkpoint: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SPECIALS;
    use crate::embed::SgdConfig;

    fn toy_vocab(n: usize) -> Vocabulary {
        let stream: Vec<String> = (0..n)
            .flat_map(|i| std::iter::repeat(format!("w{i}")).take(3))
            .collect();
        Vocabulary::build(stream, 1).unwrap()
    }

    fn toy_matrix(vocab: &Vocabulary, dim: usize, method: Method, seed: u64) -> EmbeddingMatrix<f64> {
        let rows = vocab.content_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Mat::uniform(rows, dim, -0.5, 0.5, &mut rng);
        let tokens: Vec<String> =
            vocab.content_ids().map(|id| vocab.token(id).to_string()).collect();
        EmbeddingMatrix::new(method, 5, tokens, input, Mat::zeros(rows, dim), None)
    }

    fn toy_model(
        vocab: &Vocabulary,
        dim: usize,
        config: ModelConfig,
    ) -> HybridModel<f64> {
        let m1 = toy_matrix(vocab, dim, Method::W2v, 10);
        let m2 = toy_matrix(vocab, dim, Method::FastText, 20);
        let m3 = toy_matrix(vocab, dim, Method::Glove, 30);
        HybridModel::new(vocab, [&m1, &m2, &m3], config)
    }

    #[test]
    fn stream_construction_places_bos_and_eos() {
        let seq = [4u32, 5, 6, PAD, PAD];
        let [left, center, right] = build_streams(&seq, 3);
        assert_eq!(left, vec![BOS, 4, 5, PAD, PAD]);
        assert_eq!(center, vec![4, 5, 6, PAD, PAD]);
        assert_eq!(right, vec![5, 6, EOS, PAD, PAD]);
    }

    #[test]
    fn forward_shapes_match_the_architecture() {
        let vocab = toy_vocab(6);
        let config = ModelConfig { hidden: 64, bigru_hidden: 64, ..Default::default() };
        let model = toy_model(&vocab, 8, config);
        assert_eq!(model.pooled_dim(), 128);
        let seq: Vec<u32> = (0..12).map(|i| 4 + (i % 6) as u32).collect();
        let cache = model.forward_one(&seq).unwrap();
        assert_eq!(cache.unified[0].len(), 576);
        assert_eq!(cache.channels[0].runs[0].outputs[0].len(), 64);
        assert_eq!(cache.pooled.len(), 128);
        assert_eq!(cache.probs.len(), 3);

        let no_bigru = ModelConfig { use_bigru: false, hidden: 64, ..Default::default() };
        let model = toy_model(&vocab, 8, no_bigru);
        assert_eq!(model.pooled_dim(), 576);
    }

    #[test]
    fn zero_dense_layer_gives_uniform_probabilities() {
        let vocab = toy_vocab(4);
        let mut model = toy_model(&vocab, 6, ModelConfig { hidden: 4, bigru_hidden: 4, ..Default::default() });
        model.dense_w.fill(0.0);
        model.dense_b.iter_mut().for_each(|b| *b = 0.0);
        let probs = model.forward(&[4, 5, 6, PAD]).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_pad_sequence_is_an_error_and_degenerate_path_is_bias_softmax() {
        let vocab = toy_vocab(4);
        let model = toy_model(&vocab, 6, ModelConfig { hidden: 4, bigru_hidden: 4, ..Default::default() });
        assert!(matches!(model.forward(&[PAD, PAD, PAD]), Err(Error::AllPadSequence)));
        let p = model.degenerate_probs();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pad_tail_length_never_changes_the_output() {
        let vocab = toy_vocab(5);
        let model = toy_model(&vocab, 6, ModelConfig { hidden: 5, bigru_hidden: 4, ..Default::default() });
        let short: Vec<u32> = vec![4, 5, 6, PAD];
        let long: Vec<u32> = vec![4, 5, 6, PAD, PAD, PAD, PAD, PAD];
        assert_eq!(model.forward(&short).unwrap(), model.forward(&long).unwrap());
        assert_eq!(model.forward(&[4, 5, 6]).unwrap(), model.forward(&long).unwrap());
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let logits = [0.3f64, -1.2, 2.4];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 1000.0).collect();
        let a = softmax(&logits);
        let b = softmax(&shifted);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let uniform = softmax(&[0.0f64, 0.0, 0.0]);
        assert!((uniform[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((cross_entropy(&uniform, 1) - 3.0f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[1.0f64, 0.0, 0.0], 0) <= 1e-10);
    }

    #[test]
    fn inventory_matches_architecture_contracts() {
        let vocab = toy_vocab(4);
        for (use_bigru, static_mode) in [
            (true, StaticMode::StaticPlusNonStatic),
            (true, StaticMode::AllStatic),
            (false, StaticMode::StaticPlusNonStatic),
            (false, StaticMode::AllStatic),
        ] {
            let config = ModelConfig {
                hidden: 4,
                bigru_hidden: 4,
                use_bigru,
                static_mode,
                ..Default::default()
            };
            let model = toy_model(&vocab, 6, config);
            let inv = model.inventory();
            let gru_tensors =
                inv.iter().filter(|t| t.name.contains(".gru.")).count();
            assert_eq!(gru_tensors, 9 * 9, "nine GRUs with nine tensors each");
            let bigru_tensors = inv.iter().filter(|t| t.name.starts_with("bigru.")).count();
            assert_eq!(bigru_tensors, if use_bigru { 18 } else { 0 });
            let trainable_tables = inv
                .iter()
                .filter(|t| t.name.ends_with(".table") && t.trainable)
                .count();
            let expected = match static_mode {
                StaticMode::AllStatic => 0,
                StaticMode::StaticPlusNonStatic => 3,
            };
            assert_eq!(trainable_tables, expected);
            assert_eq!(inv.iter().filter(|t| t.name.ends_with(".table")).count(), 9);
        }
    }

    #[test]
    fn grad_views_align_with_trainable_params() {
        let vocab = toy_vocab(4);
        let mut model =
            toy_model(&vocab, 6, ModelConfig { hidden: 3, bigru_hidden: 3, ..Default::default() });
        let grads = ModelGrads::zeros_like(&model);
        let params = model.trainable_params_mut();
        let views = grads.views();
        assert_eq!(params.len(), views.len());
        for (p, g) in params.iter().zip(&views) {
            assert_eq!(p.len(), g.len());
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let vocab = toy_vocab(5);
        let model =
            toy_model(&vocab, 6, ModelConfig { hidden: 4, bigru_hidden: 4, ..Default::default() });
        let batch: Vec<Vec<u32>> = vec![vec![4, 5, 6, PAD], vec![7, 8, 4, 5]];
        let before = model.forward_batch(&batch).unwrap();
        model.save_checkpoint(&path).unwrap();
        let loaded = HybridModel::<f64>::load_checkpoint(&path).unwrap();
        let after = loaded.forward_batch(&batch).unwrap();
        for (a, b) in before.iter().zip(&after) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_dim_disagreement_is_rejected() {
        let vocab = toy_vocab(5);
        let model =
            toy_model(&vocab, 6, ModelConfig { hidden: 4, bigru_hidden: 4, ..Default::default() });
        let mut cp = model.to_checkpoint();
        cp.channels[1].left_cell.w_z.cols = 5; // tamper
        cp.channels[1].left_cell.w_z.data.truncate(4 * 5);
        assert!(matches!(
            HybridModel::<f64>::from_checkpoint(&cp),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn subword_channel_resolves_tokens_missing_from_the_matrix() {
        // matrix trained on a smaller corpus than the classifier vocabulary
        let small = toy_vocab(2);
        let big = toy_vocab(4);
        let sentences = vec![vec![0u32, 1], vec![1, 0]];
        let cfg = SgdConfig { dim: 6, window: 1, epochs: 1, ..Default::default() };
        let ft = crate::embed::train_fasttext::<f64>(
            &sentences,
            &small,
            &cfg,
            &crate::embed::SubwordConfig { min_n: 1, max_n: 2, buckets: 64 },
        )
        .unwrap();
        let table = EmbeddingTable::from_pretrained(&big, &ft, false);
        // "w3" is missing from the fastText vocab but shares n-grams
        let w3 = big.id("w3").unwrap() as usize;
        assert!(table.vectors.row(w3).iter().any(|&v| v != 0.0));
        assert_eq!(table.vectors.rows(), big.len());
        assert!(table.vectors.row(SPECIALS.len() - 1).iter().all(|&v| v == 0.0));
    }
}
