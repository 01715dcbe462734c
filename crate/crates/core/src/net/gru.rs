//! Gated recurrent unit: forward steps, masked directional runs, and exact
//! backpropagation through time for a single cell.
//!
//! Gate equations:
//!
//! ```text
//! z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//! r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//! hc_t = tanh(W_h x_t + U_h (r_t ⊙ h_{t-1}) + b_h)
//! h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ hc_t
//! ```

use rand::Rng;

use crate::mat::{axpy, Mat};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<F> {
    pub w_z: Mat<F>,
    pub w_r: Mat<F>,
    pub w_h: Mat<F>,
    pub u_z: Mat<F>,
    pub u_r: Mat<F>,
    pub u_h: Mat<F>,
    pub b_z: Vec<F>,
    pub b_r: Vec<F>,
    pub b_h: Vec<F>,
}

impl<F: Scalar> GruCell<F> {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        GruCell {
            w_z: Mat::zeros(hidden, input_dim),
            w_r: Mat::zeros(hidden, input_dim),
            w_h: Mat::zeros(hidden, input_dim),
            u_z: Mat::zeros(hidden, hidden),
            u_r: Mat::zeros(hidden, hidden),
            u_h: Mat::zeros(hidden, hidden),
            b_z: vec![F::zero(); hidden],
            b_r: vec![F::zero(); hidden],
            b_h: vec![F::zero(); hidden],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(hidden: usize, input_dim: usize, rng: &mut impl Rng) -> Self {
        GruCell {
            w_z: Mat::glorot(hidden, input_dim, rng),
            w_r: Mat::glorot(hidden, input_dim, rng),
            w_h: Mat::glorot(hidden, input_dim, rng),
            u_z: Mat::glorot(hidden, hidden, rng),
            u_r: Mat::glorot(hidden, hidden, rng),
            u_h: Mat::glorot(hidden, hidden, rng),
            b_z: vec![F::zero(); hidden],
            b_r: vec![F::zero(); hidden],
            b_h: vec![F::zero(); hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    /// One step from `h_prev` over input `x`; returns all gate activations
    /// for the backward pass.
    pub fn step(&self, x: &[F], h_prev: &[F]) -> StepState<F> {
        let hidden = self.hidden();
        let mut z = self.b_z.clone();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        let mut r = self.b_r.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        for v in z.iter_mut().chain(r.iter_mut()) {
            *v = sigmoid(*v);
        }
        let mut rh = vec![F::zero(); hidden];
        for i in 0..hidden {
            rh[i] = r[i] * h_prev[i];
        }
        let mut hc = self.b_h.clone();
        self.w_h.matvec_acc(x, &mut hc);
        self.u_h.matvec_acc(&rh, &mut hc);
        for v in hc.iter_mut() {
            *v = v.tanh();
        }
        let mut h = vec![F::zero(); hidden];
        for i in 0..hidden {
            h[i] = (F::one() - z[i]) * h_prev[i] + z[i] * hc[i];
        }
        StepState { z, r, hc, h }
    }
}

#[derive(Debug, Clone)]
pub struct StepState<F> {
    pub z: Vec<F>,
    pub r: Vec<F>,
    pub hc: Vec<F>,
    pub h: Vec<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A directional run over the first `valid` positions of a padded
/// sequence, from a zero initial state. Outputs are indexed by original
/// position; positions at and beyond `valid` are produced as zero vectors
/// and must be excluded downstream via the mask (`t < valid`).
#[derive(Debug, Clone)]
pub struct GruRun<F> {
    pub direction: Direction,
    pub valid: usize,
    /// Gate states in processing order (step k handled `position(k)`).
    pub steps: Vec<StepState<F>>,
    /// Hidden outputs by original position, padded length.
    pub outputs: Vec<Vec<F>>,
}

impl<F: Scalar> GruRun<F> {
    pub fn position(&self, step: usize) -> usize {
        match self.direction {
            Direction::Forward => step,
            Direction::Backward => self.valid - 1 - step,
        }
    }
}

pub fn run_gru<F: Scalar>(
    cell: &GruCell<F>,
    xs: &[Vec<F>],
    valid: usize,
    direction: Direction,
) -> GruRun<F> {
    debug_assert!(valid <= xs.len());
    let hidden = cell.hidden();
    let mut steps = Vec::with_capacity(valid);
    let mut outputs = vec![vec![F::zero(); hidden]; xs.len()];
    let mut h = vec![F::zero(); hidden];
    for k in 0..valid {
        let pos = match direction {
            Direction::Forward => k,
            Direction::Backward => valid - 1 - k,
        };
        let state = cell.step(&xs[pos], &h);
        h = state.h.clone();
        outputs[pos] = state.h.clone();
        steps.push(state);
    }
    GruRun { direction, valid, steps, outputs }
}

/// Parameter gradients mirroring [`GruCell`].
#[derive(Debug, Clone)]
pub struct GruGrads<F> {
    pub w_z: Mat<F>,
    pub w_r: Mat<F>,
    pub w_h: Mat<F>,
    pub u_z: Mat<F>,
    pub u_r: Mat<F>,
    pub u_h: Mat<F>,
    pub b_z: Vec<F>,
    pub b_r: Vec<F>,
    pub b_h: Vec<F>,
}

impl<F: Scalar> GruGrads<F> {
    pub fn zeros_like(cell: &GruCell<F>) -> Self {
        GruGrads {
            w_z: Mat::zeros(cell.w_z.rows(), cell.w_z.cols()),
            w_r: Mat::zeros(cell.w_r.rows(), cell.w_r.cols()),
            w_h: Mat::zeros(cell.w_h.rows(), cell.w_h.cols()),
            u_z: Mat::zeros(cell.u_z.rows(), cell.u_z.cols()),
            u_r: Mat::zeros(cell.u_r.rows(), cell.u_r.cols()),
            u_h: Mat::zeros(cell.u_h.rows(), cell.u_h.cols()),
            b_z: vec![F::zero(); cell.b_z.len()],
            b_r: vec![F::zero(); cell.b_r.len()],
            b_h: vec![F::zero(); cell.b_h.len()],
        }
    }
}

/// Exact reverse-mode pass through a [`GruRun`]. `d_outputs` is indexed by
/// original position (entries at masked positions must be zero). Parameter
/// gradients accumulate into `grads`; the return value is the gradient with
/// respect to each input vector, by original position.
pub fn gru_backward<F: Scalar>(
    cell: &GruCell<F>,
    xs: &[Vec<F>],
    run: &GruRun<F>,
    d_outputs: &[Vec<F>],
    grads: &mut GruGrads<F>,
) -> Vec<Vec<F>> {
    let hidden = cell.hidden();
    let input_dim = cell.input_dim();
    let mut d_xs = vec![vec![F::zero(); input_dim]; xs.len()];
    let mut d_h_carry = vec![F::zero(); hidden];
    let zero_state = vec![F::zero(); hidden];
    for k in (0..run.steps.len()).rev() {
        let pos = run.position(k);
        let state = &run.steps[k];
        let h_prev: &[F] = if k == 0 { &zero_state } else { &run.steps[k - 1].h };
        let x = &xs[pos];

        // total gradient into h_t: downstream output use + next step's carry
        let mut d_h = d_outputs[pos].clone();
        axpy(F::one(), &d_h_carry, &mut d_h);

        let mut d_h_prev = vec![F::zero(); hidden];
        let mut da_z = vec![F::zero(); hidden];
        let mut da_h = vec![F::zero(); hidden];
        for i in 0..hidden {
            let dz = d_h[i] * (state.hc[i] - h_prev[i]);
            let dhc = d_h[i] * state.z[i];
            d_h_prev[i] = d_h[i] * (F::one() - state.z[i]);
            da_z[i] = dz * state.z[i] * (F::one() - state.z[i]);
            da_h[i] = dhc * (F::one() - state.hc[i] * state.hc[i]);
        }

        // candidate path: a_h = W_h x + U_h (r ⊙ h_prev) + b_h
        let mut d_rh = vec![F::zero(); hidden];
        cell.u_h.tr_matvec_acc(&da_h, &mut d_rh);
        let mut da_r = vec![F::zero(); hidden];
        for i in 0..hidden {
            let dr = d_rh[i] * h_prev[i];
            d_h_prev[i] += d_rh[i] * state.r[i];
            da_r[i] = dr * state.r[i] * (F::one() - state.r[i]);
        }

        let mut rh = vec![F::zero(); hidden];
        for i in 0..hidden {
            rh[i] = state.r[i] * h_prev[i];
        }
        grads.w_z.outer_acc(&da_z, x);
        grads.w_r.outer_acc(&da_r, x);
        grads.w_h.outer_acc(&da_h, x);
        grads.u_z.outer_acc(&da_z, h_prev);
        grads.u_r.outer_acc(&da_r, h_prev);
        grads.u_h.outer_acc(&da_h, &rh);
        axpy(F::one(), &da_z, &mut grads.b_z);
        axpy(F::one(), &da_r, &mut grads.b_r);
        axpy(F::one(), &da_h, &mut grads.b_h);

        cell.u_z.tr_matvec_acc(&da_z, &mut d_h_prev);
        cell.u_r.tr_matvec_acc(&da_r, &mut d_h_prev);

        let d_x = &mut d_xs[pos];
        cell.w_z.tr_matvec_acc(&da_z, d_x);
        cell.w_r.tr_matvec_acc(&da_r, d_x);
        cell.w_h.tr_matvec_acc(&da_h, d_x);

        d_h_carry = d_h_prev;
    }
    d_xs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_halves_previous_state() {
        let cell = GruCell::<f64>::zeros(3, 2);
        let h_prev = [0.4, -1.2, 2.5];
        let state = cell.step(&[1.0, -1.0], &h_prev);
        for i in 0..3 {
            assert!((state.z[i] - 0.5).abs() < 1e-12);
            assert_eq!(state.hc[i], 0.0);
            assert!((state.h[i] - 0.5 * h_prev[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_zero_state_zero_biases_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = GruCell::<f64>::glorot(4, 3, &mut rng);
        let state = cell.step(&[0.0; 3], &[0.0; 4]);
        assert!(state.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_bounded_by_carry_and_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cell = GruCell::<f64>::glorot(5, 4, &mut rng);
        let mut h = vec![0.0f64; 5];
        for step in 0..20 {
            let x: Vec<f64> = (0..4).map(|i| ((step * 4 + i) as f64).sin() * 3.0).collect();
            let state = cell.step(&x, &h);
            for i in 0..5 {
                assert!(state.h[i].abs() <= h[i].abs().max(1.0) + 1e-12);
            }
            h = state.h;
        }
    }

    #[test]
    fn length_one_sequence_is_a_single_step_from_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = GruCell::<f64>::glorot(3, 2, &mut rng);
        let xs = vec![vec![0.3, -0.6]];
        let run = run_gru(&cell, &xs, 1, Direction::Forward);
        let direct = cell.step(&xs[0], &[0.0; 3]);
        assert_eq!(run.outputs[0], direct.h);
    }

    #[test]
    fn backward_run_equals_forward_over_reversed_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = GruCell::<f64>::glorot(3, 2, &mut rng);
        let xs = vec![vec![0.1, 0.4], vec![-0.2, 0.9]];
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let back = run_gru(&cell, &xs, 2, Direction::Backward);
        let fwd = run_gru(&cell, &rev, 2, Direction::Forward);
        assert_eq!(back.outputs[1], fwd.outputs[0]);
        assert_eq!(back.outputs[0], fwd.outputs[1]);
    }

    #[test]
    fn masked_positions_produce_zero_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = GruCell::<f64>::glorot(3, 2, &mut rng);
        let xs = vec![vec![0.1, 0.4], vec![-0.2, 0.9], vec![9.0, 9.0], vec![9.0, 9.0]];
        let run = run_gru(&cell, &xs, 2, Direction::Forward);
        assert!(run.outputs[2].iter().all(|&v| v == 0.0));
        assert!(run.outputs[3].iter().all(|&v| v == 0.0));
        assert_eq!(run.steps.len(), 2);
    }

    /// Scalar loss for the finite-difference check: sum of a fixed linear
    /// functional of every valid output.
    fn probe_loss(cell: &GruCell<f64>, xs: &[Vec<f64>], valid: usize, dir: Direction) -> f64 {
        let run = run_gru(cell, xs, valid, dir);
        let mut loss = 0.0;
        for t in 0..valid {
            for (i, &v) in run.outputs[t].iter().enumerate() {
                loss += v * ((t + 1) as f64) * ((i + 1) as f64) * 0.1;
            }
        }
        loss
    }

    #[test]
    fn bptt_gradients_match_finite_differences() {
        let hidden = 3;
        let input_dim = 2;
        let valid = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for dir in [Direction::Forward, Direction::Backward] {
            let mut cell = GruCell::<f64>::glorot(hidden, input_dim, &mut rng);
            for b in cell.b_z.iter_mut().chain(cell.b_r.iter_mut()).chain(cell.b_h.iter_mut()) {
                *b = rand::Rng::gen_range(&mut rng, -0.3..0.3);
            }
            let mut xs: Vec<Vec<f64>> = (0..valid)
                .map(|_| (0..input_dim).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect())
                .collect();

            let run = run_gru(&cell, &xs, valid, dir);
            let d_outputs: Vec<Vec<f64>> = (0..valid)
                .map(|t| {
                    (0..hidden).map(|i| ((t + 1) as f64) * ((i + 1) as f64) * 0.1).collect()
                })
                .collect();
            let mut grads = GruGrads::zeros_like(&cell);
            let d_xs = gru_backward(&cell, &xs, &run, &d_outputs, &mut grads);

            let h = 1e-5;
            let rel =
                |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-7);

            // input gradients
            for t in 0..valid {
                for j in 0..input_dim {
                    let orig = xs[t][j];
                    xs[t][j] = orig + h;
                    let up = probe_loss(&cell, &xs, valid, dir);
                    xs[t][j] = orig - h;
                    let down = probe_loss(&cell, &xs, valid, dir);
                    xs[t][j] = orig;
                    let fd = (up - down) / (2.0 * h);
                    assert!(rel(d_xs[t][j], fd) < 1e-5, "d_x[{t}][{j}]: {} vs {fd}", d_xs[t][j]);
                }
            }

            // every parameter tensor
            macro_rules! check_mat {
                ($field:ident) => {
                    for i in 0..cell.$field.rows() {
                        for j in 0..cell.$field.cols() {
                            let orig = cell.$field[(i, j)];
                            cell.$field[(i, j)] = orig + h;
                            let up = probe_loss(&cell, &xs, valid, dir);
                            cell.$field[(i, j)] = orig - h;
                            let down = probe_loss(&cell, &xs, valid, dir);
                            cell.$field[(i, j)] = orig;
                            let fd = (up - down) / (2.0 * h);
                            assert!(
                                rel(grads.$field[(i, j)], fd) < 1e-5,
                                concat!(stringify!($field), "[{},{}]: {} vs {}"),
                                i, j, grads.$field[(i, j)], fd
                            );
                        }
                    }
                };
            }
            macro_rules! check_vec {
                ($field:ident) => {
                    for i in 0..cell.$field.len() {
                        let orig = cell.$field[i];
                        cell.$field[i] = orig + h;
                        let up = probe_loss(&cell, &xs, valid, dir);
                        cell.$field[i] = orig - h;
                        let down = probe_loss(&cell, &xs, valid, dir);
                        cell.$field[i] = orig;
                        let fd = (up - down) / (2.0 * h);
                        assert!(rel(grads.$field[i], fd) < 1e-5);
                    }
                };
            }
            check_mat!(w_z);
            check_mat!(w_r);
            check_mat!(w_h);
            check_mat!(u_z);
            check_mat!(u_r);
            check_mat!(u_h);
            check_vec!(b_z);
            check_vec!(b_r);
            check_vec!(b_h);
        }
    }
}
