//! One LSTM direction over a whole sequence, with exact BPTT.
//!
//! Gate layout in every `4H` block is `[input, forget, cell, output]`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Matrix, Rng};

pub(crate) const INIT_RANGE: f64 = 0.08;
pub(crate) const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    /// `in × 4H`
    pub w_in: Matrix,
    /// `H × 4H`
    pub w_rec: Matrix,
    /// `1 × 4H`
    pub bias: Matrix,
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w_in: Matrix::zeros(input, 4 * hidden),
            w_rec: Matrix::zeros(hidden, 4 * hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub(crate) fn random(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut w = LstmWeights::zeros(input, hidden);
        for m in [&mut w.w_in, &mut w.w_rec] {
            m.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-INIT_RANGE..INIT_RANGE));
        }
        w.bias.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
        w
    }

    pub fn hidden(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn input(&self) -> usize {
        self.w_in.rows()
    }
}

/// Activations of one direction, indexed by time (not processing order).
#[derive(Clone, Debug)]
pub struct CellCache {
    pub reverse: bool,
    /// post-activation gates, `T × 4H`
    pub gates: Matrix,
    /// cell states, `T × H`
    pub cells: Matrix,
    /// `tanh(c)`, `T × H`
    pub tanh_cells: Matrix,
    /// hidden outputs, `T × H`
    pub hidden: Matrix,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn time_at(step: usize, frames: usize, reverse: bool) -> usize {
    if reverse {
        frames - 1 - step
    } else {
        step
    }
}

/// Runs the cell over `input` (`T × in`) left to right, or right to left
/// when `reverse` is set.
pub fn run(w: &LstmWeights, input: &Matrix, reverse: bool) -> Result<CellCache> {
    let h = w.hidden();
    let frames = input.rows();
    let mut pre = input.matmul(&w.w_in)?;
    for r in 0..frames {
        axpy(1.0, w.bias.data(), pre.row_mut(r));
    }
    let mut cache = CellCache {
        reverse,
        gates: Matrix::zeros(frames, 4 * h),
        cells: Matrix::zeros(frames, h),
        tanh_cells: Matrix::zeros(frames, h),
        hidden: Matrix::zeros(frames, h),
    };
    let mut z = vec![0.0; 4 * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for step in 0..frames {
        let t = time_at(step, frames, reverse);
        z.copy_from_slice(pre.row(t));
        for (j, &hp) in h_prev.iter().enumerate() {
            if hp != 0.0 {
                axpy(hp, w.w_rec.row(j), &mut z);
            }
        }
        let gates = cache.gates.row_mut(t);
        for j in 0..h {
            gates[j] = sigmoid(z[j]);
            gates[h + j] = sigmoid(z[h + j]);
            gates[2 * h + j] = z[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        for j in 0..h {
            let c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            let tc = c.tanh();
            c_prev[j] = c;
            h_prev[j] = gates[3 * h + j] * tc;
        }
        cache.cells.row_mut(t).copy_from_slice(&c_prev);
        cache.hidden.row_mut(t).copy_from_slice(&h_prev);
        let tanh_row = cache.tanh_cells.row_mut(t);
        for j in 0..h {
            tanh_row[j] = c_prev[j].tanh();
        }
    }
    Ok(cache)
}

/// Backpropagates `d_hidden` (`T × H`, gradient of the loss w.r.t. each
/// hidden output) through time. Weight gradients are added into `grads`;
/// the input gradient (`T × in`) is returned.
pub fn backprop(
    w: &LstmWeights,
    cache: &CellCache,
    input: &Matrix,
    d_hidden: &Matrix,
    grads: &mut LstmWeights,
) -> Result<Matrix> {
    let h = w.hidden();
    let frames = input.rows();
    if d_hidden.shape() != (frames, h) || cache.hidden.shape() != (frames, h) {
        return Err(Error::Shape {
            op: "lstm backprop",
            left_rows: cache.hidden.rows(),
            left_cols: cache.hidden.cols(),
            right_rows: d_hidden.rows(),
            right_cols: d_hidden.cols(),
        });
    }
    let reverse = cache.reverse;
    let mut d_pre = Matrix::zeros(frames, 4 * h);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dh = vec![0.0; h];
    for step in (0..frames).rev() {
        let t = time_at(step, frames, reverse);
        let prev_t = (step > 0).then(|| time_at(step - 1, frames, reverse));
        let gates = cache.gates.row(t);
        let tanh_c = cache.tanh_cells.row(t);
        for j in 0..h {
            dh[j] = d_hidden[(t, j)] + dh_next[j];
        }
        let dz = d_pre.row_mut(t);
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = tanh_c[j];
            let c_prev = prev_t.map_or(0.0, |p| cache.cells[(p, j)]);
            let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        if let Some(p) = prev_t {
            let h_prev = cache.hidden.row(p);
            for (j, &hp) in h_prev.iter().enumerate() {
                if hp != 0.0 {
                    axpy(hp, dz, grads.w_rec.row_mut(j));
                }
            }
            for (j, out) in dh_next.iter_mut().enumerate() {
                *out = dot(w.w_rec.row(j), dz);
            }
        }
    }
    grads.w_in.add_assign(&input.matmul_tn(&d_pre)?)?;
    let bias = grads.bias.data_mut();
    for row in d_pre.row_iter() {
        axpy(1.0, row, bias);
    }
    d_pre.matmul_nt(&w.w_in)
}
