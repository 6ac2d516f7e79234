//! Emission network: embedding, stacked bidirectional LSTM, linear projection
//! to `L′` logits. One output frame per input element.

pub mod checkpoint;
pub mod lstm;
pub mod optim;
pub mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ctc::{EmissionMatrix, LabelId};
use crate::error::{Error, Result};
use crate::numerics::{axpy, seeded_rng, Matrix};
use crate::text::Vocabulary;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use lstm::{CellCache, LstmWeights};
pub use optim::{clip_global_norm, global_norm, Optimizer, OptimizerKind};
pub use train::{train, EpochReport, TrainConfig, TrainOutcome, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_in: usize,
    /// `L′`, blank included.
    pub labels: usize,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub layers: usize,
}

impl ModelDims {
    fn validate(&self) -> Result<()> {
        if self.vocab_in == 0 || self.labels < 2 || self.d_emb == 0 || self.d_hidden == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument(format!("invalid model dims {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.d_emb
        } else {
            2 * self.d_hidden
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLayer {
    pub fwd: LstmWeights,
    pub bwd: LstmWeights,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// `vocab_in × d_emb`
    pub embed: Matrix,
    pub layers: Vec<BiLayer>,
    /// `2H × L′`
    pub proj: Matrix,
    /// `1 × L′`
    pub proj_bias: Matrix,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let h = dims.d_hidden;
        Ok(ModelParams {
            dims,
            embed: Matrix::zeros(dims.vocab_in, dims.d_emb),
            layers: (0..dims.layers)
                .map(|l| BiLayer {
                    fwd: LstmWeights::zeros(dims.layer_input(l), h),
                    bwd: LstmWeights::zeros(dims.layer_input(l), h),
                })
                .collect(),
            proj: Matrix::zeros(2 * h, dims.labels),
            proj_bias: Matrix::zeros(1, dims.labels),
        })
    }

    /// Uniform `[-0.08, 0.08]` weights, forget-gate bias 1, zero projection bias.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = seeded_rng(seed);
        let h = dims.d_hidden;
        let mut uniform = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-lstm::INIT_RANGE..lstm::INIT_RANGE))
                .collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let embed = uniform(dims.vocab_in, dims.d_emb);
        let proj = uniform(2 * h, dims.labels);
        let layers = (0..dims.layers)
            .map(|l| BiLayer {
                fwd: LstmWeights::random(dims.layer_input(l), h, &mut rng),
                bwd: LstmWeights::random(dims.layer_input(l), h, &mut rng),
            })
            .collect();
        Ok(ModelParams {
            dims,
            embed,
            layers,
            proj,
            proj_bias: Matrix::zeros(1, dims.labels),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.dims).expect("dims already validated")
    }

    /// Tensors in checkpoint declaration order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.embed];
        for layer in &self.layers {
            for w in [&layer.fwd, &layer.bwd] {
                out.extend([&w.w_in, &w.w_rec, &w.bias]);
            }
        }
        out.extend([&self.proj, &self.proj_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embed];
        for layer in &mut self.layers {
            for w in [&mut layer.fwd, &mut layer.bwd] {
                out.extend([&mut w.w_in, &mut w.w_rec, &mut w.bias]);
            }
        }
        out.extend([&mut self.proj, &mut self.proj_bias]);
        out
    }

    /// `name` for each tensor of [`ModelParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = vec!["embed".to_string()];
        for l in 0..self.layers.len() {
            for dir in ["fwd", "bwd"] {
                for part in ["w_in", "w_rec", "bias"] {
                    out.push(format!("layer{l}.{dir}.{part}"));
                }
            }
        }
        out.extend(["proj".to_string(), "proj_bias".to_string()]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.data().len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors_mut().into_iter().for_each(|m| m.scale(factor));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    /// Copies rows of an external embedding table into `embed` for tokens
    /// present in `vocab`. Returns how many rows were set.
    pub fn load_embeddings(&mut self, vocab: &Vocabulary, table: &[(String, Vec<f64>)]) -> Result<usize> {
        let mut set = 0;
        for (token, values) in table {
            if values.len() != self.dims.d_emb {
                return Err(Error::InvalidArgument(format!(
                    "embedding for {token:?} has {} values, model uses {}",
                    values.len(),
                    self.dims.d_emb
                )));
            }
            if let Some(id) = vocab.id(token) {
                if (id as usize) < self.dims.vocab_in {
                    self.embed.row_mut(id as usize).copy_from_slice(values);
                    set += 1;
                }
            }
        }
        Ok(set)
    }

    /// Runs the network over `input_ids`.
    pub fn forward(&self, input_ids: &[LabelId]) -> Result<Forward> {
        if input_ids.is_empty() {
            return Err(Error::InvalidArgument("empty input sequence".into()));
        }
        let d_emb = self.dims.d_emb;
        let mut embedded = Matrix::zeros(input_ids.len(), d_emb);
        for (t, &id) in input_ids.iter().enumerate() {
            if id as usize >= self.dims.vocab_in {
                return Err(Error::OutOfVocabulary {
                    id: id as usize,
                    size: self.dims.vocab_in,
                });
            }
            embedded.row_mut(t).copy_from_slice(self.embed.row(id as usize));
        }

        let mut layers = Vec::with_capacity(self.layers.len());
        let mut input = embedded;
        for layer in &self.layers {
            let fwd = lstm::run(&layer.fwd, &input, false)?;
            let bwd = lstm::run(&layer.bwd, &input, true)?;
            let output = concat_cols(&fwd.hidden, &bwd.hidden);
            layers.push(LayerCache { input, fwd, bwd });
            input = output;
        }
        let top = input;
        let mut logits = top.matmul(&self.proj)?;
        for r in 0..logits.rows() {
            axpy(1.0, self.proj_bias.data(), logits.row_mut(r));
        }
        Ok(Forward {
            cache: ForwardCache {
                input_ids: input_ids.to_vec(),
                layers,
                top,
            },
            logits,
        })
    }

    /// Gradients of a scalar loss whose gradient with respect to the logits
    /// of `cache`'s forward pass is `grad_logits`.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Matrix) -> Result<ModelParams> {
        let frames = cache.input_ids.len();
        if grad_logits.shape() != (frames, self.dims.labels) || cache.layers.len() != self.layers.len() {
            return Err(Error::Shape {
                op: "backward",
                left_rows: frames,
                left_cols: self.dims.labels,
                right_rows: grad_logits.rows(),
                right_cols: grad_logits.cols(),
            });
        }
        let h = self.dims.d_hidden;
        let mut grads = self.zeros_like();
        grads.proj = cache.top.matmul_tn(grad_logits)?;
        let bias = grads.proj_bias.data_mut();
        for row in grad_logits.row_iter() {
            axpy(1.0, row, bias);
        }
        let mut d_out = grad_logits.matmul_nt(&self.proj)?;

        for (l, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let (d_fwd, d_bwd) = split_cols(&d_out, h);
            let g = &mut grads.layers[l];
            let mut d_in = lstm::backprop(&layer.fwd, &lc.fwd, &lc.input, &d_fwd, &mut g.fwd)?;
            d_in.add_assign(&lstm::backprop(&layer.bwd, &lc.bwd, &lc.input, &d_bwd, &mut g.bwd)?)?;
            d_out = d_in;
        }
        for (t, &id) in cache.input_ids.iter().enumerate() {
            axpy(1.0, d_out.row(t), grads.embed.row_mut(id as usize));
        }
        Ok(grads)
    }

    /// Per-frame output distributions for `input_ids`.
    pub fn emissions(&self, input_ids: &[LabelId]) -> Result<EmissionMatrix> {
        Ok(self.forward(input_ids)?.emissions())
    }
}

fn concat_cols(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..a.cols()].copy_from_slice(a.row(r));
        row[a.cols()..].copy_from_slice(b.row(r));
    }
    out
}

fn split_cols(m: &Matrix, left: usize) -> (Matrix, Matrix) {
    let right = m.cols() - left;
    let mut a = Matrix::zeros(m.rows(), left);
    let mut b = Matrix::zeros(m.rows(), right);
    for r in 0..m.rows() {
        a.row_mut(r).copy_from_slice(&m.row(r)[..left]);
        b.row_mut(r).copy_from_slice(&m.row(r)[left..]);
    }
    (a, b)
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    pub input: Matrix,
    pub fwd: CellCache,
    pub bwd: CellCache,
}

/// Activations kept for [`ModelParams::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input_ids: Vec<LabelId>,
    pub layers: Vec<LayerCache>,
    /// Top-layer concatenated states, `T × 2H`.
    pub top: Matrix,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub logits: Matrix,
    pub cache: ForwardCache,
}

impl Forward {
    pub fn emissions(&self) -> EmissionMatrix {
        EmissionMatrix::from_logits(&self.logits)
    }
}
