//! The location-inference network: blocks of two (affine, batch-norm, ReLU)
//! layers followed by grouped max-pooling, ending in a 2-unit coordinate
//! head. Train-mode forward records on a tape and refreshes running batch
//! statistics; eval-mode forward is a pure function of the inputs.

use rand::Rng;
use thiserror::Error;

use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("pool group {pool_group} does not divide hidden width {hidden}")]
    PoolMismatch { pool_group: usize, hidden: usize },
    #[error("network needs at least one block")]
    NoBlocks,
    #[error("input dimension must be positive")]
    NoInput,
}

/// Network wiring: `blocks` blocks of two hidden layers of `hidden` units,
/// each block followed by max-pooling over disjoint groups of `pool_group`
/// units, then a final affine layer to `output_dim` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkArch {
    pub input_dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub pool_group: usize,
    pub output_dim: usize,
}

impl NetworkArch {
    /// Desk-scale architecture: 3 blocks of 128 units.
    pub fn desk(input_dim: usize) -> Self {
        NetworkArch {
            input_dim,
            blocks: 3,
            hidden: 128,
            pool_group: 4,
            output_dim: 2,
        }
    }

    /// Full-scale architecture: 6 blocks of 1024 units (13 layers in all).
    pub fn full_scale(input_dim: usize) -> Self {
        NetworkArch {
            input_dim,
            blocks: 6,
            hidden: 1024,
            pool_group: 4,
            output_dim: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        if self.blocks == 0 {
            return Err(ArchError::NoBlocks);
        }
        if self.input_dim == 0 {
            return Err(ArchError::NoInput);
        }
        if self.pool_group == 0 || self.hidden % self.pool_group != 0 {
            return Err(ArchError::PoolMismatch {
                pool_group: self.pool_group,
                hidden: self.hidden,
            });
        }
        Ok(())
    }

    /// Width flowing out of each block into the next.
    pub fn pooled_width(&self) -> usize {
        self.hidden / self.pool_group
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Affine {
    /// `in x out`, row-major.
    w: Tensor,
    /// `1 x out`.
    b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
struct BatchNorm {
    scale: Tensor,
    shift: Tensor,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            scale: Tensor::filled(1, width, 1.0),
            shift: Tensor::zeros(1, width),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    fn eval(&self, x: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let inv = 1.0 / (self.running_var[c] + BN_EPS).sqrt();
                let xh = (x.get(r, c) - self.running_mean[c]) * inv;
                out.set(r, c, self.scale.get(0, c) * xh + self.shift.get(0, c));
            }
        }
        out
    }

    fn absorb(&mut self, mean: &[f64], var: &[f64]) {
        for (r, &m) in self.running_mean.iter_mut().zip(mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        for (r, &v) in self.running_var.iter_mut().zip(var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    fc1: Affine,
    bn1: BatchNorm,
    fc2: Affine,
    bn2: BatchNorm,
}

/// Tape handles for every trainable parameter of one forward pass, in the
/// same order as [`InferenceNetwork::param_tensors`].
pub struct TapedParams {
    pub ids: Vec<VarId>,
}

/// The inference function mapping a batch of `C`-channel measurements to 2D
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceNetwork {
    arch: NetworkArch,
    blocks: Vec<Block>,
    out: Affine,
}

/// Fan-in scaled uniform initialization, biases zero, batch-norm identity.
/// Weight entries are drawn row-major, layers in network order.
pub fn init_network(
    arch: NetworkArch,
    rng: &mut impl Rng,
) -> Result<InferenceNetwork, ArchError> {
    arch.validate()?;
    let mut affine = |fan_in: usize, fan_out: usize| -> Affine {
        let lim = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-lim..lim))
            .collect();
        Affine {
            w: Tensor::from_vec(fan_in, fan_out, data),
            b: Tensor::zeros(1, fan_out),
        }
    };
    let mut blocks = Vec::with_capacity(arch.blocks);
    let mut width = arch.input_dim;
    for _ in 0..arch.blocks {
        let fc1 = affine(width, arch.hidden);
        let fc2 = affine(arch.hidden, arch.hidden);
        blocks.push(Block {
            fc1,
            bn1: BatchNorm::new(arch.hidden),
            fc2,
            bn2: BatchNorm::new(arch.hidden),
        });
        width = arch.pooled_width();
    }
    let out = affine(width, arch.output_dim);
    Ok(InferenceNetwork { arch, blocks, out })
}

impl InferenceNetwork {
    pub fn arch(&self) -> &NetworkArch {
        &self.arch
    }

    /// All trainable tensors in canonical order: per block
    /// `[fc1.w, fc1.b, bn1.scale, bn1.shift, fc2.w, fc2.b, bn2.scale,
    /// bn2.shift]`, then the output `w` and `b`.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(&b.fc1.w);
            out.push(&b.fc1.b);
            out.push(&b.bn1.scale);
            out.push(&b.bn1.shift);
            out.push(&b.fc2.w);
            out.push(&b.fc2.b);
            out.push(&b.bn2.scale);
            out.push(&b.bn2.shift);
        }
        out.push(&self.out.w);
        out.push(&self.out.b);
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.fc1.w);
            out.push(&mut b.fc1.b);
            out.push(&mut b.bn1.scale);
            out.push(&mut b.bn1.shift);
            out.push(&mut b.fc2.w);
            out.push(&mut b.fc2.b);
            out.push(&mut b.bn2.scale);
            out.push(&mut b.bn2.shift);
        }
        out.push(&mut self.out.w);
        out.push(&mut self.out.b);
        out
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }

    /// Running batch-norm statistics in block order
    /// (`bn1.mean, bn1.var, bn2.mean, bn2.var`, ...).
    pub fn running_stats(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            out.push(&b.bn1.running_mean);
            out.push(&b.bn1.running_var);
            out.push(&b.bn2.running_mean);
            out.push(&b.bn2.running_var);
        }
        out
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.bn1.running_mean);
            out.push(&mut b.bn1.running_var);
            out.push(&mut b.bn2.running_mean);
            out.push(&mut b.bn2.running_var);
        }
        out
    }

    /// Train-mode forward: records on the tape, normalizes by batch
    /// statistics, and folds those statistics into the running averages.
    /// Requires a batch of at least two measurements. Returns the `B x 2`
    /// prediction node and the leaf ids of every parameter (for the
    /// optimizer to read gradients from after `backward`).
    pub fn forward_train(&mut self, tape: &mut Tape, input: VarId) -> (VarId, TapedParams) {
        let (batch, width) = tape.value(input).shape();
        assert_eq!(
            width, self.arch.input_dim,
            "input width {width} does not match network input {}",
            self.arch.input_dim
        );
        assert!(batch >= 2, "train-mode forward requires batch >= 2, got {batch}");

        let mut ids = Vec::new();
        let mut h = input;
        let pool = self.arch.pool_group;
        for b in &mut self.blocks {
            for (fc, bn) in [(&b.fc1, &mut b.bn1), (&b.fc2, &mut b.bn2)] {
                let w = tape.leaf(fc.w.clone());
                let bias = tape.leaf(fc.b.clone());
                let scale = tape.leaf(bn.scale.clone());
                let shift = tape.leaf(bn.shift.clone());
                ids.extend([w, bias, scale, shift]);
                let lin = tape.matmul(h, w);
                let lin = tape.add_row(lin, bias);
                let (normed, stats) = tape.batch_norm(lin, scale, shift, BN_EPS);
                bn.absorb(&stats.mean, &stats.var);
                h = tape.relu(normed);
            }
            h = tape.max_pool_groups(h, pool);
        }
        let w = tape.leaf(self.out.w.clone());
        let bias = tape.leaf(self.out.b.clone());
        ids.extend([w, bias]);
        let lin = tape.matmul(h, w);
        let pred = tape.add_row(lin, bias);
        (pred, TapedParams { ids })
    }

    /// Eval-mode forward: pure function using running statistics; any batch
    /// size (including 1) is valid.
    pub fn forward_eval(&self, input: &Tensor) -> Tensor {
        assert_eq!(
            input.cols(),
            self.arch.input_dim,
            "input width {} does not match network input {}",
            input.cols(),
            self.arch.input_dim
        );
        let mut h = input.clone();
        for b in &self.blocks {
            for (fc, bn) in [(&b.fc1, &b.bn1), (&b.fc2, &b.bn2)] {
                let mut lin = h.matmul(&fc.w);
                for r in 0..lin.rows() {
                    for (v, &bias) in lin.row_mut(r).iter_mut().zip(fc.b.row(0)) {
                        *v += bias;
                    }
                }
                let normed = bn.eval(&lin);
                h = normed.map(|x| if x > 0.0 { x } else { 0.0 });
            }
            h = max_pool_rows(&h, self.arch.pool_group);
        }
        let mut out = h.matmul(&self.out.w);
        for r in 0..out.rows() {
            for (v, &bias) in out.row_mut(r).iter_mut().zip(self.out.b.row(0)) {
                *v += bias;
            }
        }
        out
    }
}

fn max_pool_rows(x: &Tensor, k: usize) -> Tensor {
    let out_cols = x.cols() / k;
    let mut out = Tensor::zeros(x.rows(), out_cols);
    for r in 0..x.rows() {
        let row = x.row(r);
        for g in 0..out_cols {
            let m = row[g * k..(g + 1) * k]
                .iter()
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            out.set(r, g, m);
        }
    }
    out
}

/// One classical-momentum SGD update:
/// `velocity <- momentum * velocity + grad; param <- param - lr * velocity`.
pub fn sgd_step(param: &mut Tensor, grad: &Tensor, velocity: &mut Tensor, lr: f64, momentum: f64) {
    assert_eq!(param.shape(), grad.shape(), "sgd_step shape mismatch");
    assert_eq!(param.shape(), velocity.shape(), "sgd_step state shape mismatch");
    for ((p, &g), v) in param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(velocity.as_mut_slice())
    {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}
