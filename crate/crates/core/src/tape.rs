//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The tape is define-by-run: every primitive appends one node holding the
//! forward value and enough context to replay its backward rule. A single
//! reverse sweep over the node list accumulates gradients in a fixed order,
//! so repeated sweeps are bitwise identical. Tapes are rebuilt each training
//! step and are not shared across threads.

use crate::tensor::{softmax_rows_scaled, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(usize);

/// Per-feature batch statistics produced by a train-mode batch-norm node,
/// for the caller's running-average update.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Div(VarId, VarId),
    Scale(VarId, f64),
    AddRow(VarId, VarId),
    MatMul(VarId, VarId),
    Sum(VarId),
    Mean(VarId),
    Relu(VarId),
    Sqrt(VarId),
    Cos(VarId),
    Sin(VarId),
    Square(VarId),
    ClipMax(VarId, f64),
    SoftmaxScaled(VarId, f64),
    MaxPoolGroups(VarId, usize),
    SliceCols(VarId, usize, usize),
    Reshape(VarId),
    BatchNorm {
        input: VarId,
        scale: VarId,
        shift: VarId,
        x_hat: Tensor,
        inv_std: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    needs_grad: bool,
    op: Op,
}

/// Recorded forward computation plus gradient slots.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable input; gradients accumulate into its slot.
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(value, true, Op::Leaf)
    }

    /// Records a constant input; backward skips it.
    pub fn constant(&mut self, value: Tensor) -> VarId {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by the latest [`Tape::backward`] sweep; zero if
    /// no gradient reached this node.
    pub fn grad(&self, id: VarId) -> Tensor {
        let node = &self.nodes[id.0];
        match &node.grad {
            Some(g) => g.clone(),
            None => Tensor::zeros(node.value.rows(), node.value.cols()),
        }
    }

    fn push(&mut self, value: Tensor, needs_grad: bool, op: Op) -> VarId {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        VarId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, inputs: &[VarId], op: Op) -> VarId {
        let needs = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.push(value, needs, op)
    }

    fn shapes(&self, a: VarId, b: VarId) -> ((usize, usize), (usize, usize)) {
        (self.value(a).shape(), self.value(b).shape())
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let (sa, sb) = self.shapes(a, b);
        assert_eq!(sa, sb, "add shape mismatch: {sa:?} vs {sb:?}");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_op(v, &[a, b], Op::Add(a, b))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        let (sa, sb) = self.shapes(a, b);
        assert_eq!(sa, sb, "sub shape mismatch: {sa:?} vs {sb:?}");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push_op(v, &[a, b], Op::Sub(a, b))
    }

    /// Elementwise product; either operand may be a 1x1 scalar broadcast.
    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        let (sa, sb) = self.shapes(a, b);
        let v = if sa == sb {
            self.value(a).zip_map(self.value(b), |x, y| x * y)
        } else if sa == (1, 1) {
            let s = self.value(a).scalar_value();
            self.value(b).map(|x| s * x)
        } else if sb == (1, 1) {
            let s = self.value(b).scalar_value();
            self.value(a).map(|x| s * x)
        } else {
            panic!("mul shape mismatch: {sa:?} vs {sb:?}");
        };
        self.push_op(v, &[a, b], Op::Mul(a, b))
    }

    /// Elementwise quotient; either operand may be a 1x1 scalar broadcast.
    pub fn div(&mut self, a: VarId, b: VarId) -> VarId {
        let (sa, sb) = self.shapes(a, b);
        let v = if sa == sb {
            self.value(a).zip_map(self.value(b), |x, y| x / y)
        } else if sb == (1, 1) {
            let s = self.value(b).scalar_value();
            self.value(a).map(|x| x / s)
        } else if sa == (1, 1) {
            let s = self.value(a).scalar_value();
            self.value(b).map(|x| s / x)
        } else {
            panic!("div shape mismatch: {sa:?} vs {sb:?}");
        };
        self.push_op(v, &[a, b], Op::Div(a, b))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let v = self.value(a).map(|x| c * x);
        self.push_op(v, &[a], Op::Scale(a, c))
    }

    /// Adds a 1xC row vector to every row of an RxC matrix (bias add).
    pub fn add_row(&mut self, m: VarId, r: VarId) -> VarId {
        let (sm, sr) = self.shapes(m, r);
        assert!(
            sr.0 == 1 && sr.1 == sm.1,
            "add_row shape mismatch: {sm:?} vs {sr:?}"
        );
        let mv = self.value(m);
        let rv = self.value(r);
        let mut out = mv.clone();
        for i in 0..sm.0 {
            for (o, &b) in out.row_mut(i).iter_mut().zip(rv.row(0)) {
                *o += b;
            }
        }
        self.push_op(out, &[m, r], Op::AddRow(m, r))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let (sa, sb) = self.shapes(a, b);
        assert_eq!(
            sa.1, sb.0,
            "matmul shape mismatch: {sa:?} * {sb:?}"
        );
        let v = self.value(a).matmul(self.value(b));
        self.push_op(v, &[a, b], Op::MatMul(a, b))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: VarId) -> VarId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push_op(v, &[a], Op::Sum(a))
    }

    /// Mean over all elements, as a scalar.
    pub fn mean(&mut self, a: VarId) -> VarId {
        let n = self.value(a).len() as f64;
        let v = Tensor::scalar(self.value(a).sum() / n);
        self.push_op(v, &[a], Op::Mean(a))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push_op(v, &[a], Op::Relu(a))
    }

    pub fn sqrt(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(f64::sqrt);
        self.push_op(v, &[a], Op::Sqrt(a))
    }

    pub fn cos(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(f64::cos);
        self.push_op(v, &[a], Op::Cos(a))
    }

    pub fn sin(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(f64::sin);
        self.push_op(v, &[a], Op::Sin(a))
    }

    pub fn square(&mut self, a: VarId) -> VarId {
        let v = self.value(a).map(|x| x * x);
        self.push_op(v, &[a], Op::Square(a))
    }

    /// `min(cap, x)` elementwise. The subgradient is 1 on the unsaturated
    /// branch (including exact equality) and 0 above the cap.
    pub fn clip_max(&mut self, a: VarId, cap: f64) -> VarId {
        let v = self.value(a).map(|x| x.min(cap));
        self.push_op(v, &[a], Op::ClipMax(a, cap))
    }

    /// Row-wise softmax of `alpha * x`.
    pub fn softmax_scaled(&mut self, a: VarId, alpha: f64) -> VarId {
        assert!(alpha > 0.0, "softmax_scaled requires alpha > 0, got {alpha}");
        let v = softmax_rows_scaled(self.value(a), alpha);
        self.push_op(v, &[a], Op::SoftmaxScaled(a, alpha))
    }

    /// Max over disjoint groups of `k` adjacent columns, per row.
    /// Backward routes each group's gradient to its first maximal element.
    pub fn max_pool_groups(&mut self, a: VarId, k: usize) -> VarId {
        let (rows, cols) = self.value(a).shape();
        assert!(
            k >= 1 && cols % k == 0,
            "max_pool_groups: group size {k} does not divide width {cols}"
        );
        let va = self.value(a);
        let out_cols = cols / k;
        let mut out = Tensor::zeros(rows, out_cols);
        for r in 0..rows {
            let row = va.row(r);
            for g in 0..out_cols {
                let m = row[g * k..(g + 1) * k]
                    .iter()
                    .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                out.set(r, g, m);
            }
        }
        self.push_op(out, &[a], Op::MaxPoolGroups(a, k))
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, a: VarId, start: usize, end: usize) -> VarId {
        let (rows, cols) = self.value(a).shape();
        assert!(
            start < end && end <= cols,
            "slice_cols range {start}..{end} out of bounds for width {cols}"
        );
        let va = self.value(a);
        let mut out = Tensor::zeros(rows, end - start);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&va.row(r)[start..end]);
        }
        self.push_op(out, &[a], Op::SliceCols(a, start, end))
    }

    /// Same data, new shape (row-major order preserved).
    pub fn reshape(&mut self, a: VarId, rows: usize, cols: usize) -> VarId {
        let v = self.value(a);
        assert_eq!(
            v.len(),
            rows * cols,
            "reshape length mismatch: {:?} -> {rows}x{cols}",
            v.shape()
        );
        let out = Tensor::from_vec(rows, cols, v.as_slice().to_vec());
        self.push_op(out, &[a], Op::Reshape(a))
    }

    /// Train-mode batch normalization over the batch (row) dimension.
    ///
    /// Normalizes with biased batch statistics, then applies the learned
    /// per-feature scale and shift. Returns the batch statistics so the
    /// caller can update its running averages. Requires at least two rows.
    pub fn batch_norm(
        &mut self,
        input: VarId,
        scale: VarId,
        shift: VarId,
        eps: f64,
    ) -> (VarId, BatchStats) {
        let (b, f) = self.value(input).shape();
        assert!(b >= 2, "batch_norm requires batch size >= 2, got {b}");
        let (ss, sh) = self.shapes(scale, shift);
        assert!(
            ss == (1, f) && sh == (1, f),
            "batch_norm parameter shape mismatch: input {:?}, scale {ss:?}, shift {sh:?}",
            (b, f)
        );
        let x = self.value(input);
        let mut mean = vec![0.0; f];
        for r in 0..b {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= b as f64;
        }
        let mut var = vec![0.0; f];
        for r in 0..b {
            for ((v, &xv), &m) in var.iter_mut().zip(x.row(r)).zip(mean.iter()) {
                let d = xv - m;
                *v += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= b as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let mut x_hat = Tensor::zeros(b, f);
        for r in 0..b {
            for c in 0..f {
                x_hat.set(r, c, (x.get(r, c) - mean[c]) * inv_std[c]);
            }
        }
        let sc = self.value(scale);
        let sf = self.value(shift);
        let mut out = Tensor::zeros(b, f);
        for r in 0..b {
            for c in 0..f {
                out.set(r, c, sc.get(0, c) * x_hat.get(r, c) + sf.get(0, c));
            }
        }
        let id = self.push_op(
            out,
            &[input, scale, shift],
            Op::BatchNorm {
                input,
                scale,
                shift,
                x_hat,
                inv_std,
            },
        );
        (id, BatchStats { mean, var })
    }

    /// Accumulates d`loss`/d`node` into every reachable gradient slot with a
    /// single reverse sweep. `loss` must be scalar. Slots are reset first, so
    /// repeated sweeps over the same tape are bitwise identical.
    pub fn backward(&mut self, loss: VarId) {
        assert!(
            self.value(loss).is_scalar(),
            "backward requires a scalar loss, found {:?}",
            self.value(loss).shape()
        );
        for n in self.nodes.iter_mut() {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let contribs = self.contributions(i);
            for (j, c) in contribs {
                match &mut self.nodes[j].grad {
                    Some(g) => g.add_assign(&c),
                    slot @ None => *slot = Some(c),
                }
            }
        }
    }

    fn wants(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Gradient contributions of node `i` to its inputs.
    fn contributions(&self, i: usize) -> Vec<(usize, Tensor)> {
        let node = &self.nodes[i];
        let g = node.grad.as_ref().expect("grad present");
        let y = &node.value;
        let mut out: Vec<(usize, Tensor)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    out.push((a.0, g.clone()));
                }
                if self.wants(*b) {
                    out.push((b.0, g.clone()));
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    out.push((a.0, g.clone()));
                }
                if self.wants(*b) {
                    out.push((b.0, g.map(|x| -x)));
                }
            }
            Op::Mul(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                if self.wants(*a) {
                    out.push((a.0, broadcast_grad(g, vb, va.shape())));
                }
                if self.wants(*b) {
                    out.push((b.0, broadcast_grad(g, va, vb.shape())));
                }
            }
            Op::Div(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                // y = a / b: dy/da = 1/b, dy/db = -a/b^2
                if self.wants(*a) {
                    let w = if vb.is_scalar() {
                        let s = vb.scalar_value();
                        g.map(|x| x / s)
                    } else {
                        g.zip_map(vb, |gx, bx| gx / bx)
                    };
                    out.push((a.0, reduce_to_shape(w, va.shape())));
                }
                if self.wants(*b) {
                    // dy/db elementwise over the output shape
                    let ag = if va.is_scalar() {
                        let s = va.scalar_value();
                        vb.map(|bx| -s / (bx * bx))
                    } else if vb.is_scalar() {
                        let s = vb.scalar_value();
                        va.map(|ax| -ax / (s * s))
                    } else {
                        va.zip_map(vb, |ax, bx| -ax / (bx * bx))
                    };
                    let w = g.zip_map(&ag, |gx, d| gx * d);
                    out.push((b.0, reduce_to_shape(w, vb.shape())));
                }
            }
            Op::Scale(a, c) => {
                if self.wants(*a) {
                    out.push((a.0, g.map(|x| c * x)));
                }
            }
            Op::AddRow(m, r) => {
                if self.wants(*m) {
                    out.push((m.0, g.clone()));
                }
                if self.wants(*r) {
                    let mut acc = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (a, &gv) in acc.row_mut(0).iter_mut().zip(g.row(i)) {
                            *a += gv;
                        }
                    }
                    out.push((r.0, acc));
                }
            }
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    out.push((a.0, g.matmul_nt(self.value(*b))));
                }
                if self.wants(*b) {
                    out.push((b.0, self.value(*a).matmul_tn(g)));
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let s = g.scalar_value();
                    let (r, c) = self.value(*a).shape();
                    out.push((a.0, Tensor::filled(r, c, s)));
                }
            }
            Op::Mean(a) => {
                if self.wants(*a) {
                    let (r, c) = self.value(*a).shape();
                    let s = g.scalar_value() / (r * c) as f64;
                    out.push((a.0, Tensor::filled(r, c, s)));
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    out.push((a.0, g.zip_map(va, |gx, x| if x > 0.0 { gx } else { 0.0 })));
                }
            }
            Op::Sqrt(a) => {
                if self.wants(*a) {
                    out.push((a.0, g.zip_map(y, |gx, yx| gx / (2.0 * yx))));
                }
            }
            Op::Cos(a) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    out.push((a.0, g.zip_map(va, |gx, x| -gx * x.sin())));
                }
            }
            Op::Sin(a) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    out.push((a.0, g.zip_map(va, |gx, x| gx * x.cos())));
                }
            }
            Op::Square(a) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    out.push((a.0, g.zip_map(va, |gx, x| 2.0 * gx * x)));
                }
            }
            Op::ClipMax(a, cap) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    let cap = *cap;
                    out.push((a.0, g.zip_map(va, |gx, x| if x <= cap { gx } else { 0.0 })));
                }
            }
            Op::SoftmaxScaled(a, alpha) => {
                if self.wants(*a) {
                    let s = y;
                    let mut d = Tensor::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let dot: f64 = g
                            .row(r)
                            .iter()
                            .zip(s.row(r))
                            .map(|(&gx, &sx)| gx * sx)
                            .sum();
                        for c in 0..s.cols() {
                            d.set(r, c, alpha * s.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    out.push((a.0, d));
                }
            }
            Op::MaxPoolGroups(a, k) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    let mut d = Tensor::zeros(va.rows(), va.cols());
                    for r in 0..va.rows() {
                        let row = va.row(r);
                        for gi in 0..g.cols() {
                            let grp = &row[gi * k..(gi + 1) * k];
                            let mut arg = 0;
                            for (idx, &v) in grp.iter().enumerate() {
                                if v > grp[arg] {
                                    arg = idx;
                                }
                            }
                            d.set(r, gi * k + arg, g.get(r, gi));
                        }
                    }
                    out.push((a.0, d));
                }
            }
            Op::SliceCols(a, start, _end) => {
                if self.wants(*a) {
                    let va = self.value(*a);
                    let mut d = Tensor::zeros(va.rows(), va.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            d.set(r, start + c, g.get(r, c));
                        }
                    }
                    out.push((a.0, d));
                }
            }
            Op::Reshape(a) => {
                if self.wants(*a) {
                    let (r, c) = self.value(*a).shape();
                    out.push((a.0, Tensor::from_vec(r, c, g.as_slice().to_vec())));
                }
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                x_hat,
                inv_std,
            } => {
                let (b, f) = x_hat.shape();
                let bf = b as f64;
                // Column sums of g and g*x_hat feed all three gradients.
                let mut sum_g = vec![0.0; f];
                let mut sum_gx = vec![0.0; f];
                for r in 0..b {
                    for c in 0..f {
                        let gv = g.get(r, c);
                        sum_g[c] += gv;
                        sum_gx[c] += gv * x_hat.get(r, c);
                    }
                }
                if self.wants(*shift) {
                    out.push((shift.0, Tensor::row_vector(sum_g.clone())));
                }
                if self.wants(*scale) {
                    out.push((scale.0, Tensor::row_vector(sum_gx.clone())));
                }
                if self.wants(*input) {
                    let sc = self.value(*scale);
                    let mut d = Tensor::zeros(b, f);
                    for r in 0..b {
                        for c in 0..f {
                            let term = g.get(r, c) - sum_g[c] / bf
                                - x_hat.get(r, c) * (sum_gx[c] / bf);
                            d.set(r, c, sc.get(0, c) * inv_std[c] * term);
                        }
                    }
                    out.push((input.0, d));
                }
            }
        }
        out
    }
}

/// Gradient of one side of a (possibly scalar-broadcast) elementwise product:
/// `g * other`, reduced to `target` shape by summation when that side was the
/// broadcast scalar.
fn broadcast_grad(g: &Tensor, other: &Tensor, target: (usize, usize)) -> Tensor {
    let w = if other.is_scalar() && g.shape() != other.shape() {
        let s = other.scalar_value();
        g.map(|x| x * s)
    } else {
        g.zip_map(other, |gx, ox| gx * ox)
    };
    reduce_to_shape(w, target)
}

fn reduce_to_shape(t: Tensor, target: (usize, usize)) -> Tensor {
    if t.shape() == target {
        t
    } else {
        assert_eq!(target, (1, 1), "cannot reduce {:?} to {target:?}", t.shape());
        Tensor::scalar(t.sum())
    }
}

/// Compares the tape gradient of a scalar-valued computation against central
/// finite differences, elementwise over a flat parameter vector.
///
/// `build` must be a pure function of the 1xN leaf it is given. Relative
/// error uses the denominator `max(|tape|, |fd|, 1e-8)`; the largest
/// elementwise error is returned. The finite-difference side only ever reads
/// forward values, so it stays independent of the backward rules it audits.
pub fn finite_diff_check<F>(build: F, x0: &[f64], step: f64) -> f64
where
    F: Fn(&mut Tape, VarId) -> VarId,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(Tensor::row_vector(x0.to_vec()));
    let out = build(&mut tape, leaf);
    assert!(
        tape.value(out).is_scalar(),
        "finite_diff_check requires a scalar objective"
    );
    tape.backward(out);
    let grad = tape.grad(leaf);

    let eval = |x: Vec<f64>| -> f64 {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::row_vector(x));
        let o = build(&mut t, l);
        t.value(o).scalar_value()
    };

    let mut worst = 0.0_f64;
    for i in 0..x0.len() {
        let mut xp = x0.to_vec();
        xp[i] += step;
        let mut xm = x0.to_vec();
        xm[i] -= step;
        let fd = (eval(xp) - eval(xm)) / (2.0 * step);
        let a = grad.as_slice()[i];
        let denom = a.abs().max(fd.abs()).max(1e-8);
        worst = worst.max((a - fd).abs() / denom);
    }
    worst
}
