//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! All model computation is recorded on a [`Tape`]: every operation appends a
//! node holding its forward value and enough context to run its backward
//! rule. [`Var`] is a cheap handle into the tape. Leaves created from tensors
//! with `requires_grad` receive gradients after [`Tape::backward`].
//!
//! Layout is batch-channels-height-width, row-major, 64-bit floats
//! throughout. There is no implicit broadcasting except scalar-vs-tensor in
//! the elementwise ops.

mod ops_basic;
mod ops_nn;
mod ops_spectral;

pub use ops_nn::{conv2d_out_dim, resize_bilinear_plane, RunningStat, BN_EPS, BN_MOMENTUM};

use crate::error::{Error, Result};

/// Dense n-dimensional array of f64 with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length must equal the product of its shape"
        );
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Zero the gradient slot (allocating it if missing).
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Which way 1-D lines run for phase unwrapping: `Row` unwraps each row
/// left-to-right, `Col` unwraps each column top-to-bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnwrapAxis {
    Row,
    Col,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    AddScalar { a: Var, c: f64 },
    MulScalar { a: Var, c: f64 },
    SubFromScalar { c: f64, a: Var },
    Abs { a: Var },
    Sigmoid { a: Var },
    LeakyRelu { a: Var, slope: f64 },
    Conv2d { input: Var, weight: Var, bias: Var, stride: usize, padding: usize, dilation: usize },
    BatchNorm2d { input: Var, gamma: Var, beta: Var, train: bool, mean: Vec<f64>, invstd: Vec<f64> },
    MaxPool2 { input: Var, argmax: Vec<usize> },
    UpsampleBilinear { input: Var, factor: f64 },
    ConcatChannels { a: Var, b: Var },
    BroadcastChannels { a: Var, channels: usize },
    ExpandChannelVec { a: Var, batch: usize, height: usize, width: usize },
    SumAll { a: Var },
    SumPlanes { a: Var },
    FrobPlanes { a: Var, norms: Vec<f64> },
    Dft2 { a: Var },
    Idft2Real { a: Var },
    ApplyFilter { a: Var, mask: Vec<f64> },
    PhaseAngle { a: Var },
    Unwrap { a: Var, axis: UnwrapAxis },
}

pub(crate) struct Node {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
    pub op: Op,
}

/// Recorded computation: an append-only list of operation nodes in
/// topological order. A tape is single-owner; independent tapes may be
/// evaluated concurrently, but one tape must never be driven by two threads.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
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

    pub(crate) fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record a tensor as a leaf, honoring its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.data.clone(), t.shape.clone(), t.requires_grad, Op::Leaf)
    }

    /// Record a constant leaf (no gradient).
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(data, shape, false, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(vec![value], vec![1], false, Op::Leaf)
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].data.len()
    }

    /// Gradient accumulated on `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn export(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.data(v).to_vec())
    }

    pub(crate) fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn dims4(&self, v: Var, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        let s = self.shape(v);
        if s.len() != 4 {
            return Err(Error::ShapeMismatch {
                op,
                expected: "a 4-D tensor [B,C,H,W]".into(),
                got: format!("{s:?}"),
            });
        }
        Ok((s[0], s[1], s[2], s[3]))
    }

    /// Reverse pass from a scalar loss. Each call traverses the tape once
    /// with a fresh gradient workspace, then adds the result into every
    /// node's persistent grad slot, so repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::InvalidArgument {
                op: "backward",
                message: format!(
                    "loss must be a scalar, got shape {:?}",
                    self.shape(loss)
                ),
            });
        }
        let mut ws: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        ws[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if ws[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = ws[i].take().expect("checked above");
            let node = &self.nodes[i];
            let mut ctx = BackwardCtx { nodes: &self.nodes, ws: &mut ws };
            step_backward(&mut ctx, &node.op, &g, &node.data, &node.shape);
            ws[i] = Some(g);
        }
        for (node, slot) in self.nodes.iter_mut().zip(ws) {
            if let Some(contrib) = slot {
                let g = node.grad.get_or_insert_with(|| vec![0.0; node.data.len()]);
                for (gi, ci) in g.iter_mut().zip(&contrib) {
                    *gi += ci;
                }
            }
        }
        Ok(())
    }
}

/// View of the tape during a backward traversal: node values are readable,
/// gradient contributions go to a per-pass workspace.
pub(crate) struct BackwardCtx<'a> {
    nodes: &'a [Node],
    ws: &'a mut [Option<Vec<f64>>],
}

impl BackwardCtx<'_> {
    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Add `contrib` into the workspace gradient of `v` if it participates.
    pub fn add(&mut self, v: Var, contrib: &[f64]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let g = self.ws[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].data.len()]);
        debug_assert_eq!(g.len(), contrib.len());
        for (gi, ci) in g.iter_mut().zip(contrib) {
            *gi += ci;
        }
    }
}

fn step_backward(ctx: &mut BackwardCtx, op: &Op, g: &[f64], out_data: &[f64], out_shape: &[usize]) {
    match op {
        Op::Leaf => {}
        Op::Add { a, b } => ops_basic::backward_add(ctx, *a, *b, g),
        Op::Sub { a, b } => ops_basic::backward_sub(ctx, *a, *b, g),
        Op::Mul { a, b } => ops_basic::backward_mul(ctx, *a, *b, g),
        Op::Div { a, b } => ops_basic::backward_div(ctx, *a, *b, g),
        Op::AddScalar { a, .. } => ops_basic::backward_add_scalar(ctx, *a, g),
        Op::MulScalar { a, c } => ops_basic::backward_mul_scalar(ctx, *a, *c, g),
        Op::SubFromScalar { a, .. } => ops_basic::backward_sub_from_scalar(ctx, *a, g),
        Op::Abs { a } => ops_basic::backward_abs(ctx, *a, g),
        Op::Sigmoid { a } => ops_basic::backward_sigmoid(ctx, *a, g, out_data),
        Op::LeakyRelu { a, slope } => ops_basic::backward_leaky_relu(ctx, *a, *slope, g),
        Op::Conv2d { input, weight, bias, stride, padding, dilation } => {
            ops_nn::backward_conv2d(ctx, *input, *weight, *bias, *stride, *padding, *dilation, g, out_shape)
        }
        Op::BatchNorm2d { input, gamma, beta, train, mean, invstd } => {
            ops_nn::backward_batchnorm(ctx, *input, *gamma, *beta, *train, mean, invstd, g)
        }
        Op::MaxPool2 { input, argmax } => ops_nn::backward_maxpool2(ctx, *input, argmax, g),
        Op::UpsampleBilinear { input, factor } => {
            ops_nn::backward_upsample(ctx, *input, *factor, g, out_shape)
        }
        Op::ConcatChannels { a, b } => ops_basic::backward_concat(ctx, *a, *b, g),
        Op::BroadcastChannels { a, channels } => {
            ops_basic::backward_broadcast_channels(ctx, *a, *channels, g)
        }
        Op::ExpandChannelVec { a, batch, height, width } => {
            ops_basic::backward_expand_channel_vec(ctx, *a, *batch, *height, *width, g)
        }
        Op::SumAll { a } => ops_basic::backward_sum_all(ctx, *a, g),
        Op::SumPlanes { a } => ops_basic::backward_sum_planes(ctx, *a, g),
        Op::FrobPlanes { a, norms } => ops_basic::backward_frob_planes(ctx, *a, norms, g),
        Op::Dft2 { a } => ops_spectral::backward_dft2(ctx, *a, g, out_shape),
        Op::Idft2Real { a } => ops_spectral::backward_idft2_real(ctx, *a, g, out_shape),
        Op::ApplyFilter { a, mask } => ops_spectral::backward_apply_filter(ctx, *a, mask, g),
        Op::PhaseAngle { a } => ops_spectral::backward_phase(ctx, *a, g),
        Op::Unwrap { a, .. } => ops_spectral::backward_unwrap(ctx, *a, g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_invariants() {
        let t = Tensor::zeros(vec![2, 3]);
        assert_eq!(t.numel(), 6);
        let t = t.with_grad();
        assert_eq!(t.grad.as_ref().unwrap().len(), 6);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2], vec![1.0, 2.0]);
        assert!(matches!(
            tape.backward(x),
            Err(Error::InvalidArgument { op: "backward", .. })
        ));
    }

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum(x^2) on x = [1,2,3] -> grad [2,4,6]
        let mut tape = Tape::new();
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).with_grad();
        let x = tape.leaf(&t);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn disconnected_leaf_gets_no_gradient() {
        let mut tape = Tape::new();
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).with_grad();
        let b = Tensor::new(vec![2], vec![3.0, 4.0]).with_grad();
        let va = tape.leaf(&a);
        let vb = tape.leaf(&b);
        let loss = tape.sum_all(va);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(va).unwrap(), &[1.0, 1.0]);
        assert!(tape.grad(vb).is_none());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let t = Tensor::new(vec![2], vec![1.0, 1.0]).with_grad();
        let x = tape.leaf(&t);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_linearity() {
        // backward of (a*f + b*g) equals a*backward(f) + b*backward(g).
        let (a, b) = (2.5f64, -1.25f64);
        let xs = vec![0.3, -0.7, 1.1, 0.2];

        let grad_of = |scale_f: f64, scale_g: f64| -> Vec<f64> {
            let mut tape = Tape::new();
            let t = Tensor::new(vec![4], xs.clone()).with_grad();
            let x = tape.leaf(&t);
            // f = sum(sigmoid(x)), g = sum(x*x)
            let sf = tape.sigmoid(x);
            let f = tape.sum_all(sf);
            let sq = tape.mul(x, x).unwrap();
            let g = tape.sum_all(sq);
            let fs = tape.mul_scalar(f, scale_f);
            let gs = tape.mul_scalar(g, scale_g);
            let loss = tape.add(fs, gs).unwrap();
            tape.backward(loss).unwrap();
            tape.grad(x).unwrap().to_vec()
        };

        let gf = grad_of(1.0, 0.0);
        let gg = grad_of(0.0, 1.0);
        let gboth = grad_of(a, b);
        for i in 0..xs.len() {
            assert!((gboth[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12);
        }
    }
}
