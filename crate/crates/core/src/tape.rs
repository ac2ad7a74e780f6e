//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every forward operation in execution order, so inputs
//! always precede the nodes that consume them. [`Tape::backward`] walks the
//! record in reverse once; afterwards the tape rejects further use.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{GsanError, Result};
use crate::kernels::{conv, loss, matmul, norm, scan, segment};
use crate::tensor::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Neg,
    Exp,
    Sigmoid,
    LeakyRelu(Real),
    Softplus,
    Elu,
    Silu,
    Abs,
    Square,
    /// Huber with threshold δ: `x²/2` for `|x| ≤ δ`, else `δ(|x| - δ/2)`.
    Huber(Real),
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Neg => "neg",
            Unary::Exp => "exp",
            Unary::Sigmoid => "sigmoid",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Softplus => "softplus",
            Unary::Elu => "elu",
            Unary::Silu => "silu",
            Unary::Abs => "abs",
            Unary::Square => "square",
            Unary::Huber(_) => "huber",
        }
    }

    pub fn apply(self, x: Real) -> Real {
        match self {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Sigmoid => loss::sigmoid(x),
            Unary::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Softplus => softplus(x),
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::Silu => x * loss::sigmoid(x),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
            Unary::Huber(delta) => {
                if x.abs() <= delta {
                    0.5 * x * x
                } else {
                    delta * (x.abs() - 0.5 * delta)
                }
            }
        }
    }

    /// Local derivative given input `x` and output `y`.
    fn derivative(self, x: Real, y: Real) -> Real {
        match self {
            Unary::Neg => -1.0,
            Unary::Exp => y,
            Unary::Sigmoid => y * (1.0 - y),
            // the subgradient at exactly zero is taken as 1
            Unary::LeakyRelu(slope) => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Softplus => loss::sigmoid(x),
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::Silu => {
                let s = loss::sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Huber(delta) => x.clamp(-delta, delta),
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: Real) -> Real {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary {
        kind: Binary,
        a: Var,
        b: Var,
        row_broadcast: bool,
    },
    Scale(Var, Real),
    Unary(Var, Unary),
    Sum(Var),
    Mean(Var),
    SegmentSoftmax {
        x: Var,
        segment_of: Arc<[usize]>,
        segments: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Arc<[usize]>,
    },
    EdgeAggregate {
        weights: Var,
        values: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
    Dropout {
        x: Var,
        mask: Vec<Real>,
    },
    Conv {
        x: Var,
        kernel: Var,
        bias: Var,
    },
    Scan {
        inputs: ScanVars,
        fwd: scan::ScanOutput,
    },
    ConstantScan {
        inputs: ScanVars,
        repeats: usize,
    },
    Standardize {
        x: Var,
        inv_std: Vec<Real>,
    },
    /// Fused losses carry their gradient with respect to `logits`.
    Loss {
        logits: Var,
        grad: Vec<Real>,
    },
}

/// Tape handles for the recurrence inputs.
#[derive(Clone, Copy, Debug)]
pub struct ScanVars {
    pub u: Var,
    pub delta: Var,
    pub a: Var,
    pub b: Var,
    pub c: Var,
    pub d: Var,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every tracked leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(&var)
    }

    pub fn remove(&mut self, var: Var) -> Option<Tensor> {
        self.grads.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn broadcastable(a: &[usize], b: &[usize]) -> Option<bool> {
    if a == b {
        return Some(false);
    }
    let cols = match a.len() {
        2 => a[1],
        _ => return None,
    };
    match b {
        [c] if *c == cols => Some(true),
        [1, c] if *c == cols => Some(true),
        _ => None,
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        if self.consumed {
            return Err(GsanError::TapeConsumed);
        }
        if vars.iter().any(|v| v.0 >= self.nodes.len()) {
            return Err(GsanError::ForeignVar);
        }
        Ok(())
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(GsanError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.check(&[])?;
        if !value.all_finite() {
            return Err(GsanError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Records a trainable value; [`Tape::backward`] reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(GsanError::shape("matmul", format!("{:?} x {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b])
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let row_broadcast = broadcastable(self.shape(a), self.shape(b)).ok_or_else(|| {
            GsanError::shape(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b)))
        })?;
        let (va, vb) = (self.value(a), self.value(b));
        let cols = vb.numel().max(1);
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = if row_broadcast {
                    vb.data()[i % cols]
                } else {
                    vb.data()[i]
                };
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(
            name,
            value,
            Op::Binary {
                kind,
                a,
                b,
                row_broadcast,
            },
            &[a, b],
        )
    }

    /// Elementwise sum; `b` may also be a row vector broadcast over rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, x: Var, k: Real) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).map(|v| v * k);
        self.push("scale", value, Op::Scale(x, k), &[x])
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).map(|v| kind.apply(v));
        self.push(kind.name(), value, Op::Unary(x, kind), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Exp)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: Real) -> Result<Var> {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Softplus)
    }

    pub fn elu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Elu)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Silu)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let value = Tensor::scalar(self.value(x).sum());
        self.push("sum", value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(GsanError::Invalid("mean of an empty tensor".into()));
        }
        let value = Tensor::scalar(t.sum() / t.numel() as Real);
        self.push("mean", value, Op::Mean(x), &[x])
    }

    /// Softmax of a score vector within groups given by `segment_of`.
    pub fn segment_softmax(
        &mut self,
        scores: Var,
        segment_of: Arc<[usize]>,
        segments: usize,
    ) -> Result<Var> {
        self.check(&[scores])?;
        let x = self.value(scores);
        if x.numel() != segment_of.len() {
            return Err(GsanError::shape(
                "segment_softmax",
                format!("{} scores for {} segment ids", x.numel(), segment_of.len()),
            ));
        }
        segment::check_segments(&segment_of, segments)?;
        let out = segment::softmax(x.data(), &segment_of, segments);
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push(
            "segment_softmax",
            value,
            Op::SegmentSoftmax {
                x: scores,
                segment_of,
                segments,
            },
            &[scores],
        )
    }

    /// Concatenates 1-D or 2-D tensors along `axis`.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.check(inputs)?;
        let first = *inputs
            .first()
            .ok_or_else(|| GsanError::Invalid("concat of zero tensors".into()))?;
        let ndim = self.shape(first).len();
        if axis >= ndim.max(1) || ndim > 2 {
            return Err(GsanError::shape("concat", format!("axis {} for {}-d input", axis, ndim)));
        }
        let value = if axis == 0 {
            let tail: Vec<usize> = self.shape(first)[1..].to_vec();
            let mut rows = 0;
            let mut data = Vec::new();
            for &v in inputs {
                let s = self.shape(v);
                if s.len() != ndim || s[1..] != tail[..] {
                    return Err(GsanError::shape("concat", format!("{:?} vs {:?}", self.shape(first), s)));
                }
                rows += s[0];
                data.extend_from_slice(self.value(v).data());
            }
            let mut shape = vec![rows];
            shape.extend(tail);
            Tensor::new(shape, data)?
        } else {
            let rows = self.shape(first)[0];
            let mut widths = Vec::with_capacity(inputs.len());
            for &v in inputs {
                let s = self.shape(v);
                if s.len() != 2 || s[0] != rows {
                    return Err(GsanError::shape("concat", format!("{:?} vs {:?}", self.shape(first), s)));
                }
                widths.push(s[1]);
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (&v, &w) in inputs.iter().zip(&widths) {
                    data.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
                }
            }
            Tensor::new(vec![rows, total], data)?
        };
        self.push(
            "concat",
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check(&[x])?;
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let value = match axis {
            0 if start + len <= rows => {
                let mut shape = t.shape().to_vec();
                shape[0] = len;
                Tensor::new(shape, t.data()[start * cols..(start + len) * cols].to_vec())?
            }
            1 if t.ndim() == 2 && start + len <= cols => {
                let mut data = Vec::with_capacity(rows * len);
                for r in 0..rows {
                    data.extend_from_slice(&t.data()[r * cols + start..r * cols + start + len]);
                }
                Tensor::new(vec![rows, len], data)?
            }
            _ => {
                return Err(GsanError::shape(
                    "slice",
                    format!("axis {} range {}..{} of {:?}", axis, start, start + len, t.shape()),
                ))
            }
        };
        self.push("slice", value, Op::Slice { x, axis, start }, &[x])
    }

    /// `out[i] = x[index[i]]` over rows.
    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var> {
        self.check(&[x])?;
        let t = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= t.rows()) {
            return Err(GsanError::OutOfRange {
                what: "row",
                index: bad,
                len: t.rows(),
            });
        }
        let mut value = t.select_rows(&index);
        if t.ndim() == 1 {
            value = value.reshape(vec![index.len()])?;
        }
        self.push("gather_rows", value, Op::GatherRows { x, index }, &[x])
    }

    /// `out[dst[e]] += weights[e] · values[src[e]]`, giving one row per row of `values`.
    pub fn edge_aggregate(
        &mut self,
        weights: Var,
        values: Var,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    ) -> Result<Var> {
        self.check(&[weights, values])?;
        let (w, v) = (self.value(weights), self.value(values));
        let (n, f) = (v.rows(), v.cols());
        if w.numel() != src.len() || src.len() != dst.len() {
            return Err(GsanError::shape(
                "edge_aggregate",
                format!("{} weights, {} sources, {} targets", w.numel(), src.len(), dst.len()),
            ));
        }
        if let Some(&bad) = src.iter().chain(dst.iter()).find(|&&i| i >= n) {
            return Err(GsanError::OutOfRange {
                what: "node",
                index: bad,
                len: n,
            });
        }
        let mut out = vec![0.0; n * f];
        for e in 0..src.len() {
            let we = w.data()[e];
            let (s, d) = (src[e], dst[e]);
            for c in 0..f {
                out[d * f + c] += we * v.data()[s * f + c];
            }
        }
        let value = Tensor::new(vec![n, f], out)?;
        self.push(
            "edge_aggregate",
            value,
            Op::EdgeAggregate {
                weights,
                values,
                src,
                dst,
            },
            &[weights, values],
        )
    }

    /// Inverted dropout: entries are zeroed with probability `rate` and
    /// survivors scaled by `1 / (1 - rate)`. Identity when not training.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: Real,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        self.check(&[x])?;
        if !(0.0..1.0).contains(&rate) {
            return Err(GsanError::Invalid(format!("dropout rate {} outside [0, 1)", rate)));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(x);
        let mask: Vec<Real> = (0..t.numel())
            .map(|_| {
                if rng.random::<f64>() < rate as f64 {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push("dropout", value, Op::Dropout { x, mask }, &[x])
    }

    /// Depthwise causal convolution of `x[T×D]` with `kernel[D×K]` and `bias[D]`.
    pub fn causal_conv1d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        self.check(&[x, kernel, bias])?;
        let (tx, tk, tb) = (self.value(x), self.value(kernel), self.value(bias));
        let (steps, ch) = (tx.rows(), tx.cols());
        let width = tk.cols();
        if tx.ndim() != 2 || tk.rows() != ch || tb.numel() != ch || width == 0 {
            return Err(GsanError::shape(
                "causal_conv1d",
                format!("x {:?}, kernel {:?}, bias {:?}", tx.shape(), tk.shape(), tb.shape()),
            ));
        }
        let out = conv::forward(tx.data(), tk.data(), tb.data(), steps, ch, width);
        let value = Tensor::new(vec![steps, ch], out)?;
        self.push("causal_conv1d", value, Op::Conv { x, kernel, bias }, &[x, kernel, bias])
    }

    fn scan_params(&self, v: &ScanVars) -> Result<(usize, usize, usize)> {
        let u = self.value(v.u);
        let (steps, ch) = (u.rows(), u.cols());
        let a = self.value(v.a);
        let ks = a.cols();
        let ok = u.ndim() == 2
            && self.value(v.delta).numel() == ch
            && a.rows() == ch
            && self.shape(v.b) == a.shape()
            && self.shape(v.c) == a.shape()
            && self.value(v.d).numel() == ch;
        if !ok {
            return Err(GsanError::shape(
                "selective_scan",
                format!(
                    "u {:?}, delta {:?}, A {:?}, B {:?}, C {:?}, D {:?}",
                    u.shape(),
                    self.shape(v.delta),
                    a.shape(),
                    self.shape(v.b),
                    self.shape(v.c),
                    self.shape(v.d)
                ),
            ));
        }
        Ok((steps, ch, ks))
    }

    fn kernel_params(&self, v: &ScanVars, ch: usize, ks: usize) -> scan::ScanParams<'_> {
        scan::ScanParams {
            delta: self.value(v.delta).data(),
            a: self.value(v.a).data(),
            b: self.value(v.b).data(),
            c: self.value(v.c).data(),
            d: self.value(v.d).data(),
            channels: ch,
            states: ks,
        }
    }

    /// Runs the diagonal recurrence over the rows of `u` (one row per step).
    /// `delta` must already be positive.
    pub fn selective_scan(&mut self, inputs: ScanVars) -> Result<Var> {
        let v = &inputs;
        self.check(&[v.u, v.delta, v.a, v.b, v.c, v.d])?;
        let (steps, ch, ks) = self.scan_params(v)?;
        let fwd = scan::forward(self.value(v.u).data(), steps, &self.kernel_params(v, ch, ks))?;
        let value = Tensor::new(vec![steps, ch], fwd.y.clone())?;
        self.push(
            "selective_scan",
            value,
            Op::Scan { inputs, fwd },
            &[v.u, v.delta, v.a, v.b, v.c, v.d],
        )
    }

    /// Recurrence with each row of `u` held constant for `repeats` steps.
    pub fn constant_input_scan(&mut self, inputs: ScanVars, repeats: usize) -> Result<Var> {
        let v = &inputs;
        self.check(&[v.u, v.delta, v.a, v.b, v.c, v.d])?;
        if repeats == 0 {
            return Err(GsanError::Invalid("constant-input scan needs at least one step".into()));
        }
        let (rows, ch, ks) = self.scan_params(v)?;
        let y = scan::constant_forward(
            self.value(v.u).data(),
            rows,
            repeats,
            &self.kernel_params(v, ch, ks),
        )?;
        let value = Tensor::new(vec![rows, ch], y)?;
        self.push(
            "constant_input_scan",
            value,
            Op::ConstantScan { inputs, repeats },
            &[v.u, v.delta, v.a, v.b, v.c, v.d],
        )
    }

    /// Per-row `(x - mean) / sqrt(var + eps)`.
    pub fn standardize_rows(&mut self, x: Var, eps: Real) -> Result<Var> {
        self.check(&[x])?;
        let t = self.value(x);
        if t.ndim() != 2 || t.cols() == 0 {
            return Err(GsanError::shape("standardize_rows", format!("{:?}", t.shape())));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let res = norm::forward(t.data(), rows, cols, eps);
        let value = Tensor::new(vec![rows, cols], res.out)?;
        self.push(
            "standardize_rows",
            value,
            Op::Standardize {
                x,
                inv_std: res.inv_std,
            },
            &[x],
        )
    }

    /// Mean cross-entropy of `logits[n×C]` over the node indices in `rows`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], rows: &[usize]) -> Result<Var> {
        self.check(&[logits])?;
        let t = self.value(logits);
        let (n, classes) = (t.rows(), t.cols());
        if rows.is_empty() {
            return Err(GsanError::Invalid("cross-entropy over an empty mask".into()));
        }
        if labels.len() != n {
            return Err(GsanError::shape("cross_entropy", format!("{} labels for {} rows", labels.len(), n)));
        }
        for &r in rows {
            if r >= n {
                return Err(GsanError::OutOfRange { what: "row", index: r, len: n });
            }
            if labels[r] >= classes {
                return Err(GsanError::OutOfRange { what: "class", index: labels[r], len: classes });
            }
        }
        let (value, grad) = loss::cross_entropy(t.data(), classes, labels, rows);
        self.push("cross_entropy", Tensor::scalar(value), Op::Loss { logits, grad }, &[logits])
    }

    /// Mean sigmoid cross-entropy over the rows in `rows` and every label.
    pub fn binary_cross_entropy(&mut self, logits: Var, targets: &Tensor, rows: &[usize]) -> Result<Var> {
        self.check(&[logits])?;
        let t = self.value(logits);
        if t.shape() != targets.shape() {
            return Err(GsanError::shape(
                "binary_cross_entropy",
                format!("{:?} vs {:?}", t.shape(), targets.shape()),
            ));
        }
        if rows.is_empty() {
            return Err(GsanError::Invalid("binary cross-entropy over an empty mask".into()));
        }
        if targets.data().iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(GsanError::Invalid("multilabel targets must be 0 or 1".into()));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= t.rows()) {
            return Err(GsanError::OutOfRange { what: "row", index: r, len: t.rows() });
        }
        let (value, grad) = loss::binary_cross_entropy(t.data(), t.cols(), targets.data(), rows);
        self.push(
            "binary_cross_entropy",
            Tensor::scalar(value),
            Op::Loss { logits, grad },
            &[logits],
        )
    }

    /// Propagates `d loss / d ·` back to every tracked leaf. Consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check(&[loss])?;
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(GsanError::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<Real>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let mut acc = |var: Var, delta: Vec<Real>| {
                if !self.nodes[var.0].requires_grad {
                    return;
                }
                match &mut grads[var.0] {
                    Some(existing) => {
                        for (e, d) in existing.iter_mut().zip(delta) {
                            *e += d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {
                    let t = Tensor::new(node.value.shape().to_vec(), g)?;
                    out.grads.insert(Var(idx), t);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if self.nodes[a.0].requires_grad {
                        acc(*a, matmul::matmul_nt(&g, tb.data(), m, n, k));
                    }
                    if self.nodes[b.0].requires_grad {
                        acc(*b, matmul::matmul_tn(ta.data(), &g, m, k, n));
                    }
                }
                Op::Binary {
                    kind,
                    a,
                    b,
                    row_broadcast,
                } => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let cols = tb.numel().max(1);
                    let bi = |i: usize| if *row_broadcast { i % cols } else { i };
                    let ga: Vec<Real> = match kind {
                        Binary::Add | Binary::Sub => g.clone(),
                        Binary::Mul => g.iter().enumerate().map(|(i, &gi)| gi * tb.data()[bi(i)]).collect(),
                    };
                    let mut gb = vec![0.0; tb.numel()];
                    for (i, &gi) in g.iter().enumerate() {
                        gb[bi(i)] += match kind {
                            Binary::Add => gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * ta.data()[i],
                        };
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Scale(x, k) => acc(*x, g.iter().map(|v| v * k).collect()),
                Op::Unary(x, kind) => {
                    let tx = &self.nodes[x.0].value;
                    let gx = g
                        .iter()
                        .zip(tx.data())
                        .zip(node.value.data())
                        .map(|((&gi, &xi), &yi)| gi * kind.derivative(xi, yi))
                        .collect();
                    acc(*x, gx);
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.numel();
                    acc(*x, vec![g[0]; n]);
                }
                Op::Mean(x) => {
                    let n = self.nodes[x.0].value.numel();
                    acc(*x, vec![g[0] / n as Real; n]);
                }
                Op::SegmentSoftmax {
                    x,
                    segment_of,
                    segments,
                } => {
                    let gx = segment::softmax_backward(&g, node.value.data(), segment_of, *segments);
                    acc(*x, gx);
                }
                Op::Concat { inputs, axis } => {
                    if *axis == 0 {
                        let mut offset = 0;
                        for &v in inputs {
                            let n = self.nodes[v.0].value.numel();
                            acc(v, g[offset..offset + n].to_vec());
                            offset += n;
                        }
                    } else {
                        let rows = node.value.rows();
                        let total = node.value.cols();
                        let mut offset = 0;
                        for &v in inputs {
                            let w = self.nodes[v.0].value.cols();
                            let mut part = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                part.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                            }
                            acc(v, part);
                            offset += w;
                        }
                    }
                }
                Op::Slice { x, axis, start } => {
                    let tx = &self.nodes[x.0].value;
                    let mut gx = vec![0.0; tx.numel()];
                    let cols = tx.cols();
                    if *axis == 0 {
                        gx[start * cols..start * cols + g.len()].copy_from_slice(&g);
                    } else {
                        let len = node.value.cols();
                        for r in 0..tx.rows() {
                            gx[r * cols + start..r * cols + start + len]
                                .copy_from_slice(&g[r * len..(r + 1) * len]);
                        }
                    }
                    acc(*x, gx);
                }
                Op::GatherRows { x, index } => {
                    let tx = &self.nodes[x.0].value;
                    let cols = tx.cols();
                    let mut gx = vec![0.0; tx.numel()];
                    for (i, &src) in index.iter().enumerate() {
                        for c in 0..cols {
                            gx[src * cols + c] += g[i * cols + c];
                        }
                    }
                    acc(*x, gx);
                }
                Op::EdgeAggregate {
                    weights,
                    values,
                    src,
                    dst,
                } => {
                    let (tw, tv) = (&self.nodes[weights.0].value, &self.nodes[values.0].value);
                    let f = tv.cols();
                    let mut gw = vec![0.0; tw.numel()];
                    let mut gv = vec![0.0; tv.numel()];
                    for e in 0..src.len() {
                        let (s, d) = (src[e], dst[e]);
                        let we = tw.data()[e];
                        let mut dot = 0.0;
                        for c in 0..f {
                            let gd = g[d * f + c];
                            dot += gd * tv.data()[s * f + c];
                            gv[s * f + c] += we * gd;
                        }
                        gw[e] = dot;
                    }
                    acc(*weights, gw);
                    acc(*values, gv);
                }
                Op::Dropout { x, mask } => {
                    acc(*x, g.iter().zip(mask).map(|(a, m)| a * m).collect());
                }
                Op::Conv { x, kernel, bias } => {
                    let (tx, tk) = (&self.nodes[x.0].value, &self.nodes[kernel.0].value);
                    let res = conv::backward(&g, tx.data(), tk.data(), tx.rows(), tx.cols(), tk.cols());
                    acc(*x, res.x);
                    acc(*kernel, res.kernel);
                    acc(*bias, res.bias);
                }
                Op::Scan { inputs, fwd } => {
                    let (steps, ch, ks) = self.scan_params(inputs)?;
                    let p = self.kernel_params(inputs, ch, ks);
                    let res = scan::backward(&g, self.nodes[inputs.u.0].value.data(), steps, &p, fwd);
                    acc(inputs.u, res.u);
                    acc(inputs.delta, res.delta);
                    acc(inputs.a, res.a);
                    acc(inputs.b, res.b);
                    acc(inputs.c, res.c);
                    acc(inputs.d, res.d);
                }
                Op::ConstantScan { inputs, repeats } => {
                    let (rows, ch, ks) = self.scan_params(inputs)?;
                    let p = self.kernel_params(inputs, ch, ks);
                    let res = scan::constant_backward(
                        &g,
                        self.nodes[inputs.u.0].value.data(),
                        rows,
                        *repeats,
                        &p,
                    )?;
                    acc(inputs.u, res.u);
                    acc(inputs.delta, res.delta);
                    acc(inputs.a, res.a);
                    acc(inputs.b, res.b);
                    acc(inputs.c, res.c);
                    acc(inputs.d, res.d);
                }
                Op::Standardize { x, inv_std } => {
                    let (rows, cols) = (node.value.rows(), node.value.cols());
                    let fwd = norm::Normalized {
                        out: node.value.data().to_vec(),
                        inv_std: inv_std.clone(),
                    };
                    acc(*x, norm::backward(&g, &fwd, rows, cols));
                }
                Op::Loss { logits, grad } => {
                    acc(*logits, grad.iter().map(|v| v * g[0]).collect());
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[Real]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_values() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1], &[-1.0])).unwrap();
        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert_eq!(tape.value(y).item(), -0.2);
        let z = tape.constant(t(&[1], &[0.0])).unwrap();
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s).item(), 0.5);
        let a = tape.constant(t(&[2], &[1.0, 2.0])).unwrap();
        let b = tape.constant(t(&[2], &[3.0, 4.0])).unwrap();
        let m = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(m).data(), &[3.0, 8.0]);
    }

    #[test]
    fn row_broadcast_and_rejection() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let b = tape.constant(t(&[3], &[10.0, 20.0, 30.0])).unwrap();
        let s = tape.add(a, b).unwrap();
        assert_eq!(tape.value(s).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let bad = tape.constant(t(&[2], &[1.0, 2.0])).unwrap();
        assert!(matches!(tape.add(a, bad), Err(GsanError::Shape { .. })));
    }

    #[test]
    fn matmul_dimension_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(GsanError::Shape { .. })));
    }

    #[test]
    fn concat_cases() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1], &[1.0])).unwrap();
        let b = tape.constant(t(&[1], &[2.0])).unwrap();
        let c = tape.concat(&[a, b], 0).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0]);
        let single = tape.concat(&[a], 0).unwrap();
        assert_eq!(tape.value(single), tape.value(a));

        let left: Vec<Real> = (0..6).map(|v| v as Real).collect();
        let right: Vec<Real> = (0..10).map(|v| 100.0 + v as Real).collect();
        let l = tape.constant(t(&[2, 3], &left)).unwrap();
        let r = tape.constant(t(&[2, 5], &right)).unwrap();
        let cat = tape.concat(&[l, r], 1).unwrap();
        let out = tape.value(cat);
        assert_eq!(out.shape(), &[2, 8]);
        for row in 0..2 {
            for col in 0..8 {
                let want = if col < 3 {
                    left[row * 3 + col]
                } else {
                    right[row * 5 + col - 3]
                };
                assert_eq!(out.get(row, col), want);
            }
        }
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[4, 4], 2.0)).unwrap();
        let same = tape.dropout(x, 0.0, &mut rng, true).unwrap();
        assert_eq!(tape.value(same), tape.value(x));
        let eval = tape.dropout(x, 0.6, &mut rng, false).unwrap();
        assert_eq!(tape.value(eval), tape.value(x));
        assert!(tape.dropout(x, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let mut tape = Tape::new();
        let n = 100_000;
        let x = tape.constant(Tensor::full(&[n], 1.0)).unwrap();
        let y = tape.dropout(x, 0.6, &mut rng, true).unwrap();
        let survivors: Vec<Real> = tape.value(y).data().iter().copied().filter(|&v| v != 0.0).collect();
        let frac = survivors.len() as f64 / n as f64;
        assert!((frac - 0.4).abs() < 0.01, "survivor fraction {frac}");
        let mean_scale = survivors.iter().sum::<Real>() as f64 / survivors.len() as f64;
        assert!((mean_scale - 2.5).abs() / 2.5 < 0.01);
    }

    #[test]
    fn linear_gradient() {
        // loss = sum(W x) with x fixed -> dL/dW[i,j] = x[j]
        let mut tape = Tape::new();
        let w = tape.param(t(&[2, 3], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        let x = tape.constant(t(&[3, 1], &[1.0, -2.0, 3.0])).unwrap();
        let y = tape.matmul(w, x).unwrap();
        let l = tape.sum(y).unwrap();
        let grads = tape.backward(l).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, -2.0, 3.0, 1.0, -2.0, 3.0]);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let c = 3.0;
        let mut tape = Tape::new();
        let z = tape.param(t(&[1], &[0.0])).unwrap();
        let s = tape.sigmoid(z).unwrap();
        let l = tape.scale(s, c).unwrap();
        let l = tape.sum(l).unwrap();
        let grads = tape.backward(l).unwrap();
        assert_eq!(grads.get(z).unwrap().item(), 0.25 * c);
    }

    #[test]
    fn consumed_tape_and_non_scalar_loss() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[2], &[1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(w), Err(GsanError::NonScalarLoss(_))));
        let l = tape.sum(w).unwrap();
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(GsanError::TapeConsumed)));
        assert!(matches!(tape.sum(w), Err(GsanError::TapeConsumed)));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1], &[1000.0])).unwrap();
        assert!(matches!(tape.exp(x), Err(GsanError::NonFinite { op: "exp" })));
        assert!(tape.constant(t(&[1], &[Real::NAN])).is_err());
    }

    #[test]
    fn leaky_relu_subgradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[1], &[0.0])).unwrap();
        let y = tape.leaky_relu(x, 0.2).unwrap();
        let l = tape.sum(y).unwrap();
        assert_eq!(tape.backward(l).unwrap().get(x).unwrap().item(), 1.0);
    }
}
