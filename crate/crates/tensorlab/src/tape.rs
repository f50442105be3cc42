use crate::kernels::{self, axpy, dot};
use crate::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// a[m,k] · b[n,k]ᵀ
    MatMulNt(Var, Var),
    /// a[m,k] · b[k,n]
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// x[m,n] + b[n]
    AddRow(Var, Var),
    Scale(Var, f32),
    Exp(Var),
    Log(Var),
    Silu(Var),
    Tanh(Var),
    Square(Var),
    Clamp(Var, f32, f32),
    Minimum(Var, Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    Softmax(Var),
    CausalSoftmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f32>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Dropout {
        x: Var,
        mask: Vec<f32>,
    },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f32>,
    op: Op,
    requires_grad: bool,
}

/// Record of a forward computation.
///
/// Values are stored eagerly; gradients are produced by [`Tape::backward`],
/// which consumes the tape. A tape is meant to live on one thread for one
/// loss evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every recorded value that
/// required them.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient for `v` (if any) into `t`'s gradient buffer.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        if let Some(g) = self.get(v) {
            t.accumulate_grad(g)?;
        }
        Ok(())
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        [m, n] => (*m, *n),
        _ => {
            let n = *shape.last().unwrap();
            (shape.iter().product::<usize>() / n.max(1), n)
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f32>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f32 {
        self.nodes[v.0].value[0]
    }

    /// Binds a tensor as a leaf; it is differentiated iff the tensor
    /// `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Binds a tensor as a constant regardless of its `requires_grad` flag.
    pub fn constant_tensor(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f32>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::Length {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(TensorError::Shape {
                op,
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        Ok(())
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::Shape {
            op,
            lhs: self.nodes[a.0].shape.clone(),
            rhs: self.nodes[b.0].shape.clone(),
        }
    }

    /// `a[m,k] · b[n,k]ᵀ`; with `b` a weight stored `[out, in]` this is a
    /// linear layer.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = rows_cols(self.shape(a));
        let (n, k2) = rows_cols(self.shape(b));
        if k != k2 || self.shape(b).len() != 2 {
            return Err(self.shape_err("matmul_nt", a, b));
        }
        let out = kernels::matmul_nt(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMulNt(a, b), rg))
    }

    /// `a[m,k] · b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = rows_cols(self.shape(a));
        let (k2, n) = rows_cols(self.shape(b));
        if k != k2 || self.shape(b).len() != 2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let out = kernels::matmul_nn(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f32, f32) -> f32,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, f32::min, Op::Minimum(a, b))
    }

    /// Broadcast-adds a row vector `b[n]` to every row of `x[m,n]`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(x));
        if self.value(b).len() != n {
            return Err(self.shape_err("add_row", x, b));
        }
        let bv = self.value(b);
        let mut out = self.value(x).to_vec();
        for r in out.chunks_exact_mut(n) {
            r.iter_mut().zip(bv).for_each(|(o, v)| *o += v);
        }
        debug_assert_eq!(out.len(), m * n);
        let rg = self.rg(x) || self.rg(b);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::AddRow(x, b), rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, op, rg)
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f32::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f32::ln, Op::Log(x))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * kernels::sigmoid(v), Op::Silu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f32::tanh, Op::Tanh(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f32, hi: f32) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().map(|&v| v as f64).sum();
        let rg = self.rg(x);
        self.push(vec![], vec![s as f32], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vals = self.value(x);
        let s: f64 = vals.iter().map(|&v| v as f64).sum::<f64>() / vals.len().max(1) as f64;
        let rg = self.rg(x);
        self.push(vec![], vec![s as f32], Op::Mean(x), rg)
    }

    /// Sums each row of `x[m,n]` into a vector of length `m`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let (m, n) = rows_cols(self.shape(x));
        let out = self
            .value(x)
            .chunks_exact(n)
            .map(|r| r.iter().map(|&v| v as f64).sum::<f64>() as f32)
            .collect();
        let rg = self.rg(x);
        self.push(vec![m], out, Op::SumRows(x), rg)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let (_, n) = rows_cols(self.shape(x));
        let mut out = self.value(x).to_vec();
        out.chunks_exact_mut(n).for_each(kernels::softmax_in_place);
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Softmax(x), rg)
    }

    /// Row softmax of attention scores `[q, k]` where query `i` may only see
    /// keys `j <= i + (k - q)`. Masked entries are exactly zero.
    pub fn causal_softmax(&mut self, x: Var) -> Var {
        let (m, n) = rows_cols(self.shape(x));
        let offset = n.saturating_sub(m);
        let mut out = self.value(x).to_vec();
        for (i, r) in out.chunks_exact_mut(n).enumerate() {
            let visible = (i + offset + 1).min(n);
            kernels::softmax_in_place(&mut r[..visible]);
            r[visible..].iter_mut().for_each(|v| *v = 0.0);
        }
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::CausalSoftmax(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (_, n) = rows_cols(self.shape(x));
        let mut out = self.value(x).to_vec();
        out.chunks_exact_mut(n).for_each(kernels::log_softmax_in_place);
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::LogSoftmax(x), rg)
    }

    /// Layer normalization over the last dimension with affine `gamma`,
    /// `beta` of length `n`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(x));
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(self.shape_err("layer_norm", x, gamma));
        }
        let (out, xhat, rstd) =
            kernels::layer_norm(self.value(x), self.value(gamma), self.value(beta), m, n);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Looks up rows of `table[v,d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = rows_cols(self.shape(table));
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::Index {
                    what: "embedding table",
                    index: id,
                    size: v,
                });
            }
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Picks `x[i, idx[i]]` for every row, giving a vector of length `m`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(x));
        if idx.len() != m {
            return Err(TensorError::Shape {
                op: "gather",
                lhs: self.shape(x).to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(m);
        for (i, &j) in idx.iter().enumerate() {
            if j >= n {
                return Err(TensorError::Index {
                    what: "gather row",
                    index: j,
                    size: n,
                });
            }
            out.push(xv[i * n + j]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            vec![m],
            out,
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Mean token cross-entropy of `logits[m,v]` against `targets[m]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(logits));
        if targets.len() != m {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                lhs: self.shape(logits).to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = 0.0f64;
        for (i, r) in probs.chunks_exact_mut(n).enumerate() {
            let t = targets[i];
            if t >= n {
                return Err(TensorError::Index {
                    what: "cross_entropy target",
                    index: t,
                    size: n,
                });
            }
            kernels::log_softmax_in_place(r);
            total -= r[t] as f64;
            r.iter_mut().for_each(|v| *v = v.exp());
        }
        let loss = (total / m.max(1) as f64) as f32;
        let rg = self.rg(logits);
        Ok(self.push(
            vec![],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(x));
        if start + len > m {
            return Err(TensorError::Index {
                what: "row slice end",
                index: start + len,
                size: m,
            });
        }
        let out = self.value(x)[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(vec![len, n], out, Op::SliceRows { x, start }, rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(x));
        if start + len > n {
            return Err(TensorError::Index {
                what: "column slice end",
                index: start + len,
                size: n,
            });
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(m * len);
        for r in xv.chunks_exact(n) {
            out.extend_from_slice(&r[start..start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![m, len], out, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = rows_cols(self.shape(parts[0])).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = rows_cols(self.shape(p));
            if pm != m {
                return Err(self.shape_err("concat_cols", parts[0], p));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.value(p);
            for i in 0..m {
                out[i * total + off..i * total + off + w].copy_from_slice(&pv[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![m, total], out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(TensorError::Length {
                shape: shape.to_vec(),
                len: self.value(x).len(),
            });
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), out, Op::Reshape(x), rg))
    }

    /// Inverted dropout with a caller-supplied keep mask (1 keep, 0 drop).
    pub fn dropout(&mut self, x: Var, keep: &[bool], p: f32) -> Result<Var> {
        if keep.len() != self.value(x).len() {
            return Err(TensorError::Length {
                shape: self.shape(x).to_vec(),
                len: keep.len(),
            });
        }
        let scale = 1.0 / (1.0 - p);
        let mask: Vec<f32> = keep.iter().map(|&k| if k { scale } else { 0.0 }).collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::Dropout { x, mask }, rg))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let ln = &self.nodes[loss.0];
        if ln.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(ln.shape.clone()));
        }
        if !ln.value[0].is_finite() {
            return Err(TensorError::NonFinite("loss".into()));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f32>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            backprop(&nodes, node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f32>>], v: Var) -> Option<&'a mut [f32]> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
}

fn backprop(nodes: &[Node], node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
    let val = |v: Var| nodes[v.0].value.as_slice();
    let shp = |v: Var| rows_cols(&nodes[v.0].shape);
    match &node.op {
        Op::Leaf => {}
        Op::MatMulNt(a, b) => {
            let (m, k) = shp(*a);
            let (n, _) = shp(*b);
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::matmul_nn_acc(g, val(*b), m, n, k, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                kernels::matmul_tn_acc(g, val(*a), m, n, k, gb);
            }
        }
        Op::MatMul(a, b) => {
            let (m, k) = shp(*a);
            let (_, n) = shp(*b);
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::matmul_nt_acc(g, val(*b), m, n, k, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                kernels::matmul_tn_acc(val(*a), g, m, k, n, gb);
            }
        }
        Op::Add(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                axpy(1.0, g, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                axpy(1.0, g, gb);
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                axpy(1.0, g, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                axpy(-1.0, g, gb);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((o, gi), y) in ga.iter_mut().zip(g).zip(val(*b)) {
                    *o += gi * y;
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for ((o, gi), x) in gb.iter_mut().zip(g).zip(val(*a)) {
                    *o += gi * x;
                }
            }
        }
        Op::Minimum(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    if av[i] <= bv[i] {
                        ga[i] += g[i];
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for i in 0..g.len() {
                    if av[i] > bv[i] {
                        gb[i] += g[i];
                    }
                }
            }
        }
        Op::AddRow(x, b) => {
            let (_, n) = shp(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                axpy(1.0, g, gx);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for r in g.chunks_exact(n) {
                    axpy(1.0, r, gb);
                }
            }
        }
        Op::Scale(x, s) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                axpy(*s, g, gx);
            }
        }
        Op::Exp(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *o += gi * y;
                }
            }
        }
        Op::Log(x) => {
            let xv = val(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), v) in gx.iter_mut().zip(g).zip(xv) {
                    *o += gi / v;
                }
            }
        }
        Op::Silu(x) => {
            let xv = val(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), &v) in gx.iter_mut().zip(g).zip(xv) {
                    let s = kernels::sigmoid(v);
                    *o += gi * s * (1.0 + v * (1.0 - s));
                }
            }
        }
        Op::Tanh(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), y) in gx.iter_mut().zip(g).zip(&node.value) {
                    *o += gi * (1.0 - y * y);
                }
            }
        }
        Op::Square(x) => {
            let xv = val(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), v) in gx.iter_mut().zip(g).zip(xv) {
                    *o += 2.0 * gi * v;
                }
            }
        }
        Op::Clamp(x, lo, hi) => {
            let xv = val(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), v) in gx.iter_mut().zip(g).zip(xv) {
                    if *v >= *lo && *v <= *hi {
                        *o += gi;
                    }
                }
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                gx.iter_mut().for_each(|o| *o += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                let s = g[0] / gx.len().max(1) as f32;
                gx.iter_mut().for_each(|o| *o += s);
            }
        }
        Op::SumRows(x) => {
            let (_, n) = shp(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for (r, gi) in gx.chunks_exact_mut(n).zip(g) {
                    r.iter_mut().for_each(|o| *o += gi);
                }
            }
        }
        Op::Softmax(x) | Op::CausalSoftmax(x) => {
            let (_, n) = shp(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gr), y) in gx
                    .chunks_exact_mut(n)
                    .zip(g.chunks_exact(n))
                    .zip(node.value.chunks_exact(n))
                {
                    let s = dot(gr, y);
                    for j in 0..n {
                        o[j] += y[j] * (gr[j] - s);
                    }
                }
            }
        }
        Op::LogSoftmax(x) => {
            let (_, n) = shp(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gr), y) in gx
                    .chunks_exact_mut(n)
                    .zip(g.chunks_exact(n))
                    .zip(node.value.chunks_exact(n))
                {
                    let s: f32 = gr.iter().sum();
                    for j in 0..n {
                        o[j] += gr[j] - y[j].exp() * s;
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        } => {
            let (_, n) = shp(*x);
            let gv = val(*gamma);
            if let Some(gg) = slot(nodes, grads, *gamma) {
                for (gr, hr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                    for j in 0..n {
                        gg[j] += gr[j] * hr[j];
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *beta) {
                for gr in g.chunks_exact(n) {
                    axpy(1.0, gr, gb);
                }
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                let nf = n as f32;
                for (((o, gr), hr), rs) in gx
                    .chunks_exact_mut(n)
                    .zip(g.chunks_exact(n))
                    .zip(xhat.chunks_exact(n))
                    .zip(rstd)
                {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..n {
                        let dh = gr[j] * gv[j];
                        s1 += dh;
                        s2 += dh * hr[j];
                    }
                    for j in 0..n {
                        let dh = gr[j] * gv[j];
                        o[j] += rs / nf * (nf * dh - s1 - hr[j] * s2);
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            let (_, d) = shp(*table);
            if let Some(gt) = slot(nodes, grads, *table) {
                for (r, &id) in g.chunks_exact(d).zip(ids) {
                    axpy(1.0, r, &mut gt[id * d..(id + 1) * d]);
                }
            }
        }
        Op::Gather { x, idx } => {
            let (_, n) = shp(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                for (i, &j) in idx.iter().enumerate() {
                    gx[i * n + j] += g[i];
                }
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
        } => {
            let (m, n) = shp(*logits);
            if let Some(gx) = slot(nodes, grads, *logits) {
                let s = g[0] / m.max(1) as f32;
                for (i, (o, p)) in gx.chunks_exact_mut(n).zip(probs.chunks_exact(n)).enumerate() {
                    axpy(s, p, o);
                    o[targets[i]] -= s;
                }
            }
        }
        Op::SliceRows { x, start } => {
            let (_, n) = shp(*x);
            if let Some(gx) = slot(nodes, grads, *x) {
                axpy(1.0, g, &mut gx[start * n..start * n + g.len()]);
            }
        }
        Op::SliceCols { x, start } => {
            let (_, n) = shp(*x);
            let w = node.shape[1];
            if let Some(gx) = slot(nodes, grads, *x) {
                for (r, gr) in gx.chunks_exact_mut(n).zip(g.chunks_exact(w)) {
                    axpy(1.0, gr, &mut r[*start..start + w]);
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = node.shape[1];
            let mut off = 0;
            for &p in parts {
                let (_, w) = shp(p);
                if let Some(gp) = slot(nodes, grads, p) {
                    for (r, gr) in gp.chunks_exact_mut(w).zip(g.chunks_exact(total)) {
                        axpy(1.0, &gr[off..off + w], r);
                    }
                }
                off += w;
            }
        }
        Op::Reshape(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                axpy(1.0, g, gx);
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((o, gi), m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gi * m;
                }
            }
        }
    }
}
