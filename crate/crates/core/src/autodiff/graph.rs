use super::kernels::{self, CrossDims};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Transpose(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Pad {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    Expand(Var),
    ReduceTo(Var),
    Relu(Var),
    /// `g · 1[x > 0]`; `x` is not differentiated through.
    ReluMask(Var, Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    AddBias(Var, Var),
    CrossContract {
        x: Var,
        w: Var,
        transposed: bool,
    },
    CrossSpread {
        g: Var,
        w: Var,
        transposed: bool,
    },
    CrossWeight {
        g: Var,
        x: Var,
        transposed: bool,
    },
    OuterSum(Var, Var, Var),
    OuterAdjoint(Var),
    TriuToSym(Var),
    SymToTriu(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | AddBias(a, b) => {
                vec![*a, *b]
            }
            OuterSum(r, c, b) => vec![*r, *c, *b],
            ReluMask(g, _) => vec![*g],
            MatMul { a, b, .. } | BatchMatMul { a, b, .. } => vec![*a, *b],
            CrossContract { x, w, .. } => vec![*x, *w],
            CrossSpread { g, w, .. } => vec![*g, *w],
            CrossWeight { g, x, .. } => vec![*g, *x],
            Concat(xs, _) => xs.clone(),
            Scale(a, _)
            | AddScalar(a)
            | Transpose(a)
            | Reshape(a)
            | Permute(a, _)
            | Sum(a)
            | Mean(a)
            | Expand(a)
            | ReduceTo(a)
            | Relu(a)
            | Sigmoid(a)
            | Log(a)
            | Exp(a)
            | Sqrt(a)
            | Square(a)
            | TriuToSym(a)
            | SymToTriu(a)
            | OuterAdjoint(a) => vec![*a],
            Slice { x, .. } | Pad { x, .. } => vec![*x],
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Define-by-run computation graph.
///
/// Every operation evaluates eagerly and appends a node; inputs always have
/// smaller ids than the node that consumes them, so the graph is acyclic by
/// construction. Gradients produced by [`Graph::grad`] are ordinary nodes,
/// which is what makes gradient-of-gradient terms such as an input-gradient
/// penalty trainable.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Drop for Graph {
    fn drop(&mut self) {
        for node in self.nodes.drain(..) {
            super::pool::recycle(node.value.into_data());
        }
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn finite(op: &str, t: Tensor) -> Result<Tensor> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf. Leaves are differentiable only when listed in `grad`'s `wrt`.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        let t = finite("leaf", t)?;
        Ok(self.push(Op::Leaf, t))
    }

    pub fn scalar(&mut self, v: f64) -> Result<Var> {
        self.leaf(Tensor::scalar(v))
    }

    /// Copies the current value into a fresh leaf, cutting the history.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.copied(v);
        self.push(Op::Leaf, t)
    }

    fn copied(&self, v: Var) -> Tensor {
        let t = self.value(v);
        Tensor::from_parts(t.shape().to_vec(), super::pool::copy_of(t.data()))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn shape_vec(&self, v: Var) -> Vec<usize> {
        self.shape(v).to_vec()
    }

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64 + Sync + Send,
    ) -> Result<Var> {
        same_shape(name, self.value(a), self.value(b))?;
        let data = kernels::zip(self.data(a), self.data(b), f);
        let t = Tensor::from_parts(self.shape_vec(a), data);
        Ok(self.push(op, t))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64 + Sync + Send) -> Var {
        let data = kernels::map(self.data(x), f);
        let t = Tensor::from_parts(self.shape_vec(x), data);
        self.push(op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)?;
        if !self.value(v).all_finite() {
            return Err(Error::NonFinite("div".into()));
        }
        Ok(v)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, Op::Scale(x, k), move |v| v * k)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, Op::AddScalar(x), move |v| v + k)
    }

    fn matrix_dims(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(format!(
                "{op}: expected a matrix, got shape {s:?}"
            ))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a)·op(b)` where `op` transposes when the matching flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (ar, ac) = self.matrix_dims(a, "matmul")?;
        let (br, bc) = self.matrix_dims(b, "matmul")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: inner dimensions {k} and {k2} differ"
            )));
        }
        let data = kernels::matmul(self.data(a), self.data(b), m, k, n, ta, tb);
        let t = Tensor::from_parts(vec![m, n], data);
        Ok(self.push(Op::MatMul { a, b, ta, tb }, t))
    }

    /// Batched matrix product over a leading batch axis.
    pub fn batch_matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape_vec(a), self.shape_vec(b));
        let ([ba, ar, ac], [bb, br, bc]) = (sa.as_slice(), sb.as_slice()) else {
            return Err(Error::dim("batch_matmul: expected rank-3 operands"));
        };
        let (m, k) = if ta { (*ac, *ar) } else { (*ar, *ac) };
        let (k2, n) = if tb { (*bc, *br) } else { (*br, *bc) };
        if ba != bb || k != k2 {
            return Err(Error::dim(format!("batch_matmul: {sa:?} vs {sb:?}")));
        }
        let data = kernels::batch_matmul(self.data(a), self.data(b), *ba, m, k, n, ta, tb);
        let t = Tensor::from_parts(vec![*ba, m, n], data);
        Ok(self.push(Op::BatchMatMul { a, b, ta, tb }, t))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "transpose")?;
        let data = kernels::permute(self.data(x), &[r, c], &[1, 0]);
        let t = Tensor::from_parts(vec![c, r], data);
        Ok(self.push(Op::Transpose(x), t))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.copied(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape(x), t))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape_vec(x);
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len()
            || perm
                .iter()
                .any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::dim(format!(
                "permute: {perm:?} is not a permutation of rank {}",
                shape.len()
            )));
        }
        let data = kernels::permute(self.data(x), &shape, perm);
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        Ok(self.push(
            Op::Permute(x, perm.to_vec()),
            Tensor::from_parts(out_shape, data),
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::dim("concat: no inputs"));
        };
        let base = self.shape_vec(first);
        if axis >= base.len() {
            return Err(Error::dim("concat: axis out of range"));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !ok {
                return Err(Error::dim(format!(
                    "concat: {s:?} incompatible with {base:?}"
                )));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = kernels::split_axis(&shape, axis);
        let mut data = super::pool::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis] * inner;
                data.extend_from_slice(&self.data(x)[o * len..(o + 1) * len]);
            }
        }
        Ok(self.push(
            Op::Concat(xs.to_vec(), axis),
            Tensor::from_parts(shape, data),
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape_vec(x);
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "slice: [{start}, {}) out of {shape:?} axis {axis}",
                start + len
            )));
        }
        let data = kernels::slice_axis(self.data(x), &shape, axis, start, len);
        let mut out = shape;
        out[axis] = len;
        Ok(self.push(Op::Slice { x, axis, start }, Tensor::from_parts(out, data)))
    }

    /// Zero-pads along `axis` to extent `total`, placing `x` at `start`.
    pub fn pad(&mut self, x: Var, axis: usize, start: usize, total: usize) -> Result<Var> {
        let shape = self.shape_vec(x);
        if axis >= shape.len() || start + shape[axis] > total {
            return Err(Error::dim("pad: target extent too small"));
        }
        let data = kernels::pad_axis(self.data(x), &shape, axis, start, total);
        let mut out = shape;
        out[axis] = total;
        Ok(self.push(Op::Pad { x, axis, start }, Tensor::from_parts(out, data)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = kernels::sum(self.data(x));
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = kernels::sum(self.data(x)) / n;
        self.push(Op::Mean(x), Tensor::scalar(s))
    }

    /// Broadcasts along size-1 axes (ranks must match; scalars broadcast anywhere).
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let from = self.shape_vec(x);
        let x = if from.is_empty() && !shape.is_empty() {
            self.reshape(x, &vec![1; shape.len()])?
        } else {
            x
        };
        let from = self.shape_vec(x);
        let ok =
            from.len() == shape.len() && from.iter().zip(shape).all(|(&a, &b)| a == b || a == 1);
        if !ok {
            return Err(Error::dim(format!(
                "expand: {from:?} cannot broadcast to {shape:?}"
            )));
        }
        let data = kernels::expand(self.data(x), &from, shape);
        Ok(self.push(Op::Expand(x), Tensor::from_parts(shape.to_vec(), data)))
    }

    /// Sums over the axes where `shape` has extent 1 (ranks must match).
    pub fn reduce_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let from = self.shape_vec(x);
        let ok =
            from.len() == shape.len() && from.iter().zip(shape).all(|(&a, &b)| a == b || b == 1);
        if !ok {
            return Err(Error::dim(format!(
                "reduce_to: {from:?} cannot reduce to {shape:?}"
            )));
        }
        let data = kernels::reduce_to(self.data(x), &from, shape);
        Ok(self.push(Op::ReduceTo(x), Tensor::from_parts(shape.to_vec(), data)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    fn relu_mask(&mut self, g: Var, x: Var) -> Result<Var> {
        same_shape("relu_mask", self.value(g), self.value(x))?;
        let data = kernels::zip(
            self.data(g),
            self.data(x),
            |gv, xv| if xv > 0.0 { gv } else { 0.0 },
        );
        let t = Tensor::from_parts(self.shape_vec(g), data);
        Ok(self.push(Op::ReluMask(g, x), t))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.data(x).iter().any(|&v| v <= 0.0) {
            return Err(Error::LogDomain);
        }
        Ok(self.unary(x, Op::Log(x), f64::ln))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.unary(x, Op::Exp(x), f64::exp);
        if !self.value(v).all_finite() {
            return Err(Error::NonFinite("exp".into()));
        }
        Ok(v)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.data(x).iter().any(|&v| v < 0.0) {
            return Err(Error::NonFinite("sqrt of negative value".into()));
        }
        Ok(self.unary(x, Op::Sqrt(x), f64::sqrt))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    /// `x + b` with `b: [d]` broadcast over all leading axes of `x: [.., d]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.shape_vec(x), self.shape_vec(b));
        if bs.len() != 1 || xs.last() != bs.first() {
            return Err(Error::dim(format!(
                "add_bias: {bs:?} does not match trailing axis of {xs:?}"
            )));
        }
        let d = bs[0];
        let mut data = super::pool::copy_of(self.data(x));
        let bias = self.data(b);
        for row in data.chunks_exact_mut(d.max(1)) {
            for (v, &c) in row.iter_mut().zip(bias) {
                *v += c;
            }
        }
        Ok(self.push(Op::AddBias(x, b), Tensor::from_parts(xs, data)))
    }

    fn cross_dims(&self, x: &[usize], w: &[usize], transposed: bool) -> Result<CrossDims> {
        match (x, w) {
            ([b, c, n1, n2], [o, c2, n3]) if c == c2 && n1 == n2 && n2 == n3 => Ok(CrossDims {
                batch: *b,
                cin: *c,
                cout: *o,
                n: *n1,
                transposed,
            }),
            _ => Err(Error::dim(format!(
                "cross kernel: input {x:?} vs weight {w:?}"
            ))),
        }
    }

    /// Row contraction `out[b,o,i] = Σ_c Σ_k w[o,c,k]·x[b,c,i,k]`, or the
    /// column version (`x[b,c,k,i]`) when `transposed`.
    pub fn cross_contract(&mut self, x: Var, w: Var, transposed: bool) -> Result<Var> {
        let d = self.cross_dims(self.shape(x), self.shape(w), transposed)?;
        let data = kernels::cross_contract(self.data(x), self.data(w), d);
        let t = Tensor::from_parts(vec![d.batch, d.cout, d.n], data);
        Ok(self.push(Op::CrossContract { x, w, transposed }, t))
    }

    fn cross_spread(&mut self, g: Var, w: Var, transposed: bool) -> Result<Var> {
        let (gs, ws) = (self.shape_vec(g), self.shape_vec(w));
        let ([b, o, n], [o2, c, n2]) = (gs.as_slice(), ws.as_slice()) else {
            return Err(Error::dim("cross_spread: bad ranks"));
        };
        if o != o2 || n != n2 {
            return Err(Error::dim("cross_spread: shape mismatch"));
        }
        let d = CrossDims {
            batch: *b,
            cin: *c,
            cout: *o,
            n: *n,
            transposed,
        };
        let data = kernels::cross_spread(self.data(g), self.data(w), d);
        let t = Tensor::from_parts(vec![*b, *c, *n, *n], data);
        Ok(self.push(Op::CrossSpread { g, w, transposed }, t))
    }

    fn cross_weight(&mut self, g: Var, x: Var, transposed: bool) -> Result<Var> {
        let (gs, xs) = (self.shape_vec(g), self.shape_vec(x));
        let ([b, o, n], [b2, c, n2, _]) = (gs.as_slice(), xs.as_slice()) else {
            return Err(Error::dim("cross_weight: bad ranks"));
        };
        if b != b2 || n != n2 {
            return Err(Error::dim("cross_weight: shape mismatch"));
        }
        let d = CrossDims {
            batch: *b,
            cin: *c,
            cout: *o,
            n: *n,
            transposed,
        };
        let data = kernels::cross_weight(self.data(g), self.data(x), d);
        let t = Tensor::from_parts(vec![*o, *c, *n], data);
        Ok(self.push(Op::CrossWeight { g, x, transposed }, t))
    }

    /// Row sums, column sums and total of each trailing `n×n` block of
    /// `g: [.., n, n]`, packed as `[.., 2n+1]`.
    fn outer_adjoint(&mut self, g: Var) -> Result<Var> {
        let s = self.shape_vec(g);
        let k = s.len();
        if k < 2 || s[k - 1] != s[k - 2] {
            return Err(Error::dim(format!(
                "outer_adjoint: expected [.., n, n], got {s:?}"
            )));
        }
        let n = s[k - 1];
        let rows: usize = s[..k - 2].iter().product();
        let data = kernels::outer_adjoint(self.data(g), rows, n);
        let mut out = s[..k - 2].to_vec();
        out.push(2 * n + 1);
        Ok(self.push(Op::OuterAdjoint(g), Tensor::from_parts(out, data)))
    }

    /// `out[.., i, j] = (r[.., i] + c[.., j]) + bias[..]` for equal-shape
    /// `r, c: [.., n]` and `bias` shaped like `r` without its last axis.
    /// Exactly symmetric in `(i, j)` whenever `r == c`.
    pub fn outer_sum(&mut self, r: Var, c: Var, bias: Var) -> Result<Var> {
        same_shape("outer_sum", self.value(r), self.value(c))?;
        let shape = self.shape_vec(r);
        let Some((&n, lead)) = shape.split_last() else {
            return Err(Error::dim("outer_sum: scalar input"));
        };
        if self.shape(bias) != lead {
            return Err(Error::dim(format!(
                "outer_sum: bias {:?} vs {lead:?}",
                self.shape(bias)
            )));
        }
        let rows = self.value(r).len() / n.max(1);
        let data = kernels::outer_sum(self.data(r), self.data(c), self.data(bias), rows, n);
        let mut out = shape.clone();
        out.push(n);
        Ok(self.push(Op::OuterSum(r, c, bias), Tensor::from_parts(out, data)))
    }

    /// `[B, n(n-1)/2] -> [B, n, n]`: row-major strict upper triangle, mirrored,
    /// zero diagonal.
    pub fn triu_to_sym(&mut self, v: Var, n: usize) -> Result<Var> {
        let shape = self.shape_vec(v);
        match shape.as_slice() {
            [b, p] if n >= 1 && *p == n * (n - 1) / 2 => {
                let data = kernels::triu_to_sym(self.data(v), *b, n);
                Ok(self.push(Op::TriuToSym(v), Tensor::from_parts(vec![*b, n, n], data)))
            }
            _ => Err(Error::dim(format!(
                "triu_to_sym: {shape:?} is not [B, {}]",
                n * n.saturating_sub(1) / 2
            ))),
        }
    }

    fn sym_to_triu(&mut self, m: Var) -> Result<Var> {
        let shape = self.shape_vec(m);
        let [b, n, _] = shape.as_slice() else {
            return Err(Error::dim("sym_to_triu: expected [B,n,n]"));
        };
        let data = kernels::sym_to_triu(self.data(m), *b, *n);
        Ok(self.push(
            Op::SymToTriu(m),
            Tensor::from_parts(vec![*b, n * (n - 1) / 2], data),
        ))
    }

    /// Row-wise log-softmax of `x: [B,K]`, composed from primitives.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (b, k) = self.matrix_dims(x, "log_softmax")?;
        let maxes: Vec<f64> = self
            .data(x)
            .chunks_exact(k.max(1))
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let m = self.leaf(Tensor::from_parts(vec![b, 1], maxes))?;
        let m = self.expand(m, &[b, k])?;
        let shifted = self.sub(x, m)?;
        let e = self.exp(shifted)?;
        let s = self.reduce_to(e, &[b, 1])?;
        let lse = self.log(s)?;
        let lse = self.expand(lse, &[b, k])?;
        self.sub(shifted, lse)
    }

    /// Gradients of scalar `output` with respect to each of `wrt`.
    ///
    /// Only nodes lying on a path from some `wrt` entry to `output` are
    /// visited. With `create_graph` the returned nodes keep their history, so
    /// `grad` can be applied to them again; otherwise they are detached leaves.
    pub fn grad(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        let out_shape = self.shape_vec(output);
        if self.value(output).len() != 1 {
            return Err(Error::dim(format!(
                "grad: output must be scalar, got shape {out_shape:?}"
            )));
        }
        let end = output.0 + 1;
        let mut reach = vec![false; end];
        for w in wrt {
            if w.0 >= self.nodes.len() {
                return Err(Error::dim(format!("grad: unknown node {}", w.0)));
            }
            if w.0 < end {
                reach[w.0] = true;
            }
        }
        for i in 0..end {
            if !reach[i] && self.nodes[i].op.inputs().iter().any(|v| reach[v.0]) {
                reach[i] = true;
            }
        }
        let mut needed = vec![false; end];
        needed[output.0] = reach[output.0];
        for i in (0..end).rev() {
            if needed[i] {
                for v in self.nodes[i].op.inputs() {
                    if reach[v.0] {
                        needed[v.0] = true;
                    }
                }
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        if needed[output.0] {
            grads[output.0] = Some(self.leaf(Tensor::full(&out_shape, 1.0))?);
        }
        for i in (0..end).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            let mut shared = None;
            for (slot, input) in op.inputs().into_iter().enumerate() {
                if !needed[input.0] {
                    continue;
                }
                let Some(contrib) = self.vjp(&op, Var(i), slot, g, &mut shared)? else {
                    continue;
                };
                grads[input.0] = Some(match grads[input.0] {
                    Some(prev) => self.add(prev, contrib)?,
                    None => contrib,
                });
            }
        }

        let mut out = Vec::with_capacity(wrt.len());
        for w in wrt {
            let g = match grads.get(w.0).copied().flatten() {
                Some(g) if create_graph => g,
                Some(g) => self.detach(g),
                None => {
                    let shape = self.shape_vec(*w);
                    self.leaf(Tensor::zeros(&shape))?
                }
            };
            out.push(g);
        }
        Ok(out)
    }

    /// Vector-Jacobian product of node `out` (with operation `op`) for input
    /// `slot`. `shared` carries work common to all slots of one node.
    fn vjp(
        &mut self,
        op: &Op,
        out: Var,
        slot: usize,
        g: Var,
        shared: &mut Option<Var>,
    ) -> Result<Option<Var>> {
        use Op::*;
        let r = match *op {
            Leaf => return Ok(None),
            Add(..) => g,
            Sub(..) => {
                if slot == 0 {
                    g
                } else {
                    self.neg(g)
                }
            }
            Mul(a, b) => {
                let other = if slot == 0 { b } else { a };
                self.mul(g, other)?
            }
            Div(_, b) => {
                let ga = self.div(g, b)?;
                if slot == 0 {
                    ga
                } else {
                    // d(a/b)/db = -(a/b)/b
                    let t = self.mul(ga, out)?;
                    self.neg(t)
                }
            }
            Scale(_, k) => self.scale(g, k),
            AddScalar(_) => g,
            MatMul { a, b, ta, tb } => {
                if slot == 0 {
                    if ta {
                        self.matmul_t(b, g, tb, true)?
                    } else {
                        self.matmul_t(g, b, false, !tb)?
                    }
                } else if tb {
                    self.matmul_t(g, a, true, ta)?
                } else {
                    self.matmul_t(a, g, !ta, false)?
                }
            }
            BatchMatMul { a, b, ta, tb } => {
                if slot == 0 {
                    if ta {
                        self.batch_matmul(b, g, tb, true)?
                    } else {
                        self.batch_matmul(g, b, false, !tb)?
                    }
                } else if tb {
                    self.batch_matmul(g, a, true, ta)?
                } else {
                    self.batch_matmul(a, g, !ta, false)?
                }
            }
            Transpose(_) => self.transpose(g)?,
            Reshape(x) => {
                let s = self.shape_vec(x);
                self.reshape(g, &s)?
            }
            Permute(_, ref perm) => {
                let mut inv = vec![0; perm.len()];
                for (d, &p) in perm.iter().enumerate() {
                    inv[p] = d;
                }
                self.permute(g, &inv)?
            }
            Concat(ref xs, axis) => {
                let start: usize = xs[..slot].iter().map(|&x| self.shape(x)[axis]).sum();
                let len = self.shape(xs[slot])[axis];
                self.slice(g, axis, start, len)?
            }
            Slice { x, axis, start } => {
                let total = self.shape(x)[axis];
                self.pad(g, axis, start, total)?
            }
            Pad { x, axis, start } => {
                let len = self.shape(x)[axis];
                self.slice(g, axis, start, len)?
            }
            Sum(x) => {
                let s = self.shape_vec(x);
                self.expand(g, &s)?
            }
            Mean(x) => {
                let s = self.shape_vec(x);
                let n = self.value(x).len().max(1) as f64;
                let e = self.expand(g, &s)?;
                self.scale(e, 1.0 / n)
            }
            Expand(x) => {
                let s = self.shape_vec(x);
                self.reduce_to(g, &s)?
            }
            ReduceTo(x) => {
                let s = self.shape_vec(x);
                self.expand(g, &s)?
            }
            Relu(x) => self.relu_mask(g, x)?,
            ReluMask(_, x) => self.relu_mask(g, x)?,
            Sigmoid(_) => {
                // s(1-s)
                let t = self.mul(g, out)?;
                let one_minus = self.scale(out, -1.0);
                let one_minus = self.add_scalar(one_minus, 1.0);
                self.mul(t, one_minus)?
            }
            Log(x) => self.div(g, x)?,
            Exp(_) => self.mul(g, out)?,
            Sqrt(_) => {
                let t = self.div(g, out)?;
                self.scale(t, 0.5)
            }
            Square(x) => {
                let two_x = self.scale(x, 2.0);
                self.mul(g, two_x)?
            }
            AddBias(x, b) => {
                if slot == 0 {
                    g
                } else {
                    let xs = self.shape_vec(x);
                    let d = self.shape(b)[0];
                    let mut keep = vec![1; xs.len()];
                    *keep.last_mut().unwrap() = d;
                    let r = self.reduce_to(g, &keep)?;
                    self.reshape(r, &[d])?
                }
            }
            CrossContract { x, w, transposed } => {
                if slot == 0 {
                    self.cross_spread(g, w, transposed)?
                } else {
                    self.cross_weight(g, x, transposed)?
                }
            }
            CrossSpread {
                g: gin,
                w,
                transposed,
            } => {
                if slot == 0 {
                    self.cross_contract(g, w, transposed)?
                } else {
                    self.cross_weight(gin, g, transposed)?
                }
            }
            CrossWeight {
                g: gin,
                x,
                transposed,
            } => {
                if slot == 0 {
                    self.cross_contract(x, g, transposed)?
                } else {
                    self.cross_spread(gin, g, transposed)?
                }
            }
            OuterSum(r, _, bias) => {
                let adj = match *shared {
                    Some(a) => a,
                    None => {
                        let a = self.outer_adjoint(g)?;
                        *shared = Some(a);
                        a
                    }
                };
                let n = *self.shape(r).last().unwrap();
                let axis = self.shape(r).len() - 1;
                match slot {
                    0 => self.slice(adj, axis, 0, n)?,
                    1 => self.slice(adj, axis, n, n)?,
                    _ => {
                        let t = self.slice(adj, axis, 2 * n, 1)?;
                        let s = self.shape_vec(bias);
                        self.reshape(t, &s)?
                    }
                }
            }
            OuterAdjoint(_) => {
                let s = self.shape_vec(g);
                let axis = s.len() - 1;
                let n = (s[axis] - 1) / 2;
                let r = self.slice(g, axis, 0, n)?;
                let c = self.slice(g, axis, n, n)?;
                let b = self.slice(g, axis, 2 * n, 1)?;
                let b = self.reshape(b, &s[..axis])?;
                self.outer_sum(r, c, b)?
            }
            TriuToSym(_) => self.sym_to_triu(g)?,
            SymToTriu(x) => {
                let n = self.shape(x)[1];
                self.triu_to_sym(g, n)?
            }
        };
        Ok(Some(r))
    }
}
