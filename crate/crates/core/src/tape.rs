//! Reverse-mode tape over batched tensor operations.
//!
//! Nodes are recorded in topological order (parents always precede children).
//! Values are dense row-major matrices stored as flat `Vec<f64>`. Network
//! layers are recorded as single `Affine` / `Activation` nodes acting on a
//! whole batch of jets, so a reverse sweep costs a handful of GEMMs per layer.
//!
//! Jet batches use the layout `rows = units`, `cols = points * K`, where `K` is
//! the number of Taylor coefficients; column `p * K + k` holds coefficient `k`
//! of point `p`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::gemm::{gemm, Strides};
use crate::jet::{self, coeff_count};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct LinTerm {
    node: NodeId,
    stride: usize,
    channel: usize,
    coef: Vec<f64>,
}

/// Per-point linear combination of jet channels plus a per-point offset.
///
/// This is the bridge between the physics formulas (written once, generic over
/// [`crate::elasticity::FieldAlgebra`]) and the tape: residuals built from
/// `LinExpr`s are recorded with [`ParamTape::lin_comb`].
#[derive(Clone, Debug)]
pub struct LinExpr {
    terms: Vec<LinTerm>,
    offset: Vec<f64>,
}

impl LinExpr {
    pub fn zero(points: usize) -> Self {
        LinExpr { terms: Vec::new(), offset: vec![0.0; points] }
    }

    pub fn constant(values: Vec<f64>) -> Self {
        LinExpr { terms: Vec::new(), offset: values }
    }

    /// `factor * node[p * stride + channel]` for every point `p`.
    pub fn channel(node: NodeId, stride: usize, channel: usize, factor: f64, points: usize) -> Self {
        LinExpr {
            terms: vec![LinTerm { node, stride, channel, coef: vec![factor; points] }],
            offset: vec![0.0; points],
        }
    }

    pub fn points(&self) -> usize {
        self.offset.len()
    }

    /// Multiplies point `p` of the expression by `weights[p]`.
    pub fn mul_pointwise(mut self, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), self.points(), "pointwise weights length");
        for t in &mut self.terms {
            t.coef.iter_mut().zip(weights).for_each(|(c, w)| *c *= w);
        }
        self.offset.iter_mut().zip(weights).for_each(|(c, w)| *c *= w);
        self
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        assert_eq!(self.points(), rhs.points(), "LinExpr point counts differ");
        self.terms.extend(rhs.terms);
        self.offset.iter_mut().zip(&rhs.offset).for_each(|(a, b)| *a += b);
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, s: f64) -> LinExpr {
        for t in &mut self.terms {
            t.coef.iter_mut().for_each(|c| *c *= s);
        }
        self.offset.iter_mut().for_each(|c| *c *= s);
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + (-rhs)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param { offset: usize },
    Affine { w: NodeId, b: NodeId, x: NodeId, stride: usize },
    Activation { x: NodeId, kind: ActivationKind, order: usize },
    Mul { a: NodeId, b: NodeId },
    LinComb { terms: Vec<LinTerm>, offset: Vec<f64> },
    SumSquares { x: NodeId, scale: f64 },
    Sum { x: NodeId },
    WeightedSum { terms: Vec<(NodeId, f64)> },
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Param { .. } => Vec::new(),
            Op::Affine { w, b, x, .. } => vec![*w, *b, *x],
            Op::Activation { x, .. } | Op::SumSquares { x, .. } | Op::Sum { x } => vec![*x],
            Op::Mul { a, b } => vec![*a, *b],
            Op::LinComb { terms, .. } => terms.iter().map(|t| t.node).collect(),
            Op::WeightedSum { terms } => terms.iter().map(|t| t.0).collect(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    needs_grad: bool,
}

/// Recorded computation of a scalar loss with respect to a flat parameter vector.
#[derive(Clone, Debug)]
pub struct ParamTape {
    nodes: Vec<Node>,
    n_params: usize,
}

impl ParamTape {
    /// Empty tape over a parameter vector of length `n_params`.
    pub fn new(n_params: usize) -> Self {
        ParamTape { nodes: Vec::new(), n_params }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param_len(&self) -> usize {
        self.n_params
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id.0];
        debug_assert_eq!(n.value.len(), 1);
        n.value[0]
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        let (rows, cols, value) = compute(&self.nodes, &op);
        self.nodes.push(Node { op, rows, cols, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        assert_eq!(value.len(), rows * cols, "constant shape");
        self.nodes.push(Node { op: Op::Constant, rows, cols, value, needs_grad: false });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf bound to `params[offset .. offset + rows * cols]`.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize, value: Vec<f64>) -> Result<NodeId> {
        if value.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "parameter leaf expects {} values, got {}",
                rows * cols,
                value.len()
            )));
        }
        if offset + value.len() > self.n_params {
            return Err(Error::ShapeMismatch(format!(
                "parameter leaf [{offset}, {}) exceeds parameter vector of length {}",
                offset + value.len(),
                self.n_params
            )));
        }
        self.nodes.push(Node { op: Op::Param { offset }, rows, cols, value, needs_grad: true });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// `W·X + b`, the bias entering only the value channel of each jet block of width `stride`.
    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId, stride: usize) -> NodeId {
        let (wr, wc) = self.shape(w);
        let (xr, xc) = self.shape(x);
        assert_eq!(wc, xr, "affine: inner dimensions");
        assert_eq!(self.shape(b), (wr, 1), "affine: bias shape");
        assert!(stride > 0 && xc % stride == 0, "affine: stride");
        self.push(Op::Affine { w, b, x, stride })
    }

    /// Applies `kind` to every jet block of order `order` in `x`.
    pub fn activation(&mut self, x: NodeId, kind: ActivationKind, order: usize) -> NodeId {
        assert!(order <= jet::MAX_ORDER);
        assert_eq!(self.shape(x).1 % coeff_count(order), 0, "activation: jet blocks");
        self.push(Op::Activation { x, kind, order })
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul: shapes");
        self.push(Op::Mul { a, b })
    }

    pub fn lin_comb(&mut self, expr: LinExpr) -> NodeId {
        for t in &expr.terms {
            let (r, c) = self.shape(t.node);
            assert_eq!(r, 1, "lin_comb: source rows");
            assert!(t.channel < t.stride && c == t.stride * expr.offset.len(), "lin_comb: source shape");
        }
        self.push(Op::LinComb { terms: expr.terms, offset: expr.offset })
    }

    /// `scale * Σ x²` as a `1 x 1` node.
    pub fn sum_squares(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.push(Op::SumSquares { x, scale })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum { x })
    }

    /// `Σ w_i x_i` over `1 x 1` nodes, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        for (t, _) in terms {
            assert_eq!(self.shape(*t), (1, 1), "weighted_sum: scalar inputs");
        }
        self.push(Op::WeightedSum { terms: terms.to_vec() })
    }

    /// Recomputes every non-leaf node from the stored leaves.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            let (before, after) = self.nodes.split_at_mut(i);
            let node = &mut after[0];
            if matches!(node.op, Op::Constant | Op::Param { .. }) {
                continue;
            }
            node.value = compute(before, &node.op).2;
        }
    }

    /// Reverse sweep from the scalar `output`; returns `∂output/∂params`.
    pub fn gradient(&self, output: NodeId) -> Result<Vec<f64>> {
        if self.shape(output) != (1, 1) {
            return Err(Error::invalid("gradient output must be a 1 x 1 node"));
        }
        let mut grad = vec![0.0; self.n_params];
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); output.0 + 1];
        adj[output.0] = vec![1.0];

        for i in (0..=output.0).rev() {
            if adj[i].is_empty() || !self.nodes[i].needs_grad {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param { offset } => {
                    grad[*offset..*offset + g.len()].iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Affine { w, b, x, stride } => {
                    let (rows, n_in) = self.shape(*w);
                    let cols = node.cols;
                    if self.nodes[w.0].needs_grad {
                        let xv = &self.nodes[x.0].value;
                        let dw = self.adjoint_mut(&mut adj, *w);
                        gemm(
                            rows,
                            cols,
                            n_in,
                            1.0,
                            &g,
                            Strides::row_major(cols),
                            xv,
                            Strides::transposed(cols),
                            1.0,
                            dw,
                            Strides::row_major(n_in),
                        );
                    }
                    if self.nodes[b.0].needs_grad {
                        let db = self.adjoint_mut(&mut adj, *b);
                        for (r, slot) in db.iter_mut().enumerate() {
                            let row = &g[r * cols..(r + 1) * cols];
                            *slot += row.iter().step_by(*stride).sum::<f64>();
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let wv = &self.nodes[w.0].value;
                        let dx = self.adjoint_mut(&mut adj, *x);
                        gemm(
                            n_in,
                            rows,
                            cols,
                            1.0,
                            wv,
                            Strides::transposed(n_in),
                            &g,
                            Strides::row_major(cols),
                            1.0,
                            dx,
                            Strides::row_major(cols),
                        );
                    }
                }
                Op::Activation { x, kind, order } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = self.adjoint_mut(&mut adj, *x);
                    jet::activate_jets_adjoint(*kind, *order, xv, &node.value, &g, dx);
                }
                Op::Mul { a, b } => {
                    if self.nodes[a.0].needs_grad {
                        let bv = &self.nodes[b.0].value;
                        let da = self.adjoint_mut(&mut adj, *a);
                        for ((d, gi), bi) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gi * bi;
                        }
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = &self.nodes[a.0].value;
                        let db = self.adjoint_mut(&mut adj, *b);
                        for ((d, gi), ai) in db.iter_mut().zip(&g).zip(av) {
                            *d += gi * ai;
                        }
                    }
                }
                Op::LinComb { terms, .. } => {
                    for t in terms {
                        if !self.nodes[t.node.0].needs_grad {
                            continue;
                        }
                        let d = self.adjoint_mut(&mut adj, t.node);
                        for (p, (c, gi)) in t.coef.iter().zip(&g).enumerate() {
                            d[p * t.stride + t.channel] += c * gi;
                        }
                    }
                }
                Op::SumSquares { x, scale } => {
                    let xv = &self.nodes[x.0].value;
                    let f = 2.0 * scale * g[0];
                    let d = self.adjoint_mut(&mut adj, *x);
                    d.iter_mut().zip(xv).for_each(|(d, v)| *d += f * v);
                }
                Op::Sum { x } => {
                    let d = self.adjoint_mut(&mut adj, *x);
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::WeightedSum { terms } => {
                    for (t, w) in terms {
                        // A zero weight cuts the term out of the sweep entirely.
                        if *w == 0.0 || !self.nodes[t.0].needs_grad {
                            continue;
                        }
                        self.adjoint_mut(&mut adj, *t)[0] += w * g[0];
                    }
                }
            }
        }
        Ok(grad)
    }

    fn adjoint_mut<'a>(&self, adj: &'a mut [Vec<f64>], id: NodeId) -> &'a mut Vec<f64> {
        let slot = &mut adj[id.0];
        if slot.is_empty() {
            *slot = vec![0.0; self.nodes[id.0].value.len()];
        }
        slot
    }
}

fn compute(nodes: &[Node], op: &Op) -> (usize, usize, Vec<f64>) {
    match op {
        Op::Constant | Op::Param { .. } => unreachable!("leaves are not recomputed"),
        Op::Affine { w, b, x, stride } => {
            let (w, b, x) = (&nodes[w.0], &nodes[b.0], &nodes[x.0]);
            let mut out = vec![0.0; w.rows * x.cols];
            affine_forward(&w.value, w.rows, w.cols, &b.value, &x.value, x.cols, *stride, &mut out);
            (w.rows, x.cols, out)
        }
        Op::Activation { x, kind, order } => {
            let x = &nodes[x.0];
            let mut out = vec![0.0; x.value.len()];
            activation_forward(*kind, *order, &x.value, &mut out);
            (x.rows, x.cols, out)
        }
        Op::Mul { a, b } => {
            let (a, b) = (&nodes[a.0], &nodes[b.0]);
            let out = a.value.iter().zip(&b.value).map(|(u, v)| u * v).collect();
            (a.rows, a.cols, out)
        }
        Op::LinComb { terms, offset } => {
            let mut out = offset.clone();
            for t in terms {
                let src = &nodes[t.node.0].value;
                for (p, (o, c)) in out.iter_mut().zip(&t.coef).enumerate() {
                    *o += c * src[p * t.stride + t.channel];
                }
            }
            (1, offset.len(), out)
        }
        Op::SumSquares { x, scale } => {
            let s: f64 = nodes[x.0].value.iter().map(|v| v * v).sum();
            (1, 1, vec![scale * s])
        }
        Op::Sum { x } => (1, 1, vec![nodes[x.0].value.iter().sum()]),
        Op::WeightedSum { terms } => {
            let mut acc = 0.0;
            for (t, w) in terms {
                acc += w * nodes[t.0].value[0];
            }
            (1, 1, vec![acc])
        }
    }
}

/// `out = W·X`, then `b` added to column `p * stride` of every row.
#[allow(clippy::too_many_arguments)]
pub(crate) fn affine_forward(
    w: &[f64],
    rows: usize,
    n_in: usize,
    b: &[f64],
    x: &[f64],
    cols: usize,
    stride: usize,
    out: &mut [f64],
) {
    gemm(
        rows,
        n_in,
        cols,
        1.0,
        w,
        Strides::row_major(n_in),
        x,
        Strides::row_major(cols),
        0.0,
        out,
        Strides::row_major(cols),
    );
    for (r, row) in out.chunks_exact_mut(cols).enumerate() {
        for v in row.iter_mut().step_by(stride) {
            *v += b[r];
        }
    }
}

pub(crate) fn activation_forward(kind: ActivationKind, order: usize, x: &[f64], out: &mut [f64]) {
    jet::activate_jets(kind, order, x, out);
}
