//! Minimal reverse-mode tape over dense 2-D arrays.
//!
//! Every value on the tape is an `Array2<f64>`: rows index the batch and
//! columns index features; scalars are `1×1`. Binary elementwise operations
//! broadcast any axis of length one, which covers bias rows and scalar
//! parameters. Operations are recorded in evaluation order, so the tape is a
//! topological order of the expression graph and the backward sweep is a
//! single reverse pass.

use std::borrow::Cow;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use super::softplus;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Softplus,
    Elu,
    Relu,
    Tanh,
    Exp,
    Ln,
    Square,
    Abs,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    Offset(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    Cols(Var, usize),
    Concat(Vec<Var>),
    PermuteCols(Var, Vec<usize>),
}

struct Node<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Records array operations for one forward pass and differentiates them.
///
/// Parameters may be borrowed for the tape's lifetime so that large weight
/// matrices are never copied just to be evaluated.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Cotangents produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v` in standard layout, zero-filled when `v` did not
    /// influence the output.
    pub fn wrt(&self, v: Var) -> Array2<f64> {
        match &self.grads[v.0] {
            Some(g) => g.as_standard_layout().into_owned(),
            None => Array2::zeros(self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Array2<f64> {
        let shape = self.shapes[v.0];
        match self.grads[v.0].take() {
            Some(g) if g.is_standard_layout() => g,
            Some(g) => g.as_standard_layout().into_owned(),
            None => Array2::zeros(shape),
        }
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Array2<f64>>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable leaf owning its value.
    pub fn variable(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// A differentiable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    /// A constant leaf borrowing its value.
    pub fn constant_ref(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Value of a `1×1` node.
    pub fn item(&self, v: Var) -> f64 {
        let a = self.value(v);
        debug_assert_eq!(a.dim(), (1, 1));
        a[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(value), Op::MatMul(a, b), ng)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(va.dim(), vb.dim());
        let va = va.broadcast(shape).expect("broadcastable operands");
        let vb = vb.broadcast(shape).expect("broadcastable operands");
        let value = match kind {
            Binary::Add => &va + &vb,
            Binary::Sub => &va - &vb,
            Binary::Mul => &va * &vb,
            Binary::Div => &va / &vb,
        };
        let ng = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(value), Op::Binary(kind, a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Div, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let x = self.value(a);
        let value = match kind {
            Unary::Softplus => x.mapv(softplus),
            Unary::Elu => x.mapv(|v| if v > 0.0 { v } else { v.exp_m1() }),
            Unary::Relu => x.mapv(|v| v.max(0.0)),
            Unary::Tanh => x.mapv(f64::tanh),
            Unary::Exp => x.mapv(f64::exp),
            Unary::Ln => x.mapv(f64::ln),
            Unary::Square => x.mapv(|v| v * v),
            Unary::Abs => x.mapv(f64::abs),
            Unary::Sqrt => x.mapv(f64::sqrt),
        };
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::Unary(kind, a), ng)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Ln, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }

    /// `c · a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::Scale(a, c), ng)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::Offset(a), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Sum of every entry, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::SumAll(a), ng)
    }

    /// Column sums over the batch axis: `B×m → 1×m`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::SumRows(a), ng)
    }

    /// Row sums over the feature axis: `B×m → B×1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::SumCols(a), ng)
    }

    /// Columns `start..start + len`.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::Cols(a, start), ng)
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Cow::Owned(value), Op::Concat(parts.to_vec()), ng)
    }

    /// Output column `j` is input column `perm[j]`.
    pub fn permute_cols(&mut self, a: Var, perm: &[usize]) -> Var {
        let x = self.value(a);
        let mut value = Array2::zeros(x.dim());
        for (j, &p) in perm.iter().enumerate() {
            value.column_mut(j).assign(&x.column(p));
        }
        let ng = self.needs(a);
        self.push(Cow::Owned(value), Op::PermuteCols(a, perm.to_vec()), ng)
    }

    /// Reverse sweep seeded with ones on `output`.
    pub fn backward(&self, output: Var) -> Grads {
        let seed = Array2::ones(self.shape(output));
        self.backward_with(output, seed)
    }

    /// Reverse sweep seeded with an explicit cotangent for `output`.
    pub fn backward_with(&self, output: Var, seed: Array2<f64>) -> Grads {
        assert_eq!(seed.dim(), self.shape(output), "seed cotangent shape");
        let n = output.0 + 1;
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Binary(kind, a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let shape = g.dim();
                    if self.needs(*a) {
                        let ga = match kind {
                            Binary::Add | Binary::Sub => g.clone(),
                            Binary::Mul => &g * &vb.broadcast(shape).unwrap(),
                            Binary::Div => &g / &vb.broadcast(shape).unwrap(),
                        };
                        accumulate(&mut grads, *a, reduce_to(ga, va.dim()));
                    }
                    if self.needs(*b) {
                        let gb = match kind {
                            Binary::Add => g.clone(),
                            Binary::Sub => -&g,
                            Binary::Mul => &g * &va.broadcast(shape).unwrap(),
                            Binary::Div => {
                                // -g·a/b²
                                let out = node.value.as_ref();
                                let vb = vb.broadcast(shape).unwrap();
                                let mut gb = Array2::zeros(shape);
                                Zip::from(&mut gb)
                                    .and(&g)
                                    .and(out)
                                    .and(&vb)
                                    .for_each(|r, &g, &o, &b| *r = -g * o / b);
                                gb
                            }
                        };
                        accumulate(&mut grads, *b, reduce_to(gb, vb.dim()));
                    }
                }
                Op::Unary(kind, a) => {
                    let x = self.value(*a);
                    let out = node.value.as_ref();
                    let mut ga = g;
                    match kind {
                        Unary::Softplus => {
                            Zip::from(&mut ga).and(x).for_each(|g, &x| *g *= sigmoid(x))
                        }
                        Unary::Elu => Zip::from(&mut ga)
                            .and(x)
                            .and(out)
                            .for_each(|g, &x, &o| *g *= if x > 0.0 { 1.0 } else { o + 1.0 }),
                        Unary::Relu => Zip::from(&mut ga)
                            .and(x)
                            .for_each(|g, &x| *g *= if x > 0.0 { 1.0 } else { 0.0 }),
                        Unary::Tanh => Zip::from(&mut ga)
                            .and(out)
                            .for_each(|g, &o| *g *= 1.0 - o * o),
                        Unary::Exp => Zip::from(&mut ga).and(out).for_each(|g, &o| *g *= o),
                        Unary::Ln => Zip::from(&mut ga).and(x).for_each(|g, &x| *g /= x),
                        Unary::Square => Zip::from(&mut ga).and(x).for_each(|g, &x| *g *= 2.0 * x),
                        Unary::Abs => Zip::from(&mut ga).and(x).for_each(|g, &x| *g *= sign(x)),
                        Unary::Sqrt => Zip::from(&mut ga).and(out).for_each(|g, &o| *g *= 0.5 / o),
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Offset(a) => accumulate(&mut grads, *a, g),
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let ga = g.broadcast(self.shape(*a)).unwrap().to_owned();
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let ga = g.broadcast(self.shape(*a)).unwrap().to_owned();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Cols(a, start) => {
                    if self.needs(*a) {
                        let mut ga = Array2::zeros(self.shape(*a));
                        let w = g.ncols();
                        ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                        accumulate(&mut grads, *a, ga);
                    }
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.needs(p) {
                            let gp = g.slice(s![.., start..start + w]).to_owned();
                            accumulate(&mut grads, p, gp);
                        }
                        start += w;
                    }
                }
                Op::PermuteCols(a, perm) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (j, &p) in perm.iter().enumerate() {
                        let mut col = ga.column_mut(p);
                        col += &g.column(j);
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        Grads { grads, shapes }
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let axis = |x: usize, y: usize| {
        assert!(
            x == y || x == 1 || y == 1,
            "incompatible shapes {a:?} and {b:?}"
        );
        x.max(y)
    };
    (axis(a.0, b.0), axis(a.1, b.1))
}

/// Sums a broadcast cotangent back down to the operand's shape.
fn reduce_to(g: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = g;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
