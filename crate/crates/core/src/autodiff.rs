//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! A [`Tape`] records every scalar operation as a node holding its value, its
//! parents and the local partial derivatives with respect to those parents.
//! [`Var`] is a cheap `Copy` handle into a tape. Models that need to run both
//! with plain floats and with gradients are written against the [`Real`]
//! trait, which is implemented for `f64` and for `Var`.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Operation recorded on a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Max0,
    PowInt,
    PowF,
    Sigmoid,
    Tanh,
    Exp,
    Ln,
    Abs,
}

/// Binary and unary arithmetic exposed through [`arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Max0,
    PowInt(i32),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: OpKind,
    arity: u8,
    parents: [usize; 2],
    partials: [f64; 2],
    value: f64,
}

/// Append-only record of a scalar computation.
///
/// Parents always precede their children, so a single reverse sweep over the
/// node list is a valid topological order for backpropagation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New leaf node holding `x`.
    pub fn var(&self, x: f64) -> Var<'_> {
        self.push(OpKind::Leaf, &[], &[], x)
    }

    pub fn vars(&self, xs: &[f64]) -> Vec<Var<'_>> {
        xs.iter().map(|&x| self.var(x)).collect()
    }

    fn push(&self, op: OpKind, parents: &[usize], partials: &[f64], value: f64) -> Var<'_> {
        let mut node = Node {
            op,
            arity: parents.len() as u8,
            parents: [0; 2],
            partials: [0.0; 2],
            value,
        };
        node.parents[..parents.len()].copy_from_slice(parents);
        node.partials[..partials.len()].copy_from_slice(partials);
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(node);
        self.grads.borrow_mut().push(0.0);
        Var {
            tape: self,
            index,
            value,
        }
    }

    pub fn op_kind(&self, v: Var<'_>) -> OpKind {
        self.nodes.borrow()[v.index].op
    }

    /// Value stored on the tape for `v`.
    pub fn value(&self, v: Var<'_>) -> f64 {
        self.nodes.borrow()[v.index].value
    }

    /// Backpropagates from `loss`, adding d loss / d node into every node's
    /// gradient slot. Slots accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        assert!(
            std::ptr::eq(loss.tape, self),
            "backward called with a Var from another tape"
        );
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; loss.index + 1];
        adjoint[loss.index] = 1.0;
        for i in (0..=loss.index).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for k in 0..node.arity as usize {
                adjoint[node.parents[k]] += a * node.partials[k];
            }
        }
        let mut grads = self.grads.borrow_mut();
        for (slot, a) in grads.iter_mut().zip(adjoint) {
            *slot += a;
        }
        Gradients { values: grads.clone() }
    }

    pub fn zero_grad(&self) {
        self.grads.borrow_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad(&self, v: Var<'_>) -> f64 {
        self.grads.borrow()[v.index]
    }
}

/// Snapshot of accumulated gradients after a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    values: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.values[v.index]
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("index", &self.index)
            .field("value", &self.value)
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn grad(&self) -> f64 {
        self.tape.grad(*self)
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(AutodiffError::Usage("operands belong to different tapes".into()))
        }
    }

    fn unary(self, op: OpKind, partial: f64, value: f64) -> Var<'t> {
        self.tape.push(op, &[self.index], &[partial], value)
    }

    fn binary(self, other: Var<'t>, op: OpKind, partials: [f64; 2], value: f64) -> Var<'t> {
        self.tape
            .push(op, &[self.index, other.index], &partials, value)
    }

    pub fn try_add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        Ok(self.binary(other, OpKind::Add, [1.0, 1.0], self.value + other.value))
    }

    pub fn try_sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        Ok(self.binary(other, OpKind::Sub, [1.0, -1.0], self.value - other.value))
    }

    pub fn try_mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        Ok(self.binary(
            other,
            OpKind::Mul,
            [other.value, self.value],
            self.value * other.value,
        ))
    }

    pub fn try_div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        if other.value == 0.0 {
            return Err(AutodiffError::Domain("division by zero".into()));
        }
        let q = self.value / other.value;
        Ok(self.binary(other, OpKind::Div, [1.0 / other.value, -q / other.value], q))
    }

    pub fn constant(self, c: f64) -> Var<'t> {
        self.tape.var(c)
    }
}

/// Applies an arithmetic operation, reporting domain and usage errors instead
/// of panicking. `b` is required for binary operations and ignored otherwise.
pub fn arith<'t>(op: ArithOp, a: Var<'t>, b: Option<Var<'t>>) -> Result<Var<'t>> {
    let rhs = || b.ok_or_else(|| AutodiffError::Usage(format!("{op:?} needs two operands")));
    match op {
        ArithOp::Add => a.try_add(rhs()?),
        ArithOp::Sub => a.try_sub(rhs()?),
        ArithOp::Mul => a.try_mul(rhs()?),
        ArithOp::Div => a.try_div(rhs()?),
        ArithOp::Neg => Ok(-a),
        ArithOp::Max0 => Ok(a.max0()),
        ArithOp::PowInt(n) => {
            if n < 0 && a.value == 0.0 {
                return Err(AutodiffError::Domain("negative power of zero".into()));
            }
            Ok(a.powi(n))
        }
    }
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scalar arithmetic shared by `f64` and [`Var`].
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant living wherever `self` lives (same tape for `Var`).
    fn constant(&self, c: f64) -> Self;
    fn sigmoid(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn max0(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `self^e` for `self >= 0`; the derivative at 0 is taken as 0.
    fn powf(self, e: f64) -> Self;

    /// `c - self`
    fn rsub(self, c: f64) -> Self {
        -self + c
    }
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn constant(&self, c: f64) -> Self {
        c
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn max0(self) -> Self {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
}

impl<'t> Real for Var<'t> {
    fn value(&self) -> f64 {
        self.value
    }
    fn constant(&self, c: f64) -> Self {
        self.tape.var(c)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.value);
        self.unary(OpKind::Sigmoid, s * (1.0 - s), s)
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(OpKind::Tanh, 1.0 - t * t, t)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(OpKind::Exp, e, e)
    }
    fn ln(self) -> Self {
        self.unary(OpKind::Ln, 1.0 / self.value, self.value.ln())
    }
    fn abs(self) -> Self {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(OpKind::Abs, d, self.value.abs())
    }
    fn max0(self) -> Self {
        if self.value > 0.0 {
            self.unary(OpKind::Max0, 1.0, self.value)
        } else {
            self.unary(OpKind::Max0, 0.0, 0.0)
        }
    }
    fn powi(self, n: i32) -> Self {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.value.powi(n - 1)
        };
        self.unary(OpKind::PowInt, d, self.value.powi(n))
    }
    fn powf(self, e: f64) -> Self {
        let v = self.value.powf(e);
        let d = if self.value == 0.0 {
            0.0
        } else {
            e * self.value.powf(e - 1.0)
        };
        self.unary(OpKind::PowF, d, v)
    }
}

macro_rules! var_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                match self.$checked(rhs) {
                    Ok(v) => v,
                    Err(e) => panic!("{e}"),
                }
            }
        }
    };
}

var_binop!(Add, add, try_add);
var_binop!(Sub, sub, try_sub);
var_binop!(Mul, mul, try_mul);
var_binop!(Div, div, try_div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(OpKind::Neg, -1.0, -self.value)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Add, 1.0, self.value + c)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Sub, 1.0, self.value - c)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Mul, c, self.value * c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        assert!(c != 0.0, "division by zero");
        self.unary(OpKind::Div, 1.0 / c, self.value / c)
    }
}

/// Sum of a non-empty slice; `zero` is returned for an empty one.
pub fn sum<T: Real>(xs: &[T], zero: T) -> T {
    let mut it = xs.iter().copied();
    match it.next() {
        Some(first) => it.fold(first, |acc, x| acc + x),
        None => zero,
    }
}

pub fn dot<T: Real>(w: &[T], x: &[f64]) -> T {
    debug_assert_eq!(w.len(), x.len());
    let mut acc = w[0] * x[0];
    for (wi, &xi) in w.iter().zip(x).skip(1) {
        acc = acc + *wi * xi;
    }
    acc
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits
        .iter()
        .map(|l| l.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - m).exp()).collect();
    let total = sum(&exps, logits[0].constant(0.0));
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// `act(W x + b)` for a row-major weight matrix.
pub fn dense_layer<T: Real>(
    weights: &[Vec<T>],
    bias: &[T],
    x: &[T],
    act: Activation,
) -> Result<Vec<T>> {
    if weights.len() != bias.len() {
        return Err(AutodiffError::Usage(format!(
            "dense layer has {} rows but {} biases",
            weights.len(),
            bias.len()
        )));
    }
    weights
        .iter()
        .zip(bias)
        .map(|(row, &b)| {
            if row.len() != x.len() {
                return Err(AutodiffError::Usage(format!(
                    "dense layer row has {} columns, input has {}",
                    row.len(),
                    x.len()
                )));
            }
            let z = row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi);
            Ok(match act {
                Activation::Tanh => z.tanh(),
                Activation::Identity => z,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lift_is_identity_with_unit_self_gradient() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        assert_eq!(x.value(), 3.0);
        assert_eq!(tape.var(0.0).value(), 0.0);
        let g = tape.backward(x);
        assert_eq!(g.wrt(x), 1.0);
    }

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let a = tape.var(2.0);
        let b = tape.var(3.0);
        let p = a * b;
        assert_eq!(p.value(), 6.0);
        let g = tape.backward(p);
        assert_eq!((g.wrt(a), g.wrt(b)), (3.0, 2.0));
    }

    #[test]
    fn relu_negative_branch_and_kink() {
        let tape = Tape::new();
        let a = tape.var(-1.5);
        let r = arith(ArithOp::Max0, a, None).unwrap();
        assert_eq!(r.value(), 0.0);
        assert_eq!(tape.backward(r).wrt(a), 0.0);
        let tape = Tape::new();
        let z = tape.var(0.0);
        assert_eq!(tape.backward(z.max0()).wrt(z), 0.0);
    }

    #[test]
    fn pow_int_value() {
        let tape = Tape::new();
        let w = tape.var(0.5);
        let p = arith(ArithOp::PowInt(8), w, None).unwrap();
        assert_eq!(p.value(), 0.00390625);
        assert_relative_eq!(tape.backward(p).wrt(w), 8.0 * 0.5f64.powi(7));
    }

    #[test]
    fn sigmoid_values() {
        let tape = Tape::new();
        let z = tape.var(0.0);
        let s = z.sigmoid();
        assert_eq!(s.value(), 0.5);
        assert_eq!(tape.backward(s).wrt(z), 0.25);
        assert_relative_eq!(10.0f64.sigmoid(), 0.999_954_6, epsilon = 1e-7);
    }

    #[test]
    fn chain_through_scaled_sigmoid() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let y = (x * 2.0).sigmoid();
        assert_eq!(tape.backward(y).wrt(x), 0.5);
    }

    #[test]
    fn division_by_zero_is_a_domain_error() {
        let tape = Tape::new();
        let a = tape.var(1.0);
        let b = tape.var(0.0);
        assert!(matches!(
            arith(ArithOp::Div, a, Some(b)),
            Err(AutodiffError::Domain(_))
        ));
    }

    #[test]
    fn tape_mismatch_is_a_usage_error() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.var(1.0);
        let b = t2.var(1.0);
        assert!(matches!(
            arith(ArithOp::Add, a, Some(b)),
            Err(AutodiffError::Usage(_))
        ));
        assert!(matches!(
            arith(ArithOp::Mul, a, None),
            Err(AutodiffError::Usage(_))
        ));
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let y = x * x;
        let first = tape.backward(y).wrt(x);
        let second = tape.backward(y).wrt(x);
        assert_eq!(second, 2.0 * first);
        tape.zero_grad();
        assert_eq!(tape.backward(y).wrt(x), first);
    }

    #[test]
    fn fan_out_adds_contributions() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = x + x * x;
        assert_eq!(tape.backward(y).wrt(x), 1.0 + 4.0);
    }

    #[test]
    fn dense_layer_identity_and_affine() {
        let tape = Tape::new();
        let eye = vec![
            vec![tape.var(1.0), tape.var(0.0)],
            vec![tape.var(0.0), tape.var(1.0)],
        ];
        let zero = vec![tape.var(0.0), tape.var(0.0)];
        let x = tape.vars(&[0.3, -0.7]);
        let y = dense_layer(&eye, &zero, &x, Activation::Identity).unwrap();
        assert_eq!(y.iter().map(|v| v.value()).collect::<Vec<_>>(), vec![0.3, -0.7]);

        let y = dense_layer(&[vec![2.0]], &[1.0], &[3.0], Activation::Identity).unwrap();
        assert_eq!(y, vec![7.0]);
    }

    #[test]
    fn dense_layer_rejects_bad_shapes() {
        let r = dense_layer(&[vec![1.0, 2.0]], &[0.0], &[1.0], Activation::Tanh);
        assert!(matches!(r, Err(AutodiffError::Usage(_))));
        let r = dense_layer(&[vec![1.0]], &[0.0, 1.0], &[1.0], Activation::Tanh);
        assert!(matches!(r, Err(AutodiffError::Usage(_))));
    }

    #[test]
    fn softmax_sums_to_one() {
        let q = softmax(&[0.6, 0.3, -2.0]);
        assert_relative_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let build = || {
            let tape = Tape::new();
            let x = tape.var(0.123);
            let y = (x.sigmoid() * x.tanh() + x.exp()).ln();
            y.value().to_bits()
        };
        assert_eq!(build(), build());
    }
}
