//! Reverse-mode differentiation on an append-only scalar tape.
//!
//! Operations record a node carrying the operand indices and the local
//! partial derivatives evaluated during the forward pass, so the backward
//! sweep is a single reverse pass of multiply-accumulates. Inner products
//! and sums over slices are fused into one n-ary node each, which keeps
//! tape sizes proportional to the layer count rather than the weight
//! count on the hot training path.
//!
//! A tape is owned by one logical thread; independent tapes may run
//! concurrently. Every node is scalar-valued by construction, so a
//! backward pass always starts from a scalar output.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{ball_clip_k, sphere_project_k, ZERO_NORM_EPS};
use crate::oracles::central_difference;
use crate::scalar::{cast, FloatScalar, Scalar};

/// Default step for the finite-difference side of the gradient check.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
enum Node<F> {
    Leaf,
    Unary {
        p: u32,
        d: F,
    },
    Binary {
        l: u32,
        r: u32,
        dl: F,
        dr: F,
    },
    /// Inner product; operand indices live in the tape's argument buffer,
    /// `xs` then `ys`, each of length `len`.
    Dot {
        start: u32,
        len: u32,
    },
    /// Sum of the `len` operands starting at `start` in the argument buffer.
    Sum {
        start: u32,
        len: u32,
    },
}

struct TapeInner<F> {
    vals: Vec<F>,
    nodes: Vec<Node<F>>,
    args: Vec<u32>,
}

impl<F: Float> TapeInner<F> {
    fn push(&mut self, node: Node<F>, value: F) -> u32 {
        let idx = self.vals.len() as u32;
        self.vals.push(value);
        self.nodes.push(node);
        idx
    }
}

/// Recording tape for reverse-mode differentiation.
pub struct Tape<F> {
    inner: Rc<RefCell<TapeInner<F>>>,
}

impl<F> Clone for Tape<F> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<F: Float + fmt::Debug> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float + fmt::Debug> Tape<F> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                vals: Vec::new(),
                nodes: Vec::new(),
                args: Vec::new(),
            })),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creates a differentiable variable.
    pub fn var(&self, value: F) -> Var<F> {
        let idx = self.inner.borrow_mut().push(Node::Leaf, value);
        Var {
            tape: self.clone(),
            idx,
        }
    }

    /// Creates a constant (a leaf that never receives a gradient query).
    pub fn constant(&self, value: F) -> Var<F> {
        self.var(value)
    }

    /// Runs the reverse sweep from `output`, returning every adjoint.
    ///
    /// The output adjoint is seeded with one and the chain rule is
    /// accumulated in reverse topological order, visiting each node once.
    pub fn backward_from(&self, output: &Var<F>) -> Gradients<F> {
        let inner = self.inner.borrow();
        let n = inner.vals.len();
        let mut adj = vec![F::zero(); n];
        adj[output.idx as usize] = F::one();
        for i in (0..n).rev() {
            let a = adj[i];
            if a == F::zero() {
                continue;
            }
            match inner.nodes[i] {
                Node::Leaf => {}
                Node::Unary { p, d } => {
                    adj[p as usize] = adj[p as usize] + a * d;
                }
                Node::Binary { l, r, dl, dr } => {
                    adj[l as usize] = adj[l as usize] + a * dl;
                    adj[r as usize] = adj[r as usize] + a * dr;
                }
                Node::Dot { start, len } => {
                    let (s, l) = (start as usize, len as usize);
                    for k in 0..l {
                        let xi = inner.args[s + k] as usize;
                        let yi = inner.args[s + l + k] as usize;
                        let xv = inner.vals[xi];
                        let yv = inner.vals[yi];
                        adj[xi] = adj[xi] + a * yv;
                        adj[yi] = adj[yi] + a * xv;
                    }
                }
                Node::Sum { start, len } => {
                    let (s, l) = (start as usize, len as usize);
                    for k in 0..l {
                        let xi = inner.args[s + k] as usize;
                        adj[xi] = adj[xi] + a;
                    }
                }
            }
        }
        Gradients { adjoints: adj }
    }
}

/// Adjoints produced by one backward pass.
pub struct Gradients<F> {
    adjoints: Vec<F>,
}

impl<F: Float> Gradients<F> {
    pub fn get(&self, var: &Var<F>) -> F {
        self.adjoints[var.idx as usize]
    }
}

/// A scalar value recorded on a [`Tape`].
pub struct Var<F> {
    tape: Tape<F>,
    idx: u32,
}

impl<F> Clone for Var<F> {
    fn clone(&self) -> Self {
        Var {
            tape: self.tape.clone(),
            idx: self.idx,
        }
    }
}

impl<F: Float + fmt::Debug> fmt::Debug for Var<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({:?})", self.value())
    }
}

impl<F: Float + fmt::Debug> Var<F> {
    pub fn value(&self) -> F {
        self.tape.inner.borrow().vals[self.idx as usize]
    }

    /// Backward pass from this (scalar) variable.
    pub fn backward(&self) -> Gradients<F> {
        self.tape.backward_from(self)
    }

    fn unary(&self, value: F, d: F) -> Var<F> {
        let idx = self
            .tape
            .inner
            .borrow_mut()
            .push(Node::Unary { p: self.idx, d }, value);
        Var {
            tape: self.tape.clone(),
            idx,
        }
    }

    fn binary(&self, rhs: &Var<F>, value: F, dl: F, dr: F) -> Var<F> {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &rhs.tape.inner),
            "operands must share one tape"
        );
        let idx = self.tape.inner.borrow_mut().push(
            Node::Binary {
                l: self.idx,
                r: rhs.idx,
                dl,
                dr,
            },
            value,
        );
        Var {
            tape: self.tape.clone(),
            idx,
        }
    }

    /// Pointwise maximum; gradient follows the larger operand
    /// (the left one on ties).
    pub fn max(&self, rhs: &Var<F>) -> Var<F> {
        let (a, b) = (self.value(), rhs.value());
        if a >= b {
            self.binary(rhs, a, F::one(), F::zero())
        } else {
            self.binary(rhs, b, F::zero(), F::one())
        }
    }
}

impl<F: Float + fmt::Debug> Add for Var<F> {
    type Output = Var<F>;
    fn add(self, rhs: Var<F>) -> Var<F> {
        let v = self.value() + rhs.value();
        self.binary(&rhs, v, F::one(), F::one())
    }
}

impl<F: Float + fmt::Debug> Sub for Var<F> {
    type Output = Var<F>;
    fn sub(self, rhs: Var<F>) -> Var<F> {
        let v = self.value() - rhs.value();
        self.binary(&rhs, v, F::one(), -F::one())
    }
}

impl<F: Float + fmt::Debug> Mul for Var<F> {
    type Output = Var<F>;
    fn mul(self, rhs: Var<F>) -> Var<F> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(&rhs, a * b, b, a)
    }
}

impl<F: Float + fmt::Debug> Div for Var<F> {
    type Output = Var<F>;
    fn div(self, rhs: Var<F>) -> Var<F> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(&rhs, a / b, F::one() / b, -a / (b * b))
    }
}

impl<F: Float + fmt::Debug> Neg for Var<F> {
    type Output = Var<F>;
    fn neg(self) -> Var<F> {
        let v = -self.value();
        self.unary(v, -F::one())
    }
}

impl<F: Float + fmt::Debug> Scalar for Var<F> {
    type F = F;

    fn val(&self) -> F {
        self.value()
    }

    fn lit(&self, v: F) -> Var<F> {
        self.tape.constant(v)
    }

    fn tanh(&self) -> Var<F> {
        let t = self.value().tanh();
        self.unary(t, F::one() - t * t)
    }

    fn atanh(&self) -> Var<F> {
        let x = self.value();
        self.unary(x.atanh(), F::one() / (F::one() - x * x))
    }

    fn asinh(&self) -> Var<F> {
        let x = self.value();
        self.unary(x.asinh(), F::one() / (F::one() + x * x).sqrt())
    }

    fn exp(&self) -> Var<F> {
        let e = self.value().exp();
        self.unary(e, e)
    }

    fn ln(&self) -> Var<F> {
        let x = self.value();
        self.unary(x.ln(), F::one() / x)
    }

    fn sqrt(&self) -> Var<F> {
        let s = self.value().sqrt();
        self.unary(s, F::one() / (s + s))
    }

    fn dot(xs: &[Var<F>], ys: &[Var<F>]) -> Var<F> {
        assert_eq!(xs.len(), ys.len());
        assert!(!xs.is_empty());
        let tape = xs[0].tape.clone();
        let mut inner = tape.inner.borrow_mut();
        let start = inner.args.len() as u32;
        let len = xs.len() as u32;
        let mut value = F::zero();
        for x in xs {
            inner.args.push(x.idx);
        }
        for (x, y) in xs.iter().zip(ys) {
            inner.args.push(y.idx);
            value = value + inner.vals[x.idx as usize] * inner.vals[y.idx as usize];
        }
        let idx = inner.push(Node::Dot { start, len }, value);
        drop(inner);
        Var { tape, idx }
    }

    fn sum(xs: &[Var<F>]) -> Var<F> {
        assert!(!xs.is_empty());
        let tape = xs[0].tape.clone();
        let mut inner = tape.inner.borrow_mut();
        let start = inner.args.len() as u32;
        let len = xs.len() as u32;
        let mut value = F::zero();
        for x in xs {
            inner.args.push(x.idx);
            value = value + inner.vals[x.idx as usize];
        }
        let idx = inner.push(Node::Sum { start, len }, value);
        drop(inner);
        Var { tape, idx }
    }
}

// ---------------------------------------------------------------------------
// Parameter sets and SGD
// ---------------------------------------------------------------------------

/// Geometric constraint re-established after every update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint<F> {
    Free,
    /// Each row is re-projected onto the sphere of curvature `kappa > 0`.
    SphereRows {
        kappa: F,
    },
    /// Each row is re-clipped into the ball of curvature `kappa < 0`.
    BallRows {
        kappa: F,
        xi: F,
    },
}

/// One named parameter tensor with its gradient buffer.
#[derive(Clone, Debug)]
pub struct ParamTensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
    pub grad: Vec<F>,
    pub constraint: Constraint<F>,
}

/// Named parameter tensors with identically shaped gradient buffers.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<F> {
    tensors: Vec<ParamTensor<F>>,
}

impl<F: Float + fmt::Debug> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet {
            tensors: Vec::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<F>,
        constraint: Constraint<F>,
    ) {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape/data mismatch"
        );
        let grad = vec![F::zero(); data.len()];
        self.tensors.push(ParamTensor {
            name: name.into(),
            shape,
            data,
            grad,
            constraint,
        });
    }

    pub fn tensors(&self) -> &[ParamTensor<F>] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&ParamTensor<F>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn flat_len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// All parameter values in declaration order.
    pub fn flat_values(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.flat_len());
        for t in &self.tensors {
            out.extend_from_slice(&t.data);
        }
        out
    }

    pub fn set_flat_values(&mut self, values: &[F]) {
        assert_eq!(values.len(), self.flat_len());
        let mut off = 0;
        for t in &mut self.tensors {
            let len = t.data.len();
            t.data.copy_from_slice(&values[off..off + len]);
            off += len;
        }
    }

    /// Pushes every parameter onto `tape` as a variable, in declaration order.
    pub fn push_vars(&self, tape: &Tape<F>) -> Vec<Var<F>> {
        self.flat_values()
            .into_iter()
            .map(|v| tape.var(v))
            .collect()
    }

    /// Writes the adjoints of `vars` (as produced by [`ParamSet::push_vars`])
    /// into the gradient buffers, adding to what is already there.
    pub fn accumulate_grads(&mut self, vars: &[Var<F>], grads: &Gradients<F>) {
        assert_eq!(vars.len(), self.flat_len());
        let mut off = 0;
        for t in &mut self.tensors {
            for g in t.grad.iter_mut() {
                *g = *g + grads.get(&vars[off]);
                off += 1;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            for g in t.grad.iter_mut() {
                *g = F::zero();
            }
        }
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: F) -> F {
        let mut total = F::zero();
        for t in &self.tensors {
            for g in &t.grad {
                total = total + *g * *g;
            }
        }
        let norm = total.sqrt();
        if norm > max_norm {
            let scale = max_norm / norm;
            for t in &mut self.tensors {
                for g in t.grad.iter_mut() {
                    *g = *g * scale;
                }
            }
        }
        norm
    }
}

/// One SGD step `p ← p − lr·g` with constraint re-projection.
///
/// Tensors whose every update `lr·g` is exactly zero are left untouched,
/// so a zero learning rate (or a zero gradient) preserves parameters
/// bit for bit. Gradients are zeroed afterwards.
pub fn sgd_step<F: FloatScalar>(params: &mut ParamSet<F>, lr: F) -> Result<()> {
    for t in &params.tensors {
        if t.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                tensor: t.name.clone(),
            });
        }
    }
    for t in &mut params.tensors {
        let moved = t.grad.iter().any(|&g| lr * g != F::zero());
        if moved {
            for (p, g) in t.data.iter_mut().zip(&t.grad) {
                *p = *p - lr * *g;
            }
            apply_constraint(t)?;
        }
        for g in t.grad.iter_mut() {
            *g = F::zero();
        }
    }
    Ok(())
}

fn apply_constraint<F: FloatScalar>(t: &mut ParamTensor<F>) -> Result<()> {
    let cols = *t.shape.last().unwrap_or(&t.data.len());
    match t.constraint {
        Constraint::Free => {}
        Constraint::SphereRows { kappa } => {
            for row in t.data.chunks_mut(cols) {
                let n = row.iter().fold(F::zero(), |a, &v| a + v * v).sqrt();
                if n < cast(ZERO_NORM_EPS) {
                    return Err(Error::ZeroVector {
                        norm: n.to_f64().unwrap_or(0.0),
                        min: ZERO_NORM_EPS,
                    });
                }
                let projected = sphere_project_k(row, kappa);
                row.copy_from_slice(&projected);
            }
        }
        Constraint::BallRows { kappa, xi } => {
            for row in t.data.chunks_mut(cols) {
                let clipped = ball_clip_k(row, kappa.abs(), xi);
                row.copy_from_slice(&clipped);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// A deterministic scalar loss over a flat parameter vector, evaluable
/// with plain floats or tape variables through the same code path.
pub trait ScalarLoss<F: Float> {
    fn eval<S: Scalar<F = F>>(&self, theta: &[S]) -> S;

    /// True when some intermediate at `theta` sits within the caller's
    /// margin of a clamp or clip boundary, where finite differences are
    /// invalid. Point generators reject and redraw on `true`.
    fn near_kink(&self, _theta: &[F]) -> bool {
        false
    }
}

/// Outcome of one reverse-mode versus central-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport<F> {
    pub max_rel_err: F,
    pub checked_coords: usize,
}

/// Compares reverse-mode gradients against central differences on a
/// seeded subsample of at least `min_coords` coordinates (all of them if
/// the parameter vector is smaller). Relative error uses
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn grad_check<F, L>(
    loss: &L,
    theta: &[F],
    seed: u64,
    eps: F,
    min_coords: usize,
) -> GradCheckReport<F>
where
    F: FloatScalar,
    L: ScalarLoss<F>,
{
    let tape = Tape::new();
    let vars: Vec<Var<F>> = theta.iter().map(|&v| tape.var(v)).collect();
    let out = loss.eval(&vars);
    let grads = out.backward();
    let analytic: Vec<F> = vars.iter().map(|v| grads.get(v)).collect();

    let coords: Vec<usize> = if theta.len() <= min_coords {
        (0..theta.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, theta.len(), min_coords).into_vec()
    };

    let value_fn = |t: &[F]| loss.eval::<F>(t);
    let mut max_rel = F::zero();
    for &i in &coords {
        let numeric = central_difference(&value_fn, theta, i, eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(cast(1e-8));
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    GradCheckReport {
        max_rel_err: max_rel,
        checked_coords: coords.len(),
    }
}

/// [`grad_check`] over the flattened values of a parameter set.
pub fn grad_check_params<F, L>(
    loss: &L,
    params: &ParamSet<F>,
    seed: u64,
    eps: F,
    min_coords: usize,
) -> GradCheckReport<F>
where
    F: FloatScalar,
    L: ScalarLoss<F>,
{
    grad_check(loss, &params.flat_values(), seed, eps, min_coords)
}
