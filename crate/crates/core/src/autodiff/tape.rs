//! Append-only reverse-mode tape.
//!
//! Every node stores its value and a run of `(parent, ∂node/∂parent)` edges
//! in one flat edge arena, so nodes of any arity (binary arithmetic as well
//! as pre-linearised blocks pushed through [`Tape::custom`]) cost the same
//! bookkeeping. A tape lives for one loss evaluation and is then dropped.

use alloc::vec::Vec;
use core::cell::{Cell, RefCell};
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TapeError {
    /// A binary operation combined variables recorded on different tapes.
    MixedTapes,
    /// The first node whose value is NaN or infinite.
    NonFinite { node: usize },
    /// The output handed to the reverse sweep is a constant or foreign.
    NotOnTape,
}

impl fmt::Display for TapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TapeError::MixedTapes => write!(f, "operation mixed variables from different tapes"),
            TapeError::NonFinite { node } => write!(f, "non-finite value at tape node {node}"),
            TapeError::NotOnTape => write!(f, "output is not recorded on this tape"),
        }
    }
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    /// `edge_start[i]..edge_start[i + 1]` indexes the edges of node `i`.
    edge_start: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

pub struct Tape {
    inner: RefCell<Inner>,
    error: Cell<Option<TapeError>>,
}

/// Operation counts of one forward recording and its reverse sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepStats {
    pub nodes: usize,
    pub edges: usize,
    /// One value plus one local partial per edge.
    pub forward_ops: usize,
    /// One adjoint read per node plus one multiply-add per edge.
    pub reverse_ops: usize,
}

/// A scalar recorded on a [`Tape`], or a free constant when `tape` is `None`.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {})", self.idx, self.value),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let mut inner = Inner {
            values: Vec::with_capacity(nodes),
            edge_start: Vec::with_capacity(nodes + 1),
            edges: Vec::with_capacity(2 * nodes),
        };
        inner.edge_start.push(0);
        Self {
            inner: RefCell::new(inner),
            error: Cell::new(None),
        }
    }

    /// Records an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, core::iter::empty())
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Records a node with caller-supplied local partials. Constant parents
    /// are dropped; parents from another tape poison this tape.
    pub fn custom<'t, I>(&'t self, value: f64, partials: I) -> Var<'t>
    where
        I: IntoIterator<Item = (Var<'t>, f64)>,
    {
        self.push(value, partials)
    }

    /// Sum of many variables as a single node.
    pub fn sum<'t>(&'t self, terms: &[Var<'t>]) -> Var<'t> {
        let value = terms.iter().map(|t| t.value).sum();
        self.push(value, terms.iter().map(|&t| (t, 1.0)))
    }

    fn push<'t, I>(&'t self, value: f64, partials: I) -> Var<'t>
    where
        I: IntoIterator<Item = (Var<'t>, f64)>,
    {
        let mut inner = self.inner.borrow_mut();
        for (parent, d) in partials {
            match parent.tape {
                None => {}
                Some(t) if core::ptr::eq(t, self) => inner.edges.push((parent.idx, d)),
                Some(_) => self.error.set(Some(TapeError::MixedTapes)),
            }
        }
        let idx = inner.values.len() as u32;
        inner.values.push(value);
        let end = inner.edges.len() as u32;
        inner.edge_start.push(end);
        Var {
            tape: Some(self),
            idx,
            value,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> SweepStats {
        let inner = self.inner.borrow();
        let nodes = inner.values.len();
        let edges = inner.edges.len();
        SweepStats {
            nodes,
            edges,
            forward_ops: nodes + edges,
            reverse_ops: nodes + edges,
        }
    }

    /// Reverse sweep from `output`; each node is visited exactly once.
    pub fn gradient(&self, output: Var<'_>) -> Result<Gradients, TapeError> {
        if let Some(e) = self.error.get() {
            return Err(e);
        }
        match output.tape {
            Some(t) if core::ptr::eq(t, self) => {}
            _ => return Err(TapeError::NotOnTape),
        }
        let inner = self.inner.borrow();
        let n = output.idx as usize + 1;
        if let Some(node) = inner.values[..n].iter().position(|v| !v.is_finite()) {
            return Err(TapeError::NonFinite { node });
        }
        let mut adjoint = alloc::vec![0.0; n];
        adjoint[n - 1] = 1.0;
        for i in (0..n).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = (inner.edge_start[i] as usize, inner.edge_start[i + 1] as usize);
            for &(parent, d) in &inner.edges[lo..hi] {
                adjoint[parent as usize] += a * d;
            }
        }
        if let Some(node) = adjoint.iter().position(|v| !v.is_finite()) {
            return Err(TapeError::NonFinite { node });
        }
        Ok(Gradients { adjoint })
    }
}

/// Adjoints of every node up to the swept output.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    /// `∂output/∂v`; zero for constants and for nodes recorded after the output.
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        if v.tape.is_none() {
            return 0.0;
        }
        self.adjoint.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(v)).collect()
    }
}

/// Value and gradient of a traced scalar function at `x`.
pub fn grad<F>(f: F, x: &[f64]) -> Result<(f64, Vec<f64>), TapeError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let inputs = tape.vars(x);
    let out = f(&tape, &inputs);
    let g = tape.gradient(out)?;
    Ok((out.value, g.wrt_all(&inputs)))
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            idx: u32::MAX,
            value,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn unary(self, value: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(t) => t.push(value, [(self, d)]),
        }
    }

    #[inline]
    fn binary(self, rhs: Self, value: f64, dl: f64, dr: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(value),
            (Some(t), _) => t.push(value, [(self, dl), (rhs, dr)]),
            (None, Some(t)) => t.push(value, [(rhs, dr)]),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Real for Var<'t> {
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        self.unary(Real::sin(self.value), Real::cos(self.value))
    }
    fn cos(self) -> Self {
        self.unary(Real::cos(self.value), -Real::sin(self.value))
    }
    fn tan(self) -> Self {
        let t = Real::tan(self.value);
        self.unary(t, 1.0 + t * t)
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = x.value * x.value + self.value * self.value;
        self.binary(
            x,
            Real::atan2(self.value, x.value),
            x.value / r2,
            -self.value / r2,
        )
    }
    fn exp(self) -> Self {
        let e = Real::exp(self.value);
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(Real::ln(self.value), 1.0 / self.value)
    }
    fn sqrt(self) -> Self {
        let r = Real::sqrt(self.value);
        self.unary(r, 0.5 / r)
    }
    fn tanh(self) -> Self {
        let t = Real::tanh(self.value);
        self.unary(t, 1.0 - t * t)
    }
    fn lincomb(value: f64, terms: &[(Self, f64)]) -> Self {
        match terms.iter().find_map(|(v, _)| v.tape) {
            None => Var::constant(value),
            Some(t) => t.push(value, terms.iter().copied()),
        }
    }
    fn dot(weights: &[Self], inputs: &[Self], bias: Self) -> Self {
        let tape = weights
            .iter()
            .chain(inputs)
            .chain(core::iter::once(&bias))
            .find_map(|v| v.tape);
        let mut value = bias.value;
        for (w, x) in weights.iter().zip(inputs) {
            value += w.value * x.value;
        }
        match tape {
            None => Var::constant(value),
            Some(t) => {
                let edges = weights
                    .iter()
                    .zip(inputs)
                    .flat_map(|(&w, &x)| [(w, x.value), (x, w.value)])
                    .chain(core::iter::once((bias, 1.0)));
                t.push(value, edges)
            }
        }
    }
    fn abs(self) -> Self {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(Real::abs(self.value), d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let (v, g) = grad(|_, x| x[0] * x[0], &[3.0]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g, [6.0]);
    }

    #[test]
    fn sin_times_y() {
        let (v, g) = grad(|_, x| x[0].sin() * x[1], &[0.0, 2.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, [2.0, 0.0]);
    }

    #[test]
    fn abs_min_max_subgradients() {
        let (_, g) = grad(|_, x| x[0].abs(), &[0.0]).unwrap();
        assert_eq!(g, [0.0]);
        let (_, g) = grad(|_, x| x[0].min(x[1]), &[1.0, 2.0]).unwrap();
        assert_eq!(g, [1.0, 0.0]);
        let (_, g) = grad(|_, x| x[0].max(x[1]), &[1.0, 2.0]).unwrap();
        assert_eq!(g, [0.0, 1.0]);
    }

    #[test]
    fn mixing_tapes_is_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = a.var(1.0);
        let y = b.var(2.0);
        let z = x * y;
        assert_eq!(a.gradient(z), Err(TapeError::MixedTapes));
    }

    #[test]
    fn nan_is_reported_with_node_index() {
        let t = Tape::new();
        let x = t.var(-1.0);
        let y = x * 2.0;
        let z = y.sqrt();
        assert_eq!(t.gradient(z).err(), Some(TapeError::NonFinite { node: 2 }));
    }

    #[test]
    fn custom_nodes_and_sums() {
        let t = Tape::new();
        let x = t.var(2.0);
        let y = t.var(5.0);
        // c = x^2 y linearised by hand
        let c = t.custom(20.0, [(x, 20.0), (y, 4.0)]);
        let s = t.sum(&[c, x, Var::constant(1.0)]);
        let g = t.gradient(s).unwrap();
        assert_eq!(s.value(), 23.0);
        assert_eq!(g.wrt(&x), 21.0);
        assert_eq!(g.wrt(&y), 4.0);
    }

    #[test]
    fn fused_dot_matches_expanded_products() {
        let x = [0.3, -1.2, 0.7, 2.0];
        let (v, g) = grad(
            |_, x| {
                let w = [x[0], x[1], Var::constant(0.5)];
                let a = [x[2], x[2] * x[2], x[3]];
                Real::dot(&w, &a, x[3])
            },
            &x,
        )
        .unwrap();
        assert!((v - (0.3 * 0.7 - 1.2 * 0.49 + 0.5 * 2.0 + 2.0)).abs() < 1e-15);
        let expect = [0.7, 0.49, 0.3 + 2.0 * 0.7 * -1.2, 1.5];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_do_not_touch_the_tape() {
        let t = Tape::new();
        let x = t.var(1.0);
        let k = Var::constant(3.0) * Var::constant(2.0);
        assert!(k.is_constant());
        let y = x * k;
        assert_eq!(t.len(), 2);
        assert_eq!(t.gradient(y).unwrap().wrt(&x), 6.0);
    }

    #[test]
    fn reverse_cost_is_bounded_by_forward_cost() {
        let t = Tape::new();
        let xs = t.vars(&[0.1, 0.2, 0.3, 0.4]);
        let mut acc = xs[0];
        for _ in 0..100 {
            for &x in &xs {
                acc = (acc * x).sin() + x.exp();
            }
        }
        let stats = t.stats();
        t.gradient(acc).unwrap();
        assert!(stats.reverse_ops < 5 * stats.forward_ops);
    }
}
