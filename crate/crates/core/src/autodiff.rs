//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a record to an append-only [`Tape`]; a reverse
//! sweep over the records accumulates adjoints. Scalar operations are
//! recorded one node at a time, which is what the recurrent filter
//! equations need. Dense layers use fused vector records (matrix-vector
//! product, elementwise maps) so that a 1024-wide layer costs one record
//! instead of a million.
//!
//! ```
//! use phasealign::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(3.0);
//! let y = x * x;
//! tape.backward(y);
//! assert_eq!(y.value(), 9.0);
//! assert_eq!(x.grad(), 6.0);
//! ```
//!
//! Leaf gradients accumulate across `backward` calls until
//! [`Tape::zero_grad`] is called. Intermediate adjoints never persist.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Smallest denominator magnitude accepted by [`Var::checked_div`].
pub const MIN_DENOMINATOR: f64 = 1e-300;

/// Scalar arithmetic shared by plain `f64` evaluation and taped [`Var`]s.
///
/// Filter and loss code is written once against this trait; the `f64`
/// instantiation is the inference path and the `Var` instantiation records
/// the same operations, in the same order, for differentiation.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn pow2(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn pow2(self) -> Self {
        self * self
    }
}

#[derive(Clone, Copy, Debug)]
enum Record {
    Leaf {
        start: u32,
        len: u32,
    },
    Unary {
        out: u32,
        a: u32,
        da: f64,
    },
    Binary {
        out: u32,
        a: u32,
        b: u32,
        da: f64,
        db: f64,
    },
    /// Scalar output with an explicit list of `(input, partial)` edges.
    Fused {
        out: u32,
        edges: u32,
        len: u32,
    },
    /// Elementwise map with stored derivatives.
    Map {
        out: u32,
        inp: u32,
        len: u32,
        partials: u32,
    },
    AddVec {
        out: u32,
        a: u32,
        b: u32,
        len: u32,
    },
    /// `out[i] = sum_j w[i * cols + j] * x[j]`
    MatVec {
        out: u32,
        w: u32,
        x: u32,
        rows: u32,
        cols: u32,
    },
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    grads: Vec<f64>,
    records: Vec<Record>,
    edges: Vec<(u32, f64)>,
    partials: Vec<f64>,
    adjoint: Vec<f64>,
}

impl Inner {
    #[inline]
    fn push(&mut self, value: f64) -> u32 {
        let idx = self.values.len();
        assert!(idx < u32::MAX as usize, "tape overflow");
        self.values.push(value);
        self.grads.push(0.0);
        idx as u32
    }

    fn push_block(&mut self, values: impl IntoIterator<Item = f64>) -> (u32, u32) {
        let start = self.values.len();
        self.values.extend(values);
        let len = self.values.len() - start;
        self.grads.resize(self.values.len(), 0.0);
        assert!(self.values.len() < u32::MAX as usize, "tape overflow");
        (start as u32, len as u32)
    }
}

/// Position on a tape that [`Tape::truncate`] can roll back to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    nodes: usize,
    records: usize,
    edges: usize,
    partials: usize,
}

impl Checkpoint {
    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// Append-only arena of scalar nodes.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("nodes", &inner.values.len())
            .field("records", &inner.records.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let inner = Inner {
            values: Vec::with_capacity(nodes),
            grads: Vec::with_capacity(nodes),
            records: Vec::with_capacity(nodes),
            ..Default::default()
        };
        Tape {
            inner: RefCell::new(inner),
        }
    }

    /// Number of nodes (leaves, constants and intermediates).
    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record_count(&self) -> usize {
        self.inner.borrow().records.len()
    }

    pub fn leaf(&self, value: f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let index = inner.push(value);
        inner.records.push(Record::Leaf {
            start: index,
            len: 1,
        });
        Var { tape: self, index }
    }

    pub fn leaf_vec(&self, values: &[f64]) -> VarVec<'_> {
        let mut inner = self.inner.borrow_mut();
        let (start, len) = inner.push_block(values.iter().copied());
        inner.records.push(Record::Leaf { start, len });
        VarVec {
            tape: self,
            start,
            len,
        }
    }

    /// A node that never receives gradient.
    pub fn constant(&self, value: f64) -> Var<'_> {
        let index = self.inner.borrow_mut().push(value);
        Var { tape: self, index }
    }

    pub fn constant_vec(&self, values: &[f64]) -> VarVec<'_> {
        let (start, len) = self.inner.borrow_mut().push_block(values.iter().copied());
        VarVec {
            tape: self,
            start,
            len,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let inner = self.inner.borrow();
        Checkpoint {
            nodes: inner.values.len(),
            records: inner.records.len(),
            edges: inner.edges.len(),
            partials: inner.partials.len(),
        }
    }

    /// Drops every node recorded after `cp`. Vars created after the
    /// checkpoint must not be used afterwards.
    pub fn truncate(&self, cp: Checkpoint) {
        let mut inner = self.inner.borrow_mut();
        inner.values.truncate(cp.nodes);
        inner.grads.truncate(cp.nodes);
        inner.records.truncate(cp.records);
        inner.edges.truncate(cp.edges);
        inner.partials.truncate(cp.partials);
    }

    pub fn clear(&self) {
        self.truncate(Checkpoint {
            nodes: 0,
            records: 0,
            edges: 0,
            partials: 0,
        });
    }

    pub fn zero_grad(&self) {
        self.inner
            .borrow_mut()
            .grads
            .iter_mut()
            .for_each(|g| *g = 0.0);
    }

    /// Overwrites the values of existing leaves, e.g. after an optimizer step.
    pub fn set_values(&self, v: VarVec<'_>, values: &[f64]) {
        assert_eq!(v.len(), values.len());
        let mut inner = self.inner.borrow_mut();
        let start = v.start as usize;
        inner.values[start..start + values.len()].copy_from_slice(values);
    }

    #[inline]
    fn unary(&self, value: f64, a: u32, da: f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let out = inner.push(value);
        inner.records.push(Record::Unary { out, a, da });
        Var {
            tape: self,
            index: out,
        }
    }

    #[inline]
    fn binary(&self, value: f64, a: u32, b: u32, da: f64, db: f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let out = inner.push(value);
        inner.records.push(Record::Binary { out, a, b, da, db });
        Var {
            tape: self,
            index: out,
        }
    }

    #[inline]
    fn value_of(&self, index: u32) -> f64 {
        self.inner.borrow().values[index as usize]
    }

    /// Registers a scalar function of `inputs` whose value and gradient were
    /// computed elsewhere (the vector-Jacobian product is `partials * adj`).
    pub fn custom<'t>(&'t self, inputs: &[Var<'t>], value: f64, partials: &[f64]) -> Var<'t> {
        assert_eq!(inputs.len(), partials.len());
        let mut inner = self.inner.borrow_mut();
        let edges = inner.edges.len() as u32;
        for (v, &p) in inputs.iter().zip(partials) {
            self.check_same(v.tape);
            inner.edges.push((v.index, p));
        }
        let out = inner.push(value);
        inner.records.push(Record::Fused {
            out,
            edges,
            len: inputs.len() as u32,
        });
        Var {
            tape: self,
            index: out,
        }
    }

    pub fn sum<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        let value = xs.iter().map(|v| v.value()).sum();
        self.custom(xs, value, &vec![1.0; xs.len()])
    }

    pub fn mean<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        assert!(!xs.is_empty(), "mean of empty slice");
        let n = xs.len() as f64;
        let value = xs.iter().map(|v| v.value()).sum::<f64>() / n;
        self.custom(xs, value, &vec![1.0 / n; xs.len()])
    }

    /// Row-major `rows x cols` matrix times vector.
    pub fn matvec<'t>(
        &'t self,
        w: VarVec<'t>,
        x: VarVec<'t>,
        rows: usize,
        cols: usize,
    ) -> VarVec<'t> {
        assert_eq!(w.len(), rows * cols, "matvec weight shape");
        assert_eq!(x.len(), cols, "matvec input shape");
        self.check_same(w.tape);
        self.check_same(x.tape);
        let mut inner = self.inner.borrow_mut();
        let (ws, xs) = (w.start as usize, x.start as usize);
        let mut out = Vec::with_capacity(rows);
        {
            let vals = &inner.values;
            let xv = &vals[xs..xs + cols];
            for r in 0..rows {
                let row = &vals[ws + r * cols..ws + (r + 1) * cols];
                out.push(row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        let (start, len) = inner.push_block(out);
        inner.records.push(Record::MatVec {
            out: start,
            w: w.start,
            x: x.start,
            rows: rows as u32,
            cols: cols as u32,
        });
        VarVec {
            tape: self,
            start,
            len,
        }
    }

    pub fn add_vec<'t>(&'t self, a: VarVec<'t>, b: VarVec<'t>) -> VarVec<'t> {
        assert_eq!(a.len(), b.len(), "add_vec shape");
        let mut inner = self.inner.borrow_mut();
        let (sa, sb, n) = (a.start as usize, b.start as usize, a.len());
        let sum: Vec<f64> = (0..n)
            .map(|i| inner.values[sa + i] + inner.values[sb + i])
            .collect();
        let (start, len) = inner.push_block(sum);
        inner.records.push(Record::AddVec {
            out: start,
            a: a.start,
            b: b.start,
            len,
        });
        VarVec {
            tape: self,
            start,
            len,
        }
    }

    fn map<'t>(&'t self, v: VarVec<'t>, f: impl Fn(f64) -> (f64, f64)) -> VarVec<'t> {
        let mut inner = self.inner.borrow_mut();
        let s = v.start as usize;
        let (vals, ders): (Vec<f64>, Vec<f64>) =
            (0..v.len()).map(|i| f(inner.values[s + i])).unzip();
        let partials = inner.partials.len() as u32;
        inner.partials.extend(ders);
        let (start, len) = inner.push_block(vals);
        inner.records.push(Record::Map {
            out: start,
            inp: v.start,
            len,
            partials,
        });
        VarVec {
            tape: self,
            start,
            len,
        }
    }

    /// Elementwise `sin(omega * v)`.
    pub fn sin_vec<'t>(&'t self, v: VarVec<'t>, omega: f64) -> VarVec<'t> {
        self.map(v, |z| {
            let (s, c) = (omega * z).sin_cos();
            (s, omega * c)
        })
    }

    pub fn tanh_vec<'t>(&'t self, v: VarVec<'t>) -> VarVec<'t> {
        self.map(v, |z| {
            let t = z.tanh();
            (t, 1.0 - t * t)
        })
    }

    /// Reverse sweep seeded with `d loss / d loss = 1`.
    pub fn backward(&self, loss: Var<'_>) {
        self.check_same(loss.tape);
        self.backward_seeded(&[(loss, 1.0)]);
    }

    /// Reverse sweep seeded with arbitrary output adjoints, i.e. a
    /// vector-Jacobian product. Leaf adjoints are added to the stored
    /// gradients.
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) {
        let mut guard = self.inner.borrow_mut();
        let inner = &mut *guard;
        let n = inner.values.len();
        let adj = &mut inner.adjoint;
        adj.clear();
        adj.resize(n, 0.0);
        for (v, s) in seeds {
            self.check_same(v.tape);
            adj[v.index as usize] += s;
        }
        let values = &inner.values;
        for rec in inner.records.iter().rev() {
            match *rec {
                Record::Leaf { start, len } => {
                    let (s, e) = (start as usize, (start + len) as usize);
                    for (g, a) in inner.grads[s..e].iter_mut().zip(&adj[s..e]) {
                        *g += a;
                    }
                }
                Record::Unary { out, a, da } => {
                    let g = adj[out as usize];
                    if g != 0.0 {
                        adj[a as usize] += da * g;
                    }
                }
                Record::Binary { out, a, b, da, db } => {
                    let g = adj[out as usize];
                    if g != 0.0 {
                        adj[a as usize] += da * g;
                        adj[b as usize] += db * g;
                    }
                }
                Record::Fused { out, edges, len } => {
                    let g = adj[out as usize];
                    if g != 0.0 {
                        for &(idx, p) in &inner.edges[edges as usize..(edges + len) as usize] {
                            adj[idx as usize] += p * g;
                        }
                    }
                }
                Record::Map {
                    out,
                    inp,
                    len,
                    partials,
                } => {
                    let ders = &inner.partials[partials as usize..(partials + len) as usize];
                    for (i, d) in ders.iter().enumerate() {
                        let g = adj[out as usize + i];
                        adj[inp as usize + i] += d * g;
                    }
                }
                Record::AddVec { out, a, b, len } => {
                    for i in 0..len as usize {
                        let g = adj[out as usize + i];
                        adj[a as usize + i] += g;
                        adj[b as usize + i] += g;
                    }
                }
                Record::MatVec {
                    out,
                    w,
                    x,
                    rows,
                    cols,
                } => {
                    let (w, x, cols) = (w as usize, x as usize, cols as usize);
                    for r in 0..rows as usize {
                        let g = adj[out as usize + r];
                        if g == 0.0 {
                            continue;
                        }
                        let row = w + r * cols;
                        for j in 0..cols {
                            adj[x + j] += values[row + j] * g;
                            adj[row + j] += values[x + j] * g;
                        }
                    }
                }
            }
        }
    }

    #[inline]
    fn check_same(&self, other: &Tape) {
        assert!(
            std::ptr::eq(self, other),
            "operands recorded on different tapes"
        );
    }
}

/// Handle to a scalar node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.index, self.value())
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.value_of(self.index)
    }

    /// Accumulated gradient (non-zero only for leaves after `backward`).
    pub fn grad(&self) -> f64 {
        self.tape.inner.borrow().grads[self.index as usize]
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn checked_div(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_same(rhs.tape);
        let (a, b) = (self.value(), rhs.value());
        if b.abs() < MIN_DENOMINATOR {
            return Err(Error::DivisionByZero(b));
        }
        Ok(self
            .tape
            .binary(a / b, self.index, rhs.index, 1.0 / b, -a / (b * b)))
    }
}

impl Real for Var<'_> {
    fn value(self) -> f64 {
        Var::value(&self)
    }

    fn sin(self) -> Self {
        let x = self.value();
        self.tape.unary(x.sin(), self.index, x.cos())
    }

    fn cos(self) -> Self {
        let x = self.value();
        self.tape.unary(x.cos(), self.index, -x.sin())
    }

    fn tanh(self) -> Self {
        let t = self.value().tanh();
        self.tape.unary(t, self.index, 1.0 - t * t)
    }

    fn pow2(self) -> Self {
        let x = self.value();
        self.tape.unary(x * x, self.index, 2.0 * x)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        self.tape
            .binary(self.value() + rhs.value(), self.index, rhs.index, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        self.tape
            .binary(self.value() - rhs.value(), self.index, rhs.index, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.check_same(rhs.tape);
        let (a, b) = (self.value(), rhs.value());
        self.tape.binary(a * b, self.index, rhs.index, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    /// Panics on a near-zero denominator; use [`Var::checked_div`] to handle it.
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.checked_div(rhs)
            .expect("division by near-zero denominator")
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(-self.value(), self.index, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, k: f64) -> Var<'t> {
        self.tape.unary(self.value() + k, self.index, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, k: f64) -> Var<'t> {
        self.tape.unary(self.value() - k, self.index, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, k: f64) -> Var<'t> {
        self.tape.unary(self.value() * k, self.index, k)
    }
}

/// Contiguous block of nodes, as produced by the fused vector operations.
#[derive(Clone, Copy)]
pub struct VarVec<'t> {
    tape: &'t Tape,
    start: u32,
    len: u32,
}

impl fmt::Debug for VarVec<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VarVec[{}..{}]", self.start, self.start + self.len)
    }
}

impl<'t> VarVec<'t> {
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Var<'t> {
        assert!(
            i < self.len(),
            "index {i} out of range for VarVec of {}",
            self.len
        );
        Var {
            tape: self.tape,
            index: self.start + i as u32,
        }
    }

    /// Sub-block `[offset, offset + len)`.
    pub fn slice(&self, offset: usize, len: usize) -> VarVec<'t> {
        assert!(offset + len <= self.len(), "slice out of range");
        VarVec {
            tape: self.tape,
            start: self.start + offset as u32,
            len: len as u32,
        }
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        let inner = self.tape.inner.borrow();
        inner.values[self.start as usize..(self.start + self.len) as usize].to_vec()
    }

    pub fn grads(&self) -> Vec<f64> {
        let inner = self.tape.inner.borrow();
        inner.grads[self.start as usize..(self.start + self.len) as usize].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        let y = x.pow2();
        tape.backward(y);
        assert_eq!(x.grad(), 6.0);
    }

    #[test]
    fn tanh_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(0.0);
        tape.backward(x.tanh());
        assert_eq!(x.grad(), 1.0);
    }

    #[test]
    fn sin_of_product_matches_finite_differences() {
        let (a0, b0) = (0.7, 1.3);
        let tape = Tape::new();
        let a = tape.leaf(a0);
        let b = tape.leaf(b0);
        tape.backward((a * b).sin());
        let fd_a = central_diff(|a| (a * b0).sin(), a0, 1e-6);
        let fd_b = central_diff(|b| (a0 * b).sin(), b0, 1e-6);
        assert!((a.grad() - fd_a).abs() / fd_a.abs() < 1e-6);
        assert!((b.grad() - fd_b).abs() / fd_b.abs() < 1e-6);
    }

    #[test]
    fn primitive_partials() {
        let tape = Tape::new();
        let x = tape.leaf(0.4);
        let y = tape.leaf(-1.7);
        let terms = [
            x + y,
            x - y,
            x * y,
            x / y,
            -x,
            x.cos(),
            x.sin(),
            y.tanh(),
            x * 2.5,
            x + 1.0,
            y - 3.0,
        ];
        let loss = tape.sum(&terms);
        tape.backward(loss);
        let (xv, yv) = (0.4f64, -1.7f64);
        let dx = 1.0 + 1.0 + yv + 1.0 / yv - 1.0 - xv.sin() + xv.cos() + 2.5 + 1.0;
        let dy = 1.0 - 1.0 + xv - xv / (yv * yv) + (1.0 - yv.tanh().powi(2)) + 1.0;
        assert!((x.grad() - dx).abs() < 1e-12);
        assert!((y.grad() - dy).abs() < 1e-12);
    }

    #[test]
    fn sum_gives_unit_gradients() {
        let tape = Tape::new();
        let leaves = tape.leaf_vec(&[1.0, -2.0, 3.5, 0.0]);
        let loss = tape.sum(&leaves.vars());
        tape.backward(loss);
        assert_eq!(leaves.grads(), vec![1.0; 4]);
    }

    #[test]
    fn mean_gradient() {
        let tape = Tape::new();
        let leaves = tape.leaf_vec(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let m = tape.mean(&leaves.vars());
        assert_eq!(m.value(), 3.0);
        tape.backward(m);
        assert_eq!(leaves.grads(), vec![0.2; 5]);
    }

    #[test]
    fn repeated_backward_doubles_exactly() {
        let tape = Tape::new();
        let a = tape.leaf(0.3);
        let b = tape.leaf(1.1);
        let y = (a * b).sin() * a + b.pow2();
        tape.backward(y);
        let (ga, gb) = (a.grad(), b.grad());
        tape.backward(y);
        assert_eq!(a.grad(), 2.0 * ga);
        assert_eq!(b.grad(), 2.0 * gb);
        tape.zero_grad();
        assert_eq!(a.grad(), 0.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let k = tape.constant(5.0);
        tape.backward(x * k);
        assert_eq!(x.grad(), 5.0);
        assert_eq!(k.grad(), 0.0);
    }

    #[test]
    fn checked_div_rejects_tiny_denominator() {
        let tape = Tape::new();
        let x = tape.leaf(1.0);
        let z = tape.leaf(1e-301);
        assert!(matches!(x.checked_div(z), Err(Error::DivisionByZero(_))));
        assert!(x.checked_div(tape.leaf(2.0)).is_ok());
    }

    #[test]
    fn matvec_and_maps_match_scalar_graph() {
        let w = [0.2, -0.5, 0.9, 1.3, 0.05, -0.7];
        let xv = [0.4, -1.2];
        let bv = [0.1, 0.0, -0.3];

        let fused = Tape::new();
        let wl = fused.leaf_vec(&w);
        let xl = fused.leaf_vec(&xv);
        let bl = fused.leaf_vec(&bv);
        let h = fused.add_vec(fused.matvec(wl, xl, 3, 2), bl);
        let s = fused.sin_vec(h, 3.0);
        let t = fused.tanh_vec(s);
        let loss = fused.sum(&t.vars());
        fused.backward(loss);

        let scalar = Tape::new();
        let ws: Vec<_> = w.iter().map(|&v| scalar.leaf(v)).collect();
        let xs: Vec<_> = xv.iter().map(|&v| scalar.leaf(v)).collect();
        let bs: Vec<_> = bv.iter().map(|&v| scalar.leaf(v)).collect();
        let mut outs = Vec::new();
        for r in 0..3 {
            let z = ws[2 * r] * xs[0] + ws[2 * r + 1] * xs[1] + bs[r];
            outs.push((z * 3.0).sin().tanh());
        }
        let loss2 = scalar.sum(&outs);
        scalar.backward(loss2);

        assert!((loss.value() - loss2.value()).abs() < 1e-14);
        for (a, b) in wl.grads().iter().zip(&ws) {
            assert!((a - b.grad()).abs() < 1e-13);
        }
        for (a, b) in xl.grads().iter().zip(&xs) {
            assert!((a - b.grad()).abs() < 1e-13);
        }
        for (a, b) in bl.grads().iter().zip(&bs) {
            assert!((a - b.grad()).abs() < 1e-13);
        }
    }

    #[test]
    fn truncate_returns_to_baseline() {
        let tape = Tape::new();
        let params = tape.leaf_vec(&[0.5, 0.25]);
        let base = tape.checkpoint();
        for _ in 0..3 {
            let p = params.get(0) * params.get(1);
            let q = (p + 1.0).sin();
            tape.backward(q);
            assert!(tape.len() > base.nodes());
            tape.truncate(base);
            assert_eq!(tape.len(), base.nodes());
        }
        let g = params.grads();
        assert!((g[0] - 3.0 * 0.25 * (1.125f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn seeded_backward_is_vjp() {
        let tape = Tape::new();
        let x = tape.leaf(0.8);
        let y1 = x.sin();
        let y2 = x.pow2();
        tape.backward_seeded(&[(y1, 2.0), (y2, -0.5)]);
        let expected = 2.0 * 0.8f64.cos() - 0.5 * 1.6;
        assert!((x.grad() - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_graphs_give_identical_gradients() {
        let run = || {
            let tape = Tape::new();
            let a = tape.leaf(0.123);
            let mut acc = a;
            for i in 0..500 {
                acc = (acc * 0.99 + (a * (i as f64)).sin() * 0.01).tanh();
            }
            tape.backward(acc);
            a.grad().to_bits()
        };
        assert_eq!(run(), run());
    }
}
