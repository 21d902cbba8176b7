//! Reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every primitive appends one node holding its output value and the handles of
//! its inputs. [`Tape::backward`] walks the nodes in exact reverse order and
//! accumulates adjoints, so a leaf used several times receives the sum of all
//! its contributions.

use crate::error::{Result, SneError};
use crate::numerics::tensor::Tensor2;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a (m×n) + b (m×1)` broadcast over columns.
    AddColumn(Var, Var),
    /// `a (m×n) ⊙ b (1×n)` broadcast over rows.
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Binarize(Var),
    Min(Var, Var),
    /// Euclidean norm of each column, giving a 1×n row.
    ColNorm(Var),
    Sum(Var),
    SumSquares(Var),
}

struct Node {
    value: Tensor2,
    op: Op,
}

/// Ordered record of primitive applications.
///
/// Single-owner; data-parallel work uses one tape per worker and sums the
/// resulting gradients afterwards.
pub struct Tape {
    nodes: Vec<Node>,
    straight_through: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Threshold of the hard binarizer: `1` when the input is at least this value.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), straight_through: true }
    }

    /// Controls the backward rule of [`Tape::binarize`]. With `true` (default) the
    /// upstream gradient passes through unchanged; with `false` the binarizer
    /// contributes its true almost-everywhere derivative, zero.
    pub fn set_straight_through(&mut self, enabled: bool) {
        self.straight_through = enabled;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Handles to dropped nodes
    /// become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "min", f64::min)?;
        Ok(self.push(out, Op::Min(a, b)))
    }

    pub fn add_column(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(bias) != (m, 1) {
            return Err(SneError::shape("add_column", (m, n), self.shape(bias)));
        }
        let b = self.value(bias);
        let out = Tensor2::from_fn(m, n, |r, c| self.value(a).get(r, c) + b.get(r, 0));
        Ok(self.push(out, Op::AddColumn(a, bias)))
    }

    pub fn mul_row(&mut self, a: Var, gate: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(gate) != (1, n) {
            return Err(SneError::shape("mul_row", (m, n), self.shape(gate)));
        }
        let g = self.value(gate);
        let out = Tensor2::from_fn(m, n, |r, c| self.value(a).get(r, c) * g.get(0, c));
        Ok(self.push(out, Op::MulRow(a, gate)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v + s);
        self.push(out, Op::AddScalar(a))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        if !self.value(a).is_finite() {
            return Err(SneError::NonFinite("activation"));
        }
        Ok(match kind {
            Activation::Identity => a,
            Activation::Sigmoid => {
                let out = self.value(a).map(sigmoid);
                self.push(out, Op::Sigmoid(a))
            }
            Activation::Tanh => {
                let out = self.value(a).map(f64::tanh);
                self.push(out, Op::Tanh(a))
            }
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Tanh)
    }

    /// Hard `{0, 1}` binarizer with a straight-through backward rule.
    pub fn binarize(&mut self, a: Var) -> Var {
        let out = self.value(a).map(binarize);
        self.push(out, Op::Binarize(a))
    }

    pub fn col_norm(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor2::from_fn(1, t.cols(), |_, c| (0..t.rows()).map(|r| t.get(r, c).powi(2)).sum::<f64>().sqrt());
        self.push(out, Op::ColNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor2::filled(1, 1, self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|v| v * v).sum();
        self.push(Tensor2::filled(1, 1, s), Op::SumSquares(a))
    }

    /// Adds a list of equally shaped values left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) =
            terms.split_first().ok_or_else(|| SneError::Parameter("add_all needs at least one term".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Reverse sweep from a scalar output. Does not mutate the tape, so repeated
    /// calls return identical gradients.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(SneError::shape("backward", self.shape(output), (1, 1)));
        }
        let mut adj: Vec<Option<Tensor2>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor2::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(b));
                    let gb = self.value(a).matmul_at(&g);
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, a, g.clone());
                    accumulate(&mut adj, b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, b, g.scale(-1.0));
                    accumulate(&mut adj, a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = zip(&g, self.value(b), |x, y| x * y);
                    let gb = zip(&g, self.value(a), |x, y| x * y);
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::AddColumn(a, b) => {
                    let gb = Tensor2::from_fn(g.rows(), 1, |r, _| (0..g.cols()).map(|c| g.get(r, c)).sum());
                    accumulate(&mut adj, b, gb);
                    accumulate(&mut adj, a, g.clone());
                }
                Op::MulRow(a, gate) => {
                    let av = self.value(a);
                    let gv = self.value(gate);
                    let ga = Tensor2::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * gv.get(0, c));
                    let gg =
                        Tensor2::from_fn(1, g.cols(), |_, c| (0..g.rows()).map(|r| g.get(r, c) * av.get(r, c)).sum());
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, gate, gg);
                }
                Op::Scale(a, s) => accumulate(&mut adj, a, g.scale(s)),
                Op::AddScalar(a) => accumulate(&mut adj, a, g.clone()),
                Op::Sigmoid(a) => {
                    let ga = zip(&g, &node.value, |x, s| x * s * (1.0 - s));
                    accumulate(&mut adj, a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip(&g, &node.value, |x, t| x * (1.0 - t * t));
                    accumulate(&mut adj, a, ga);
                }
                Op::Binarize(a) => {
                    if self.straight_through {
                        accumulate(&mut adj, a, g.clone());
                    }
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(a), self.value(b));
                    let ga = Tensor2::from_fn(g.rows(), g.cols(), |r, c| {
                        if av.get(r, c) <= bv.get(r, c) {
                            g.get(r, c)
                        } else {
                            0.0
                        }
                    });
                    let gb = Tensor2::from_fn(g.rows(), g.cols(), |r, c| {
                        if av.get(r, c) <= bv.get(r, c) {
                            0.0
                        } else {
                            g.get(r, c)
                        }
                    });
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::ColNorm(a) => {
                    let av = self.value(a);
                    let ga = Tensor2::from_fn(av.rows(), av.cols(), |r, c| {
                        let n = node.value.get(0, c);
                        if n > 0.0 {
                            g.get(0, c) * av.get(r, c) / n
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adj, a, ga);
                }
                Op::Sum(a) => {
                    let (m, n) = self.shape(a);
                    accumulate(&mut adj, a, Tensor2::filled(m, n, g.get(0, 0)));
                }
                Op::SumSquares(a) => {
                    let s = 2.0 * g.get(0, 0);
                    accumulate(&mut adj, a, self.value(a).scale(s));
                }
            }
            if matches!(node.op, Op::Leaf) {
                adj[idx] = Some(g);
            }
        }
        Ok(Gradients { adj })
    }
}

fn zip(a: &Tensor2, b: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
    Tensor2::from_fn(a.rows(), a.cols(), |r, c| f(a.get(r, c), b.get(r, c)))
}

fn accumulate(adj: &mut [Option<Tensor2>], v: Var, g: Tensor2) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn binarize(v: f64) -> f64 {
    if v >= BINARIZE_THRESHOLD {
        1.0
    } else {
        0.0
    }
}

/// Adjoints of leaf values after a backward sweep.
pub struct Gradients {
    adj: Vec<Option<Tensor2>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.adj.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, materializing zeros when it is unused.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor2 {
        self.get(v).cloned().unwrap_or_else(|| Tensor2::zeros(shape.0, shape.1))
    }
}
