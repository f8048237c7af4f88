//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it executes. Nodes are appended in
//! evaluation order, so the node list is already a topological order and the
//! backward pass is a single reverse sweep that visits each node once.
//!
//! Inputs are either parameters (gradients wanted) or constants (graph
//! operators, data). Gradients are never propagated into constants, which
//! matters for `Â · X` products where `Â` is large and fixed.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `a` (r×c) plus row vector `b` (1×c) broadcast over rows.
    AddBias(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Scale(Var, f64),
    Concat(Var, Var),
    Mean(Vec<Var>),
    /// `Σ |a_ij|` as a 1×1 matrix.
    L1(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints from one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` when the node does not depend on any parameter or was not
    /// reached from the output.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.adjoints.get_mut(v.0).and_then(|g| g.take())
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Param, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(bias);
        assert_eq!(bv.rows(), 1, "bias must be a row vector");
        assert_eq!(bv.cols(), av.cols(), "bias width mismatch");
        let mut value = av.clone();
        for i in 0..value.rows() {
            for (x, b) in value.row_mut(i).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        self.push(value, Op::AddBias(a, bias), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).hadamard(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(value, Op::Tanh(a), ng)
    }

    /// `1 − a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| 1.0 - x);
        let ng = self.ng(a);
        self.push(value, Op::OneMinus(a), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    /// Column concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).hcat(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Concat(a, b), ng)
    }

    /// Elementwise arithmetic mean of equally shaped nodes.
    ///
    /// Accumulated as a running mean, so `n` identical inputs give that
    /// input back bit for bit.
    pub fn mean(&mut self, items: &[Var]) -> Var {
        assert!(!items.is_empty(), "mean of an empty list");
        let mut value = self.value(items[0]).clone();
        for (k, &v) in items.iter().enumerate().skip(1) {
            let w = 1.0 / (k + 1) as f64;
            let next = self.value(v);
            for (m, a) in value.data_mut().iter_mut().zip(next.data()) {
                *m += (a - *m) * w;
            }
        }
        let ng = items.iter().any(|&v| self.ng(v));
        self.push(value, Op::Mean(items.to_vec()), ng)
    }

    /// `Σ |a_ij|` as a scalar node.
    pub fn l1(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).l1_norm());
        let ng = self.ng(a);
        self.push(value, Op::L1(a), ng)
    }

    /// Reverse sweep from a scalar (1×1) output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Param | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        let da = g.matmul_t(self.value(*b));
                        accumulate(&mut adj, *a, da);
                    }
                    if self.ng(*b) {
                        let db = self.value(*a).t_matmul(&g);
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    self.pass(&mut adj, *a, &g, 1.0);
                    self.pass(&mut adj, *b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    self.pass(&mut adj, *a, &g, 1.0);
                    self.pass(&mut adj, *b, &g, -1.0);
                }
                Op::AddBias(a, bias) => {
                    self.pass(&mut adj, *a, &g, 1.0);
                    if self.ng(*bias) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            for (d, x) in db.data_mut().iter_mut().zip(g.row(i)) {
                                *d += x;
                            }
                        }
                        accumulate(&mut adj, *bias, db);
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut adj, *a, g.hadamard(self.value(*b)));
                    }
                    if self.ng(*b) {
                        accumulate(&mut adj, *b, g.hadamard(self.value(*a)));
                    }
                }
                Op::Sigmoid(a) => {
                    if self.ng(*a) {
                        let d = g.zip_map(&node.value, |g, y| g * y * (1.0 - y));
                        accumulate(&mut adj, *a, d);
                    }
                }
                Op::Tanh(a) => {
                    if self.ng(*a) {
                        let d = g.zip_map(&node.value, |g, y| g * (1.0 - y * y));
                        accumulate(&mut adj, *a, d);
                    }
                }
                Op::OneMinus(a) => self.pass(&mut adj, *a, &g, -1.0),
                Op::Scale(a, c) => self.pass(&mut adj, *a, &g, *c),
                Op::Concat(a, b) => {
                    let split = self.value(*a).cols();
                    if self.ng(*a) {
                        accumulate(&mut adj, *a, g.col_slice(0, split));
                    }
                    if self.ng(*b) {
                        accumulate(&mut adj, *b, g.col_slice(split, g.cols()));
                    }
                }
                Op::Mean(items) => {
                    let w = 1.0 / items.len() as f64;
                    for v in items {
                        self.pass(&mut adj, *v, &g, w);
                    }
                }
                Op::L1(a) => {
                    if self.ng(*a) {
                        let s = g[(0, 0)];
                        let d = self.value(*a).map(|x| {
                            if x > 0.0 {
                                s
                            } else if x < 0.0 {
                                -s
                            } else {
                                0.0
                            }
                        });
                        accumulate(&mut adj, *a, d);
                    }
                }
            }
            if matches!(node.op, Op::Param) {
                adj[idx] = Some(g);
            }
        }
        Ok(Gradients { adjoints: adj })
    }

    fn pass(&self, adj: &mut [Option<Matrix>], v: Var, g: &Matrix, c: f64) {
        if !self.ng(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(existing) => existing.axpy(c, g),
            slot @ None => *slot = Some(if c == 1.0 { g.clone() } else { g.scale(c) }),
        }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Compares tape gradients with central finite differences.
///
/// `f` records a scalar function of `params` on the given tape. Returns the
/// maximum over all parameter entries of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Matrix], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if !(eps > 0.0) {
        return Err(Error::Argument(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars);
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "gradient check needs a scalar function, got shape {:?}",
                v.shape()
            )));
        }
        Ok(v[(0, 0)])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let zero = Matrix::zeros(params[pi].rows(), params[pi].cols());
        let analytic = grads.get(*var).unwrap_or(&zero).clone();
        for k in 0..params[pi].data().len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic.data()[k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn rand_matrix(rng: &mut SeededRng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.uniform_range(-1.0, 1.0))
    }

    fn sum_all(t: &mut Tape, v: Var) -> Var {
        // Σ x = Σ |x + 10| − 10·n for |x| < 10; keeps the kink far away.
        let shape = t.value(v).shape();
        let shift = t.constant(Matrix::filled(shape.0, shape.1, 10.0));
        let s = t.add(v, shift);
        t.l1(s)
    }

    #[test]
    fn square_at_three() {
        let f = |t: &mut Tape, p: &[Var]| t.mul(p[0], p[0]);
        let mut tape = Tape::new();
        let x = tape.param(Matrix::filled(1, 1, 3.0));
        let y = f(&mut tape, &[x]);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap()[(0, 0)], 6.0);
        let err = grad_check(f, &[Matrix::filled(1, 1, 3.0)], 1e-5).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let f = |t: &mut Tape, _p: &[Var]| t.constant(Matrix::filled(1, 1, 4.0));
        let mut tape = Tape::new();
        let x = tape.param(Matrix::filled(2, 2, 1.0));
        let y = f(&mut tape, &[x]);
        let g = tape.backward(y).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(
            grad_check(f, &[Matrix::filled(2, 2, 1.0)], 1e-5).unwrap(),
            0.0
        );
    }

    #[test]
    fn non_scalar_output_is_contract_error() {
        let f = |t: &mut Tape, p: &[Var]| t.scale(p[0], 2.0);
        assert!(matches!(
            grad_check(f, &[Matrix::zeros(2, 1)], 1e-5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = SeededRng::new(11);
        let a = rand_matrix(&mut rng, 3, 4);
        let b = rand_matrix(&mut rng, 4, 2);
        let c = rand_matrix(&mut rng, 3, 2);
        let bias = rand_matrix(&mut rng, 1, 2);
        let f = |t: &mut Tape, p: &[Var]| {
            let ab = t.matmul(p[0], p[1]);
            let s = t.add(ab, p[2]);
            let d = t.sub(s, p[2]);
            let e = t.add_bias(d, p[3]);
            let sg = t.sigmoid(e);
            let th = t.tanh(p[2]);
            let m = t.mul(sg, th);
            let om = t.one_minus(m);
            let sc = t.scale(om, 0.7);
            let cat = t.concat(sc, p[2]);
            let swapped = sc_pad(t, sc, p[2]);
            let mean = t.mean(&[cat, cat, swapped]);
            let out = sum_all(t, mean);
            let l = t.l1(p[2]);
            t.add(out, l)
        };
        fn sc_pad(t: &mut Tape, a: Var, b: Var) -> Var {
            t.concat(b, a)
        }
        let err = grad_check(f, &[a, b, c, bias], 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn backward_skips_constants() {
        let mut tape = Tape::new();
        let k = tape.constant(Matrix::identity(2));
        let x = tape.param(Matrix::filled(2, 1, 1.0));
        let y = tape.matmul(k, x);
        let s = tape.l1(y);
        let g = tape.backward(s).unwrap();
        assert!(g.get(k).is_none());
        assert_eq!(g.get(x).unwrap(), &Matrix::filled(2, 1, 1.0));
    }
}
