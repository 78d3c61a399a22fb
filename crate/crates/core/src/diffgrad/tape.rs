//! Reverse-mode differentiation over a flat tape of matrix operations.
//!
//! Shape mismatches between operands are programming errors and panic, the
//! way `ndarray` does. Fallible entry points (network forward passes, loss
//! construction) validate their inputs before reaching the tape.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::nn::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Elu(Var),
    Softplus(Var),
    Tanh(Var),
    Clamp(Var, T, T),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    LogSumExpRows(Var),
    LogSoftmaxRows(Var),
    Pick(Var, Vec<usize>),
    Cols(Var, usize),
    Diag(Var),
    GaussDiag { z: Var, mean: Var, logvar: Var, paired: bool },
    GaussTril { z: Var, mean: Var, raw: Var, paired: bool },
    TrilMul { raw: Var, eps: Var },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op<T>,
}

/// A single-owner computation graph.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(ParamId, Var)>,
}

/// Number of free entries in a D×D lower triangle.
pub fn tril_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Inverse of [`tril_len`]; `None` when `t` is not triangular.
pub fn tril_dim(t: usize) -> Option<usize> {
    let d = ((((8 * t + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (tril_len(d) == t).then_some(d)
}

#[inline]
fn tri(r: usize, c: usize) -> usize {
    r * (r + 1) / 2 + c
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::of(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Dense lower-triangular factor from an unconstrained row with softplus diagonal.
pub fn tril_factor<T: Scalar>(raw: &[T], d: usize) -> Vec<T> {
    let mut l = vec![T::zero(); d * d];
    for r in 0..d {
        for c in 0..r {
            l[r * d + c] = raw[tri(r, c)];
        }
        l[r * d + r] = softplus(raw[tri(r, r)]);
    }
    l
}

/// Solves L v = b for lower-triangular dense `l`.
fn forward_sub<T: Scalar>(l: &[T], b: &[T], d: usize) -> Vec<T> {
    let mut v = vec![T::zero(); d];
    for a in 0..d {
        let mut s = b[a];
        for c in 0..a {
            s -= l[a * d + c] * v[c];
        }
        v[a] = s / l[a * d + a];
    }
    v
}

/// Solves Lᵀ w = v.
fn backward_sub<T: Scalar>(l: &[T], v: &[T], d: usize) -> Vec<T> {
    let mut w = vec![T::zero(); d];
    for a in (0..d).rev() {
        let mut s = v[a];
        for r in a + 1..d {
            s -= l[r * d + a] * w[r];
        }
        w[a] = s / l[a * d + a];
    }
    w
}

fn half_log_2pi<T: Scalar>() -> T {
    T::of(0.5 * (2.0 * PI).ln())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// A leaf that is not tied to any parameter.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds parameter `id` of `store` as a leaf; repeated calls reuse the leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.constant(store.get(id).clone());
        self.params.push((id, v));
        v
    }

    /// Gradients of every bound parameter after [`Tape::backward`]; zeros for
    /// parameters the loss does not reach.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        self.params
            .iter()
            .map(|&(id, v)| {
                let g = self.grad(v).cloned().unwrap_or_else(|| {
                    let (r, c) = self.value(v).shape();
                    Tensor::zeros(r, c)
                });
                (id, g)
            })
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// `a` (n×m) plus the row vector `b` (1×m) on every row.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(bv.rows() == 1 && bv.cols() == av.cols(), "add_row shape mismatch");
        let v = Tensor::from_fn(av.rows(), av.cols(), |r, c| av.get(r, c) + bv.get(0, c));
        self.push(v, Op::AddRow(a, b))
    }

    /// `a` (n×m) plus the column vector `b` (n×1) on every column.
    pub fn add_col(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(bv.cols() == 1 && bv.rows() == av.rows(), "add_col shape mismatch");
        let v = Tensor::from_fn(av.rows(), av.cols(), |r, c| av.get(r, c) + bv.get(r, 0));
        self.push(v, Op::AddCol(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn offset(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::Offset(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::ln);
        self.push(v, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { x.exp_m1() });
        self.push(v, Op::Elu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let v = self.value(a).map(|x| x.max(lo).min(hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = T::of((t.rows() * t.cols()) as f64);
        let v = Tensor::scalar(t.sum() / n);
        self.push(v, Op::Mean(a))
    }

    /// Row sums, n×m → n×1.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::from_fn(t.rows(), 1, |r, _| t.row(r).iter().copied().sum());
        self.push(v, Op::SumRows(a))
    }

    /// Row-wise log-sum-exp, n×m → n×1.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::from_fn(t.rows(), 1, |r, _| crate::scalar::log_sum_exp(t.row(r)));
        self.push(v, Op::LogSumExpRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let lse: Vec<T> = (0..t.rows())
            .map(|r| crate::scalar::log_sum_exp(t.row(r)))
            .collect();
        let v = Tensor::from_fn(t.rows(), t.cols(), |r, c| t.get(r, c) - lse[r]);
        self.push(v, Op::LogSoftmaxRows(a))
    }

    /// Entry `idx[r]` of every row r, n×m → n×1.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), idx.len(), "pick index count mismatch");
        let v = Tensor::from_fn(t.rows(), 1, |r, _| t.get(r, idx[r]));
        self.push(v, Op::Pick(a, idx.to_vec()))
    }

    /// Columns `start..start + len`.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols(), "column slice out of range");
        let v = Tensor::from_fn(t.rows(), len, |r, c| t.get(r, start + c));
        self.push(v, Op::Cols(a, start))
    }

    /// Diagonal of a square matrix as a column.
    pub fn diag(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), t.cols(), "diag of a non-square matrix");
        let v = Tensor::from_fn(t.rows(), 1, |r, _| t.get(r, r));
        self.push(v, Op::Diag(a))
    }

    /// Diagonal Gaussian log-densities.
    ///
    /// `z` is N×D, `mean` and `logvar` are M×D. With `paired` (N = M) the
    /// result is N×1 holding log N(z_i; μ_i, σ_i²); otherwise it is N×M with
    /// entry (i, k) = log N(z_i; μ_k, σ_k²).
    pub fn gauss_diag(&mut self, z: Var, mean: Var, logvar: Var, paired: bool) -> Var {
        let (zt, mt, lt) = (self.value(z), self.value(mean), self.value(logvar));
        let d = zt.cols();
        assert!(mt.cols() == d && lt.shape() == mt.shape(), "gauss_diag shape mismatch");
        assert!(!paired || zt.rows() == mt.rows(), "paired gauss_diag needs N = M");
        let c = half_log_2pi::<T>() * T::of(d as f64);
        let lp = |i: usize, k: usize| {
            let mut q = T::zero();
            for j in 0..d {
                let diff = zt.get(i, j) - mt.get(k, j);
                let lv = lt.get(k, j);
                q += diff * diff * (-lv).exp() + lv;
            }
            -T::of(0.5) * q - c
        };
        let v = if paired {
            Tensor::from_fn(zt.rows(), 1, |i, _| lp(i, i))
        } else {
            Tensor::from_fn(zt.rows(), mt.rows(), lp)
        };
        self.push(
            v,
            Op::GaussDiag {
                z,
                mean,
                logvar,
                paired,
            },
        )
    }

    /// Full-covariance Gaussian log-densities with Cholesky factors built by
    /// [`tril_factor`] from the rows of `raw` (M×D(D+1)/2). Shapes and
    /// `paired` behave as in [`Tape::gauss_diag`].
    pub fn gauss_tril(&mut self, z: Var, mean: Var, raw: Var, paired: bool) -> Var {
        let (zt, mt, rt) = (self.value(z), self.value(mean), self.value(raw));
        let d = zt.cols();
        assert!(
            mt.cols() == d && rt.rows() == mt.rows() && rt.cols() == tril_len(d),
            "gauss_tril shape mismatch"
        );
        assert!(!paired || zt.rows() == mt.rows(), "paired gauss_tril needs N = M");
        let factors: Vec<Vec<T>> = (0..mt.rows()).map(|k| tril_factor(rt.row(k), d)).collect();
        let c = half_log_2pi::<T>() * T::of(d as f64);
        let lp = |i: usize, k: usize| {
            let l = &factors[k];
            let r: Vec<T> = (0..d).map(|j| zt.get(i, j) - mt.get(k, j)).collect();
            let v = forward_sub(l, &r, d);
            let quad: T = v.iter().map(|&x| x * x).sum();
            let logdet: T = (0..d).map(|j| l[j * d + j].ln()).sum();
            -T::of(0.5) * quad - logdet - c
        };
        let v = if paired {
            Tensor::from_fn(zt.rows(), 1, |i, _| lp(i, i))
        } else {
            Tensor::from_fn(zt.rows(), mt.rows(), lp)
        };
        self.push(
            v,
            Op::GaussTril {
                z,
                mean,
                raw,
                paired,
            },
        )
    }

    /// Row-wise L_i ε_i with L_i from [`tril_factor`].
    pub fn tril_mul(&mut self, raw: Var, eps: Var) -> Var {
        let (rt, et) = (self.value(raw), self.value(eps));
        let d = et.cols();
        assert!(rt.rows() == et.rows() && rt.cols() == tril_len(d), "tril_mul shape mismatch");
        let mut v = Tensor::zeros(et.rows(), d);
        for i in 0..et.rows() {
            let l = tril_factor(rt.row(i), d);
            for a in 0..d {
                let mut s = T::zero();
                for b in 0..=a {
                    s += l[a * d + b] * et.get(i, b);
                }
                v.set(i, a, s);
            }
        }
        self.push(v, Op::TrilMul { raw, eps })
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        match &mut self.nodes[v.0].grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Populates gradients of the scalar `loss` for every node it reaches.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.nodes[idx].grad.clone() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.backprop(idx, op, g);
        }
        Ok(())
    }

    fn backprop(&mut self, idx: usize, op: Op<T>, g: Tensor<T>) {
        let out = self.nodes[idx].value.clone();
        let out = &out;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul(&self.value(b).transpose());
                let gb = self.value(a).transpose().matmul(&g);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(b, g.map(|x| -x));
                self.accumulate(a, g);
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(self.value(b), |x, y| x * y);
                let gb = g.zip_map(self.value(a), |x, y| x * y);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::AddRow(a, b) => {
                let gb = Tensor::from_fn(1, g.cols(), |_, c| {
                    (0..g.rows()).map(|r| g.get(r, c)).sum()
                });
                self.accumulate(a, g);
                self.accumulate(b, gb);
            }
            Op::AddCol(a, b) => {
                let gb = Tensor::from_fn(g.rows(), 1, |r, _| g.row(r).iter().copied().sum());
                self.accumulate(a, g);
                self.accumulate(b, gb);
            }
            Op::Scale(a, s) => self.accumulate(a, g.map(|x| x * s)),
            Op::Offset(a) => self.accumulate(a, g),
            Op::Exp(a) => {
                let ga = g.zip_map(out, |x, y| x * y);
                self.accumulate(a, ga);
            }
            Op::Log(a) => {
                let ga = g.zip_map(self.value(a), |x, y| x / y);
                self.accumulate(a, ga);
            }
            Op::Square(a) => {
                let ga = g.zip_map(self.value(a), |x, y| T::of(2.0) * x * y);
                self.accumulate(a, ga);
            }
            Op::Elu(a) => {
                let inp = self.value(a);
                let ga = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                    let d = if inp.get(r, c) > T::zero() {
                        T::one()
                    } else {
                        out.get(r, c) + T::one()
                    };
                    g.get(r, c) * d
                });
                self.accumulate(a, ga);
            }
            Op::Softplus(a) => {
                let ga = g.zip_map(self.value(a), |x, y| x * sigmoid(y));
                self.accumulate(a, ga);
            }
            Op::Tanh(a) => {
                let ga = g.zip_map(out, |x, y| x * (T::one() - y * y));
                self.accumulate(a, ga);
            }
            Op::Clamp(a, lo, hi) => {
                let ga = g.zip_map(self.value(a), |x, y| {
                    if y < lo || y > hi {
                        T::zero()
                    } else {
                        x
                    }
                });
                self.accumulate(a, ga);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(a, Tensor::filled(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(a).shape();
                let n = T::of((r * c) as f64);
                self.accumulate(a, Tensor::filled(r, c, g.data()[0] / n));
            }
            Op::SumRows(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(a, Tensor::from_fn(r, c, |i, _| g.get(i, 0)));
            }
            Op::LogSumExpRows(a) => {
                let inp = self.value(a);
                let ga = Tensor::from_fn(inp.rows(), inp.cols(), |r, c| {
                    g.get(r, 0) * (inp.get(r, c) - out.get(r, 0)).exp()
                });
                self.accumulate(a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let ga = Tensor::from_fn(g.rows(), g.cols(), |r, c| {
                    let total: T = g.row(r).iter().copied().sum();
                    g.get(r, c) - out.get(r, c).exp() * total
                });
                self.accumulate(a, ga);
            }
            Op::Pick(a, idx) => {
                let (r, c) = self.value(a).shape();
                let mut ga = Tensor::zeros(r, c);
                for (i, &j) in idx.iter().enumerate() {
                    ga.set(i, j, g.get(i, 0));
                }
                self.accumulate(a, ga);
            }
            Op::Cols(a, start) => {
                let (r, c) = self.value(a).shape();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        ga.set(i, start + j, g.get(i, j));
                    }
                }
                self.accumulate(a, ga);
            }
            Op::Diag(a) => {
                let (r, c) = self.value(a).shape();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.set(i, i, g.get(i, 0));
                }
                self.accumulate(a, ga);
            }
            Op::GaussDiag {
                z,
                mean,
                logvar,
                paired,
            } => {
                let (zt, mt, lt) = (self.value(z), self.value(mean), self.value(logvar));
                let (n, m, d) = (zt.rows(), mt.rows(), zt.cols());
                let mut gz = Tensor::zeros(n, d);
                let mut gm = Tensor::zeros(m, d);
                let mut gl = Tensor::zeros(m, d);
                let half = T::of(0.5);
                let mut visit = |i: usize, k: usize, gik: T| {
                    for j in 0..d {
                        let prec = (-lt.get(k, j)).exp();
                        let diff = zt.get(i, j) - mt.get(k, j);
                        let t = gik * diff * prec;
                        gz.data_mut()[i * d + j] -= t;
                        gm.data_mut()[k * d + j] += t;
                        gl.data_mut()[k * d + j] += gik * half * (diff * diff * prec - T::one());
                    }
                };
                if paired {
                    for i in 0..n {
                        visit(i, i, g.get(i, 0));
                    }
                } else {
                    for i in 0..n {
                        for k in 0..m {
                            visit(i, k, g.get(i, k));
                        }
                    }
                }
                self.accumulate(z, gz);
                self.accumulate(mean, gm);
                self.accumulate(logvar, gl);
            }
            Op::GaussTril {
                z,
                mean,
                raw,
                paired,
            } => {
                let (zt, mt, rt) = (self.value(z), self.value(mean), self.value(raw));
                let (n, m, d) = (zt.rows(), mt.rows(), zt.cols());
                let factors: Vec<Vec<T>> = (0..m).map(|k| tril_factor(rt.row(k), d)).collect();
                let mut gz = Tensor::zeros(n, d);
                let mut gm = Tensor::zeros(m, d);
                // Gradient w.r.t. the dense factor, converted to raw afterwards.
                let mut gfactor = vec![vec![T::zero(); d * d]; m];
                let mut visit = |i: usize, k: usize, gik: T| {
                    let l = &factors[k];
                    let r: Vec<T> = (0..d).map(|j| zt.get(i, j) - mt.get(k, j)).collect();
                    let v = forward_sub(l, &r, d);
                    let w = backward_sub(l, &v, d);
                    for a in 0..d {
                        gz.data_mut()[i * d + a] -= gik * w[a];
                        gm.data_mut()[k * d + a] += gik * w[a];
                        for b in 0..=a {
                            gfactor[k][a * d + b] += gik * w[a] * v[b];
                        }
                        gfactor[k][a * d + a] -= gik / l[a * d + a];
                    }
                };
                if paired {
                    for i in 0..n {
                        visit(i, i, g.get(i, 0));
                    }
                } else {
                    for i in 0..n {
                        for k in 0..m {
                            visit(i, k, g.get(i, k));
                        }
                    }
                }
                let graw = raw_grad(rt, &gfactor, d);
                self.accumulate(z, gz);
                self.accumulate(mean, gm);
                self.accumulate(raw, graw);
            }
            Op::TrilMul { raw, eps } => {
                let (rt, et) = (self.value(raw), self.value(eps));
                let d = et.cols();
                let mut geps = Tensor::zeros(et.rows(), d);
                let mut gfactor = Vec::with_capacity(et.rows());
                for i in 0..et.rows() {
                    let l = tril_factor(rt.row(i), d);
                    let mut gl = vec![T::zero(); d * d];
                    for a in 0..d {
                        for b in 0..=a {
                            gl[a * d + b] = g.get(i, a) * et.get(i, b);
                            geps.data_mut()[i * d + b] += l[a * d + b] * g.get(i, a);
                        }
                    }
                    gfactor.push(gl);
                }
                let graw = raw_grad(rt, &gfactor, d);
                self.accumulate(raw, graw);
                self.accumulate(eps, geps);
            }
        }
    }
}

/// Chain rule from dense-factor gradients to the unconstrained rows.
fn raw_grad<T: Scalar>(raw: &Tensor<T>, gfactor: &[Vec<T>], d: usize) -> Tensor<T> {
    let mut graw = Tensor::zeros(raw.rows(), raw.cols());
    for (k, gl) in gfactor.iter().enumerate() {
        for a in 0..d {
            for b in 0..a {
                graw.set(k, tri(a, b), gl[a * d + b]);
            }
            let s = sigmoid(raw.get(k, tri(a, a)));
            graw.set(k, tri(a, a), gl[a * d + a] * s);
        }
    }
    graw
}
