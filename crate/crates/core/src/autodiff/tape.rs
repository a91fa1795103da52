//! Reverse-mode differentiation on a flat tape.
//!
//! Every primitive records one node holding parent indices and local
//! partials; `backward` runs a single reverse sweep. Nodes only ever
//! reference earlier nodes, so the graph is acyclic by construction and
//! the sweep order is deterministic.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const TWO_OVER_SQRT_PI: f64 = 1.128_379_167_095_512_6;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf,
    Unary { p: u32, d: f64 },
    Binary { p0: u32, p1: u32, d0: f64, d1: f64 },
    /// Plain sum of `n` parents listed in `aux[start..start+n]`.
    Sum { start: u32, n: u32 },
    /// Fixed-coefficient linear combination: parents in `aux`, weights in `aux_coef`.
    LinComb { start: u32, n: u32, coef_start: u32 },
    /// Dot product of two variable vectors, stored as `n` index pairs in `aux`.
    /// The partial w.r.t. one side is the forward value of the other side.
    DotPairs { start: u32, n: u32 },
}

#[derive(Default)]
struct TapeData {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    aux: Vec<u32>,
    aux_coef: Vec<f64>,
}

/// Append-only computation tape. Single-owner: not `Sync`, one tape per
/// optimization step.
#[derive(Default)]
pub struct Tape {
    data: RefCell<TapeData>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a leaf variable (a differentiable input).
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node::Leaf, value);
        Var { tape: self, idx, val: value }
    }

    pub fn len(&self) -> usize {
        self.data.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Clears all nodes while keeping allocations. Requires `&mut self`,
    /// which guarantees no `Var` from a previous step is still alive.
    pub fn reset(&mut self) {
        let data = self.data.get_mut();
        data.nodes.clear();
        data.vals.clear();
        data.aux.clear();
        data.aux_coef.clear();
    }

    fn push(&self, node: Node, val: f64) -> u32 {
        let mut data = self.data.borrow_mut();
        let idx = data.nodes.len() as u32;
        data.nodes.push(node);
        data.vals.push(val);
        idx
    }
}

/// Handle to a tape node. Cheap to copy; the forward value is cached inline.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    pub fn index(self) -> u32 {
        self.idx
    }

    fn unary(self, val: f64, d: f64) -> Var<'t> {
        let idx = self.tape.push(Node::Unary { p: self.idx, d }, val);
        Var { tape: self.tape, idx, val }
    }

    fn binary(self, other: Var<'t>, val: f64, d0: f64, d1: f64) -> Var<'t> {
        let idx = self
            .tape
            .push(Node::Binary { p0: self.idx, p1: other.idx, d0, d1 }, val);
        Var { tape: self.tape, idx, val }
    }

    /// Runs the reverse sweep from this (scalar) node.
    pub fn backward(self) -> Gradients {
        let data = self.tape.data.borrow();
        let n = data.nodes.len();
        let mut grads = vec![0.0f64; n];
        grads[self.idx as usize] = 1.0;
        for i in (0..=self.idx as usize).rev() {
            let g = grads[i];
            if g == 0.0 {
                continue;
            }
            match data.nodes[i] {
                Node::Leaf => {}
                Node::Unary { p, d } => grads[p as usize] += d * g,
                Node::Binary { p0, p1, d0, d1 } => {
                    grads[p0 as usize] += d0 * g;
                    grads[p1 as usize] += d1 * g;
                }
                Node::Sum { start, n } => {
                    for k in start..start + n {
                        grads[data.aux[k as usize] as usize] += g;
                    }
                }
                Node::LinComb { start, n, coef_start } => {
                    for k in 0..n {
                        let p = data.aux[(start + k) as usize] as usize;
                        grads[p] += data.aux_coef[(coef_start + k) as usize] * g;
                    }
                }
                Node::DotPairs { start, n } => {
                    for k in 0..n {
                        let a = data.aux[(start + 2 * k) as usize] as usize;
                        let b = data.aux[(start + 2 * k + 1) as usize] as usize;
                        grads[a] += data.vals[b] * g;
                        grads[b] += data.vals[a] * g;
                    }
                }
            }
        }
        Gradients { grads }
    }
}

/// Gradient of one output w.r.t. every tape node.
pub struct Gradients {
    grads: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.grads[v.idx as usize]
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.val;
        self.binary(rhs, self.val * inv, inv, -self.val * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

/// Scalar abstraction letting numeric kernels run either on plain `f64`
/// (fast value-only path) or on tape variables (differentiable path).
///
/// Non-smooth points (`abs` at 0, `vmax`/`vmin` ties, clamps at the
/// boundary) use the conventional subgradient: the first argument or the
/// active branch wins.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn value(self) -> f64;
    /// Constant on the same tape as `self` (for `f64`, just the constant).
    fn constant_like(self, v: f64) -> Self;
    fn scale(self, c: f64) -> Self;
    fn shift(self, c: f64) -> Self;
    fn recip(self) -> Self;
    fn square(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powi_c(self, k: i32) -> Self;
    fn powf_c(self, p: f64) -> Self;
    fn erf(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn vmax(self, other: Self) -> Self;
    fn vmin(self, other: Self) -> Self;
    fn max_c(self, c: f64) -> Self;
    fn min_c(self, c: f64) -> Self;
    fn sum_of(xs: &[Self]) -> Self;
    fn dot_of(xs: &[Self], ys: &[Self]) -> Self;
    fn lincomb_of(xs: &[Self], coefs: &[f64]) -> Self;

    /// Standard normal CDF via `erf`.
    fn normal_cdf(self) -> Self {
        self.scale(INV_SQRT_2).erf().shift(1.0).scale(0.5)
    }
}

fn softplus_f64(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        libm::exp(x)
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Exact repeated-multiplication integer power, identical on every platform.
fn powi_f64(x: f64, k: i32) -> f64 {
    if k < 0 {
        return 1.0 / powi_f64(x, -k);
    }
    let mut acc = 1.0f64;
    let mut base = x;
    let mut e = k as u32;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn constant_like(self, v: f64) -> Self {
        v
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn shift(self, c: f64) -> Self {
        self + c
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn square(self) -> Self {
        self * self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powi_c(self, k: i32) -> Self {
        powi_f64(self, k)
    }
    fn powf_c(self, p: f64) -> Self {
        libm::pow(self, p)
    }
    fn erf(self) -> Self {
        libm::erf(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    fn vmax(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
    fn vmin(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }
    fn max_c(self, c: f64) -> Self {
        self.vmax(c)
    }
    fn min_c(self, c: f64) -> Self {
        self.vmin(c)
    }
    fn sum_of(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
    fn dot_of(xs: &[Self], ys: &[Self]) -> Self {
        assert_eq!(xs.len(), ys.len());
        xs.iter().zip(ys).map(|(x, y)| x * y).sum()
    }
    fn lincomb_of(xs: &[Self], coefs: &[f64]) -> Self {
        assert_eq!(xs.len(), coefs.len());
        xs.iter().zip(coefs).map(|(x, c)| x * c).sum()
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn constant_like(self, v: f64) -> Self {
        self.tape.var(v)
    }
    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
    fn shift(self, c: f64) -> Self {
        self.unary(self.val + c, 1.0)
    }
    fn recip(self) -> Self {
        let inv = 1.0 / self.val;
        self.unary(inv, -inv * inv)
    }
    fn square(self) -> Self {
        self.unary(self.val * self.val, 2.0 * self.val)
    }
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.val);
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(libm::log(self.val), 1.0 / self.val)
    }
    fn tanh(self) -> Self {
        let t = libm::tanh(self.val);
        self.unary(t, 1.0 - t * t)
    }
    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.val.abs(), d)
    }
    fn powi_c(self, k: i32) -> Self {
        let v = powi_f64(self.val, k);
        let d = f64::from(k) * powi_f64(self.val, k - 1);
        self.unary(v, d)
    }
    fn powf_c(self, p: f64) -> Self {
        let v = libm::pow(self.val, p);
        self.unary(v, p * libm::pow(self.val, p - 1.0))
    }
    fn erf(self) -> Self {
        let v = libm::erf(self.val);
        let d = TWO_OVER_SQRT_PI * libm::exp(-self.val * self.val);
        self.unary(v, d)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }
    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.val), sigmoid_f64(self.val))
    }
    fn vmax(self, other: Self) -> Self {
        if self.val >= other.val {
            self.binary(other, self.val, 1.0, 0.0)
        } else {
            self.binary(other, other.val, 0.0, 1.0)
        }
    }
    fn vmin(self, other: Self) -> Self {
        if self.val <= other.val {
            self.binary(other, self.val, 1.0, 0.0)
        } else {
            self.binary(other, other.val, 0.0, 1.0)
        }
    }
    fn max_c(self, c: f64) -> Self {
        if self.val >= c {
            self.unary(self.val, 1.0)
        } else {
            self.unary(c, 0.0)
        }
    }
    fn min_c(self, c: f64) -> Self {
        if self.val <= c {
            self.unary(self.val, 1.0)
        } else {
            self.unary(c, 0.0)
        }
    }
    fn sum_of(xs: &[Self]) -> Self {
        assert!(!xs.is_empty(), "sum_of needs at least one term");
        let tape = xs[0].tape;
        let mut val = 0.0;
        let (start, n);
        {
            let mut data = tape.data.borrow_mut();
            start = data.aux.len() as u32;
            for x in xs {
                data.aux.push(x.idx);
                val += x.val;
            }
            n = xs.len() as u32;
        }
        let idx = tape.push(Node::Sum { start, n }, val);
        Var { tape, idx, val }
    }
    fn dot_of(xs: &[Self], ys: &[Self]) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(!xs.is_empty(), "dot_of needs at least one term");
        let tape = xs[0].tape;
        let mut val = 0.0;
        let start;
        {
            let mut data = tape.data.borrow_mut();
            start = data.aux.len() as u32;
            for (x, y) in xs.iter().zip(ys) {
                data.aux.push(x.idx);
                data.aux.push(y.idx);
                val += x.val * y.val;
            }
        }
        let idx = tape.push(Node::DotPairs { start, n: xs.len() as u32 }, val);
        Var { tape, idx, val }
    }
    fn lincomb_of(xs: &[Self], coefs: &[f64]) -> Self {
        assert_eq!(xs.len(), coefs.len());
        assert!(!xs.is_empty(), "lincomb_of needs at least one term");
        let tape = xs[0].tape;
        let mut val = 0.0;
        let (start, coef_start);
        {
            let mut data = tape.data.borrow_mut();
            start = data.aux.len() as u32;
            coef_start = data.aux_coef.len() as u32;
            for (x, c) in xs.iter().zip(coefs) {
                data.aux.push(x.idx);
                data.aux_coef.push(*c);
                val += x.val * c;
            }
        }
        let idx = tape.push(
            Node::LinComb { start, n: xs.len() as u32, coef_start },
            val,
        );
        Var { tape, idx, val }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let t = Tape::new();
        let x = t.var(3.0);
        let y = x * x;
        let g = y.backward();
        assert_eq!(g.wrt(x), 6.0);
    }

    #[test]
    fn product_plus_tanh() {
        // f(x,y) = x*y + tanh(x) at (1,2) -> df/dx = y + sech^2(1), df/dy = x
        let t = Tape::new();
        let x = t.var(1.0);
        let y = t.var(2.0);
        let f = x * y + x.tanh();
        let g = f.backward();
        let sech2 = 1.0 - 1.0f64.tanh().powi(2);
        assert!((g.wrt(x) - (2.0 + sech2)).abs() < 1e-15);
        assert!((g.wrt(y) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let t = Tape::new();
        let x = t.var(5.0);
        let c = x.constant_like(7.0);
        let f = x * x + c;
        let g = f.backward();
        assert_eq!(g.wrt(c), 1.0);
        // gradient of f w.r.t. x ignores the constant entirely
        assert_eq!(g.wrt(x), 10.0);
        // gradient of a constant output w.r.t. an input is zero
        let g2 = c.backward();
        assert_eq!(g2.wrt(x), 0.0);
    }

    /// Symbolic-derivative checks for the primitive set on a composite.
    #[test]
    fn primitives_match_symbolic() {
        let t = Tape::new();
        let x = t.var(0.7);
        // f = exp(x)*ln(x) + x^3 / tanh(x) - erf(x) + sqrt(x)
        let f = x.exp() * x.ln() + x.powi_c(3) / x.tanh() - x.erf() + x.sqrt();
        let g = f.backward().wrt(x);
        let xv = 0.7f64;
        let th = xv.tanh();
        let sym = xv.exp() * xv.ln() + xv.exp() / xv
            + (3.0 * xv * xv * th - xv.powi(3) * (1.0 - th * th)) / (th * th)
            - TWO_OVER_SQRT_PI * (-xv * xv).exp()
            + 0.5 / xv.sqrt();
        assert!((g - sym).abs() < 1e-12, "{g} vs {sym}");
    }

    #[test]
    fn nary_ops_match_binary_route() {
        let t = Tape::new();
        let xs: Vec<_> = (0..5).map(|i| t.var(0.3 * f64::from(i) + 0.1)).collect();
        let ws: Vec<_> = (0..5).map(|i| t.var(1.0 - 0.1 * f64::from(i))).collect();
        let dot = Var::dot_of(&xs, &ws);
        let mut ref_dot = xs[0] * ws[0];
        for i in 1..5 {
            ref_dot = ref_dot + xs[i] * ws[i];
        }
        assert!((dot.value() - ref_dot.value()).abs() < 1e-15);
        let g = (dot * dot).backward();
        let gr = (ref_dot * ref_dot).backward();
        for i in 0..5 {
            assert!((g.wrt(xs[i]) - gr.wrt(xs[i])).abs() < 1e-12);
            assert!((g.wrt(ws[i]) - gr.wrt(ws[i])).abs() < 1e-12);
        }

        let sum = Var::sum_of(&xs);
        let gs = sum.backward();
        for x in &xs {
            assert_eq!(gs.wrt(*x), 1.0);
        }

        let coefs = [2.0, -1.0, 0.5, 3.0, 0.0];
        let lc = Var::lincomb_of(&xs, &coefs);
        let gl = lc.backward();
        for (x, c) in xs.iter().zip(coefs) {
            assert_eq!(gl.wrt(*x), c);
        }
    }

    #[test]
    fn select_ops_route_gradient_to_winner() {
        let t = Tape::new();
        let a = t.var(2.0);
        let b = t.var(5.0);
        let m = a.vmax(b);
        assert_eq!(m.value(), 5.0);
        let g = m.backward();
        assert_eq!(g.wrt(a), 0.0);
        assert_eq!(g.wrt(b), 1.0);

        let c = a.min_c(1.5);
        assert_eq!(c.value(), 1.5);
        assert_eq!(c.backward().wrt(a), 0.0);
    }

    #[test]
    fn same_inputs_same_bits() {
        let run = || {
            let t = Tape::new();
            let x = t.var(1.234_567_89);
            let y = t.var(-0.987_654_321);
            let f = (x * y).exp() + x.sigmoid() * y.softplus();
            let g = f.backward();
            (f.value(), g.wrt(x), g.wrt(y))
        };
        let a = run();
        let b = run();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert_eq!(a.2.to_bits(), b.2.to_bits());
    }
}
