//! Second-order forward jets.
//!
//! A [`Jet2`] carries a value together with its gradient and Hessian with
//! respect to the chart coordinates. Arithmetic propagates all three exactly,
//! so evaluating a metric expression on jets yields `g`, `∂g` and `∂²g` in a
//! single pass.

use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

/// Largest chart dimension supported by the fixed-size jet storage.
pub const MAX_DIM: usize = 6;

const HESS_LEN: usize = MAX_DIM * (MAX_DIM + 1) / 2;

#[inline]
const fn tri(i: usize, j: usize) -> usize {
    // packed upper triangle, row-major, i <= j
    i * (2 * MAX_DIM - i + 1) / 2 + (j - i)
}

/// Scalar types the expression evaluator can run on.
///
/// Partial operations (`recip`, `ln`, `sqrt`) are only called after the
/// evaluator has checked the domain on [`Scalar::value`].
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64, dim: usize) -> Self;
    fn value(&self) -> f64;
    /// True when the scalar carries derivative information, in which case
    /// `sqrt` at zero is not admissible.
    fn is_jet() -> bool;
    fn recip(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64, _dim: usize) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    fn is_jet() -> bool {
        false
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        powi_f64(self, n)
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn tan(self) -> Self {
        libm::tan(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn sinh(self) -> Self {
        libm::sinh(self)
    }
    fn cosh(self) -> Self {
        libm::cosh(self)
    }
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
}

/// Integer power by repeated squaring.
pub fn powi_f64(x: f64, n: i32) -> f64 {
    let mut base = if n < 0 { 1.0 / x } else { x };
    let mut e = n.unsigned_abs();
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Value, gradient and Hessian of a scalar function of `dim` coordinates.
///
/// The Hessian is stored as a packed upper triangle, so it is symmetric by
/// construction.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet2 {
    dim: usize,
    value: f64,
    grad: [f64; MAX_DIM],
    hess: [f64; HESS_LEN],
}

impl Jet2 {
    pub fn constant(c: f64, dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "jet dimension {dim} exceeds MAX_DIM");
        Self { dim, value: c, grad: [0.0; MAX_DIM], hess: [0.0; HESS_LEN] }
    }

    /// The coordinate function `x_index` evaluated at `x`.
    pub fn variable(index: usize, x: f64, dim: usize) -> Self {
        let mut j = Self::constant(x, dim);
        j.grad[index] = 1.0;
        j
    }

    /// Seeds one jet per coordinate of `point`.
    pub fn seed(point: &[f64]) -> alloc::vec::Vec<Jet2> {
        let d = point.len();
        point.iter().enumerate().map(|(i, &x)| Jet2::variable(i, x, d)).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn val(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn d(&self, i: usize) -> f64 {
        self.grad[i]
    }

    pub fn dd(&self, i: usize, j: usize) -> f64 {
        if i <= j {
            self.hess[tri(i, j)]
        } else {
            self.hess[tri(j, i)]
        }
    }

    /// Applies a scalar function with derivatives `f0, f1, f2` at the value.
    #[inline]
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0, self.dim);
        let d = self.dim;
        for i in 0..d {
            out.grad[i] = f1 * self.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let k = tri(i, j);
                out.hess[k] = f1 * self.hess[k] + f2 * self.grad[i] * self.grad[j];
            }
        }
        out
    }

    #[inline]
    fn dims(a: &Self, b: &Self) -> usize {
        debug_assert_eq!(a.dim, b.dim);
        a.dim.max(b.dim)
    }
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet2")
            .field("value", &self.value)
            .field("grad", &self.grad())
            .finish_non_exhaustive()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, rhs: Jet2) -> Jet2 {
        let d = Jet2::dims(&self, &rhs);
        let mut out = self;
        out.dim = d;
        out.value += rhs.value;
        for i in 0..d {
            out.grad[i] += rhs.grad[i];
        }
        for k in 0..HESS_LEN {
            out.hess[k] += rhs.hess[k];
        }
        out
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        let mut out = self;
        out.value = -out.value;
        for g in out.grad.iter_mut() {
            *g = -*g;
        }
        for h in out.hess.iter_mut() {
            *h = -*h;
        }
        out
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: Jet2) -> Jet2 {
        let d = Jet2::dims(&self, &rhs);
        let (a, b) = (self, rhs);
        let mut out = Jet2::constant(a.value * b.value, d);
        for i in 0..d {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        }
        for i in 0..d {
            for j in i..d {
                let k = tri(i, j);
                out.hess[k] = a.hess[k] * b.value
                    + a.value * b.hess[k]
                    + a.grad[i] * b.grad[j]
                    + a.grad[j] * b.grad[i];
            }
        }
        out
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64, dim: usize) -> Self {
        Jet2::constant(c, dim)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn is_jet() -> bool {
        true
    }
    fn recip(self) -> Self {
        let x = self.value;
        let r = 1.0 / x;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn powi(self, n: i32) -> Self {
        let x = self.value;
        let nf = n as f64;
        let f0 = powi_f64(x, n);
        let f1 = if n == 0 { 0.0 } else { nf * powi_f64(x, n - 1) };
        let f2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * powi_f64(x, n - 2) };
        self.chain(f0, f1, f2)
    }
    fn sin(self) -> Self {
        let (s, c) = (libm::sin(self.value), libm::cos(self.value));
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = (libm::sin(self.value), libm::cos(self.value));
        self.chain(c, -s, -c)
    }
    fn tan(self) -> Self {
        let t = libm::tan(self.value);
        let sec2 = 1.0 + t * t;
        self.chain(t, sec2, 2.0 * t * sec2)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.value);
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.value;
        self.chain(libm::log(x), 1.0 / x, -1.0 / (x * x))
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.value);
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }
    fn sinh(self) -> Self {
        let (s, c) = (libm::sinh(self.value), libm::cosh(self.value));
        self.chain(s, c, s)
    }
    fn cosh(self) -> Self {
        let (s, c) = (libm::sinh(self.value), libm::cosh(self.value));
        self.chain(c, s, c)
    }
    fn tanh(self) -> Self {
        let t = libm::tanh(self.value);
        let s2 = 1.0 - t * t;
        self.chain(t, s2, -2.0 * t * s2)
    }
}
