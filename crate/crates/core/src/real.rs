//! Scalar abstraction shared by plain `f64`, forward-mode duals and tape variables.
//!
//! Geometry, densities and the network forward pass are written once against
//! [`Real`] and instantiated with whichever scalar the caller needs: `f64`
//! for tracing, [`Dual`](crate::autodiff::Dual) for small Jacobians and
//! sensitivities, [`Var`](crate::autodiff::Var) for reverse-mode gradients.
//! Branches always inspect [`Real::value`], so every instantiation follows
//! the same control flow.

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
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
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    /// `self.atan2(x)` is the angle of the point `(x, self)`, range (-π, π].
    fn atan2(self, x: Self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;

    /// Subgradient convention: d|x|/dx = 0 at x = 0.
    fn abs(self) -> Self {
        let v = self.value();
        if v > 0.0 {
            self
        } else if v < 0.0 {
            -self
        } else {
            self * 0.0
        }
    }

    /// Ties resolve to `self`.
    fn min(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    /// Ties resolve to `self`.
    fn max(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::from_f64(1.0),
            1 => self,
            2 => self * self,
            _ if n < 0 => Self::from_f64(1.0) / self.powi(-n),
            _ => {
                let half = self.powi(n / 2);
                if n % 2 == 0 {
                    half * half
                } else {
                    half * half * self
                }
            }
        }
    }

    fn recip(self) -> Self {
        Self::from_f64(1.0) / self
    }

    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }

    /// `ln(1 + e^x)`, overflow-free.
    fn softplus(self) -> Self {
        let v = self.value();
        let relu = if v > 0.0 { self } else { self * 0.0 };
        relu + ((-self.abs()).exp() + 1.0).ln()
    }

    /// Logistic function `1 / (1 + e^{-x})`.
    fn sigmoid(self) -> Self {
        if self.value() >= 0.0 {
            ((-self).exp() + 1.0).recip()
        } else {
            let e = self.exp();
            e / (e + 1.0)
        }
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }

    /// A pre-linearised node: value `value`, sensitivity `d` to each `(x, d)` in `terms`.
    fn lincomb(value: f64, terms: &[(Self, f64)]) -> Self {
        let mut acc = Self::from_f64(value);
        for &(x, d) in terms {
            if d != 0.0 {
                acc = acc + (x - x.value()) * d;
            }
        }
        acc
    }

    /// `bias + Σ weights[k] · inputs[k]`.
    fn dot(weights: &[Self], inputs: &[Self], bias: Self) -> Self {
        let mut acc = bias;
        for (&w, &x) in weights.iter().zip(inputs) {
            acc = acc + w * x;
        }
        acc
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        libm::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        libm::cos(self)
    }
    #[inline]
    fn tan(self) -> Self {
        libm::tan(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        libm::atan2(self, x)
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    #[inline]
    fn abs(self) -> Self {
        libm::fabs(self)
    }
    #[inline]
    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
    #[inline]
    fn hypot(self, other: Self) -> Self {
        libm::hypot(self, other)
    }
    #[inline]
    fn lincomb(value: f64, _terms: &[(Self, f64)]) -> Self {
        value
    }
    #[inline]
    fn softplus(self) -> Self {
        let relu = if self > 0.0 { self } else { 0.0 };
        relu + libm::log1p(libm::exp(-libm::fabs(self)))
    }
}

/// Free-function forms for `f64` so modules do not depend on which float
/// methods the `core` library happens to expose.
pub mod f {
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[inline]
    pub fn atan2(y: f64, x: f64) -> f64 {
        libm::atan2(y, x)
    }
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
    #[inline]
    pub fn tan(x: f64) -> f64 {
        libm::tan(x)
    }
    #[inline]
    pub fn tanh(x: f64) -> f64 {
        libm::tanh(x)
    }
    #[inline]
    pub fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
    #[inline]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }
    #[inline]
    pub fn powi(x: f64, n: i32) -> f64 {
        libm::pow(x, n as f64)
    }
    #[inline]
    pub fn hypot(x: f64, y: f64) -> f64 {
        libm::hypot(x, y)
    }
    #[inline]
    pub fn log1p(x: f64) -> f64 {
        libm::log1p(x)
    }
}
