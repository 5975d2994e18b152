//! Forward-mode dual numbers with `N` tangent directions.
//!
//! The component type is itself [`Real`], so duals nest: a
//! `Dual<Dual<f64, 3>, 2>` carries a 2-direction Jacobian whose entries know
//! their own derivatives in three further directions.

use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Real, const N: usize> Dual<T, N> {
    pub fn constant(re: T) -> Self {
        Self {
            re,
            eps: [T::from_f64(0.0); N],
        }
    }

    /// Seeds direction `k` with unit tangent.
    pub fn variable(re: T, k: usize) -> Self {
        let mut d = Self::constant(re);
        d.eps[k] = T::from_f64(1.0);
        d
    }

    pub fn new(re: T, eps: [T; N]) -> Self {
        Self { re, eps }
    }

    /// Applies a scalar function given its value and derivative at `re`.
    #[inline]
    fn chain(self, value: T, deriv: T) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * deriv;
        }
        Self { re: value, eps }
    }
}

impl<T: Real, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e = *e + r;
        }
        Self {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e = *e - r;
        }
        Self {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e = *e * rhs.re + self.re * r;
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.re.recip();
        let q = self.re * inv;
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e = (*e - q * r) * inv;
        }
        Self { re: q, eps }
    }
}

impl<T: Real, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = -*e;
        }
        Self { re: -self.re, eps }
    }
}

impl<T: Real, const N: usize> Add<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Self {
            re: self.re + rhs,
            eps: self.eps,
        }
    }
}

impl<T: Real, const N: usize> Sub<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Self {
            re: self.re - rhs,
            eps: self.eps,
        }
    }
}

impl<T: Real, const N: usize> Mul<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * rhs;
        }
        Self {
            re: self.re * rhs,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Div<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<T: Real, const N: usize> Real for Dual<T, N> {
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(self) -> Self {
        let (s, c) = (self.re.sin(), self.re.cos());
        self.chain(s, c)
    }
    fn cos(self) -> Self {
        let (s, c) = (self.re.sin(), self.re.cos());
        self.chain(c, -s)
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, t * t + 1.0)
    }
    fn atan2(self, x: Self) -> Self {
        let r2 = x.re * x.re + self.re * self.re;
        let re = self.re.atan2(x.re);
        let mut eps = self.eps;
        for (e, xe) in eps.iter_mut().zip(x.eps) {
            *e = (x.re * *e - self.re * xe) / r2;
        }
        Self { re, eps }
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        let l = self.re.ln();
        self.chain(l, self.re.recip())
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, (r * 2.0).recip())
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, -(t * t) + 1.0)
    }
}

/// Jacobian of a map R² → R² together with `|det|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian2<S> {
    /// `matrix[i][j] = ∂out_i / ∂in_j`.
    pub matrix: [[S; 2]; 2],
    pub abs_det: S,
}

/// Evaluates the Jacobian of `f` at `z` with two forward passes folded into
/// one 2-direction dual evaluation.
pub fn jacobian2<S, F>(f: F, z: [S; 2]) -> Result<Jacobian2<S>, crate::Error>
where
    S: Real,
    F: Fn([Dual<S, 2>; 2]) -> [Dual<S, 2>; 2],
{
    let out = f([Dual::variable(z[0], 0), Dual::variable(z[1], 1)]);
    let matrix = [
        [out[0].eps[0], out[0].eps[1]],
        [out[1].eps[0], out[1].eps[1]],
    ];
    let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
    if matrix.iter().flatten().any(|m| !m.is_finite()) {
        return Err(crate::Error::NonFinite {
            context: "jacobian entry",
        });
    }
    Ok(Jacobian2 {
        matrix,
        abs_det: det.abs(),
    })
}
