use alloc::vec::Vec;

use super::DomainSpec;
use crate::real::f;
use crate::{Error, Result};

/// Height and slope of a reflector at one abscissa.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeightJet {
    pub u: f64,
    pub du: f64,
}

/// A positive, continuously differentiable height function over `Ω`.
pub trait ReflectorProfile: Sync {
    fn domain(&self) -> &DomainSpec;
    fn jet(&self, p: f64) -> HeightJet;

    fn height(&self, p: f64) -> f64 {
        self.jet(p).u
    }

    /// `d²u/dp²`; central differences of the slope unless overridden.
    fn curvature(&self, p: f64) -> f64 {
        let d = self.domain();
        let h = 1e-5 * d.omega_len();
        let a = (p - h).max(d.l_min);
        let b = (p + h).min(d.l_max);
        (self.jet(b).du - self.jet(a).du) / (b - a)
    }
}

impl<P: ReflectorProfile + ?Sized> ReflectorProfile for &P {
    fn domain(&self) -> &DomainSpec {
        (**self).domain()
    }
    fn jet(&self, p: f64) -> HeightJet {
        (**self).jet(p)
    }
    fn height(&self, p: f64) -> f64 {
        (**self).height(p)
    }
    fn curvature(&self, p: f64) -> f64 {
        (**self).curvature(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantProfile {
    domain: DomainSpec,
    height: f64,
}

impl ConstantProfile {
    pub fn new(domain: DomainSpec, height: f64) -> Result<Self> {
        if !(height > 0.0) || !height.is_finite() {
            return Err(Error::InvalidInput {
                context: "reflector height must be positive",
            });
        }
        Ok(ConstantProfile { domain, height })
    }
}

impl ReflectorProfile for ConstantProfile {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn jet(&self, _p: f64) -> HeightJet {
        HeightJet {
            u: self.height,
            du: 0.0,
        }
    }
    fn curvature(&self, _p: f64) -> f64 {
        0.0
    }
}

/// A profile given by a closure returning the jet.
pub struct FnProfile<F> {
    domain: DomainSpec,
    jet: F,
}

impl<F: Fn(f64) -> HeightJet + Sync> FnProfile<F> {
    pub fn new(domain: DomainSpec, jet: F) -> Self {
        FnProfile { domain, jet }
    }
}

impl<F: Fn(f64) -> HeightJet + Sync> ReflectorProfile for FnProfile<F> {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn jet(&self, p: f64) -> HeightJet {
        (self.jet)(p)
    }
}

/// `λ u`, the same shape seen from `λ` times further away.
pub struct ScaledProfile<P> {
    inner: P,
    lambda: f64,
}

impl<P: ReflectorProfile> ScaledProfile<P> {
    pub fn new(inner: P, lambda: f64) -> Self {
        ScaledProfile { inner, lambda }
    }
}

impl<P: ReflectorProfile> ReflectorProfile for ScaledProfile<P> {
    fn domain(&self) -> &DomainSpec {
        self.inner.domain()
    }
    fn jet(&self, p: f64) -> HeightJet {
        let j = self.inner.jet(p);
        HeightJet {
            u: self.lambda * j.u,
            du: self.lambda * j.du,
        }
    }
    fn curvature(&self, p: f64) -> f64 {
        self.lambda * self.inner.curvature(p)
    }
}

/// Piecewise cubic Hermite interpolant on a uniform grid over `Ω`.
///
/// Used to freeze expensive profiles (networks, splines) before tracing and
/// to represent ODE solutions whose slope is known at the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedProfile {
    domain: DomainSpec,
    u: Vec<f64>,
    du: Vec<f64>,
    step: f64,
}

impl TabulatedProfile {
    pub fn from_samples(domain: DomainSpec, u: Vec<f64>, du: Vec<f64>) -> Result<Self> {
        if u.len() < 2 || u.len() != du.len() {
            return Err(Error::InvalidInput {
                context: "tabulated profile needs matching height and slope samples",
            });
        }
        if u.iter().any(|&v| !(v > 0.0) || !v.is_finite()) || du.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput {
                context: "tabulated heights must be positive and finite",
            });
        }
        let step = domain.omega_len() / (u.len() - 1) as f64;
        Ok(TabulatedProfile { domain, u, du, step })
    }

    pub fn from_profile<P: ReflectorProfile + ?Sized>(prof: &P, nodes: usize) -> Result<Self> {
        let d = *prof.domain();
        let n = nodes.max(2);
        let (mut u, mut du) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let p = d.l_min + d.omega_len() * i as f64 / (n - 1) as f64;
            let j = prof.jet(p);
            u.push(j.u);
            du.push(j.du);
        }
        Self::from_samples(d, u, du)
    }

    pub fn nodes(&self) -> usize {
        self.u.len()
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        self.domain.l_min + self.step * i as f64
    }

    pub fn heights(&self) -> &[f64] {
        &self.u
    }

    pub fn slopes(&self) -> &[f64] {
        &self.du
    }

    pub fn min_height(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl ReflectorProfile for TabulatedProfile {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn jet(&self, p: f64) -> HeightJet {
        let last = self.u.len() - 1;
        let x = (p - self.domain.l_min) / self.step;
        let i = (f::floor(x).max(0.0) as usize).min(last - 1);
        let t = x - i as f64;
        let h = self.step;
        let (y0, y1) = (self.u[i], self.u[i + 1]);
        let (m0, m1) = (self.du[i] * h, self.du[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let u = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let dudt = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        HeightJet { u, du: dudt / h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_4;

    #[test]
    fn hermite_reproduces_cubics() {
        let d = DomainSpec::new((-1.0, 1.0), (FRAC_PI_4, 3.0 * FRAC_PI_4), (-1.0, 1.0)).unwrap();
        let cubic = FnProfile::new(d, |p: f64| HeightJet {
            u: 2.0 + p - 0.5 * p * p + 0.25 * p * p * p,
            du: 1.0 - p + 0.75 * p * p,
        });
        let tab = TabulatedProfile::from_profile(&cubic, 9).unwrap();
        for k in 0..=100 {
            let p = -1.0 + 0.02 * k as f64;
            let (a, b) = (tab.jet(p), cubic.jet(p));
            assert!(f::abs(a.u - b.u) < 1e-13);
            assert!(f::abs(a.du - b.du) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_positive_heights() {
        let d = DomainSpec::new((0.0, 1.0), (0.5, 1.0), (-1.0, 1.0)).unwrap();
        assert!(TabulatedProfile::from_samples(d, alloc::vec![1.0, 0.0], alloc::vec![0.0, 0.0]).is_err());
        assert!(ConstantProfile::new(d, -1.0).is_err());
    }
}
