//! Fully connected network for the reflector height `u_θ(p)`.
//!
//! Hidden layers use `tanh²`; the scalar output passes through
//! `softplus(z) + ε`, which keeps the height strictly positive. The forward
//! pass propagates the first two `p`-derivatives alongside the values, and is
//! generic over the parameter scalar so the same code runs on `f64` and on
//! tape variables.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{DomainSpec, HeightJet, ReflectorProfile};
use crate::real::{f, Real};
use crate::{Error, Result};

/// Lower bound added after the softplus.
pub const HEIGHT_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    TanhSquared,
    /// `softplus(z) + HEIGHT_FLOOR`.
    SoftplusFloor,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::TanhSquared => 1,
            Activation::SoftplusFloor => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Activation::TanhSquared),
            2 => Some(Activation::SoftplusFloor),
            _ => None,
        }
    }
}

/// How many `p`-derivatives a forward pass carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

/// `u`, `du/dp`, `d²u/dp²`; derivatives beyond the requested order are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetJet<R> {
    pub u: R,
    pub du: R,
    pub d2u: R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    theta: Vec<f64>,
    seed: u64,
    hidden: Activation,
    output: Activation,
    /// Interval mapped affinely onto `[-1, 1]` before the first layer.
    input_range: (f64, f64),
}

/// Number of parameters of a network with the given layer widths.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpParams {
    /// Glorot-uniform weights and biases, bound `√(6/(fan_in + fan_out))` per layer.
    pub fn init(sizes: &[usize], seed: u64, input_range: (f64, f64)) -> Result<Self> {
        validate_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(parameter_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = f::sqrt(6.0 / (fan_in + fan_out) as f64);
            for _ in 0..fan_in * fan_out + fan_out {
                theta.push(rng.gen_range(-bound..=bound));
            }
        }
        Self::from_parts(sizes, theta, seed, input_range)
    }

    pub fn from_parts(sizes: &[usize], theta: Vec<f64>, seed: u64, input_range: (f64, f64)) -> Result<Self> {
        validate_sizes(sizes)?;
        if theta.len() != parameter_count(sizes) {
            return Err(Error::InvalidInput {
                context: "parameter vector length does not match layer sizes",
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "network parameters" });
        }
        if !(input_range.1 > input_range.0) {
            return Err(Error::InvalidInput { context: "network input range is empty" });
        }
        Ok(MlpParams {
            sizes: sizes.to_vec(),
            theta,
            seed,
            hidden: Activation::TanhSquared,
            output: Activation::SoftplusFloor,
            input_range,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activations(&self) -> (Activation, Activation) {
        (self.hidden, self.output)
    }

    pub fn input_range(&self) -> (f64, f64) {
        self.input_range
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Copy with a new parameter vector of the same layout.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::from_parts(&self.sizes, theta, self.seed, self.input_range)
    }

    /// Forward pass with parameters `theta` (same layout as `self.theta()`).
    pub fn jet<R: Real>(&self, theta: &[R], p: f64, order: Order) -> NetJet<R> {
        let (lo, hi) = self.input_range;
        let half = 0.5 * (hi - lo);
        let x = (p - 0.5 * (lo + hi)) / half;
        let zero = R::from_f64(0.0);

        let mut a: Vec<R> = alloc::vec![R::from_f64(x)];
        let mut da: Vec<R> = alloc::vec![R::from_f64(1.0 / half)];
        let mut d2a: Vec<R> = alloc::vec![zero];
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &theta[offset..offset + n_in * n_out];
            let biases = &theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let last = l + 1 == layers;
            let mut na = Vec::with_capacity(n_out);
            let mut nda = Vec::with_capacity(n_out);
            let mut nd2a = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let z = R::dot(row, &a, biases[j]);
                let dz = if order >= Order::First { R::dot(row, &da, zero) } else { zero };
                let d2z = if order >= Order::Second { R::dot(row, &d2a, zero) } else { zero };
                let (v, d1, d2) = if last {
                    activate(self.output, z)
                } else {
                    activate(self.hidden, z)
                };
                na.push(v);
                if order >= Order::First {
                    nda.push(d1 * dz);
                } else {
                    nda.push(zero);
                }
                if order >= Order::Second {
                    nd2a.push(d2 * dz * dz + d1 * d2z);
                } else {
                    nd2a.push(zero);
                }
            }
            a = na;
            da = nda;
            d2a = nd2a;
        }
        NetJet {
            u: a[0],
            du: da[0],
            d2u: d2a[0],
        }
    }

    pub fn height(&self, p: f64) -> HeightJet {
        let j = self.jet(&self.theta, p, Order::First);
        HeightJet { u: j.u, du: j.du }
    }

    pub fn profile(&self, domain: DomainSpec) -> MlpProfile<'_> {
        MlpProfile { net: self, domain }
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidInput { context: "network needs at least two layers" });
    }
    if sizes[0] != 1 || sizes[sizes.len() - 1] != 1 {
        return Err(Error::InvalidInput { context: "network must map one input to one output" });
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidInput { context: "layer widths must be positive" });
    }
    Ok(())
}

/// Value and first two derivatives of an activation at `z`.
fn activate<R: Real>(act: Activation, z: R) -> (R, R, R) {
    match act {
        Activation::TanhSquared => {
            let t = z.tanh();
            let t2 = t * t;
            let one_minus = -t2 + 1.0;
            (t2, t * one_minus * 2.0, one_minus * (-(t2 * 3.0) + 1.0) * 2.0)
        }
        Activation::SoftplusFloor => {
            let s = z.sigmoid();
            (z.softplus() + HEIGHT_FLOOR, s, s * (-s + 1.0))
        }
    }
}

/// A network frozen as a reflector profile.
pub struct MlpProfile<'a> {
    net: &'a MlpParams,
    domain: DomainSpec,
}

impl ReflectorProfile for MlpProfile<'_> {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn jet(&self, p: f64) -> HeightJet {
        self.net.height(p)
    }
    fn curvature(&self, p: f64) -> f64 {
        self.net.jet(self.net.theta(), p, Order::Second).d2u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad, Tape};

    const SIZES: [usize; 4] = [1, 24, 24, 1];

    #[test]
    fn layout_and_determinism() {
        let a = MlpParams::init(&SIZES, 7, (-1.0, 1.0)).unwrap();
        let b = MlpParams::init(&SIZES, 7, (-1.0, 1.0)).unwrap();
        let c = MlpParams::init(&SIZES, 8, (-1.0, 1.0)).unwrap();
        assert_eq!(a.len(), 673);
        assert_eq!(a.theta(), b.theta());
        assert_ne!(a.theta(), c.theta());
        assert!(MlpParams::init(&[], 0, (-1.0, 1.0)).is_err());
    }

    #[test]
    fn zero_network_is_constant() {
        let net = MlpParams::from_parts(&SIZES, alloc::vec![0.0; 673], 0, (-1.0, 1.0)).unwrap();
        for p in [-1.0, -0.3, 0.0, 0.8] {
            let j = net.height(p);
            assert!(f::abs(j.u - (core::f64::consts::LN_2 + 1e-3)) < 1e-15);
            assert_eq!(j.du, 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let net = MlpParams::init(&SIZES, 3, (-1.0, 1.0)).unwrap();
        let h = 1e-5;
        for k in 0..100 {
            let p = -0.99 + 1.98 * k as f64 / 99.0;
            let j = net.jet(net.theta(), p, Order::Second);
            let up = net.jet(net.theta(), p + h, Order::First);
            let um = net.jet(net.theta(), p - h, Order::First);
            let fd1 = (up.u - um.u) / (2.0 * h);
            let fd2 = (up.du - um.du) / (2.0 * h);
            assert!(f::abs(j.du - fd1) <= 1e-5 * f::abs(fd1).max(1e-3), "p={p}");
            assert!(f::abs(j.d2u - fd2) <= 1e-5 * f::abs(fd2).max(1e-2), "p={p}");
        }
    }

    #[test]
    fn heights_stay_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let mut net = MlpParams::init(&SIZES, trial, (-1.0, 1.0)).unwrap();
            let scale = rng.gen_range(0.1..20.0);
            let theta: Vec<f64> = net.theta().iter().map(|v| v * scale).collect();
            net = net.with_theta(theta).unwrap();
            for _ in 0..100 {
                let p = rng.gen_range(-1.0..1.0);
                assert!(net.height(p).u >= HEIGHT_FLOOR);
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let net = MlpParams::init(&[1, 4, 3, 1], 11, (-1.0, 1.0)).unwrap();
        let p = 0.37;
        let eval = |th: &[f64]| {
            let j = net.jet(th, p, Order::Second);
            j.u + 0.5 * j.du + 0.1 * j.d2u
        };
        let (v, g) = grad(
            |_t: &Tape, th| {
                let j = net.jet(th, p, Order::Second);
                j.u + j.du * 0.5 + j.d2u * 0.1
            },
            net.theta(),
        )
        .unwrap();
        assert!(f::abs(v - eval(net.theta())) < 1e-14);
        let h = 1e-6;
        for i in 0..net.len() {
            let mut a = net.theta().to_vec();
            let mut b = a.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (eval(&a) - eval(&b)) / (2.0 * h);
            assert!(f::abs(g[i] - fd) <= 1e-6 + 1e-5 * f::abs(fd), "i={i}");
        }
    }
}
