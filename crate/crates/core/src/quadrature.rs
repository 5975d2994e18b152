//! Gauss–Legendre rules and cumulative Simpson integration.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::real::f;
use crate::{Error, Result};

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput {
                context: "quadrature needs at least one node",
            });
        }
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = f::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if f::abs(dx) < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(GaussLegendre { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`, nodes in increasing order.
    pub fn on_interval(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let x = self.nodes.iter().map(|&t| mid + half * t).collect();
        let w = self.weights.iter().map(|&w| half * w).collect();
        (x, w)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(mid + half * t);
        }
        acc * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Running integral of equally spaced samples, starting at zero.
///
/// Even-indexed entries are composite Simpson sums. Odd entries add a
/// four-point half-panel rule to the preceding even entry, so cubics are
/// exact at every node once there are at least four samples.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = alloc::vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    if n == 3 {
        let (a, b, c) = (values[0], values[1], values[2]);
        out[1] = h / 12.0 * (5.0 * a + 8.0 * b - c);
        out[2] = h / 3.0 * (a + 4.0 * b + c);
        return out;
    }
    let v = values;
    let mut i = 0;
    while i + 2 < n {
        out[i + 2] = out[i] + h / 3.0 * (v[i] + 4.0 * v[i + 1] + v[i + 2]);
        out[i + 1] = out[i]
            + if i + 3 < n {
                h / 24.0 * (9.0 * v[i] + 19.0 * v[i + 1] - 5.0 * v[i + 2] + v[i + 3])
            } else {
                h / 24.0 * (-v[i - 1] + 13.0 * v[i] + 13.0 * v[i + 1] - v[i + 2])
            };
        i += 2;
    }
    if i + 1 < n {
        // Even number of samples: close the last interval from its right end.
        out[n - 1] = out[n - 2] + h / 24.0 * (v[n - 4] - 5.0 * v[n - 3] + 19.0 * v[n - 2] + 9.0 * v[n - 1]);
    }
    out
}

/// Integral of `g` over `[a, b]` by composite Simpson with `panels` panels.
pub fn simpson<F: FnMut(f64) -> f64>(mut g: F, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels.max(1);
    let h = (b - a) / (2 * m) as f64;
    let mut acc = g(a) + g(b);
    for k in 1..2 * m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + h * k as f64);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        for n in [1, 2, 3, 8, 17, 64] {
            let gl = GaussLegendre::new(n).unwrap();
            let deg = 2 * n - 1;
            let got = gl.integrate(|x| f::powi(x, deg as i32 - 1), -1.0, 1.0);
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!(f::abs(got - exact) < 1e-13, "n={n}");
            let total: f64 = gl.weights.iter().sum();
            assert!(f::abs(total - 2.0) < 1e-13);
        }
    }

    #[test]
    fn nodes_are_sorted_and_inside() {
        let gl = GaussLegendre::new(64).unwrap();
        let (x, _) = gl.on_interval(-1.0, 1.0);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        assert!(x[0] > -1.0 && x[63] < 1.0);
    }

    #[test]
    fn cumulative_simpson_is_exact_on_cubics() {
        let n = 11;
        let h = 0.1;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let vals: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let c = cumulative_simpson(&vals, h);
        assert!(f::abs(c[n - 1] - 1.0 / 3.0) < 1e-15);
        for (x, ci) in xs.iter().zip(&c) {
            assert!(f::abs(ci - x * x * x / 3.0) < 1e-15);
        }
        let vals: Vec<f64> = xs.iter().map(|x| x * x * x - x).collect();
        let c = cumulative_simpson(&vals, h);
        for (i, (x, ci)) in xs.iter().zip(&c).enumerate() {
            let exact = x * x * x * x / 4.0 - x * x / 2.0;
            assert!(f::abs(ci - exact) < 1e-14, "node {i}");
        }
    }

    #[test]
    fn cumulative_simpson_handles_even_counts() {
        let h = 0.25;
        for n in [4, 6] {
            let vals: Vec<f64> = (0..n).map(|i| f::powi(i as f64 * h, 3)).collect();
            let c = cumulative_simpson(&vals, h);
            for (i, ci) in c.iter().enumerate() {
                assert!(f::abs(ci - f::powi(i as f64 * h, 4) / 4.0) < 1e-15, "n={n} node {i}");
            }
        }
    }
}
