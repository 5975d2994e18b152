//! One-dimensional mass transport by cumulative-distribution inversion.
//!
//! A [`MonotoneCdf`] tabulates `G(x) = ∫ g` on a uniform grid and interpolates
//! it with cubic Hermite pieces whose slopes are the density samples, limited
//! so every piece stays monotone. Its inverse is found per interval by a
//! safeguarded Newton iteration. [`transport_map`] composes two of them into
//! the increasing map `x ↦ G⁻¹(F(x))` with pinned endpoints.

use alloc::vec::Vec;

use crate::quadrature::cumulative_simpson;
use crate::real::f;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneCdf {
    lo: f64,
    hi: f64,
    step: f64,
    cdf: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCdf {
    /// Tabulates the cumulative integral of `density` on `nodes` points of `[lo, hi]`.
    pub fn from_density<F: FnMut(f64) -> f64>(mut density: F, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(hi > lo) || nodes < 3 {
            return Err(Error::InvalidInput {
                context: "cdf grid needs a nonempty interval and three nodes",
            });
        }
        let step = (hi - lo) / (nodes - 1) as f64;
        let mut vals = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let v = density(lo + step * i as f64);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput {
                    context: "density must be finite and nonnegative",
                });
            }
            vals.push(v);
        }
        let mut cdf = cumulative_simpson(&vals, step);
        // Simpson's partial panels can dip by rounding where g vanishes.
        for i in 1..nodes {
            if cdf[i] < cdf[i - 1] {
                cdf[i] = cdf[i - 1];
            }
        }
        let mut slope = vals;
        limit_slopes(&cdf, &mut slope, step);
        Ok(MonotoneCdf { lo, hi, step, cdf, slope })
    }

    pub fn total(&self) -> f64 {
        *self.cdf.last().unwrap_or(&0.0)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.cdf.len() - 1;
        let r = (x - self.lo) / self.step;
        let i = (f::floor(r).max(0.0) as usize).min(last - 1);
        (i, (r - i as f64).clamp(0.0, 1.0))
    }

    fn piece(&self, i: usize, t: f64) -> (f64, f64) {
        let h = self.step;
        let (y0, y1) = (self.cdf[i], self.cdf[i + 1]);
        let (m0, m1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let dy = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        (y, dy / h)
    }

    /// `G(x)`, clamped to `[0, total]` outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return self.total();
        }
        let (i, t) = self.locate(x);
        self.piece(i, t).0
    }

    /// Smallest `x` with `G(x) = q`, for `q` in `[0, total]`.
    pub fn inverse(&self, q: f64) -> f64 {
        let total = self.total();
        if q <= 0.0 {
            return self.lo;
        }
        if q >= total {
            return self.hi;
        }
        // Last node with cdf < q, so plateaus resolve to their left end.
        let (mut a, mut b) = (0usize, self.cdf.len() - 1);
        while b - a > 1 {
            let m = (a + b) / 2;
            if self.cdf[m] < q {
                a = m;
            } else {
                b = m;
            }
        }
        let i = a;
        let (y0, y1) = (self.cdf[i], self.cdf[i + 1]);
        if y1 <= y0 {
            return self.lo + self.step * i as f64;
        }
        let (mut tl, mut tr) = (0.0, 1.0);
        let mut t = ((q - y0) / (y1 - y0)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let (y, dy) = self.piece(i, t);
            let r = y - q;
            if r > 0.0 {
                tr = t;
            } else {
                tl = t;
            }
            if f::abs(r) <= 1e-15 * total || tr - tl < 1e-15 {
                break;
            }
            let dt = r / (dy * self.step);
            let next = t - dt;
            t = if dy > 0.0 && next > tl && next < tr {
                next
            } else {
                0.5 * (tl + tr)
            };
        }
        self.lo + self.step * (i as f64 + t)
    }
}

/// Fritsch–Carlson limiter so each Hermite piece is monotone.
fn limit_slopes(cdf: &[f64], slope: &mut [f64], h: f64) {
    for i in 0..cdf.len() - 1 {
        let delta = (cdf[i + 1] - cdf[i]) / h;
        if delta <= 0.0 {
            slope[i] = 0.0;
            slope[i + 1] = 0.0;
            continue;
        }
        let a = slope[i] / delta;
        let b = slope[i + 1] / delta;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / f::sqrt(r);
            slope[i] = tau * a * delta;
            slope[i + 1] = tau * b * delta;
        }
    }
}

/// Increasing map between two intervals, tabulated on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneMap {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl MonotoneMap {
    /// Piecewise-linear evaluation, clamped at the ends.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        if x <= lo {
            return self.values[0];
        }
        if x >= hi {
            return self.values[n - 1];
        }
        let h = (hi - lo) / (n - 1) as f64;
        let r = (x - lo) / h;
        let i = (f::floor(r) as usize).min(n - 2);
        let t = r - i as f64;
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    pub fn is_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}

/// `x ↦ G⁻¹(F(x) · |G| / |F|)` sampled on `grid_n` points of `source`'s interval.
///
/// The first and last samples are pinned to the target interval's ends.
pub fn transport_map(source: &MonotoneCdf, target: &MonotoneCdf, grid_n: usize) -> Result<MonotoneMap> {
    let (fs, gs) = (source.total(), target.total());
    if !(fs > 0.0) {
        return Err(Error::ZeroFlux { context: "source marginal" });
    }
    if !(gs > 0.0) {
        return Err(Error::ZeroFlux { context: "target distribution" });
    }
    if grid_n < 2 {
        return Err(Error::InvalidInput { context: "map grid needs two points" });
    }
    let (lo, hi) = source.bounds();
    let (t_lo, t_hi) = target.bounds();
    let scale = gs / fs;
    let mut grid = Vec::with_capacity(grid_n);
    let mut values = Vec::with_capacity(grid_n);
    for i in 0..grid_n {
        let x = lo + (hi - lo) * i as f64 / (grid_n - 1) as f64;
        grid.push(x);
        let v = if i == 0 {
            t_lo
        } else if i == grid_n - 1 {
            t_hi
        } else {
            target.inverse(source.eval(x) * scale)
        };
        values.push(v);
    }
    for i in 1..grid_n {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    Ok(MonotoneMap { grid, values })
}
