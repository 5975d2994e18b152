//! Planar polygons over any [`Real`] scalar: clipping, area, fan quadrature.

use alloc::vec::Vec;

use crate::raytrace::radical_inverse;
use crate::real::{f, Real};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Twice the signed area (positive for counter-clockwise order).
pub fn signed_area2<R: Real>(poly: &[[R; 2]]) -> R {
    let n = poly.len();
    if n < 3 {
        return R::from_f64(0.0);
    }
    let mut acc = R::from_f64(0.0);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc = acc + a[0] * b[1] - a[1] * b[0];
    }
    acc
}

/// Shoelace area, `|·|`.
pub fn polygon_area<R: Real>(poly: &[[R; 2]]) -> R {
    (signed_area2(poly) * 0.5).abs()
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// True when a quadrilateral's opposite edges do not cross.
pub fn quad_is_simple(q: &[[f64; 2]; 4]) -> bool {
    !segments_cross(q[0], q[1], q[2], q[3]) && !segments_cross(q[1], q[2], q[3], q[0])
}

/// Sutherland–Hodgman clip of `poly` against `rect`. Orientation is kept.
pub fn clip_to_rect<R: Real>(poly: &[[R; 2]], rect: &Rect) -> Vec<[R; 2]> {
    let mut out: Vec<[R; 2]> = poly.to_vec();
    // (axis, bound, keep-greater)
    let planes = [(0, rect.x0, true), (0, rect.x1, false), (1, rect.y0, true), (1, rect.y1, false)];
    for (axis, bound, greater) in planes {
        if out.is_empty() {
            break;
        }
        let inside = |p: &[R; 2]| {
            let v = p[axis].value();
            if greater {
                v >= bound
            } else {
                v <= bound
            }
        };
        let input = core::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (-prev[axis] + bound) / (cur[axis] - prev[axis]);
                let mut x = [prev[0] + (cur[0] - prev[0]) * t, prev[1] + (cur[1] - prev[1]) * t];
                x[axis] = R::from_f64(bound);
                out.push(x);
            }
            if ci {
                out.push(cur);
            }
        }
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

/// Fan-triangulated quadrature of `g` over `poly`: each fan triangle receives
/// `samples` points of a stratified set, mirrored in the second coordinate,
/// through the area-preserving square-to-triangle map,
/// and contributes its signed area times the sample mean.
pub fn fan_integral<R: Real, G: Fn([R; 2]) -> R>(poly: &[[R; 2]], samples: usize, g: G) -> R {
    let n = poly.len();
    let mut total = R::from_f64(0.0);
    if n < 3 || samples == 0 {
        return total;
    }
    let orientation = if signed_area2(poly).value() < 0.0 { -1.0 } else { 1.0 };
    let a = poly[0];
    for k in 1..n - 1 {
        let (b, c) = (poly[k], poly[k + 1]);
        let area = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) * (0.5 * orientation);
        let mut acc = R::from_f64(0.0);
        let pairs = samples.div_ceil(2);
        let shift = 0.5 / pairs as f64;
        for i in 0..samples {
            let j = i / 2;
            let u1 = (j as f64 + 0.5) / pairs as f64;
            let v = radical_inverse(j as u64, 2) + shift;
            let v = if v >= 1.0 { v - 1.0 } else { v };
            let u2 = if i % 2 == 0 { v } else { 1.0 - v };
            let r = f::sqrt(u1);
            let (wa, wb, wc) = (1.0 - r, r * (1.0 - u2), r * u2);
            let x = [a[0] * wa + b[0] * wb + c[0] * wc, a[1] * wa + b[1] * wb + c[1] * wc];
            acc = acc + g(x);
        }
        total = total + area * acc / samples as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    fn square(x: f64, y: f64, w: f64) -> [[f64; 2]; 4] {
        [[x, y], [x + w, y], [x + w, y + w], [x, y + w]]
    }

    #[test]
    fn areas() {
        assert_eq!(polygon_area(&square(0.0, 0.0, 1.0)), 1.0);
        assert_eq!(polygon_area(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), 0.5);
        assert_eq!(polygon_area::<f64>(&[]), 0.0);
    }

    #[test]
    fn clipping_examples() {
        let same = clip_to_rect(&square(0.0, 0.0, 1.0), &UNIT);
        assert_eq!(polygon_area(&same), 1.0);
        assert!(clip_to_rect(&square(2.0, 2.0, 1.0), &UNIT).is_empty());
        let half = clip_to_rect(&square(0.5, 0.0, 1.0), &UNIT);
        assert!(f::abs(polygon_area(&half) - 0.5) < 1e-15);
        let cw: Vec<[f64; 2]> = square(0.5, 0.5, 1.0).iter().rev().copied().collect();
        let clipped = clip_to_rect(&cw, &UNIT);
        assert!(signed_area2(&clipped) < 0.0);
        assert!(f::abs(polygon_area(&clipped) - 0.25) < 1e-15);
    }

    #[test]
    fn simplicity() {
        assert!(quad_is_simple(&square(0.0, 0.0, 1.0)));
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!quad_is_simple(&bowtie));
    }

    #[test]
    fn fan_integral_examples() {
        let sq = square(0.0, 0.0, 1.0);
        assert!(f::abs(fan_integral(&sq, 64, |_| 1.0) - 1.0) < 1e-15);
        let tri = [[0.2, 0.1], [0.9, 0.3], [0.4, 0.8]];
        let area = polygon_area(&tri);
        assert!(f::abs(fan_integral(&tri, 7, |_| 3.0) - 3.0 * area) < 1e-15);
        // ∫(x + y) over a triangle = area · (sum of vertex coordinates) / 3
        let exact = area * tri.iter().map(|v| v[0] + v[1]).sum::<f64>() / 3.0;
        let got = fan_integral(&tri, 256, |x| x[0] + x[1]);
        assert!(f::abs(got - exact) < 1e-3 * exact);
        let cw = [tri[2], tri[1], tri[0]];
        let got = fan_integral(&cw, 256, |x| x[0] + x[1]);
        assert!(f::abs(got - exact) < 1e-3 * exact);
    }
}
