use crate::mlp::{MlpParams, Order};
use crate::real::Real;
use crate::{Error, Result};

/// Weighted `(min_p u(p) − h_min)²` over a uniform grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeightPenalty {
    pub h_min: f64,
    pub weight: f64,
    pub grid: usize,
}

impl HeightPenalty {
    pub fn new(h_min: f64) -> Self {
        HeightPenalty {
            h_min,
            weight: 1.0,
            grid: 128,
        }
    }
}

/// Smallest sampled height; ties keep the first grid point.
pub fn min_height<R: Real>(net: &MlpParams, theta: &[R], grid: usize) -> Result<R> {
    if grid < 64 {
        return Err(Error::InvalidInput { context: "height penalty grid needs at least 64 points" });
    }
    let (lo, hi) = net.input_range();
    let mut best: Option<R> = None;
    for i in 0..grid {
        let p = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let u = net.jet(theta, p, Order::Value).u;
        best = Some(match best {
            None => u,
            Some(b) => b.min(u),
        });
    }
    Ok(best.expect("grid is nonempty"))
}

/// `(min_p u_θ(p) − h_min)²`, differentiated through the active minimum.
pub fn height_penalty<R: Real>(net: &MlpParams, theta: &[R], h_min: f64, grid: usize) -> Result<R> {
    let gap = min_height(net, theta, grid)? - h_min;
    Ok(gap * gap)
}

pub(crate) fn apply<R: Real>(loss: R, net: &MlpParams, theta: &[R], pen: Option<&HeightPenalty>) -> Result<R> {
    match pen {
        Some(p) if p.weight != 0.0 => Ok(loss + height_penalty(net, theta, p.h_min, p.grid)? * p.weight),
        _ => Ok(loss),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad;
    use crate::real::f;

    #[test]
    fn penalty_examples() {
        let zero = MlpParams::from_parts(&[1, 3, 1], alloc::vec![0.0; 10], 0, (-1.0, 1.0)).unwrap();
        let u0 = core::f64::consts::LN_2 + 1e-3;
        assert!(f::abs(height_penalty(&zero, zero.theta(), u0, 64).unwrap()) < 1e-30);
        assert!(f::abs(height_penalty(&zero, zero.theta(), u0 - 1.0, 64).unwrap() - 1.0) < 1e-14);
        assert!(height_penalty(&zero, zero.theta(), u0, 8).is_err());
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let net = MlpParams::init(&[1, 6, 6, 1], 5, (-1.0, 1.0)).unwrap();
        let (_, g) = grad(|_, th| height_penalty(&net, th, 0.3, 128).unwrap(), net.theta()).unwrap();
        let h = 1e-6;
        for i in 0..net.len() {
            let mut a = net.theta().to_vec();
            let mut b = a.clone();
            a[i] += h;
            b[i] -= h;
            let fa = height_penalty(&net, &a, 0.3, 128).unwrap();
            let fb = height_penalty(&net, &b, 0.3, 128).unwrap();
            let fd = (fa - fb) / (2.0 * h);
            assert!(f::abs(g[i] - fd) <= 1e-4 * f::abs(fd).max(1e-4), "i={i}");
        }
    }
}
