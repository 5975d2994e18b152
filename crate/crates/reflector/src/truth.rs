//! Seeded thin-plate spline reflectors used as ground truths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reflector_core::geometry::{curve_point, DomainSpec, HeightJet, ReflectorProfile};
use reflector_core::{Error, Result};

pub const CENTERS: usize = 5;
pub const MIN_HEIGHT: f64 = 0.2;
pub const CHECK_GRID: usize = 1024;
pub const MAX_RESAMPLES: usize = 50;

/// `u(p) = c + Σ w_k φ(|p − p_k|)` with `φ(r) = r² ln r`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinPlateSpline {
    domain: DomainSpec,
    pub offset: f64,
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
}

fn kernel(r: f64) -> (f64, f64, f64) {
    if r == 0.0 {
        return (0.0, 0.0, f64::NEG_INFINITY);
    }
    let l = r.ln();
    (r * r * l, r * (2.0 * l + 1.0), 2.0 * l + 3.0)
}

impl ThinPlateSpline {
    pub fn new(domain: DomainSpec, offset: f64, centers: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if centers.len() != weights.len() || centers.is_empty() {
            return Err(Error::InvalidInput { context: "spline needs one weight per center" });
        }
        Ok(ThinPlateSpline { domain, offset, centers, weights })
    }

    pub fn with_domain(mut self, domain: DomainSpec) -> Self {
        self.domain = domain;
        self
    }

    pub fn min_height(&self, grid: usize) -> f64 {
        let d = self.domain();
        (0..grid)
            .map(|i| self.height(d.l_min + d.omega_len() * i as f64 / (grid - 1) as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Sign of the turning of the sampled curve `r(p)` if it never changes.
    pub fn turning_sign(&self, grid: usize) -> Option<f64> {
        let d = *self.domain();
        let pts: Vec<[f64; 2]> = (0..grid)
            .map(|i| {
                let p = d.l_min + d.omega_len() * i as f64 / (grid - 1) as f64;
                curve_point(p, self.height(p), &d)
            })
            .collect();
        let mut sign = 0.0;
        for w in pts.windows(3) {
            let a = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let b = [w[2][0] - w[1][0], w[2][1] - w[1][1]];
            let cross = a[0] * b[1] - a[1] * b[0];
            if cross == 0.0 {
                return None;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return None;
            }
        }
        Some(sign)
    }
}

impl ReflectorProfile for ThinPlateSpline {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn jet(&self, p: f64) -> HeightJet {
        let mut u = self.offset;
        let mut du = 0.0;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let x = p - c;
            let (k, dk, _) = kernel(x.abs());
            u += w * k;
            du += w * dk * x.signum();
        }
        HeightJet { u, du }
    }

    fn curvature(&self, p: f64) -> f64 {
        self.centers.iter().zip(&self.weights).map(|(c, w)| w * kernel((p - c).abs()).2).sum()
    }
}

/// Draws splines from `seed` until one is positive and convex on `Ω`.
///
/// Centers sit at least a quarter of `|Ω|` outside `Ω` on either side, so
/// `u` is smooth on `Ω` and every kernel is in its convex range there.
pub fn make_ground_truth(seed: u64, domain: DomainSpec) -> Result<ThinPlateSpline> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = domain.omega_len();
    for _ in 0..MAX_RESAMPLES {
        let mut centers = Vec::with_capacity(CENTERS);
        let mut weights = Vec::with_capacity(CENTERS);
        for k in 0..CENTERS {
            let gap = rng.gen_range(0.25..0.75) * len;
            centers.push(if k % 2 == 0 { domain.l_min - gap } else { domain.l_max + gap });
            weights.push(rng.gen_range(0.006..0.03));
        }
        let mut spline = ThinPlateSpline::new(domain, 0.0, centers, weights)?;
        let floor = rng.gen_range(0.8..1.2);
        spline.offset = floor - spline.min_height(CHECK_GRID);
        if spline.min_height(CHECK_GRID) > MIN_HEIGHT && spline.turning_sign(CHECK_GRID).is_some() {
            return Ok(spline);
        }
    }
    Err(Error::InvalidInput { context: "no convex positive spline within the resample budget" })
}
