//! Deterministic quasi-Monte-Carlo forward tracing and the NMAE metric.

use alloc::vec::Vec;

use crate::density::{SourceSpec, TargetSpec};
use crate::geometry::{forward_map, ReflectorProfile, SourcePoint};
use crate::par::map_indexed;
use crate::real::f;
use crate::{Error, Result};

/// Rays per work unit. Fixed so the reduction order never depends on threads.
pub const CHUNK: usize = 4096;

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    acc
}

/// Point `k` (zero-based) of the 2D Halton sequence in bases 2 and 3, skipping the origin.
#[inline]
pub fn halton2(k: usize) -> [f64; 2] {
    let i = k as u64 + 1;
    [radical_inverse(i, 2), radical_inverse(i, 3)]
}

pub fn qmc_points(n: usize) -> Vec<[f64; 2]> {
    (0..n).map(halton2).collect()
}

/// Binned far field of a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldHistogram {
    pub edges: Vec<f64>,
    pub weights: Vec<f64>,
    /// Flux emitted by all rays.
    pub total: f64,
    /// Flux of rays reflected outside the binned window.
    pub miss_flux: f64,
    pub misses: usize,
    /// Rays whose intersection could not be computed.
    pub failures: usize,
    pub failed_flux: f64,
    pub n_rays: usize,
}

impl FarFieldHistogram {
    pub fn empty(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        FarFieldHistogram {
            edges,
            weights: alloc::vec![0.0; bins],
            total: 0.0,
            miss_flux: 0.0,
            misses: 0,
            failures: 0,
            failed_flux: 0.0,
            n_rays: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.edges[self.edges.len() - 1] - self.edges[0]) / self.bins() as f64
    }

    pub fn binned_flux(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Bin weights divided by the bin width.
    pub fn densities(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.weights.iter().map(|x| x / w).collect()
    }

    #[inline]
    pub(crate) fn deposit(&mut self, sigma: f64, weight: f64) {
        let lo = self.edges[0];
        let hi = self.edges[self.edges.len() - 1];
        if sigma >= lo && sigma < hi {
            let n = self.weights.len();
            let i = ((sigma - lo) / (hi - lo) * n as f64) as usize;
            self.weights[i.min(n - 1)] += weight;
        } else if sigma == hi {
            let n = self.weights.len();
            self.weights[n - 1] += weight;
        } else {
            self.miss_flux += weight;
            self.misses += 1;
        }
    }

    pub(crate) fn merge(&mut self, other: &FarFieldHistogram) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        self.total += other.total;
        self.miss_flux += other.miss_flux;
        self.misses += other.misses;
        self.failures += other.failures;
        self.failed_flux += other.failed_flux;
        self.n_rays += other.n_rays;
    }
}

/// Traces `n_rays` Halton-placed rays over `S`, each weighted `f · |S| / n`,
/// into `n_bins` equal bins of the profile's far-field window.
pub fn trace<P: ReflectorProfile + ?Sized>(
    prof: &P,
    source: &SourceSpec,
    n_rays: usize,
    n_bins: usize,
) -> Result<FarFieldHistogram> {
    if n_rays == 0 || n_bins == 0 {
        return Err(Error::InvalidInput { context: "trace needs rays and bins" });
    }
    let d = *prof.domain();
    let sd = *source.domain();
    let area = sd.source_area();
    let weight_scale = area / n_rays as f64;
    let chunks = n_rays.div_ceil(CHUNK);
    let parts = map_indexed(chunks, |c| {
        let mut h = FarFieldHistogram::empty(d.t_min, d.t_max, n_bins);
        let end = ((c + 1) * CHUNK).min(n_rays);
        for k in c * CHUNK..end {
            let [v1, v2] = halton2(k);
            let s = sd.l_min + v1 * sd.omega_len();
            let alpha = sd.alpha_min + v2 * sd.angle_len();
            h.n_rays += 1;
            let w = source.density(s, alpha) * weight_scale;
            if w == 0.0 {
                continue;
            }
            h.total += w;
            match forward_map(SourcePoint { s, alpha }, prof) {
                Ok(hit) => h.deposit(hit.sigma, w),
                Err(_) => {
                    h.failures += 1;
                    h.failed_flux += w;
                }
            }
        }
        h
    });
    let mut out = FarFieldHistogram::empty(d.t_min, d.t_max, n_bins);
    for p in &parts {
        out.merge(p);
    }
    Ok(out)
}

/// Extent of the far field reached from an `n × n` grid over `S`.
pub fn far_field_range<P: ReflectorProfile + ?Sized>(prof: &P, n: usize) -> Result<(f64, f64)> {
    let d = *prof.domain();
    let n = n.max(2);
    let rows = map_indexed(n, |i| -> Result<(f64, f64)> {
        let s = d.l_min + d.omega_len() * i as f64 / (n - 1) as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..n {
            let alpha = d.alpha_min + d.angle_len() * j as f64 / (n - 1) as f64;
            let hit = forward_map(SourcePoint { s, alpha }, prof)?;
            lo = lo.min(hit.sigma);
            hi = hi.max(hit.sigma);
        }
        Ok((lo, hi))
    });
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        let (a, b) = r?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok((lo, hi))
}

/// `mean |b̂ − b| / mean |b̂|`.
pub fn nmae(b: &[f64], b_hat: &[f64]) -> Result<f64> {
    if b.len() != b_hat.len() || b.is_empty() {
        return Err(Error::InvalidInput { context: "histograms must share their binning" });
    }
    let num: f64 = b.iter().zip(b_hat).map(|(x, y)| f::abs(y - x)).sum();
    let den: f64 = b_hat.iter().map(|y| f::abs(*y)).sum();
    if !(den > 0.0) {
        return Err(Error::ZeroFlux { context: "reference histogram" });
    }
    Ok(num / den)
}

/// NMAE of a traced histogram against the bin integrals of `target`.
pub fn nmae_against(hist: &FarFieldHistogram, target: &TargetSpec) -> Result<f64> {
    nmae(&hist.weights, &target.bin_integrals(hist.bins()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConstantProfile, DomainSpec};
    use core::f64::consts::FRAC_PI_4;

    #[test]
    fn van_der_corput_prefixes() {
        let p = qmc_points(3);
        assert_eq!([p[0][0], p[1][0], p[2][0]], [0.5, 0.25, 0.75]);
        assert!(f::abs(p[0][1] - 1.0 / 3.0) < 1e-16);
        assert!(f::abs(p[1][1] - 2.0 / 3.0) < 1e-16);
        assert!(f::abs(p[2][1] - 1.0 / 9.0) < 1e-16);
    }

    fn box_discrepancy(n: usize) -> f64 {
        let pts = qmc_points(n);
        let mut worst: f64 = 0.0;
        for i in 1..=16 {
            for j in 1..=16 {
                let (a, b) = (i as f64 / 16.0, j as f64 / 16.0);
                let inside = pts.iter().filter(|p| p[0] < a && p[1] < b).count();
                worst = worst.max(f::abs(inside as f64 / n as f64 - a * b));
            }
        }
        worst
    }

    #[test]
    fn discrepancy_decreases() {
        let d = [1 << 8, 1 << 12, 1 << 16].map(box_discrepancy);
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn nmae_examples() {
        let b_hat = [1.0, 2.0, 3.0];
        assert_eq!(nmae(&b_hat, &b_hat).unwrap(), 0.0);
        assert_eq!(nmae(&[0.0; 3], &b_hat).unwrap(), 1.0);
        let b = [1.5, 1.0, 3.0];
        let scaled_b: Vec<f64> = b.iter().map(|x| 7.0 * x).collect();
        let scaled_hat: Vec<f64> = b_hat.iter().map(|x| 7.0 * x).collect();
        let e1 = nmae(&b, &b_hat).unwrap();
        let e2 = nmae(&scaled_b, &scaled_hat).unwrap();
        assert!(f::abs(e1 - e2) < 1e-15);
        assert!(nmae(&b, &[0.0; 3]).is_err());
    }

    #[test]
    fn flux_is_conserved() {
        let d = DomainSpec::new((-1.0, 1.0), (FRAC_PI_4, 3.0 * FRAC_PI_4), (-0.8, 0.8)).unwrap();
        let prof = ConstantProfile::new(d, 1.0).unwrap();
        let src = SourceSpec::raised_cosine(d, 1.0, 1).unwrap();
        let h = trace(&prof, &src, 1 << 15, 64).unwrap();
        assert_eq!(h.failures, 0);
        let acc = h.binned_flux() + h.miss_flux;
        assert!(f::abs(acc - h.total) <= 1e-9 * h.total);
        assert!(f::abs(h.total - 1.0) < 1e-3);
        let zero = trace(&prof, &SourceSpec::uniform(d, 0.0).unwrap(), 1 << 10, 64).unwrap();
        assert!(zero.weights.iter().all(|w| *w == 0.0));
    }
}
