//! Source and far-field target distributions.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::geometry::DomainSpec;
use crate::real::{f, Real};
use crate::{Error, Result};

/// Emitted density `f(s, α)` on `S = Ω × A`, zero outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceSpec {
    /// Constant on `S`; jumps to zero on its boundary.
    Uniform { domain: DomainSpec, flux: f64 },
    /// `c · w(ŝ) · w(α̂)` where `ŝ, α̂ ∈ [-1, 1]` are the rescaled coordinates
    /// and `w(x) = ((1 + cos πx) / 2)^power` vanishes smoothly at the edges.
    RaisedCosine { domain: DomainSpec, flux: f64, power: u32 },
}

impl SourceSpec {
    pub fn uniform(domain: DomainSpec, flux: f64) -> Result<Self> {
        check_flux(flux)?;
        Ok(SourceSpec::Uniform { domain, flux })
    }

    pub fn raised_cosine(domain: DomainSpec, flux: f64, power: u32) -> Result<Self> {
        check_flux(flux)?;
        if power == 0 {
            return Err(Error::InvalidInput {
                context: "raised-cosine power must be at least 1",
            });
        }
        Ok(SourceSpec::RaisedCosine { domain, flux, power })
    }

    pub fn domain(&self) -> &DomainSpec {
        match self {
            SourceSpec::Uniform { domain, .. } | SourceSpec::RaisedCosine { domain, .. } => domain,
        }
    }

    pub fn with_domain(&self, domain: DomainSpec) -> Self {
        let mut out = *self;
        match &mut out {
            SourceSpec::Uniform { domain: d, .. } | SourceSpec::RaisedCosine { domain: d, .. } => *d = domain,
        }
        out
    }

    pub fn total_flux(&self) -> f64 {
        match self {
            SourceSpec::Uniform { flux, .. } | SourceSpec::RaisedCosine { flux, .. } => *flux,
        }
    }

    /// Same shape carrying total flux `flux`.
    pub fn with_flux(&self, flux: f64) -> Self {
        let mut out = *self;
        match &mut out {
            SourceSpec::Uniform { flux: q, .. } | SourceSpec::RaisedCosine { flux: q, .. } => *q = flux,
        }
        out
    }

    /// True unless the density jumps on the boundary of `S`.
    pub fn is_continuous(&self) -> bool {
        match self {
            SourceSpec::Uniform { flux, .. } => *flux == 0.0,
            SourceSpec::RaisedCosine { .. } => true,
        }
    }

    fn peak(&self) -> f64 {
        let d = self.domain();
        match *self {
            SourceSpec::Uniform { flux, .. } => flux / d.source_area(),
            SourceSpec::RaisedCosine { flux, power, .. } => {
                let i = bump_integral(power);
                flux / (0.5 * d.omega_len() * i * 0.5 * d.angle_len() * i)
            }
        }
    }

    /// `f(s, α)`; generic so it can be evaluated on duals.
    pub fn density<R: Real>(&self, s: R, alpha: R) -> R {
        let d = self.domain();
        let (sv, av) = (s.value(), alpha.value());
        if !(sv >= d.l_min && sv <= d.l_max && av >= d.alpha_min && av <= d.alpha_max) {
            return s * 0.0;
        }
        let c = self.peak();
        match *self {
            SourceSpec::Uniform { .. } => R::from_f64(c),
            SourceSpec::RaisedCosine { power, .. } => {
                let x = (s - d.l_min) * (2.0 / d.omega_len()) - 1.0;
                let y = (alpha - d.alpha_min) * (2.0 / d.angle_len()) - 1.0;
                bump(x, power) * bump(y, power) * c
            }
        }
    }

    /// `∫_A f(s, α) dα`.
    pub fn spatial_marginal(&self, s: f64) -> f64 {
        let d = self.domain();
        if !(s >= d.l_min && s <= d.l_max) {
            return 0.0;
        }
        match *self {
            SourceSpec::Uniform { .. } => self.peak() * d.angle_len(),
            SourceSpec::RaisedCosine { power, .. } => {
                let x = (s - d.l_min) * (2.0 / d.omega_len()) - 1.0;
                self.peak() * bump(x, power) * 0.5 * d.angle_len() * bump_integral(power)
            }
        }
    }

    /// `F(α) = ∫_Ω f(s, α) ds`.
    pub fn angular_marginal(&self, alpha: f64) -> f64 {
        let d = self.domain();
        if !(alpha >= d.alpha_min && alpha <= d.alpha_max) {
            return 0.0;
        }
        match *self {
            SourceSpec::Uniform { .. } => self.peak() * d.omega_len(),
            SourceSpec::RaisedCosine { power, .. } => {
                let y = (alpha - d.alpha_min) * (2.0 / d.angle_len()) - 1.0;
                self.peak() * bump(y, power) * 0.5 * d.omega_len() * bump_integral(power)
            }
        }
    }
}

fn check_flux(flux: f64) -> Result<()> {
    if flux.is_finite() && flux >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput {
            context: "source flux must be finite and nonnegative",
        })
    }
}

fn bump<R: Real>(x: R, power: u32) -> R {
    let base = ((x * PI).cos() + 1.0) * 0.5;
    base.powi(power as i32)
}

/// `∫_{-1}^{1} ((1 + cos πx)/2)^k dx`.
fn bump_integral(k: u32) -> f64 {
    // Binomial expansion; odd cosine powers integrate to zero and
    // ∫ cos^{2j}(πx) dx over [-1, 1] is 2 (2j−1)!!/(2j)!!.
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (k - j + 1) as f64 / j as f64;
        }
        if j % 2 == 0 {
            let mut ratio = 1.0;
            let mut m = 1;
            while m < j {
                ratio *= m as f64 / (m + 1) as f64;
                m += 2;
            }
            total += binom * 2.0 * ratio;
        }
    }
    total / f::powi(2.0, k as i32)
}

/// Prescribed far-field density `ĝ` sampled at the centres of `n` equal
/// cells of `Σ`, read as the piecewise-linear interpolant of the samples,
/// held constant beyond the outermost centres.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    t_min: f64,
    t_max: f64,
    samples: Vec<f64>,
}

impl TargetSpec {
    pub fn from_samples(t_min: f64, t_max: f64, samples: Vec<f64>) -> Result<Self> {
        if !(t_max > t_min) || samples.is_empty() {
            return Err(Error::InvalidInput {
                context: "target needs a nonempty interval and samples",
            });
        }
        if samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput {
                context: "target samples must be finite and nonnegative",
            });
        }
        Ok(TargetSpec { t_min, t_max, samples })
    }

    pub fn uniform(t_min: f64, t_max: f64, n: usize, flux: f64) -> Result<Self> {
        let level = flux / (t_max - t_min);
        Self::from_samples(t_min, t_max, alloc::vec![level; n.max(1)])
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn cell_width(&self) -> f64 {
        (self.t_max - self.t_min) / self.samples.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.t_min + (i as f64 + 0.5) * self.cell_width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| self.center(i)).collect()
    }

    pub fn density(&self, sigma: f64) -> f64 {
        if !(sigma >= self.t_min && sigma <= self.t_max) {
            return 0.0;
        }
        let n = self.samples.len();
        let r = (sigma - self.t_min) / self.cell_width() - 0.5;
        if r <= 0.0 {
            return self.samples[0];
        }
        if r >= (n - 1) as f64 {
            return self.samples[n - 1];
        }
        let i = f::floor(r) as usize;
        let t = r - i as f64;
        self.samples[i] + t * (self.samples[i + 1] - self.samples[i])
    }

    /// Exact `∫_a^b ĝ`, splitting at the interpolation knots.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.t_min);
        let b = b.min(self.t_max);
        if !(b > a) {
            return 0.0;
        }
        let n = self.samples.len();
        let mut knots: Vec<f64> = Vec::with_capacity(n + 2);
        knots.push(a);
        for i in 0..n {
            let c = self.center(i);
            if c > a && c < b {
                knots.push(c);
            }
        }
        knots.push(b);
        // One-point Gauss–Legendre is exact on each linear piece.
        knots
            .windows(2)
            .map(|w| (w[1] - w[0]) * self.density(0.5 * (w[0] + w[1])))
            .sum()
    }

    pub fn total_flux(&self) -> f64 {
        self.integrate(self.t_min, self.t_max)
    }

    /// Integrals of `ĝ` over `bins` equal cells of `Σ`.
    pub fn bin_integrals(&self, bins: usize) -> Vec<f64> {
        let w = (self.t_max - self.t_min) / bins as f64;
        (0..bins)
            .map(|i| self.integrate(self.t_min + w * i as f64, self.t_min + w * (i + 1) as f64))
            .collect()
    }

    /// Same shape rescaled to total flux `flux`.
    pub fn scaled_to(&self, flux: f64) -> Result<Self> {
        let total = self.total_flux();
        if !(total > 0.0) {
            return Err(Error::ZeroFlux { context: "target distribution" });
        }
        let k = flux / total;
        Ok(TargetSpec {
            t_min: self.t_min,
            t_max: self.t_max,
            samples: self.samples.iter().map(|v| v * k).collect(),
        })
    }
}

/// Exact cumulative distribution of a [`TargetSpec`]: piecewise quadratic
/// between the interpolation knots.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetCdf {
    knots: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TargetCdf {
    pub fn new(target: &TargetSpec) -> Self {
        let n = target.len();
        let mut knots = Vec::with_capacity(n + 2);
        knots.push(target.t_min);
        knots.extend(target.centers());
        knots.push(target.t_max);
        let mut density = Vec::with_capacity(n + 2);
        density.push(target.samples[0]);
        density.extend_from_slice(&target.samples);
        density.push(target.samples[n - 1]);
        let mut cumulative = Vec::with_capacity(n + 2);
        cumulative.push(0.0);
        for i in 1..knots.len() {
            let w = knots[i] - knots[i - 1];
            let prev = cumulative[i - 1];
            cumulative.push(prev + 0.5 * w * (density[i - 1] + density[i]));
        }
        TargetCdf { knots, density, cumulative }
    }

    pub fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let last = self.knots.len() - 1;
        if x <= self.knots[0] {
            return 0.0;
        }
        if x >= self.knots[last] {
            return self.total();
        }
        let i = self.knots.partition_point(|k| *k <= x).saturating_sub(1).min(last - 1);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (g0, g1) = (self.density[i], self.density[i + 1]);
        let tau = x - x0;
        let slope = if x1 > x0 { (g1 - g0) / (x1 - x0) } else { 0.0 };
        self.cumulative[i] + g0 * tau + 0.5 * slope * tau * tau
    }

    /// Smallest `x` with `G(x) = q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let last = self.knots.len() - 1;
        if q <= 0.0 {
            return self.knots[0];
        }
        if q >= self.total() {
            return self.knots[last];
        }
        // last knot whose cumulative value is below q
        let i = (self.cumulative.partition_point(|c| *c < q) - 1).min(last - 1);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (g0, g1) = (self.density[i], self.density[i + 1]);
        let r = q - self.cumulative[i];
        let slope = if x1 > x0 { (g1 - g0) / (x1 - x0) } else { 0.0 };
        // g0 τ + slope τ²/2 = r, in the cancellation-free form
        let disc = (g0 * g0 + 2.0 * slope * r).max(0.0);
        let den = g0 + f::sqrt(disc);
        let tau = if den > 0.0 { 2.0 * r / den } else { 0.0 };
        (x0 + tau).clamp(x0, x1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use core::f64::consts::FRAC_PI_4;

    fn domain() -> DomainSpec {
        DomainSpec::new((-1.0, 1.0), (FRAC_PI_4, 3.0 * FRAC_PI_4), (-1.0, 1.0)).unwrap()
    }

    #[test]
    fn bump_integrals() {
        assert!(f::abs(bump_integral(1) - 1.0) < 1e-15);
        assert!(f::abs(bump_integral(2) - 0.75) < 1e-15);
        let gl = GaussLegendre::new(64).unwrap();
        for k in 1..6 {
            let num = gl.integrate(|x| bump(x, k), -1.0, 1.0);
            assert!(f::abs(num - bump_integral(k)) < 1e-13);
        }
    }

    #[test]
    fn marginals_share_the_total_flux() {
        let gl = GaussLegendre::new(64).unwrap();
        for src in [
            SourceSpec::uniform(domain(), 1.0).unwrap(),
            SourceSpec::raised_cosine(domain(), 1.0, 1).unwrap(),
            SourceSpec::raised_cosine(domain(), 2.5, 3).unwrap(),
        ] {
            let d = *src.domain();
            let fs = gl.integrate(|s| src.spatial_marginal(s), d.l_min, d.l_max);
            let fa = gl.integrate(|a| src.angular_marginal(a), d.alpha_min, d.alpha_max);
            let full = gl.integrate(
                |s| gl.integrate(|a| src.density(s, a), d.alpha_min, d.alpha_max),
                d.l_min,
                d.l_max,
            );
            let q = src.total_flux();
            assert!(f::abs(fs - q) < 1e-6 * q);
            assert!(f::abs(fa - q) < 1e-6 * q);
            assert!(f::abs(full - q) < 1e-6 * q);
        }
    }

    #[test]
    fn continuity_flags() {
        assert!(!SourceSpec::uniform(domain(), 1.0).unwrap().is_continuous());
        assert!(SourceSpec::uniform(domain(), 0.0).unwrap().is_continuous());
        assert!(SourceSpec::raised_cosine(domain(), 1.0, 1).unwrap().is_continuous());
    }

    #[test]
    fn target_interpolation_and_integrals() {
        let t = TargetSpec::from_samples(0.0, 4.0, alloc::vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        assert_eq!(t.center(0), 0.5);
        assert_eq!(t.density(0.2), 1.0);
        assert_eq!(t.density(1.0), 2.0);
        assert_eq!(t.density(5.0), 0.0);
        // 0.5·1 + (1+3)/2 + 3 + (3+1)/2 + 0.5·1
        assert!(f::abs(t.total_flux() - 8.0) < 1e-14);
        let bins = t.bin_integrals(4);
        let sum: f64 = bins.iter().sum();
        assert!(f::abs(sum - 8.0) < 1e-14);
        assert!(f::abs(bins[0] - (0.5 + 0.5 * 1.5)) < 1e-14);
        let scaled = t.scaled_to(1.0).unwrap();
        assert!(f::abs(scaled.total_flux() - 1.0) < 1e-14);
    }

    #[test]
    fn target_cdf_is_exact() {
        let t = TargetSpec::from_samples(-0.5, 1.5, alloc::vec![1.0, 0.0, 0.0, 3.0, 2.0]).unwrap();
        let c = TargetCdf::new(&t);
        assert!(f::abs(c.total() - t.total_flux()) < 1e-14);
        for k in 0..=40 {
            let x = -0.5 + 0.05 * k as f64;
            assert!(f::abs(c.eval(x) - t.integrate(-0.5, x)) < 1e-14);
        }
        for k in 1..40 {
            let q = c.total() * k as f64 / 40.0;
            let x = c.quantile(q);
            assert!(f::abs(c.eval(x) - q) < 1e-13, "{q}");
        }
        // the zero plateau between the second and third centres resolves left
        let x = c.quantile(c.eval(0.3));
        assert!(f::abs(x - 0.1) < 1e-7, "{x}");
    }
}
