//! Point-source limit: a reflector scaled by `λ → ∞` sees the source as a
//! point at the origin with angular intensity `F(α) = ∫_Ω f(s, α) ds`.
//!
//! The limiting design problem is two sequential ODEs: the ray map
//! `σ∞′ = F / ĝ(σ∞)` (solved by CDF inversion) and the polar profile
//! `ρ′ = Φ(α, ρ; σ∞)`, integrated with RK4.

use alloc::vec::Vec;

use crate::density::{SourceSpec, TargetCdf, TargetSpec};
use crate::geometry::{
    curve_normal, forward_map, inv_stereographic, reflect, stereographic, ReflectorProfile,
    ScaledProfile, SourcePoint, UnitVec2,
};
use crate::par::map_indexed;
use crate::raytrace::{radical_inverse, FarFieldHistogram};
use crate::real::f;
use crate::transport::{MonotoneCdf, MonotoneMap};
use crate::{Error, Result};

/// RK4 steps over `A`.
pub const RK4_STEPS: usize = 512;

const CDF_NODES: usize = 2049;

/// Limiting ray map `α ↦ G⁻¹(F_cdf(α))`, with `F` rescaled to the target flux.
#[derive(Clone, Debug, PartialEq)]
pub struct RayMap {
    source: MonotoneCdf,
    target: TargetCdf,
    scale: f64,
    angles: (f64, f64),
    sigma: (f64, f64),
}

impl RayMap {
    pub fn new<F: FnMut(f64) -> f64>(angular: F, angles: (f64, f64), target: &TargetSpec) -> Result<Self> {
        let source = MonotoneCdf::from_density(angular, angles.0, angles.1, CDF_NODES)?;
        let dst = TargetCdf::new(target);
        if !(source.total() > 0.0) {
            return Err(Error::ZeroFlux { context: "angular marginal" });
        }
        if !(dst.total() > 0.0) {
            return Err(Error::ZeroFlux { context: "target distribution" });
        }
        Ok(RayMap {
            scale: dst.total() / source.total(),
            source,
            target: dst,
            angles,
            sigma: target.bounds(),
        })
    }

    /// The map for a source's angular marginal.
    pub fn for_source(source: &SourceSpec, target: &TargetSpec) -> Result<Self> {
        let d = source.domain();
        Self::new(|a| source.angular_marginal(a), (d.alpha_min, d.alpha_max), target)
    }

    pub fn angles(&self) -> (f64, f64) {
        self.angles
    }

    /// `σ∞(α)`; the ends of `A` map exactly to the ends of `Σ`.
    pub fn eval(&self, alpha: f64) -> f64 {
        if alpha <= self.angles.0 {
            return self.sigma.0;
        }
        if alpha >= self.angles.1 {
            return self.sigma.1;
        }
        self.target.quantile(self.source.eval(alpha) * self.scale)
    }

    pub fn tabulate(&self, grid_n: usize) -> MonotoneMap {
        let n = grid_n.max(2);
        let (a0, a1) = self.angles;
        let grid: Vec<f64> = (0..n).map(|i| a0 + (a1 - a0) * i as f64 / (n - 1) as f64).collect();
        let values = grid.iter().map(|&a| self.eval(a)).collect();
        MonotoneMap { grid, values }
    }
}

/// `ρ′` that sends the ray leaving the origin at angle `alpha` to the far
/// field coordinate `sigma`.
///
/// The polar tangent `ρ′ d + ρ d′` (with `d = (cos α, sin α)`) must be
/// orthogonal to the bisector `t − d`, so `ρ′ (d·t − 1) + ρ (d′·t) = 0`.
pub fn polar_slope(alpha: f64, rho: f64, sigma: f64) -> Result<f64> {
    let t: UnitVec2 = inv_stereographic(sigma);
    let (c, s) = (f::cos(alpha), f::sin(alpha));
    let along = c * t.x + s * t.z;
    let across = -s * t.x + c * t.z;
    let den = 1.0 - along;
    if f::abs(den) < 1e-12 {
        return Err(Error::Singular { context: "polar reflector slope" });
    }
    Ok(rho * across / den)
}

/// Far-field coordinate of the reflection off a polar curve with local
/// `(ρ, ρ′)` at angle `alpha`.
pub fn polar_sigma(alpha: f64, rho: f64, drho: f64) -> Result<f64> {
    let d = UnitVec2::from_angle(alpha);
    let tx = drho * d.x - rho * d.z;
    let tz = drho * d.z + rho * d.x;
    let n = UnitVec2::normalize(tz, -tx)?;
    stereographic(reflect(d, n))
}

/// The same slope found by root-finding `polar_sigma(α, ρ, ·) = σ` over the
/// normal's orientation, without the closed form.
pub fn polar_slope_numeric(alpha: f64, rho: f64, sigma: f64) -> Result<f64> {
    // ρ′/ρ = tan ψ sweeps the normal through half a turn as ψ ∈ (−π/2, π/2)
    let resid = |psi: f64| polar_sigma(alpha, rho, rho * f::tan(psi)).map(|v| v - sigma);
    let n = 4096;
    let h = core::f64::consts::PI / n as f64;
    let mut prev: Option<(f64, f64)> = None;
    for k in 1..n {
        let psi = -core::f64::consts::FRAC_PI_2 + h * k as f64;
        let Ok(r) = resid(psi) else {
            prev = None;
            continue;
        };
        if let Some((p0, r0)) = prev {
            // genuine crossings only: the projection's pole shows up as a
            // sign change across a huge jump
            if r0 * r <= 0.0 && f::abs(r - r0) < 1.0 + 10.0 * f::abs(sigma) {
                let (mut a, mut b, mut ra) = (p0, psi, r0);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    let rm = resid(m)?;
                    if (rm <= 0.0) == (ra <= 0.0) {
                        a = m;
                        ra = rm;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-16 {
                        break;
                    }
                }
                return Ok(rho * f::tan(0.5 * (a + b)));
            }
        }
        prev = Some((psi, r));
    }
    Err(Error::Bracket { s: rho, alpha })
}

/// `ρ > 0` and `ρ′` on a uniform grid over `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarReflector {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub drho: Vec<f64>,
}

impl PolarReflector {
    pub fn min_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Cubic Hermite `(ρ, ρ′)` at `alpha`, clamped to `A`.
    pub fn eval(&self, alpha: f64) -> (f64, f64) {
        let n = self.alpha.len();
        let a0 = self.alpha[0];
        let step = (self.alpha[n - 1] - a0) / (n - 1) as f64;
        let x = ((alpha - a0) / step).clamp(0.0, (n - 1) as f64);
        let i = (f::floor(x) as usize).min(n - 2);
        let t = x - i as f64;
        let (y0, y1) = (self.rho[i], self.rho[i + 1]);
        let (m0, m1) = (self.drho[i] * step, self.drho[i + 1] * step);
        let t2 = t * t;
        let t3 = t2 * t;
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dy = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        (y, dy / step)
    }
}

/// RK4 for `ρ′ = Φ(α, ρ; σ∞)` from `ρ(α_min) = h` in `steps` steps.
pub fn rho_ode<M: Fn(f64) -> f64>(sigma_inf: M, angles: (f64, f64), h: f64, steps: usize) -> Result<PolarReflector> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput { context: "initial radius must be positive" });
    }
    if steps == 0 || !(angles.1 > angles.0) {
        return Err(Error::InvalidInput { context: "polar grid needs steps over a nonempty range" });
    }
    let phi = |a: f64, r: f64| polar_slope(a, r, sigma_inf(a));
    let dt = (angles.1 - angles.0) / steps as f64;
    let mut alpha = Vec::with_capacity(steps + 1);
    let mut rho = Vec::with_capacity(steps + 1);
    let mut drho = Vec::with_capacity(steps + 1);
    let mut r = h;
    for k in 0..=steps {
        let a = angles.0 + dt * k as f64;
        let k1 = phi(a, r)?;
        alpha.push(a);
        rho.push(r);
        drho.push(k1);
        if k == steps {
            break;
        }
        let k2 = phi(a + 0.5 * dt, r + 0.5 * dt * k1)?;
        let k3 = phi(a + 0.5 * dt, r + 0.5 * dt * k2)?;
        let k4 = phi(a + dt, r + dt * k3)?;
        r += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::NonFinite { context: "polar reflector radius" });
        }
    }
    Ok(PolarReflector { alpha, rho, drho })
}

/// Traces a point source at the origin with intensity `intensity(α)` off a
/// polar reflector, using `n_rays` van der Corput angles.
pub fn trace_point_source<F: Fn(f64) -> f64 + Sync>(
    refl: &PolarReflector,
    intensity: F,
    n_rays: usize,
    bins: usize,
    window: (f64, f64),
) -> Result<FarFieldHistogram> {
    if n_rays == 0 || bins == 0 {
        return Err(Error::InvalidInput { context: "trace needs rays and bins" });
    }
    let a0 = refl.alpha[0];
    let span = refl.alpha[refl.alpha.len() - 1] - a0;
    let scale = span / n_rays as f64;
    const CHUNK: usize = 4096;
    let parts = map_indexed(n_rays.div_ceil(CHUNK), |c| {
        let mut hist = FarFieldHistogram::empty(window.0, window.1, bins);
        for k in c * CHUNK..((c + 1) * CHUNK).min(n_rays) {
            let alpha = a0 + span * radical_inverse(k as u64 + 1, 2);
            let w = intensity(alpha) * scale;
            hist.n_rays += 1;
            if w == 0.0 {
                continue;
            }
            hist.total += w;
            let (r, dr) = refl.eval(alpha);
            match polar_sigma(alpha, r, dr) {
                Ok(sigma) => hist.deposit(sigma, w),
                Err(_) => {
                    hist.failures += 1;
                    hist.failed_flux += w;
                }
            }
        }
        hist
    });
    let mut out = FarFieldHistogram::empty(window.0, window.1, bins);
    for p in &parts {
        out.merge(p);
    }
    Ok(out)
}

/// Unit normal of the scaled curve `λu` in the limit `λ → ∞`, at `p`.
pub fn limiting_normal<P: ReflectorProfile + ?Sized>(prof: &P, p: f64) -> Result<UnitVec2> {
    let d = prof.domain();
    let j = prof.jet(p);
    let beta = crate::geometry::angle_map(p, d);
    let slope = d.beta_slope();
    let (sb, cb) = (f::sin(beta), f::cos(beta));
    UnitVec2::normalize(j.du * sb + j.u * slope * cb, -j.du * cb + j.u * slope * sb)
}

/// `σ∞(α)` of a fixed profile: reflect `(cos α, sin α)` in the limiting
/// normal at `p = β⁻¹(α)`.
pub fn limit_sigma<P: ReflectorProfile + ?Sized>(prof: &P, alpha: f64) -> Result<f64> {
    let d = prof.domain();
    let p = d.l_min + (alpha - d.alpha_max) / d.beta_slope();
    let p = p.clamp(d.l_min, d.l_max);
    let n = limiting_normal(prof, p)?;
    stereographic(reflect(UnitVec2::from_angle(alpha), n))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow {
    pub lambda: f64,
    /// `max |σ_λ(s, α) − σ∞(α)|` over the grid.
    pub max_error: f64,
    /// Largest spread of `σ_λ` over `s` at fixed `α`.
    pub s_spread: f64,
}

/// Distance between the scaled profile's far field and the point-source
/// limit on an `n × n` grid of interior points of `S`.
pub fn scaling_convergence<P: ReflectorProfile>(prof: &P, lambdas: &[f64], n: usize) -> Result<Vec<ScalingRow>> {
    let d = *prof.domain();
    let n = n.max(2);
    let coord = |i: usize, lo: f64, len: f64| lo + len * (i as f64 + 0.5) / n as f64;
    let mut limit = Vec::with_capacity(n);
    for j in 0..n {
        limit.push(limit_sigma(prof, coord(j, d.alpha_min, d.angle_len()))?);
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let scaled = ScaledProfile::new(prof, lambda);
        let cols = map_indexed(n, |j| -> Result<(f64, f64)> {
            let alpha = coord(j, d.alpha_min, d.angle_len());
            let (mut err, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let s = coord(i, d.l_min, d.omega_len());
                let sigma = forward_map(SourcePoint { s, alpha }, &scaled)?.sigma;
                err = err.max(f::abs(sigma - limit[j]));
                lo = lo.min(sigma);
                hi = hi.max(sigma);
            }
            Ok((err, hi - lo))
        });
        let (mut max_error, mut s_spread) = (0.0f64, 0.0f64);
        for c in cols {
            let (e, sp) = c?;
            max_error = max_error.max(e);
            s_spread = s_spread.max(sp);
        }
        rows.push(ScalingRow { lambda, max_error, s_spread });
    }
    Ok(rows)
}

/// Normal of the scaled profile at `p` by the exact finite-`λ` formula.
pub fn scaled_normal<P: ReflectorProfile + ?Sized>(prof: &P, p: f64, lambda: f64) -> Result<UnitVec2> {
    let j = prof.jet(p);
    curve_normal(p, lambda * j.u, lambda * j.du, prof.domain())
}

/// Designs the point-source reflector for `target` from a source's angular
/// marginal.
pub fn point_source_design(source: &SourceSpec, target: &TargetSpec, h: f64) -> Result<(RayMap, PolarReflector)> {
    let map = RayMap::for_source(source, target)?;
    let refl = rho_ode(|a| map.eval(a), map.angles(), h, RK4_STEPS)?;
    Ok((map, refl))
}
