//! Optical geometry of a single-bounce reflector over a line source.
//!
//! The source occupies `Ω = [l_min, l_max]` on the `z = 0` axis and emits
//! into angles `A = [alpha_min, alpha_max]`. The reflector is the curve
//! `r(p) = (p, 0) + u(p) (cos β(p), sin β(p))`, and reflected directions are
//! labelled by their stereographic coordinate `σ ∈ Σ = [t_min, t_max]`.
//!
//! The generic functions take the height jet `(u, u′)` explicitly so they can
//! be evaluated with duals or tape variables; the `f64` wrappers taking a
//! [`ReflectorProfile`] are what the tracer uses.

mod profile;

pub use profile::{
    ConstantProfile, FnProfile, HeightJet, ReflectorProfile, ScaledProfile, TabulatedProfile,
};

use crate::real::{f, Real};
use crate::{Error, Result};

/// Slack allowed when checking that a coordinate lies in a closed interval.
const DOMAIN_SLACK: f64 = 1e-12;
const DEGENERATE_TANGENT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainSpec {
    pub l_min: f64,
    pub l_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl DomainSpec {
    pub fn new(
        omega: (f64, f64),
        angles: (f64, f64),
        sigma: (f64, f64),
    ) -> Result<Self> {
        let d = DomainSpec {
            l_min: omega.0,
            l_max: omega.1,
            alpha_min: angles.0,
            alpha_max: angles.1,
            t_min: sigma.0,
            t_max: sigma.1,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.l_min,
            self.l_max,
            self.alpha_min,
            self.alpha_max,
            self.t_min,
            self.t_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput {
                context: "domain bounds must be finite",
            });
        }
        if self.l_min >= self.l_max {
            return Err(Error::InvalidInput {
                context: "source interval is empty",
            });
        }
        if !(0.0 < self.alpha_min && self.alpha_min < self.alpha_max && self.alpha_max < core::f64::consts::PI) {
            return Err(Error::InvalidInput {
                context: "angular bounds must satisfy 0 < alpha_min < alpha_max < pi",
            });
        }
        if self.t_min >= self.t_max {
            return Err(Error::InvalidInput {
                context: "far-field interval is empty",
            });
        }
        Ok(())
    }

    /// The same source with a different far-field window.
    pub fn with_sigma(&self, t_min: f64, t_max: f64) -> Result<Self> {
        DomainSpec::new(
            (self.l_min, self.l_max),
            (self.alpha_min, self.alpha_max),
            (t_min, t_max),
        )
    }

    pub fn omega_len(&self) -> f64 {
        self.l_max - self.l_min
    }

    pub fn angle_len(&self) -> f64 {
        self.alpha_max - self.alpha_min
    }

    pub fn sigma_len(&self) -> f64 {
        self.t_max - self.t_min
    }

    /// `|S| = |Ω| |A|`.
    pub fn source_area(&self) -> f64 {
        self.omega_len() * self.angle_len()
    }

    /// `dβ/dp`, constant by construction.
    pub fn beta_slope(&self) -> f64 {
        (self.alpha_min - self.alpha_max) / (self.l_max - self.l_min)
    }

    pub fn in_omega(&self, s: f64) -> bool {
        s >= self.l_min - DOMAIN_SLACK && s <= self.l_max + DOMAIN_SLACK
    }

    pub fn in_angles(&self, alpha: f64) -> bool {
        alpha >= self.alpha_min - DOMAIN_SLACK && alpha <= self.alpha_max + DOMAIN_SLACK
    }

    pub fn in_sigma(&self, sigma: f64) -> bool {
        sigma >= self.t_min && sigma <= self.t_max
    }

    fn check_p(&self, p: f64) -> Result<()> {
        if self.in_omega(p) {
            Ok(())
        } else {
            Err(Error::Domain { what: "p", value: p })
        }
    }
}

/// A direction. Produced only by operations that return unit vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVec2<R = f64> {
    pub x: R,
    pub z: R,
}

impl<R: Real> UnitVec2<R> {
    pub fn from_angle(angle: R) -> Self {
        UnitVec2 {
            x: angle.cos(),
            z: angle.sin(),
        }
    }

    /// Normalises `(x, z)`; fails on vectors shorter than the degenerate tolerance.
    pub fn normalize(x: R, z: R) -> Result<Self> {
        let norm = x.hypot(z);
        if !(norm.value() >= DEGENERATE_TANGENT) {
            return Err(Error::Singular { context: "direction vector" });
        }
        Ok(UnitVec2 {
            x: x / norm,
            z: z / norm,
        })
    }

    pub fn dot(&self, other: &UnitVec2<R>) -> R {
        self.x * other.x + self.z * other.z
    }

    pub fn value(&self) -> UnitVec2<f64> {
        UnitVec2 {
            x: self.x.value(),
            z: self.z.value(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourcePoint {
    pub s: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetPoint {
    pub p: f64,
    pub sigma: f64,
}

/// Angle map β evaluated without a domain check.
#[inline]
pub fn angle_map<R: Real>(p: R, d: &DomainSpec) -> R {
    (p - d.l_min) * d.beta_slope() + d.alpha_max
}

/// β(p), affine from `alpha_max` at `l_min` down to `alpha_min` at `l_max`.
pub fn beta(p: f64, d: &DomainSpec) -> Result<f64> {
    d.check_p(p)?;
    Ok(angle_map(p, d))
}

/// Point `r(p)` of the reflector with height `u = u(p)`.
#[inline]
pub fn curve_point<R: Real>(p: R, u: R, d: &DomainSpec) -> [R; 2] {
    let b = angle_map(p, d);
    [p + u * b.cos(), u * b.sin()]
}

/// `dr/dp` given the jet `(u, u′)`.
#[inline]
pub fn curve_tangent<R: Real>(p: R, u: R, du: R, d: &DomainSpec) -> [R; 2] {
    let b = angle_map(p, d);
    let slope = d.beta_slope();
    let (sb, cb) = (b.sin(), b.cos());
    [
        -(u * sb * slope) + du * cb + 1.0,
        u * cb * slope + du * sb,
    ]
}

/// Unit normal `(r_z′, −r_x′)/‖r′‖`.
#[inline]
pub fn curve_normal<R: Real>(p: R, u: R, du: R, d: &DomainSpec) -> Result<UnitVec2<R>> {
    let [tx, tz] = curve_tangent(p, u, du, d);
    UnitVec2::normalize(tz, -tx)
}

/// Specular reflection `t = s − 2⟨s, n⟩ n`.
#[inline]
pub fn reflect<R: Real>(incident: UnitVec2<R>, n: UnitVec2<R>) -> UnitVec2<R> {
    let k = incident.dot(&n) * 2.0;
    UnitVec2 {
        x: incident.x - k * n.x,
        z: incident.z - k * n.z,
    }
}

/// `σ = t_x / (1 − t_z)`; undefined for the pole `t = (0, 1)`.
#[inline]
pub fn stereographic<R: Real>(t: UnitVec2<R>) -> Result<R> {
    let denom = -t.z + 1.0;
    if !(denom.value() > 1e-300) || !denom.is_finite() {
        return Err(Error::Singular { context: "stereographic projection at the pole" });
    }
    Ok(t.x / denom)
}

#[inline]
pub fn inv_stereographic<R: Real>(sigma: R) -> UnitVec2<R> {
    let q = sigma * sigma + 1.0;
    UnitVec2 {
        x: sigma * 2.0 / q,
        z: (sigma * sigma - 1.0) / q,
    }
}

/// Result of back-tracing a target point to the source line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackTrace<R> {
    pub s: R,
    pub alpha: R,
    /// False when the ray misses `S` or never reaches the source line.
    pub in_domain: bool,
}

/// Closed-form `m⁻¹(p, σ)` given the height jet at `p`.
///
/// Out-of-domain results carry whatever finite coordinates could be computed
/// and `in_domain = false`; callers treat their density as zero.
pub fn inverse_map_jet<R: Real>(
    p: R,
    sigma: R,
    u: R,
    du: R,
    d: &DomainSpec,
) -> Result<BackTrace<R>> {
    let t = inv_stereographic(sigma);
    let n = curve_normal(p, u, du, d)?;
    let k = t.dot(&n) * 2.0;
    let vx = k * n.x - t.x;
    let vz = k * n.z - t.z;
    let r = curve_point(p, u, d);
    if !(vz.value() < 0.0) {
        return Ok(BackTrace {
            s: r[0],
            alpha: R::from_f64(f64::NAN),
            in_domain: false,
        });
    }
    let s = r[0] - r[1] * vx / vz;
    let alpha = (-vz).atan2(-vx);
    let in_domain = s.is_finite() && d.in_omega(s.value()) && d.in_angles(alpha.value());
    Ok(BackTrace { s, alpha, in_domain })
}

pub fn inverse_map<P: ReflectorProfile + ?Sized>(tp: TargetPoint, prof: &P) -> Result<BackTrace<f64>> {
    let d = prof.domain();
    if !tp.sigma.is_finite() {
        return Err(Error::Domain { what: "sigma", value: tp.sigma });
    }
    d.check_p(tp.p)?;
    let jet = prof.jet(tp.p);
    inverse_map_jet(tp.p, tp.sigma, jet.u, jet.du, d)
}

/// Angle under which the source point `(s, 0)` sees `r(p)`.
#[inline]
pub fn viewing_angle_jet<R: Real>(s: R, p: R, u: R, d: &DomainSpec) -> R {
    let b = angle_map(p, d);
    (u * b.sin()).atan2(p - s + u * b.cos())
}

pub fn viewing_angle<P: ReflectorProfile + ?Sized>(s: f64, p: f64, prof: &P) -> f64 {
    viewing_angle_jet(s, p, prof.height(p), prof.domain())
}

/// A traced ray: where it hit, where it went.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardHit {
    pub p: f64,
    pub sigma: f64,
    pub normal: UnitVec2,
    pub reflected: UnitVec2,
}

impl ForwardHit {
    pub fn target(&self) -> TargetPoint {
        TargetPoint {
            p: self.p,
            sigma: self.sigma,
        }
    }
}

/// Signed quantity with the sign of `γ_s(p) − α`: the cross product of the
/// emission direction with the chord from `(s, 0)` to `r(p)`.
#[inline]
fn crossing(s: f64, ca: f64, sa: f64, p: f64, u: f64, d: &DomainSpec) -> f64 {
    let r = curve_point(p, u, d);
    r[1] * ca - (r[0] - s) * sa
}

const BISECTION_WIDTH: f64 = 1e-9;
const NEWTON_STEPS: usize = 3;
const ANGLE_TOL: f64 = 1e-12;
const BRACKET_RETRY_TOL: f64 = 1e-10;

/// Finds the reflector point hit by the ray `(s, α)`, then reflects and projects.
pub fn forward_map<P: ReflectorProfile + ?Sized>(sp: SourcePoint, prof: &P) -> Result<ForwardHit> {
    let d = prof.domain();
    let SourcePoint { s, alpha } = sp;
    if !d.in_omega(s) {
        return Err(Error::Domain { what: "s", value: s });
    }
    if !d.in_angles(alpha) {
        return Err(Error::Domain { what: "alpha", value: alpha });
    }
    let (ca, sa) = (f::cos(alpha), f::sin(alpha));
    let h = |p: f64| crossing(s, ca, sa, p, prof.height(p), d);

    let (mut lo, mut hi) = (d.l_min, d.l_max);
    let (h_lo, h_hi) = (h(lo), h(hi));
    // h ≥ 0 at l_min and ≤ 0 at l_max for every positive height; rounding at
    // the corners of S may flip a sign by a hair.
    if h_lo < 0.0 || h_hi > 0.0 {
        let scale = 1.0 + d.omega_len();
        if h_lo < 0.0 && h_lo > -BRACKET_RETRY_TOL * scale {
            return finish(s, alpha, lo, prof);
        }
        if h_hi > 0.0 && h_hi < BRACKET_RETRY_TOL * scale {
            return finish(s, alpha, hi, prof);
        }
        return Err(Error::Bracket { s, alpha });
    }
    if h_lo == 0.0 {
        return finish(s, alpha, lo, prof);
    }
    if h_hi == 0.0 {
        return finish(s, alpha, hi, prof);
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let hm = h(mid);
        if hm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if hm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut p = 0.5 * (lo + hi);
    for _ in 0..NEWTON_STEPS {
        let jet = prof.jet(p);
        let r = curve_point(p, jet.u, d);
        let tan = curve_tangent(p, jet.u, jet.du, d);
        let value = r[1] * ca - (r[0] - s) * sa;
        let slope = tan[1] * ca - tan[0] * sa;
        if value == 0.0 || slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = p - value / slope;
        if !(next >= lo && next <= hi) {
            break;
        }
        p = next;
    }
    let mut hit = finish(s, alpha, p, prof)?;
    if f::abs(viewing_angle(s, hit.p, prof) - alpha) >= ANGLE_TOL {
        // Newton declined; bisect down to the last representable interval.
        while hi - lo > 4.0 * f64::EPSILON * (1.0 + f::abs(lo)) {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hit = finish(s, alpha, 0.5 * (lo + hi), prof)?;
        if f::abs(viewing_angle(s, hit.p, prof) - alpha) >= ANGLE_TOL {
            return Err(Error::Bracket { s, alpha });
        }
    }
    Ok(hit)
}

fn finish<P: ReflectorProfile + ?Sized>(_s: f64, alpha: f64, p: f64, prof: &P) -> Result<ForwardHit> {
    let d = prof.domain();
    let jet = prof.jet(p);
    let normal = curve_normal(p, jet.u, jet.du, d)?;
    let reflected = reflect(UnitVec2::from_angle(alpha), normal);
    let sigma = stereographic(reflected)?;
    Ok(ForwardHit {
        p,
        sigma,
        normal,
        reflected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

    fn bench_domain() -> DomainSpec {
        DomainSpec::new((-1.0, 1.0), (FRAC_PI_4, 3.0 * FRAC_PI_4), (-1.0, 1.0)).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        f::abs(a - b) <= tol
    }

    #[test]
    fn beta_endpoints_and_midpoint() {
        let d = bench_domain();
        assert!(close(beta(-1.0, &d).unwrap(), 3.0 * FRAC_PI_4, 1e-15));
        assert!(close(beta(1.0, &d).unwrap(), FRAC_PI_4, 1e-15));
        assert!(close(beta(0.0, &d).unwrap(), FRAC_PI_2, 1e-15));
        assert!(close(d.beta_slope(), -FRAC_PI_4, 1e-15));
        assert!(beta(1.5, &d).is_err());
    }

    #[test]
    fn curve_points() {
        let d = bench_domain();
        let r = curve_point(0.0, 1.0, &d);
        assert!(close(r[0], 0.0, 1e-15) && close(r[1], 1.0, 1e-15));
        let r = curve_point(-1.0, 1.0, &d);
        assert!(close(r[0], -1.0 - FRAC_1_SQRT_2, 1e-15) && close(r[1], FRAC_1_SQRT_2, 1e-15));
        // 50-digit reference for u(p) = 1 + p² at p = 0.5
        let r = curve_point(0.5, 1.25, &d);
        assert!(close(r[0], 0.978_354_290_456_362_2, 1e-15));
        assert!(close(r[1], 1.154_849_415_639_108_4, 1e-15));
    }

    #[test]
    fn normal_of_simple_tangents() {
        let flat = UnitVec2::normalize(0.0, -1.0).unwrap();
        assert_eq!(flat, UnitVec2 { x: 0.0, z: -1.0 });
        let diag = UnitVec2::normalize(1.0_f64, -1.0).unwrap();
        assert!(close(diag.x, FRAC_1_SQRT_2, 1e-15) && close(diag.z, -FRAC_1_SQRT_2, 1e-15));
        assert!(UnitVec2::normalize(1e-15, 0.0).is_err());
    }

    #[test]
    fn normal_matches_finite_difference_tangent() {
        let d = bench_domain();
        let u = |p: f64| 1.0 + p * p;
        let p = 0.3;
        let h = 1e-6;
        let a = curve_point(p - h, u(p - h), &d);
        let b = curve_point(p + h, u(p + h), &d);
        let fd = UnitVec2::normalize(b[1] - a[1], -(b[0] - a[0])).unwrap();
        let n = curve_normal(p, u(p), 2.0 * p, &d).unwrap();
        assert!(close(n.x, fd.x, 1e-8) && close(n.z, fd.z, 1e-8));
    }

    #[test]
    fn reflection_examples() {
        let t = reflect(UnitVec2 { x: 0.0, z: 1.0 }, UnitVec2 { x: 0.0, z: -1.0 });
        assert_eq!(t, UnitVec2 { x: 0.0, z: -1.0 });
        let n = UnitVec2 {
            x: -FRAC_1_SQRT_2,
            z: -FRAC_1_SQRT_2,
        };
        let t = reflect(UnitVec2 { x: 1.0, z: 0.0 }, n);
        assert!(close(t.x, 0.0, 1e-15) && close(t.z, -1.0, 1e-15));
    }

    #[test]
    fn stereographic_examples() {
        assert_eq!(stereographic(UnitVec2 { x: 0.0, z: -1.0 }).unwrap(), 0.0);
        assert_eq!(stereographic(UnitVec2 { x: 1.0, z: 0.0 }).unwrap(), 1.0);
        assert_eq!(stereographic(UnitVec2 { x: -1.0, z: 0.0 }).unwrap(), -1.0);
        assert!(stereographic(UnitVec2 { x: 0.0, z: 1.0 }).is_err());
        assert_eq!(inv_stereographic(0.0), UnitVec2 { x: 0.0, z: -1.0 });
        assert_eq!(inv_stereographic(1.0), UnitVec2 { x: 1.0, z: 0.0 });
        let t = inv_stereographic(-2.0);
        assert!(close(t.x, -0.8, 1e-15) && close(t.z, 0.6, 1e-15));
    }

    #[test]
    fn viewing_angle_examples() {
        let d = bench_domain();
        let flat = ConstantProfile::new(d, 1.0).unwrap();
        assert!(close(viewing_angle(0.0, 0.0, &flat), FRAC_PI_2, 1e-15));
        assert!(close(viewing_angle(-1.0, -1.0, &flat), d.alpha_max, 1e-15));
        let mut last = PI;
        for i in 0..=2000 {
            let p = -1.0 + 2.0 * i as f64 / 2000.0;
            let g = viewing_angle(0.3, p, &flat);
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn symmetric_forward_and_inverse() {
        let d = bench_domain();
        let even = FnProfile::new(d, |p: f64| HeightJet { u: 1.0 + 0.3 * p * p, du: 0.6 * p });
        let hit = forward_map(SourcePoint { s: 0.0, alpha: FRAC_PI_2 }, &even).unwrap();
        assert!(close(hit.p, 0.0, 1e-14));
        assert!(close(hit.sigma, 0.0, 1e-14));
        let back = inverse_map(TargetPoint { p: 0.0, sigma: 0.0 }, &even).unwrap();
        assert!(back.in_domain);
        assert!(close(back.s, 0.0, 1e-14) && close(back.alpha, FRAC_PI_2, 1e-14));
    }

    #[test]
    fn constant_height_root_matches_dense_scan() {
        let d = bench_domain();
        let flat = ConstantProfile::new(d, 1.0).unwrap();
        let (s, alpha) = (0.37, 1.1);
        let hit = forward_map(SourcePoint { s, alpha }, &flat).unwrap();
        // Independent scan to localise the sign change, then bisection to 1e-14.
        let g = |p: f64| viewing_angle(s, p, &flat) - alpha;
        let n = 1_000_000;
        let (mut lo, mut hi) = (d.l_min, d.l_max);
        for i in 0..n {
            let a = -1.0 + 2.0 * i as f64 / n as f64;
            let b = -1.0 + 2.0 * (i + 1) as f64 / n as f64;
            if g(a) >= 0.0 && g(b) <= 0.0 {
                lo = a;
                hi = b;
                break;
            }
        }
        while hi - lo > 1e-15 {
            let m = 0.5 * (lo + hi);
            if g(m) > 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        assert!(close(hit.p, lo, 1e-14));
    }

    #[test]
    fn out_of_domain_back_trace_is_flagged() {
        let d = bench_domain();
        let flat = ConstantProfile::new(d, 1.0).unwrap();
        let far = inverse_map(TargetPoint { p: 0.9, sigma: -40.0 }, &flat).unwrap();
        assert!(!far.in_domain);
    }
}
