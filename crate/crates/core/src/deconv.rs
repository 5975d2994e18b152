//! Deconvolution baseline.
//!
//! The approximate problem sends the ray emitted at `s` in direction `β(s)`
//! to `σ = m(s)`, where `m` balances the spatial source marginal against the
//! target. Demanding that the reflector realise `m` gives a linear ODE
//! `u′ + a u = b`, solved in integrating-factor form with cumulative Simpson
//! sums. [`operator_p`] wraps that solver in a full finite-source trace and
//! [`van_cittert`] iterates it against the desired far field.

use alloc::vec::Vec;

use crate::density::{SourceSpec, TargetCdf, TargetSpec};
use crate::geometry::{curve_normal, inv_stereographic, reflect, stereographic, DomainSpec, TabulatedProfile, UnitVec2};
use crate::quadrature::cumulative_simpson;
use crate::raytrace::{nmae_against, trace, FarFieldHistogram};
use crate::real::f;
use crate::transport::{MonotoneCdf, MonotoneMap};
use crate::{Error, Result};

/// Points of the `s` grid; odd so Simpson panels close exactly.
pub const GRID_POINTS: usize = 257;

/// Tabulation density for the CDFs behind [`flux_map`].
const CDF_NODES: usize = 2049;

/// Magnitude of `∫a` beyond which `μ` is stored with a shift.
const LOG_LIMIT: f64 = 600.0;

/// `m(s) = G⁻¹(F(s))` on `grid_n` points of `Ω`, with `F` the cumulative
/// `source_marginal` rescaled to the target's total flux.
pub fn flux_map<F: FnMut(f64) -> f64>(
    source_marginal: F,
    omega: (f64, f64),
    target: &TargetSpec,
    grid_n: usize,
) -> Result<MonotoneMap> {
    let src = MonotoneCdf::from_density(source_marginal, omega.0, omega.1, CDF_NODES)?;
    let dst = TargetCdf::new(target);
    let (fs, gs) = (src.total(), dst.total());
    if !(fs > 0.0) {
        return Err(Error::ZeroFlux { context: "source marginal" });
    }
    if !(gs > 0.0) {
        return Err(Error::ZeroFlux { context: "target distribution" });
    }
    if grid_n < 2 {
        return Err(Error::InvalidInput { context: "map grid needs two points" });
    }
    let (lo, hi) = target.bounds();
    let scale = gs / fs;
    let mut grid = Vec::with_capacity(grid_n);
    let mut values: Vec<f64> = Vec::with_capacity(grid_n);
    for i in 0..grid_n {
        let x = omega.0 + (omega.1 - omega.0) * i as f64 / (grid_n - 1) as f64;
        grid.push(x);
        let v = if i == 0 {
            lo
        } else if i == grid_n - 1 {
            hi
        } else {
            dst.quantile(src.eval(x) * scale)
        };
        values.push(values.last().map_or(v, |p| p.max(v)));
    }
    Ok(MonotoneMap { grid, values })
}

/// `(a, b)` at one grid point, or a singularity error where the shared
/// denominator vanishes. It does so only where `σ` is the projection of the
/// emitted direction itself, i.e. where no mirror orientation exists.
pub fn coefficients_at(s: f64, sigma: f64, d: &DomainSpec) -> Result<(f64, f64)> {
    let beta = crate::geometry::angle_map(s, d);
    let slope = d.beta_slope();
    let (sb, cb) = (f::sin(beta), f::cos(beta));
    let s2 = sigma * sigma;
    let den = -s2 * sb + s2 - 2.0 * sigma * cb + sb + 1.0;
    if f::abs(den) < 1e-12 {
        return Err(Error::Singular { context: "reflector ODE denominator" });
    }
    let a = slope * (-s2 * cb + 2.0 * sigma * sb + cb) / den;
    let b = (-s2 * cb + 2.0 * sigma - cb) / den;
    Ok((a, b))
}

/// `u′` from the normal that turns the emitted direction `β(s)` into the
/// direction with stereographic coordinate `sigma`.
pub fn slope_from_normal(s: f64, sigma: f64, u: f64, d: &DomainSpec) -> Result<f64> {
    let beta = crate::geometry::angle_map(s, d);
    let slope = d.beta_slope();
    let t: UnitVec2 = inv_stereographic(sigma);
    let (sx, sz) = (f::cos(beta), f::sin(beta));
    // scaled tangent, perpendicular to t − s
    let rx = sz - t.z;
    let rz = t.x - sx;
    let den = rx * sz - rz * sx;
    if f::abs(den) < 1e-12 {
        return Err(Error::Singular { context: "reflector slope from normal" });
    }
    Ok((-rx * slope * u * sx - rz * slope * u * sz + rz) / den)
}

/// Linear-ODE data on the `s` grid. `mu` and `integral` carry a common
/// factor `exp(-shift)` so large `∫a` cannot overflow.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeCoeffs {
    pub domain: DomainSpec,
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    /// Running `∫ b μ`.
    pub integral: Vec<f64>,
    pub shift: f64,
}

pub fn ode_coeffs(m: &MonotoneMap, d: &DomainSpec) -> Result<OdeCoeffs> {
    let n = m.grid.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidInput { context: "ODE grid needs an odd number of points" });
    }
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (&s, &sigma) in m.grid.iter().zip(&m.values) {
        let (ai, bi) = coefficients_at(s, sigma, d)?;
        a.push(ai);
        b.push(bi);
    }
    let h = d.omega_len() / (n - 1) as f64;
    let log_mu = cumulative_simpson(&a, h);
    let peak = log_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trough = log_mu.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if peak > LOG_LIMIT || trough < -LOG_LIMIT { peak } else { 0.0 };
    if peak - trough > 2.0 * LOG_LIMIT {
        return Err(Error::Overflow { context: "integrating factor" });
    }
    let mu: Vec<f64> = log_mu.iter().map(|v| f::exp(v - shift)).collect();
    let bmu: Vec<f64> = b.iter().zip(&mu).map(|(x, y)| x * y).collect();
    let integral = cumulative_simpson(&bmu, h);
    Ok(OdeCoeffs {
        domain: *d,
        s: m.grid.clone(),
        sigma: m.values.clone(),
        a,
        b,
        mu,
        integral,
        shift,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolvedReflector {
    pub h: f64,
    pub u: Vec<f64>,
    /// `b − a u` at the nodes.
    pub du: Vec<f64>,
}

impl SolvedReflector {
    pub fn min_height(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn profile(&self, d: &DomainSpec) -> Result<TabulatedProfile> {
        TabulatedProfile::from_samples(*d, self.u.clone(), self.du.clone())
    }
}

/// `u = (h + ∫bμ) / μ` with `u(l_min) = h`.
pub fn solve_reflector(c: &OdeCoeffs, h: f64) -> Result<SolvedReflector> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput { context: "initial height must be positive" });
    }
    let scaled_h = h * f::exp(-c.shift);
    let mut u = Vec::with_capacity(c.s.len());
    let mut du = Vec::with_capacity(c.s.len());
    for i in 0..c.s.len() {
        let ui = if i == 0 { h } else { (scaled_h + c.integral[i]) / c.mu[i] };
        if !ui.is_finite() {
            return Err(Error::Overflow { context: "reflector height" });
        }
        u.push(ui);
        du.push(c.b[i] - c.a[i] * ui);
    }
    Ok(SolvedReflector { h, u, du })
}

/// The `h` for which the smallest grid height equals `h_min`.
///
/// `u` is affine in `h` with positive slope `1/μ`, so each node's
/// constraint `u_i ≥ h_min` reads `h ≥ h_min μ_i − C_i`.
pub fn adjust_h(c: &OdeCoeffs, h_min: f64) -> Result<f64> {
    if !(h_min > 0.0) {
        return Err(Error::InvalidInput { context: "minimum height must be positive" });
    }
    let scale = f::exp(c.shift);
    let mut h = f64::NEG_INFINITY;
    for i in 0..c.s.len() {
        let bound = if i == 0 { h_min } else { (h_min * c.mu[i] - c.integral[i]) * scale };
        h = h.max(bound);
    }
    if !h.is_finite() {
        return Err(Error::Overflow { context: "initial height" });
    }
    Ok(h)
}

/// Fourth-order finite-difference slopes of equally spaced samples.
pub fn fd_slopes(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let mut out = alloc::vec![0.0; n];
    if n < 5 {
        for i in 0..n {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            out[i] = (u[b] - u[a]) / (h * (b - a) as f64);
        }
        return out;
    }
    let k = 12.0 * h;
    out[0] = (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]) / k;
    out[1] = (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]) / k;
    for i in 2..n - 2 {
        out[i] = (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]) / k;
    }
    let m = n - 1;
    out[m - 1] = (3.0 * u[m] + 10.0 * u[m - 1] - 18.0 * u[m - 2] + 6.0 * u[m - 3] - u[m - 4]) / k;
    out[m] = (25.0 * u[m] - 48.0 * u[m - 1] + 36.0 * u[m - 2] - 16.0 * u[m - 3] + 3.0 * u[m - 4]) / k;
    out
}

/// Far-field coordinate of the ray emitted from `s` along `β(s)`.
pub fn sigma_geom(s: f64, u: f64, du: f64, d: &DomainSpec) -> Result<f64> {
    let n = curve_normal(s, u, du, d)?;
    let dir = UnitVec2::from_angle(crate::geometry::angle_map(s, d));
    stereographic(reflect(dir, n))
}

/// `max_i |σ_geom(s_i) − m(s_i)|`, slopes taken by finite differences of
/// the height samples alone.
pub fn ray_check(u: &[f64], m: &MonotoneMap, d: &DomainSpec) -> Result<f64> {
    if u.len() != m.grid.len() || u.len() < 2 {
        return Err(Error::InvalidInput { context: "heights must share the map grid" });
    }
    let h = d.omega_len() / (u.len() - 1) as f64;
    let du = fd_slopes(u, h);
    let mut worst: f64 = 0.0;
    for i in 0..u.len() {
        let sg = sigma_geom(m.grid[i], u[i], du[i], d)?;
        worst = worst.max(f::abs(sg - m.values[i]));
    }
    Ok(worst)
}

/// Samples an increasing map on `grid_n` points of `Ω`.
pub fn tabulate_map<M: Fn(f64) -> f64>(m: M, d: &DomainSpec, grid_n: usize) -> MonotoneMap {
    let n = grid_n.max(2);
    let grid: Vec<f64> = (0..n).map(|i| d.l_min + d.omega_len() * i as f64 / (n - 1) as f64).collect();
    let values = grid.iter().map(|&s| m(s)).collect();
    MonotoneMap { grid, values }
}

/// Solves for `m` from `u(l_min) = h` on a `grid_n`-point grid and returns
/// `max |u′ + a u − b|` with `u′` by finite differences of the solution.
pub fn ode_residual<M: Fn(f64) -> f64>(m: M, d: &DomainSpec, h: f64, grid_n: usize) -> Result<f64> {
    let map = tabulate_map(m, d, grid_n);
    let c = ode_coeffs(&map, d)?;
    let sol = solve_reflector(&c, h)?;
    let du = fd_slopes(&sol.u, d.omega_len() / (grid_n - 1) as f64);
    let mut worst: f64 = 0.0;
    for i in 0..du.len() {
        worst = worst.max(f::abs(du[i] + c.a[i] * sol.u[i] - c.b[i]));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorConfig {
    pub h_min: f64,
    pub n_rays: usize,
    pub bins: usize,
    pub grid_points: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            h_min: 0.2,
            n_rays: 1 << 19,
            bins: 64,
            grid_points: GRID_POINTS,
        }
    }
}

/// One application of the forward operator.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorOutput {
    /// Traced far-field density on the input's sample points.
    pub values: Vec<f64>,
    pub reflector: SolvedReflector,
    pub profile: TabulatedProfile,
    pub histogram: FarFieldHistogram,
}

/// Designs the approximate-problem reflector for `virtual_target`, traces
/// it with the full source and returns the normalised image on the same
/// sample points. The result carries `flux` as its total.
pub fn operator_p(
    virtual_target: &TargetSpec,
    source: &SourceSpec,
    domain: &DomainSpec,
    flux: f64,
    cfg: &OperatorConfig,
) -> Result<OperatorOutput> {
    let (lo, hi) = virtual_target.bounds();
    let d = domain.with_sigma(lo, hi)?;
    let m = flux_map(|s| source.spatial_marginal(s), (d.l_min, d.l_max), virtual_target, cfg.grid_points)?;
    let c = ode_coeffs(&m, &d)?;
    let h = adjust_h(&c, cfg.h_min)?;
    let reflector = solve_reflector(&c, h)?;
    let profile = reflector.profile(&d)?;
    let histogram = trace(&profile, source, cfg.n_rays, cfg.bins)?;
    let dens = histogram.densities();
    let width = histogram.bin_width();
    let mass: f64 = dens.iter().sum::<f64>() * width;
    if !(mass > 0.0) {
        return Err(Error::ZeroFlux { context: "traced image" });
    }
    let k = flux / mass;
    let binned = TargetSpec::from_samples(lo, hi, dens.iter().map(|v| v * k).collect())?;
    let values = if cfg.bins == virtual_target.len() {
        binned.samples().to_vec()
    } else {
        virtual_target.centers().iter().map(|&x| binned.density(x)).collect()
    };
    Ok(OperatorOutput { values, reflector, profile, histogram })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VanCittertConfig {
    pub eta: f64,
    pub iterations: usize,
}

impl Default for VanCittertConfig {
    fn default() -> Self {
        VanCittertConfig { eta: 0.5, iterations: 30 }
    }
}

/// What the iteration needs from a forward evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Blurred {
    pub values: Vec<f64>,
    /// Ray-traced error of the design behind `values`.
    pub nmae: f64,
    pub min_height: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRow {
    pub iteration: usize,
    pub nmae: f64,
    pub min_height: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VanCittertResult {
    /// `g̃⁽ᴺ⁾`.
    pub virtual_target: Vec<f64>,
    /// Row `n` describes the design built from `g̃⁽ⁿ⁾`, for `n = 0..=N`.
    pub trace: Vec<IterationRow>,
    pub best: usize,
    /// The iterate behind `best`.
    pub best_target: Vec<f64>,
}

impl VanCittertResult {
    pub fn final_nmae(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.nmae)
    }

    pub fn best_nmae(&self) -> f64 {
        self.trace[self.best].nmae
    }
}

/// Clipped Van Cittert iteration starting from `initial`.
pub fn van_cittert_from<P>(desired: &[f64], initial: &[f64], mut op: P, cfg: &VanCittertConfig) -> Result<VanCittertResult>
where
    P: FnMut(&[f64]) -> Result<Blurred>,
{
    if !(cfg.eta > 0.0 && cfg.eta <= 1.0) {
        return Err(Error::InvalidInput { context: "Van Cittert step must lie in (0, 1]" });
    }
    if desired.len() != initial.len() || initial.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput { context: "initial guess must be nonnegative on the target grid" });
    }
    let mut g = initial.to_vec();
    let mut rows = Vec::with_capacity(cfg.iterations + 1);
    let mut iterates = Vec::with_capacity(cfg.iterations + 1);
    for n in 0..=cfg.iterations {
        let out = op(&g)?;
        if out.values.len() != g.len() {
            return Err(Error::InvalidInput { context: "operator changed the sample count" });
        }
        rows.push(IterationRow {
            iteration: n,
            nmae: out.nmae,
            min_height: out.min_height,
            h: out.h,
        });
        iterates.push(g.clone());
        if n == cfg.iterations {
            break;
        }
        for i in 0..g.len() {
            let residual = desired[i] - out.values[i];
            g[i] = (g[i] + cfg.eta * residual).max(0.0);
        }
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.nmae < rows[best].nmae {
            best = i;
        }
    }
    Ok(VanCittertResult {
        virtual_target: g,
        trace: rows,
        best,
        best_target: iterates.swap_remove(best),
    })
}

/// Clipped Van Cittert iteration from `g̃⁽⁰⁾ = ĝ`.
pub fn van_cittert<P>(desired: &[f64], op: P, cfg: &VanCittertConfig) -> Result<VanCittertResult>
where
    P: FnMut(&[f64]) -> Result<Blurred>,
{
    van_cittert_from(desired, desired, op, cfg)
}

/// The whole baseline for one problem: every iterate is traced with the
/// operator's own rays and scored against `desired`. Returns the iteration
/// record and the operator output of the best-scoring iterate.
pub fn deconvolve(
    desired: &TargetSpec,
    source: &SourceSpec,
    domain: &DomainSpec,
    op_cfg: &OperatorConfig,
    vc_cfg: &VanCittertConfig,
) -> Result<(VanCittertResult, OperatorOutput)> {
    let (lo, hi) = desired.bounds();
    let flux = desired.total_flux();
    let mut best: Option<(f64, OperatorOutput)> = None;
    let result = van_cittert(
        desired.samples(),
        |g| {
            let vt = TargetSpec::from_samples(lo, hi, g.to_vec())?;
            let out = operator_p(&vt, source, domain, flux, op_cfg)?;
            let score = nmae_against(&out.histogram, desired)?;
            let blurred = Blurred {
                values: out.values.clone(),
                nmae: score,
                min_height: out.reflector.min_height(),
                h: out.reflector.h,
            };
            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                best = Some((score, out));
            }
            Ok(blurred)
        },
        vc_cfg,
    )?;
    let (_, out) = best.ok_or(Error::InvalidInput { context: "no Van Cittert evaluations" })?;
    Ok((result, out))
}
