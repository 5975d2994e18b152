//! Change-of-variables loss for continuous sources.
//!
//! The far field of a reflector is `g(σ) = ∫_Ω f(m⁻¹(p, σ)) |det ∂m⁻¹/∂(p, σ)| dp`.
//! The network is evaluated only at the Gauss–Legendre abscissae; at each
//! `(p_k, σ_i)` the integrand and its sensitivity to the local jet
//! `(u, u′, u″)` come from nested forward-mode duals in plain `f64`, and each
//! `g(σ_i)` enters the tape as a single pre-linearised node.

use alloc::vec::Vec;

use super::penalty::{self, HeightPenalty};
use crate::autodiff::Dual;
use crate::density::{SourceSpec, TargetSpec};
use crate::geometry::{inverse_map_jet, DomainSpec, ReflectorProfile};
use crate::mlp::{MlpParams, Order};
use crate::par::map_indexed;
use crate::quadrature::GaussLegendre;
use crate::real::Real;
use crate::{Error, Result};

type D3 = Dual<f64, 3>;
type D3x2 = Dual<D3, 2>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectLossConfig {
    /// Gauss–Legendre nodes for the `p` integral.
    pub n_p: usize,
    pub penalty: Option<HeightPenalty>,
}

impl Default for DirectLossConfig {
    fn default() -> Self {
        DirectLossConfig { n_p: 64, penalty: None }
    }
}

/// Pulled-back density at one target point and its derivative with respect
/// to the height jet `(u, u′, u″)` at that `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulledBack {
    pub value: f64,
    pub d_jet: [f64; 3],
}

pub fn pulled_back_density_jet(
    p: f64,
    sigma: f64,
    jet: [f64; 3],
    source: &SourceSpec,
    d: &DomainSpec,
) -> Result<PulledBack> {
    let zero = D3::constant(0.0);
    let pp = D3x2::new(D3::constant(p), [D3::constant(1.0), zero]);
    let ss = D3x2::new(D3::constant(sigma), [zero, D3::constant(1.0)]);
    let u = D3x2::new(D3::variable(jet[0], 0), [D3::new(jet[1], [0.0, 1.0, 0.0]), zero]);
    let du = D3x2::new(D3::variable(jet[1], 1), [D3::new(jet[2], [0.0, 0.0, 1.0]), zero]);
    let bt = inverse_map_jet(pp, ss, u, du, d)?;
    if !bt.in_domain {
        return Ok(PulledBack { value: 0.0, d_jet: [0.0; 3] });
    }
    let det = bt.s.eps[0] * bt.alpha.eps[1] - bt.s.eps[1] * bt.alpha.eps[0];
    let g = source.density(bt.s.re, bt.alpha.re) * det.abs();
    if !g.is_finite() || g.eps.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite { context: "pulled-back density" });
    }
    Ok(PulledBack { value: g.re, d_jet: g.eps })
}

/// `f(m⁻¹(p, σ)) |det J|` for a fixed profile.
pub fn pulled_back_density<P: ReflectorProfile + ?Sized>(
    prof: &P,
    p: f64,
    sigma: f64,
    source: &SourceSpec,
) -> Result<f64> {
    let j = prof.jet(p);
    let jet = [j.u, j.du, prof.curvature(p)];
    Ok(pulled_back_density_jet(p, sigma, jet, source, prof.domain())?.value)
}

/// `g(σ)` by `n_p`-point Gauss–Legendre in `p`.
pub fn marginal_g<P: ReflectorProfile + ?Sized>(
    prof: &P,
    source: &SourceSpec,
    sigma: f64,
    n_p: usize,
) -> Result<f64> {
    if n_p < 8 {
        return Err(Error::InvalidInput { context: "marginal quadrature needs at least 8 nodes" });
    }
    let d = prof.domain();
    let (ps, ws) = GaussLegendre::new(n_p)?.on_interval(d.l_min, d.l_max);
    let mut acc = 0.0;
    for (&p, &w) in ps.iter().zip(&ws) {
        acc += w * pulled_back_density(prof, p, sigma, source)?;
    }
    Ok(acc)
}

/// Per-`σ_i` marginal values and their sensitivity to each node's jet.
struct Marginals {
    values: Vec<f64>,
    /// `sens[i][3k + c]` is `∂g(σ_i)/∂jet_k[c]`.
    sens: Vec<Vec<f64>>,
}

fn marginals(jets: &[[f64; 3]], ps: &[f64], ws: &[f64], sigmas: &[f64], source: &SourceSpec) -> Result<Marginals> {
    let d = source.domain();
    let rows = map_indexed(sigmas.len(), |i| -> Result<(f64, Vec<f64>)> {
        let mut value = 0.0;
        let mut sens = alloc::vec![0.0; 3 * ps.len()];
        for k in 0..ps.len() {
            let pb = pulled_back_density_jet(ps[k], sigmas[i], jets[k], source, d)?;
            value += ws[k] * pb.value;
            for c in 0..3 {
                sens[3 * k + c] = ws[k] * pb.d_jet[c];
            }
        }
        Ok((value, sens))
    });
    let mut out = Marginals {
        values: Vec::with_capacity(sigmas.len()),
        sens: Vec::with_capacity(sigmas.len()),
    };
    for r in rows {
        let (v, s) = r?;
        out.values.push(v);
        out.sens.push(s);
    }
    Ok(out)
}

/// `|Σ| · mean_i (g_θ(σ_i) − ĝ(σ_i))²` over the target's cell centres,
/// plus the optional height penalty.
pub fn direct_loss<R: Real>(
    net: &MlpParams,
    theta: &[R],
    source: &SourceSpec,
    target: &TargetSpec,
    cfg: &DirectLossConfig,
) -> Result<R> {
    if !source.is_continuous() {
        return Err(Error::DiscontinuousSource);
    }
    if cfg.n_p < 8 {
        return Err(Error::InvalidInput { context: "marginal quadrature needs at least 8 nodes" });
    }
    let d = source.domain();
    let (ps, ws) = GaussLegendre::new(cfg.n_p)?.on_interval(d.l_min, d.l_max);
    let jets: Vec<_> = ps.iter().map(|&p| net.jet(theta, p, Order::Second)).collect();
    let jet_values: Vec<[f64; 3]> = jets
        .iter()
        .map(|j| [j.u.value(), j.du.value(), j.d2u.value()])
        .collect();
    let sigmas = target.centers();
    let m = marginals(&jet_values, &ps, &ws, &sigmas, source)?;

    let mut terms: Vec<(R, f64)> = Vec::with_capacity(3 * ps.len());
    let mut residuals: Vec<(R, f64)> = Vec::with_capacity(sigmas.len());
    let mut sq = 0.0;
    for (i, &g_hat) in target.samples().iter().enumerate() {
        terms.clear();
        for (k, j) in jets.iter().enumerate() {
            terms.push((j.u, m.sens[i][3 * k]));
            terms.push((j.du, m.sens[i][3 * k + 1]));
            terms.push((j.d2u, m.sens[i][3 * k + 2]));
        }
        let g = R::lincomb(m.values[i], &terms);
        let r = m.values[i] - g_hat;
        sq += r * r;
        residuals.push((g, 2.0 * r));
    }
    let n = sigmas.len() as f64;
    let (lo, hi) = target.bounds();
    let sum_sq = R::lincomb(sq, &residuals);
    let loss = sum_sq * ((hi - lo) / n);
    penalty::apply(loss, net, theta, cfg.penalty.as_ref())
}

/// The same loss for a fixed profile, in plain `f64`.
pub fn direct_loss_value<P: ReflectorProfile + ?Sized>(
    prof: &P,
    source: &SourceSpec,
    target: &TargetSpec,
    n_p: usize,
) -> Result<f64> {
    if !source.is_continuous() {
        return Err(Error::DiscontinuousSource);
    }
    let sigmas = target.centers();
    let mut acc = 0.0;
    for (s, g_hat) in sigmas.iter().zip(target.samples()) {
        let r = marginal_g(prof, source, *s, n_p)? - g_hat;
        acc += r * r;
    }
    let (lo, hi) = target.bounds();
    Ok(acc * (hi - lo) / sigmas.len() as f64)
}
