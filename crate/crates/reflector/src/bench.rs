//! Benchmark problems and the pipelines that solve and score them.

use reflector_core::deconv::{deconvolve, OperatorOutput, VanCittertResult};
use reflector_core::density::{SourceSpec, TargetSpec};
use reflector_core::geometry::{DomainSpec, ReflectorProfile, TabulatedProfile};
use reflector_core::mlp::MlpParams;
use reflector_core::optim::{Clock, Minimum};
use reflector_core::raytrace::{far_field_range, nmae_against, trace, FarFieldHistogram};
use reflector_core::{Error, Result};

use crate::config::{Config, Method, TargetKind};
use crate::solve::{fit, NetLoss, WallClock};
use crate::truth::{make_ground_truth, ThinPlateSpline, CHECK_GRID};

/// Grid used to find the reachable far-field range.
const RANGE_GRID: usize = 257;

pub fn sampled_min_height<P: ReflectorProfile + ?Sized>(prof: &P, grid: usize) -> f64 {
    let d = prof.domain();
    (0..grid)
        .map(|i| prof.height(d.l_min + d.omega_len() * i as f64 / (grid - 1) as f64))
        .fold(f64::INFINITY, f64::min)
}

/// A materialized benchmark: every domain carries the final `Σ`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub domain: DomainSpec,
    pub source: SourceSpec,
    pub truth: ThinPlateSpline,
    pub target: TargetSpec,
}

impl Problem {
    pub fn truth_min_height(&self) -> f64 {
        self.truth.min_height(CHECK_GRID)
    }
}

/// Traced `σ` range of `prof` padded by `pad` of its width on both sides.
pub fn far_field_window<P: ReflectorProfile + ?Sized>(prof: &P, pad: f64) -> Result<(f64, f64)> {
    let (lo, hi) = far_field_range(prof, RANGE_GRID)?;
    let w = pad * (hi - lo);
    Ok((lo - w, hi + w))
}

/// Bin densities of a high-resolution trace, rescaled to carry the source flux.
pub fn derive_target<P: ReflectorProfile + ?Sized>(
    prof: &P,
    source: &SourceSpec,
    bins: usize,
    rays: usize,
) -> Result<TargetSpec> {
    let (lo, hi) = (prof.domain().t_min, prof.domain().t_max);
    let hist = trace(prof, source, rays, bins)?;
    let binned = hist.binned_flux();
    if !(binned > 0.0) {
        return Err(Error::ZeroFlux { context: "ground-truth trace" });
    }
    let k = source.total_flux() / binned;
    TargetSpec::from_samples(lo, hi, hist.densities().iter().map(|v| v * k).collect())
}

/// The ground truth and the domain whose `Σ` is its padded far-field range.
pub fn truth_and_domain(cfg: &Config) -> Result<(ThinPlateSpline, DomainSpec)> {
    let base = cfg.domain_spec().map_err(|_| Error::InvalidInput { context: "domain" })?;
    let truth = make_ground_truth(cfg.target.truth_seed, base)?;
    let (lo, hi) = far_field_window(&truth, cfg.target.pad)?;
    let domain = base.with_sigma(lo, hi)?;
    Ok((truth.with_domain(domain), domain))
}

pub fn materialize(cfg: &Config) -> Result<Problem> {
    let (truth, domain) = truth_and_domain(cfg)?;
    let (lo, hi) = (domain.t_min, domain.t_max);
    let source = cfg
        .source_spec()
        .map_err(|_| Error::InvalidInput { context: "source" })?
        .with_domain(domain);
    let target = match cfg.target.kind {
        TargetKind::Derived => derive_target(&truth, &source, cfg.target.bins, cfg.target.rays)?,
        TargetKind::Uniform => TargetSpec::uniform(lo, hi, cfg.target.bins, source.total_flux())?,
    };
    Ok(Problem { domain, source, truth, target })
}

/// Trace at the evaluation resolution and the NMAE against the target.
pub fn evaluate<P: ReflectorProfile + ?Sized>(prof: &P, problem: &Problem, cfg: &Config) -> Result<(FarFieldHistogram, f64)> {
    let hist = trace(prof, &problem.source, cfg.trace.rays, cfg.trace.bins)?;
    let e = nmae_against(&hist, &problem.target)?;
    Ok((hist, e))
}

pub struct NetRun {
    pub net: MlpParams,
    pub minimum: Minimum,
    pub histogram: FarFieldHistogram,
    pub nmae: f64,
    /// Set when the optimizer stopped early; the run holds the best point reached.
    pub stopped: Option<Error>,
    pub seconds: f64,
}

/// Cubic Hermite nodes used to trace a network; interpolation error is far
/// below the ray-tracing floor and the trace avoids network evaluations.
pub const TRACE_NODES: usize = 4097;

pub fn tabulate_network(net: &MlpParams, domain: DomainSpec) -> Result<TabulatedProfile> {
    TabulatedProfile::from_profile(&net.profile(domain), TRACE_NODES)
}

pub fn initial_network(problem: &Problem, cfg: &Config) -> Result<MlpParams> {
    MlpParams::init(&cfg.network.sizes, cfg.network.seed, (problem.domain.l_min, problem.domain.l_max))
}

pub fn net_loss(cfg: &Config, method: Method, h_min: Option<f64>) -> Result<NetLoss> {
    match method {
        Method::Direct => Ok(NetLoss::Direct(cfg.direct(h_min))),
        Method::Mesh => Ok(NetLoss::Mesh(cfg.mesh(h_min))),
        Method::Deconv => Err(Error::InvalidInput { context: "deconvolution is not a network loss" }),
    }
}

pub fn run_network<C: Clock>(problem: &Problem, cfg: &Config, method: Method, h_min: Option<f64>, clock: &C) -> Result<NetRun> {
    let start = clock.seconds();
    let net0 = initial_network(problem, cfg)?;
    let loss = net_loss(cfg, method, h_min)?;
    let (fitted, stopped) = match fit(&net0, &problem.source, &problem.target, &loss, &cfg.optim(), clock) {
        Ok(f) => (f, None),
        Err((e @ Error::LineSearchStall { .. }, Some(partial))) => (partial, Some(e)),
        Err((e, _)) => return Err(e),
    };
    let prof = tabulate_network(&fitted.net, problem.domain)?;
    let (histogram, nmae) = evaluate(&prof, problem, cfg)?;
    Ok(NetRun {
        net: fitted.net,
        minimum: fitted.minimum,
        histogram,
        nmae,
        stopped,
        seconds: clock.seconds() - start,
    })
}

pub struct DeconvRun {
    pub result: VanCittertResult,
    pub best: OperatorOutput,
    pub h_min: f64,
    pub seconds: f64,
}

impl DeconvRun {
    pub fn final_nmae(&self) -> f64 {
        self.result.final_nmae()
    }
    pub fn best_nmae(&self) -> f64 {
        self.result.best_nmae()
    }
}

/// Van Cittert deconvolution; the approximate designs keep `min u = h_min`,
/// the ground truth's minimum unless given.
pub fn run_deconv(problem: &Problem, cfg: &Config, h_min: Option<f64>) -> Result<DeconvRun> {
    let clock = WallClock::start();
    let h_min = h_min.unwrap_or_else(|| problem.truth_min_height());
    let (result, best) = deconvolve(
        &problem.target,
        &problem.source,
        &problem.domain,
        &cfg.operator(h_min),
        &cfg.van_cittert(),
    )?;
    Ok(DeconvRun { result, best, h_min, seconds: clock.seconds() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub factor: f64,
    pub h_min: f64,
    pub nn_nmae: f64,
    pub nn_min_height: f64,
    pub deconv_nmae: f64,
    pub deconv_min_height: f64,
}

/// Both solvers at `h_min = factor · min u_truth` for every configured
/// factor, spread over `jobs` threads. Rows keep the factor order.
pub fn sweep_height(problem: &Problem, cfg: &Config, method: Method, jobs: usize) -> Result<Vec<SweepRow>> {
    let gt_min = problem.truth_min_height();
    let factors = &cfg.sweep.factors;
    let point = |factor: f64| -> Result<SweepRow> {
        let h_min = factor * gt_min;
        let nn = run_network(problem, cfg, method, Some(h_min), &WallClock::start())?;
        let dc = run_deconv(problem, cfg, Some(h_min))?;
        Ok(SweepRow {
            factor,
            h_min,
            nn_nmae: nn.nmae,
            nn_min_height: sampled_min_height(&nn.net.profile(problem.domain), CHECK_GRID),
            deconv_nmae: dc.best_nmae(),
            deconv_min_height: dc.best.reflector.min_height(),
        })
    };
    let jobs = jobs.clamp(1, factors.len().max(1));
    let mut rows: Vec<Option<Result<SweepRow>>> = vec![None; factors.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let point = &point;
                scope.spawn(move || {
                    (j..factors.len()).step_by(jobs).map(|i| (i, point(factors[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                rows[i] = Some(r);
            }
        }
    });
    rows.into_iter().map(|r| r.expect("every sweep point ran")).collect()
}
