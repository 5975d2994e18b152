//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. `ACCEPTANCE_ONLY=2,5` restricts the run.

use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reflector::bench::{evaluate, materialize, run_deconv, run_network, sweep_height, Problem};
use reflector::config::{Config, Example, Method};
use reflector::solve::{loss_and_gradient, loss_value, NetLoss, WallClock};
use reflector_core::autodiff::grad;
use reflector_core::deconv::{
    ode_coeffs, ray_check, solve_reflector, tabulate_map, van_cittert, van_cittert_from, Blurred, VanCittertConfig, GRID_POINTS,
};
use reflector_core::geometry::DomainSpec;
use reflector_core::limitcase::{point_source_design, scaling_convergence, trace_point_source};
use reflector_core::loss::mesh::profile_cells;
use reflector_core::loss::{direct_loss, height_penalty, marginal_g, QuadMesh};
use reflector_core::mlp::{MlpParams, Order};
use reflector_core::raytrace::{nmae_against, trace};
use reflector_core::{Error, Result};

// Pinned tolerances.
const EPS_RT_MAX: f64 = 0.01;
const NN_FLOOR_FACTOR: f64 = 3.0;
const MAX_NN_ITERS: usize = 500;
const CONTINUITY_STEP: f64 = 1e-4;
const CONTINUITY_STEPS: usize = 1000;
const JUMP_FACTOR: f64 = 10.0;
const FD_STEP: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_PROBES: usize = 200;
const GRAD_PASS_FRACTION: f64 = 0.95;
const KINK_MARGIN: f64 = 1e-8;
const FLUX_TOL: f64 = 0.01;
const RAY_CHECK_TOL: f64 = 1e-4;
const SCALING_LIMIT_TOL: f64 = 1e-4;
const POINT_SOURCE_NMAE: f64 = 0.02;

struct Outcome {
    failures: usize,
}

impl Outcome {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} {id}. {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn error(&mut self, id: u32, name: &str, e: Error) {
        self.record(id, name, false, format!("error: {e}"));
    }
}

fn selected(id: u32) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(v) => v.split(',').any(|t| t.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

/// Lazily materialized benchmark problems, shared across criteria.
struct Problems {
    a: Option<(Config, Problem, f64)>,
    b: Option<(Config, Problem, f64)>,
}

impl Problems {
    fn get(&mut self, e: Example) -> Result<&(Config, Problem, f64)> {
        let slot = match e {
            Example::B => &mut self.b,
            _ => &mut self.a,
        };
        if slot.is_none() {
            let cfg = Config::example(e);
            let (p, secs) = timed(|| materialize(&cfg));
            *slot = Some((cfg, p?, secs));
        }
        Ok(slot.as_ref().unwrap())
    }
}

fn main() {
    let mut out = Outcome { failures: 0 };
    let mut problems = Problems { a: None, b: None };
    let mut eps_rt = None;

    if selected(1) || selected(2) {
        let name = "ground-truth self-consistency floor";
        match floor(&mut problems) {
            Ok((e, secs)) => {
                eps_rt = Some(e);
                if selected(1) {
                    out.record(1, name, e < EPS_RT_MAX && secs < 30.0, format!("eps_rt {e:.4e} (< {EPS_RT_MAX}), {secs:.1} s (< 30 s)"));
                }
            }
            Err(e) => out.error(1, name, e),
        }
    }
    if selected(2) {
        let name = "Example A, direct loss vs deconvolution";
        match (eps_rt, problems.get(Example::A)) {
            (Some(eps), Ok((cfg, p, _))) => match compare(p, cfg, Method::Direct) {
                Ok(c) => out.record(
                    2,
                    name,
                    c.nn <= NN_FLOOR_FACTOR * eps && c.nn < c.deconv && c.iterations <= MAX_NN_ITERS && c.seconds < 600.0,
                    format!(
                        "network {:.4e} (<= {:.4e}), deconvolution {:.4e}, {} iterations, {:.1} s",
                        c.nn,
                        NN_FLOOR_FACTOR * eps,
                        c.deconv,
                        c.iterations,
                        c.seconds
                    ),
                ),
                Err(e) => out.error(2, name, e),
            },
            (None, _) => out.record(2, name, false, "floor unavailable".into()),
            (_, Err(e)) => out.error(2, name, e),
        }
    }
    if selected(3) {
        let name = "Example B, mesh loss vs deconvolution";
        match example_b(&mut problems) {
            Ok((pass, detail)) => out.record(3, name, pass, detail),
            Err(e) => out.error(3, name, e),
        }
    }
    if selected(4) {
        let name = "Example C, height sweep";
        match problems.get(Example::C) {
            Ok((cfg, p, _)) => {
                let (rows, secs) = timed(|| sweep_height(p, cfg, Method::Direct, 1));
                match rows {
                    Ok(rows) => {
                        let all = rows.iter().all(|r| r.nn_nmae <= r.deconv_nmae);
                        let detail: Vec<String> = rows
                            .iter()
                            .map(|r| format!("x{}: {:.3e}/{:.3e}", r.factor, r.nn_nmae, r.deconv_nmae))
                            .collect();
                        out.record(4, name, all && rows.len() == 5 && secs < 1800.0, format!("{} ({secs:.0} s)", detail.join(", ")));
                    }
                    Err(e) => out.error(4, name, e),
                }
            }
            Err(e) => out.error(4, name, e),
        }
    }
    if selected(5) {
        let name = "gradients vs central differences";
        match gradient_suite(&mut problems) {
            Ok((pass, detail)) => out.record(5, name, pass, detail),
            Err(e) => out.error(5, name, e),
        }
    }
    if selected(6) {
        let name = "flux conservation";
        match conservation(&mut problems) {
            Ok((pass, detail)) => out.record(6, name, pass, detail),
            Err(e) => out.error(6, name, e),
        }
    }
    if selected(7) {
        let name = "deconvolution baseline chain";
        match baseline_chain() {
            Ok((pass, detail)) => out.record(7, name, pass, detail),
            Err(e) => out.error(7, name, e),
        }
    }
    if selected(8) {
        let name = "scaling limit and point-source design";
        match limit_case(&mut problems) {
            Ok((pass, detail)) => out.record(8, name, pass, detail),
            Err(e) => out.error(8, name, e),
        }
    }
    if selected(9) {
        let name = "bit-identical reruns";
        match determinism(&mut problems) {
            Ok((pass, detail)) => out.record(9, name, pass, detail),
            Err(e) => out.error(9, name, e),
        }
    }

    println!("{} criteria failed", out.failures);
    if out.failures > 0 {
        std::process::exit(1);
    }
}

/// NMAE of the ground truth against its own derived target. The time covers
/// building the problem and the evaluation trace.
fn floor(problems: &mut Problems) -> Result<(f64, f64)> {
    let (cfg, p, build) = problems.get(Example::A)?;
    let (r, secs) = timed(|| evaluate(&p.truth, p, cfg));
    Ok((r?.1, build + secs))
}

struct Comparison {
    nn: f64,
    deconv: f64,
    iterations: usize,
    seconds: f64,
}

fn compare(p: &Problem, cfg: &Config, method: Method) -> Result<Comparison> {
    let t = Instant::now();
    let nn = run_network(p, cfg, method, None, &WallClock::start())?;
    let dc = run_deconv(p, cfg, None)?;
    Ok(Comparison {
        nn: nn.nmae,
        deconv: dc.final_nmae(),
        iterations: nn.minimum.iterations,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Largest increment along the line relative to its larger neighbour.
fn worst_jump(values: &[f64]) -> f64 {
    let d: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-13 * scale;
    let mut worst: f64 = 0.0;
    for k in 1..d.len() - 1 {
        let local = d[k - 1].max(d[k + 1]).max(floor);
        worst = worst.max(d[k] / local);
    }
    worst
}

fn example_b(problems: &mut Problems) -> Result<(bool, String)> {
    let (cfg, p, _) = problems.get(Example::B)?;
    let c = compare(p, cfg, Method::Mesh)?;
    let ordering = c.nn < c.deconv && c.iterations <= MAX_NN_ITERS && c.seconds < 600.0;

    let net = MlpParams::init(&cfg.network.sizes, cfg.network.seed, (p.domain.l_min, p.domain.l_max))?;
    let refused = matches!(
        direct_loss(&net, net.theta(), &p.source, &p.target, &cfg.direct(None)),
        Err(Error::DiscontinuousSource)
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut dir: Vec<f64> = (0..net.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let loss = NetLoss::Mesh(cfg.mesh(None));
    let line: Vec<f64> = (0..=CONTINUITY_STEPS)
        .map(|k| {
            let t = k as f64 * CONTINUITY_STEP;
            let th: Vec<f64> = net.theta().iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            loss_value(&net, &th, &p.source, &p.target, &loss)
        })
        .collect::<Result<_>>()?;
    let jump = worst_jump(&line);
    let continuous = jump <= JUMP_FACTOR;
    Ok((
        ordering && refused && continuous,
        format!(
            "network {:.4e}, deconvolution {:.4e}, {} iterations, {:.1} s; direct loss refuses source: {refused}; worst jump ratio {jump:.2} (<= {JUMP_FACTOR})",
            c.nn, c.deconv, c.iterations, c.seconds
        ),
    ))
}

/// Fraction of probe coordinates whose AD derivative matches central
/// differences, together with the number of probes excluded as kinks.
fn probe<F, K>(grad_at: &[f64], theta: &[f64], coords: &[usize], mut f: F, mut near_kink: K) -> Result<(usize, usize)>
where
    F: FnMut(&[f64]) -> Result<f64>,
    K: FnMut(&[f64]) -> bool,
{
    let (mut ok, mut used) = (0, 0);
    for &i in coords {
        let mut a = theta.to_vec();
        let mut b = theta.to_vec();
        a[i] += FD_STEP;
        b[i] -= FD_STEP;
        if near_kink(&a) || near_kink(&b) || near_kink(theta) {
            continue;
        }
        used += 1;
        let fd = (f(&a)? - f(&b)?) / (2.0 * FD_STEP);
        let g = grad_at[i];
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
        if rel < GRAD_REL_TOL || g == fd {
            ok += 1;
        }
    }
    Ok((ok, used))
}

/// Whether the two smallest sampled heights are within the kink margin, so
/// that the active minimum could switch inside the difference stencil.
fn min_is_ambiguous(net: &MlpParams, theta: &[f64], grid: usize) -> bool {
    let (lo, hi) = net.input_range();
    let mut h: Vec<f64> = (0..grid)
        .map(|i| net.jet(theta, lo + (hi - lo) * i as f64 / (grid - 1) as f64, Order::Value).u)
        .collect();
    h.sort_by(f64::total_cmp);
    h[1] - h[0] < KINK_MARGIN
}

fn gradient_suite(problems: &mut Problems) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut parts = Vec::new();
    let mut pass = true;
    let mut tally = |label: &str, (ok, used): (usize, usize)| {
        let frac = ok as f64 / used.max(1) as f64;
        pass &= used > 0 && frac >= GRAD_PASS_FRACTION;
        parts.push(format!("{label} {ok}/{used}"));
    };

    let (cfg, p, _) = problems.get(Example::A)?.clone();
    let net = MlpParams::init(&cfg.network.sizes, cfg.network.seed, (p.domain.l_min, p.domain.l_max))?;
    let coords = sample(&mut rng, net.len(), GRAD_PROBES).into_vec();
    let direct = NetLoss::Direct(cfg.direct(None));
    let (_, g) = loss_and_gradient(&net, net.theta(), &p.source, &p.target, &direct)?;
    tally(
        "direct",
        probe(&g, net.theta(), &coords, |th| loss_value(&net, th, &p.source, &p.target, &direct), |_| false)?,
    );

    let h_min = p.truth_min_height();
    let grid = cfg.network.penalty_grid;
    let (_, g) = grad(|_, th| height_penalty(&net, th, h_min, grid).expect("valid grid"), net.theta())
        .map_err(Error::from)?;
    tally(
        "penalty",
        probe(
            &g,
            net.theta(),
            &coords,
            |th| height_penalty(&net, th, h_min, grid),
            |th| min_is_ambiguous(&net, th, grid),
        )?,
    );

    let (cfg, p, _) = problems.get(Example::B)?.clone();
    let mesh = NetLoss::Mesh(cfg.mesh(None));
    let (_, g) = loss_and_gradient(&net, net.theta(), &p.source, &p.target, &mesh)?;
    tally(
        "mesh",
        probe(&g, net.theta(), &coords, |th| loss_value(&net, th, &p.source, &p.target, &mesh), |_| false)?,
    );
    let detail = format!("{} within {GRAD_REL_TOL:e} (need {:.0}%)", parts.join(", "), 100.0 * GRAD_PASS_FRACTION);
    Ok((pass, detail))
}

/// `∫ g dσ` by the midpoint rule with `p` integrated by the loss quadrature.
fn pushforward_flux(p: &Problem) -> Result<f64> {
    const NODES: usize = 2048;
    const P_NODES: usize = 256;
    let (lo, hi) = p.target.bounds();
    let w = (hi - lo) / NODES as f64;
    let mut acc = 0.0;
    for i in 0..NODES {
        acc += w * marginal_g(&p.truth, &p.source, lo + w * (i as f64 + 0.5), P_NODES)?;
    }
    Ok(acc)
}

fn conservation(problems: &mut Problems) -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for e in [Example::A, Example::B] {
        let (cfg, p, _) = problems.get(e)?.clone();
        let flux = p.source.total_flux();
        let push = pushforward_flux(&p)?;
        let qm = QuadMesh::new(&p.domain, p.target.bounds(), cfg.network.mesh_p_cells, cfg.network.mesh_sigma_cells)?;
        let mass: f64 = profile_cells(&p.truth, &p.source, &qm, cfg.network.mesh_samples)?.iter().map(|c| c.integral).sum();
        let traced = trace(&p.truth, &p.source, cfg.trace.rays, cfg.trace.bins)?.binned_flux();
        let rel = |v: f64| (v - flux).abs() / flux;
        pass &= rel(push) < FLUX_TOL && rel(mass) < FLUX_TOL && rel(traced) < FLUX_TOL;
        parts.push(format!(
            "{e:?}: pushforward {:.2e}, mesh {:.2e}, traced {:.2e}",
            rel(push),
            rel(mass),
            rel(traced)
        ));
    }
    Ok((pass, format!("relative errors {} (< {FLUX_TOL})", parts.join("; "))))
}

fn baseline_chain() -> Result<(bool, String)> {
    let d = DomainSpec::new((-1.0, 1.0), (FRAC_PI_4, 3.0 * FRAC_PI_4), (-1.0, 1.0))?;
    let m = tabulate_map(|s| s * s * s, &d, GRID_POINTS);
    let c = ode_coeffs(&m, &d)?;
    let mut worst: f64 = 0.0;
    for h in [0.5, 1.0, 2.0] {
        let sol = solve_reflector(&c, h)?;
        worst = worst.max(ray_check(&sol.u, &m, &d)?);
    }

    // Dyadic values keep the one-step update free of rounding.
    let desired = [0.25, 1.25, 0.0, 2.5, 0.75];
    let start = [1.0, 0.5, 3.0, 0.0, 0.125];
    let identity = |g: &[f64]| -> Result<Blurred> { Ok(Blurred { values: g.to_vec(), nmae: 0.0, min_height: 1.0, h: 1.0 }) };
    let one = VanCittertConfig { eta: 1.0, iterations: 1 };
    let from_start = van_cittert_from(&desired, &start, identity, &one)?;
    let from_target = van_cittert(&desired, identity, &one)?;
    let exact = from_start.virtual_target == desired && from_target.virtual_target == desired;
    Ok((
        worst < RAY_CHECK_TOL && exact,
        format!("worst ray check {worst:.2e} (< {RAY_CHECK_TOL:e}); identity Van Cittert exact: {exact}"),
    ))
}

fn limit_case(problems: &mut Problems) -> Result<(bool, String)> {
    let (cfg, p, _) = problems.get(Example::A)?;
    let rows = scaling_convergence(&p.truth, &[10.0, 100.0, 1000.0, 1e6], cfg.limit.grid)?;
    let errs: Vec<f64> = rows.iter().map(|r| r.max_error).collect();
    let decreasing = errs[0] > errs[1] && errs[1] > errs[2];
    let (_, polar) = point_source_design(&p.source, &p.target, cfg.limit.h)?;
    let hist = trace_point_source(&polar, |a| p.source.angular_marginal(a), cfg.limit.rays, p.target.len(), p.target.bounds())?;
    let e = nmae_against(&hist, &p.target)?;
    Ok((
        decreasing && errs[3] < SCALING_LIMIT_TOL && e < POINT_SOURCE_NMAE,
        format!(
            "errors {:.3e} > {:.3e} > {:.3e}, {:.3e} at 1e6 (< {SCALING_LIMIT_TOL:e}); point-source NMAE {e:.3e} (< {POINT_SOURCE_NMAE})",
            errs[0], errs[1], errs[2], errs[3]
        ),
    ))
}

fn determinism(problems: &mut Problems) -> Result<(bool, String)> {
    let mut same = Vec::new();

    let cfg = Config::example(Example::A);
    let (_, first, _) = problems.get(Example::A)?.clone();
    let again = materialize(&cfg)?;
    same.push((
        "problem",
        first.domain == again.domain && first.target == again.target && first.truth.weights == again.truth.weights,
    ));

    let r1 = run_network(&first, &cfg, Method::Direct, None, &WallClock::start())?;
    let r2 = run_network(&again, &cfg, Method::Direct, None, &WallClock::start())?;
    let steps = |m: &reflector_core::optim::Minimum| -> Vec<(f64, f64)> { m.trace.iter().map(|r| (r.loss, r.grad_norm)).collect() };
    same.push((
        "network",
        r1.net.theta() == r2.net.theta() && steps(&r1.minimum) == steps(&r2.minimum) && r1.histogram == r2.histogram,
    ));

    let d1 = run_deconv(&first, &cfg, None)?;
    let d2 = run_deconv(&again, &cfg, None)?;
    same.push(("deconvolution", d1.result == d2.result && d1.best.histogram == d2.best.histogram));

    let (bcfg, b, _) = problems.get(Example::B)?.clone();
    let small = Config { network: reflector::config::NetworkConfig { max_iters: 20, ..bcfg.network.clone() }, ..bcfg };
    let m1 = run_network(&b, &small, Method::Mesh, Some(b.truth_min_height()), &WallClock::start())?;
    let m2 = run_network(&b, &small, Method::Mesh, Some(b.truth_min_height()), &WallClock::start())?;
    same.push(("mesh", m1.net.theta() == m2.net.theta() && m1.histogram == m2.histogram));

    let t1 = trace(&first.truth, &first.source, cfg.trace.rays, cfg.trace.bins)?;
    let t2 = trace(&again.truth, &again.source, cfg.trace.rays, cfg.trace.bins)?;
    same.push(("trace", t1 == t2));

    let s1 = scaling_convergence(&first.truth, &cfg.limit.lambdas, cfg.limit.grid)?;
    let s2 = scaling_convergence(&again.truth, &cfg.limit.lambdas, cfg.limit.grid)?;
    same.push(("limit", s1 == s2));

    let pass = same.iter().all(|(_, s)| *s);
    let detail: Vec<String> = same.iter().map(|(n, s)| format!("{n} {}", if *s { "identical" } else { "DIFFERS" })).collect();
    Ok((pass, detail.join(", ")))
}
