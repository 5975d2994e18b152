//! Limited-memory BFGS with Armijo backtracking.
//!
//! The iterate sequence depends only on the objective's values and
//! gradients, never on the clock; the clock only stamps the trace.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Seconds since some fixed origin.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// A clock that never advances; used where no time source exists.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub max_iters: usize,
    /// Stop once the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
    pub memory: usize,
    /// Powell-damp curvature pairs instead of skipping the ones with
    /// non-positive curvature.
    pub damping: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iters: 500,
            grad_tol: 1e-10,
            c1: 1e-4,
            backtrack: 0.5,
            max_halvings: 60,
            memory: 10,
            damping: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol > 0.0
            && self.c1 > 0.0
            && self.c1 < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.memory > 0
            && self.max_halvings > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput { context: "optimizer configuration" })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Row 0 is the starting point; one row per accepted step after that.
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    pub evaluations: usize,
    pub skipped_updates: usize,
}

/// Failure with the state reached so far.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimFailure {
    pub error: Error,
    pub reached: Minimum,
}

impl From<OptimFailure> for Error {
    fn from(f: OptimFailure) -> Self {
        f.error
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g`.
fn direction(pairs: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (p, a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Minimise `objective`, which returns the loss and its gradient.
///
/// A step whose evaluation fails or is non-finite is treated like one that
/// misses the Armijo condition: the step length is cut and the line search
/// continues. Only the evaluation at `theta0` must succeed.
pub fn minimize<F, C>(mut objective: F, theta0: &[f64], cfg: &OptimConfig, clock: &C) -> core::result::Result<Minimum, OptimFailure>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: Clock + ?Sized,
{
    let start = clock.seconds();
    let mut state = Minimum {
        theta: theta0.to_vec(),
        loss: f64::NAN,
        grad_norm: f64::NAN,
        iterations: 0,
        trace: Vec::new(),
        stop: StopReason::MaxIterations,
        evaluations: 0,
        skipped_updates: 0,
    };
    if let Err(error) = cfg.validate() {
        return Err(OptimFailure { error, reached: state });
    }
    let fail = |error, state| Err(OptimFailure { error, reached: state });

    state.evaluations += 1;
    let (mut loss, mut g) = match objective(theta0) {
        Ok(v) => v,
        Err(e) => return fail(e, state),
    };
    if !loss.is_finite() || g.len() != theta0.len() || g.iter().any(|v| !v.is_finite()) {
        return fail(Error::NonFinite { context: "objective at the starting point" }, state);
    }
    state.loss = loss;
    state.grad_norm = norm(&g);
    state.trace.push(TraceRow {
        iteration: 0,
        loss,
        grad_norm: state.grad_norm,
        elapsed_s: clock.seconds() - start,
    });

    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut theta = theta0.to_vec();
    for iter in 1..=cfg.max_iters {
        if state.grad_norm < cfg.grad_tol {
            state.stop = StopReason::GradientTolerance;
            return Ok(state);
        }
        let mut d = direction(&pairs, &g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) || d.iter().any(|v| !v.is_finite()) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if pairs.is_empty() { (1.0 / norm(&d)).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = theta.iter().zip(&d).map(|(t, di)| t + step * di).collect();
            if trial == theta {
                // the step no longer moves any coordinate
                step *= cfg.backtrack;
                continue;
            }
            state.evaluations += 1;
            if let Ok((l, gt)) = objective(&trial) {
                let finite = l.is_finite() && gt.len() == g.len() && gt.iter().all(|v| v.is_finite());
                if finite && l <= loss + cfg.c1 * step * slope {
                    accepted = Some((trial, l, gt));
                    break;
                }
            }
            step *= cfg.backtrack;
        }
        let Some((next, next_loss, next_g)) = accepted else {
            return fail(Error::LineSearchStall { iteration: iter }, state);
        };

        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let mut y: Vec<f64> = next_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let mut sy = dot(&s, &y);
        if cfg.damping {
            // initial inverse Hessian guess γI, so s·Bs = s·s/γ
            let gamma = pairs.back().map_or(1.0, |p| dot(&p.s, &p.y) / dot(&p.y, &p.y));
            let sbs = dot(&s, &s) / gamma;
            if sy < 0.2 * sbs {
                let t = 0.8 * sbs / (sbs - sy);
                for (yi, si) in y.iter_mut().zip(&s) {
                    *yi = t * *yi + (1.0 - t) * si / gamma;
                }
                sy = dot(&s, &y);
            }
        }
        if sy > 1e-12 * norm(&s) * norm(&y) && sy.is_finite() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back(Pair { s, y, rho: 1.0 / sy });
        } else {
            state.skipped_updates += 1;
        }

        theta = next;
        loss = next_loss;
        g = next_g;
        state.theta.clone_from(&theta);
        state.loss = loss;
        state.grad_norm = norm(&g);
        state.iterations = iter;
        state.trace.push(TraceRow {
            iteration: iter,
            loss,
            grad_norm: state.grad_norm,
            elapsed_s: clock.seconds() - start,
        });
    }
    state.stop = if state.grad_norm < cfg.grad_tol {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIterations
    };
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn quadratic(c: &[f64]) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + '_ {
        move |x| {
            let r: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
            Ok((dot(&r, &r), r.iter().map(|v| 2.0 * v).collect()))
        }
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_converges_quickly() {
        let c = [1.5, -2.0, 0.25, 7.0];
        for start in [[0.0; 4], [100.0, -3.0, 5.0, 1e3]] {
            let m = minimize(quadratic(&c), &start, &OptimConfig::default(), &NoClock).unwrap();
            assert!(m.iterations <= 10, "{} iterations", m.iterations);
            for (t, ci) in m.theta.iter().zip(&c) {
                assert!((t - ci).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let cfg = OptimConfig { max_iters: 1000, ..OptimConfig::default() };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &cfg, &NoClock).unwrap();
        assert!((m.theta[0] - 1.0).abs() < 1e-6 && (m.theta[1] - 1.0).abs() < 1e-6, "{:?}", m.theta);
        for w in m.trace.windows(2) {
            assert!(w[1].loss <= w[0].loss);
        }
        let again = minimize(rosenbrock, &[-1.2, 1.0], &cfg, &NoClock).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn damped_variant_also_converges() {
        let cfg = OptimConfig { max_iters: 1000, damping: true, ..OptimConfig::default() };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &cfg, &NoClock).unwrap();
        assert!((m.theta[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn failing_evaluations_shrink_the_step() {
        // undefined for x > 2; the minimiser at 1.9 sits close to the wall
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 2.0 {
                return Err(Error::Domain { what: "x", value: x[0] });
            }
            Ok(((x[0] - 1.9).powi(2), vec![2.0 * (x[0] - 1.9)]))
        };
        let m = minimize(f, &[-50.0], &OptimConfig::default(), &NoClock).unwrap();
        assert!((m.theta[0] - 1.9).abs() < 1e-8);
    }

    #[test]
    fn stall_reports_state() {
        // gradient points the wrong way, so no step can decrease the loss
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![-2.0 * x[0] - 1.0])) };
        let err = minimize(f, &[1.0], &OptimConfig::default(), &NoClock).unwrap_err();
        assert_eq!(err.error, Error::LineSearchStall { iteration: 1 });
        assert_eq!(err.reached.trace.len(), 1);
        assert!(err.reached.evaluations <= 62);
    }

    #[test]
    fn non_positive_curvature_is_skipped() {
        // concave-then-convex 1D function: early pairs have y·s < 0
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let t = x[0];
            Ok((t.powi(4) - 3.0 * t * t + t, vec![4.0 * t.powi(3) - 6.0 * t + 1.0]))
        };
        let m = minimize(f, &[0.1], &OptimConfig::default(), &NoClock).unwrap();
        assert!(m.grad_norm < 1e-8);
        assert!(m.theta[0].is_finite());
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = OptimConfig { backtrack: 1.0, ..OptimConfig::default() };
        assert!(minimize(quadratic(&[0.0]), &[1.0], &cfg, &NoClock).is_err());
    }
}
