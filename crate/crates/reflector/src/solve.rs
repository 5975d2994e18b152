//! Network fitting: loss + gradient through the tape, driven by L-BFGS.

use std::time::Instant;

use reflector_core::autodiff::Tape;
use reflector_core::density::{SourceSpec, TargetSpec};
use reflector_core::loss::{direct_loss, mesh_loss, DirectLossConfig, MeshLossConfig};
use reflector_core::mlp::MlpParams;
use reflector_core::optim::{minimize, Clock, Minimum, OptimConfig, OptimFailure};
use reflector_core::{Error, Real, Result};

/// Seconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NetLoss {
    Direct(DirectLossConfig),
    Mesh(MeshLossConfig),
}

/// Loss and parameter gradient of a network at `theta`.
pub fn loss_and_gradient(
    net: &MlpParams,
    theta: &[f64],
    source: &SourceSpec,
    target: &TargetSpec,
    loss: &NetLoss,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let vars = tape.vars(theta);
    let out = match loss {
        NetLoss::Direct(cfg) => direct_loss(net, &vars, source, target, cfg)?,
        NetLoss::Mesh(cfg) => mesh_loss(net, &vars, source, target, cfg)?,
    };
    let g = tape.gradient(out).map_err(Error::from)?;
    Ok((out.value(), g.wrt_all(&vars)))
}

/// Loss value only, without a tape.
pub fn loss_value(net: &MlpParams, theta: &[f64], source: &SourceSpec, target: &TargetSpec, loss: &NetLoss) -> Result<f64> {
    match loss {
        NetLoss::Direct(cfg) => direct_loss(net, theta, source, target, cfg),
        NetLoss::Mesh(cfg) => mesh_loss(net, theta, source, target, cfg),
    }
}

pub struct Fit {
    pub net: MlpParams,
    pub minimum: Minimum,
}

/// Trains `net` from its current parameters. On a line-search stall the
/// best point reached is returned together with the error.
pub fn fit<C: Clock>(
    net: &MlpParams,
    source: &SourceSpec,
    target: &TargetSpec,
    loss: &NetLoss,
    cfg: &OptimConfig,
    clock: &C,
) -> std::result::Result<Fit, (Error, Option<Fit>)> {
    if let NetLoss::Direct(_) = loss {
        if !source.is_continuous() {
            return Err((Error::DiscontinuousSource, None));
        }
    }
    let objective = |theta: &[f64]| loss_and_gradient(net, theta, source, target, loss);
    match minimize(objective, net.theta(), cfg, clock) {
        Ok(minimum) => {
            let trained = net.with_theta(minimum.theta.clone()).map_err(|e| (e, None))?;
            Ok(Fit { net: trained, minimum })
        }
        Err(OptimFailure { error, reached }) => {
            let partial = net.with_theta(reached.theta.clone()).ok().map(|n| Fit { net: n, minimum: reached });
            Err((error, partial))
        }
    }
}
