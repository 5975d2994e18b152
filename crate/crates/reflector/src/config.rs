//! Run configuration, read from TOML. Every field has a default, so an empty
//! file (or none) reproduces the benchmark setup.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use reflector_core::deconv::{OperatorConfig, VanCittertConfig, GRID_POINTS};
use reflector_core::density::SourceSpec;
use reflector_core::geometry::DomainSpec;
use reflector_core::loss::{DirectLossConfig, HeightPenalty, MeshLossConfig};
use reflector_core::optim::OptimConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Product of raised-cosine bumps in `s` and `α`.
    RaisedCosine,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Traced from the ground-truth reflector.
    Derived,
    /// Constant density on the derived target's interval.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Direct,
    Mesh,
    Deconv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Example {
    A,
    B,
    C,
    D,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub omega: [f64; 2],
    pub angles: [f64; 2],
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { omega: [-1.0, 1.0], angles: [FRAC_PI_4, 3.0 * FRAC_PI_4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub flux: f64,
    /// Exponent of the raised-cosine bumps.
    pub power: u32,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig { kind: SourceKind::RaisedCosine, flux: 1.0, power: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    pub bins: usize,
    /// Rays used to derive the target from the ground truth.
    pub rays: usize,
    /// Relative padding of the traced far-field range.
    pub pad: f64,
    pub truth_seed: u64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig { kind: TargetKind::Derived, bins: 64, rays: 1 << 21, pad: 0.02, truth_seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub rays: usize,
    pub bins: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { rays: 1 << 19, bins: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
    pub damping: bool,
    pub quadrature_nodes: usize,
    pub mesh_p_cells: usize,
    pub mesh_sigma_cells: usize,
    pub mesh_samples: usize,
    pub penalty_weight: f64,
    pub penalty_grid: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let o = OptimConfig::default();
        let m = MeshLossConfig::default();
        let p = HeightPenalty::new(0.0);
        NetworkConfig {
            sizes: vec![1, 24, 24, 1],
            seed: 0,
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            memory: o.memory,
            damping: o.damping,
            quadrature_nodes: DirectLossConfig::default().n_p,
            mesh_p_cells: m.n_p_cells,
            mesh_sigma_cells: m.n_sigma_cells,
            mesh_samples: m.samples,
            penalty_weight: p.weight,
            penalty_grid: p.grid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvConfig {
    pub eta: f64,
    pub iterations: usize,
    pub grid_points: usize,
    pub rays: usize,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        let v = VanCittertConfig::default();
        DeconvConfig { eta: v.eta, iterations: v.iterations, grid_points: GRID_POINTS, rays: 1 << 19 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Multiples of the ground truth's minimum height.
    pub factors: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { factors: vec![1.0, 1.25, 1.5, 2.0, 3.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub lambdas: Vec<f64>,
    pub grid: usize,
    pub rays: usize,
    pub h: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        LimitConfig { lambdas: vec![10.0, 100.0, 1000.0, 1e6], grid: 32, rays: 1 << 15, h: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    pub source: SourceConfig,
    pub target: TargetConfig,
    pub trace: TraceConfig,
    pub network: NetworkConfig,
    pub deconv: DeconvConfig,
    pub sweep: SweepConfig,
    pub limit: LimitConfig,
}

impl Config {
    /// The preset for one benchmark example.
    pub fn example(e: Example) -> Self {
        let mut c = Config::default();
        match e {
            Example::A | Example::C => {}
            Example::B => c.source.kind = SourceKind::Uniform,
            Example::D => c.target.kind = TargetKind::Uniform,
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        self.domain_spec()?;
        self.source_spec()?;
        if self.target.bins == 0 || self.trace.bins == 0 || self.target.rays == 0 || self.trace.rays == 0 {
            return bad("bin and ray counts must be positive");
        }
        if !(self.target.pad >= 0.0) {
            return bad("target.pad must be nonnegative");
        }
        let s = &self.network.sizes;
        if s.len() < 2 || s[0] != 1 || s[s.len() - 1] != 1 || s.contains(&0) {
            return bad("network.sizes must start and end with 1");
        }
        self.optim().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.deconv.eta > 0.0 && self.deconv.eta <= 1.0) {
            return bad("deconv.eta must lie in (0, 1]");
        }
        if self.deconv.grid_points < 5 || self.deconv.grid_points % 2 == 0 {
            return bad("deconv.grid_points must be odd and at least 5");
        }
        if self.sweep.factors.iter().any(|f| !(*f > 0.0)) {
            return bad("sweep factors must be positive");
        }
        if !(self.limit.h > 0.0) {
            return bad("limit.h must be positive");
        }
        Ok(())
    }

    /// `Ω × A` with a placeholder far-field window.
    pub fn domain_spec(&self) -> Result<DomainSpec, CliError> {
        let d = &self.domain;
        DomainSpec::new((d.omega[0], d.omega[1]), (d.angles[0], d.angles[1]), (-1.0, 1.0))
            .map_err(|e| CliError::Config(format!("domain: {e}")))
    }

    pub fn source_spec(&self) -> Result<SourceSpec, CliError> {
        let d = self.domain_spec()?;
        let s = &self.source;
        match s.kind {
            SourceKind::Uniform => SourceSpec::uniform(d, s.flux),
            SourceKind::RaisedCosine => SourceSpec::raised_cosine(d, s.flux, s.power),
        }
        .map_err(|e| CliError::Config(format!("source: {e}")))
    }

    pub fn optim(&self) -> OptimConfig {
        let n = &self.network;
        OptimConfig {
            max_iters: n.max_iters,
            grad_tol: n.grad_tol,
            memory: n.memory,
            damping: n.damping,
            ..OptimConfig::default()
        }
    }

    pub fn penalty(&self, h_min: Option<f64>) -> Option<HeightPenalty> {
        h_min.map(|h| HeightPenalty { h_min: h, weight: self.network.penalty_weight, grid: self.network.penalty_grid })
    }

    pub fn direct(&self, h_min: Option<f64>) -> DirectLossConfig {
        DirectLossConfig { n_p: self.network.quadrature_nodes, penalty: self.penalty(h_min) }
    }

    pub fn mesh(&self, h_min: Option<f64>) -> MeshLossConfig {
        let n = &self.network;
        MeshLossConfig {
            n_p_cells: n.mesh_p_cells,
            n_sigma_cells: n.mesh_sigma_cells,
            samples: n.mesh_samples,
            penalty: self.penalty(h_min),
        }
    }

    pub fn operator(&self, h_min: f64) -> OperatorConfig {
        OperatorConfig { h_min, n_rays: self.deconv.rays, bins: self.trace.bins, grid_points: self.deconv.grid_points }
    }

    pub fn van_cittert(&self) -> VanCittertConfig {
        VanCittertConfig { eta: self.deconv.eta, iterations: self.deconv.iterations }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.trace.bins, 64);
        assert_eq!(c.trace.rays, 1 << 19);
        assert_eq!(c.deconv.eta, 0.5);
        assert_eq!(c.network.sizes, vec![1, 24, 24, 1]);
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let mut c = Config::example(Example::B);
        c.trace.rays = 1 << 15;
        c.sweep.factors = vec![1.0, 2.0];
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        let o = Config::from_toml("[deconv]\neta = 1.0\n[source]\nkind = \"uniform\"\n").unwrap();
        assert_eq!(o.deconv.eta, 1.0);
        assert_eq!(o.source.kind, SourceKind::Uniform);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[deconv]\neta = 0.0",
            "[network]\nsizes = [2, 4, 1]",
            "[domain]\nangles = [0.0, 1.0]",
            "[trace]\nbins = 0",
            "unknown = 3",
            "[source]\nkind = \"laser\"",
        ] {
            assert!(matches!(Config::from_toml(text), Err(CliError::Config(_))), "{text}");
        }
    }
}
