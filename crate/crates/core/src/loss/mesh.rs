//! Mesh-based binned loss, continuous in the parameters even when the
//! source density jumps.
//!
//! A regular grid of quadrilaterals over `T = Ω × Σ` is pulled back through
//! `m⁻¹`, each image is clipped against `S`, and the source flux inside the
//! clipped polygon is integrated by fan quadrature. Columns of cells share a
//! `σ` interval, so their sums form the far-field histogram.
//!
//! Every vertex on the `p`-line `p_a` depends on the height jet `(u, u′)` at
//! `p_a` only, which makes each cell a function of four scalars; those
//! sensitivities are carried by forward-mode duals and then folded into one
//! tape node per column.

use alloc::vec::Vec;

use super::penalty::{self, HeightPenalty};
use super::polygon::{clip_to_rect, fan_integral, polygon_area, quad_is_simple, Rect};
use crate::autodiff::Dual;
use crate::density::{SourceSpec, TargetSpec};
use crate::geometry::{inverse_map_jet, DomainSpec, HeightJet, ReflectorProfile};
use crate::mlp::{MlpParams, Order};
use crate::par::map_indexed;
use crate::real::Real;
use crate::{Error, Result};

type D2 = Dual<f64, 2>;
type D4 = Dual<f64, 4>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadMesh {
    pub n_p: usize,
    pub n_sigma: usize,
    pub l_min: f64,
    pub l_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl QuadMesh {
    pub fn new(domain: &DomainSpec, sigma: (f64, f64), n_p: usize, n_sigma: usize) -> Result<Self> {
        if n_p == 0 || n_sigma == 0 || !(sigma.1 > sigma.0) {
            return Err(Error::InvalidInput { context: "mesh needs cells and a nonempty far-field range" });
        }
        Ok(QuadMesh {
            n_p,
            n_sigma,
            l_min: domain.l_min,
            l_max: domain.l_max,
            t_min: sigma.0,
            t_max: sigma.1,
        })
    }

    pub fn p_vertex(&self, a: usize) -> f64 {
        self.l_min + (self.l_max - self.l_min) * a as f64 / self.n_p as f64
    }

    pub fn sigma_vertex(&self, b: usize) -> f64 {
        self.t_min + (self.t_max - self.t_min) * b as f64 / self.n_sigma as f64
    }

    pub fn cells(&self) -> usize {
        self.n_p * self.n_sigma
    }

    /// Cell index of column `b` (σ) and row `a` (p).
    pub fn cell_index(&self, a: usize, b: usize) -> usize {
        b * self.n_p + a
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshLossConfig {
    pub n_p_cells: usize,
    pub n_sigma_cells: usize,
    /// Quadrature points per fan triangle.
    pub samples: usize,
    pub penalty: Option<HeightPenalty>,
}

impl Default for MeshLossConfig {
    fn default() -> Self {
        MeshLossConfig {
            n_p_cells: 32,
            n_sigma_cells: 64,
            samples: 64,
            penalty: None,
        }
    }
}

/// A pulled-back mesh vertex with its sensitivity to `(u, u′)` at its `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappedVertex {
    pub x: [f64; 2],
    /// `d_jet[c][j]` is `∂x_c/∂(u, u′)_j`.
    pub d_jet: [[f64; 2]; 2],
    /// False when the back-traced ray never returns to the source line.
    pub reaches_source: bool,
}

/// Pulls back every mesh vertex; `jets[a]` is the height jet at `p_vertex(a)`.
/// Vertices are stored `σ`-major: index `b * (n_p + 1) + a`.
pub fn map_mesh(mesh: &QuadMesh, jets: &[HeightJet], d: &DomainSpec) -> Result<Vec<MappedVertex>> {
    if jets.len() != mesh.n_p + 1 {
        return Err(Error::InvalidInput { context: "one height jet per mesh p-line is required" });
    }
    let stride = mesh.n_p + 1;
    let mut out = Vec::with_capacity(stride * (mesh.n_sigma + 1));
    for b in 0..=mesh.n_sigma {
        let sigma = mesh.sigma_vertex(b);
        for (a, jet) in jets.iter().enumerate() {
            let p = mesh.p_vertex(a);
            let bt = inverse_map_jet(
                D2::constant(p),
                D2::constant(sigma),
                D2::variable(jet.u, 0),
                D2::variable(jet.du, 1),
                d,
            )?;
            let reaches_source = bt.alpha.re.is_finite();
            let finite = bt.s.is_finite() && bt.s.eps.iter().chain(&bt.alpha.eps).all(|e| e.is_finite());
            if reaches_source && !finite {
                let cell = mesh.cell_index(a.min(mesh.n_p - 1), b.min(mesh.n_sigma - 1));
                return Err(Error::UnmappedCell { cell });
            }
            out.push(if reaches_source {
                MappedVertex {
                    x: [bt.s.re, bt.alpha.re],
                    d_jet: [bt.s.eps, bt.alpha.eps],
                    reaches_source,
                }
            } else {
                MappedVertex {
                    x: [f64::NAN; 2],
                    d_jet: [[0.0; 2]; 2],
                    reaches_source,
                }
            });
        }
    }
    Ok(out)
}

/// One clipped cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: usize,
    /// Source-plane polygon after clipping against `S`.
    pub polygon: Vec<[f64; 2]>,
    pub area: f64,
    pub integral: f64,
    /// Sensitivity of `integral` to `(u_a, u′_a, u_{a+1}, u′_{a+1})`.
    pub d_jets: [f64; 4],
}

fn lift(v: &MappedVertex, right: bool) -> [D4; 2] {
    let off = if right { 2 } else { 0 };
    let mut out = [D4::constant(v.x[0]), D4::constant(v.x[1])];
    for c in 0..2 {
        out[c].eps[off] = v.d_jet[c][0];
        out[c].eps[off + 1] = v.d_jet[c][1];
    }
    out
}

/// Source density clamped onto `S`, so quadrature points that rounding puts
/// a hair outside still see the boundary value.
fn density_on_s(source: &SourceSpec, x: [D4; 2]) -> D4 {
    let d = source.domain();
    let mut s = x[0];
    let mut a = x[1];
    if s.re < d.l_min {
        s = D4::constant(d.l_min);
    } else if s.re > d.l_max {
        s = D4::constant(d.l_max);
    }
    if a.re < d.alpha_min {
        a = D4::constant(d.alpha_min);
    } else if a.re > d.alpha_max {
        a = D4::constant(d.alpha_max);
    }
    source.density(s, a)
}

/// Clips and integrates every cell. Folded cells are an error.
pub fn cell_integrals(
    mesh: &QuadMesh,
    vertices: &[MappedVertex],
    source: &SourceSpec,
    samples: usize,
) -> Result<Vec<CellResult>> {
    let d = source.domain();
    let rect = Rect {
        x0: d.l_min,
        x1: d.l_max,
        y0: d.alpha_min,
        y1: d.alpha_max,
    };
    let stride = mesh.n_p + 1;
    let results = map_indexed(mesh.cells(), |cell| -> Result<CellResult> {
        let (b, a) = (cell / mesh.n_p, cell % mesh.n_p);
        let v00 = &vertices[b * stride + a];
        let v10 = &vertices[b * stride + a + 1];
        let v11 = &vertices[(b + 1) * stride + a + 1];
        let v01 = &vertices[(b + 1) * stride + a];
        let corners = [v00, v10, v11, v01];
        if corners.iter().any(|v| !v.reaches_source) {
            // Part of the cell has no preimage on the source line. Such cells
            // sit at the rim of the far-field window; they are dropped when
            // their traceable corners all lie outside S.
            let touches = corners.iter().any(|v| {
                v.reaches_source
                    && v.x[0] >= rect.x0
                    && v.x[0] <= rect.x1
                    && v.x[1] >= rect.y0
                    && v.x[1] <= rect.y1
            });
            if touches {
                return Err(Error::UnmappedCell { cell });
            }
            return Ok(CellResult {
                cell,
                polygon: Vec::new(),
                area: 0.0,
                integral: 0.0,
                d_jets: [0.0; 4],
            });
        }
        let quad = [v00.x, v10.x, v11.x, v01.x];
        let lifted = [lift(v00, false), lift(v10, true), lift(v11, true), lift(v01, false)];
        let clipped = clip_to_rect(&lifted, &rect);
        // Outside the image of S the inverse map need not be injective;
        // folds only matter where they overlap the source.
        if !clipped.is_empty() && !quad_is_simple(&quad) {
            return Err(Error::FoldedCell { cell });
        }
        let integral = fan_integral(&clipped, samples, |x| density_on_s(source, x));
        let area = polygon_area(&clipped).re;
        Ok(CellResult {
            cell,
            polygon: clipped.iter().map(|p| [p[0].re, p[1].re]).collect(),
            area,
            integral: integral.re,
            d_jets: integral.eps,
        })
    });
    results.into_iter().collect()
}

/// Column sums of the cell integrals: the binned pulled-back far field.
pub fn column_sums(mesh: &QuadMesh, cells: &[CellResult]) -> Vec<f64> {
    let mut bins = alloc::vec![0.0; mesh.n_sigma];
    for c in cells {
        bins[c.cell / mesh.n_p] += c.integral;
    }
    bins
}

/// Traced area of `S` covered by the clipped cells, as a fraction of `|S|`.
pub fn coverage(cells: &[CellResult], d: &DomainSpec) -> f64 {
    cells.iter().map(|c| c.area).sum::<f64>() / d.source_area()
}

/// Cells of a fixed profile.
pub fn profile_cells<P: ReflectorProfile + ?Sized>(
    prof: &P,
    source: &SourceSpec,
    mesh: &QuadMesh,
    samples: usize,
) -> Result<Vec<CellResult>> {
    let jets: Vec<HeightJet> = (0..=mesh.n_p).map(|a| prof.jet(mesh.p_vertex(a))).collect();
    let vertices = map_mesh(mesh, &jets, source.domain())?;
    cell_integrals(mesh, &vertices, source, samples)
}

fn normalized_mse(bins: &[f64], target: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    let total: f64 = target.iter().sum();
    if total == 0.0 {
        if bins.iter().all(|b| *b == 0.0) {
            return Ok((0.0, 1.0, alloc::vec![0.0; bins.len()]));
        }
        return Err(Error::ZeroFlux { context: "binned target" });
    }
    let n = bins.len() as f64;
    let mut loss = 0.0;
    let mut dloss = Vec::with_capacity(bins.len());
    for (b, t) in bins.iter().zip(target) {
        let r = (b - t) / total;
        loss += r * r;
        dloss.push(2.0 * r / (total * n));
    }
    Ok((loss / n, total, dloss))
}

/// `mean_i ((b_i − b̂_i) / Σb̂)²` with `b̂` the target's bin integrals on the
/// mesh columns, plus the optional height penalty.
pub fn mesh_loss<R: Real>(
    net: &MlpParams,
    theta: &[R],
    source: &SourceSpec,
    target: &TargetSpec,
    cfg: &MeshLossConfig,
) -> Result<R> {
    let d = source.domain();
    let mesh = QuadMesh::new(d, target.bounds(), cfg.n_p_cells, cfg.n_sigma_cells)?;
    let net_jets: Vec<_> = (0..=mesh.n_p)
        .map(|a| net.jet(theta, mesh.p_vertex(a), Order::First))
        .collect();
    let jets: Vec<HeightJet> = net_jets
        .iter()
        .map(|j| HeightJet { u: j.u.value(), du: j.du.value() })
        .collect();
    let vertices = map_mesh(&mesh, &jets, d)?;
    let cells = cell_integrals(&mesh, &vertices, source, cfg.samples)?;
    let bins = column_sums(&mesh, &cells);
    let target_bins = target.bin_integrals(mesh.n_sigma);
    let (value, _, dloss) = normalized_mse(&bins, &target_bins)?;

    // ∂loss/∂(u_a, u′_a), accumulated over all cells.
    let mut sens = alloc::vec![[0.0f64; 2]; mesh.n_p + 1];
    for c in &cells {
        let w = dloss[c.cell / mesh.n_p];
        let a = c.cell % mesh.n_p;
        sens[a][0] += w * c.d_jets[0];
        sens[a][1] += w * c.d_jets[1];
        sens[a + 1][0] += w * c.d_jets[2];
        sens[a + 1][1] += w * c.d_jets[3];
    }
    let mut terms: Vec<(R, f64)> = Vec::with_capacity(2 * sens.len());
    for (j, s) in net_jets.iter().zip(&sens) {
        terms.push((j.u, s[0]));
        terms.push((j.du, s[1]));
    }
    let loss = R::lincomb(value, &terms);
    penalty::apply(loss, net, theta, cfg.penalty.as_ref())
}

/// Loss of a fixed profile, in plain `f64`.
pub fn mesh_loss_value<P: ReflectorProfile + ?Sized>(
    prof: &P,
    source: &SourceSpec,
    target: &TargetSpec,
    cfg: &MeshLossConfig,
) -> Result<f64> {
    let mesh = QuadMesh::new(source.domain(), target.bounds(), cfg.n_p_cells, cfg.n_sigma_cells)?;
    let cells = profile_cells(prof, source, &mesh, cfg.samples)?;
    let bins = column_sums(&mesh, &cells);
    Ok(normalized_mse(&bins, &target.bin_integrals(mesh.n_sigma))?.0)
}
