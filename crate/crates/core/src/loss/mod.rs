//! Differentiable losses comparing a network reflector's far field with a target.

pub mod direct;
pub mod mesh;
pub mod penalty;
pub mod polygon;

pub use direct::{direct_loss, direct_loss_value, marginal_g, pulled_back_density, DirectLossConfig};
pub use mesh::{mesh_loss, mesh_loss_value, MeshLossConfig, QuadMesh};
pub use penalty::{height_penalty, HeightPenalty};
