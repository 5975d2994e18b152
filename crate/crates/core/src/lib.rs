//! Numerical core for designing 2D reflectors that shape the far field of an
//! extended light source.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and the
//! benchmark drivers live in the companion `reflector` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "parallel"))]
extern crate std;

pub mod autodiff;
pub mod deconv;
pub mod geometry;
pub mod limitcase;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod par;
pub mod raytrace;
pub mod density;
pub mod quadrature;
pub mod real;
pub mod transport;

pub use real::Real;

use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Error {
    /// A coordinate lies outside the domain an operation is defined on.
    Domain { what: &'static str, value: f64 },
    /// A tangent, denominator or Jacobian fell below its tolerance.
    Singular { context: &'static str },
    NonFinite { context: &'static str },
    /// The forward root-find could not bracket the intersection.
    Bracket { s: f64, alpha: f64 },
    Tape(autodiff::TapeError),
    InvalidInput { context: &'static str },
    /// The direct loss needs a continuous source; use the mesh loss instead.
    DiscontinuousSource,
    /// A pulled-back mesh cell folds over itself.
    FoldedCell { cell: usize },
    /// A mesh vertex of this cell does not trace back to the source line.
    UnmappedCell { cell: usize },
    ZeroFlux { context: &'static str },
    LineSearchStall { iteration: usize },
    Overflow { context: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

impl From<autodiff::TapeError> for Error {
    fn from(e: autodiff::TapeError) -> Self {
        Error::Tape(e)
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => write!(f, "{what} = {value} is outside its domain"),
            Error::Singular { context } => write!(f, "singular {context}"),
            Error::NonFinite { context } => write!(f, "non-finite {context}"),
            Error::Bracket { s, alpha } => {
                write!(f, "no reflector intersection bracketed for s = {s}, alpha = {alpha}")
            }
            Error::Tape(e) => write!(f, "autodiff: {e}"),
            Error::InvalidInput { context } => write!(f, "invalid input: {context}"),
            Error::DiscontinuousSource => write!(
                f,
                "the direct loss requires a continuous source density; use the mesh loss"
            ),
            Error::FoldedCell { cell } => write!(f, "mapped mesh cell {cell} is self-intersecting"),
            Error::UnmappedCell { cell } => {
                write!(f, "mesh cell {cell} has a vertex that does not trace back to the source")
            }
            Error::ZeroFlux { context } => write!(f, "zero total flux in {context}"),
            Error::LineSearchStall { iteration } => {
                write!(f, "line search stalled at iteration {iteration}")
            }
            Error::Overflow { context } => write!(f, "overflow in {context}"),
        }
    }
}

impl core::error::Error for Error {}
