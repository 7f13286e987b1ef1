//! Counting rational points on hypersurfaces `F(x, y, z) = 0` of a
//! trilinear form and computing the local densities, singular series and
//! singular integral of the circle-method prediction.

pub mod arith;
pub mod assembly;
pub mod exp_sums;
pub mod fiber_density;
pub mod local;
pub mod enumeration;
pub mod error;
pub mod exact;
pub mod form;
pub mod hyperbolic;
pub mod lattice;
pub mod piecewise;
pub mod qmc;
pub mod scalar;

pub use enumeration::{CountReport, CountVariant};
pub use error::{Error, Result};
pub use exact::ExactRational;
pub use form::{BilinearVector, ContractionKind, TrilinearForm};
pub use qmc::{Estimate, QuadSpec};

/// Exact rational scalar used by the local layer.
pub type Rational = num_rational::BigRational;
/// Piecewise-polynomial densities in exact and in double arithmetic.
pub type ExactPiecewise = piecewise::PiecewisePoly<Rational>;
pub type PiecewiseF64 = piecewise::PiecewisePoly<f64>;
pub type EstimateF64 = qmc::Estimate<f64>;
