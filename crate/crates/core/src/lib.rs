//! Numerical laboratory for the long-time behaviour of conditional empirical
//! measures of killed diffusions on model domains.
//!
//! The crate computes eigenbases of −(Δ + ∇V) on intervals and rectangles,
//! evaluates the conditional empirical density h_t^ν by closed-form
//! eigenseries, computes the limit constant I of t²·W2(μ_t^ν, μ_0)², and
//! cross-checks everything with three Wasserstein solvers and a Monte Carlo
//! simulator.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod error;
pub mod harness;
pub mod limit;
pub mod mc;
pub mod measure;
pub mod quadrature;
pub mod semigroup;
pub mod spectral;
pub mod transport;

pub use domain::{Boundary, Domain, Potential, Shape, TabulatedPotential};
pub use error::{Error, Result};
pub use measure::{project, CoefficientKind, Envelope, InitialDistribution, ModeCoefficients};
pub use spectral::{
    build_analytic_basis, solve_sturm_liouville, sup_norm_growth_report, QuadratureGrid,
    SpectralBasis,
};
