//! Finite-element laboratory for Dirichlet-to-Neumann operators of
//! second-order elliptic forms with magnetic potentials on planar domains.
//!
//! The pipeline is
//!
//! 1. [`mesh`]: conforming triangulations of the unit square and unit disk;
//! 2. [`expr`] and [`coeff`]: coefficient fields from user expressions,
//!    frozen at triangle centroids;
//! 3. [`assembly`]: the P1 sesquilinear form `a(u, v) = v^H A u` together
//!    with lumped domain and boundary masses;
//! 4. [`dtn`]: the boundary Schur complement, i.e. the discrete
//!    Dirichlet-to-Neumann form, and its Steklov spectrum;
//! 5. [`semigroup`]: `e^{-tG}` for boundary and domain generators;
//! 6. [`convex`] and [`verify`]: nodal projections and the inequality
//!    suites (positivity, L∞-contractivity, domination, kernel bounds).
//!
//! All statements checked here are statements about the discrete model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// mirror the matrix notation in the dense kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod coeff;
pub mod convex;
pub mod dtn;
mod error;
pub mod expr;
pub mod linalg;
pub mod mesh;
pub mod semigroup;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
