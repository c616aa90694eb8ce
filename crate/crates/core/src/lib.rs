//! Sample-based stochastic finite element solver.
//!
//! The crate solves affine stochastic systems
//! `(Σᵢ ξᵢ(θ) Kᵢ) u(θ) = Σₗ ηₗ(θ) Fₗ` by building the response as a short
//! series of couples `λₖ(θ) dₖ`: deterministic unit vectors paired with
//! random scalar coefficients that are carried as samples. Each couple is
//! found by alternating a deterministic Galerkin solve for `dₖ` with an
//! independent scalar update of `λₖ` per sample.
//!
//! Modules, bottom-up:
//! - [`linalg`]: dense/sparse storage, envelope Cholesky, symmetric eigen-solvers.
//! - [`random_field`]: Karhunen-Loève discretization and sampling of input variables.
//! - [`fem`]: meshes, element stiffness, assembly, boundary conditions.
//! - [`system`]: the affine stochastic system and its per-sample evaluation.
//! - [`decomposition`]: the couple-by-couple solver.
//! - [`monte_carlo`]: per-sample direct solves used as the reference oracle.
//! - [`statistics`]: moments, kernel density estimates and distribution distances.
//!
//! The crate is `no_std` + `alloc` with default features disabled. The
//! `std` feature (on by default) enables rayon data parallelism and wall
//! clock timing; results are bit-identical either way.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
mod math;
mod reduce;

pub mod decomposition;
pub mod fem;
pub mod linalg;
pub mod monte_carlo;
pub mod random_field;
pub mod statistics;
pub mod system;

pub use crate::decomposition::{
    evaluate_solution, solve, Couple, CoupleHistory, CoupleUpdate, SolutionExpansion, SolverConfig, Termination,
};
pub use crate::error::{Error, Result};
pub use crate::fem::{
    BoundaryConditions, DofMap, Element, ElementKind, Mesh, PlaneCondition, PropertyGroup,
};
pub use crate::linalg::{DenseMatrix, SparseMatrix};
pub use crate::monte_carlo::{mc_solve, MCResult};
pub use crate::random_field::{CovarianceKernel, KLExpansion, Marginal, SampleMatrix, SampleSet};
pub use crate::system::StochasticSystem;
