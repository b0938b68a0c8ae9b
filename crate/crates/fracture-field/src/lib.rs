//! Quasi-static phase-field fracture on the unit square.
//!
//! An antiplane displacement `u` and a damage field `v` (1 intact, 0 broken)
//! evolve under a monotonically growing boundary load. Each time step runs an
//! alternating minimization: an elastic solve for `u` at frozen `v`, then a
//! penalized, irreversibility-constrained solve for `v` at frozen `u`, both on
//! a fixed structured triangulation of (0,1)^2.
//!
//! Module map:
//! - [`mesh`]: structured right-triangle meshes, optional circular holes
//! - [`fem`]: nodal fields, lumped integration, sparse stiffness assembly
//! - [`energy`]: regularized fracture energy and its phase derivatives
//! - [`spd`]: direct solver for sparse symmetric positive definite systems
//! - [`solvers`]: displacement and phase subproblem solvers
//! - [`scenario`]: load programs, pre-cracks, holes, JSON configuration
//! - [`evolution`]: incremental time stepping, trace recording, energy audit
//! - [`io`]: trace, snapshot, manifest, and lock file handling
//! - [`verify`]: independent oracles cross-checking the production solvers

// Assembly kernels index several parallel arrays by vertex number; iterator
// rewrites obscure the index arithmetic the formulas are written in.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod energy;
pub mod evolution;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod scenario;
pub mod solvers;
pub mod spd;
pub mod verify;

mod error;

pub use error::{Error, Result};
