//! Sparse-angle tomographic reconstruction with a deformed template plus
//! an additive source image.
//!
//! The reconstruction is `R = T o phi^{-1} + z`: a known template `T` is
//! transported by the flow of a time-dependent velocity field `v`, and a
//! source image `z` accounts for structures the deformation cannot create.
//! The velocity and the source are found by minimizing
//!
//! ```text
//! D(K R, g) + E1(v) + lambda2 * E2(z)
//! ```
//!
//! with an inertial proximal alternating linearized scheme on a coarse to
//! fine pyramid, optionally followed by a Gauss-Newton refinement of `v`.
//!
//! Module map:
//! - [`grid`], [`interp`]: cell-centered grids, fields and interpolation
//! - [`flow`]: backward characteristics and the solution map with derivatives
//! - [`radon`]: parallel-beam projector, adjoint and measurement pyramid
//! - [`functionals`]: data terms, regularizers and the full objective
//! - [`prox`]: proximal maps for the regularizer blocks
//! - [`ipalm`]: the alternating solver and the Gauss-Newton refinement
//! - [`pipeline`]: multi-level orchestration
//! - [`phantom`], [`metrics`], [`baseline`], [`io`], [`experiment`]: data
//!   generation, evaluation and file formats used by the command line tool

pub mod baseline;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod functionals;
pub mod grid;
pub mod interp;
pub mod io;
pub mod ipalm;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod prox;
pub mod radon;
pub mod sparse;

pub use error::{Error, Result};
pub use grid::{CellGrid, PointSet, ScalarField, VelocityField};
