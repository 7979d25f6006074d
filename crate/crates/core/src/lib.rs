//! First eigenvalue function `λ(t, r)` of Dirichlet Sturm–Liouville problems
//! perturbed by a point interaction `-r δ(x - t)`, and reconstruction of the
//! potential from it.
//!
//! Layers, bottom up:
//! - [`grid`], [`problem`]: grids, piecewise-linear coefficients, problems.
//! - [`shooting`]: RK4 shooting with interface jumps and λ-variational solves.
//! - [`spectrum`]: m-th eigenvalue/eigenfunction by oscillation count.
//! - [`fef`]: `λ(t, r)` by two independent routes, surfaces, partials.
//! - [`inverse`]: slope extraction, reconstruction `q = φ₀''/φ₀ + λ₁ w`,
//!   and a validator for candidate first eigenvalue functions.
//! - [`measure`]: measure differential equations with Dirac atoms and the
//!   bump-approximation study.

pub mod error;
pub mod fef;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod measure;
pub mod problem;
pub mod rules;
pub mod shooting;
pub mod spectrum;

mod numeric;

pub use error::{Error, Result};
pub use fef::{FefConfig, FefMethod, FefSample, FefSolver, LambdaSurface};
pub use grid::{CoefficientFunction, Grid, DEFAULT_GRID_POINTS};
pub use inverse::{ReconstructionResult, SlopeProfile, ValidationReport};
pub use problem::{DirichletProblem, PointInteraction};
pub use shooting::{ShotSolution, Shooter, VariationalSolution};
pub use spectrum::EigenResult;
