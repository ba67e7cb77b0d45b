//! Pseudospectral simulation of the fourth-order dispersive flow for closed
//! curves on surfaces, together with the gauged energy diagnostics and
//! numerical identity checks that accompany it.
//!
//! Modules, bottom up:
//!
//! * [`grid`]: periodic spectral calculus (derivatives, quadrature, resampling)
//! * [`geometry`]: targets, tangent projection, complex structure, covariant derivative
//! * [`flow`]: intrinsic, extrinsic and regularised right-hand sides, presets
//! * [`integrate`]: projected RK4 with renormalisation and trajectory recording
//! * [`energy`]: Sobolev norms, gauged energies, difference energies, obstruction
//! * [`experiments`]: convergence, regularisation, stability and identity studies

// `!(x <= limit)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// a failed run returns its partial trajectory by value
#![allow(clippy::result_large_err)]

pub mod config;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod integrate;

pub use config::{ParamsSpec, RunConfig};
pub use error::{Error, Result};
pub use flow::{FlowParams, Preset, RhsKind};
pub use geometry::{Curve, CurveFrame, InitialCurve, Target};
pub use grid::{Grid, ScalarField, Vec3, VectorField};
pub use integrate::{run, RunFailure, State, Trajectory};
