//! Numerical laboratory for the nonautonomous diffusive Hindmarsh–Rose
//! system on box domains with zero-flux boundaries.
//!
//! Everything numeric is generic over [`Real`] (`f64` or `f32`); the aliases
//! at the crate root fix `f64`, which is what the estimates are calibrated for.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimates;
pub mod grid;
pub mod io;
pub mod model;
pub mod pullback;
pub mod sampling;
pub mod scalar;
pub mod solver;

/// Version string recorded in output manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{HrError, Result};
pub use estimates::{compute_constants, compute_tb, MeasuredConstants, TheoryConstants};
pub use grid::{Grid, StateField, MAX_DIM};
pub use model::{phi, psi, reaction, reaction_at, translation_bound, Forcing, ForcingKind, ForcingSpec, HrParameters};
pub use pullback::{
    approximate_attractor, attraction_profile, attraction_rate, box_counting_dimension, pullback_evolve, semihausdorff,
    AttractorCloud, Ensemble, NormKind,
};
pub use scalar::Real;
pub use solver::{evolve, evolve_ode, Process, ProcessConfig, Scheme, Trajectory};

pub type GridF64 = Grid<f64>;
pub type GridF32 = Grid<f32>;
pub type StateFieldF64 = StateField<f64>;
pub type StateFieldF32 = StateField<f32>;
pub type ParamsF64 = HrParameters<f64>;
pub type ParamsF32 = HrParameters<f32>;
pub type ForcingF64 = Forcing<f64>;
pub type ProcessF64 = solver::Process<f64>;
pub type TrajectoryF64 = solver::Trajectory<f64>;
pub type ProcessF32 = solver::Process<f32>;
pub type TheoryConstantsF64 = estimates::TheoryConstants<f64>;
pub type EnsembleF64 = pullback::Ensemble<f64>;
pub type AttractorCloudF64 = pullback::AttractorCloud<f64>;
