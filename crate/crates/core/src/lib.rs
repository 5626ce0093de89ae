//! Tracking classical perturbations on continuously monitored harmonic
//! oscillators with Gaussian moments.
//!
//! The crate is organised bottom-up:
//!
//! * [`layout`] and [`gaussian`] hold the moments-level algebra (affine
//!   evolution, quadrature conditioning, marginals, Gaussian products, EPR
//!   basis change).
//! * [`config`], [`presets`] and [`dynamics`] turn physical parameters into
//!   per-step matrices and the continuous-time Riccati matrices.
//! * [`stochastic`] generates Ornstein-Uhlenbeck fields and homodyne samples
//!   from labelled, seed-split random streams.
//! * [`pipeline`] synthesizes detection records, filters forward, propagates
//!   the backward effect state and combines both into smoothed estimates.
//! * [`oracles`] contains the independent verification paths.
//! * [`io`] and [`runner`] handle persistence, export and manifest-driven runs.
//!
//! Covariances follow the convention `cov[j][j] = 2 Var(y_j)`, so the
//! oscillator ground state has identity covariance. Everything reported to
//! the outside (traces, CSV, plots) is converted back to plain variances.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod io;
pub mod layout;
pub mod oracles;
pub mod pipeline;
pub mod presets;
pub mod runner;
pub mod stochastic;

pub use config::{ActiveModes, MeasuredQuadrature, ScenarioConfig};
pub use dynamics::{Direction, RiccatiMatrices, StepMatrices};
pub use error::{Error, Result};
pub use gaussian::GaussianState;
pub use layout::{Quadrature, Sector, VariableEntry, VariableLayout};
pub use pipeline::{DetectionRecord, EstimateTrace, Experiment, TraceKind};
pub use stochastic::{OuParams, OuTrajectory, StreamRng};
