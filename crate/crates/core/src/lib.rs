//! Storm-resilience planning toolkit for radial electricity distribution
//! networks.
//!
//! The crate covers the full planning pipeline:
//!
//! 1. [`wind`] — parametric storm wind fields over a km-scale grid,
//! 2. [`failure`] — Poisson line-failure rates, per-line failure
//!    probabilities and sampled failure scenarios,
//! 3. [`network`] — the radial feeder model, its geometry over the wind
//!    grid and island decompositions,
//! 4. [`model`] — assembly of the two-stage placement / repair / dispatch
//!    program as a sparse mixed-integer linear model,
//! 5. [`solve`] — an embedded LP simplex and branch-and-bound solver with
//!    LP-file export for external cross-checks,
//! 6. [`pipeline`] — the end-to-end orchestration plus recovery metrics,
//! 7. [`io`] — the on-disk formats (TOML) for tracks, grids, feeders,
//!    scenario sets and run configuration.
//!
//! Numeric code is generic over the scalar type through [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases below fix the default `f64`
//! instantiations used by the CLI and most callers.

pub mod cases;
pub mod failure;
pub mod geometry;
pub mod io;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod scalar;
pub mod solve;
pub mod wind;

pub use scalar::Scalar;

/// Default `f64` instantiations of the core types.
pub type Point = geometry::Point2<f64>;
pub type StormTrack = wind::StormTrack<f64>;
pub type Grid = wind::Grid<f64>;
pub type WindSample = wind::WindSample<f64>;
pub type NhppParams = failure::NhppParams<f64>;
pub type LineIntensity = failure::LineIntensity<f64>;
pub type FailureScenario = failure::FailureScenario<f64>;
pub type Feeder = network::Feeder<f64>;
pub type DerSpec = network::DerSpec<f64>;
pub type MipModel = model::MipModel<f64>;
pub type Allocation = model::Allocation;
pub type LpSolution = solve::LpSolution<f64>;
pub type MipSolution = solve::MipSolution<f64>;
pub type SaaSolution = pipeline::SaaSolution<f64>;
pub type ResilienceSeries = pipeline::ResilienceSeries<f64>;
