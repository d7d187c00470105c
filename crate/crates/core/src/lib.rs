//! Land-use layout optimization.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`ingest`] turns a legend-colored thematic map into a region inventory.
//! 2. [`solver`] places non-residential roles greedily and refines the
//!    placement with a genetic algorithm, scoring layouts with [`metrics`].
//! 3. [`planners`] collects demographic-specific edit proposals per
//!    sub-region and applies the ones that pass the master planner's guard.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the command-line tool uses.

pub mod ingest;
pub mod io;
pub mod metrics;
pub mod model;
pub mod planners;
pub mod scalar;
pub mod solver;

pub use scalar::{Point, Scalar};

pub type Real = f64;

pub type Region = model::Region<Real>;
pub type CityLayout = model::CityLayout<Real>;
pub type ScaleConfig = model::ScaleConfig<Real>;
pub type MetricsReport = metrics::MetricsReport<Real>;
pub type GaConfig = solver::GaConfig<Real>;
pub type Solver = solver::Solver<Real>;
pub type IntegrationPolicy = planners::IntegrationPolicy<Real>;
pub type PlannerContext = planners::PlannerContext<Real>;
pub type DecisionRecord = planners::DecisionRecord<Real>;

pub type Region32 = model::Region<f32>;
pub type CityLayout32 = model::CityLayout<f32>;
pub type ScaleConfig32 = model::ScaleConfig<f32>;
pub type MetricsReport32 = metrics::MetricsReport<f32>;
