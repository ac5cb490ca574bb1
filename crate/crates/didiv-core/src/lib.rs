//! Instrumented difference-in-differences (DID-IV) estimation.
//!
//! A DID-IV design scales a difference-in-differences contrast in the outcome
//! by the corresponding contrast in the treatment, using exposure to an
//! instrument (typically a staggered policy shock) to define the groups. This
//! crate provides:
//!
//! - the 2x2 Wald-DID building block for panel, repeated-cross-section, and
//!   triple-difference layouts ([`wald`]),
//! - the stacked two-stage least squares (STS) estimator for staggered
//!   instrument adoption, with influence-function standard errors ([`sts`]),
//! - aggregation of cohort-by-period effects into summary parameters with
//!   first-stage weights ([`aggregate`]),
//! - two-way fixed-effects IV estimation and its exact decomposition into
//!   per-period Wald-DID components with signed weights ([`twfeiv`]),
//! - placebo tests of the parallel-trends assumptions ([`pretrend`]),
//! - a simulation oracle that generates typed synthetic populations and
//!   computes every population estimand by exact enumeration ([`sim`]).
//!
//! The `didiv` binary wires these into a command-line workflow; see the crate
//! README for the CSV schema and output formats.

pub mod aggregate;
pub mod cli;
pub mod data;
pub mod error;
pub mod influence;
mod moments;
pub mod numeric;
pub mod pretrend;
pub mod sim;
pub mod sts;
pub mod twfeiv;
pub mod wald;

pub use data::{Cohort, CohortMap, ColumnMap, Mode, ObservationTable, UnexposedRule, ValidationReport};
pub use error::{Error, Result};
pub use sts::{CellEstimate, CellSpec, EstimateOptions};

/// Default weak-denominator threshold: a first-stage DID smaller than this in
/// absolute value is treated as no instrument variation.
pub const DEFAULT_TAU: f64 = 1e-10;
