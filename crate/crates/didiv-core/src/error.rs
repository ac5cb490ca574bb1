//! Error type shared by all estimation modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("duplicate observation for unit `{unit}` at time {time}")]
    DuplicateObservation { unit: String, time: i64 },

    #[error("unexposed comparison set is empty under rule {rule}")]
    EmptyUnexposedSet { rule: String },

    #[error("no instrument variation across cohorts: single cohort only")]
    NoVariation,

    #[error("no estimable (cohort, relative period) cells")]
    NoEstimableCells,

    #[error("first-stage denominator {value:e} below threshold {tau:e}: no usable instrument variation")]
    WeakDenominator { value: f64, tau: f64 },

    #[error("empty group `{group}`{}", at.map(|t| format!(" at period {t}")).unwrap_or_default())]
    EmptyGroup { group: String, at: Option<i64> },

    #[error("empty cell: group `{group}` at period {period}")]
    EmptyCell { group: String, period: i64 },

    #[error("bootstrap requires at least {min} replications, got {got}")]
    BootstrapReps { min: usize, got: usize },

    #[error("degenerate bootstrap resamples exceeded redraw cap ({cap})")]
    DegenerateResample { cap: usize },

    #[error("infeasible simulation spec: {0}")]
    InfeasibleSpec(String),

    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    #[error("no instrument variation after demeaning")]
    NoInstrumentVariation,

    #[error("weak first stage after demeaning: |sum(d*z_res)| = {0:e}")]
    WeakFirstStage(f64),

    #[error("no pre-exposure periods available beyond the base period")]
    NoPrePeriods,

    #[error("aggregation weight mass is zero (first-stage effects sum to zero)")]
    ZeroWeightMass,

    #[error("cell (e={cohort}, t={period}) required by the aggregation is missing or flagged")]
    MissingCell { cohort: i64, period: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("computation failed: {0}")]
    Computation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
