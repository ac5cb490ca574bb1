//! Simulation oracle: typed synthetic populations, exact population
//! estimands by enumeration, and deterministic finite-sample generation.

pub mod generate;
pub mod oracle;
pub mod random;
pub mod spec;
pub mod types;

pub use generate::{audit_contradictions, generate, AuditRecord, GeneratedData};
pub use oracle::{
    check_slatet_decomposition, check_time_gain_decomposition, population_values, OracleValues,
    SlatetReport, TimeGainReport,
};
pub use random::{
    builtin_spec, clatt_linear_spec, fig1_spec, random_staggered, random_triple,
    random_two_period, twfeiv_bias_spec, StaggeredRandomOptions, TripleRandomOptions,
    TwoPeriodRandomOptions,
};
pub use spec::{
    CohortPath, CohortShare, CohortValue, DgpSpec, GroupLaw, StaggeredSpec, StratumLaw,
    TripleSpec, TwoPeriodSpec, TypeLaw,
};
pub use types::{TResponse, UnitType, ZResponse};
