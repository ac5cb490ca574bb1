//! Data-generating-process specifications.
//!
//! A `DgpSpec` fully describes a synthetic population: the compliance-type
//! distribution per group (or latent strata with treatment paths, in the
//! staggered design), per-type potential-outcome means, common period shocks,
//! and an additive noise scale. Means drive every estimand; noise drives
//! variance only, so population quantities are exact finite sums.
//!
//! Specs serialize as TOML (`design = "two_period" | "staggered" | "triple"`);
//! see the README for the documented schema.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::sim::types::UnitType;

const PROB_TOL: f64 = 1e-9;

/// One compliance type with its probability and potential-outcome means.
///
/// `d0` is the period-0 treatment (identical under either instrument path);
/// `d_unexposed` / `d_exposed` are the period-1 potential treatments. For an
/// ordered treatment these range over `0..=arity`. `means[j] = [m0, m1]`
/// gives `E[Y_t(j)]` for the two periods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeLaw {
    pub d0: u32,
    pub d_unexposed: u32,
    pub d_exposed: u32,
    pub prob: f64,
    pub means: Vec<[f64; 2]>,
}

impl TypeLaw {
    pub fn from_unit_type(ty: UnitType, prob: f64, means: Vec<[f64; 2]>) -> Self {
        Self {
            d0: ty.d0() as u32,
            d_unexposed: ty.d1_unexposed() as u32,
            d_exposed: ty.d1_exposed() as u32,
            prob,
            means,
        }
    }

    /// Binary classification of this type, when `arity == 1`.
    pub fn unit_type(&self) -> Option<UnitType> {
        use crate::sim::types::{TResponse, ZResponse};
        if self.d0 > 1 || self.d_unexposed > 1 || self.d_exposed > 1 {
            return None;
        }
        let gz = match (self.d_unexposed, self.d_exposed) {
            (0, 0) => ZResponse::NeverTaker,
            (1, 1) => ZResponse::AlwaysTaker,
            (0, 1) => ZResponse::Complier,
            (1, 0) => ZResponse::Defier,
            _ => unreachable!(),
        };
        let gt = match (self.d0, self.d_unexposed) {
            (0, 0) => TResponse::NeverTaker,
            (1, 1) => TResponse::AlwaysTaker,
            (0, 1) => TResponse::Complier,
            (1, 0) => TResponse::Defier,
            _ => unreachable!(),
        };
        Some(UnitType::new(gz, gt))
    }
}

/// Type distribution within one group (exposed or unexposed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupLaw {
    pub types: Vec<TypeLaw>,
}

impl GroupLaw {
    pub fn total_prob(&self) -> f64 {
        self.types.iter().map(|t| t.prob).sum()
    }
}

fn default_true() -> bool {
    true
}

/// A two-period, two-group population with sharp instrument assignment in
/// period 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPeriodSpec {
    /// Treatment arity `J`; 1 means binary.
    pub arity: u32,
    /// Probability that a unit belongs to the exposed group.
    pub exposed_share: f64,
    pub unexposed: GroupLaw,
    pub exposed: GroupLaw,
    /// Common period shocks added to every outcome.
    pub period_shocks: [f64; 2],
    pub noise_sd: f64,
    /// Asserts that no type has `d_exposed < d_unexposed`.
    #[serde(default = "default_true")]
    pub monotone: bool,
    /// Claim that the parallel-trends assumption in the treatment holds.
    #[serde(default = "default_true")]
    pub pt_treatment: bool,
    /// Claim that the parallel-trends assumption in the outcome holds.
    #[serde(default = "default_true")]
    pub pt_outcome: bool,
}

/// Extra instrument-induced take-up for one cohort: the path is OR'd into the
/// stratum's base path at periods `t >= cohort`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortPath {
    pub cohort: i64,
    pub path: Vec<u8>,
}

/// Per-cohort scalar (intercept or trend slope).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortValue {
    pub cohort: Cohort,
    pub value: f64,
}

/// Cohort date and population share.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortShare {
    pub cohort: Cohort,
    pub share: f64,
}

/// A latent stratum in the staggered design: a never-exposed treatment path
/// common to all cohorts, optional per-cohort extra take-up after exposure,
/// and per-period outcome means by treatment level.
///
/// Stratum shares are common across cohorts and cohort heterogeneity in the
/// outcome is an additive intercept/trend, so the parallel-trends assumptions
/// hold by construction unless a per-cohort base-path override or distinct
/// trend slopes are supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumLaw {
    pub prob: f64,
    /// `D_t` when never exposed, indexed by `t - t_min`.
    pub base_path: Vec<u8>,
    /// Extra take-up per cohort, applied at `t >= cohort`.
    #[serde(default)]
    pub exposed_extra: Vec<CohortPath>,
    /// Cohort-specific never-exposed paths (breaks parallel trends in the
    /// treatment when they differ from `base_path`).
    #[serde(default)]
    pub base_path_override: Vec<CohortPath>,
    /// `means[t - t_min] = [m(d=0, t), m(d=1, t)]`.
    pub means: Vec<[f64; 2]>,
}

impl StratumLaw {
    /// Never-exposed treatment at `t` for a unit of this stratum in `cohort`.
    pub fn base_at(&self, cohort: Cohort, tix: usize) -> u8 {
        if let Cohort::At(e) = cohort {
            if let Some(over) = self.base_path_override.iter().find(|p| p.cohort == e) {
                return over.path[tix];
            }
        }
        self.base_path[tix]
    }

    /// Observed treatment at `t` for a unit of this stratum in `cohort`.
    pub fn observed_at(&self, cohort: Cohort, t: i64, t_min: i64) -> u8 {
        let tix = (t - t_min) as usize;
        let base = self.base_at(cohort, tix);
        match cohort {
            Cohort::At(e) if t >= e => {
                let extra = self
                    .exposed_extra
                    .iter()
                    .find(|p| p.cohort == e)
                    .map(|p| p.path[tix])
                    .unwrap_or(0);
                base.max(extra)
            }
            _ => base,
        }
    }

    /// Is this stratum a complier for `(cohort, t)` — induced to treatment by
    /// the instrument at that period?
    pub fn is_complier(&self, cohort_date: i64, t: i64, t_min: i64) -> bool {
        let tix = (t - t_min) as usize;
        let base = self.base_at(Cohort::At(cohort_date), tix);
        let obs = self.observed_at(Cohort::At(cohort_date), t, t_min);
        obs > base
    }
}

/// A staggered-adoption population with binary treatment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaggeredSpec {
    pub t_min: i64,
    pub t_max: i64,
    pub cohorts: Vec<CohortShare>,
    pub strata: Vec<StratumLaw>,
    /// Additive cohort intercepts in the outcome.
    #[serde(default)]
    pub cohort_intercepts: Vec<CohortValue>,
    /// Additive per-period cohort trend slopes in the outcome; distinct
    /// slopes break the parallel-trends assumption in the outcome.
    #[serde(default)]
    pub cohort_trends: Vec<CohortValue>,
    /// Common period shocks, indexed by `t - t_min`.
    pub period_shocks: Vec<f64>,
    pub noise_sd: f64,
    #[serde(default = "default_true")]
    pub pt_treatment: bool,
    #[serde(default = "default_true")]
    pub pt_outcome: bool,
}

impl StaggeredSpec {
    pub fn n_periods(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn cohort_intercept(&self, c: Cohort) -> f64 {
        self.cohort_intercepts
            .iter()
            .find(|v| v.cohort == c)
            .map(|v| v.value)
            .unwrap_or(0.0)
    }

    pub fn cohort_trend(&self, c: Cohort) -> f64 {
        self.cohort_trends
            .iter()
            .find(|v| v.cohort == c)
            .map(|v| v.value)
            .unwrap_or(0.0)
    }

    /// Population mean outcome in cell (cohort, t), exact.
    pub fn mean_y(&self, cohort: Cohort, t: i64) -> f64 {
        let tix = (t - self.t_min) as usize;
        let mut acc = 0.0;
        for s in &self.strata {
            let d = s.observed_at(cohort, t, self.t_min) as usize;
            acc += s.prob * s.means[tix][d];
        }
        acc + self.cohort_intercept(cohort)
            + self.cohort_trend(cohort) * (t - self.t_min) as f64
            + self.period_shocks[tix]
    }

    /// Population mean treatment in cell (cohort, t), exact.
    pub fn mean_d(&self, cohort: Cohort, t: i64) -> f64 {
        self.strata
            .iter()
            .map(|s| s.prob * s.observed_at(cohort, t, self.t_min) as f64)
            .sum()
    }
}

/// Two independent 2x2 populations split by a demographic stratum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleSpec {
    /// Probability of stratum A.
    pub share_a: f64,
    pub a: TwoPeriodSpec,
    pub b: TwoPeriodSpec,
}

/// A complete simulation design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum DgpSpec {
    TwoPeriod(TwoPeriodSpec),
    Staggered(StaggeredSpec),
    Triple(TripleSpec),
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DgpSpec::TwoPeriod(s) => validate_two_period(s),
            DgpSpec::Staggered(s) => validate_staggered(s),
            DgpSpec::Triple(s) => {
                if !(s.share_a > 0.0 && s.share_a < 1.0) {
                    return Err(Error::InfeasibleSpec(format!(
                        "stratum share {} outside (0,1)",
                        s.share_a
                    )));
                }
                validate_two_period(&s.a)?;
                validate_two_period(&s.b)
            }
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            DgpSpec::TwoPeriod(s) => s.noise_sd,
            DgpSpec::Staggered(s) => s.noise_sd,
            DgpSpec::Triple(s) => s.a.noise_sd.max(s.b.noise_sd),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("cannot serialize spec: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: DgpSpec = toml::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("cannot parse spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn validate_group(group: &GroupLaw, arity: u32, monotone: bool, which: &str) -> Result<()> {
    if group.types.is_empty() {
        return Err(Error::InfeasibleSpec(format!("{which} group has no types")));
    }
    for ty in &group.types {
        if ty.prob < 0.0 {
            return Err(Error::InfeasibleSpec(format!(
                "{which} group has a negative type probability"
            )));
        }
        if ty.d0 > arity || ty.d_unexposed > arity || ty.d_exposed > arity {
            return Err(Error::InfeasibleSpec(format!(
                "{which} group has treatment levels above arity {arity}"
            )));
        }
        if monotone && ty.d_exposed < ty.d_unexposed && ty.prob > 0.0 {
            return Err(Error::InfeasibleSpec(format!(
                "monotonicity asserted but {which} group carries defier mass \
                 (d_exposed {} < d_unexposed {})",
                ty.d_exposed, ty.d_unexposed
            )));
        }
        if ty.means.len() != (arity + 1) as usize {
            return Err(Error::InfeasibleSpec(format!(
                "{which} group type has {} mean rows, expected {}",
                ty.means.len(),
                arity + 1
            )));
        }
    }
    let total = group.total_prob();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InfeasibleSpec(format!(
            "{which} group probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

fn validate_two_period(spec: &TwoPeriodSpec) -> Result<()> {
    if spec.arity < 1 {
        return Err(Error::InfeasibleSpec("arity must be >= 1".into()));
    }
    if !(spec.exposed_share > 0.0 && spec.exposed_share < 1.0) {
        return Err(Error::InfeasibleSpec(format!(
            "exposed share {} outside (0,1)",
            spec.exposed_share
        )));
    }
    if spec.noise_sd < 0.0 {
        return Err(Error::InfeasibleSpec("negative noise scale".into()));
    }
    validate_group(&spec.unexposed, spec.arity, spec.monotone, "unexposed")?;
    validate_group(&spec.exposed, spec.arity, spec.monotone, "exposed")?;

    // The recorded parallel-trends claims must match the implied gaps.
    let oracle = crate::sim::oracle::two_period_gaps(spec);
    if spec.pt_treatment && oracle.treatment.abs() > PROB_TOL {
        return Err(Error::InfeasibleSpec(format!(
            "spec claims parallel trends in the treatment but the gap is {:e}",
            oracle.treatment
        )));
    }
    if spec.pt_outcome && oracle.outcome.abs() > PROB_TOL {
        return Err(Error::InfeasibleSpec(format!(
            "spec claims parallel trends in the outcome but the gap is {:e}",
            oracle.outcome
        )));
    }
    Ok(())
}

fn validate_staggered(spec: &StaggeredSpec) -> Result<()> {
    let span = spec.n_periods();
    if spec.t_max < spec.t_min {
        return Err(Error::InfeasibleSpec("t_max below t_min".into()));
    }
    if spec.cohorts.len() < 2 {
        return Err(Error::InfeasibleSpec("need at least two cohorts".into()));
    }
    let share_sum: f64 = spec.cohorts.iter().map(|c| c.share).sum();
    if (share_sum - 1.0).abs() > PROB_TOL || spec.cohorts.iter().any(|c| c.share < 0.0) {
        return Err(Error::InfeasibleSpec(format!(
            "cohort shares sum to {share_sum}, not 1"
        )));
    }
    for c in &spec.cohorts {
        if let Cohort::At(e) = c.cohort {
            if e < spec.t_min || e > spec.t_max {
                return Err(Error::InfeasibleSpec(format!(
                    "cohort {e} outside the observation window"
                )));
            }
        }
    }
    let prob_sum: f64 = spec.strata.iter().map(|s| s.prob).sum();
    if (prob_sum - 1.0).abs() > PROB_TOL || spec.strata.iter().any(|s| s.prob < 0.0) {
        return Err(Error::InfeasibleSpec(format!(
            "stratum probabilities sum to {prob_sum}, not 1"
        )));
    }
    if spec.period_shocks.len() != span {
        return Err(Error::InfeasibleSpec(format!(
            "period_shocks has length {}, expected {span}",
            spec.period_shocks.len()
        )));
    }
    for (k, s) in spec.strata.iter().enumerate() {
        if s.base_path.len() != span || s.means.len() != span {
            return Err(Error::InfeasibleSpec(format!(
                "stratum {k} paths/means must have length {span}"
            )));
        }
        for p in s.exposed_extra.iter().chain(&s.base_path_override) {
            if p.path.len() != span {
                return Err(Error::InfeasibleSpec(format!(
                    "stratum {k} per-cohort path must have length {span}"
                )));
            }
            if !spec
                .cohorts
                .iter()
                .any(|c| c.cohort == Cohort::At(p.cohort))
            {
                return Err(Error::InfeasibleSpec(format!(
                    "stratum {k} references unknown cohort {}",
                    p.cohort
                )));
            }
        }
    }
    if spec.pt_treatment {
        for s in &spec.strata {
            if !s.base_path_override.is_empty() {
                return Err(Error::InfeasibleSpec(
                    "spec claims parallel trends in the treatment but a stratum \
                     overrides its base path per cohort"
                        .into(),
                ));
            }
        }
    }
    if spec.pt_outcome {
        let slopes: Vec<f64> = spec
            .cohorts
            .iter()
            .map(|c| spec.cohort_trend(c.cohort))
            .collect();
        if slopes.windows(2).any(|w| (w[0] - w[1]).abs() > PROB_TOL) {
            return Err(Error::InfeasibleSpec(
                "spec claims parallel trends in the outcome but cohort trend \
                 slopes differ"
                    .into(),
            ));
        }
    }
    Ok(())
}
