//! Exact population estimands by enumeration over the type distribution.
//!
//! Nothing here samples: every quantity is a finite sum over types (or
//! strata) weighted by their probabilities, so identification results can be
//! checked to near machine precision.

use serde::Serialize;

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::numeric::ksum;
use crate::sim::spec::{DgpSpec, StaggeredSpec, TripleSpec, TwoPeriodSpec, TypeLaw};
use crate::sim::types::TResponse;

/// Parallel-trends gaps implied by a two-period spec: exposed-group trend
/// minus unexposed-group trend, in the treatment and in the outcome, both
/// along never-exposed paths.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwoPeriodGaps {
    pub treatment: f64,
    pub outcome: f64,
}

fn type_prob_pairs(types: &[TypeLaw]) -> impl Iterator<Item = &TypeLaw> {
    types.iter().filter(|t| t.prob > 0.0)
}

/// Observed treatment level for a type in group `exposed` at period `t`.
fn d_obs(ty: &TypeLaw, exposed: bool, t: usize) -> u32 {
    if t == 0 {
        ty.d0
    } else if exposed {
        ty.d_exposed
    } else {
        ty.d_unexposed
    }
}

pub fn two_period_gaps(spec: &TwoPeriodSpec) -> TwoPeriodGaps {
    let trend = |types: &[TypeLaw]| -> (f64, f64) {
        let d = ksum(
            type_prob_pairs(types).map(|ty| ty.prob * (ty.d_unexposed as f64 - ty.d0 as f64)),
        );
        let y = ksum(type_prob_pairs(types).map(|ty| {
            ty.prob * (ty.means[ty.d_unexposed as usize][1] - ty.means[ty.d0 as usize][0])
        }));
        (d, y)
    };
    let (d0, y0) = trend(&spec.unexposed.types);
    let (d1, y1) = trend(&spec.exposed.types);
    TwoPeriodGaps {
        treatment: d1 - d0,
        outcome: y1 - y0,
    }
}

/// Population estimands of a two-period spec.
#[derive(Debug, Clone, Serialize)]
pub struct TwoPeriodOracle {
    /// Population Wald-DID (outcome DID over treatment DID).
    pub wald_did: f64,
    /// Average causal response on the treated: threshold-weighted per-step
    /// effects among exposed-group compliers. Equals the LATET when binary.
    pub acrt: f64,
    /// Normalized threshold weights, index j-1 for threshold j.
    pub acrt_weights: Vec<f64>,
    /// Per-step effects at each threshold (NaN where no compliers).
    pub acrt_steps: Vec<f64>,
    /// Total complier mass in the exposed group (the population first stage
    /// when parallel trends in the treatment holds).
    pub complier_mass: f64,
    /// LATET (binary only).
    pub latet: Option<f64>,
    /// Treatment-path variant of the LATET (binary; equals the LATET under
    /// the no-carryover structure of these specs).
    pub latet_prime: Option<f64>,
    pub gaps: TwoPeriodGaps,
}

pub fn two_period_oracle(spec: &TwoPeriodSpec) -> Result<TwoPeriodOracle> {
    let j_max = spec.arity as usize;

    let group_mean = |types: &[TypeLaw], exposed: bool, t: usize, of_d: bool| -> f64 {
        ksum(type_prob_pairs(types).map(|ty| {
            let d = d_obs(ty, exposed, t);
            let v = if of_d {
                d as f64
            } else {
                ty.means[d as usize][t]
            };
            ty.prob * v
        }))
    };

    let ey = |exposed: bool, t: usize| -> f64 {
        let types = if exposed {
            &spec.exposed.types
        } else {
            &spec.unexposed.types
        };
        group_mean(types, exposed, t, false) + spec.period_shocks[t]
    };
    let ed = |exposed: bool, t: usize| -> f64 {
        let types = if exposed {
            &spec.exposed.types
        } else {
            &spec.unexposed.types
        };
        group_mean(types, exposed, t, true)
    };

    let alpha = (ey(true, 1) - ey(true, 0)) - (ey(false, 1) - ey(false, 0));
    let pi = (ed(true, 1) - ed(true, 0)) - (ed(false, 1) - ed(false, 0));
    if pi == 0.0 {
        return Err(Error::InfeasibleSpec(
            "population first-stage DID is zero".into(),
        ));
    }
    let wald_did = alpha / pi;

    // Threshold compliers in the exposed group.
    let mut masses = vec![0.0f64; j_max];
    let mut weighted_steps = vec![0.0f64; j_max];
    for ty in type_prob_pairs(&spec.exposed.types) {
        for j in 1..=j_max as u32 {
            if ty.d_exposed >= j && j > ty.d_unexposed {
                let idx = (j - 1) as usize;
                masses[idx] += ty.prob;
                weighted_steps[idx] +=
                    ty.prob * (ty.means[j as usize][1] - ty.means[(j - 1) as usize][1]);
            }
        }
    }
    let total_mass: f64 = ksum(masses.iter().copied());
    if total_mass <= 0.0 {
        return Err(Error::InfeasibleSpec(
            "exposed group has no compliers at any threshold".into(),
        ));
    }
    let acrt = ksum(weighted_steps.iter().copied()) / total_mass;
    let acrt_weights: Vec<f64> = masses.iter().map(|m| m / total_mass).collect();
    let acrt_steps: Vec<f64> = masses
        .iter()
        .zip(&weighted_steps)
        .map(|(m, w)| if *m > 0.0 { w / m } else { f64::NAN })
        .collect();

    let (latet, latet_prime) = if spec.arity == 1 {
        // Split the compliers by their period-0 treatment; the weighted
        // average over both components is the LATET and, under no carryover,
        // also the treatment-path variant.
        let mut w = [0.0f64; 2];
        let mut eff = [0.0f64; 2];
        for ty in type_prob_pairs(&spec.exposed.types) {
            if ty.d_exposed == 1 && ty.d_unexposed == 0 {
                let side = ty.d0 as usize;
                w[side] += ty.prob;
                eff[side] += ty.prob * (ty.means[1][1] - ty.means[0][1]);
            }
        }
        let total = w[0] + w[1];
        let lp = (eff[0] + eff[1]) / total;
        (Some(acrt), Some(lp))
    } else {
        (None, None)
    };

    Ok(TwoPeriodOracle {
        wald_did,
        acrt,
        acrt_weights,
        acrt_steps,
        complier_mass: total_mass,
        latet,
        latet_prime,
        gaps: two_period_gaps(spec),
    })
}

/// One time-response component of the expected time gain.
#[derive(Debug, Clone, Serialize)]
pub struct TimeGainComponent {
    pub response: String,
    pub weight: f64,
    pub delta: f64,
}

/// Expected time gain in one group and its decomposition over time-response
/// types.
#[derive(Debug, Clone, Serialize)]
pub struct TimeGainSide {
    pub exposed: bool,
    pub delta: f64,
    pub components: Vec<TimeGainComponent>,
    pub weight_sum: f64,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeGainReport {
    pub sides: Vec<TimeGainSide>,
}

/// Decompose each group's average never-exposed outcome trend into the
/// share-weighted per-type indirect effects of time.
pub fn check_time_gain_decomposition(spec: &TwoPeriodSpec) -> Result<TimeGainReport> {
    if spec.arity != 1 {
        return Err(Error::InfeasibleSpec(
            "time-gain decomposition requires a binary treatment".into(),
        ));
    }
    let shock = spec.period_shocks[1] - spec.period_shocks[0];
    let mut sides = Vec::new();
    for (exposed, types) in [(false, &spec.unexposed.types), (true, &spec.exposed.types)] {
        // Direct computation of the group's never-exposed outcome trend.
        let delta = ksum(type_prob_pairs(types).map(|ty| {
            ty.prob * (ty.means[ty.d_unexposed as usize][1] - ty.means[ty.d0 as usize][0])
        })) + shock;

        // Per time-response aggregation.
        let mut components = Vec::new();
        for response in [
            TResponse::NeverTaker,
            TResponse::AlwaysTaker,
            TResponse::Complier,
            TResponse::Defier,
        ] {
            let mut weight = 0.0;
            let mut acc = 0.0;
            for ty in type_prob_pairs(types) {
                let ut = ty.unit_type().ok_or_else(|| {
                    Error::InfeasibleSpec("non-binary type in binary spec".into())
                })?;
                if ut.gt == response {
                    weight += ty.prob;
                    acc += ty.prob
                        * (ty.means[ty.d_unexposed as usize][1] - ty.means[ty.d0 as usize][0]);
                }
            }
            if weight > 0.0 {
                components.push(TimeGainComponent {
                    response: response.to_string(),
                    weight,
                    delta: acc / weight + shock,
                });
            }
        }
        let weight_sum: f64 = components.iter().map(|c| c.weight).sum();
        let recomposed: f64 = ksum(components.iter().map(|c| c.weight * c.delta));
        sides.push(TimeGainSide {
            exposed,
            delta,
            identity_residual: recomposed - delta,
            components,
            weight_sum,
        });
    }
    Ok(TimeGainReport { sides })
}

/// Switcher-effect decomposition under the fuzzy-DID type restrictions.
#[derive(Debug, Clone, Serialize)]
pub struct SlatetReport {
    /// Average period-1 treatment effect among exposed-group units that
    /// switch into treatment.
    pub slatet: f64,
    /// Effect among exposed-group time compliers.
    pub time_complier_effect: f64,
    pub time_complier_share: f64,
    /// Effect among exposed-group instrument compliers that are time
    /// never-takers.
    pub complier_nt_effect: f64,
    pub complier_nt_share: f64,
    /// LATET for contrast.
    pub latet: f64,
    pub identity_residual: f64,
}

/// Verify the switcher-effect decomposition on a 2x2 binary spec whose type
/// distribution satisfies the fuzzy-DID admissibility restrictions.
pub fn check_slatet_decomposition(spec: &TwoPeriodSpec) -> Result<SlatetReport> {
    if spec.arity != 1 {
        return Err(Error::InfeasibleSpec(
            "switcher decomposition requires a binary treatment".into(),
        ));
    }
    for (types, exposed) in [(&spec.unexposed.types, false), (&spec.exposed.types, true)] {
        for ty in type_prob_pairs(types) {
            let ut = ty
                .unit_type()
                .ok_or_else(|| Error::InfeasibleSpec("non-binary type in binary spec".into()))?;
            let ok = if exposed {
                ut.fuzzy_admissible_exposed()
            } else {
                ut.fuzzy_admissible_unexposed()
            };
            if !ok {
                return Err(Error::InfeasibleSpec(format!(
                    "type {ut} has positive mass but is excluded in the {} group",
                    if exposed { "exposed" } else { "unexposed" }
                )));
            }
        }
    }

    // Switchers in the exposed group: observed path 0 -> 1.
    let mut sw_share = 0.0;
    let mut sw_eff = 0.0;
    // Component shares within the switchers.
    let mut cm_t = (0.0, 0.0); // (share, weighted effect): time compliers
    let mut cm_z_nt = (0.0, 0.0); // instrument compliers & time never-takers
    let mut latet_parts = (0.0, 0.0);
    for ty in type_prob_pairs(&spec.exposed.types) {
        let effect = ty.means[1][1] - ty.means[0][1];
        if ty.d0 == 0 && ty.d_exposed == 1 {
            sw_share += ty.prob;
            sw_eff += ty.prob * effect;
            if ty.d_unexposed == 1 {
                cm_t.0 += ty.prob;
                cm_t.1 += ty.prob * effect;
            } else {
                cm_z_nt.0 += ty.prob;
                cm_z_nt.1 += ty.prob * effect;
            }
        }
        if ty.d_exposed == 1 && ty.d_unexposed == 0 {
            latet_parts.0 += ty.prob;
            latet_parts.1 += ty.prob * effect;
        }
    }
    if sw_share <= 0.0 {
        return Err(Error::InfeasibleSpec(
            "no switchers in the exposed group".into(),
        ));
    }
    let slatet = sw_eff / sw_share;
    let time_complier_share = cm_t.0 / sw_share;
    let complier_nt_share = cm_z_nt.0 / sw_share;
    let time_complier_effect = if cm_t.0 > 0.0 { cm_t.1 / cm_t.0 } else { 0.0 };
    let complier_nt_effect = if cm_z_nt.0 > 0.0 {
        cm_z_nt.1 / cm_z_nt.0
    } else {
        0.0
    };
    let recomposed =
        time_complier_effect * time_complier_share + complier_nt_effect * complier_nt_share;
    let latet = if latet_parts.0 > 0.0 {
        latet_parts.1 / latet_parts.0
    } else {
        f64::NAN
    };
    Ok(SlatetReport {
        slatet,
        time_complier_effect,
        time_complier_share,
        complier_nt_effect,
        complier_nt_share,
        latet,
        identity_residual: recomposed - slatet,
    })
}

/// One cohort-by-period population value.
#[derive(Debug, Clone, Serialize)]
pub struct CellValue {
    pub cohort: i64,
    pub rel: i64,
    pub period: i64,
    pub value: f64,
}

/// Population estimands of a staggered spec.
#[derive(Debug, Clone, Serialize)]
pub struct StaggeredOracle {
    /// Cohort-specific complier effect per (cohort, relative period).
    pub clatt: Vec<CellValue>,
    /// Cohort-specific first-stage exposed effect (complier share).
    pub caet: Vec<CellValue>,
    /// Population two-way fixed-effects IV coefficient, for two-cohort
    /// layouts.
    pub beta_iv: Option<f64>,
}

pub fn staggered_oracle(spec: &StaggeredSpec) -> Result<StaggeredOracle> {
    let mut clatt = Vec::new();
    let mut caet = Vec::new();
    for c in &spec.cohorts {
        let Cohort::At(e) = c.cohort else { continue };
        for t in e..=spec.t_max {
            let mut mass = 0.0;
            let mut eff = 0.0;
            let tix = (t - spec.t_min) as usize;
            for s in &spec.strata {
                if s.prob > 0.0 && s.is_complier(e, t, spec.t_min) {
                    mass += s.prob;
                    eff += s.prob * (s.means[tix][1] - s.means[tix][0]);
                }
            }
            caet.push(CellValue {
                cohort: e,
                rel: t - e,
                period: t,
                value: mass,
            });
            clatt.push(CellValue {
                cohort: e,
                rel: t - e,
                period: t,
                value: if mass > 0.0 { eff / mass } else { f64::NAN },
            });
        }
    }

    let beta_iv = if spec.cohorts.len() == 2 {
        Some(population_beta_iv(spec)?)
    } else {
        None
    };

    Ok(StaggeredOracle {
        clatt,
        caet,
        beta_iv,
    })
}

/// Population TWFEIV coefficient for a two-cohort layout: instrument
/// residuals from the share-weighted two-way regression on cohort-group and
/// period effects, applied to the exact cell means.
pub fn population_beta_iv(spec: &StaggeredSpec) -> Result<f64> {
    if spec.cohorts.len() != 2 {
        return Err(Error::UnsupportedLayout(
            "population beta_iv requires exactly two cohorts".into(),
        ));
    }
    let g0 = &spec.cohorts[0];
    let g1 = &spec.cohorts[1];
    let periods: Vec<i64> = (spec.t_min..=spec.t_max).collect();
    let z_of = |c: Cohort, t: i64| -> f64 {
        match c {
            Cohort::At(e) => (t >= e) as u8 as f64,
            Cohort::Never => 0.0,
        }
    };
    // Weighted two-way residualization for two groups with period-constant
    // weights reduces to centering the per-period group gap.
    let a = g0.share;
    let b = g1.share;
    let dz: Vec<f64> = periods
        .iter()
        .map(|&t| z_of(g0.cohort, t) - z_of(g1.cohort, t))
        .collect();
    let dz_mean = ksum(dz.iter().copied()) / dz.len() as f64;
    let frac0 = b / (a + b);
    let frac1 = -a / (a + b);

    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &t) in periods.iter().enumerate() {
        let zr0 = frac0 * (dz[i] - dz_mean);
        let zr1 = frac1 * (dz[i] - dz_mean);
        num += a * zr0 * spec.mean_y(g0.cohort, t) + b * zr1 * spec.mean_y(g1.cohort, t);
        den += a * zr0 * spec.mean_d(g0.cohort, t) + b * zr1 * spec.mean_d(g1.cohort, t);
    }
    if den.abs() < 1e-14 {
        return Err(Error::WeakFirstStage(den.abs()));
    }
    Ok(num / den)
}

/// Population estimands of a triple spec.
#[derive(Debug, Clone, Serialize)]
pub struct TripleOracle {
    /// Triple-difference estimand: stratum-A DID minus stratum-B DID, outcome
    /// over treatment.
    pub theta: f64,
    /// Complier effect within stratum A.
    pub acrt_a: f64,
}

pub fn triple_oracle(spec: &TripleSpec) -> Result<TripleOracle> {
    let did = |s: &TwoPeriodSpec| -> (f64, f64) {
        let trend = |types: &[TypeLaw], exposed: bool| -> (f64, f64) {
            let y = ksum(type_prob_pairs(types).map(|ty| {
                ty.prob
                    * (ty.means[d_obs(ty, exposed, 1) as usize][1]
                        - ty.means[d_obs(ty, exposed, 0) as usize][0])
            }));
            let d = ksum(
                type_prob_pairs(types)
                    .map(|ty| ty.prob * (d_obs(ty, exposed, 1) as f64 - d_obs(ty, exposed, 0) as f64)),
            );
            (y, d)
        };
        let (y1, d1) = trend(&s.exposed.types, true);
        let (y0, d0) = trend(&s.unexposed.types, false);
        // Period shocks are common within the stratum and cancel.
        (y1 - y0, d1 - d0)
    };
    let (alpha_a, pi_a) = did(&spec.a);
    let (alpha_b, pi_b) = did(&spec.b);
    let denom = pi_a - pi_b;
    if denom.abs() < 1e-14 {
        return Err(Error::WeakFirstStage(denom.abs()));
    }
    let acrt_a = two_period_oracle(&spec.a)?.acrt;
    Ok(TripleOracle {
        theta: (alpha_a - alpha_b) / denom,
        acrt_a,
    })
}

/// Everything the oracle can say about a spec, for the CLI `oracle` command.
#[derive(Debug, Clone, Serialize)]
pub struct OracleValues {
    pub design: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_period: Option<TwoPeriodOracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_gain: Option<TimeGainReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slatet: Option<SlatetReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub staggered: Option<StaggeredOracle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triple: Option<TripleOracle>,
}

/// Compute every estimand the design supports.
pub fn population_values(spec: &DgpSpec) -> Result<OracleValues> {
    spec.validate()?;
    match spec {
        DgpSpec::TwoPeriod(s) => {
            let two = two_period_oracle(s)?;
            let time_gain = if s.arity == 1 {
                Some(check_time_gain_decomposition(s)?)
            } else {
                None
            };
            let slatet = if s.arity == 1 {
                check_slatet_decomposition(s).ok()
            } else {
                None
            };
            Ok(OracleValues {
                design: "two_period".into(),
                two_period: Some(two),
                time_gain,
                slatet,
                staggered: None,
                triple: None,
            })
        }
        DgpSpec::Staggered(s) => Ok(OracleValues {
            design: "staggered".into(),
            two_period: None,
            time_gain: None,
            slatet: None,
            staggered: Some(staggered_oracle(s)?),
            triple: None,
        }),
        DgpSpec::Triple(s) => Ok(OracleValues {
            design: "triple".into(),
            two_period: None,
            time_gain: None,
            slatet: None,
            staggered: None,
            triple: Some(triple_oracle(s)?),
        }),
    }
}
