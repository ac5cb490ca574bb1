//! Placebo tests of the parallel-trends assumptions.
//!
//! For each cohort and pre-exposure lead `l <= -2`, the test computes the
//! first-stage and reduced-form DIDs of the lead period against the base
//! period `e - 1`, with the usual comparison set. Under the identifying
//! assumptions both contrasts are zero in expectation. Per-lead z tests and a
//! joint chi-square statistic are reported separately for the treatment and
//! the outcome; the ratio of the two is never tested (it is undefined under
//! the null of no first-stage variation).
//!
//! The joint statistic stacks the per-lead DIDs and uses the covariance
//! estimated from the stored per-unit influence terms; the chi-square form
//! across leads is an implementation choice, labeled as such in the output.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::{Cohort, CohortMap, Mode, ObservationTable};
use crate::error::{Error, Result};
use crate::sts::{estimate_cell_panel, estimate_cell_rcs, CellSpec, EstimateOptions};

/// Construction note attached to every report.
pub const JOINT_TEST_NOTE: &str =
    "joint chi-square over stacked pre-period DIDs with influence-function \
     covariance; the joint form across leads is an implementation choice";

/// One pre-period contrast.
#[derive(Debug, Clone, Serialize)]
pub struct LeadEstimate {
    pub cohort: i64,
    pub lead: i64,
    pub alpha: f64,
    pub alpha_se: f64,
    pub z_alpha: f64,
    pub p_alpha: f64,
    pub pi: f64,
    pub pi_se: f64,
    pub z_pi: f64,
    pub p_pi: f64,
}

/// Joint test over all stacked leads.
#[derive(Debug, Clone, Serialize)]
pub struct JointStat {
    pub stat: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PretrendResult {
    pub series: Vec<LeadEstimate>,
    pub joint_outcome: JointStat,
    pub joint_treatment: JointStat,
    pub construction: String,
}

impl PretrendResult {
    pub fn summary_json(&self) -> Value {
        json!({
            "series": self.series.iter().map(|s| json!({
                "e": s.cohort, "l": s.lead,
                "alpha": s.alpha, "alpha_se": s.alpha_se,
                "z_alpha": s.z_alpha, "p_alpha": s.p_alpha,
                "pi": s.pi, "pi_se": s.pi_se,
                "z_pi": s.z_pi, "p_pi": s.p_pi,
            })).collect::<Vec<_>>(),
            "joint_outcome": self.joint_outcome,
            "joint_treatment": self.joint_treatment,
            "construction": self.construction,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cohort,lead,alpha,alpha_se,pi,pi_se\n");
        for s in &self.series {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.cohort, s.lead, s.alpha, s.alpha_se, s.pi, s.pi_se
            ));
        }
        out
    }
}

fn z_and_p(est: f64, se: f64, normal: &Normal) -> (f64, f64) {
    let z = if se > 0.0 {
        est / se
    } else if est == 0.0 {
        0.0
    } else {
        f64::INFINITY * est.signum()
    };
    let p = if z.is_finite() {
        2.0 * (1.0 - normal.cdf(z.abs()))
    } else {
        0.0
    };
    (z, p)
}

fn joint_chi_square(values: &[f64], ifs: &[Vec<f64>], n_total: usize) -> Result<JointStat> {
    let m = values.len();
    let v = DVector::from_column_slice(values);
    if v.amax() == 0.0 {
        return Ok(JointStat {
            stat: 0.0,
            df: m,
            p_value: 1.0,
        });
    }
    let mut cov = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let s: f64 = ifs[j].iter().zip(&ifs[k]).map(|(a, b)| a * b).sum();
            let c = s / (n_total as f64 * n_total as f64);
            cov[(j, k)] = c;
            cov[(k, j)] = c;
        }
    }
    if (0..m).any(|j| cov[(j, j)] <= 0.0) {
        return Err(Error::Computation(
            "a pre-period contrast has zero variance; joint test undefined".into(),
        ));
    }
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        Error::Computation("pre-period covariance is not positive definite".into())
    })?;
    let solved = chol.solve(&v);
    let stat = (v.transpose() * solved)[(0, 0)];
    if !stat.is_finite() || stat < 0.0 {
        return Err(Error::Computation(
            "pre-period covariance is numerically singular".into(),
        ));
    }
    let dist = ChiSquared::new(m as f64)
        .map_err(|e| Error::Computation(format!("chi-square setup: {e}")))?;
    Ok(JointStat {
        stat,
        df: m,
        p_value: 1.0 - dist.cdf(stat),
    })
}

/// Run the placebo tests using leads `l in {-max_lead, ..., -2}` for every
/// estimable cohort.
pub fn pretrend_test(
    table: &ObservationTable,
    cohorts: &CohortMap,
    max_lead: usize,
) -> Result<PretrendResult> {
    if max_lead < 2 {
        return Err(Error::InvalidArgument(
            "max_lead must be at least 2 (lead -1 is the base period)".into(),
        ));
    }
    let periods = table.periods();
    let n_total = table.n_units();
    let opts = EstimateOptions {
        tau: 0.0, // the ratio is never used; don't flag weak first stages
        min_cell_per_group: 1,
    };

    let mut series = Vec::new();
    let mut alpha_vals = Vec::new();
    let mut pi_vals = Vec::new();
    let mut alpha_ifs: Vec<Vec<f64>> = Vec::new();
    let mut pi_ifs: Vec<Vec<f64>> = Vec::new();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");

    for e in cohorts.estimated_cohorts(table.min_period()) {
        if !periods.contains(&(e - 1)) {
            continue;
        }
        for l in (-(max_lead as i64))..=-2 {
            let t = e + l;
            if !periods.contains(&t) {
                continue;
            }
            let comparison: Vec<Cohort> = cohorts
                .unexposed_set()
                .iter()
                .copied()
                .filter(|c| match c {
                    Cohort::Never => true,
                    Cohort::At(u) => *u > e - 1,
                })
                .collect();
            if comparison.is_empty() {
                continue;
            }
            let spec = CellSpec {
                cohort: e,
                rel: l,
                base: e - 1,
                comparison,
            };
            let cell = match table.mode() {
                Mode::Panel => estimate_cell_panel(table, cohorts, &spec, &opts),
                Mode::RepeatedCrossSection => estimate_cell_rcs(table, cohorts, &spec, &opts),
            }?;

            // Full-sample scaling so covariances across leads share a basis.
            let rescale = n_total as f64 / cell.n_cell as f64;
            let mut a_full = vec![0.0f64; n_total];
            let mut b_full = vec![0.0f64; n_total];
            for (j, &u) in cell.if_units.iter().enumerate() {
                a_full[u as usize] = cell.if_alpha[j] * rescale;
                b_full[u as usize] = cell.if_pi[j] * rescale;
            }
            let alpha_se = (a_full.iter().map(|v| v * v).sum::<f64>()).sqrt() / n_total as f64;
            let pi_se = (b_full.iter().map(|v| v * v).sum::<f64>()).sqrt() / n_total as f64;
            let (z_alpha, p_alpha) = z_and_p(cell.alpha_hat, alpha_se, &normal);
            let (z_pi, p_pi) = z_and_p(cell.pi_hat, pi_se, &normal);

            series.push(LeadEstimate {
                cohort: e,
                lead: l,
                alpha: cell.alpha_hat,
                alpha_se,
                z_alpha,
                p_alpha,
                pi: cell.pi_hat,
                pi_se,
                z_pi,
                p_pi,
            });
            alpha_vals.push(cell.alpha_hat);
            pi_vals.push(cell.pi_hat);
            alpha_ifs.push(a_full);
            pi_ifs.push(b_full);
        }
    }
    if series.is_empty() {
        return Err(Error::NoPrePeriods);
    }

    Ok(PretrendResult {
        joint_outcome: joint_chi_square(&alpha_vals, &alpha_ifs, n_total)?,
        joint_treatment: joint_chi_square(&pi_vals, &pi_ifs, n_total)?,
        series,
        construction: JOINT_TEST_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{derive_cohorts, Mode, ObservationTable, RawRecord, UnexposedRule};

    fn rec(unit: &str, time: i64, y: f64, d: f64, z: u8) -> RawRecord {
        RawRecord {
            unit: unit.into(),
            time,
            y,
            d,
            z,
            cohort: None,
            stratum: None,
        }
    }

    /// Exactly parallel pre-trends: Y and D evolve identically across groups
    /// before exposure. All values are dyadic so long differences are
    /// float-exact and the contrasts vanish identically.
    fn parallel_panel() -> ObservationTable {
        let mut records = Vec::new();
        let mut k = 0;
        for (e, count) in [(Some(5i64), 4), (None, 5)] {
            for _ in 0..count {
                k += 1;
                for t in 1..=6i64 {
                    let z = matches!(e, Some(date) if t >= date) as u8;
                    // Common nonlinear trend plus a unit intercept.
                    let y = (t * t) as f64 * 0.25 + k as f64 + 3.0 * z as f64;
                    let d = ((t >= 3) as u8 + z) as f64; // common adoption step
                    records.push(rec(&format!("u{k}"), t, y, d, z));
                }
            }
        }
        ObservationTable::from_records(Mode::Panel, records).unwrap()
    }

    #[test]
    fn exact_parallel_trends_give_zero_statistics() {
        let table = parallel_panel();
        let cohorts = derive_cohorts(&table, UnexposedRule::NeverExposed).unwrap();
        let result = pretrend_test(&table, &cohorts, 4).unwrap();
        assert_eq!(result.series.len(), 3); // leads -4, -3, -2
        for s in &result.series {
            assert_eq!(s.alpha, 0.0, "lead {} alpha {}", s.lead, s.alpha);
            assert_eq!(s.pi, 0.0);
            assert_eq!(s.z_alpha, 0.0);
            assert_eq!(s.z_pi, 0.0);
        }
        assert_eq!(result.joint_outcome.stat, 0.0);
        assert_eq!(result.joint_outcome.p_value, 1.0);
        assert_eq!(result.joint_treatment.stat, 0.0);
    }

    /// A panel with genuine unit-level variation in the pre-period changes
    /// (deterministic pseudo-noise), so the statistics are non-degenerate.
    fn noisy_panel() -> ObservationTable {
        let mix = |k: u64, t: i64| -> f64 {
            let mut h = k
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((t as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
            h ^= h >> 30;
            h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            h ^= h >> 27;
            (h >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut records = Vec::new();
        let mut k = 0u64;
        for (e, count) in [(Some(5i64), 6), (None, 7)] {
            for _ in 0..count {
                k += 1;
                for t in 1..=6i64 {
                    let z = matches!(e, Some(date) if t >= date) as u8;
                    let wobble = mix(k, t);
                    let y = 0.3 * t as f64 + wobble + 2.0 * z as f64;
                    let d = ((wobble > 0.5) as u8 + z) as f64;
                    records.push(rec(&format!("u{k}"), t, y, d, z));
                }
            }
        }
        ObservationTable::from_records(Mode::Panel, records).unwrap()
    }

    #[test]
    fn period_common_shifts_leave_statistics_invariant() {
        let table = noisy_panel();
        let cohorts = derive_cohorts(&table, UnexposedRule::NeverExposed).unwrap();
        let base = pretrend_test(&table, &cohorts, 3).unwrap();
        assert!(base.joint_outcome.stat > 0.0);

        let mut shifted = Vec::new();
        for u in 0..table.n_units() as u32 {
            for r in table.rows_of(u) {
                shifted.push(RawRecord {
                    unit: table.unit_name(u).into(),
                    time: r.time,
                    y: r.y + 11.0 * r.time as f64,
                    d: r.d + (r.time % 3) as f64 + 1.0,
                    z: r.z,
                    cohort: None,
                    stratum: None,
                });
            }
        }
        let table2 = ObservationTable::from_records(Mode::Panel, shifted).unwrap();
        let cohorts2 = derive_cohorts(&table2, UnexposedRule::NeverExposed).unwrap();
        let res = pretrend_test(&table2, &cohorts2, 3).unwrap();
        for (a, b) in base.series.iter().zip(&res.series) {
            assert!((a.alpha - b.alpha).abs() < 1e-10);
            assert!((a.pi - b.pi).abs() < 1e-10);
        }
        assert!(
            (base.joint_outcome.stat - res.joint_outcome.stat).abs() < 1e-6,
            "outcome stat {} vs {}",
            base.joint_outcome.stat,
            res.joint_outcome.stat
        );
        assert!(
            (base.joint_treatment.stat - res.joint_treatment.stat).abs() < 1e-6,
            "treatment stat {} vs {}",
            base.joint_treatment.stat,
            res.joint_treatment.stat
        );
    }

    #[test]
    fn no_pre_periods_is_an_error() {
        let mut records = Vec::new();
        for (u, e) in [("a", Some(2i64)), ("b", None)] {
            for t in 1..=3i64 {
                let z = matches!(e, Some(date) if t >= date) as u8;
                records.push(rec(u, t, t as f64, z as f64, z));
            }
        }
        let table = ObservationTable::from_records(Mode::Panel, records).unwrap();
        let cohorts = derive_cohorts(&table, UnexposedRule::NeverExposed).unwrap();
        assert!(matches!(
            pretrend_test(&table, &cohorts, 3),
            Err(Error::NoPrePeriods)
        ));
    }
}
