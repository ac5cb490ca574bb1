//! Two-way fixed-effects instrumental-variable estimation and its exact
//! decomposition into per-period Wald-DID components.
//!
//! The estimator residualizes the instrument on the two fixed-effect margins
//! (unit and period for panels; cohort-group and period for repeated cross
//! sections) and forms `beta_iv = sum(z_res * y) / sum(z_res * d)`.
//!
//! For a two-cohort layout the coefficient decomposes exactly, in finite
//! samples, into per-period long-DID ratios against a base period, weighted
//! by `n * z_res * first-stage-DID` and normalized. Components at periods
//! where the comparison cohort is already exposed are the contaminated
//! ("biased") comparisons; their weights are typically negative when exposed
//! effects grow over time, dragging the coefficient below every clean
//! cohort effect.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{Cohort, CohortMap, Mode, ObservationTable};
use crate::error::{Error, Result};
use crate::numeric::{ksum, sample_sd};
use crate::sts::BootstrapResult;

/// Estimation options for this module.
#[derive(Debug, Clone, Copy)]
pub struct TwfeivOptions {
    pub tau: f64,
}

impl Default for TwfeivOptions {
    fn default() -> Self {
        Self {
            tau: crate::DEFAULT_TAU,
        }
    }
}

/// Residualized-instrument mean for one (cohort, period) cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZresCell {
    pub cohort: Cohort,
    pub period: i64,
    pub zres: f64,
    pub n: usize,
}

/// The two-way fixed-effects IV fit.
#[derive(Debug, Clone, Serialize)]
pub struct TwfeivResult {
    pub beta_iv_hat: f64,
    /// First-stage coefficient of the treatment on the residualized
    /// instrument.
    pub pi_hat: f64,
    pub n_obs: usize,
    pub zres: Vec<ZresCell>,
}

impl TwfeivResult {
    pub fn summary_json(&self) -> Value {
        json!({
            "beta_iv": self.beta_iv_hat,
            "first_stage": self.pi_hat,
            "n": self.n_obs,
            "zres": self.zres,
        })
    }
}

/// Alternating-projection residualization of `values` on two categorical
/// margins. Exact (two sweeps) for balanced layouts; iterates to
/// near-machine tolerance otherwise.
fn demean_two_way(values: &[f64], a: &[u32], b: &[u32], na: usize, nb: usize) -> Result<Vec<f64>> {
    let mut r = values.to_vec();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut count_a = vec![0usize; na];
    let mut count_b = vec![0usize; nb];
    for i in 0..values.len() {
        count_a[a[i] as usize] += 1;
        count_b[b[i] as usize] += 1;
    }
    for _ in 0..10_000 {
        let mut max_adjust = 0.0f64;
        for (counts, keys) in [(&count_a, a), (&count_b, b)] {
            let mut sums = vec![0.0f64; counts.len()];
            for (i, &k) in keys.iter().enumerate() {
                sums[k as usize] += r[i];
            }
            for (s, &c) in sums.iter_mut().zip(counts.iter()) {
                if c > 0 {
                    *s /= c as f64;
                }
            }
            for (i, &k) in keys.iter().enumerate() {
                let m = sums[k as usize];
                r[i] -= m;
                max_adjust = max_adjust.max(m.abs());
            }
        }
        if max_adjust < 1e-14 * scale {
            return Ok(r);
        }
    }
    Err(Error::Computation(
        "two-way demeaning did not converge".into(),
    ))
}

fn period_index(table: &ObservationTable) -> BTreeMap<i64, u32> {
    table
        .periods()
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, i as u32))
        .collect()
}

/// Two-way fixed-effects IV coefficient. Panel mode absorbs unit and period
/// effects; RCS mode absorbs cohort-group and period effects.
pub fn estimate_twfeiv(
    table: &ObservationTable,
    cohorts: &CohortMap,
    opts: &TwfeivOptions,
) -> Result<TwfeivResult> {
    if cohorts.cohorts().len() < 2 || table.periods().len() < 2 {
        return Err(Error::UnsupportedLayout(
            "need at least two cohorts and two periods".into(),
        ));
    }
    let rows = table.rows();
    let n = rows.len();
    let pindex = period_index(table);

    let z: Vec<f64> = rows.iter().map(|r| r.z as f64).collect();
    let periods: Vec<u32> = rows.iter().map(|r| pindex[&r.time]).collect();
    let zres = match table.mode() {
        Mode::Panel => {
            let units: Vec<u32> = rows.iter().map(|r| r.unit).collect();
            demean_two_way(&z, &units, &periods, table.n_units(), pindex.len())?
        }
        Mode::RepeatedCrossSection => {
            let roster: Vec<Cohort> = cohorts.cohorts().to_vec();
            let gindex: BTreeMap<Cohort, u32> = roster
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, i as u32))
                .collect();
            let groups: Vec<u32> = rows
                .iter()
                .map(|r| gindex[&cohorts.exposure_of(r.unit)])
                .collect();
            demean_two_way(&z, &groups, &periods, roster.len(), pindex.len())?
        }
    };

    let szz = ksum(zres.iter().map(|v| v * v));
    if szz <= 1e-12 {
        return Err(Error::NoInstrumentVariation);
    }
    let szd = ksum(zres.iter().zip(rows).map(|(zr, r)| zr * r.d));
    if szd.abs() < opts.tau * n as f64 {
        return Err(Error::WeakFirstStage(szd.abs()));
    }
    let szy = ksum(zres.iter().zip(rows).map(|(zr, r)| zr * r.y));

    // Cell means of the residualized instrument, for the decomposition and
    // for audit.
    let mut cell_sum: BTreeMap<(Cohort, i64), (f64, usize)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let key = (cohorts.exposure_of(r.unit), r.time);
        let e = cell_sum.entry(key).or_insert((0.0, 0));
        e.0 += zres[i];
        e.1 += 1;
    }
    let zres_cells: Vec<ZresCell> = cell_sum
        .into_iter()
        .map(|((cohort, period), (s, c))| ZresCell {
            cohort,
            period,
            zres: s / c as f64,
            n: c,
        })
        .collect();

    Ok(TwfeivResult {
        beta_iv_hat: szy / szd,
        pi_hat: szd / szz,
        n_obs: n,
        zres: zres_cells,
    })
}

/// Bootstrap SE for the TWFEIV coefficient (unit resampling in panel mode,
/// observation resampling in RCS mode -- both resample whole units here,
/// which coincide with observations in RCS mode).
pub fn bootstrap_twfeiv_se(
    table: &ObservationTable,
    cohorts: &CohortMap,
    opts: &TwfeivOptions,
    reps: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if reps < 100 {
        return Err(Error::BootstrapReps {
            min: 100,
            got: reps,
        });
    }
    let n = table.n_units() as u32;
    let cap = reps.saturating_mul(10);
    let rule = cohorts.rule().clone();
    let results: Vec<std::result::Result<(f64, usize), ()>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let mut redraws = 0usize;
            loop {
                let drawn: Vec<u32> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let attempt = (|| -> Result<f64> {
                    let resampled = table.resample_units(&drawn)?;
                    let map = crate::data::derive_cohorts(&resampled, rule.clone())?;
                    Ok(estimate_twfeiv(&resampled, &map, opts)?.beta_iv_hat)
                })();
                match attempt {
                    Ok(b) if b.is_finite() => return Ok((b, redraws)),
                    _ => {
                        redraws += 1;
                        if redraws > cap {
                            return Err(());
                        }
                    }
                }
            }
        })
        .collect();
    let mut betas = Vec::with_capacity(reps);
    let mut redraws = 0usize;
    for r in results {
        match r {
            Ok((b, rd)) => {
                betas.push(b);
                redraws += rd;
            }
            Err(()) => return Err(Error::DegenerateResample { cap }),
        }
    }
    Ok(BootstrapResult {
        se: sample_sd(&betas),
        reps,
        redraws,
    })
}

/// Whether a decomposition component compares against an already-exposed
/// comparison cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Clean,
    Biased,
}

/// One per-period component of the decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct Component {
    pub period: i64,
    pub kind: ComponentKind,
    pub weight: f64,
    /// Per-period Wald-DID against the base period (raw ratio; NaN-prone
    /// when the first-stage DID is tiny, in which case it is flagged and the
    /// contribution is computed without the ratio).
    pub wdid: f64,
    pub contribution: f64,
    pub weak_first_stage: bool,
}

/// The exact finite-sample decomposition of the TWFEIV coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub beta_iv_hat: f64,
    pub base_period: i64,
    pub early_cohort: i64,
    pub comparison: Cohort,
    pub components: Vec<Component>,
    pub weight_sum: f64,
    /// `sum(contributions) - beta_iv_hat`; an algebraic identity up to float
    /// rounding.
    pub identity_residual: f64,
}

impl DecompositionReport {
    pub fn summary_json(&self) -> Value {
        json!({
            "beta_iv": self.beta_iv_hat,
            "base_period": self.base_period,
            "early_cohort": self.early_cohort,
            "comparison": self.comparison,
            "components": self.components,
            "weight_sum": self.weight_sum,
            "identity_residual": self.identity_residual,
        })
    }

    /// CSV rows for plotting: period, kind, weight, estimate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,kind,weight,wdid,contribution\n");
        for c in &self.components {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.period,
                match c.kind {
                    ComponentKind::Clean => "clean",
                    ComponentKind::Biased => "biased",
                },
                c.weight,
                c.wdid,
                c.contribution
            ));
        }
        out
    }
}

struct CellMean {
    y: f64,
    d: f64,
    z: f64,
    n: usize,
}

/// Group rows into (group, period) cells; group 0 = early cohort, 1 =
/// comparison.
fn collect_cells(
    table: &ObservationTable,
    cohorts: &CohortMap,
    early: Cohort,
) -> BTreeMap<(u8, i64), CellMean> {
    let mut cells: BTreeMap<(u8, i64), (f64, f64, f64, usize)> = BTreeMap::new();
    for r in table.rows() {
        let g = if cohorts.exposure_of(r.unit) == early { 0u8 } else { 1u8 };
        let e = cells.entry((g, r.time)).or_insert((0.0, 0.0, 0.0, 0));
        e.0 += r.y;
        e.1 += r.d;
        e.2 += r.z as f64;
        e.3 += 1;
    }
    cells
        .into_iter()
        .map(|(k, (sy, sd, sz, n))| {
            (
                k,
                CellMean {
                    y: sy / n as f64,
                    d: sd / n as f64,
                    z: sz / n as f64,
                    n,
                },
            )
        })
        .collect()
}

/// Decompose the TWFEIV coefficient for a two-cohort layout.
///
/// The base period defaults to the early cohort's last pre-exposure period.
/// The instrument residuals come from the exact weighted two-group/period
/// least squares, so the identity `sum(contributions) = beta_iv_hat` holds to
/// float rounding.
pub fn decompose_twfeiv(
    table: &ObservationTable,
    cohorts: &CohortMap,
    base: Option<i64>,
    opts: &TwfeivOptions,
) -> Result<DecompositionReport> {
    let roster = cohorts.cohorts();
    if roster.len() != 2 {
        return Err(Error::UnsupportedLayout(format!(
            "decomposition requires exactly two cohorts, found {}",
            roster.len()
        )));
    }
    let early = roster[0];
    let comparison = roster[1];
    let Cohort::At(e_date) = early else {
        return Err(Error::UnsupportedLayout(
            "both cohorts are never exposed".into(),
        ));
    };
    if let Cohort::At(u_date) = comparison {
        if u_date <= e_date {
            return Err(Error::UnsupportedLayout(
                "comparison cohort must adopt strictly later".into(),
            ));
        }
    }
    let periods = table.periods().to_vec();
    if table.mode() == Mode::Panel {
        // The cell-level reduction needs a balanced panel.
        let t = periods.len();
        for u in 0..table.n_units() as u32 {
            if table.rows_of(u).len() != t {
                return Err(Error::UnsupportedLayout(format!(
                    "panel is unbalanced (unit `{}`)",
                    table.unit_name(u)
                )));
            }
        }
    }
    let base_period = base.unwrap_or(e_date - 1);
    if !periods.contains(&base_period) {
        return Err(Error::InvalidArgument(format!(
            "base period {base_period} is not observed"
        )));
    }
    if base_period >= e_date {
        return Err(Error::InvalidArgument(format!(
            "base period {base_period} must precede the early cohort's exposure ({e_date})"
        )));
    }

    let cells = collect_cells(table, cohorts, early);
    for &t in &periods {
        for g in [0u8, 1u8] {
            if !cells.contains_key(&(g, t)) {
                return Err(Error::EmptyCell {
                    group: if g == 0 { "early" } else { "comparison" }.into(),
                    period: t,
                });
            }
        }
    }

    // Exact residualization of z on group and period margins with cell
    // weights: for two groups the solution is in closed form through the
    // harmonic cell weights.
    let a: Vec<f64> = periods.iter().map(|t| cells[&(0, *t)].n as f64).collect();
    let b: Vec<f64> = periods.iter().map(|t| cells[&(1, *t)].n as f64).collect();
    let dz: Vec<f64> = periods
        .iter()
        .map(|t| cells[&(0, *t)].z - cells[&(1, *t)].z)
        .collect();
    let h: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(&ai, &bi)| ai * bi / (ai + bi))
        .collect();
    let h_sum = ksum(h.iter().copied());
    if h_sum <= 0.0 {
        return Err(Error::NoInstrumentVariation);
    }
    let alpha0 = ksum(h.iter().zip(&dz).map(|(&hi, &dzi)| hi * dzi)) / h_sum;
    // Residual for the early group at period t.
    let zres_early: Vec<f64> = (0..periods.len())
        .map(|i| b[i] / (a[i] + b[i]) * (dz[i] - alpha0))
        .collect();

    // Long-DID components against the base period.
    let yb0 = cells[&(0, base_period)].y;
    let yb1 = cells[&(1, base_period)].y;
    let db0 = cells[&(0, base_period)].d;
    let db1 = cells[&(1, base_period)].d;

    let mut rf = Vec::with_capacity(periods.len());
    let mut fs = Vec::with_capacity(periods.len());
    for (i, &t) in periods.iter().enumerate() {
        let _ = i;
        let c0 = &cells[&(0, t)];
        let c1 = &cells[&(1, t)];
        rf.push((c0.y - yb0) - (c1.y - yb1));
        fs.push((c0.d - db0) - (c1.d - db1));
    }

    let denom = ksum(
        periods
            .iter()
            .enumerate()
            .map(|(i, _)| a[i] * zres_early[i] * fs[i]),
    );
    if denom.abs() < opts.tau {
        return Err(Error::WeakFirstStage(denom.abs()));
    }
    let numer = ksum(
        periods
            .iter()
            .enumerate()
            .map(|(i, _)| a[i] * zres_early[i] * rf[i]),
    );
    let beta = numer / denom;

    let mut components = Vec::with_capacity(periods.len());
    let mut contrib_sum = 0.0;
    let mut weight_sum = 0.0;
    for (i, &t) in periods.iter().enumerate() {
        if t == base_period {
            continue;
        }
        let weight = a[i] * zres_early[i] * fs[i] / denom;
        let contribution = a[i] * zres_early[i] * rf[i] / denom;
        let weak = fs[i].abs() <= opts.tau;
        let kind = match comparison {
            Cohort::At(u_date) if t >= u_date => ComponentKind::Biased,
            _ => ComponentKind::Clean,
        };
        contrib_sum += contribution;
        weight_sum += weight;
        components.push(Component {
            period: t,
            kind,
            weight,
            wdid: rf[i] / fs[i],
            contribution,
            weak_first_stage: weak,
        });
    }

    Ok(DecompositionReport {
        beta_iv_hat: beta,
        base_period,
        early_cohort: e_date,
        comparison,
        components,
        weight_sum,
        identity_residual: contrib_sum - beta,
    })
}
