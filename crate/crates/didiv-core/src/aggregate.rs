//! Aggregation of cell estimates into summary causal parameters.
//!
//! Each summary parameter is a weighted average of cohort-by-period effects,
//! with weights built from first-stage exposed effects (complier shares, for
//! a binary treatment) and cohort shares. All weight schemes normalize to
//! one. Standard errors compose each cell's effect influence function with
//! the influence functions of the estimated weights, derived by chaining the
//! ratio and product rules through the weight construction.
//!
//! Influence functions live on the full unit roster: a cell's in-cell terms
//! are rescaled by `n_total / n_cell` (group shares relative to the full
//! sample), which leaves single-cell aggregates exactly equal to the cell
//! estimate and its standard error.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{derive_cohorts, Cohort, CohortMap, ObservationTable, UnexposedRule};
use crate::error::{Error, Result};
use crate::numeric::{sample_sd, Z_975};
use crate::sts::{estimate_cells, BootstrapResult, CellEstimate, EstimateOptions};

/// Summary parameter selectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationKind {
    /// Effect at relative period `lead` across cohorts.
    EventStudy { lead: i64 },
    /// Effect at `lead` across the cohorts observed through `max_lead`.
    EventStudyBalanced { lead: i64, max_lead: i64 },
    /// Within-cohort average across post-exposure periods.
    Selective { cohort: i64 },
    /// Effect at calendar period `period` across exposed cohorts.
    Calendar { period: i64 },
    /// Average of calendar effects up to `period`.
    CalendarCumulative { period: i64 },
    /// Cohort-share weighted average over all cells.
    OverallWeighted,
    /// Cohort-share weighted average of the within-cohort averages.
    OverallSelective,
}

/// First-stage exposed effect for one cell (the complier share when the
/// treatment is binary), estimated by the cell's first-stage DID.
#[derive(Debug, Clone, Serialize)]
pub struct CaetEstimate {
    pub cohort: i64,
    pub period: i64,
    pub caet_hat: f64,
    /// Out of [-1, 1] for a binary treatment, or an already-flagged cell.
    pub flagged: bool,
    /// Index into the cell list; the weight influence terms reuse the cell's
    /// first-stage influence values.
    pub cell_index: usize,
}

/// Derive the first-stage estimates from estimated cells.
pub fn caet_estimates(cells: &[CellEstimate], binary: bool) -> Vec<CaetEstimate> {
    cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let v = c.pi_hat;
            CaetEstimate {
                cohort: c.spec.cohort,
                period: c.spec.period(),
                caet_hat: v,
                flagged: c.flag.is_some() || (binary && !(-1.0..=1.0).contains(&v)),
                cell_index: i,
            }
        })
        .collect()
}

/// One cell weight in an aggregation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeightEntry {
    pub cohort: i64,
    pub period: i64,
    pub weight: f64,
}

/// An aggregated summary estimate.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateEstimate {
    pub kind: AggregationKind,
    pub theta_hat: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub weights: Vec<WeightEntry>,
    pub weight_sum: f64,
    /// First-stage effects of mixed sign entered the weights; the aggregate
    /// is no longer a convex combination.
    pub mixed_sign_caet: bool,
    pub n_units: usize,
}

impl AggregateEstimate {
    pub fn summary_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "theta": self.theta_hat,
            "se": self.se,
            "ci": [self.ci95.0, self.ci95.1],
            "weights": self.weights.iter().map(|w| json!({
                "e": w.cohort, "t": w.period, "w": w.weight
            })).collect::<Vec<_>>(),
            "weight_sum": self.weight_sum,
            "mixed_sign_caet": self.mixed_sign_caet,
            "n": self.n_units,
        })
    }
}

/// Cohort counts over the estimated (finite) cohorts.
fn cohort_counts(cohorts: &CohortMap) -> BTreeMap<i64, usize> {
    let mut out = BTreeMap::new();
    for c in cohorts.exposures() {
        if let Cohort::At(e) = c {
            *out.entry(*e).or_insert(0) += 1;
        }
    }
    out
}

struct CaetView<'a> {
    by_cell: BTreeMap<(i64, i64), &'a CaetEstimate>,
}

impl<'a> CaetView<'a> {
    fn new(caets: &'a [CaetEstimate]) -> Self {
        Self {
            by_cell: caets.iter().map(|c| ((c.cohort, c.period), c)).collect(),
        }
    }

    fn get(&self, cohort: i64, period: i64, include_flagged: bool) -> Result<&'a CaetEstimate> {
        match self.by_cell.get(&(cohort, period)) {
            Some(c) if include_flagged || !c.flagged => Ok(c),
            _ => Err(Error::MissingCell { cohort, period }),
        }
    }

    fn has(&self, cohort: i64, period: i64, include_flagged: bool) -> bool {
        self.get(cohort, period, include_flagged).is_ok()
    }
}

/// One normalization block: member cells with their cohort-share factors,
/// the eligibility set behind those shares, and a fixed outer scale.
struct Block {
    /// (cell index, share factor K).
    members: Vec<(usize, f64)>,
    /// Eligible cohorts for the share conditioning (empty = no share factor
    /// in the numerators).
    elig: BTreeSet<i64>,
    /// Whether the member numerators include the first-stage effect.
    uses_caet: bool,
    /// Scale applied to the block's normalized weights.
    scale: f64,
}

fn share_of(counts: &BTreeMap<i64, usize>, elig: &BTreeSet<i64>, cohort: i64) -> f64 {
    let n_elig: usize = elig.iter().map(|e| counts.get(e).copied().unwrap_or(0)).sum();
    counts.get(&cohort).copied().unwrap_or(0) as f64 / n_elig as f64
}

/// Enumerate the normalization blocks of a kind. Errors when a cell required
/// by the weight formula is missing or flagged.
fn build_blocks(
    kind: AggregationKind,
    cells: &[CellEstimate],
    caets: &[CaetEstimate],
    counts: &BTreeMap<i64, usize>,
    include_flagged: bool,
) -> Result<Vec<Block>> {
    let view = CaetView::new(caets);
    let estimated: BTreeSet<i64> = cells.iter().map(|c| c.spec.cohort).collect();
    let max_period = cells.iter().map(|c| c.spec.period()).max().unwrap_or(i64::MIN);

    let single_period_block = |target: i64, elig_rule: &dyn Fn(i64) -> bool| -> Result<Block> {
        let elig: BTreeSet<i64> = estimated.iter().copied().filter(|&e| elig_rule(e)).collect();
        if elig.is_empty() {
            return Err(Error::NoEstimableCells);
        }
        let mut members = Vec::new();
        for &e in &elig {
            let caet = view.get(e, target, include_flagged)?;
            members.push((caet.cell_index, share_of(counts, &elig, e)));
        }
        Ok(Block {
            members,
            elig,
            uses_caet: true,
            scale: 1.0,
        })
    };

    match kind {
        AggregationKind::EventStudy { lead } => {
            if lead < 0 {
                return Err(Error::InvalidArgument("lead must be >= 0".into()));
            }
            let elig: BTreeSet<i64> = estimated
                .iter()
                .copied()
                .filter(|&e| e + lead <= max_period)
                .collect();
            if elig.is_empty() {
                return Err(Error::NoEstimableCells);
            }
            let mut members = Vec::new();
            for &e in &elig {
                let caet = view.get(e, e + lead, include_flagged)?;
                members.push((caet.cell_index, share_of(counts, &elig, e)));
            }
            Ok(vec![Block {
                members,
                elig,
                uses_caet: true,
                scale: 1.0,
            }])
        }
        AggregationKind::EventStudyBalanced { lead, max_lead } => {
            if lead < 0 || max_lead < lead {
                return Err(Error::InvalidArgument("need 0 <= lead <= max_lead".into()));
            }
            // Balanced set: cohorts whose cells extend through max_lead.
            let elig: BTreeSet<i64> = estimated
                .iter()
                .copied()
                .filter(|&e| view.has(e, e + max_lead, include_flagged))
                .collect();
            if elig.is_empty() {
                return Err(Error::NoEstimableCells);
            }
            let mut members = Vec::new();
            for &e in &elig {
                let caet = view.get(e, e + lead, include_flagged)?;
                members.push((caet.cell_index, share_of(counts, &elig, e)));
            }
            Ok(vec![Block {
                members,
                elig,
                uses_caet: true,
                scale: 1.0,
            }])
        }
        AggregationKind::Selective { cohort } => {
            let mut members = Vec::new();
            for c in caets.iter().filter(|c| c.cohort == cohort) {
                if !include_flagged && c.flagged {
                    return Err(Error::MissingCell {
                        cohort: c.cohort,
                        period: c.period,
                    });
                }
                members.push((c.cell_index, 1.0));
            }
            if members.is_empty() {
                return Err(Error::NoEstimableCells);
            }
            Ok(vec![Block {
                members,
                elig: BTreeSet::new(),
                uses_caet: true,
                scale: 1.0,
            }])
        }
        AggregationKind::Calendar { period } => {
            Ok(vec![single_period_block(period, &|e| e <= period)?])
        }
        AggregationKind::CalendarCumulative { period } => {
            let periods: BTreeSet<i64> = cells
                .iter()
                .filter(|c| c.spec.period() <= period)
                .map(|c| c.spec.period())
                .collect();
            let mut blocks = Vec::new();
            for &t in &periods {
                blocks.push(single_period_block(t, &|e| e <= t)?);
            }
            if blocks.is_empty() {
                return Err(Error::NoEstimableCells);
            }
            let scale = 1.0 / blocks.len() as f64;
            for b in &mut blocks {
                b.scale = scale;
            }
            Ok(blocks)
        }
        AggregationKind::OverallWeighted => {
            let elig = estimated.clone();
            let mut members = Vec::new();
            for c in caets {
                if !include_flagged && c.flagged {
                    return Err(Error::MissingCell {
                        cohort: c.cohort,
                        period: c.period,
                    });
                }
                members.push((c.cell_index, share_of(counts, &elig, c.cohort)));
            }
            if members.is_empty() {
                return Err(Error::NoEstimableCells);
            }
            Ok(vec![Block {
                members,
                elig,
                uses_caet: false,
                scale: 1.0,
            }])
        }
        AggregationKind::OverallSelective => {
            // One block per cohort scaled by its share; each block is the
            // within-cohort first-stage-weighted average.
            let elig = estimated.clone();
            let mut blocks = Vec::new();
            for &e in &estimated {
                let mut members = Vec::new();
                for c in caets.iter().filter(|c| c.cohort == e) {
                    if !include_flagged && c.flagged {
                        return Err(Error::MissingCell {
                            cohort: c.cohort,
                            period: c.period,
                        });
                    }
                    members.push((c.cell_index, 1.0));
                }
                if members.is_empty() {
                    continue;
                }
                blocks.push(Block {
                    members,
                    elig: elig.clone(),
                    uses_caet: true,
                    scale: share_of(counts, &elig, e),
                });
            }
            if blocks.is_empty() {
                return Err(Error::NoEstimableCells);
            }
            Ok(blocks)
        }
    }
}

/// Sample-analog weights: cohort-share times first-stage effect, normalized
/// within each block.
pub fn compute_weights(
    kind: AggregationKind,
    cells: &[CellEstimate],
    caets: &[CaetEstimate],
    cohorts: &CohortMap,
    include_flagged: bool,
) -> Result<Vec<WeightEntry>> {
    let counts = cohort_counts(cohorts);
    let blocks = build_blocks(kind, cells, caets, &counts, include_flagged)?;
    let mut out: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for block in &blocks {
        let numerators: Vec<f64> = block
            .members
            .iter()
            .map(|&(ci, k)| if block.uses_caet { k * cells[ci].pi_hat } else { k })
            .collect();
        let total: f64 = numerators.iter().sum();
        if total == 0.0 {
            return Err(Error::ZeroWeightMass);
        }
        for (&(ci, _), num) in block.members.iter().zip(&numerators) {
            let cell = &cells[ci];
            *out.entry((cell.spec.cohort, cell.spec.period())).or_insert(0.0) +=
                block.scale * num / total;
        }
    }
    Ok(out
        .into_iter()
        .map(|((cohort, period), weight)| WeightEntry {
            cohort,
            period,
            weight,
        })
        .collect())
}

/// Aggregate cell estimates into the summary parameter, with the composed
/// influence-function standard error.
pub fn aggregate(
    kind: AggregationKind,
    cells: &[CellEstimate],
    caets: &[CaetEstimate],
    cohorts: &CohortMap,
    include_flagged: bool,
) -> Result<AggregateEstimate> {
    let counts = cohort_counts(cohorts);
    let n_total = cohorts.n_units();
    let blocks = build_blocks(kind, cells, caets, &counts, include_flagged)?;

    let mut weight_map: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut theta = 0.0;
    let mut acc = vec![0.0f64; n_total];
    let mut mixed_sign = false;

    for block in &blocks {
        let numerators: Vec<f64> = block
            .members
            .iter()
            .map(|&(ci, k)| if block.uses_caet { k * cells[ci].pi_hat } else { k })
            .collect();
        let total: f64 = numerators.iter().sum();
        if total == 0.0 {
            return Err(Error::ZeroWeightMass);
        }
        if block.uses_caet {
            let pos = block.members.iter().any(|&(ci, _)| cells[ci].pi_hat > 0.0);
            let neg = block.members.iter().any(|&(ci, _)| cells[ci].pi_hat < 0.0);
            mixed_sign |= pos && neg;
        }

        let block_thetas: Vec<f64> = block
            .members
            .iter()
            .map(|&(ci, _)| cells[ci].clatt_hat)
            .collect();
        let w_in: Vec<f64> = numerators.iter().map(|n| n / total).collect();
        let block_theta: f64 = w_in.iter().zip(&block_thetas).map(|(w, t)| w * t).sum();
        theta += block.scale * block_theta;
        for (&(ci, _), w) in block.members.iter().zip(&w_in) {
            let cell = &cells[ci];
            *weight_map
                .entry((cell.spec.cohort, cell.spec.period()))
                .or_insert(0.0) += block.scale * w;
        }

        // Influence terms. Within a block,
        //   l_i += scale * sum_c [ w_c psi_{c,i} + zeta^w_{c,i} theta_c ],
        // and the weight terms collapse to
        //   sum_c (theta_c - theta_block) * IF(N_c)_i / total,
        // where N_c = K_c * pi_c (or K_c alone) and
        //   IF(N_c) = K_c * b_{c,i} + pi_c * shareIF_{e(c),i}.
        let mut share_coef: BTreeMap<i64, f64> = BTreeMap::new();
        for ((&(ci, k), w), th) in block.members.iter().zip(&w_in).zip(&block_thetas) {
            let cell = &cells[ci];
            let rescale = n_total as f64 / cell.n_cell as f64;
            let dev = (th - block_theta) / total;
            let b_coef = if block.uses_caet { dev * k } else { 0.0 };
            for (j, &u) in cell.if_units.iter().enumerate() {
                let idx = u as usize;
                acc[idx] += block.scale * rescale * (w * cell.if_psi[j] + b_coef * cell.if_pi[j]);
            }
            if !block.elig.is_empty() {
                let pi_or_one = if block.uses_caet { cell.pi_hat } else { 1.0 };
                *share_coef.entry(cell.spec.cohort).or_insert(0.0) += dev * pi_or_one;
            }
        }
        if !share_coef.is_empty() {
            // shareIF_e(i) = (1{E_i = e} - P_e * 1{E_i in elig}) / P(elig).
            let n_elig: usize = block
                .elig
                .iter()
                .map(|e| counts.get(e).copied().unwrap_or(0))
                .sum();
            let p_elig = n_elig as f64 / n_total as f64;
            let weighted_sum: f64 = share_coef
                .iter()
                .map(|(e, coef)| coef * share_of(&counts, &block.elig, *e))
                .sum();
            for (u, acc_u) in acc.iter_mut().enumerate() {
                let e = cohorts.exposure_of(u as u32);
                let (own, in_elig) = match e {
                    Cohort::At(date) => (
                        share_coef.get(&date).copied().unwrap_or(0.0),
                        block.elig.contains(&date),
                    ),
                    Cohort::Never => (0.0, false),
                };
                let term = (own - if in_elig { weighted_sum } else { 0.0 }) / p_elig;
                *acc_u += block.scale * term;
            }
        }
    }

    let ss: f64 = acc.iter().map(|v| v * v).sum();
    let se = ss.sqrt() / n_total as f64;
    let weights: Vec<WeightEntry> = weight_map
        .into_iter()
        .map(|((cohort, period), weight)| WeightEntry {
            cohort,
            period,
            weight,
        })
        .collect();
    let weight_sum: f64 = weights.iter().map(|w| w.weight).sum();
    Ok(AggregateEstimate {
        kind,
        theta_hat: theta,
        se,
        ci95: (theta - Z_975 * se, theta + Z_975 * se),
        weights,
        weight_sum,
        mixed_sign_caet: mixed_sign,
        n_units: n_total,
    })
}

/// Bootstrap the full pipeline (resample units, rebuild cohorts and cells,
/// re-aggregate) as a cross-check of the composed influence-function SE.
pub fn pipeline_bootstrap_se(
    table: &ObservationTable,
    rule: UnexposedRule,
    kind: AggregationKind,
    opts: &EstimateOptions,
    reps: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if reps < 100 {
        return Err(Error::BootstrapReps {
            min: 100,
            got: reps,
        });
    }
    let binary = table.arity() == 1;
    let n = table.n_units() as u32;
    let cap = reps.saturating_mul(10);
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
                    let cohorts = derive_cohorts(&resampled, rule.clone())?;
                    let cells = estimate_cells(&resampled, &cohorts, opts)?;
                    let caets = caet_estimates(&cells, binary);
                    let agg = aggregate(kind, &cells, &caets, &cohorts, false)?;
                    Ok(agg.theta_hat)
                })();
                match attempt {
                    Ok(t) if t.is_finite() => return Ok((t, redraws)),
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
    let mut thetas = Vec::with_capacity(reps);
    let mut redraws = 0usize;
    for r in results {
        match r {
            Ok((t, rd)) => {
                thetas.push(t);
                redraws += rd;
            }
            Err(()) => return Err(Error::DegenerateResample { cap }),
        }
    }
    Ok(BootstrapResult {
        se: sample_sd(&thetas),
        reps,
        redraws,
    })
}
