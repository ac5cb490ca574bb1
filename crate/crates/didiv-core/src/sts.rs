//! Stacked two-stage least squares for staggered instrument adoption.
//!
//! For each cohort `e` and relative period `l`, the estimator compares the
//! long difference between the base period `e-1` and `e+l` in cohort `e`
//! against the same difference in a not-yet-exposed comparison set `U`; the
//! outcome contrast over the treatment contrast is the cohort effect
//! `clatt_hat`. The division of labour with `wald` is deliberate: this module
//! owns cells, influence functions, and inference.
//!
//! Influence functions are the plug-in versions of the per-cell linear
//! expansions: every population quantity (the effect `theta`, group shares,
//! conditional means) is replaced by its in-cell sample analog, so the stored
//! per-unit values are exactly mean-zero within the cell.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{Cohort, CohortMap, Mode, ObservationTable};
use crate::error::{Error, Result};
use crate::influence::ratio_if_term;
use crate::moments::{panel_diffs, rcs_cell};
use crate::numeric::{sample_sd, Z_975};
use crate::wald::StratumSplit;

/// Estimation tuning: the weak-denominator threshold and the minimum group
/// size below which a cell is flagged.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub tau: f64,
    pub min_cell_per_group: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            tau: crate::DEFAULT_TAU,
            min_cell_per_group: 2,
        }
    }
}

/// One estimation cell: cohort, relative period, base period, and the
/// comparison cohorts that are still unexposed at the cell's outcome period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellSpec {
    pub cohort: i64,
    pub rel: i64,
    pub base: i64,
    pub comparison: Vec<Cohort>,
}

impl CellSpec {
    /// Outcome period `e + l`.
    pub fn period(&self) -> i64 {
        self.cohort + self.rel
    }
}

/// Why a cell is flagged (estimation still reports its numbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    WeakDenominator,
    TooSmallCell,
}

/// A cohort-by-relative-period estimate with influence-function inference.
#[derive(Debug, Clone)]
pub struct CellEstimate {
    pub spec: CellSpec,
    pub alpha_hat: f64,
    pub pi_hat: f64,
    pub clatt_hat: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub n_exposed: usize,
    pub n_control: usize,
    /// Panel units missing one of the two periods, dropped from this cell.
    pub n_dropped: usize,
    /// Total in-cell sample size used for the influence functions.
    pub n_cell: usize,
    pub flag: Option<CellFlag>,
    /// Unit indices (into the table roster) with nonzero influence terms.
    pub if_units: Vec<u32>,
    /// Effect influence terms (in-cell scaling), aligned with `if_units`.
    pub if_psi: Vec<f64>,
    /// Reduced-form (outcome DID) influence terms.
    pub if_alpha: Vec<f64>,
    /// First-stage (treatment DID) influence terms.
    pub if_pi: Vec<f64>,
}

impl CellEstimate {
    fn nullable(v: f64) -> Value {
        if v.is_finite() {
            json!(v)
        } else {
            Value::Null
        }
    }

    /// The wire representation of one cell result.
    pub fn summary_json(&self) -> Value {
        json!({
            "e": self.spec.cohort,
            "l": self.spec.rel,
            "alpha": Self::nullable(self.alpha_hat),
            "pi": Self::nullable(self.pi_hat),
            "clatt": Self::nullable(self.clatt_hat),
            "se": Self::nullable(self.se),
            "ci": [Self::nullable(self.ci95.0), Self::nullable(self.ci95.1)],
            "n": self.n_cell,
            "n_exposed": self.n_exposed,
            "n_control": self.n_control,
            "n_dropped": self.n_dropped,
            "flag": self.flag,
        })
    }
}

/// Enumerate the estimable cells for the cohort assignment.
///
/// A cohort is estimable when it is finite, outside the comparison set, and
/// its base period `e-1` is observed. Under the last-cohort rule, cells are
/// truncated to periods before the comparison cohort's own exposure; under an
/// explicit rule, each cell keeps only the comparison cohorts still unexposed
/// at its outcome period.
pub fn build_cells(table: &ObservationTable, cohorts: &CohortMap) -> Result<Vec<CellSpec>> {
    let periods = table.periods();
    let max_period = table.max_period();
    let unexposed = cohorts.unexposed_set();
    let last_cap: Option<i64> = match cohorts.rule() {
        crate::data::UnexposedRule::LastCohort => {
            cohorts.cohorts().iter().filter_map(Cohort::date).max()
        }
        _ => None,
    };

    let mut cells = Vec::new();
    for e in cohorts.estimated_cohorts(table.min_period()) {
        if !periods.contains(&(e - 1)) {
            continue;
        }
        for &t in periods.iter().filter(|&&t| t >= e) {
            if t > max_period {
                break;
            }
            if let Some(cap) = last_cap {
                if t > cap - 1 {
                    continue;
                }
            }
            let comparison: Vec<Cohort> = unexposed
                .iter()
                .copied()
                .filter(|c| match c {
                    Cohort::Never => true,
                    Cohort::At(u) => *u > t,
                })
                .collect();
            if comparison.is_empty() {
                continue;
            }
            cells.push(CellSpec {
                cohort: e,
                rel: t - e,
                base: e - 1,
                comparison,
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::NoEstimableCells);
    }
    Ok(cells)
}

fn units_in(table: &ObservationTable, cohorts: &CohortMap, pred: impl Fn(Cohort) -> bool) -> Vec<u32> {
    (0..table.n_units() as u32)
        .filter(|&u| pred(cohorts.exposure_of(u)))
        .collect()
}

fn flag_for(pi: f64, sizes: &[usize], opts: &EstimateOptions) -> Option<CellFlag> {
    if !pi.is_finite() || pi.abs() <= opts.tau {
        Some(CellFlag::WeakDenominator)
    } else if sizes.iter().any(|&n| n < opts.min_cell_per_group) {
        Some(CellFlag::TooSmallCell)
    } else {
        None
    }
}

/// Signed demeaned group contributions shared by all the cell estimators:
/// each group contributes `sign * (value - group mean) / group share`.
struct IfBuilder {
    units: Vec<u32>,
    if_alpha: Vec<f64>,
    if_pi: Vec<f64>,
    n_cell: usize,
}

impl IfBuilder {
    fn new(n_cell: usize) -> Self {
        Self {
            units: Vec::new(),
            if_alpha: Vec::new(),
            if_pi: Vec::new(),
            n_cell,
        }
    }

    fn push_group(
        &mut self,
        units: &[u32],
        y: &[f64],
        d: &[f64],
        mean_y: f64,
        mean_d: f64,
        sign: f64,
    ) {
        let share = units.len() as f64 / self.n_cell as f64;
        for (i, &u) in units.iter().enumerate() {
            self.units.push(u);
            self.if_alpha.push(sign * (y[i] - mean_y) / share);
            self.if_pi.push(sign * (d[i] - mean_d) / share);
        }
    }

    fn finish(self, spec: CellSpec, alpha: f64, pi: f64, counts: (usize, usize, usize), flag: Option<CellFlag>) -> CellEstimate {
        let theta = alpha / pi;
        let if_psi: Vec<f64> = self
            .if_alpha
            .iter()
            .zip(&self.if_pi)
            .map(|(&a, &b)| ratio_if_term(theta, pi, a, b))
            .collect();
        let n = self.n_cell as f64;
        let ss: f64 = if_psi.iter().map(|p| p * p).sum();
        let se = ss.sqrt() / n;
        CellEstimate {
            spec,
            alpha_hat: alpha,
            pi_hat: pi,
            clatt_hat: theta,
            se,
            ci95: (theta - Z_975 * se, theta + Z_975 * se),
            n_exposed: counts.0,
            n_control: counts.1,
            n_dropped: counts.2,
            n_cell: self.n_cell,
            flag,
            if_units: self.units,
            if_psi,
            if_alpha: self.if_alpha,
            if_pi: self.if_pi,
        }
    }
}

/// Panel cell estimate: difference of group-mean long differences, with the
/// two-group influence function.
pub fn estimate_cell_panel(
    table: &ObservationTable,
    cohorts: &CohortMap,
    spec: &CellSpec,
    opts: &EstimateOptions,
) -> Result<CellEstimate> {
    if table.mode() != Mode::Panel {
        return Err(Error::InvalidArgument(
            "estimate_cell_panel requires panel mode".into(),
        ));
    }
    let exposed_units = units_in(table, cohorts, |c| c == Cohort::At(spec.cohort));
    let control_units = units_in(table, cohorts, |c| spec.comparison.contains(&c));
    let exp = panel_diffs(table, exposed_units, spec.base, spec.period());
    let ctl = panel_diffs(table, control_units, spec.base, spec.period());
    if exp.n() == 0 {
        return Err(Error::EmptyGroup {
            group: format!("cohort {}", spec.cohort),
            at: Some(spec.period()),
        });
    }
    if ctl.n() == 0 {
        return Err(Error::EmptyGroup {
            group: "comparison".into(),
            at: Some(spec.period()),
        });
    }
    let alpha = exp.mean_dy - ctl.mean_dy;
    let pi = exp.mean_dd - ctl.mean_dd;
    let flag = flag_for(pi, &[exp.n(), ctl.n()], opts);

    let mut ifb = IfBuilder::new(exp.n() + ctl.n());
    ifb.push_group(&exp.units, &exp.dy, &exp.dd, exp.mean_dy, exp.mean_dd, 1.0);
    ifb.push_group(&ctl.units, &ctl.dy, &ctl.dd, ctl.mean_dy, ctl.mean_dd, -1.0);
    Ok(ifb.finish(
        spec.clone(),
        alpha,
        pi,
        (exp.n(), ctl.n(), exp.n_dropped + ctl.n_dropped),
        flag,
    ))
}

/// Repeated-cross-section cell estimate from the four group-by-period cells,
/// with the four-term influence function.
pub fn estimate_cell_rcs(
    table: &ObservationTable,
    cohorts: &CohortMap,
    spec: &CellSpec,
    opts: &EstimateOptions,
) -> Result<CellEstimate> {
    if table.mode() != Mode::RepeatedCrossSection {
        return Err(Error::InvalidArgument(
            "estimate_cell_rcs requires rcs mode".into(),
        ));
    }
    let exposed_units = units_in(table, cohorts, |c| c == Cohort::At(spec.cohort));
    let control_units = units_in(table, cohorts, |c| spec.comparison.contains(&c));

    // (group units, period, sign, label)
    let post = spec.period();
    let layout: [(&[u32], i64, f64, &str); 4] = [
        (&exposed_units, post, 1.0, "exposed"),
        (&exposed_units, spec.base, -1.0, "exposed"),
        (&control_units, post, -1.0, "comparison"),
        (&control_units, spec.base, 1.0, "comparison"),
    ];
    let mut stats = Vec::with_capacity(4);
    for (units, t, _, label) in layout {
        let s = rcs_cell(table, units.iter().copied(), t);
        if s.n() == 0 {
            return Err(Error::EmptyCell {
                group: label.into(),
                period: t,
            });
        }
        stats.push(s);
    }
    let alpha = (stats[0].mean_y - stats[1].mean_y) - (stats[2].mean_y - stats[3].mean_y);
    let pi = (stats[0].mean_d - stats[1].mean_d) - (stats[2].mean_d - stats[3].mean_d);
    let sizes: Vec<usize> = stats.iter().map(|s| s.n()).collect();
    let flag = flag_for(pi, &sizes, opts);

    let n_cell: usize = sizes.iter().sum();
    let mut ifb = IfBuilder::new(n_cell);
    for (k, (_, _, sign, _)) in layout.iter().enumerate() {
        let s = &stats[k];
        ifb.push_group(&s.units, &s.y, &s.d, s.mean_y, s.mean_d, *sign);
    }
    let n_exposed = sizes[0] + sizes[1];
    let n_control = sizes[2] + sizes[3];
    Ok(ifb.finish(spec.clone(), alpha, pi, (n_exposed, n_control, 0), flag))
}

/// Triple-difference cell estimate: the stratum-A contrast minus the
/// stratum-B contrast, with the per-(group, stratum) influence function
/// (four terms for panel data, eight for repeated cross sections).
pub fn estimate_cell_triple(
    table: &ObservationTable,
    cohorts: &CohortMap,
    spec: &CellSpec,
    split: &StratumSplit,
    opts: &EstimateOptions,
) -> Result<CellEstimate> {
    let exposed_units = units_in(table, cohorts, |c| c == Cohort::At(spec.cohort));
    let control_units = units_in(table, cohorts, |c| spec.comparison.contains(&c));
    let filter = |units: &[u32], label: &str| -> Vec<u32> {
        units
            .iter()
            .copied()
            .filter(|&u| table.stratum_of(u) == Some(label))
            .collect()
    };
    let groups: [(&str, Vec<u32>, f64); 4] = [
        ("exposed/a", filter(&exposed_units, &split.a), 1.0),
        ("exposed/b", filter(&exposed_units, &split.b), -1.0),
        ("comparison/a", filter(&control_units, &split.a), -1.0),
        ("comparison/b", filter(&control_units, &split.b), 1.0),
    ];
    let post = spec.period();

    match table.mode() {
        Mode::Panel => {
            let mut alpha = 0.0;
            let mut pi = 0.0;
            let mut sizes = Vec::new();
            let mut dropped = 0usize;
            let mut parts = Vec::new();
            for (label, units, sign) in &groups {
                let s = panel_diffs(table, units.iter().copied(), spec.base, post);
                if s.n() == 0 {
                    return Err(Error::EmptyCell {
                        group: (*label).into(),
                        period: post,
                    });
                }
                alpha += sign * s.mean_dy;
                pi += sign * s.mean_dd;
                sizes.push(s.n());
                dropped += s.n_dropped;
                parts.push((s, *sign));
            }
            let flag = flag_for(pi, &sizes, opts);
            let n_cell: usize = sizes.iter().sum();
            let mut ifb = IfBuilder::new(n_cell);
            for (s, sign) in &parts {
                ifb.push_group(&s.units, &s.dy, &s.dd, s.mean_dy, s.mean_dd, *sign);
            }
            let n_exposed = sizes[0] + sizes[1];
            let n_control = sizes[2] + sizes[3];
            Ok(ifb.finish(spec.clone(), alpha, pi, (n_exposed, n_control, dropped), flag))
        }
        Mode::RepeatedCrossSection => {
            let mut alpha = 0.0;
            let mut pi = 0.0;
            let mut sizes = Vec::new();
            let mut parts = Vec::new();
            for (label, units, gsign) in &groups {
                for (t, tsign) in [(post, 1.0), (spec.base, -1.0)] {
                    let s = rcs_cell(table, units.iter().copied(), t);
                    if s.n() == 0 {
                        return Err(Error::EmptyCell {
                            group: (*label).into(),
                            period: t,
                        });
                    }
                    let sign = gsign * tsign;
                    alpha += sign * s.mean_y;
                    pi += sign * s.mean_d;
                    sizes.push(s.n());
                    parts.push((s, sign));
                }
            }
            let flag = flag_for(pi, &sizes, opts);
            let n_cell: usize = sizes.iter().sum();
            let mut ifb = IfBuilder::new(n_cell);
            for (s, sign) in &parts {
                ifb.push_group(&s.units, &s.y, &s.d, s.mean_y, s.mean_d, *sign);
            }
            let n_exposed = sizes[..4].iter().sum();
            let n_control = sizes[4..].iter().sum();
            Ok(ifb.finish(spec.clone(), alpha, pi, (n_exposed, n_control, 0), flag))
        }
    }
}

/// Build and estimate every cell, in parallel, in (cohort, rel) order.
pub fn estimate_cells(
    table: &ObservationTable,
    cohorts: &CohortMap,
    opts: &EstimateOptions,
) -> Result<Vec<CellEstimate>> {
    let specs = build_cells(table, cohorts)?;
    specs
        .par_iter()
        .map(|spec| match table.mode() {
            Mode::Panel => estimate_cell_panel(table, cohorts, spec, opts),
            Mode::RepeatedCrossSection => estimate_cell_rcs(table, cohorts, spec, opts),
        })
        .collect()
}

/// Bootstrap standard error of one cell's effect estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BootstrapResult {
    pub se: f64,
    pub reps: usize,
    /// Degenerate resamples that were redrawn.
    pub redraws: usize,
}

/// Nonparametric bootstrap of `clatt_hat`: unit resampling in panel mode,
/// observation resampling in RCS mode. Deterministic given the seed; a
/// resample that empties a group or kills the first stage is redrawn,
/// counted, and capped.
pub fn bootstrap_cell_se(
    table: &ObservationTable,
    cohorts: &CohortMap,
    spec: &CellSpec,
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
    // Pool the cell's effective observations: (group id, y-part, d-part).
    // Panel groups: 0 = exposed, 1 = control (long differences).
    // RCS groups: the four (or estimator-defined) signed cells.
    struct Pool {
        group: Vec<u8>,
        y: Vec<f64>,
        d: Vec<f64>,
        signs: Vec<f64>,
        n_groups: usize,
    }
    let pool = match table.mode() {
        Mode::Panel => {
            let exposed = units_in(table, cohorts, |c| c == Cohort::At(spec.cohort));
            let control = units_in(table, cohorts, |c| spec.comparison.contains(&c));
            let e = panel_diffs(table, exposed, spec.base, spec.period());
            let c = panel_diffs(table, control, spec.base, spec.period());
            if e.n() == 0 || c.n() == 0 {
                return Err(Error::EmptyGroup {
                    group: "bootstrap pool".into(),
                    at: Some(spec.period()),
                });
            }
            let mut pool = Pool {
                group: Vec::new(),
                y: Vec::new(),
                d: Vec::new(),
                signs: vec![1.0, -1.0],
                n_groups: 2,
            };
            for (g, s) in [(0u8, &e), (1u8, &c)] {
                for i in 0..s.n() {
                    pool.group.push(g);
                    pool.y.push(s.dy[i]);
                    pool.d.push(s.dd[i]);
                }
            }
            pool
        }
        Mode::RepeatedCrossSection => {
            let exposed = units_in(table, cohorts, |c| c == Cohort::At(spec.cohort));
            let control = units_in(table, cohorts, |c| spec.comparison.contains(&c));
            let post = spec.period();
            let cells = [
                (rcs_cell(table, exposed.iter().copied(), post), 1.0),
                (rcs_cell(table, exposed.iter().copied(), spec.base), -1.0),
                (rcs_cell(table, control.iter().copied(), post), -1.0),
                (rcs_cell(table, control.iter().copied(), spec.base), 1.0),
            ];
            if cells.iter().any(|(s, _)| s.n() == 0) {
                return Err(Error::EmptyGroup {
                    group: "bootstrap pool".into(),
                    at: Some(post),
                });
            }
            let mut pool = Pool {
                group: Vec::new(),
                y: Vec::new(),
                d: Vec::new(),
                signs: cells.iter().map(|(_, s)| *s).collect(),
                n_groups: 4,
            };
            for (g, (s, _)) in cells.iter().enumerate() {
                for i in 0..s.n() {
                    pool.group.push(g as u8);
                    pool.y.push(s.y[i]);
                    pool.d.push(s.d[i]);
                }
            }
            pool
        }
    };

    let n = pool.group.len();
    let cap = reps.saturating_mul(10);
    let results: Vec<std::result::Result<(f64, usize), ()>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let mut redraws = 0usize;
            loop {
                let mut sums_y = vec![0.0f64; pool.n_groups];
                let mut sums_d = vec![0.0f64; pool.n_groups];
                let mut counts = vec![0usize; pool.n_groups];
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    let g = pool.group[i] as usize;
                    sums_y[g] += pool.y[i];
                    sums_d[g] += pool.d[i];
                    counts[g] += 1;
                }
                if counts.iter().any(|&c| c == 0) {
                    redraws += 1;
                    if redraws > cap {
                        return Err(());
                    }
                    continue;
                }
                let mut alpha = 0.0;
                let mut pi = 0.0;
                for g in 0..pool.n_groups {
                    alpha += pool.signs[g] * sums_y[g] / counts[g] as f64;
                    pi += pool.signs[g] * sums_d[g] / counts[g] as f64;
                }
                if pi.abs() <= opts.tau {
                    redraws += 1;
                    if redraws > cap {
                        return Err(());
                    }
                    continue;
                }
                return Ok((alpha / pi, redraws));
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
