//! Shared test support: an independent two-stage least squares oracle and
//! dataset builders.
//!
//! The 2SLS oracle solves the exactly-identified IV normal equations
//! `(Z'X) b = Z'y` on the stacked within-cell dataset with explicit dummy
//! regressors. It never touches the mean-difference formulas used by the
//! estimators, so agreement between the two is a genuine dual-route check.

use didiv_core::data::{Cohort, CohortMap, Mode, ObservationTable};
use didiv_core::sts::CellSpec;
use nalgebra::{DMatrix, DVector};

/// IV coefficient on the treatment from the within-cell regression with
/// group and post dummies (instrument: group x post interaction).
pub fn cell_2sls_coefficient(
    table: &ObservationTable,
    cohorts: &CohortMap,
    spec: &CellSpec,
) -> Option<f64> {
    let mut xs: Vec<[f64; 4]> = Vec::new();
    let mut zs: Vec<[f64; 4]> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();

    let post = spec.period();
    for u in 0..table.n_units() as u32 {
        let e = cohorts.exposure_of(u);
        let g = if e == Cohort::At(spec.cohort) {
            1.0
        } else if spec.comparison.contains(&e) {
            0.0
        } else {
            continue;
        };
        match table.mode() {
            Mode::Panel => {
                let (a, b) = (table.row_at(u, spec.base), table.row_at(u, post));
                let (Some(a), Some(b)) = (a, b) else { continue };
                for r in [a, b] {
                    let p = (r.time == post) as u8 as f64;
                    xs.push([1.0, g, p, r.d]);
                    zs.push([1.0, g, p, g * p]);
                    ys.push(r.y);
                }
            }
            Mode::RepeatedCrossSection => {
                let rows = table.rows_of(u);
                let r = rows.first()?;
                if r.time != spec.base && r.time != post {
                    continue;
                }
                let p = (r.time == post) as u8 as f64;
                xs.push([1.0, g, p, r.d]);
                zs.push([1.0, g, p, g * p]);
                ys.push(r.y);
            }
        }
    }
    solve_iv(&xs, &zs, &ys, 3)
}

/// IV coefficient from the triple-interaction regression: seven dummy
/// regressors plus the treatment, instrumented by the triple interaction.
pub fn cell_2sls_triple_coefficient(
    table: &ObservationTable,
    cohorts: &CohortMap,
    spec: &CellSpec,
    stratum_a: &str,
) -> Option<f64> {
    let mut xs: Vec<[f64; 8]> = Vec::new();
    let mut zs: Vec<[f64; 8]> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let post = spec.period();
    for u in 0..table.n_units() as u32 {
        let e = cohorts.exposure_of(u);
        let g = if e == Cohort::At(spec.cohort) {
            1.0
        } else if spec.comparison.contains(&e) {
            0.0
        } else {
            continue;
        };
        let s = (table.stratum_of(u) == Some(stratum_a)) as u8 as f64;
        let mut push = |p: f64, d: f64, y: f64| {
            xs.push([1.0, g, p, s, g * p, g * s, p * s, d]);
            zs.push([1.0, g, p, s, g * p, g * s, p * s, g * p * s]);
            ys.push(y);
        };
        match table.mode() {
            Mode::Panel => {
                let (Some(a), Some(b)) = (table.row_at(u, spec.base), table.row_at(u, post))
                else {
                    continue;
                };
                for r in [a, b] {
                    push((r.time == post) as u8 as f64, r.d, r.y);
                }
            }
            Mode::RepeatedCrossSection => {
                let r = table.rows_of(u).first()?;
                if r.time != spec.base && r.time != post {
                    continue;
                }
                push((r.time == post) as u8 as f64, r.d, r.y);
            }
        }
    }
    solve_iv(&xs, &zs, &ys, 7)
}

fn solve_iv<const K: usize>(xs: &[[f64; K]], zs: &[[f64; K]], ys: &[f64], coef: usize) -> Option<f64> {
    let n = xs.len();
    if n < K {
        return None;
    }
    let x = DMatrix::from_fn(n, K, |i, j| xs[i][j]);
    let z = DMatrix::from_fn(n, K, |i, j| zs[i][j]);
    let y = DVector::from_column_slice(ys);
    let ztx = z.transpose() * &x;
    let zty = z.transpose() * &y;
    let beta = ztx.lu().solve(&zty)?;
    Some(beta[coef])
}
