//! The 2x2 building block: Wald-DID point estimation.
//!
//! The Wald-DID estimand scales the difference-in-differences contrast of the
//! outcome between an exposed and an unexposed group by the corresponding
//! contrast of the treatment. Panel data use per-unit long differences;
//! repeated cross sections use the four group-by-period cell means. The
//! triple layout differences out a second (demographic) dimension.
//!
//! Standard errors are intentionally absent at this layer; inference lives in
//! the stacked estimator's influence functions.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::data::{Cohort, Mode, ObservationTable};
use crate::error::{Error, Result};
use crate::moments::{panel_diffs, rcs_cell};

/// Selects the units forming one side of the comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupSelector {
    /// Units whose initial exposure date equals the given cohort.
    Cohort(Cohort),
    /// Units belonging to any of the given cohorts.
    Cohorts(BTreeSet<Cohort>),
    /// An explicit list of unit ids.
    Units(BTreeSet<String>),
}

impl GroupSelector {
    pub fn never() -> Self {
        GroupSelector::Cohort(Cohort::Never)
    }

    /// Resolve to ascending unit indices.
    pub fn resolve(&self, table: &ObservationTable) -> Vec<u32> {
        let n = table.n_units() as u32;
        match self {
            GroupSelector::Cohort(c) => (0..n).filter(|&u| table.exposure_of(u) == *c).collect(),
            GroupSelector::Cohorts(set) => (0..n)
                .filter(|&u| set.contains(&table.exposure_of(u)))
                .collect(),
            GroupSelector::Units(names) => (0..n)
                .filter(|&u| names.contains(table.unit_name(u)))
                .collect(),
        }
    }
}

/// Splits units into the two demographic strata of a triple design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumSplit {
    pub a: String,
    pub b: String,
}

impl StratumSplit {
    fn filter(&self, table: &ObservationTable, units: &[u32], label: &str) -> Vec<u32> {
        units
            .iter()
            .copied()
            .filter(|&u| table.stratum_of(u) == Some(label))
            .collect()
    }
}

/// Mean outcome/treatment and count for one audit cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CellMeans {
    pub n: usize,
    pub y: f64,
    pub d: f64,
}

/// A Wald-DID estimate with its auditable pieces: `theta = alpha / pi`, both
/// numerator and denominator reproducible from the reported cell means.
#[derive(Debug, Clone, Serialize)]
pub struct WaldDidResult {
    pub alpha: f64,
    pub pi: f64,
    pub theta: f64,
    pub cells: BTreeMap<String, CellMeans>,
}

fn check_denominator(pi: f64, tau: f64) -> Result<()> {
    if !pi.is_finite() || pi.abs() < tau {
        Err(Error::WeakDenominator { value: pi, tau })
    } else {
        Ok(())
    }
}

/// Panel Wald-DID: `alpha` is the difference between group means of the
/// outcome long difference `Y_post - Y_pre`, `pi` the analog for treatment,
/// and `theta = alpha / pi`.
pub fn wald_did_panel(
    table: &ObservationTable,
    exposed: &GroupSelector,
    unexposed: &GroupSelector,
    pre: i64,
    post: i64,
    tau: f64,
) -> Result<WaldDidResult> {
    if table.mode() != Mode::Panel {
        return Err(Error::InvalidArgument(
            "wald_did_panel requires panel mode".into(),
        ));
    }
    let exp = panel_diffs(table, exposed.resolve(table), pre, post);
    let une = panel_diffs(table, unexposed.resolve(table), pre, post);
    if exp.n() == 0 {
        return Err(Error::EmptyGroup {
            group: "exposed".into(),
            at: None,
        });
    }
    if une.n() == 0 {
        return Err(Error::EmptyGroup {
            group: "unexposed".into(),
            at: None,
        });
    }
    let alpha = exp.mean_dy - une.mean_dy;
    let pi = exp.mean_dd - une.mean_dd;
    check_denominator(pi, tau)?;

    let mut cells = BTreeMap::new();
    cells.insert(
        "exposed_pre".into(),
        CellMeans {
            n: exp.n(),
            y: exp.mean_y_pre,
            d: exp.mean_d_pre,
        },
    );
    cells.insert(
        "exposed_post".into(),
        CellMeans {
            n: exp.n(),
            y: exp.mean_y_post,
            d: exp.mean_d_post,
        },
    );
    cells.insert(
        "unexposed_pre".into(),
        CellMeans {
            n: une.n(),
            y: une.mean_y_pre,
            d: une.mean_d_pre,
        },
    );
    cells.insert(
        "unexposed_post".into(),
        CellMeans {
            n: une.n(),
            y: une.mean_y_post,
            d: une.mean_d_post,
        },
    );
    Ok(WaldDidResult {
        alpha,
        pi,
        theta: alpha / pi,
        cells,
    })
}

/// Repeated-cross-section Wald-DID from the four group-by-period cell means.
pub fn wald_did_rcs(
    table: &ObservationTable,
    exposed: &GroupSelector,
    unexposed: &GroupSelector,
    pre: i64,
    post: i64,
    tau: f64,
) -> Result<WaldDidResult> {
    let exp_units = exposed.resolve(table);
    let une_units = unexposed.resolve(table);
    let mut cells = BTreeMap::new();
    let mut cell = |name: &str, units: &[u32], t: i64| -> Result<(f64, f64)> {
        let s = rcs_cell(table, units.iter().copied(), t);
        if s.n() == 0 {
            return Err(Error::EmptyCell {
                group: name.split('_').next().unwrap_or(name).to_string(),
                period: t,
            });
        }
        cells.insert(
            name.to_string(),
            CellMeans {
                n: s.n(),
                y: s.mean_y,
                d: s.mean_d,
            },
        );
        Ok((s.mean_y, s.mean_d))
    };
    let (y_ep, d_ep) = cell("exposed_pre", &exp_units, pre)?;
    let (y_eq, d_eq) = cell("exposed_post", &exp_units, post)?;
    let (y_up, d_up) = cell("unexposed_pre", &une_units, pre)?;
    let (y_uq, d_uq) = cell("unexposed_post", &une_units, post)?;

    let alpha = (y_eq - y_ep) - (y_uq - y_up);
    let pi = (d_eq - d_ep) - (d_uq - d_up);
    check_denominator(pi, tau)?;
    Ok(WaldDidResult {
        alpha,
        pi,
        theta: alpha / pi,
        cells,
    })
}

/// Triple Wald-DID: the stratum-A DID minus the stratum-B DID, in both the
/// outcome and the treatment. Works in either dataset mode.
pub fn wald_tdid(
    table: &ObservationTable,
    exposed: &GroupSelector,
    unexposed: &GroupSelector,
    pre: i64,
    post: i64,
    stratum: &StratumSplit,
    tau: f64,
) -> Result<WaldDidResult> {
    let exp_units = exposed.resolve(table);
    let une_units = unexposed.resolve(table);
    let groups = [
        ("exposed", &exp_units),
        ("unexposed", &une_units),
    ];
    let strata = [("a", stratum.a.as_str()), ("b", stratum.b.as_str())];

    let mut cells = BTreeMap::new();
    // did[group][stratum] for y and d.
    let mut did_y = [[0.0f64; 2]; 2];
    let mut did_d = [[0.0f64; 2]; 2];

    for (gi, (gname, gunits)) in groups.iter().enumerate() {
        for (si, (sname, slabel)) in strata.iter().enumerate() {
            let units = stratum.filter(table, gunits, slabel);
            match table.mode() {
                Mode::Panel => {
                    let s = panel_diffs(table, units.iter().copied(), pre, post);
                    if s.n() == 0 {
                        return Err(Error::EmptyCell {
                            group: format!("{gname}/{slabel}"),
                            period: post,
                        });
                    }
                    did_y[gi][si] = s.mean_dy;
                    did_d[gi][si] = s.mean_dd;
                    cells.insert(
                        format!("{gname}_pre_{sname}"),
                        CellMeans {
                            n: s.n(),
                            y: s.mean_y_pre,
                            d: s.mean_d_pre,
                        },
                    );
                    cells.insert(
                        format!("{gname}_post_{sname}"),
                        CellMeans {
                            n: s.n(),
                            y: s.mean_y_post,
                            d: s.mean_d_post,
                        },
                    );
                }
                Mode::RepeatedCrossSection => {
                    let spre = rcs_cell(table, units.iter().copied(), pre);
                    let spost = rcs_cell(table, units.iter().copied(), post);
                    if spre.n() == 0 || spost.n() == 0 {
                        return Err(Error::EmptyCell {
                            group: format!("{gname}/{slabel}"),
                            period: if spre.n() == 0 { pre } else { post },
                        });
                    }
                    did_y[gi][si] = spost.mean_y - spre.mean_y;
                    did_d[gi][si] = spost.mean_d - spre.mean_d;
                    cells.insert(
                        format!("{gname}_pre_{sname}"),
                        CellMeans {
                            n: spre.n(),
                            y: spre.mean_y,
                            d: spre.mean_d,
                        },
                    );
                    cells.insert(
                        format!("{gname}_post_{sname}"),
                        CellMeans {
                            n: spost.n(),
                            y: spost.mean_y,
                            d: spost.mean_d,
                        },
                    );
                }
            }
        }
    }

    // alpha = DID(Y; A) - DID(Y; B) where DID(Y; s) = exposed - unexposed.
    let alpha = (did_y[0][0] - did_y[1][0]) - (did_y[0][1] - did_y[1][1]);
    let pi = (did_d[0][0] - did_d[1][0]) - (did_d[0][1] - did_d[1][1]);
    check_denominator(pi, tau)?;
    Ok(WaldDidResult {
        alpha,
        pi,
        theta: alpha / pi,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Mode, ObservationTable, RawRecord};
    use crate::DEFAULT_TAU;

    fn rec(unit: &str, time: i64, y: f64, d: f64, z: u8, stratum: Option<&str>) -> RawRecord {
        RawRecord {
            unit: unit.into(),
            time,
            y,
            d,
            z,
            cohort: None,
            stratum: stratum.map(str::to_string),
        }
    }

    /// Deterministic panel with exposed trends (dD, dY) = (0.5, 2) and flat
    /// unexposed trends.
    fn trending_panel() -> ObservationTable {
        let mut records = Vec::new();
        // Two exposed units with dD = 0.5 on average (one switches, one not),
        // dY = 2 each; two unexposed units flat.
        records.push(rec("e1", 0, 1.0, 0.0, 0, None));
        records.push(rec("e1", 1, 3.0, 1.0, 1, None));
        records.push(rec("e2", 0, 0.0, 0.0, 0, None));
        records.push(rec("e2", 1, 2.0, 0.0, 1, None));
        records.push(rec("u1", 0, 5.0, 0.0, 0, None));
        records.push(rec("u1", 1, 5.0, 0.0, 0, None));
        records.push(rec("u2", 0, 4.0, 1.0, 0, None));
        records.push(rec("u2", 1, 4.0, 1.0, 0, None));
        ObservationTable::from_records(Mode::Panel, records).unwrap()
    }

    #[test]
    fn arithmetic_of_definition() {
        let table = trending_panel();
        let res = wald_did_panel(
            &table,
            &GroupSelector::Cohort(Cohort::At(1)),
            &GroupSelector::never(),
            0,
            1,
            DEFAULT_TAU,
        )
        .unwrap();
        assert!((res.alpha - 2.0).abs() < 1e-12);
        assert!((res.pi - 0.5).abs() < 1e-12);
        assert!((res.theta - 4.0).abs() < 1e-12);
        assert_eq!(res.cells["exposed_pre"].n, 2);
    }

    #[test]
    fn location_invariance_in_outcome() {
        let table = trending_panel();
        let base = wald_did_panel(
            &table,
            &GroupSelector::Cohort(Cohort::At(1)),
            &GroupSelector::never(),
            0,
            1,
            DEFAULT_TAU,
        )
        .unwrap();

        // Shift Y by a constant, by a unit-specific constant, and by a
        // period-specific constant common to both groups.
        let mut shifted = Vec::new();
        for u in 0..table.n_units() as u32 {
            let unit_shift = 10.0 * (u as f64 + 1.0);
            for r in table.rows_of(u) {
                let period_shift = if r.time == 1 { 7.0 } else { -3.0 };
                shifted.push(RawRecord {
                    unit: table.unit_name(u).into(),
                    time: r.time,
                    y: r.y + 100.0 + unit_shift + period_shift,
                    d: r.d,
                    z: r.z,
                    cohort: None,
                    stratum: None,
                });
            }
        }
        let table2 = ObservationTable::from_records(Mode::Panel, shifted).unwrap();
        let res = wald_did_panel(
            &table2,
            &GroupSelector::Cohort(Cohort::At(1)),
            &GroupSelector::never(),
            0,
            1,
            DEFAULT_TAU,
        )
        .unwrap();
        assert!((res.theta - base.theta).abs() < 1e-12);
    }

    #[test]
    fn scale_equivariance_in_outcome() {
        let table = trending_panel();
        let base = wald_did_panel(
            &table,
            &GroupSelector::Cohort(Cohort::At(1)),
            &GroupSelector::never(),
            0,
            1,
            DEFAULT_TAU,
        )
        .unwrap();
        let mut scaled = Vec::new();
        for u in 0..table.n_units() as u32 {
            for r in table.rows_of(u) {
                scaled.push(RawRecord {
                    unit: table.unit_name(u).into(),
                    time: r.time,
                    y: 3.0 * r.y,
                    d: r.d,
                    z: r.z,
                    cohort: None,
                    stratum: None,
                });
            }
        }
        let table2 = ObservationTable::from_records(Mode::Panel, scaled).unwrap();
        let res = wald_did_panel(
            &table2,
            &GroupSelector::Cohort(Cohort::At(1)),
            &GroupSelector::never(),
            0,
            1,
            DEFAULT_TAU,
        )
        .unwrap();
        assert!((res.theta - 3.0 * base.theta).abs() < 1e-11);
    }

    #[test]
    fn rcs_constant_shift_leaves_theta() {
        let mut records = Vec::new();
        let mut k = 0;
        // Four cells with distinct D means so the denominator is non-zero.
        for (coh, t, y, d) in [
            (Cohort::At(1), 0i64, 1.0, 0.0),
            (Cohort::At(1), 1, 4.0, 1.0),
            (Cohort::Never, 0, 2.0, 0.0),
            (Cohort::Never, 1, 3.0, 0.0),
        ] {
            for j in 0..3 {
                k += 1;
                records.push(RawRecord {
                    unit: format!("u{k}"),
                    time: t,
                    y: y + j as f64 * 0.1,
                    d,
                    z: (coh == Cohort::At(1) && t >= 1) as u8,
                    cohort: Some(coh),
                    stratum: None,
                });
            }
        }
        let table = ObservationTable::from_records(Mode::RepeatedCrossSection, records).unwrap();
        let exposed = GroupSelector::Cohort(Cohort::At(1));
        let unexposed = GroupSelector::never();
        let base = wald_did_rcs(&table, &exposed, &unexposed, 0, 1, DEFAULT_TAU).unwrap();

        let mut shifted = Vec::new();
        for u in 0..table.n_units() as u32 {
            for r in table.rows_of(u) {
                shifted.push(RawRecord {
                    unit: table.unit_name(u).into(),
                    time: r.time,
                    y: r.y + 42.0,
                    d: r.d,
                    z: r.z,
                    cohort: table.supplied_cohort(u),
                    stratum: None,
                });
            }
        }
        let table2 = ObservationTable::from_records(Mode::RepeatedCrossSection, shifted).unwrap();
        let res = wald_did_rcs(&table2, &exposed, &unexposed, 0, 1, DEFAULT_TAU).unwrap();
        assert!((res.theta - base.theta).abs() < 1e-12);
    }

    #[test]
    fn rcs_equal_d_means_is_weak() {
        let mut records = Vec::new();
        let mut k = 0;
        for (coh, t) in [
            (Cohort::At(1), 0i64),
            (Cohort::At(1), 1),
            (Cohort::Never, 0),
            (Cohort::Never, 1),
        ] {
            k += 1;
            records.push(RawRecord {
                unit: format!("u{k}"),
                time: t,
                y: k as f64,
                d: 1.0,
                z: (coh == Cohort::At(1) && t >= 1) as u8,
                cohort: Some(coh),
                stratum: None,
            });
        }
        let table = ObservationTable::from_records(Mode::RepeatedCrossSection, records).unwrap();
        let err = wald_did_rcs(
            &table,
            &GroupSelector::Cohort(Cohort::At(1)),
            &GroupSelector::never(),
            0,
            1,
            DEFAULT_TAU,
        )
        .unwrap_err();
        assert!(matches!(err, Error::WeakDenominator { .. }));
    }

    #[test]
    fn triple_collapses_when_b_stratum_is_silent() {
        // Stratum B carries zero instrument response and zero differential
        // trend, so the triple estimate equals the A-stratum Wald-DID.
        let mut records = Vec::new();
        let mk = |unit: &str, t: i64, y: f64, d: f64, z: u8, s: &str| rec(unit, t, y, d, z, Some(s));
        // A-stratum exposed: dY=3, dD=0.5; A unexposed: flat.
        records.push(mk("ea1", 0, 0.0, 0.0, 0, "A"));
        records.push(mk("ea1", 1, 3.0, 1.0, 1, "A"));
        records.push(mk("ea2", 0, 1.0, 0.0, 0, "A"));
        records.push(mk("ea2", 1, 4.0, 0.0, 1, "A"));
        records.push(mk("ua1", 0, 2.0, 0.0, 0, "A"));
        records.push(mk("ua1", 1, 2.0, 0.0, 0, "A"));
        // B-strata: identical flat paths in both groups.
        records.push(mk("eb1", 0, 5.0, 1.0, 0, "B"));
        records.push(mk("eb1", 1, 5.0, 1.0, 1, "B"));
        records.push(mk("ub1", 0, 5.0, 1.0, 0, "B"));
        records.push(mk("ub1", 1, 5.0, 1.0, 0, "B"));
        let table = ObservationTable::from_records(Mode::Panel, records).unwrap();

        let split = StratumSplit {
            a: "A".into(),
            b: "B".into(),
        };
        let exposed = GroupSelector::Cohort(Cohort::At(1));
        let unexposed = GroupSelector::never();
        let triple = wald_tdid(&table, &exposed, &unexposed, 0, 1, &split, DEFAULT_TAU).unwrap();

        // A-stratum-only 2x2.
        let a_only = GroupSelector::Units(["ea1", "ea2"].iter().map(|s| s.to_string()).collect());
        let u_only = GroupSelector::Units(["ua1"].iter().map(|s| s.to_string()).collect());
        let two = wald_did_panel(&table, &a_only, &u_only, 0, 1, DEFAULT_TAU).unwrap();
        assert!((triple.theta - two.theta).abs() < 1e-12);
    }

    #[test]
    fn triple_removes_stratum_specific_shocks() {
        let mut records = Vec::new();
        let mk = |unit: &str, t: i64, y: f64, d: f64, z: u8, s: &str| rec(unit, t, y, d, z, Some(s));
        records.push(mk("ea", 0, 0.0, 0.0, 0, "A"));
        records.push(mk("ea", 1, 3.0, 1.0, 1, "A"));
        records.push(mk("ua", 0, 2.0, 0.0, 0, "A"));
        records.push(mk("ua", 1, 2.5, 0.0, 0, "A"));
        records.push(mk("eb", 0, 5.0, 0.0, 0, "B"));
        records.push(mk("eb", 1, 5.5, 0.0, 1, "B"));
        records.push(mk("ub", 0, 5.0, 1.0, 0, "B"));
        records.push(mk("ub", 1, 5.0, 1.0, 0, "B"));
        let table = ObservationTable::from_records(Mode::Panel, records).unwrap();
        let split = StratumSplit {
            a: "A".into(),
            b: "B".into(),
        };
        let exposed = GroupSelector::Cohort(Cohort::At(1));
        let unexposed = GroupSelector::never();
        let base = wald_tdid(&table, &exposed, &unexposed, 0, 1, &split, DEFAULT_TAU).unwrap();

        // Add stratum-specific period-1 shocks to Y in both groups.
        let shocked: Vec<RawRecord> = (0..table.n_units() as u32)
            .flat_map(|u| {
                let s = table.stratum_of(u).unwrap().to_string();
                table.rows_of(u).iter().map(move |r| {
                    let shock = if r.time == 1 {
                        if s == "A" {
                            11.0
                        } else {
                            -4.0
                        }
                    } else {
                        0.0
                    };
                    RawRecord {
                        unit: format!("x{u}"),
                        time: r.time,
                        y: r.y + shock,
                        d: r.d,
                        z: r.z,
                        cohort: None,
                        stratum: Some(s.clone()),
                    }
                })
            })
            .collect();
        let table2 = ObservationTable::from_records(Mode::Panel, shocked).unwrap();
        let res = wald_tdid(&table2, &exposed, &unexposed, 0, 1, &split, DEFAULT_TAU).unwrap();
        assert!((res.theta - base.theta).abs() < 1e-12);
    }
}
