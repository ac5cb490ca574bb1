//! Shared group-mean machinery for the 2x2 and cell estimators.
//!
//! All estimators in this crate reduce to differences of group means of
//! either per-unit long differences (panel) or per-observation levels (RCS).
//! Centralizing the accumulation here keeps the 2x2 Wald-DID and the
//! degenerate one-cell stacked estimator bit-identical.

use crate::data::ObservationTable;
use crate::numeric::KahanSum;

/// Per-group long-difference statistics for a (pre, post) period pair.
#[derive(Debug, Clone, Default)]
pub(crate) struct DiffStats {
    /// Units with both periods observed, ascending unit index.
    pub units: Vec<u32>,
    pub dy: Vec<f64>,
    pub dd: Vec<f64>,
    pub mean_dy: f64,
    pub mean_dd: f64,
    /// Units of the group missing either period.
    pub n_dropped: usize,
    pub mean_y_pre: f64,
    pub mean_y_post: f64,
    pub mean_d_pre: f64,
    pub mean_d_post: f64,
}

impl DiffStats {
    pub fn n(&self) -> usize {
        self.units.len()
    }
}

/// Long differences `x_post - x_pre` for every unit in `units` observed at
/// both periods; `units` must be ascending.
pub(crate) fn panel_diffs(
    table: &ObservationTable,
    units: impl IntoIterator<Item = u32>,
    pre: i64,
    post: i64,
) -> DiffStats {
    let mut out = DiffStats::default();
    let (mut sy, mut sd) = (KahanSum::new(), KahanSum::new());
    let (mut syp, mut syq, mut sdp, mut sdq) = (
        KahanSum::new(),
        KahanSum::new(),
        KahanSum::new(),
        KahanSum::new(),
    );
    for u in units {
        let (a, b) = match (table.row_at(u, pre), table.row_at(u, post)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                out.n_dropped += 1;
                continue;
            }
        };
        let dy = b.y - a.y;
        let dd = b.d - a.d;
        out.units.push(u);
        out.dy.push(dy);
        out.dd.push(dd);
        sy.add(dy);
        sd.add(dd);
        syp.add(a.y);
        syq.add(b.y);
        sdp.add(a.d);
        sdq.add(b.d);
    }
    let n = out.units.len() as f64;
    if n > 0.0 {
        out.mean_dy = sy.value() / n;
        out.mean_dd = sd.value() / n;
        out.mean_y_pre = syp.value() / n;
        out.mean_y_post = syq.value() / n;
        out.mean_d_pre = sdp.value() / n;
        out.mean_d_post = sdq.value() / n;
    }
    out
}

/// Per-cell level statistics for repeated cross sections.
#[derive(Debug, Clone, Default)]
pub(crate) struct ObsStats {
    /// Units whose single observation falls in this cell, ascending.
    pub units: Vec<u32>,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub mean_y: f64,
    pub mean_d: f64,
}

impl ObsStats {
    pub fn n(&self) -> usize {
        self.units.len()
    }
}

/// Levels of units from `units` observed at `period` (RCS: at most one row
/// per unit).
pub(crate) fn rcs_cell(
    table: &ObservationTable,
    units: impl IntoIterator<Item = u32>,
    period: i64,
) -> ObsStats {
    let mut out = ObsStats::default();
    let (mut sy, mut sd) = (KahanSum::new(), KahanSum::new());
    for u in units {
        let Some(r) = table.row_at(u, period) else {
            continue;
        };
        out.units.push(u);
        out.y.push(r.y);
        out.d.push(r.d);
        sy.add(r.y);
        sd.add(r.d);
    }
    let n = out.units.len() as f64;
    if n > 0.0 {
        out.mean_y = sy.value() / n;
        out.mean_d = sd.value() / n;
    }
    out
}
