//! Observational data: long-format tables, cohort derivation, and validation.
//!
//! Data are long-format records `(unit, time, y, d, z)`, either panel (each
//! unit observed in several periods) or repeated cross section (each unit
//! observed exactly once). Cohorts are defined by the initial instrument
//! exposure date `E_i = min{t : z_{i,t} = 1}` (a supplied column in RCS mode),
//! with a reserved `never` label for units that are never exposed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dataset mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Panel,
    RepeatedCrossSection,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Panel => write!(f, "panel"),
            Mode::RepeatedCrossSection => write!(f, "rcs"),
        }
    }
}

/// Initial instrument exposure date; `Never` is the reserved sentinel for
/// units that are never exposed. Ordering puts `Never` after every date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cohort {
    At(i64),
    Never,
}

impl Cohort {
    pub fn date(&self) -> Option<i64> {
        match self {
            Cohort::At(t) => Some(*t),
            Cohort::Never => None,
        }
    }

    /// Exposure indicator implied by the cohort at period `t`.
    pub fn exposed_at(&self, t: i64) -> bool {
        match self {
            Cohort::At(e) => t >= *e,
            Cohort::Never => false,
        }
    }

    pub fn parse(s: &str) -> Option<Cohort> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("never") || s.eq_ignore_ascii_case("inf") || s == "∞" {
            Some(Cohort::Never)
        } else {
            s.parse::<i64>().ok().map(Cohort::At)
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cohort::At(t) => write!(f, "{t}"),
            Cohort::Never => write!(f, "never"),
        }
    }
}

impl Serialize for Cohort {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cohort::At(t) => s.serialize_i64(*t),
            Cohort::Never => s.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for Cohort {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(t) => Ok(Cohort::At(t)),
            Raw::Str(s) => {
                Cohort::parse(&s).ok_or_else(|| D::Error::custom(format!("invalid cohort `{s}`")))
            }
        }
    }
}

/// One long-format observation. `unit` indexes into the table's unit roster.
#[derive(Debug, Clone, Copy)]
pub struct Row {
    pub unit: u32,
    pub time: i64,
    pub y: f64,
    pub d: f64,
    pub z: u8,
}

/// A raw record before interning; the input to table construction.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub unit: String,
    pub time: i64,
    pub y: f64,
    pub d: f64,
    pub z: u8,
    pub cohort: Option<Cohort>,
    pub stratum: Option<String>,
}

/// Immutable long-format dataset, indexed by unit and sorted by (unit, time).
#[derive(Debug, Clone)]
pub struct ObservationTable {
    mode: Mode,
    arity: u32,
    units: Vec<String>,
    rows: Vec<Row>,
    spans: Vec<Range<usize>>,
    periods: Vec<i64>,
    supplied_cohort: Option<Vec<Cohort>>,
    stratum_labels: Vec<String>,
    strata: Option<Vec<u16>>,
}

impl ObservationTable {
    /// Build a table from raw records. Unit ids are interned in sorted order
    /// and rows are normalized to (unit, time) order. Panel mode rejects
    /// duplicate (unit, time) pairs; RCS mode rejects units observed more
    /// than once. The treatment arity is inferred as `max(1, max d)`.
    pub fn from_records(mode: Mode, records: Vec<RawRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let mut unit_names: Vec<&str> = records.iter().map(|r| r.unit.as_str()).collect();
        unit_names.sort_unstable();
        unit_names.dedup();
        let units: Vec<String> = unit_names.iter().map(|s| s.to_string()).collect();
        let index: BTreeMap<&str, u32> = units
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();

        let mut rows = Vec::with_capacity(records.len());
        let mut supplied: Vec<Option<Cohort>> = vec![None; units.len()];
        let mut any_cohort = false;
        let mut strata_raw: Vec<Option<String>> = vec![None; units.len()];
        let mut any_stratum = false;

        for rec in &records {
            let u = index[rec.unit.as_str()];
            if !(rec.y.is_finite() && rec.d.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value for unit `{}` at time {}",
                    rec.unit, rec.time
                )));
            }
            if rec.d < 0.0 || rec.d.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "treatment must be a non-negative integer; unit `{}` time {} has d={}",
                    rec.unit, rec.time, rec.d
                )));
            }
            if rec.z > 1 {
                return Err(Error::InvalidArgument(format!(
                    "instrument must be 0/1; unit `{}` time {} has z={}",
                    rec.unit, rec.time, rec.z
                )));
            }
            if let Some(c) = rec.cohort {
                any_cohort = true;
                match supplied[u as usize] {
                    None => supplied[u as usize] = Some(c),
                    Some(prev) if prev != c => {
                        return Err(Error::InvalidArgument(format!(
                            "unit `{}` has inconsistent cohort labels ({prev} vs {c})",
                            rec.unit
                        )))
                    }
                    _ => {}
                }
            }
            if let Some(s) = &rec.stratum {
                any_stratum = true;
                match &strata_raw[u as usize] {
                    None => strata_raw[u as usize] = Some(s.clone()),
                    Some(prev) if prev != s => {
                        return Err(Error::InvalidArgument(format!(
                            "unit `{}` has inconsistent stratum labels ({prev} vs {s})",
                            rec.unit
                        )))
                    }
                    _ => {}
                }
            }
            rows.push(Row {
                unit: u,
                time: rec.time,
                y: rec.y,
                d: rec.d,
                z: rec.z,
            });
        }
        rows.sort_by(|a, b| (a.unit, a.time).cmp(&(b.unit, b.time)));

        // Duplicate checks and per-unit spans.
        let mut spans = vec![0..0; units.len()];
        let mut start = 0usize;
        for i in 0..rows.len() {
            let last_of_unit = i + 1 == rows.len() || rows[i + 1].unit != rows[i].unit;
            if !last_of_unit && rows[i + 1].time == rows[i].time {
                return Err(Error::DuplicateObservation {
                    unit: units[rows[i].unit as usize].clone(),
                    time: rows[i].time,
                });
            }
            if last_of_unit {
                let unit = rows[i].unit as usize;
                spans[unit] = start..i + 1;
                if mode == Mode::RepeatedCrossSection && i + 1 - start != 1 {
                    return Err(Error::DuplicateObservation {
                        unit: units[unit].clone(),
                        time: rows[start].time,
                    });
                }
                start = i + 1;
            }
        }

        let mut periods: Vec<i64> = rows.iter().map(|r| r.time).collect();
        periods.sort_unstable();
        periods.dedup();

        let arity = rows.iter().map(|r| r.d as u32).max().unwrap_or(0).max(1);

        let supplied_cohort = if any_cohort {
            let mut out = Vec::with_capacity(units.len());
            for (u, c) in supplied.iter().enumerate() {
                match c {
                    Some(c) => out.push(*c),
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "unit `{}` is missing a cohort label",
                            units[u]
                        )))
                    }
                }
            }
            Some(out)
        } else {
            None
        };

        let (stratum_labels, strata) = if any_stratum {
            let mut labels: Vec<String> = strata_raw.iter().flatten().cloned().collect();
            labels.sort_unstable();
            labels.dedup();
            let mut per_unit = Vec::with_capacity(units.len());
            for (u, s) in strata_raw.iter().enumerate() {
                match s {
                    Some(s) => {
                        per_unit.push(labels.binary_search(s).unwrap() as u16);
                    }
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "unit `{}` is missing a stratum label",
                            units[u]
                        )))
                    }
                }
            }
            (labels, Some(per_unit))
        } else {
            (Vec::new(), None)
        };

        Ok(Self {
            mode,
            arity,
            units,
            rows,
            spans,
            periods,
            supplied_cohort,
            stratum_labels,
            strata,
        })
    }

    /// Override the inferred treatment arity `J`. Fails if observed treatment
    /// levels exceed the requested arity.
    pub fn with_arity(mut self, arity: u32) -> Result<Self> {
        let max_d = self.rows.iter().map(|r| r.d as u32).max().unwrap_or(0);
        if arity < max_d.max(1) {
            return Err(Error::InvalidArgument(format!(
                "arity {arity} below maximum observed treatment level {max_d}"
            )));
        }
        self.arity = arity;
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn unit_name(&self, unit: u32) -> &str {
        &self.units[unit as usize]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn rows_of(&self, unit: u32) -> &[Row] {
        &self.rows[self.spans[unit as usize].clone()]
    }

    /// Sorted distinct observation periods.
    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn min_period(&self) -> i64 {
        self.periods[0]
    }

    pub fn max_period(&self) -> i64 {
        *self.periods.last().unwrap()
    }

    /// The unit's row at `time`, if observed.
    pub fn row_at(&self, unit: u32, time: i64) -> Option<&Row> {
        let rows = self.rows_of(unit);
        rows.binary_search_by_key(&time, |r| r.time)
            .ok()
            .map(|i| &rows[i])
    }

    /// Supplied cohort label (RCS group column), if the dataset carries one.
    pub fn supplied_cohort(&self, unit: u32) -> Option<Cohort> {
        self.supplied_cohort.as_ref().map(|v| v[unit as usize])
    }

    pub fn has_supplied_cohorts(&self) -> bool {
        self.supplied_cohort.is_some()
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    pub fn stratum_of(&self, unit: u32) -> Option<&str> {
        self.strata
            .as_ref()
            .map(|v| self.stratum_labels[v[unit as usize] as usize].as_str())
    }

    /// Initial exposure date implied by the unit's observed instrument path
    /// (panel mode), or the supplied group column (RCS mode).
    pub fn exposure_of(&self, unit: u32) -> Cohort {
        if self.mode == Mode::RepeatedCrossSection {
            if let Some(c) = self.supplied_cohort(unit) {
                return c;
            }
        }
        self.rows_of(unit)
            .iter()
            .find(|r| r.z == 1)
            .map(|r| Cohort::At(r.time))
            .unwrap_or(Cohort::Never)
    }

    /// Resample units with replacement (bootstrap support). The resampled
    /// table assigns fresh zero-padded unit names in draw order.
    pub fn resample_units(&self, drawn: &[u32]) -> Result<ObservationTable> {
        let width = drawn.len().to_string().len().max(4);
        let mut records = Vec::with_capacity(self.rows.len());
        for (k, &u) in drawn.iter().enumerate() {
            let name = format!("{k:0width$}");
            for row in self.rows_of(u) {
                records.push(RawRecord {
                    unit: name.clone(),
                    time: row.time,
                    y: row.y,
                    d: row.d,
                    z: row.z,
                    cohort: self.supplied_cohort.as_ref().map(|v| v[u as usize]),
                    stratum: self.stratum_of(u).map(str::to_string),
                });
            }
        }
        let arity = self.arity;
        ObservationTable::from_records(self.mode, records)?.with_arity(arity)
    }
}

/// Rule selecting the unexposed comparison set `U`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnexposedRule {
    /// `U = {never}`: compare against never-exposed units.
    NeverExposed,
    /// `U = {max E_i}`: compare against the last-exposed cohort; estimable
    /// cells are truncated to periods before its exposure.
    LastCohort,
    /// Explicit comparison cohorts.
    Explicit(BTreeSet<Cohort>),
}

impl fmt::Display for UnexposedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnexposedRule::NeverExposed => write!(f, "never"),
            UnexposedRule::LastCohort => write!(f, "last"),
            UnexposedRule::Explicit(set) => {
                let items: Vec<String> = set.iter().map(|c| c.to_string()).collect();
                write!(f, "set:{}", items.join(","))
            }
        }
    }
}

/// Per-unit exposure dates, the cohort roster, and the comparison set.
#[derive(Debug, Clone)]
pub struct CohortMap {
    exposure: Vec<Cohort>,
    cohorts: Vec<Cohort>,
    unexposed: BTreeSet<Cohort>,
    rule: UnexposedRule,
}

impl CohortMap {
    pub fn exposure_of(&self, unit: u32) -> Cohort {
        self.exposure[unit as usize]
    }

    pub fn exposures(&self) -> &[Cohort] {
        &self.exposure
    }

    /// Sorted distinct exposure dates present in the data.
    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohorts
    }

    pub fn unexposed_set(&self) -> &BTreeSet<Cohort> {
        &self.unexposed
    }

    pub fn rule(&self) -> &UnexposedRule {
        &self.rule
    }

    pub fn n_units(&self) -> usize {
        self.exposure.len()
    }

    /// Number of units in each cohort.
    pub fn counts(&self) -> BTreeMap<Cohort, usize> {
        let mut out = BTreeMap::new();
        for c in &self.exposure {
            *out.entry(*c).or_insert(0) += 1;
        }
        out
    }

    /// Cohorts eligible for estimation: finite dates, not in `U`, with an
    /// observable pre-exposure base period (`e - 1 >= min_period`).
    pub fn estimated_cohorts(&self, min_period: i64) -> Vec<i64> {
        self.cohorts
            .iter()
            .filter_map(Cohort::date)
            .filter(|e| !self.unexposed.contains(&Cohort::At(*e)) && e - 1 >= min_period)
            .collect()
    }
}

/// Derive per-unit exposure dates and the comparison set.
pub fn derive_cohorts(table: &ObservationTable, rule: UnexposedRule) -> Result<CohortMap> {
    let n = table.n_units();
    let mut exposure = Vec::with_capacity(n);
    for u in 0..n as u32 {
        if table.mode() == Mode::RepeatedCrossSection && !table.has_supplied_cohorts() {
            return Err(Error::MissingColumn("cohort".into()));
        }
        exposure.push(table.exposure_of(u));
    }
    let mut cohorts = exposure.clone();
    cohorts.sort_unstable();
    cohorts.dedup();

    if cohorts.len() < 2 {
        return Err(Error::NoVariation);
    }

    let unexposed: BTreeSet<Cohort> = match &rule {
        UnexposedRule::NeverExposed => {
            if !cohorts.contains(&Cohort::Never) {
                return Err(Error::EmptyUnexposedSet {
                    rule: rule.to_string(),
                });
            }
            [Cohort::Never].into_iter().collect()
        }
        UnexposedRule::LastCohort => {
            let last = cohorts
                .iter()
                .filter_map(Cohort::date)
                .max()
                .ok_or_else(|| Error::EmptyUnexposedSet {
                    rule: rule.to_string(),
                })?;
            [Cohort::At(last)].into_iter().collect()
        }
        UnexposedRule::Explicit(set) => {
            let present: BTreeSet<Cohort> = set
                .iter()
                .copied()
                .filter(|c| cohorts.contains(c))
                .collect();
            if present.is_empty() {
                return Err(Error::EmptyUnexposedSet {
                    rule: rule.to_string(),
                });
            }
            present
        }
    };

    Ok(CohortMap {
        exposure,
        cohorts,
        unexposed,
        rule,
    })
}

/// Column-name mapping for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ColumnMap {
    pub unit: String,
    pub time: String,
    pub y: String,
    pub d: String,
    pub z: String,
    pub cohort: String,
    pub stratum: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            y: "y".into(),
            d: "d".into(),
            z: "z".into(),
            cohort: "cohort".into(),
            stratum: "stratum".into(),
        }
    }
}

impl ColumnMap {
    /// Parse overrides of the form `unit=id,time=year,y=earnings`.
    pub fn parse_overrides(spec: &str) -> Result<Self> {
        let mut map = Self::default();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("bad column mapping `{part}`; expected key=name"))
            })?;
            let value = value.trim().to_string();
            match key.trim() {
                "unit" => map.unit = value,
                "time" => map.time = value,
                "y" => map.y = value,
                "d" => map.d = value,
                "z" => map.z = value,
                "cohort" => map.cohort = value,
                "stratum" => map.stratum = value,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown column key `{other}`"
                    )))
                }
            }
        }
        Ok(map)
    }
}

/// Load a long-format CSV. The header row is required; `schema` maps the
/// standard roles to column names. RCS mode requires the cohort column.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnMap, mode: Mode) -> Result<ObservationTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Option<usize> { headers.iter().position(|h| h == name) };

    let required = [
        (&schema.unit, "unit"),
        (&schema.time, "time"),
        (&schema.y, "y"),
        (&schema.d, "d"),
        (&schema.z, "z"),
    ];
    let mut idx = [0usize; 5];
    for (k, (name, _)) in required.iter().enumerate() {
        idx[k] = col(name).ok_or_else(|| Error::MissingColumn((*name).clone()))?;
    }
    let cohort_idx = col(&schema.cohort);
    if mode == Mode::RepeatedCrossSection && cohort_idx.is_none() {
        return Err(Error::MissingColumn(schema.cohort.clone()));
    }
    let stratum_idx = col(&schema.stratum);

    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row_no = line + 2; // 1-based, after the header
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_f64 = |i: usize, what: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::Parse {
                row: row_no,
                msg: format!("cannot parse {what} value `{}`", field(i)),
            })
        };
        let time = field(idx[1]).parse::<i64>().map_err(|_| Error::Parse {
            row: row_no,
            msg: format!("cannot parse time value `{}`", field(idx[1])),
        })?;
        let z_raw = parse_f64(idx[4], "z")?;
        if z_raw != 0.0 && z_raw != 1.0 {
            return Err(Error::Parse {
                row: row_no,
                msg: format!("instrument must be 0/1, got `{z_raw}`"),
            });
        }
        let cohort = match cohort_idx {
            Some(i) if !field(i).is_empty() => {
                Some(Cohort::parse(field(i)).ok_or_else(|| Error::Parse {
                    row: row_no,
                    msg: format!("cannot parse cohort value `{}`", field(i)),
                })?)
            }
            _ => None,
        };
        records.push(RawRecord {
            unit: field(idx[0]).to_string(),
            time,
            y: parse_f64(idx[2], "y")?,
            d: parse_f64(idx[3], "d")?,
            z: z_raw as u8,
            cohort,
            stratum: stratum_idx
                .map(|i| field(i))
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        });
    }
    ObservationTable::from_records(mode, records)
}

/// One validation finding.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub rule: String,
    pub unit: Option<String>,
    pub time: Option<i64>,
    pub fatal: bool,
    pub msg: String,
}

/// The outcome of structural validation; empty means the dataset passes.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_fatal(&self) -> bool {
        self.violations.iter().any(|v| v.fatal)
    }

    fn push(&mut self, rule: &str, unit: Option<String>, time: Option<i64>, fatal: bool, msg: String) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            unit,
            time,
            fatal,
            msg,
        });
    }
}

/// Structural checks on a dataset and its cohort assignment:
/// staggered-monotone instrument paths, consistency of `z` with the exposure
/// date, treatment levels within arity, and estimability of the requested
/// cohorts. Findings are reported, never thrown.
pub fn validate(table: &ObservationTable, cohorts: &CohortMap) -> ValidationReport {
    let mut report = ValidationReport::default();
    let min_period = table.min_period();

    for u in 0..table.n_units() as u32 {
        let rows = table.rows_of(u);
        let e = cohorts.exposure_of(u);

        if table.mode() == Mode::Panel {
            let mut last_z = 0u8;
            for r in rows {
                if r.z < last_z {
                    report.push(
                        "StaggeredViolation",
                        Some(table.unit_name(u).to_string()),
                        Some(r.time),
                        true,
                        "instrument switches off after exposure".into(),
                    );
                    break;
                }
                last_z = r.z;
            }
        }

        for r in rows {
            let want = e.exposed_at(r.time);
            if (r.z == 1) != want {
                report.push(
                    "InstrumentCohortMismatch",
                    Some(table.unit_name(u).to_string()),
                    Some(r.time),
                    true,
                    format!("z={} inconsistent with exposure date {e}", r.z),
                );
                break;
            }
        }

        for r in rows {
            if r.d as u32 > table.arity() {
                report.push(
                    "TreatmentOutOfRange",
                    Some(table.unit_name(u).to_string()),
                    Some(r.time),
                    true,
                    format!("d={} exceeds arity {}", r.d, table.arity()),
                );
                break;
            }
        }

        if table.mode() == Mode::Panel {
            if let Some(sup) = table.supplied_cohort(u) {
                if sup != e {
                    report.push(
                        "SuppliedCohortMismatch",
                        Some(table.unit_name(u).to_string()),
                        None,
                        true,
                        format!("supplied cohort {sup} but derived {e}"),
                    );
                }
            }
        }
    }

    // Cohorts first exposed at the earliest observed period have no
    // pre-exposure base period and cannot be estimated.
    for c in cohorts.cohorts() {
        if let Some(e) = c.date() {
            if e <= min_period && !cohorts.unexposed_set().contains(c) {
                report.push(
                    "AlreadyExposedCohort",
                    None,
                    Some(e),
                    true,
                    format!("cohort {e} has no pre-exposure period (first period is {min_period})"),
                );
            }
        }
    }

    report
}

/// Panel-balance check for a set of estimation cells: units of the cell's
/// cohorts must be observed at both the base and outcome periods.
pub fn validate_cells(
    table: &ObservationTable,
    cohorts: &CohortMap,
    cells: &[crate::sts::CellSpec],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    if table.mode() != Mode::Panel {
        return report;
    }
    for cell in cells {
        for u in 0..table.n_units() as u32 {
            let e = cohorts.exposure_of(u);
            let in_cell = e == Cohort::At(cell.cohort) || cell.comparison.contains(&e);
            if !in_cell {
                continue;
            }
            for t in [cell.base, cell.period()] {
                if table.row_at(u, t).is_none() {
                    report.push(
                        "CellImbalance",
                        Some(table.unit_name(u).to_string()),
                        Some(t),
                        true,
                        format!(
                            "unit missing period {t} required by cell (e={}, l={})",
                            cell.cohort, cell.rel
                        ),
                    );
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

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

    pub(crate) fn small_panel() -> ObservationTable {
        // Units 1,2 exposed at t=1; units 3,4 never exposed.
        let mut records = Vec::new();
        for (u, e) in [("1", true), ("2", true), ("3", false), ("4", false)] {
            for t in 0..2 {
                let z = (e && t >= 1) as u8;
                records.push(rec(u, t, t as f64, z as f64, z));
            }
        }
        ObservationTable::from_records(Mode::Panel, records).unwrap()
    }

    #[test]
    fn loads_and_normalizes() {
        let t = small_panel();
        assert_eq!(t.n_units(), 4);
        assert_eq!(t.n_rows(), 8);
        assert_eq!(t.periods(), &[0, 1]);
        // Rows sorted by (unit, time).
        let rows = t.rows();
        assert!(rows.windows(2).all(|w| (w[0].unit, w[0].time) < (w[1].unit, w[1].time)));
    }

    #[test]
    fn duplicate_observation_rejected() {
        let records = vec![rec("1", 0, 0.0, 0.0, 0), rec("1", 0, 1.0, 0.0, 0)];
        match ObservationTable::from_records(Mode::Panel, records) {
            Err(Error::DuplicateObservation { unit, time }) => {
                assert_eq!(unit, "1");
                assert_eq!(time, 0);
            }
            other => panic!("expected DuplicateObservation, got {other:?}"),
        }
    }

    #[test]
    fn rcs_requires_single_observation() {
        let records = vec![rec("1", 0, 0.0, 0.0, 0), rec("1", 1, 1.0, 0.0, 0)];
        assert!(ObservationTable::from_records(Mode::RepeatedCrossSection, records).is_err());
    }

    #[test]
    fn derive_cohorts_two_by_two() {
        let t = small_panel();
        let map = derive_cohorts(&t, UnexposedRule::NeverExposed).unwrap();
        assert_eq!(map.cohorts(), &[Cohort::At(1), Cohort::Never]);
        assert_eq!(map.exposure_of(0), Cohort::At(1));
        assert_eq!(map.exposure_of(2), Cohort::Never);
        assert!(map.unexposed_set().contains(&Cohort::Never));
    }

    #[test]
    fn last_cohort_rule() {
        // Cohorts {1947, 1957}: U = {1957}.
        let mut records = Vec::new();
        for t in 1946..1960 {
            records.push(rec("a", t, 0.0, 0.0, (t >= 1947) as u8));
            records.push(rec("b", t, 0.0, 0.0, (t >= 1957) as u8));
        }
        let table = ObservationTable::from_records(Mode::Panel, records).unwrap();
        let map = derive_cohorts(&table, UnexposedRule::LastCohort).unwrap();
        assert_eq!(
            map.unexposed_set().iter().copied().collect::<Vec<_>>(),
            vec![Cohort::At(1957)]
        );
        assert_eq!(map.estimated_cohorts(1946), vec![1947]);
    }

    #[test]
    fn no_variation_detected() {
        let records = vec![rec("1", 0, 0.0, 0.0, 0), rec("2", 0, 0.0, 0.0, 0)];
        let t = ObservationTable::from_records(Mode::Panel, records).unwrap();
        assert!(matches!(
            derive_cohorts(&t, UnexposedRule::NeverExposed),
            Err(Error::NoVariation)
        ));
    }

    #[test]
    fn validate_flags_staggered_violation() {
        let records = vec![
            rec("1", 0, 0.0, 0.0, 1),
            rec("1", 1, 0.0, 0.0, 0),
            rec("2", 0, 0.0, 0.0, 0),
            rec("2", 1, 0.0, 0.0, 0),
        ];
        let t = ObservationTable::from_records(Mode::Panel, records).unwrap();
        let map = derive_cohorts(&t, UnexposedRule::NeverExposed).unwrap();
        let report = validate(&t, &map);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == "StaggeredViolation" && v.fatal));
    }

    #[test]
    fn validate_clean_panel() {
        let t = small_panel();
        let map = derive_cohorts(&t, UnexposedRule::NeverExposed).unwrap();
        let report = validate(&t, &map);
        assert!(report.is_clean(), "{:?}", report.violations);
    }

    #[test]
    fn validate_flags_already_exposed_cohort() {
        // Cohort exposed at the first observed period cannot be estimated.
        let records = vec![
            rec("1", 0, 0.0, 0.0, 1),
            rec("1", 1, 0.0, 0.0, 1),
            rec("2", 0, 0.0, 0.0, 0),
            rec("2", 1, 0.0, 0.0, 0),
        ];
        let t = ObservationTable::from_records(Mode::Panel, records).unwrap();
        let map = derive_cohorts(&t, UnexposedRule::NeverExposed).unwrap();
        let report = validate(&t, &map);
        assert!(report
            .violations
            .iter()
            .any(|v| v.rule == "AlreadyExposedCohort"));
    }

    #[test]
    fn validation_report_serializes_per_schema() {
        let mut report = ValidationReport::default();
        report.push("StaggeredViolation", Some("7".into()), Some(3), true, "x".into());
        let json = serde_json::to_value(&report).unwrap();
        let v = &json["violations"][0];
        assert_eq!(v["rule"], "StaggeredViolation");
        assert_eq!(v["unit"], "7");
        assert_eq!(v["time"], 3);
        assert_eq!(v["fatal"], true);
    }

    #[test]
    fn cohort_serde_forms() {
        assert_eq!(serde_json::to_string(&Cohort::At(1947)).unwrap(), "1947");
        assert_eq!(serde_json::to_string(&Cohort::Never).unwrap(), "\"never\"");
        let c: Cohort = serde_json::from_str("\"never\"").unwrap();
        assert_eq!(c, Cohort::Never);
        let c: Cohort = serde_json::from_str("3").unwrap();
        assert_eq!(c, Cohort::At(3));
    }
}
