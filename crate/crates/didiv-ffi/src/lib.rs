//! C ABI for the didiv estimation toolkit.
//!
//! The interface works through an opaque dataset handle and JSON strings:
//! load a CSV, derive cohorts, then ask for estimates. Every function that
//! can fail either returns a null pointer or a nonzero `DidivStatus`; the
//! message for the most recent failure on the current thread is available
//! via [`didiv_last_error`].
//!
//! Strings returned as `*mut c_char` are owned by the caller and must be
//! released with [`didiv_string_free`]. The header `include/didiv.h` is
//! generated from this file by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use didiv_core::aggregate::{aggregate, caet_estimates, AggregationKind};
use didiv_core::data::{
    derive_cohorts, load_csv, validate, Cohort, CohortMap, ColumnMap, Mode, ObservationTable,
    UnexposedRule,
};
use didiv_core::error::Error;
use didiv_core::pretrend::pretrend_test;
use didiv_core::sim;
use didiv_core::sts::{estimate_cells, EstimateOptions};
use didiv_core::twfeiv::{bootstrap_twfeiv_se, decompose_twfeiv, estimate_twfeiv, TwfeivOptions};

/// Status codes returned by fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DidivStatus {
    Ok = 0,
    /// Invalid argument (null pointer, bad UTF-8, unknown option).
    InvalidArgument = 1,
    /// Estimation failed (empty groups, weak first stage, bad layout...).
    EstimationError = 2,
    /// File system failure.
    IoError = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> DidivStatus {
    match err {
        Error::Io(_) | Error::Csv(_) => DidivStatus::IoError,
        Error::InvalidArgument(_) | Error::MissingColumn(_) => DidivStatus::InvalidArgument,
        _ => DidivStatus::EstimationError,
    }
}

/// Opaque dataset handle: a loaded table plus (after
/// [`didiv_derive_cohorts`]) its cohort assignment.
pub struct DidivDataset {
    table: ObservationTable,
    cohorts: Option<CohortMap>,
}

/// Message for the most recent failure on this thread. The pointer is valid
/// until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn didiv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn didiv_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a `*_json` function of this
/// library (or null), not yet freed.
#[no_mangle]
pub unsafe extern "C" fn didiv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, ()> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(());
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error(&format!("{what} is not valid UTF-8"));
            Err(())
        }
    }
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

fn mode_of(mode: c_int) -> Result<Mode, ()> {
    match mode {
        0 => Ok(Mode::Panel),
        1 => Ok(Mode::RepeatedCrossSection),
        other => {
            set_error(&format!("mode must be 0 (panel) or 1 (rcs), got {other}"));
            Err(())
        }
    }
}

fn parse_rule(rule: &str) -> Result<UnexposedRule, ()> {
    match rule {
        "never" => Ok(UnexposedRule::NeverExposed),
        "last" => Ok(UnexposedRule::LastCohort),
        s if s.starts_with("set:") => {
            let mut set = std::collections::BTreeSet::new();
            for item in s[4..].split(',').filter(|p| !p.is_empty()) {
                match Cohort::parse(item) {
                    Some(c) => {
                        set.insert(c);
                    }
                    None => {
                        set_error(&format!("bad cohort `{item}` in rule"));
                        return Err(());
                    }
                }
            }
            Ok(UnexposedRule::Explicit(set))
        }
        other => {
            set_error(&format!("rule must be never, last or set:..., got `{other}`"));
            Err(())
        }
    }
}

/// Load a long-format CSV. `mode`: 0 = panel, 1 = repeated cross section.
/// `columns` may be null or a comma list of overrides (`unit=id,time=year`).
/// Returns null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `columns` may be null or a
/// valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn didiv_dataset_load_csv(
    path: *const c_char,
    mode: c_int,
    columns: *const c_char,
) -> *mut DidivDataset {
    let result = catch_unwind(AssertUnwindSafe(|| {
        let path = str_arg(path, "path").ok()?;
        let mode = mode_of(mode).ok()?;
        let columns = if columns.is_null() {
            ColumnMap::default()
        } else {
            let spec = str_arg(columns, "columns").ok()?;
            match ColumnMap::parse_overrides(spec) {
                Ok(c) => c,
                Err(e) => {
                    set_error(&e.to_string());
                    return None;
                }
            }
        };
        match load_csv(Path::new(path), &columns, mode) {
            Ok(table) => Some(Box::into_raw(Box::new(DidivDataset {
                table,
                cohorts: None,
            }))),
            Err(e) => {
                set_error(&e.to_string());
                None
            }
        }
    }));
    match result {
        Ok(Some(ptr)) => ptr,
        Ok(None) => std::ptr::null_mut(),
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Release a dataset handle.
///
/// # Safety
/// `ds` must come from [`didiv_dataset_load_csv`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn didiv_dataset_free(ds: *mut DidivDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of distinct units, or -1 on a null handle.
///
/// # Safety
/// `ds` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn didiv_dataset_n_units(ds: *const DidivDataset) -> i64 {
    match ds.as_ref() {
        Some(d) => d.table.n_units() as i64,
        None => -1,
    }
}

/// Number of observation rows, or -1 on a null handle.
///
/// # Safety
/// `ds` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn didiv_dataset_n_rows(ds: *const DidivDataset) -> i64 {
    match ds.as_ref() {
        Some(d) => d.table.n_rows() as i64,
        None => -1,
    }
}

/// Derive exposure cohorts and the comparison set. `rule` is `never`,
/// `last`, or `set:1957,never`.
///
/// # Safety
/// `ds` must be a valid handle; `rule` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn didiv_derive_cohorts(
    ds: *mut DidivDataset,
    rule: *const c_char,
) -> DidivStatus {
    let Some(data) = ds.as_mut() else {
        set_error("dataset handle is null");
        return DidivStatus::InvalidArgument;
    };
    let Ok(rule) = str_arg(rule, "rule") else {
        return DidivStatus::InvalidArgument;
    };
    let Ok(rule) = parse_rule(rule) else {
        return DidivStatus::InvalidArgument;
    };
    match derive_cohorts(&data.table, rule) {
        Ok(map) => {
            data.cohorts = Some(map);
            DidivStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

unsafe fn with_cohorts<'a>(
    ds: *const DidivDataset,
) -> Result<(&'a ObservationTable, &'a CohortMap), ()> {
    let Some(data) = ds.as_ref() else {
        set_error("dataset handle is null");
        return Err(());
    };
    match &data.cohorts {
        Some(c) => Ok((&data.table, c)),
        None => {
            set_error("cohorts not derived; call didiv_derive_cohorts first");
            Err(())
        }
    }
}

/// Structural validation findings as JSON; null on failure.
///
/// # Safety
/// `ds` must be a valid handle with cohorts derived.
#[no_mangle]
pub unsafe extern "C" fn didiv_validate_json(ds: *const DidivDataset) -> *mut c_char {
    let Ok((table, cohorts)) = with_cohorts(ds) else {
        return std::ptr::null_mut();
    };
    let report = validate(table, cohorts);
    match serde_json::to_string(&report) {
        Ok(s) => to_c_string(s),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Estimate every cohort-by-period cell; returns the JSON array of cell
/// results, or null on failure.
///
/// # Safety
/// `ds` must be a valid handle with cohorts derived.
#[no_mangle]
pub unsafe extern "C" fn didiv_estimate_cells_json(
    ds: *const DidivDataset,
    tau: f64,
    min_cell: c_int,
) -> *mut c_char {
    let Ok((table, cohorts)) = with_cohorts(ds) else {
        return std::ptr::null_mut();
    };
    let opts = EstimateOptions {
        tau,
        min_cell_per_group: min_cell.max(0) as usize,
    };
    match estimate_cells(table, cohorts, &opts) {
        Ok(cells) => {
            let array: Vec<serde_json::Value> = cells.iter().map(|c| c.summary_json()).collect();
            to_c_string(serde_json::Value::Array(array).to_string())
        }
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Aggregate the cells into a summary parameter. `kind` is one of `es`,
/// `es-bal`, `sel`, `cal`, `cal-cumm`, `overall-w`, `overall-sel`; `lead`,
/// `max_lead`, `cohort`, and `period` are read as required by the kind.
/// Returns JSON or null.
///
/// # Safety
/// `ds` must be a valid handle with cohorts derived; `kind` a valid string.
#[no_mangle]
pub unsafe extern "C" fn didiv_aggregate_json(
    ds: *const DidivDataset,
    kind: *const c_char,
    lead: i64,
    max_lead: i64,
    cohort: i64,
    period: i64,
    include_flagged: c_int,
    tau: f64,
    min_cell: c_int,
) -> *mut c_char {
    let Ok((table, cohorts)) = with_cohorts(ds) else {
        return std::ptr::null_mut();
    };
    let Ok(kind) = str_arg(kind, "kind") else {
        return std::ptr::null_mut();
    };
    let kind = match kind {
        "es" => AggregationKind::EventStudy { lead },
        "es-bal" => AggregationKind::EventStudyBalanced { lead, max_lead },
        "sel" => AggregationKind::Selective { cohort },
        "cal" => AggregationKind::Calendar { period },
        "cal-cumm" => AggregationKind::CalendarCumulative { period },
        "overall-w" => AggregationKind::OverallWeighted,
        "overall-sel" => AggregationKind::OverallSelective,
        other => {
            set_error(&format!("unknown aggregation kind `{other}`"));
            return std::ptr::null_mut();
        }
    };
    let opts = EstimateOptions {
        tau,
        min_cell_per_group: min_cell.max(0) as usize,
    };
    let result = (|| -> didiv_core::error::Result<String> {
        let cells = estimate_cells(table, cohorts, &opts)?;
        let caets = caet_estimates(&cells, table.arity() == 1);
        let agg = aggregate(kind, &cells, &caets, cohorts, include_flagged != 0)?;
        Ok(agg.summary_json().to_string())
    })();
    match result {
        Ok(s) => to_c_string(s),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Two-way fixed-effects IV fit as JSON (with a bootstrap SE when
/// `boot_reps > 0`), or null.
///
/// # Safety
/// `ds` must be a valid handle with cohorts derived.
#[no_mangle]
pub unsafe extern "C" fn didiv_twfeiv_json(
    ds: *const DidivDataset,
    tau: f64,
    boot_reps: c_int,
    seed: u64,
) -> *mut c_char {
    let Ok((table, cohorts)) = with_cohorts(ds) else {
        return std::ptr::null_mut();
    };
    let opts = TwfeivOptions { tau };
    let result = (|| -> didiv_core::error::Result<String> {
        let fit = estimate_twfeiv(table, cohorts, &opts)?;
        let mut out = fit.summary_json();
        if boot_reps > 0 {
            let boot = bootstrap_twfeiv_se(table, cohorts, &opts, boot_reps as usize, seed)?;
            out["bootstrap_se"] = serde_json::json!(boot.se);
            out["bootstrap_reps"] = serde_json::json!(boot.reps);
        }
        Ok(out.to_string())
    })();
    match result {
        Ok(s) => to_c_string(s),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Decompose the TWFEIV coefficient for a two-cohort layout. Pass
/// `use_default_base != 0` to use the early cohort's last pre-exposure
/// period. Returns JSON or null.
///
/// # Safety
/// `ds` must be a valid handle with cohorts derived.
#[no_mangle]
pub unsafe extern "C" fn didiv_decompose_json(
    ds: *const DidivDataset,
    tau: f64,
    base: i64,
    use_default_base: c_int,
) -> *mut c_char {
    let Ok((table, cohorts)) = with_cohorts(ds) else {
        return std::ptr::null_mut();
    };
    let opts = TwfeivOptions { tau };
    let base = if use_default_base != 0 { None } else { Some(base) };
    match decompose_twfeiv(table, cohorts, base, &opts) {
        Ok(report) => to_c_string(report.summary_json().to_string()),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Placebo pre-trend tests as JSON, or null.
///
/// # Safety
/// `ds` must be a valid handle with cohorts derived.
#[no_mangle]
pub unsafe extern "C" fn didiv_pretrend_json(
    ds: *const DidivDataset,
    max_lead: c_int,
) -> *mut c_char {
    let Ok((table, cohorts)) = with_cohorts(ds) else {
        return std::ptr::null_mut();
    };
    if max_lead < 2 {
        set_error("max_lead must be at least 2");
        return std::ptr::null_mut();
    }
    match pretrend_test(table, cohorts, max_lead as usize) {
        Ok(result) => to_c_string(result.summary_json().to_string()),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Draw a sample from a spec (TOML text) and write `data.csv`/`audit.csv`
/// into `out_dir`.
///
/// # Safety
/// `spec_toml` and `out_dir` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn didiv_simulate_csv(
    spec_toml: *const c_char,
    n: u64,
    seed: u64,
    mode: c_int,
    out_dir: *const c_char,
) -> DidivStatus {
    let Ok(spec_text) = str_arg(spec_toml, "spec_toml") else {
        return DidivStatus::InvalidArgument;
    };
    let Ok(out_dir) = str_arg(out_dir, "out_dir") else {
        return DidivStatus::InvalidArgument;
    };
    let Ok(mode) = mode_of(mode) else {
        return DidivStatus::InvalidArgument;
    };
    let result = (|| -> didiv_core::error::Result<()> {
        let spec = sim::DgpSpec::from_toml(spec_text)?;
        let data = sim::generate(&spec, n as usize, seed, mode)?;
        std::fs::create_dir_all(out_dir)?;
        let with_cohort = data.table.has_supplied_cohorts();
        let mut csv = String::from("unit,time,y,d,z");
        if with_cohort {
            csv.push_str(",cohort");
        }
        csv.push('\n');
        for u in 0..data.table.n_units() as u32 {
            for r in data.table.rows_of(u) {
                csv.push_str(&format!(
                    "{},{},{},{},{}",
                    data.table.unit_name(u),
                    r.time,
                    r.y,
                    r.d,
                    r.z
                ));
                if with_cohort {
                    csv.push_str(&format!(",{}", data.table.supplied_cohort(u).unwrap()));
                }
                csv.push('\n');
            }
        }
        std::fs::write(Path::new(out_dir).join("data.csv"), csv)?;
        let mut audit = String::from("unit,cohort,type\n");
        for a in &data.audit {
            audit.push_str(&format!("{},{},{}\n", a.unit, a.cohort, a.type_label));
        }
        std::fs::write(Path::new(out_dir).join("audit.csv"), audit)?;
        Ok(())
    })();
    match result {
        Ok(()) => DidivStatus::Ok,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Exact population estimands of a spec (TOML text) as JSON, or null.
///
/// # Safety
/// `spec_toml` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn didiv_oracle_json(spec_toml: *const c_char) -> *mut c_char {
    let Ok(spec_text) = str_arg(spec_toml, "spec_toml") else {
        return std::ptr::null_mut();
    };
    let result = (|| -> didiv_core::error::Result<String> {
        let spec = sim::DgpSpec::from_toml(spec_text)?;
        let values = sim::population_values(&spec)?;
        Ok(serde_json::to_string(&values)?)
    })();
    match result {
        Ok(s) => to_c_string(s),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}
