//! Finite-sample generation from a spec.
//!
//! Units are drawn i.i.d. in blocks, each block seeded from `(seed, block)`
//! via independent ChaCha streams, so output is identical for any thread
//! count and platform. Hidden type labels are emitted alongside the data for
//! audit: the labels must reproduce the observed treatment and instrument
//! paths exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::{Cohort, Mode, ObservationTable, RawRecord};
use crate::error::{Error, Result};
use crate::sim::spec::{DgpSpec, StaggeredSpec, TripleSpec, TwoPeriodSpec};

const BLOCK: usize = 4096;

/// A generated dataset plus its hidden type labels.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub table: ObservationTable,
    pub audit: Vec<AuditRecord>,
}

/// Hidden per-unit ground truth.
#[derive(Debug, Clone)]
pub struct AuditRecord {
    pub unit: String,
    pub cohort: Cohort,
    pub stratum: Option<String>,
    /// Human-readable compliance label, e.g. `d0=0,du=0,de=1`.
    pub type_label: String,
    /// Expected observed treatment path implied by the label.
    pub d_path: Vec<u8>,
    /// Expected observed instrument path.
    pub z_path: Vec<u8>,
}

fn unit_name(index: usize) -> String {
    format!("u{index:08}")
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Draw a finite sample from the spec. `mode` selects panel output or a
/// repeated cross section in which every unit is observed in one random
/// period (with a cohort column carrying the group label).
pub fn generate(spec: &DgpSpec, n: usize, seed: u64, mode: Mode) -> Result<GeneratedData> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    match spec {
        DgpSpec::TwoPeriod(s) => generate_two_period(s, None, n, seed, mode),
        DgpSpec::Staggered(s) => generate_staggered(s, n, seed, mode),
        DgpSpec::Triple(s) => generate_triple(s, n, seed, mode),
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64 + 1);
    rng
}

fn generate_two_period(
    spec: &TwoPeriodSpec,
    stratum: Option<(&str, u64)>,
    n: usize,
    seed: u64,
    mode: Mode,
) -> Result<GeneratedData> {
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InfeasibleSpec(e.to_string()))?;
    let (label, stream_salt) = stratum
        .map(|(l, s)| (Some(l.to_string()), s))
        .unwrap_or((None, 0));

    let blocks: Vec<(Vec<RawRecord>, Vec<AuditRecord>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed.wrapping_add(stream_salt), b);
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let mut records = Vec::with_capacity((hi - lo) * 2);
            let mut audit = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let exposed = rng.random::<f64>() < spec.exposed_share;
                let group = if exposed {
                    &spec.exposed
                } else {
                    &spec.unexposed
                };
                let probs: Vec<f64> = group.types.iter().map(|t| t.prob).collect();
                let ty = &group.types[draw_index(&mut rng, &probs)];
                let name = match &label {
                    Some(l) => format!("{}-{}", unit_name(i), l),
                    None => unit_name(i),
                };
                let cohort = if exposed { Cohort::At(1) } else { Cohort::Never };
                let d_path = [
                    ty.d0 as u8,
                    if exposed {
                        ty.d_exposed as u8
                    } else {
                        ty.d_unexposed as u8
                    },
                ];
                let z_path = [0u8, exposed as u8];
                let rcs_period = (mode == Mode::RepeatedCrossSection)
                    .then(|| rng.random_range(0..2i64));
                for t in 0..2i64 {
                    // Keep the noise stream identical across modes.
                    let eps = if spec.noise_sd > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    if let Some(keep) = rcs_period {
                        if keep != t {
                            continue;
                        }
                    }
                    let d = d_path[t as usize];
                    records.push(RawRecord {
                        unit: name.clone(),
                        time: t,
                        y: ty.means[d as usize][t as usize] + spec.period_shocks[t as usize] + eps,
                        d: d as f64,
                        z: z_path[t as usize],
                        cohort: (mode == Mode::RepeatedCrossSection).then_some(cohort),
                        stratum: label.clone(),
                    });
                }
                audit.push(AuditRecord {
                    unit: name,
                    cohort,
                    stratum: label.clone(),
                    type_label: format!("d0={},du={},de={}", ty.d0, ty.d_unexposed, ty.d_exposed),
                    d_path: d_path.to_vec(),
                    z_path: z_path.to_vec(),
                });
            }
            (records, audit)
        })
        .collect();

    let mut records = Vec::new();
    let mut audit = Vec::new();
    for (r, a) in blocks {
        records.extend(r);
        audit.extend(a);
    }
    let arity = spec.arity;
    let table = ObservationTable::from_records(mode, records)?.with_arity(arity)?;
    Ok(GeneratedData { table, audit })
}

fn generate_staggered(
    spec: &StaggeredSpec,
    n: usize,
    seed: u64,
    mode: Mode,
) -> Result<GeneratedData> {
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InfeasibleSpec(e.to_string()))?;
    let span = spec.n_periods();
    let cohort_probs: Vec<f64> = spec.cohorts.iter().map(|c| c.share).collect();
    let strata_probs: Vec<f64> = spec.strata.iter().map(|s| s.prob).collect();

    let blocks: Vec<(Vec<RawRecord>, Vec<AuditRecord>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            let mut records = Vec::with_capacity((hi - lo) * span);
            let mut audit = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let cohort = spec.cohorts[draw_index(&mut rng, &cohort_probs)].cohort;
                let k = draw_index(&mut rng, &strata_probs);
                let stratum = &spec.strata[k];
                let name = unit_name(i);
                let rcs_period = (mode == Mode::RepeatedCrossSection)
                    .then(|| spec.t_min + rng.random_range(0..span as i64));
                let mut d_path = Vec::with_capacity(span);
                let mut z_path = Vec::with_capacity(span);
                for t in spec.t_min..=spec.t_max {
                    let tix = (t - spec.t_min) as usize;
                    let d = stratum.observed_at(cohort, t, spec.t_min);
                    let z = cohort.exposed_at(t) as u8;
                    d_path.push(d);
                    z_path.push(z);
                    let eps = if spec.noise_sd > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    if let Some(keep) = rcs_period {
                        if keep != t {
                            continue;
                        }
                    }
                    let y = stratum.means[tix][d as usize]
                        + spec.cohort_intercept(cohort)
                        + spec.cohort_trend(cohort) * tix as f64
                        + spec.period_shocks[tix]
                        + eps;
                    records.push(RawRecord {
                        unit: name.clone(),
                        time: t,
                        y,
                        d: d as f64,
                        z,
                        cohort: (mode == Mode::RepeatedCrossSection).then_some(cohort),
                        stratum: None,
                    });
                }
                audit.push(AuditRecord {
                    unit: name,
                    cohort,
                    stratum: Some(format!("k{k}")),
                    type_label: format!("stratum={k}"),
                    d_path,
                    z_path,
                });
            }
            (records, audit)
        })
        .collect();

    let mut records = Vec::new();
    let mut audit = Vec::new();
    for (r, a) in blocks {
        records.extend(r);
        audit.extend(a);
    }
    let table = ObservationTable::from_records(mode, records)?.with_arity(1)?;
    Ok(GeneratedData { table, audit })
}

fn generate_triple(spec: &TripleSpec, n: usize, seed: u64, mode: Mode) -> Result<GeneratedData> {
    // Split the sample between strata deterministically from the seed, then
    // generate each stratum as an independent 2x2 population.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let n_a = (0..n).filter(|_| rng.random::<f64>() < spec.share_a).count();
    let a = generate_two_period(&spec.a, Some(("A", 1)), n_a, seed, mode)?;
    let b = generate_two_period(&spec.b, Some(("B", 2)), n - n_a, seed, mode)?;

    let mut records = Vec::new();
    for src in [&a, &b] {
        for u in 0..src.table.n_units() as u32 {
            for r in src.table.rows_of(u) {
                records.push(RawRecord {
                    unit: src.table.unit_name(u).to_string(),
                    time: r.time,
                    y: r.y,
                    d: r.d,
                    z: r.z,
                    cohort: src.table.supplied_cohort(u),
                    stratum: src.table.stratum_of(u).map(str::to_string),
                });
            }
        }
    }
    let arity = spec.a.arity.max(spec.b.arity);
    let table = ObservationTable::from_records(mode, records)?.with_arity(arity)?;
    let mut audit = a.audit;
    audit.extend(b.audit);
    Ok(GeneratedData { table, audit })
}

/// Check that the hidden labels reproduce every observed (D, Z) value.
/// Returns the number of contradictions.
pub fn audit_contradictions(data: &GeneratedData, t_min: i64) -> usize {
    let mut bad = 0usize;
    let by_name: std::collections::BTreeMap<&str, &AuditRecord> =
        data.audit.iter().map(|a| (a.unit.as_str(), a)).collect();
    for u in 0..data.table.n_units() as u32 {
        let Some(rec) = by_name.get(data.table.unit_name(u)) else {
            bad += 1;
            continue;
        };
        for row in data.table.rows_of(u) {
            let tix = (row.time - t_min) as usize;
            if rec.d_path.get(tix).copied() != Some(row.d as u8)
                || rec.z_path.get(tix).copied() != Some(row.z)
            {
                bad += 1;
            }
        }
    }
    bad
}
