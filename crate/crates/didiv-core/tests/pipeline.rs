//! Estimator-versus-oracle checks on simulated draws, plus CLI round trips.

mod common;

use didiv_core::aggregate::{aggregate, caet_estimates, AggregationKind};
use didiv_core::data::{derive_cohorts, Cohort, Mode, ObservationTable, RawRecord, UnexposedRule};
use didiv_core::sim::{self, DgpSpec, TwoPeriodRandomOptions};
use didiv_core::sts::{build_cells, estimate_cell_panel, estimate_cell_rcs, estimate_cell_triple, estimate_cells, EstimateOptions};
use didiv_core::wald::{wald_did_panel, wald_did_rcs, GroupSelector, StratumSplit};
use didiv_core::DEFAULT_TAU;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn exposed() -> GroupSelector {
    GroupSelector::Cohort(Cohort::At(1))
}

fn never() -> GroupSelector {
    GroupSelector::never()
}

/// Monte Carlo mean of the sample Wald-DID over panel draws.
fn mc_wald_panel(spec: &DgpSpec, n: usize, reps: u64, seed: u64) -> (f64, f64) {
    let mut vals = Vec::with_capacity(reps as usize);
    for r in 0..reps {
        let data = sim::generate(spec, n, seed.wrapping_add(r), Mode::Panel).unwrap();
        let w = wald_did_panel(&data.table, &exposed(), &never(), 0, 1, DEFAULT_TAU).unwrap();
        vals.push(w.theta);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    (mean, (var / vals.len() as f64).sqrt())
}

#[test]
fn sample_wald_converges_to_population_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(311);
    let spec_inner = sim::random_two_period(&mut rng, &TwoPeriodRandomOptions::default());
    let oracle = didiv_core::sim::oracle::two_period_oracle(&spec_inner).unwrap();
    let spec = DgpSpec::TwoPeriod(spec_inner);
    let (mean, se) = mc_wald_panel(&spec, 8000, 60, 9000);
    assert!(
        (mean - oracle.latet.unwrap()).abs() < 3.0 * se,
        "mc mean {mean} vs oracle {} (se {se})",
        oracle.latet.unwrap()
    );
}

#[test]
fn rcs_split_matches_panel_population() {
    // The same population, sampled as independent period cross sections.
    let mut rng = ChaCha8Rng::seed_from_u64(313);
    let spec_inner = sim::random_two_period(&mut rng, &TwoPeriodRandomOptions::default());
    let oracle = didiv_core::sim::oracle::two_period_oracle(&spec_inner).unwrap();
    let spec = DgpSpec::TwoPeriod(spec_inner);

    let mut vals = Vec::new();
    for r in 0..40u64 {
        let data = sim::generate(&spec, 20000, 500 + r, Mode::RepeatedCrossSection).unwrap();
        let w = wald_did_rcs(&data.table, &exposed(), &never(), 0, 1, DEFAULT_TAU).unwrap();
        vals.push(w.theta);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    let se = (var / vals.len() as f64).sqrt();
    assert!(
        (mean - oracle.latet.unwrap()).abs() < 3.0 * se,
        "rcs mean {mean} vs oracle {} (se {se})",
        oracle.latet.unwrap()
    );
}

#[test]
fn triple_estimator_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(317);
    let spec_inner = sim::random_triple(
        &mut rng,
        &sim::TripleRandomOptions {
            noise_sd: 1.0,
            common_treatment_gap: 0.05,
            common_outcome_gap: 0.4,
        },
    );
    let oracle = didiv_core::sim::oracle::triple_oracle(&spec_inner).unwrap();
    // Stratum B has no compliers, so the triple contrast identifies the
    // stratum-A complier effect.
    assert!((oracle.theta - oracle.acrt_a).abs() < 1e-10);
    let spec = DgpSpec::Triple(spec_inner);

    let mut vals = Vec::new();
    for r in 0..30u64 {
        let data = sim::generate(&spec, 20000, 700 + r, Mode::Panel).unwrap();
        let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
        let cells = build_cells(&data.table, &cohorts).unwrap();
        let split = StratumSplit { a: "A".into(), b: "B".into() };
        let est = estimate_cell_triple(
            &data.table,
            &cohorts,
            &cells[0],
            &split,
            &EstimateOptions::default(),
        )
        .unwrap();
        vals.push(est.clatt_hat);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    let se = (var / vals.len() as f64).sqrt();
    assert!(
        (mean - oracle.theta).abs() < 3.0 * se,
        "triple mean {mean} vs oracle {} (se {se})",
        oracle.theta
    );
}

#[test]
fn triple_collapses_exactly_when_b_is_silent() {
    // Construct a panel where stratum B contributes exactly zero DIDs.
    let mut records = Vec::new();
    let mut k = 0;
    let mk = |k: i32, t: i64, y: f64, d: f64, z: u8, s: &str| RawRecord {
        unit: format!("u{k:03}-{s}"),
        time: t,
        y,
        d,
        z,
        cohort: None,
        stratum: Some(s.into()),
    };
    for (exposed_unit, count) in [(true, 6), (false, 7)] {
        for _ in 0..count {
            k += 1;
            for t in 0..2i64 {
                let z = (exposed_unit && t == 1) as u8;
                let y = 0.5 * t as f64 + 0.1 * k as f64 + 2.5 * z as f64;
                records.push(mk(k, t, y, z as f64, z, "A"));
            }
        }
    }
    // B stratum: identical flat paths in both groups (zero DID in Y and D).
    for (exposed_unit, count) in [(true, 5), (false, 5)] {
        for _ in 0..count {
            k += 1;
            for t in 0..2i64 {
                let z = (exposed_unit && t == 1) as u8;
                records.push(mk(k, t, 4.0 + 0.5 * t as f64, 1.0, z, "B"));
            }
        }
    }
    let table = ObservationTable::from_records(Mode::Panel, records).unwrap();
    let cohorts = derive_cohorts(&table, UnexposedRule::NeverExposed).unwrap();
    let cells = build_cells(&table, &cohorts).unwrap();
    let split = StratumSplit { a: "A".into(), b: "B".into() };
    let triple = estimate_cell_triple(&table, &cohorts, &cells[0], &split, &EstimateOptions::default()).unwrap();

    // A-stratum-only panel estimate.
    let a_units: std::collections::BTreeSet<String> = (0..table.n_units() as u32)
        .filter(|&u| table.stratum_of(u) == Some("A") && table.exposure_of(u) == Cohort::At(1))
        .map(|u| table.unit_name(u).to_string())
        .collect();
    let u_units: std::collections::BTreeSet<String> = (0..table.n_units() as u32)
        .filter(|&u| table.stratum_of(u) == Some("A") && table.exposure_of(u) == Cohort::Never)
        .map(|u| table.unit_name(u).to_string())
        .collect();
    let two = wald_did_panel(
        &table,
        &GroupSelector::Units(a_units),
        &GroupSelector::Units(u_units),
        0,
        1,
        DEFAULT_TAU,
    )
    .unwrap();
    assert!(
        (triple.clatt_hat - two.theta).abs() < 1e-12,
        "triple {} vs a-only {}",
        triple.clatt_hat,
        two.theta
    );
}

#[test]
fn broken_outcome_trend_bias_matches_oracle_gap() {
    // Breaking only the outcome-trend assumption shifts the sample Wald-DID
    // by exactly the oracle's identification gap.
    let mut rng = ChaCha8Rng::seed_from_u64(331);
    let opts = TwoPeriodRandomOptions {
        satisfy_pt_outcome: false,
        ..Default::default()
    };
    let spec_inner = sim::random_two_period(&mut rng, &opts);
    let oracle = didiv_core::sim::oracle::two_period_oracle(&spec_inner).unwrap();
    let gap = oracle.gaps.outcome;
    assert!(gap.abs() > 0.5);
    let biased_target = oracle.latet.unwrap() + gap / oracle.complier_mass;
    assert!((oracle.wald_did - biased_target).abs() < 1e-10);

    let spec = DgpSpec::TwoPeriod(spec_inner);
    let (mean, se) = mc_wald_panel(&spec, 8000, 60, 11000);
    assert!(
        (mean - oracle.wald_did).abs() < 3.0 * se,
        "biased wald mean {mean} vs population {} (se {se})",
        oracle.wald_did
    );
}

#[test]
fn null_effect_cell_is_centered() {
    // Nonzero first stage, zero outcome effect.
    use didiv_core::sim::{GroupLaw, TwoPeriodSpec, TypeLaw, UnitType, ZResponse, TResponse};
    let means = vec![[1.0, 1.4], [1.0, 1.4]]; // treatment moves nothing
    let mk = |ty, p: f64| TypeLaw::from_unit_type(ty, p, means.clone());
    let spec = DgpSpec::TwoPeriod(TwoPeriodSpec {
        arity: 1,
        exposed_share: 0.5,
        unexposed: GroupLaw {
            types: vec![mk(UnitType::new(ZResponse::NeverTaker, TResponse::NeverTaker), 1.0)],
        },
        exposed: GroupLaw {
            types: vec![
                mk(UnitType::new(ZResponse::Complier, TResponse::NeverTaker), 0.4),
                mk(UnitType::new(ZResponse::NeverTaker, TResponse::NeverTaker), 0.6),
            ],
        },
        period_shocks: [0.0, 0.2],
        noise_sd: 1.0,
        monotone: true,
        pt_treatment: true,
        pt_outcome: true,
    });
    let data = sim::generate(&spec, 5000, 77, Mode::Panel).unwrap();
    let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
    let cells = estimate_cells(&data.table, &cohorts, &EstimateOptions::default()).unwrap();
    assert_eq!(cells.len(), 1);
    let c = &cells[0];
    assert!(c.se > 0.0);
    assert!(c.clatt_hat.abs() < 4.0 * c.se, "clatt {} se {}", c.clatt_hat, c.se);
}

#[test]
fn order_preserving_relabel_is_bit_identical() {
    let spec = sim::clatt_linear_spec(1.0);
    let data = sim::generate(&spec, 2000, 55, Mode::Panel).unwrap();
    let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
    let cells = estimate_cells(&data.table, &cohorts, &EstimateOptions::default()).unwrap();

    // Rename units with an order-preserving map (fixed-width prefix).
    let mut renamed = Vec::new();
    for u in 0..data.table.n_units() as u32 {
        for r in data.table.rows_of(u) {
            renamed.push(RawRecord {
                unit: format!("x-{}", data.table.unit_name(u)),
                time: r.time,
                y: r.y,
                d: r.d,
                z: r.z,
                cohort: None,
                stratum: None,
            });
        }
    }
    let table2 = ObservationTable::from_records(Mode::Panel, renamed).unwrap();
    let cohorts2 = derive_cohorts(&table2, UnexposedRule::NeverExposed).unwrap();
    let cells2 = estimate_cells(&table2, &cohorts2, &EstimateOptions::default()).unwrap();
    assert_eq!(cells.len(), cells2.len());
    for (a, b) in cells.iter().zip(&cells2) {
        assert_eq!(a.clatt_hat.to_bits(), b.clatt_hat.to_bits());
        assert_eq!(a.se.to_bits(), b.se.to_bits());
    }
}

#[test]
fn generator_faithfulness_at_scale() {
    for (name, spec) in [
        ("fig1", sim::fig1_spec()),
        ("staggered", sim::clatt_linear_spec(1.0)),
        ("bias", sim::twfeiv_bias_spec(0.5)),
    ] {
        let t_min = match &spec {
            DgpSpec::Staggered(s) => s.t_min,
            _ => 0,
        };
        let data = sim::generate(&spec, 20000, 99, Mode::Panel).unwrap();
        assert_eq!(sim::audit_contradictions(&data, t_min), 0, "{name}");
    }
}

#[test]
fn rcs_cell_estimator_matches_panel_truth() {
    let spec = sim::clatt_linear_spec(0.8);
    let mut vals = Vec::new();
    for r in 0..30u64 {
        let data = sim::generate(&spec, 30000, 2000 + r, Mode::RepeatedCrossSection).unwrap();
        let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
        let cells = build_cells(&data.table, &cohorts).unwrap();
        let cell = cells.iter().find(|c| c.cohort == 2 && c.rel == 1).unwrap();
        let est = estimate_cell_rcs(&data.table, &cohorts, cell, &EstimateOptions::default()).unwrap();
        vals.push(est.clatt_hat);
    }
    let truth = 1.5; // 1 + 0.5 * 1
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    let se = (var / vals.len() as f64).sqrt();
    assert!((mean - truth).abs() < 3.0 * se, "mean {mean} truth {truth} se {se}");
}

#[test]
fn panel_cell_estimates_match_2sls_oracle_spotcheck() {
    let spec = sim::clatt_linear_spec(1.0);
    let data = sim::generate(&spec, 1500, 123, Mode::Panel).unwrap();
    let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
    for cell in build_cells(&data.table, &cohorts).unwrap() {
        let est = estimate_cell_panel(&data.table, &cohorts, &cell, &EstimateOptions::default()).unwrap();
        let iv = common::cell_2sls_coefficient(&data.table, &cohorts, &cell).unwrap();
        assert!(
            (est.clatt_hat - iv).abs() < 1e-10,
            "cell ({}, {}): {} vs {}",
            cell.cohort,
            cell.rel,
            est.clatt_hat,
            iv
        );
    }
}

#[test]
fn aggregate_kinds_behave_on_simulated_draw() {
    let spec = sim::clatt_linear_spec(1.0);
    let data = sim::generate(&spec, 12000, 321, Mode::Panel).unwrap();
    let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
    let cells = estimate_cells(&data.table, &cohorts, &EstimateOptions::default()).unwrap();
    let caets = caet_estimates(&cells, true);
    // Population: CLATT(e, l) = 1 + 0.5 l with equal complier shares, so
    // the event-study aggregate at lead l is 1 + 0.5 l.
    for lead in 0..=1i64 {
        let agg = aggregate(
            AggregationKind::EventStudy { lead },
            &cells,
            &caets,
            &cohorts,
            false,
        )
        .unwrap();
        let truth = 1.0 + 0.5 * lead as f64;
        assert!(
            (agg.theta_hat - truth).abs() < 4.0 * agg.se,
            "lead {lead}: {} vs {truth} (se {})",
            agg.theta_hat,
            agg.se
        );
    }
}

#[test]
fn triple_cell_estimates_match_2sls_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(337);
    let spec_inner = sim::random_triple(&mut rng, &sim::TripleRandomOptions::default());
    let spec = DgpSpec::Triple(spec_inner);
    for (mode, n, seed) in [
        (Mode::Panel, 800, 11u64),
        (Mode::RepeatedCrossSection, 2400, 13),
    ] {
        let data = sim::generate(&spec, n, seed, mode).unwrap();
        let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
        let split = StratumSplit { a: "A".into(), b: "B".into() };
        for cell in build_cells(&data.table, &cohorts).unwrap() {
            let est = estimate_cell_triple(
                &data.table,
                &cohorts,
                &cell,
                &split,
                &EstimateOptions::default(),
            )
            .unwrap();
            let iv = common::cell_2sls_triple_coefficient(&data.table, &cohorts, &cell, "A")
                .unwrap();
            assert!(
                (est.clatt_hat - iv).abs() < 1e-10,
                "{mode:?}: formulas {} vs 2sls {}",
                est.clatt_hat,
                iv
            );
        }
    }
}
