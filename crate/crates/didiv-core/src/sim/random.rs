//! Randomized and named spec builders.
//!
//! The randomized builders draw heterogeneous populations and then enforce
//! (or deliberately break) the identifying assumptions by construction:
//!
//! - parallel trends in the treatment is imposed by transferring type mass
//!   within an instrument-response class, which leaves the first-stage
//!   composition free while pinning the never-exposed treatment trend;
//! - parallel trends in the outcome is imposed by a single additive shift of
//!   the exposed group's period-1 means, which changes no treatment-effect
//!   contrast.
//!
//! Both constructions are exact up to float rounding, so identification
//! identities can be asserted to 1e-12 against the enumeration oracle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Cohort;
use crate::sim::spec::{
    CohortPath, CohortShare, CohortValue, DgpSpec, GroupLaw, StaggeredSpec, StratumLaw,
    TripleSpec, TwoPeriodSpec, TypeLaw,
};
use crate::sim::types::{TResponse, UnitType, ZResponse};

/// Binary monotone types in a fixed order. Indices are relied on by the
/// trend-transfer helper below.
fn monotone_order() -> [UnitType; 6] {
    use TResponse as T;
    use ZResponse as Z;
    [
        UnitType::new(Z::NeverTaker, T::NeverTaker),  // 0: trend  0
        UnitType::new(Z::NeverTaker, T::Defier),      // 1: trend -1
        UnitType::new(Z::AlwaysTaker, T::AlwaysTaker), // 2: trend  0
        UnitType::new(Z::AlwaysTaker, T::Complier),   // 3: trend +1
        UnitType::new(Z::Complier, T::NeverTaker),    // 4: trend  0
        UnitType::new(Z::Complier, T::Defier),        // 5: trend -1
    ]
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().ln().max(1e-9)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Never-exposed treatment trend implied by binary type masses in
/// `monotone_order`.
fn time_trend(probs: &[f64; 6]) -> f64 {
    probs[3] - probs[1] - probs[5]
}

/// Adjust `probs` to hit the target treatment trend exactly, transferring
/// mass only within an instrument-response class. The reachable range is
/// `[-(p_NT + p_CM), p_AT]`, which always contains zero.
fn set_time_trend(probs: &mut [f64; 6], target: f64) {
    // Raising pairs: source -> sink adds the moved mass to the trend.
    let raise: [(usize, usize); 3] = [(5, 4), (1, 0), (2, 3)];
    let lower: [(usize, usize); 3] = [(4, 5), (0, 1), (3, 2)];
    let mut need = target - time_trend(probs);
    let pairs = if need >= 0.0 { raise } else { lower };
    let mut budget = need.abs();
    for (src, dst) in pairs {
        if budget <= 0.0 {
            break;
        }
        let m = budget.min(probs[src]);
        probs[src] -= m;
        probs[dst] += m;
        budget -= m;
    }
    // One corrective pass against residual float drift.
    need = target - time_trend(probs);
    if need != 0.0 {
        let pairs = if need >= 0.0 { raise } else { lower };
        let mut budget = need.abs();
        for (src, dst) in pairs {
            if budget <= 0.0 {
                break;
            }
            let m = budget.min(probs[src]);
            probs[src] -= m;
            probs[dst] += m;
            budget -= m;
        }
    }
}

fn reachable(probs: &[f64; 6]) -> (f64, f64) {
    let cur = time_trend(probs);
    (cur - (probs[4] + probs[0] + probs[3]), cur + (probs[5] + probs[1] + probs[2]))
}

fn random_means(rng: &mut ChaCha8Rng, arity: u32) -> Vec<[f64; 2]> {
    (0..=arity)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect()
}

/// Exposed-group never-exposed outcome trend of a group law.
fn outcome_trend(types: &[TypeLaw]) -> f64 {
    types
        .iter()
        .map(|t| t.prob * (t.means[t.d_unexposed as usize][1] - t.means[t.d0 as usize][0]))
        .sum()
}

/// Options for the randomized two-period builder.
#[derive(Debug, Clone)]
pub struct TwoPeriodRandomOptions {
    pub arity: u32,
    pub satisfy_pt_treatment: bool,
    pub satisfy_pt_outcome: bool,
    /// Restrict types to the fuzzy-DID admissible sets (and skip the
    /// parallel-trends machinery; the switcher decomposition does not need
    /// it).
    pub fuzzy_admissible: bool,
    pub noise_sd: f64,
}

impl Default for TwoPeriodRandomOptions {
    fn default() -> Self {
        Self {
            arity: 1,
            satisfy_pt_treatment: true,
            satisfy_pt_outcome: true,
            fuzzy_admissible: false,
            noise_sd: 1.0,
        }
    }
}

/// Draw a randomized two-period spec per the options.
pub fn random_two_period(rng: &mut ChaCha8Rng, opts: &TwoPeriodRandomOptions) -> TwoPeriodSpec {
    let mut spec = if opts.fuzzy_admissible {
        random_fuzzy_admissible(rng, opts.noise_sd)
    } else if opts.arity == 1 {
        random_binary(rng, opts)
    } else {
        random_ordered(rng, opts)
    };
    // Record the claims implied by the realized gaps.
    let gaps = crate::sim::oracle::two_period_gaps(&spec);
    spec.pt_treatment = gaps.treatment.abs() <= 1e-9;
    spec.pt_outcome = gaps.outcome.abs() <= 1e-9;
    spec
}

fn random_binary(rng: &mut ChaCha8Rng, opts: &TwoPeriodRandomOptions) -> TwoPeriodSpec {
    let order = monotone_order();
    let mut group_probs = [[0.0f64; 6]; 2];
    for g in &mut group_probs {
        // Draw masses and guarantee a complier share of at least 0.15 by
        // mixing with a point mass on CM&NT.
        let raw = dirichlet(rng, 6);
        for (i, p) in raw.iter().enumerate() {
            g[i] = 0.85 * p;
        }
        g[4] += 0.15;
    }
    if opts.satisfy_pt_treatment {
        let (lo, hi) = reachable(&group_probs[1]);
        let target = time_trend(&group_probs[0]).clamp(lo, hi);
        set_time_trend(&mut group_probs[1], target);
        set_time_trend(&mut group_probs[0], target);
    }

    let mut build = |probs: &[f64; 6]| -> GroupLaw {
        GroupLaw {
            types: order
                .iter()
                .zip(probs)
                .map(|(ty, &p)| TypeLaw::from_unit_type(*ty, p, random_means(rng, 1)))
                .collect(),
        }
    };
    let unexposed = build(&group_probs[0]);
    let mut exposed = build(&group_probs[1]);

    align_outcome_trend(&unexposed, &mut exposed, rng, opts.satisfy_pt_outcome);

    TwoPeriodSpec {
        arity: 1,
        exposed_share: rng.random_range(0.3..0.7),
        unexposed,
        exposed,
        period_shocks: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        noise_sd: opts.noise_sd,
        monotone: true,
        pt_treatment: false,
        pt_outcome: false,
    }
}

/// Shift the exposed group's period-1 means so both groups share the same
/// never-exposed outcome trend (or deliberately separate them).
fn align_outcome_trend(
    unexposed: &GroupLaw,
    exposed: &mut GroupLaw,
    rng: &mut ChaCha8Rng,
    satisfy: bool,
) {
    let mut shift = outcome_trend(&unexposed.types) - outcome_trend(&exposed.types);
    if !satisfy {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        shift += sign * rng.random_range(0.7..1.7);
    }
    for ty in &mut exposed.types {
        for m in &mut ty.means {
            m[1] += shift;
        }
    }
}

fn random_ordered(rng: &mut ChaCha8Rng, opts: &TwoPeriodRandomOptions) -> TwoPeriodSpec {
    let j = opts.arity;
    // Shared (d0, d_unexposed) atoms pin the never-exposed treatment trend
    // identically in both groups; the exposed group splits each atom into
    // monotone d_exposed variants.
    let n_atoms = 4;
    let mut atoms: Vec<(u32, u32)> = vec![(0, 0)];
    while atoms.len() < n_atoms {
        let cand = (rng.random_range(0..=j), rng.random_range(0..=j));
        if !atoms.contains(&cand) {
            atoms.push(cand);
        }
    }
    let mut atom_probs = dirichlet(rng, n_atoms);
    for p in &mut atom_probs {
        *p *= 0.85;
    }
    atom_probs[0] += 0.15; // reserve complier mass on the (0, 0) atom

    let mut unexposed_types = Vec::new();
    let mut exposed_types = Vec::new();
    for (a, &(d0, du)) in atoms.iter().enumerate() {
        unexposed_types.push(TypeLaw {
            d0,
            d_unexposed: du,
            d_exposed: du,
            prob: atom_probs[a],
            means: random_means(rng, j),
        });
        // Exposed-group split into d_exposed >= du variants.
        let choices: Vec<u32> = (du..=j).collect();
        let n_var = if a == 0 {
            1
        } else {
            rng.random_range(1..=choices.len().min(2))
        };
        let mut des: Vec<u32> = Vec::new();
        while des.len() < n_var {
            let de = if a == 0 {
                rng.random_range(1..=j) // guarantee a complier step
            } else {
                choices[rng.random_range(0..choices.len())]
            };
            if !des.contains(&de) {
                des.push(de);
            }
        }
        let sub = dirichlet(rng, des.len());
        for (v, de) in des.iter().enumerate() {
            exposed_types.push(TypeLaw {
                d0,
                d_unexposed: du,
                d_exposed: *de,
                prob: atom_probs[a] * sub[v],
                means: random_means(rng, j),
            });
        }
    }
    let unexposed = GroupLaw {
        types: unexposed_types,
    };
    let mut exposed = GroupLaw {
        types: exposed_types,
    };
    align_outcome_trend(&unexposed, &mut exposed, rng, opts.satisfy_pt_outcome);

    TwoPeriodSpec {
        arity: j,
        exposed_share: rng.random_range(0.3..0.7),
        unexposed,
        exposed,
        period_shocks: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        noise_sd: opts.noise_sd,
        monotone: true,
        pt_treatment: false,
        pt_outcome: false,
    }
}

fn random_fuzzy_admissible(rng: &mut ChaCha8Rng, noise_sd: f64) -> TwoPeriodSpec {
    use TResponse as T;
    use ZResponse as Z;
    let exposed_types = [
        UnitType::new(Z::NeverTaker, T::NeverTaker),
        UnitType::new(Z::AlwaysTaker, T::AlwaysTaker),
        UnitType::new(Z::AlwaysTaker, T::Complier),
        UnitType::new(Z::Complier, T::NeverTaker),
        UnitType::new(Z::Complier, T::Defier),
    ];
    let unexposed_types = [
        UnitType::new(Z::NeverTaker, T::NeverTaker),
        UnitType::new(Z::AlwaysTaker, T::AlwaysTaker),
        UnitType::new(Z::Complier, T::NeverTaker),
    ];
    let mut e_probs = dirichlet(rng, exposed_types.len());
    for p in &mut e_probs {
        *p *= 0.8;
    }
    // Guarantee switcher mass on both components.
    e_probs[2] += 0.1; // AT^Z & CM^T
    e_probs[3] += 0.1; // CM^Z & NT^T
    let u_probs = dirichlet(rng, unexposed_types.len());

    let mk = |types: &[UnitType], probs: &[f64], rng: &mut ChaCha8Rng| GroupLaw {
        types: types
            .iter()
            .zip(probs)
            .map(|(ty, &p)| TypeLaw::from_unit_type(*ty, p, random_means(rng, 1)))
            .collect(),
    };
    TwoPeriodSpec {
        arity: 1,
        exposed_share: rng.random_range(0.3..0.7),
        unexposed: mk(&unexposed_types, &u_probs, rng),
        exposed: mk(&exposed_types, &e_probs, rng),
        period_shocks: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        noise_sd,
        monotone: true,
        pt_treatment: false,
        pt_outcome: false,
    }
}

/// Options for the randomized triple builder. Stratum B carries no compliers
/// and both strata share the same (possibly nonzero) trend gaps, so the
/// triple contrast identifies the stratum-A complier effect.
#[derive(Debug, Clone)]
pub struct TripleRandomOptions {
    pub noise_sd: f64,
    /// Common treatment-trend gap between exposed and unexposed groups.
    pub common_treatment_gap: f64,
    /// Common outcome-trend gap between exposed and unexposed groups.
    pub common_outcome_gap: f64,
}

impl Default for TripleRandomOptions {
    fn default() -> Self {
        Self {
            noise_sd: 1.0,
            common_treatment_gap: 0.0,
            common_outcome_gap: 0.0,
        }
    }
}

pub fn random_triple(rng: &mut ChaCha8Rng, opts: &TripleRandomOptions) -> TripleSpec {
    let order = monotone_order();
    let build_stratum = |rng: &mut ChaCha8Rng, with_compliers: bool| -> TwoPeriodSpec {
        let mut probs = [[0.0f64; 6]; 2];
        for (gi, g) in probs.iter_mut().enumerate() {
            let raw = dirichlet(rng, 6);
            for (i, p) in raw.iter().enumerate() {
                g[i] = 0.85 * p;
            }
            if with_compliers && gi == 1 {
                g[4] += 0.15;
            } else {
                // Move complier mass onto never-takers: no first stage.
                g[0] += 0.15 + g[4] + g[5];
                g[4] = 0.0;
                g[5] = 0.0;
            }
        }
        // Both strata share a common treatment-trend gap.
        let (lo, hi) = reachable(&probs[1]);
        let target_u = time_trend(&probs[0]);
        let target_e = (target_u + opts.common_treatment_gap).clamp(lo, hi);
        set_time_trend(&mut probs[1], target_e);
        set_time_trend(&mut probs[0], target_e - opts.common_treatment_gap);

        let build = |p: &[f64; 6], rng: &mut ChaCha8Rng| GroupLaw {
            types: order
                .iter()
                .zip(p)
                .map(|(ty, &q)| TypeLaw::from_unit_type(*ty, q, random_means(rng, 1)))
                .collect(),
        };
        let unexposed = build(&probs[0], rng);
        let mut exposed = build(&probs[1], rng);
        let shift =
            outcome_trend(&unexposed.types) + opts.common_outcome_gap - outcome_trend(&exposed.types);
        for ty in &mut exposed.types {
            for m in &mut ty.means {
                m[1] += shift;
            }
        }
        TwoPeriodSpec {
            arity: 1,
            exposed_share: rng.random_range(0.35..0.65),
            unexposed,
            exposed,
            period_shocks: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            noise_sd: opts.noise_sd,
            monotone: true,
            pt_treatment: opts.common_treatment_gap.abs() <= 1e-9,
            pt_outcome: opts.common_outcome_gap.abs() <= 1e-9,
        }
    };
    TripleSpec {
        share_a: rng.random_range(0.4..0.6),
        a: build_stratum(rng, true),
        b: build_stratum(rng, false),
    }
}

/// Options for the randomized staggered builder.
#[derive(Debug, Clone)]
pub struct StaggeredRandomOptions {
    pub t_min: i64,
    pub t_max: i64,
    pub cohort_dates: Vec<i64>,
    pub include_never: bool,
    pub background_strata: usize,
    /// Extra outcome-trend slope on the earliest cohort (breaks parallel
    /// trends in the outcome).
    pub outcome_trend_break: f64,
    pub noise_sd: f64,
}

impl Default for StaggeredRandomOptions {
    fn default() -> Self {
        Self {
            t_min: 1,
            t_max: 5,
            cohort_dates: vec![2, 3],
            include_never: true,
            background_strata: 3,
            outcome_trend_break: 0.0,
            noise_sd: 1.0,
        }
    }
}

pub fn random_staggered(rng: &mut ChaCha8Rng, opts: &StaggeredRandomOptions) -> StaggeredSpec {
    let span = (opts.t_max - opts.t_min + 1) as usize;
    let n_groups = opts.cohort_dates.len() + opts.include_never as usize;
    let mut shares = dirichlet(rng, n_groups);
    for s in &mut shares {
        *s = 0.15 + 0.85 * *s / 1.0;
    }
    let total: f64 = shares.iter().sum();
    for s in &mut shares {
        *s /= total;
    }
    let mut cohorts: Vec<CohortShare> = opts
        .cohort_dates
        .iter()
        .enumerate()
        .map(|(i, &e)| CohortShare {
            cohort: Cohort::At(e),
            share: shares[i],
        })
        .collect();
    if opts.include_never {
        cohorts.push(CohortShare {
            cohort: Cohort::Never,
            share: shares[n_groups - 1],
        });
    }

    let mut strata: Vec<StratumLaw> = Vec::new();
    let mean_pair = |rng: &mut ChaCha8Rng, effect_floor: f64| -> Vec<[f64; 2]> {
        (0..span)
            .map(|_| {
                let base = rng.random_range(-1.0..1.0);
                let effect = effect_floor + rng.random_range(0.0..2.0);
                [base, base + effect]
            })
            .collect()
    };

    // Dedicated complier stratum per estimated cohort: guarantees every cell
    // a first stage bounded away from zero.
    for &e in &opts.cohort_dates {
        let path: Vec<u8> = (opts.t_min..=opts.t_max).map(|t| (t >= e) as u8).collect();
        strata.push(StratumLaw {
            prob: rng.random_range(0.12..0.2),
            base_path: vec![0; span],
            exposed_extra: vec![CohortPath { cohort: e, path }],
            base_path_override: Vec::new(),
            means: mean_pair(rng, 0.5),
        });
    }
    // A shared complier stratum: complier sets overlap across cohorts and
    // periods.
    strata.push(StratumLaw {
        prob: rng.random_range(0.08..0.15),
        base_path: vec![0; span],
        exposed_extra: opts
            .cohort_dates
            .iter()
            .map(|&e| CohortPath {
                cohort: e,
                path: (opts.t_min..=opts.t_max).map(|t| (t >= e) as u8).collect(),
            })
            .collect(),
        base_path_override: Vec::new(),
        means: mean_pair(rng, 0.5),
    });
    // Background strata: never-exposed adoption trends without instrument
    // response.
    for _ in 0..opts.background_strata {
        let switch = rng.random_range(opts.t_min..=opts.t_max + 2);
        let base: Vec<u8> = (opts.t_min..=opts.t_max).map(|t| (t >= switch) as u8).collect();
        strata.push(StratumLaw {
            prob: rng.random_range(0.05..0.2),
            base_path: base,
            exposed_extra: Vec::new(),
            base_path_override: Vec::new(),
            means: mean_pair(rng, 0.0),
        });
    }
    let total: f64 = strata.iter().map(|s| s.prob).sum();
    for s in &mut strata {
        s.prob /= total;
    }

    let cohort_intercepts: Vec<CohortValue> = cohorts
        .iter()
        .map(|c| CohortValue {
            cohort: c.cohort,
            value: rng.random_range(-1.0..1.0),
        })
        .collect();
    let cohort_trends: Vec<CohortValue> = if opts.outcome_trend_break != 0.0 {
        cohorts
            .iter()
            .map(|c| CohortValue {
                cohort: c.cohort,
                value: if c.cohort == Cohort::At(opts.cohort_dates[0]) {
                    opts.outcome_trend_break
                } else {
                    0.0
                },
            })
            .collect()
    } else {
        Vec::new()
    };

    StaggeredSpec {
        t_min: opts.t_min,
        t_max: opts.t_max,
        cohorts,
        strata,
        cohort_intercepts,
        cohort_trends,
        period_shocks: (0..span).map(|_| rng.random_range(-0.5..0.5)).collect(),
        noise_sd: opts.noise_sd,
        pt_treatment: true,
        pt_outcome: opts.outcome_trend_break == 0.0,
    }
}

/// The canonical illustration: instrument moves treatment by 0.2 and the
/// outcome by 2, so the complier effect is 10.
pub fn fig1_spec() -> DgpSpec {
    use TResponse as T;
    use ZResponse as Z;
    let baseline = vec![[0.0, 0.5], [10.0, 10.5]];
    let unexposed = GroupLaw {
        types: vec![TypeLaw::from_unit_type(
            UnitType::new(Z::NeverTaker, T::NeverTaker),
            1.0,
            baseline.clone(),
        )],
    };
    let exposed = GroupLaw {
        types: vec![
            TypeLaw::from_unit_type(
                UnitType::new(Z::Complier, T::NeverTaker),
                0.2,
                baseline.clone(),
            ),
            TypeLaw::from_unit_type(UnitType::new(Z::NeverTaker, T::NeverTaker), 0.8, baseline),
        ],
    };
    DgpSpec::TwoPeriod(TwoPeriodSpec {
        arity: 1,
        exposed_share: 0.5,
        unexposed,
        exposed,
        period_shocks: [0.0, 0.3],
        noise_sd: 1.0,
        monotone: true,
        pt_treatment: true,
        pt_outcome: true,
    })
}

/// Staggered design with cohorts {2, 3} and a never-exposed group; the
/// complier effect at relative period `l` is `1 + 0.5 l` and the complier
/// share is 0.4 in every cell.
pub fn clatt_linear_spec(noise_sd: f64) -> DgpSpec {
    let t_min = 1;
    let t_max = 5;
    let span = (t_max - t_min + 1) as usize;
    let mut strata = Vec::new();
    for &e in &[2i64, 3] {
        let means: Vec<[f64; 2]> = (t_min..=t_max)
            .map(|t| {
                let base = 0.2 * t as f64;
                [base, base + 1.0 + 0.5 * (t - e) as f64]
            })
            .collect();
        strata.push(StratumLaw {
            prob: 0.4,
            base_path: vec![0; span],
            exposed_extra: vec![CohortPath {
                cohort: e,
                path: (t_min..=t_max).map(|t| (t >= e) as u8).collect(),
            }],
            base_path_override: Vec::new(),
            means,
        });
    }
    strata.push(StratumLaw {
        prob: 0.2,
        base_path: vec![0; span],
        exposed_extra: Vec::new(),
        base_path_override: Vec::new(),
        means: (0..span).map(|i| [0.1 * i as f64, 1.0 + 0.1 * i as f64]).collect(),
    });
    DgpSpec::Staggered(StaggeredSpec {
        t_min,
        t_max,
        cohorts: vec![
            CohortShare {
                cohort: Cohort::At(2),
                share: 0.35,
            },
            CohortShare {
                cohort: Cohort::At(3),
                share: 0.35,
            },
            CohortShare {
                cohort: Cohort::Never,
                share: 0.3,
            },
        ],
        strata,
        cohort_intercepts: vec![
            CohortValue {
                cohort: Cohort::At(2),
                value: 0.5,
            },
            CohortValue {
                cohort: Cohort::At(3),
                value: -0.3,
            },
        ],
        cohort_trends: Vec::new(),
        period_shocks: (0..span).map(|i| 0.2 * i as f64).collect(),
        noise_sd,
        pt_treatment: true,
        pt_outcome: true,
    })
}

/// Two-cohort layout with time-increasing effects and a late-exposed
/// comparison cohort: the two-way fixed-effects IV coefficient mixes the
/// post-comparison periods in with negative weights and lands below every
/// cohort effect.
pub fn twfeiv_bias_spec(noise_sd: f64) -> DgpSpec {
    let t_min = 1;
    let t_max = 8;
    let span = (t_max - t_min + 1) as usize;
    let (early, late) = (2i64, 5i64);
    let effect = |t: i64| 1.0 + 0.8 * (t - t_min) as f64;
    let mk_means = || -> Vec<[f64; 2]> {
        (t_min..=t_max)
            .map(|t| {
                let base = 0.3 * (t - t_min) as f64;
                [base, base + effect(t)]
            })
            .collect()
    };
    let strata = vec![
        // Early-cohort compliers (share 0.6 of its cohort's first stage).
        StratumLaw {
            prob: 0.6,
            base_path: vec![0; span],
            exposed_extra: vec![CohortPath {
                cohort: early,
                path: (t_min..=t_max).map(|t| (t >= early) as u8).collect(),
            }],
            base_path_override: Vec::new(),
            means: mk_means(),
        },
        // Late-cohort compliers (share 0.2).
        StratumLaw {
            prob: 0.2,
            base_path: vec![0; span],
            exposed_extra: vec![CohortPath {
                cohort: late,
                path: (t_min..=t_max).map(|t| (t >= late) as u8).collect(),
            }],
            base_path_override: Vec::new(),
            means: mk_means(),
        },
        StratumLaw {
            prob: 0.2,
            base_path: vec![0; span],
            exposed_extra: Vec::new(),
            base_path_override: Vec::new(),
            means: mk_means(),
        },
    ];
    DgpSpec::Staggered(StaggeredSpec {
        t_min,
        t_max,
        cohorts: vec![
            CohortShare {
                cohort: Cohort::At(early),
                share: 0.5,
            },
            CohortShare {
                cohort: Cohort::At(late),
                share: 0.5,
            },
        ],
        strata,
        cohort_intercepts: vec![CohortValue {
            cohort: Cohort::At(early),
            value: 0.4,
        }],
        cohort_trends: Vec::new(),
        period_shocks: (0..span).map(|i| 0.1 * i as f64).collect(),
        noise_sd,
        pt_treatment: true,
        pt_outcome: true,
    })
}

/// Named built-in specs for the CLI.
pub fn builtin_spec(name: &str) -> Option<DgpSpec> {
    match name {
        "fig1" => Some(fig1_spec()),
        "staggered" => Some(clatt_linear_spec(1.0)),
        "twfeiv-bias" => Some(twfeiv_bias_spec(0.5)),
        _ => None,
    }
}
