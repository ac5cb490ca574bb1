//! Command-line front end.
//!
//! Subcommands: `validate`, `estimate`, `aggregate`, `twfeiv`, `decompose`,
//! `pretrend`, `simulate`, `oracle`, `selftest`. Every run writes a
//! `run_config.json` into the output directory; re-executing with
//! `didiv --config <that file>` reproduces the outputs byte for byte.
//!
//! Exit codes: 0 success, 1 estimation error, 2 usage error. The environment
//! variable `DIDIV_THREADS` caps the worker-thread count.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::{aggregate, caet_estimates, AggregationKind};
use crate::data::{
    derive_cohorts, load_csv, validate, validate_cells, Cohort, ColumnMap, Mode,
    ObservationTable, UnexposedRule,
};
use crate::error::{Error, Result};
use crate::pretrend::pretrend_test;
use crate::sim;
use crate::sim::{DgpSpec, GeneratedData};
use crate::sts::{build_cells, estimate_cell_triple, estimate_cells, CellEstimate, EstimateOptions};
use crate::twfeiv::{bootstrap_twfeiv_se, decompose_twfeiv, estimate_twfeiv, TwfeivOptions};
use crate::wald::StratumSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Panel,
    Rcs,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Panel => Mode::Panel,
            ModeArg::Rcs => Mode::RepeatedCrossSection,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct InputArgs {
    /// Input CSV path.
    #[arg(long)]
    input: PathBuf,
    /// Column-name overrides, e.g. `unit=id,time=year,y=earnings`.
    #[arg(long, default_value = "")]
    columns: String,
    #[arg(long, value_enum, default_value = "panel")]
    mode: ModeArg,
    /// Comparison rule: `never`, `last`, or `set:1957,never`.
    #[arg(long, default_value = "never")]
    unexposed: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl InputArgs {
    fn load(&self) -> Result<(ObservationTable, crate::data::CohortMap)> {
        let columns = ColumnMap::parse_overrides(&self.columns)?;
        let table = load_csv(&self.input, &columns, self.mode.into())?;
        let rule = parse_unexposed(&self.unexposed)?;
        let cohorts = derive_cohorts(&table, rule)?;
        Ok((table, cohorts))
    }
}

fn parse_unexposed(spec: &str) -> Result<UnexposedRule> {
    match spec {
        "never" => Ok(UnexposedRule::NeverExposed),
        "last" => Ok(UnexposedRule::LastCohort),
        s if s.starts_with("set:") => {
            let mut set = BTreeSet::new();
            for item in s[4..].split(',').filter(|p| !p.is_empty()) {
                let c = Cohort::parse(item).ok_or_else(|| {
                    Error::InvalidArgument(format!("bad cohort `{item}` in --unexposed"))
                })?;
                set.insert(c);
            }
            if set.is_empty() {
                return Err(Error::InvalidArgument("empty --unexposed set".into()));
            }
            Ok(UnexposedRule::Explicit(set))
        }
        other => Err(Error::InvalidArgument(format!(
            "--unexposed must be never, last, or set:..., got `{other}`"
        ))),
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Weak-denominator threshold.
    #[arg(long, default_value_t = crate::DEFAULT_TAU)]
    tau: f64,
    /// Minimum group size per cell before flagging.
    #[arg(long, default_value_t = 2)]
    min_cell: usize,
    /// Triple-difference strata, e.g. `A,B`.
    #[arg(long)]
    triple: Option<String>,
    /// Write per-unit influence values for audit.
    #[arg(long, default_value_t = false)]
    if_dump: bool,
    /// Treat fatal validation findings as errors.
    #[arg(long, default_value_t = false)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum AggKindArg {
    Es,
    EsBal,
    Sel,
    Cal,
    CalCumm,
    OverallW,
    OverallSel,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct AggregateArgs {
    #[command(flatten)]
    estimate: EstimateArgs,
    #[arg(long, value_enum)]
    agg: AggKindArg,
    /// Relative period for es / es-bal.
    #[arg(long)]
    lead: Option<i64>,
    /// Balancing horizon for es-bal.
    #[arg(long)]
    max_lead: Option<i64>,
    /// Cohort for sel.
    #[arg(long)]
    cohort: Option<i64>,
    /// Calendar period for cal / cal-cumm.
    #[arg(long)]
    period: Option<i64>,
    /// Include flagged cells in the aggregation.
    #[arg(long, default_value_t = false)]
    include_flagged: bool,
}

impl AggregateArgs {
    fn kind(&self) -> Result<AggregationKind> {
        let need = |v: Option<i64>, what: &str| {
            v.ok_or_else(|| Error::InvalidArgument(format!("--{what} is required for this --agg")))
        };
        Ok(match self.agg {
            AggKindArg::Es => AggregationKind::EventStudy {
                lead: need(self.lead, "lead")?,
            },
            AggKindArg::EsBal => AggregationKind::EventStudyBalanced {
                lead: need(self.lead, "lead")?,
                max_lead: need(self.max_lead, "max-lead")?,
            },
            AggKindArg::Sel => AggregationKind::Selective {
                cohort: need(self.cohort, "cohort")?,
            },
            AggKindArg::Cal => AggregationKind::Calendar {
                period: need(self.period, "period")?,
            },
            AggKindArg::CalCumm => AggregationKind::CalendarCumulative {
                period: need(self.period, "period")?,
            },
            AggKindArg::OverallW => AggregationKind::OverallWeighted,
            AggKindArg::OverallSel => AggregationKind::OverallSelective,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct TwfeivArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = crate::DEFAULT_TAU)]
    tau: f64,
    /// Bootstrap replications for the SE (0 = skip).
    #[arg(long, default_value_t = 0)]
    boot_reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct DecomposeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = crate::DEFAULT_TAU)]
    tau: f64,
    /// Base period (default: the early cohort's last pre-exposure period).
    #[arg(long)]
    base: Option<i64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct PretrendArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Largest lead: tests use l in {-max_lead, ..., -2}.
    #[arg(long, default_value_t = 4)]
    max_lead: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SimulateArgs {
    /// Spec TOML path, or a built-in name: `builtin:fig1`,
    /// `builtin:staggered`, `builtin:twfeiv-bias`.
    #[arg(long)]
    dgp: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "panel")]
    mode: ModeArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct OracleArgs {
    /// Spec TOML path or built-in name.
    #[arg(long)]
    dgp: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SelftestArgs {
    #[arg(long, default_value_t = 20250810)]
    seed: u64,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Cmd {
    /// Structural validation of a dataset.
    Validate(InputArgs),
    /// Estimate every cohort-by-period effect cell.
    Estimate(EstimateArgs),
    /// Estimate cells and aggregate them into a summary parameter.
    Aggregate(AggregateArgs),
    /// Two-way fixed-effects IV coefficient.
    Twfeiv(TwfeivArgs),
    /// Decompose the TWFEIV coefficient for a two-cohort layout.
    Decompose(DecomposeArgs),
    /// Placebo tests of the parallel-trends assumptions.
    Pretrend(PretrendArgs),
    /// Draw a finite sample from a simulation spec.
    Simulate(SimulateArgs),
    /// Exact population estimands of a simulation spec.
    Oracle(OracleArgs),
    /// Run the built-in oracle-equivalence checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Parser)]
#[command(
    name = "didiv",
    version,
    about = "Instrumented difference-in-differences estimation"
)]
struct Cli {
    /// Re-execute a previously emitted run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

/// Serializable record of a run, sufficient to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    cmd: Cmd,
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Ok(threads) = std::env::var("DIDIV_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the same path; keep its
            // conventional exit codes.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cmd = match (cli.config, cli.cmd) {
        (Some(path), _) => match load_config(&path) {
            Ok(cfg) => cfg.cmd,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        (None, Some(cmd)) => cmd,
        (None, None) => {
            eprintln!("error: a subcommand or --config is required (see --help)");
            return 2;
        }
    };
    match dispatch(&cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) | Error::MissingColumn(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_run_config(dir: &Path, cmd: &Cmd) -> Result<()> {
    let cfg = RunConfig { cmd: cmd.clone() };
    write_json(dir, "run_config.json", &serde_json::to_value(&cfg)?)
}

fn resolve_spec(arg: &str) -> Result<DgpSpec> {
    if let Some(name) = arg.strip_prefix("builtin:") {
        sim::builtin_spec(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown built-in spec `{name}`")))
    } else {
        DgpSpec::from_toml(&fs::read_to_string(arg)?)
    }
}

fn dispatch(cmd: &Cmd) -> Result<i32> {
    match cmd {
        Cmd::Validate(args) => {
            let (table, cohorts) = args.load()?;
            let mut report = validate(&table, &cohorts);
            if table.mode() == Mode::Panel {
                if let Ok(cells) = build_cells(&table, &cohorts) {
                    let balance = validate_cells(&table, &cohorts, &cells);
                    report.violations.extend(balance.violations);
                }
            }
            write_run_config(&args.out, cmd)?;
            write_json(&args.out, "validation.json", &serde_json::to_value(&report)?)?;
            let fatal = report.violations.iter().filter(|v| v.fatal).count();
            println!(
                "validation: {} finding(s), {} fatal -> {}",
                report.violations.len(),
                fatal,
                args.out.join("validation.json").display()
            );
            Ok(0)
        }
        Cmd::Estimate(args) => {
            let cells = run_estimate(args, cmd)?;
            print_cells(&cells);
            Ok(0)
        }
        Cmd::Aggregate(args) => {
            let kind = args.kind()?;
            let cells = run_estimate(&args.estimate, cmd)?;
            let (_, cohorts) = args.estimate.input.load()?;
            let caets = caet_estimates(&cells, true);
            let agg = aggregate(kind, &cells, &caets, &cohorts, args.include_flagged)?;
            write_json(&args.estimate.input.out, "aggregate.json", &agg.summary_json())?;
            print_cells(&cells);
            println!(
                "aggregate {:?}: theta = {:.6} (se {:.6}), 95% CI [{:.6}, {:.6}]",
                kind, agg.theta_hat, agg.se, agg.ci95.0, agg.ci95.1
            );
            Ok(0)
        }
        Cmd::Twfeiv(args) => {
            let (table, cohorts) = args.input.load()?;
            let opts = TwfeivOptions { tau: args.tau };
            let fit = estimate_twfeiv(&table, &cohorts, &opts)?;
            let mut out = fit.summary_json();
            if args.boot_reps > 0 {
                let boot = bootstrap_twfeiv_se(&table, &cohorts, &opts, args.boot_reps, args.seed)?;
                out["bootstrap_se"] = json!(boot.se);
                out["bootstrap_reps"] = json!(boot.reps);
            }
            write_run_config(&args.input.out, cmd)?;
            write_json(&args.input.out, "twfeiv.json", &out)?;
            println!(
                "twfeiv: beta_iv = {:.6}, first stage = {:.6}, n = {}",
                fit.beta_iv_hat, fit.pi_hat, fit.n_obs
            );
            Ok(0)
        }
        Cmd::Decompose(args) => {
            let (table, cohorts) = args.input.load()?;
            let opts = TwfeivOptions { tau: args.tau };
            let report = decompose_twfeiv(&table, &cohorts, args.base, &opts)?;
            write_run_config(&args.input.out, cmd)?;
            write_json(&args.input.out, "decompose.json", &report.summary_json())?;
            write_text(&args.input.out, "decompose.csv", &report.to_csv())?;
            println!(
                "decompose: beta_iv = {:.6}, identity residual = {:.2e}, {} component(s)",
                report.beta_iv_hat,
                report.identity_residual,
                report.components.len()
            );
            for c in &report.components {
                println!(
                    "  t={:>6}  {:<6}  weight {:>9.5}  wdid {:>9.5}",
                    c.period,
                    match c.kind {
                        crate::twfeiv::ComponentKind::Clean => "clean",
                        crate::twfeiv::ComponentKind::Biased => "biased",
                    },
                    c.weight,
                    c.wdid
                );
            }
            Ok(0)
        }
        Cmd::Pretrend(args) => {
            let (table, cohorts) = args.input.load()?;
            let result = pretrend_test(&table, &cohorts, args.max_lead)?;
            write_run_config(&args.input.out, cmd)?;
            write_json(&args.input.out, "pretrend.json", &result.summary_json())?;
            write_text(&args.input.out, "pretrend.csv", &result.to_csv())?;
            println!(
                "pretrend: joint outcome chi2({}) = {:.4} (p = {:.4}); joint treatment chi2({}) = {:.4} (p = {:.4})",
                result.joint_outcome.df,
                result.joint_outcome.stat,
                result.joint_outcome.p_value,
                result.joint_treatment.df,
                result.joint_treatment.stat,
                result.joint_treatment.p_value
            );
            Ok(0)
        }
        Cmd::Simulate(args) => {
            let spec = resolve_spec(&args.dgp)?;
            let data = sim::generate(&spec, args.n, args.seed, args.mode.into())?;
            write_run_config(&args.out, cmd)?;
            write_text(&args.out, "spec.toml", &spec.to_toml()?)?;
            write_text(&args.out, "data.csv", &render_data_csv(&data.table))?;
            write_text(&args.out, "audit.csv", &render_audit_csv(&data))?;
            println!(
                "simulate: {} unit(s), {} row(s) -> {}",
                data.table.n_units(),
                data.table.n_rows(),
                args.out.join("data.csv").display()
            );
            Ok(0)
        }
        Cmd::Oracle(args) => {
            let spec = resolve_spec(&args.dgp)?;
            let values = sim::population_values(&spec)?;
            write_run_config(&args.out, cmd)?;
            write_json(&args.out, "oracle.json", &serde_json::to_value(&values)?)?;
            println!("oracle -> {}", args.out.join("oracle.json").display());
            Ok(0)
        }
        Cmd::Selftest(args) => {
            let failures = selftest(args.seed);
            if failures == 0 {
                println!("selftest: all checks passed");
                Ok(0)
            } else {
                println!("selftest: {failures} check(s) FAILED");
                Ok(1)
            }
        }
    }
}

fn run_estimate(args: &EstimateArgs, cmd: &Cmd) -> Result<Vec<CellEstimate>> {
    let (table, cohorts) = args.input.load()?;
    let report = validate(&table, &cohorts);
    if report.has_fatal() && args.strict {
        return Err(Error::InvalidArgument(format!(
            "validation found {} fatal finding(s); rerun `didiv validate` for details",
            report.violations.iter().filter(|v| v.fatal).count()
        )));
    }
    let opts = EstimateOptions {
        tau: args.tau,
        min_cell_per_group: args.min_cell,
    };
    let cells = match &args.triple {
        None => estimate_cells(&table, &cohorts, &opts)?,
        Some(spec) => {
            let (a, b) = spec.split_once(',').ok_or_else(|| {
                Error::InvalidArgument("--triple expects two labels, e.g. A,B".into())
            })?;
            let split = StratumSplit {
                a: a.trim().into(),
                b: b.trim().into(),
            };
            let specs = build_cells(&table, &cohorts)?;
            specs
                .iter()
                .map(|s| estimate_cell_triple(&table, &cohorts, s, &split, &opts))
                .collect::<Result<Vec<_>>>()?
        }
    };
    write_run_config(&args.input.out, cmd)?;
    let array: Vec<serde_json::Value> = cells.iter().map(|c| c.summary_json()).collect();
    write_json(&args.input.out, "cells.json", &serde_json::Value::Array(array))?;
    if args.if_dump {
        let mut text = String::from("cohort,rel,unit,psi,if_alpha,if_pi\n");
        for c in &cells {
            for (j, &u) in c.if_units.iter().enumerate() {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.spec.cohort,
                    c.spec.rel,
                    table.unit_name(u),
                    c.if_psi[j],
                    c.if_alpha[j],
                    c.if_pi[j]
                ));
            }
        }
        write_text(&args.input.out, "if_dump.csv", &text)?;
    }
    Ok(cells)
}

fn print_cells(cells: &[CellEstimate]) {
    println!(
        "{:>6} {:>4} {:>10} {:>10} {:>10} {:>10} {:>6} flag",
        "e", "l", "clatt", "se", "alpha", "pi", "n"
    );
    for c in cells {
        println!(
            "{:>6} {:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>6} {}",
            c.spec.cohort,
            c.spec.rel,
            c.clatt_hat,
            c.se,
            c.alpha_hat,
            c.pi_hat,
            c.n_cell,
            c.flag.map(|f| format!("{f:?}")).unwrap_or_default()
        );
    }
}

fn render_data_csv(table: &ObservationTable) -> String {
    let with_cohort = table.has_supplied_cohorts();
    let with_stratum = !table.stratum_labels().is_empty();
    let mut out = String::from("unit,time,y,d,z");
    if with_cohort {
        out.push_str(",cohort");
    }
    if with_stratum {
        out.push_str(",stratum");
    }
    out.push('\n');
    for u in 0..table.n_units() as u32 {
        for r in table.rows_of(u) {
            out.push_str(&format!(
                "{},{},{},{},{}",
                table.unit_name(u),
                r.time,
                r.y,
                r.d,
                r.z
            ));
            if with_cohort {
                out.push_str(&format!(",{}", table.supplied_cohort(u).unwrap()));
            }
            if with_stratum {
                out.push_str(&format!(",{}", table.stratum_of(u).unwrap_or("")));
            }
            out.push('\n');
        }
    }
    out
}

fn render_audit_csv(data: &GeneratedData) -> String {
    let mut out = String::from("unit,cohort,stratum,type,d_path,z_path\n");
    for a in &data.audit {
        let path = |p: &[u8]| {
            p.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("")
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.unit,
            a.cohort,
            a.stratum.as_deref().unwrap_or(""),
            a.type_label,
            path(&a.d_path),
            path(&a.z_path)
        ));
    }
    out
}

/// Fast oracle-equivalence suite for `didiv selftest`; returns the number of
/// failed checks.
fn selftest(seed: u64) -> usize {
    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("[{}] {name}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Wald-DID identifies the complier effect on assumption-satisfying specs.
    let mut ok = true;
    for _ in 0..80 {
        let spec = sim::random_two_period(&mut rng, &sim::TwoPeriodRandomOptions::default());
        let o = sim::oracle::two_period_oracle(&spec).unwrap();
        ok &= (o.wald_did - o.latet.unwrap()).abs() < 1e-12;
    }
    check("wald-did equals complier effect (binary, 80 specs)", ok);

    // Ordered treatment.
    let mut ok = true;
    let opts = sim::TwoPeriodRandomOptions {
        arity: 3,
        ..Default::default()
    };
    for _ in 0..40 {
        let spec = sim::random_two_period(&mut rng, &opts);
        let o = sim::oracle::two_period_oracle(&spec).unwrap();
        ok &= (o.wald_did - o.acrt).abs() < 1e-12;
    }
    check("wald-did equals average causal response (ordered, 40 specs)", ok);

    // Time-gain and switcher decompositions.
    let mut ok = true;
    for _ in 0..60 {
        let spec = sim::random_two_period(&mut rng, &sim::TwoPeriodRandomOptions::default());
        let r = sim::check_time_gain_decomposition(&spec).unwrap();
        ok &= r
            .sides
            .iter()
            .all(|s| s.identity_residual.abs() < 1e-12 && (s.weight_sum - 1.0).abs() < 1e-9);
    }
    check("time-gain decomposition identity (60 specs)", ok);

    let mut ok = true;
    let fuzzy = sim::TwoPeriodRandomOptions {
        fuzzy_admissible: true,
        ..Default::default()
    };
    for _ in 0..60 {
        let spec = sim::random_two_period(&mut rng, &fuzzy);
        let r = sim::check_slatet_decomposition(&spec).unwrap();
        ok &= r.identity_residual.abs() < 1e-12;
    }
    check("switcher-effect decomposition identity (60 specs)", ok);

    // Estimator vs oracle on a staggered draw.
    let spec = sim::clatt_linear_spec(1.0);
    let data = sim::generate(&spec, 4000, seed, Mode::Panel).unwrap();
    let cohorts = derive_cohorts(&data.table, UnexposedRule::NeverExposed).unwrap();
    let cells = estimate_cells(&data.table, &cohorts, &EstimateOptions::default()).unwrap();
    let mut ok = !cells.is_empty();
    for c in &cells {
        let truth = 1.0 + 0.5 * c.spec.rel as f64;
        ok &= (c.clatt_hat - truth).abs() < 5.0 * c.se;
    }
    check("staggered cells match oracle effects (n=4000)", ok);

    // Decomposition identity on a simulated two-cohort draw.
    let spec = sim::twfeiv_bias_spec(0.5);
    let data = sim::generate(&spec, 3000, seed.wrapping_add(1), Mode::Panel).unwrap();
    let cohorts = derive_cohorts(&data.table, UnexposedRule::LastCohort).unwrap();
    let report =
        decompose_twfeiv(&data.table, &cohorts, None, &TwfeivOptions::default()).unwrap();
    check(
        "twfeiv decomposition identity (n=3000)",
        report.identity_residual.abs() < 1e-8,
    );

    failures
}
