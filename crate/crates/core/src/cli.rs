//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code:
//! 0 success, 2 input or usage error, 3 degenerate estimation, 4 internal error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, SimDesign, TestChoice};
use crate::data::{validate, ObservationTable};
use crate::error::{Error, Result};
use crate::estimators::{estimate, strata_profile, Estimand, Method, WaldSe};
use crate::folds::make_folds;
use crate::glm::Family;
use crate::homogeneity::{ks_test, projection_test, ContrastId, TestReport};
use crate::nuisance::{fit_nuisances, CrossFitNuisances};
use crate::sim::{self, EstimationScenario, OutcomeKind, TestingScenario};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nested-iv", version, about = "Nested instrumental-variable effect estimation and homogeneity tests")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate switcher / always-complier / complier effects.
    Estimate(EstimateArgs),
    /// Run homogeneity tests for contrasts 1..3.
    Test(TestArgs),
    /// Covariate means among switchers and always-compliers.
    Profile(ProfileArgs),
    /// Monte Carlo studies, truth oracles, or a single simulated dataset.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
    Poisson,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => Family::LinearGaussian,
            FamilyArg::Binomial => Family::BinomialLogit,
            FamilyArg::Poisson => Family::PoissonLog,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Input CSV with header `z,x1..,d,y[,offset]`.
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of cross-fitting folds.
    #[arg(long = "k")]
    folds: Option<usize>,
    /// Outcome model family (default: poisson with an offset column, else gaussian).
    #[arg(long)]
    family: Option<FamilyArg>,
    #[arg(long)]
    min_cell: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "ee")]
    method: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "swate")]
    estimand: Vec<String>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, value_enum)]
    wald_se: Option<WaldSeArg>,
    #[arg(long)]
    boot_reps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WaldSeArg {
    Sandwich,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Projection,
    Ks,
    Both,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "projection")]
    kind: KindArg,
    /// Contrasts to test (1, 2, 3).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    contrast: Vec<u8>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Gaussian draws for the KS critical value.
    #[arg(long)]
    draws: Option<usize>,
    /// Covariates in the projection basis (default: all).
    #[arg(long, value_delimiter = ',')]
    basis: Option<Vec<String>>,
    /// Write the KS grid and integrated-contrast estimates as CSV.
    #[arg(long)]
    dump_omega: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    Estimation,
    Testing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetArg {
    Estimation,
    Testing,
    Plco,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    design: Option<DesignArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Switcher-share settings of the estimation design (0..3).
    #[arg(long, value_delimiter = ',')]
    cell: Option<Vec<usize>>,
    /// Always-complier fraction settings of the testing design.
    #[arg(long, value_delimiter = ',')]
    switcher_alpha: Option<Vec<f64>>,
    /// Outcome coefficients `b1,b2,b3`.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    #[arg(long)]
    estimand: Option<String>,
    #[arg(long, value_enum)]
    test: Option<KindArg>,
    #[arg(long, value_delimiter = ',')]
    contrast: Option<Vec<u8>>,
    #[arg(long = "k")]
    folds: Option<usize>,
    /// Only compute the truth column.
    #[arg(long)]
    oracle_only: bool,
    #[arg(long)]
    oracle_draws: Option<usize>,
    /// Write one simulated dataset as CSV instead of running a study.
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli, stdout, stderr)));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            let _ = writeln!(stderr, "{}", json!({ "error": e.to_string(), "kind": error_kind(&e) }));
            exit_code(&e)
        }
        Err(_) => {
            let _ = writeln!(stderr, "{}", json!({ "error": "internal error", "kind": "internal" }));
            EXIT_INTERNAL
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_degenerate() {
        EXIT_DEGENERATE
    } else {
        EXIT_INPUT
    }
}

fn error_kind(e: &Error) -> &'static str {
    if e.is_degenerate() {
        "degenerate"
    } else {
        "input"
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::from_path(p)?,
        None => Config::default(),
    };
    if let Some(t) = cli.threads.or(config.threads) {
        if t == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        // A second initialization in the same process is harmless; ignore it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a, &config, stdout, stderr),
        Command::Test(a) => cmd_test(a, &config, stdout, stderr),
        Command::Profile(a) => cmd_profile(a, &config, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(a, &config, stdout),
    }
}

fn require_seed(flag: Option<u64>, config: &Config) -> Result<u64> {
    flag.or(config.seed)
        .ok_or_else(|| Error::Usage("a seed is required (--seed or `seed` in the config)".into()))
}

struct Prepared {
    table: ObservationTable,
    seed: u64,
    validation: Value,
}

fn prepare(c: &Common, config: &Config, stderr: &mut dyn Write) -> Result<Prepared> {
    let seed = require_seed(c.seed, config)?;
    let table = ObservationTable::read_csv_path(&c.data)?;
    let report = validate(&table, c.min_cell.unwrap_or(config.data.min_cell));
    for f in &report.flags {
        let _ = writeln!(stderr, "warning: validation flag {f:?}");
    }
    report.require_estimable()?;
    Ok(Prepared {
        table,
        seed,
        validation: serde_json::to_value(&report).expect("validation report serializes"),
    })
}

fn fit(c: &Common, config: &Config, p: &Prepared) -> Result<CrossFitNuisances> {
    let k = c.folds.unwrap_or(config.nuisance.folds);
    let folds = make_folds(p.table.z(), k, p.seed)?;
    let spec = match c.family {
        Some(f) => config.nuisance.spec_with_outcome(f.into()),
        None => config.nuisance.spec_for(Some(&p.table)),
    };
    fit_nuisances(&p.table, &folds, &spec)
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Usage(format!("csv output: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Usage(format!("csv output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn envelope(command: &str, seed: u64, body: Value) -> String {
    let mut v = json!({ "version": VERSION, "seed": seed, "command": command });
    if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
        m.extend(b);
    }
    serde_json::to_string_pretty(&v).expect("json output") + "\n"
}

#[derive(Serialize)]
struct EstimateCsvRow {
    estimand: Estimand,
    method: Method,
    point: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
    denom: f64,
    flags: String,
    n: usize,
}

fn cmd_estimate(
    a: EstimateArgs,
    config: &Config,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let methods: Vec<Method> = a.method.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let estimands: Vec<Estimand> = a.estimand.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let p = prepare(&a.common, config, stderr)?;
    let nuis = if methods.iter().any(|m| *m != Method::Wald) {
        Some(fit(&a.common, config, &p)?)
    } else {
        None
    };
    let mut opts = config.estimators.options(p.seed);
    if let Some(l) = a.level {
        opts.level = l;
    }
    if let Some(s) = a.wald_se {
        opts.wald_se = match s {
            WaldSeArg::Sandwich => WaldSe::Sandwich,
            WaldSeArg::Bootstrap => WaldSe::Bootstrap,
        };
    }
    if let Some(b) = a.boot_reps {
        opts.boot_reps = b;
    }
    let mut reports = Vec::new();
    for &est in &estimands {
        for &m in &methods {
            reports.push(estimate(&p.table, nuis.as_ref(), est, m, &opts)?);
        }
    }
    let text = match a.common.format {
        Format::Json => envelope(
            "estimate",
            p.seed,
            json!({ "validation": p.validation, "reports": reports }),
        ),
        Format::Csv => to_csv(
            &reports
                .iter()
                .map(|r| EstimateCsvRow {
                    estimand: r.estimand,
                    method: r.method,
                    point: r.point,
                    se: r.se,
                    ci_lo: r.ci_lo,
                    ci_hi: r.ci_hi,
                    denom: r.denom,
                    flags: r
                        .flags
                        .iter()
                        .map(|f| format!("{f:?}"))
                        .collect::<Vec<_>>()
                        .join(";"),
                    n: r.n,
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.common.out, stdout, &text)
}

#[derive(Serialize)]
struct TestCsvRow {
    contrast: u8,
    kind: String,
    statistic: f64,
    critical_value: f64,
    p_value: f64,
    reject: bool,
    n_used: usize,
    excluded: usize,
}

fn write_omega(path: &Path, names: &[String], reports: &[TestReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let mut header = vec!["contrast".to_string()];
    header.extend(names.iter().cloned());
    header.push("omega".into());
    let csv_err = |e: csv::Error| Error::Usage(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        for (c, om) in &r.curve {
            let mut rec = vec![r.contrast.to_string()];
            rec.extend(c.iter().map(|v| v.to_string()));
            rec.push(om.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_test(a: TestArgs, config: &Config, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let contrasts: Vec<ContrastId> = a
        .contrast
        .iter()
        .map(|&j| ContrastId::new(j))
        .collect::<Result<_>>()?;
    let mut tests_cfg = config.tests.clone();
    if let Some(al) = a.alpha {
        tests_cfg.alpha = al;
    }
    if let Some(d) = a.draws {
        tests_cfg.draws = d;
    }
    if let Some(b) = &a.basis {
        tests_cfg.basis = b.clone();
    }
    if a.dump_omega.is_some() && a.kind == KindArg::Projection {
        return Err(Error::Usage("--dump-omega needs --kind ks or both".into()));
    }
    let p = prepare(&a.common, config, stderr)?;
    let nuis = fit(&a.common, config, &p)?;
    let proj = tests_cfg.projection(p.table.covariate_names())?;
    let ks = tests_cfg.ks(p.seed);
    let mut reports = Vec::new();
    for &j in &contrasts {
        if matches!(a.kind, KindArg::Projection | KindArg::Both) {
            reports.push(projection_test(&p.table, &nuis, j, &proj)?);
        }
        if matches!(a.kind, KindArg::Ks | KindArg::Both) {
            reports.push(ks_test(&p.table, &nuis, j, &ks)?);
        }
    }
    if let Some(path) = &a.dump_omega {
        write_omega(path, p.table.covariate_names(), &reports)?;
    }
    let text = match a.common.format {
        Format::Json => envelope(
            "test",
            p.seed,
            json!({ "validation": p.validation, "reports": reports }),
        ),
        Format::Csv => to_csv(
            &reports
                .iter()
                .map(|r| TestCsvRow {
                    contrast: r.contrast.get(),
                    kind: format!("{:?}", r.kind),
                    statistic: r.statistic,
                    critical_value: r.critical_value,
                    p_value: r.p_value,
                    reject: r.reject,
                    n_used: r.n_used,
                    excluded: r.excluded,
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&a.common.out, stdout, &text)
}

fn cmd_profile(
    a: ProfileArgs,
    config: &Config,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    let p = prepare(&a.common, config, stderr)?;
    let nuis = fit(&a.common, config, &p)?;
    let profile = strata_profile(&p.table, &nuis)?;
    let text = match a.common.format {
        Format::Json => envelope(
            "profile",
            p.seed,
            json!({ "validation": p.validation, "profile": profile }),
        ),
        Format::Csv => to_csv(&profile.rows)?,
    };
    emit(&a.common.out, stdout, &text)
}

fn cmd_simulate(a: SimulateArgs, config: &Config, stdout: &mut dyn Write) -> Result<()> {
    let seed = require_seed(a.seed, config)?;
    let sc = &config.sim;
    if a.beta.as_ref().is_some_and(|b| b.len() != 3) {
        return Err(Error::Usage("--beta takes exactly three values".into()));
    }
    if let Some(ds) = a.dataset {
        let n = a.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(sc.n[0]);
        let beta = a.beta.as_ref().map(|b| [b[0], b[1], b[2]]);
        let data = match ds {
            DatasetArg::Estimation => {
                let cell = a.cell.as_ref().and_then(|v| v.first().copied()).unwrap_or(3);
                check_cell(cell)?;
                let mut s = EstimationScenario::grid(n, cell, beta.unwrap_or([2.0, 2.0, 2.0]), sc.outcome, seed);
                s.aco_x3_coef = sc.aco_x3_coef;
                sim::gen_estimation_data(&s)?
            }
            DatasetArg::Testing => {
                let alpha = a
                    .switcher_alpha
                    .as_ref()
                    .and_then(|v| v.first().copied())
                    .unwrap_or(0.6);
                sim::gen_testing_data(&TestingScenario::new(n, alpha, beta.unwrap_or([1.0, 2.0, 2.0]), seed))?
            }
            DatasetArg::Plco => sim::gen_plco_like(seed)?,
        };
        let mut buf = Vec::new();
        data.table.write_csv(&mut buf)?;
        return emit(&a.out, stdout, &String::from_utf8(buf).expect("csv is utf-8"));
    }

    let design = match a.design {
        Some(DesignArg::Estimation) => SimDesign::Estimation,
        Some(DesignArg::Testing) => SimDesign::Testing,
        None => sc.design,
    };
    let reps = a.reps.unwrap_or(sc.reps);
    if reps == 0 {
        return Err(Error::Usage("--reps must be at least 1".into()));
    }
    let ns = a.n.clone().unwrap_or_else(|| sc.n.clone());
    let folds = a.folds.unwrap_or(config.nuisance.folds);
    let oracle_draws = a.oracle_draws.unwrap_or(sc.oracle_draws);
    let betas: Vec<[f64; 3]> = match &a.beta {
        Some(b) => vec![[b[0], b[1], b[2]]],
        None if !sc.beta.is_empty() => sc.beta.clone(),
        None => match design {
            SimDesign::Estimation => vec![[2.0, 2.0, 2.0]],
            SimDesign::Testing => vec![[1.0, 2.0, 2.0]],
        },
    };
    let text = match design {
        SimDesign::Estimation => {
            let cells = a.cell.clone().unwrap_or_else(|| sc.cells.clone());
            cells.iter().try_for_each(|&c| check_cell(c))?;
            let estimand: Estimand = match &a.estimand {
                Some(e) => e.parse()?,
                None => sc.estimand,
            };
            let methods: Vec<Method> = match &a.method {
                Some(m) => m.iter().map(|s| s.parse()).collect::<Result<_>>()?,
                None => sc.methods.clone(),
            };
            let outcome = sc.outcome;
            let family = match outcome {
                OutcomeKind::Continuous => Family::LinearGaussian,
                OutcomeKind::Binary => Family::BinomialLogit,
            };
            let opts = sim::StudyOptions {
                folds,
                nuisance: config.nuisance.spec_with_outcome(family),
                estimate: config.estimators.options(seed),
                seed,
            };
            let mut rows = Vec::new();
            for &beta in &betas {
                for &cell in &cells {
                    for &n in &ns {
                        let mut s = EstimationScenario::grid(n, cell, beta, outcome, seed);
                        s.aco_x3_coef = sc.aco_x3_coef;
                        let oracle = match estimand {
                            Estimand::Swate => sim::true_swate_oracle(&s, oracle_draws),
                            Estimand::Acoate => sim::true_acoate_oracle(&s, oracle_draws),
                            Estimand::Coate => {
                                return Err(Error::Usage(
                                    "the simulation oracle covers swate and acoate".into(),
                                ))
                            }
                        };
                        if a.oracle_only {
                            rows.push(OracleRow {
                                scenario: s.label(),
                                estimand,
                                truth: oracle.value,
                                mc_se: oracle.mc_se,
                                share: oracle.share,
                                draws: oracle.draws,
                            }
                            .into_value());
                            continue;
                        }
                        let pairs: Vec<(Estimand, Method)> = methods.iter().map(|&m| (estimand, m)).collect();
                        let truths = vec![oracle.value; pairs.len()];
                        for r in sim::run_monte_carlo_multi(&s, reps, &pairs, &truths, &opts) {
                            rows.push(serde_json::to_value(r).expect("metrics serialize"));
                        }
                    }
                }
            }
            rows_to_csv(&rows)?
        }
        SimDesign::Testing => {
            let alphas = a.switcher_alpha.clone().unwrap_or_else(|| sc.switcher_alpha.clone());
            let kind = match a.test {
                Some(KindArg::Ks) => crate::homogeneity::TestKind::KS,
                Some(KindArg::Projection) => crate::homogeneity::TestKind::ProjectionWald,
                Some(KindArg::Both) => {
                    return Err(Error::Usage("simulate runs one test kind at a time".into()))
                }
                None => match sc.test {
                    TestChoice::Projection => crate::homogeneity::TestKind::ProjectionWald,
                    TestChoice::Ks => crate::homogeneity::TestKind::KS,
                },
            };
            let contrasts: Vec<ContrastId> = a
                .contrast
                .clone()
                .unwrap_or_else(|| sc.contrasts.clone())
                .into_iter()
                .map(ContrastId::new)
                .collect::<Result<_>>()?;
            let names: Vec<String> = vec!["x1".into(), "x2".into()];
            let opts = sim::TestStudyOptions {
                folds,
                nuisance: config.nuisance.spec_with_outcome(Family::LinearGaussian),
                projection: config.tests.projection(&names)?,
                ks: config.tests.ks(seed),
                seed,
            };
            let mut rows = Vec::new();
            for &beta in &betas {
                for &alpha in &alphas {
                    for &n in &ns {
                        let s = TestingScenario::new(n, alpha, beta, seed);
                        if a.oracle_only {
                            let o = sim::testing_oracle(&s, oracle_draws);
                            rows.push(json!({
                                "scenario": s.label(),
                                "nominal_switcher_share": s.nominal_switcher_share(),
                                "switcher_share": o.switcher.share,
                                "always_complier_share": o.always_complier.share,
                                "switcher_effect": o.switcher.value,
                                "always_complier_effect": o.always_complier.value,
                            }));
                            continue;
                        }
                        for r in sim::run_test_study(&s, reps, kind, &contrasts, &opts) {
                            let mut v = serde_json::to_value(r).expect("row serializes");
                            v["nominal_switcher_share"] = json!(s.nominal_switcher_share());
                            rows.push(v);
                        }
                    }
                }
            }
            rows_to_csv(&rows)?
        }
    };
    emit(&a.out, stdout, &text)
}

fn check_cell(c: usize) -> Result<()> {
    if c < sim::ALPHA_GRID.len() {
        Ok(())
    } else {
        Err(Error::Usage(format!("cell must be 0..{}, got {c}", sim::ALPHA_GRID.len() - 1)))
    }
}

#[derive(Serialize)]
struct OracleRow {
    scenario: String,
    estimand: Estimand,
    truth: f64,
    mc_se: f64,
    share: f64,
    draws: usize,
}

impl OracleRow {
    fn into_value(self) -> Value {
        serde_json::to_value(self).expect("oracle row serializes")
    }
}

/// Flat JSON objects to CSV, columns in first-row key order.
fn rows_to_csv(rows: &[Value]) -> Result<String> {
    let Some(Value::Object(first)) = rows.first() else {
        return Ok(String::new());
    };
    let keys: Vec<String> = first.keys().cloned().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Usage(format!("csv output: {e}"));
    w.write_record(&keys).map_err(err)?;
    for r in rows {
        let rec: Vec<String> = keys
            .iter()
            .map(|k| match &r[k] {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string(),
            })
            .collect();
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Usage(format!("csv output: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
