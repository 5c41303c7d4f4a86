mod bench;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cohortforge::bias_audit::{pooling_contrast, run_scenario, BiasReport, Profile, Remedy, ScenarioSpec};
use cohortforge::dag::{self, bias_audit_report, expand_with_cohort_indicator, CausalDag};
use cohortforge::estimators::{
    complete_case, heterogeneity_interaction, meta_fixed_random, mi_estimate, pooled_analysis, replication_analysis,
    replication_from_reported, reported_table, Analysis, CohortResult, EffectEstimate, MetaInput, MetaResult, Method,
    OutcomeModel, COHORT_COVARIATE,
};
use cohortforge::protocol::{self, EmulationPlan, EmulationReport, Format};
use cohortforge::scm::{restrict_to_selected, scenario, simulate, Dataset, DatasetMeta, Scenario};
use cohortforge::types::{ImputationScope, Measure};

/// Environment variable naming a directory that replaces the bundled fixtures.
const FIXTURES_ENV: &str = "COHORTFORGE_FIXTURES";

#[derive(Parser)]
#[command(name = "cohortforge", version, about = "Target-trial emulation toolkit for multi-cohort causal inference")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (a directory for `bench`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    #[arg(long, global = true, default_value = "smoke")]
    profile: Profile,
    /// Parameter override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Text,
    Json,
    Markdown,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Classify open non-causal paths of a DAG. Exit 0: none, 2: biases found.
    AuditDag(AuditArgs),
    /// Gap report and harmonisation audit for a protocol and its emulations.
    EmulationReport(ReportArgs),
    /// Simulate a scenario to CSV with a metadata sidecar.
    Simulate(SimulateArgs),
    /// Estimate effects from a CSV dataset.
    Estimate(EstimateArgs),
    /// Monte Carlo bias benchmark of a scenario id, `all`, or a spec file.
    Bench(BenchArgs),
}

#[derive(Args)]
struct AuditArgs {
    /// DAG JSON file or bundled fixture name (e.g. DAG-1A).
    dag: String,
    /// Add a cohort indicator pointing at these nodes before auditing.
    #[arg(long, value_delimiter = ',')]
    expand: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Protocol JSON file (optionally bundling plans) or fixture name.
    protocol: String,
    /// Extra emulation plan files (one plan or an array each).
    plans: Vec<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario id (S-1A .. S-3B) or scenario JSON file.
    scenario: String,
    /// Rows per cohort; defaults to the profile size.
    #[arg(long)]
    n: Option<usize>,
    /// Delete a node from the generating model.
    #[arg(long)]
    remove: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalysisKind {
    Pooled,
    Replication,
    Meta,
    Interaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MissingArg {
    None,
    CompleteCase,
    MiPooled,
    MiPerCohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    MainEffects,
    Interaction,
    Saturated,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV dataset as written by `simulate`.
    #[arg(required_unless_present = "reported", conflicts_with = "reported")]
    data: Option<PathBuf>,
    /// Use the bundled published per-cohort estimates instead of data.
    #[arg(long)]
    reported: bool,
    #[arg(long, default_value = "X")]
    exposure: String,
    #[arg(long, default_value = "Y")]
    outcome: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    propensity: Option<Vec<String>>,
    /// Weight participants by inverse participation probability on these.
    #[arg(long, value_delimiter = ',')]
    participation: Option<Vec<String>>,
    /// Extra variables for the imputation model only.
    #[arg(long, value_delimiter = ',')]
    auxiliary: Vec<String>,
    #[arg(long, default_value = "conditional")]
    method: Method,
    #[arg(long, default_value = "OR")]
    measure: Measure,
    #[arg(long, value_enum, default_value = "pooled")]
    analysis: AnalysisKind,
    #[arg(long)]
    cohort_indicator: bool,
    #[arg(long)]
    restrict_to_selected: bool,
    #[arg(long, value_enum, default_value = "none")]
    missing: MissingArg,
    #[arg(long, default_value_t = 20)]
    imputations: usize,
    #[arg(long, value_enum, default_value = "main-effects")]
    outcome_model: ModelArg,
    /// Exposure label used as the reference arm.
    #[arg(long)]
    comparator: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario id, `all`, or a benchmark spec JSON file.
    target: String,
    /// Also write the per-replication log.
    #[arg(long)]
    raw: bool,
}

/// Benchmark spec file: a scenario spec with an optional pooling contrast.
#[derive(Serialize, Deserialize)]
struct BenchFile {
    #[serde(flatten)]
    spec: ScenarioSpec,
    #[serde(default)]
    contrast: Option<Remedy>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let sets = parse_sets(&cli.set)?;
    match &cli.command {
        Command::AuditDag(a) => audit_dag(&cli, &sets, a),
        Command::EmulationReport(a) => emulation_report(&cli, &sets, a).map(|_| 0),
        Command::Simulate(a) => simulate_cmd(&cli, &sets, a).map(|_| 0),
        Command::Estimate(a) => estimate_cmd(&cli, &sets, a).map(|_| 0),
        Command::Bench(a) => bench_cmd(&cli, &sets, a).map(|_| 0),
    }
}

fn parse_sets(items: &[String]) -> Result<BTreeMap<String, String>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Rejects keys outside `allowed`; keys containing a dot are model
/// parameter overrides and pass when `params` is set.
fn check_sets(sets: &BTreeMap<String, String>, allowed: &[&str], params: bool) -> Result<()> {
    for k in sets.keys() {
        if !allowed.contains(&k.as_str()) && !(params && k.contains('.')) {
            bail!("unknown --set key `{k}`");
        }
    }
    Ok(())
}

fn set_num<T: std::str::FromStr>(sets: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    sets.get(key).map(|v| v.parse::<T>().map_err(|_| anyhow!("--set {key}: cannot parse `{v}`"))).transpose()
}

fn param_overrides(sets: &BTreeMap<String, String>) -> Result<BTreeMap<String, f64>> {
    sets.iter()
        .filter(|(k, _)| k.contains('.'))
        .map(|(k, v)| Ok((k.clone(), v.parse::<f64>().map_err(|_| anyhow!("--set {k}: `{v}` is not a number"))?)))
        .collect()
}

fn require_seed(cli: &Cli) -> Result<u64> {
    cli.seed.ok_or_else(|| anyhow!("this subcommand is stochastic; pass --seed"))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn json_error(path: &str, e: serde_json::Error) -> anyhow::Error {
    anyhow!("{path}:{}:{}: {e}", e.line(), e.column())
}

fn fixture_dir() -> Option<PathBuf> {
    std::env::var_os(FIXTURES_ENV).map(PathBuf::from)
}

fn load_dag(arg: &str) -> Result<CausalDag> {
    let path = Path::new(arg);
    let text = if path.exists() {
        read(path)?
    } else if let Some(dir) = fixture_dir() {
        match dag::fixtures::load_from_dir(&dir, arg) {
            Some(r) => r.with_context(|| format!("reading fixture {arg} from {}", dir.display()))?,
            None => bail!("no DAG file or fixture named `{arg}`"),
        }
    } else {
        return dag::fixtures::by_name(arg).ok_or_else(|| anyhow!("no DAG file or fixture named `{arg}`"));
    };
    CausalDag::from_json(&text).map_err(|e| json_error(arg, e))
}

fn audit_dag(cli: &Cli, sets: &BTreeMap<String, String>, a: &AuditArgs) -> Result<u8> {
    check_sets(sets, &[], false)?;
    let mut d = load_dag(&a.dag)?;
    if !a.expand.is_empty() {
        d = expand_with_cohort_indicator(&d, &a.expand)?;
    }
    let report = bias_audit_report(&d)?;
    let text = match cli.format.unwrap_or(OutFormat::Text) {
        OutFormat::Json => report.to_json(),
        OutFormat::Text => report.to_text(),
        f => bail!("audit-dag writes text or json, not {f:?}"),
    };
    emit(&cli.out, &text)?;
    Ok(if report.has_bias() { 2 } else { 0 })
}

fn emulation_report(cli: &Cli, sets: &BTreeMap<String, String>, a: &ReportArgs) -> Result<()> {
    check_sets(sets, &[], false)?;
    let path = Path::new(&a.protocol);
    let (protocol, mut plans) = if path.exists() {
        protocol::fixtures::parse(&read(path)?).map_err(|e| json_error(&a.protocol, e))?
    } else if let Some(dir) = fixture_dir() {
        let text = protocol::fixtures::load_from_dir(&dir, &a.protocol)
            .ok_or_else(|| anyhow!("no protocol file or fixture named `{}`", a.protocol))??;
        protocol::fixtures::parse(&text).map_err(|e| json_error(&a.protocol, e))?
    } else {
        protocol::fixtures::by_name(&a.protocol).ok_or_else(|| anyhow!("no protocol file or fixture named `{}`", a.protocol))?
    };
    for p in &a.plans {
        let text = read(p)?;
        let name = p.display().to_string();
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(&name, e))?;
        if value.is_array() {
            plans.extend(serde_json::from_value::<Vec<EmulationPlan>>(value).with_context(|| format!("{name}: not a plan list"))?);
        } else {
            plans.push(serde_json::from_value(value).with_context(|| format!("{name}: not an emulation plan"))?);
        }
    }
    let format = match cli.format.unwrap_or(OutFormat::Markdown) {
        OutFormat::Text => Format::Text,
        OutFormat::Json => Format::Json,
        OutFormat::Markdown => Format::Markdown,
        OutFormat::Csv => bail!("emulation-report writes text, json or markdown"),
    };
    let report = EmulationReport::build(protocol, plans)?;
    emit(&cli.out, &report.render(format))
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        serde_json::from_str(&read(path)?).map_err(|e| json_error(arg, e))
    } else {
        Ok(scenario(arg)?)
    }
}

fn simulate_cmd(cli: &Cli, sets: &BTreeMap<String, String>, a: &SimulateArgs) -> Result<()> {
    check_sets(sets, &["n"], true)?;
    let seed = require_seed(cli)?;
    if !matches!(cli.format, None | Some(OutFormat::Csv)) {
        bail!("simulate writes csv");
    }
    let mut s = load_scenario(&a.scenario)?;
    let n = a.n.or(set_num(sets, "n")?).unwrap_or(cli.profile.sizes().1);
    for node in &a.remove {
        s.model = s.model.without_node(node);
    }
    let overrides = param_overrides(sets)?;
    for c in &mut s.cohorts {
        c.n = n;
        c.overrides.extend(overrides.clone());
    }
    let ds = simulate(&s.model, &s.cohorts, seed)?;
    let csv = ds.to_csv_string();
    emit(&cli.out, &csv)?;
    if let Some(out) = &cli.out {
        let meta = DatasetMeta {
            scenario: s.id.clone(),
            parameter_set: s.parameter_set.clone(),
            seed,
            cohorts: s.cohorts.clone(),
            columns: ds.columns.clone(),
            rows: ds.n_rows(),
        };
        let mut side = out.clone().into_os_string();
        side.push(".meta.json");
        std::fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").context("writing metadata sidecar")?;
    }
    Ok(())
}

/// Recodes a labelled exposure so `label` becomes code 0 (the comparator).
fn set_comparator(ds: &mut Dataset, column: &str, label: &str) -> Result<()> {
    let j = ds.column_index(column).ok_or_else(|| anyhow!("unknown column `{column}`"))?;
    let levels = ds.levels.get_mut(column).ok_or_else(|| anyhow!("`{column}` has no labels; the lowest code is the comparator"))?;
    let k = levels.iter().position(|l| l == label).ok_or_else(|| anyhow!("`{column}` has no level `{label}`"))?;
    levels.swap(0, k);
    let swap = |v: f64| if v == 0.0 { k as f64 } else if v == k as f64 { 0.0 } else { v };
    for v in ds.values[j].iter_mut().flatten() {
        *v = swap(*v);
    }
    Ok(())
}

fn estimates_csv(rows: &[EffectEstimate]) -> String {
    let mut s = format!("{}\n", EffectEstimate::csv_header());
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

#[derive(Serialize)]
struct MetaArm {
    arm: String,
    result: MetaResult,
}

fn meta_by_arm(estimates: &[EffectEstimate]) -> Result<Vec<MetaArm>> {
    let mut arms: Vec<String> = Vec::new();
    for e in estimates {
        if !arms.contains(&e.arm) {
            arms.push(e.arm.clone());
        }
    }
    arms.into_iter()
        .map(|arm| {
            let inputs: Vec<MetaInput> = estimates
                .iter()
                .filter(|e| e.arm == arm)
                .map(|e| MetaInput { label: e.cohort.clone(), log_effect: e.log_point, se: e.se_log })
                .collect();
            Ok(MetaArm { result: meta_fixed_random(&inputs).with_context(|| format!("arm `{arm}`"))?, arm })
        })
        .collect()
}

fn meta_csv(per: &[MetaArm], ratio: bool) -> String {
    let tr = |v: f64| if ratio { v.exp() } else { v };
    let z = 1.959_963_984_540_054;
    let mut s = String::from("arm,fixed,fixed_low,fixed_high,random,random_low,random_high,tau2,q,df,i2\n");
    for m in per {
        let r = &m.result;
        let _ = writeln!(
            s,
            "\"{}\",{},{},{},{},{},{},{},{},{},{}",
            m.arm.replace('"', "\"\""),
            tr(r.fixed),
            tr(r.fixed - z * r.fixed_se),
            tr(r.fixed + z * r.fixed_se),
            tr(r.random),
            tr(r.random - z * r.random_se),
            tr(r.random + z * r.random_se),
            r.tau2,
            r.q,
            r.df,
            r.i2
        );
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn estimate_cmd(cli: &Cli, sets: &BTreeMap<String, String>, a: &EstimateArgs) -> Result<()> {
    check_sets(sets, &["bootstrap"], false)?;
    let format = cli.format.unwrap_or(OutFormat::Csv);
    if format == OutFormat::Markdown {
        bail!("estimate writes csv, text or json");
    }
    if a.reported {
        let rows = replication_from_reported(&reported_table());
        let cohorts: Vec<EffectEstimate> = rows.iter().filter(|e| e.cohort != "pooled").cloned().collect();
        let meta = meta_by_arm(&cohorts)?;
        #[derive(Serialize)]
        struct Reported<'a> {
            estimates: &'a [EffectEstimate],
            meta: &'a [MetaArm],
        }
        let text = match format {
            OutFormat::Json => to_json(&Reported { estimates: &rows, meta: &meta })?,
            _ => format!("{}\n{}", estimates_csv(&rows), meta_csv(&meta, true)),
        };
        return emit(&cli.out, &text);
    }
    let seed = require_seed(cli)?;
    let path = a.data.as_ref().expect("clap requires data");
    let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ds = Dataset::read_csv(file)?;
    if let Some(c) = &a.comparator {
        set_comparator(&mut ds, &a.exposure, c)?;
    }
    if a.restrict_to_selected {
        ds = restrict_to_selected(&ds);
    }
    let mut analysis = Analysis::new(&a.exposure, &a.outcome)
        .covariates(&a.covariates)
        .measure(a.measure)
        .outcome_model(match a.outcome_model {
            ModelArg::MainEffects => OutcomeModel::MainEffects,
            ModelArg::Interaction => OutcomeModel::Interaction,
            ModelArg::Saturated => OutcomeModel::Saturated,
        })
        .seed(seed);
    if let Some(b) = set_num(sets, "bootstrap")? {
        analysis = analysis.bootstrap(b);
    }
    analysis.propensity = a.propensity.clone();
    analysis.participation = a.participation.clone();
    let mut columns = vec![a.exposure.clone(), a.outcome.clone()];
    let extra = a.propensity.iter().flatten().chain(a.participation.iter().flatten());
    for c in a.covariates.iter().chain(extra).chain(&a.auxiliary) {
        if c != COHORT_COVARIATE && !columns.contains(c) {
            columns.push(c.clone());
        }
    }
    match a.missing {
        MissingArg::CompleteCase => ds = complete_case(&ds, &columns)?,
        MissingArg::MiPooled | MissingArg::MiPerCohort if a.analysis != AnalysisKind::Pooled => {
            bail!("multiple imputation is supported with --analysis pooled")
        }
        _ => {}
    }
    let text = match a.analysis {
        AnalysisKind::Pooled => {
            let rows = match a.missing {
                MissingArg::MiPooled | MissingArg::MiPerCohort => {
                    let scope = if a.missing == MissingArg::MiPooled {
                        ImputationScope::PooledWithIndicator
                    } else {
                        ImputationScope::PerCohort
                    };
                    let an = if a.cohort_indicator { analysis.with_cohort_indicator() } else { analysis.clone() };
                    mi_estimate(&ds, &columns, a.imputations, scope, &an, a.method)?
                }
                _ => pooled_analysis(&ds, &analysis, a.cohort_indicator, a.method)?,
            };
            match format {
                OutFormat::Json => to_json(&rows)?,
                _ => estimates_csv(&rows),
            }
        }
        AnalysisKind::Replication | AnalysisKind::Meta => {
            let per = replication_analysis(&ds, &analysis, a.method, &BTreeMap::new())?;
            if a.analysis == AnalysisKind::Replication {
                match format {
                    OutFormat::Json => to_json(&per)?,
                    _ => replication_csv(&per),
                }
            } else {
                let rows: Vec<EffectEstimate> = per.iter().flat_map(|c| c.estimates.clone()).collect();
                let meta = meta_by_arm(&rows)?;
                match format {
                    OutFormat::Json => to_json(&meta)?,
                    _ => meta_csv(&meta, a.measure.is_ratio()),
                }
            }
        }
        AnalysisKind::Interaction => {
            let terms = heterogeneity_interaction(&ds, &analysis)?;
            match format {
                OutFormat::Json => to_json(&terms)?,
                _ => {
                    let mut s = String::from("arm,log_or,se,z,p_value,converged\n");
                    for t in &terms {
                        let _ = writeln!(s, "\"{}\",{},{},{},{},{}", t.arm, t.log_or, t.se, t.z, t.p_value, t.converged);
                    }
                    s
                }
            }
        }
    };
    emit(&cli.out, &text)
}

fn replication_csv(per: &[CohortResult]) -> String {
    let mut s = format!("{}\n", EffectEstimate::csv_header());
    for c in per {
        match &c.insufficient_data {
            Some(msg) => {
                let _ = writeln!(s, ",,,{},,,,,,0,false,\"insufficient data: {}\"", c.cohort, msg.replace('"', "\"\""));
            }
            None => c.estimates.iter().for_each(|e| {
                let _ = writeln!(s, "{}", e.csv_row());
            }),
        }
    }
    s
}

fn write_report(dir: &Path, stem: &str, report: &BiasReport) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), report.to_csv())?;
    std::fs::write(dir.join(format!("{stem}.json")), report.to_json() + "\n")?;
    if let Some(raw) = report.raw_csv() {
        std::fs::write(dir.join(format!("{stem}.raw.csv")), raw)?;
    }
    Ok(())
}

fn bench_cmd(cli: &Cli, sets: &BTreeMap<String, String>, a: &BenchArgs) -> Result<()> {
    check_sets(sets, &["replications", "n", "bootstrap"], true)?;
    let (mut reps, mut n) = cli.profile.sizes();
    reps = set_num(sets, "replications")?.unwrap_or(reps);
    n = set_num(sets, "n")?.unwrap_or(n);
    let overrides = param_overrides(sets)?;
    let path = Path::new(&a.target);
    let (specs, contrast) = if path.exists() {
        let mut f: BenchFile = serde_json::from_str(&read(path)?).map_err(|e| json_error(&a.target, e))?;
        if let Some(seed) = cli.seed {
            f.spec.seed = seed;
        }
        if let Some(r) = set_num(sets, "replications")? {
            f.spec.replications = r;
        }
        if let Some(n) = set_num(sets, "n")? {
            f.spec.n_per_cohort = Some(n);
        }
        (vec![f.spec], f.contrast)
    } else {
        let seed = require_seed(cli)?;
        let specs = bench::builtin_specs(&a.target, reps, n, seed)
            .ok_or_else(|| anyhow!("unknown scenario `{}` (expected S-1A .. S-3B, all, or a spec file)", a.target))?;
        (specs, None)
    };
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("bench-out"));
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut summary = String::new();
    for mut spec in specs {
        if let Some(b) = set_num(sets, "bootstrap")? {
            spec.bootstrap = b;
        }
        spec.overrides.extend(overrides.clone());
        spec.raw_log |= a.raw;
        let stem = spec.scenario.resolve()?.id;
        match contrast {
            Some(remedy) => {
                let c = pooling_contrast(&spec, remedy)?;
                write_report(&out_dir, &stem, &c.report)?;
                std::fs::write(out_dir.join(format!("{stem}.contrast.json")), to_json(&c)?)?;
                summary.push_str(&c.report.summary());
                let _ = writeln!(summary, "bias reduction with remedy: {:.1}%", 100.0 * c.reduction);
            }
            None => {
                let report = run_scenario(&spec)?;
                write_report(&out_dir, &stem, &report)?;
                summary.push_str(&report.summary());
            }
        }
        summary.push('\n');
    }
    if cli.format == Some(OutFormat::Json) {
        bail!("bench prints a text summary; reports are written as csv and json under --out");
    }
    print!("{summary}");
    Ok(())
}
