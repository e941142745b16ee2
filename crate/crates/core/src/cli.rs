//! Command-line driver.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error (bad or unknown
//! flags, out-of-range values).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::abm::{replicate_seeds, run_abm_ensemble, AbmConfig, RecoveryModel, DEFAULT_ABM_CONTACT_RATE};
use crate::data::{
    load_reference, load_run, save_ensemble, save_reference, save_sd_run, synthetic_reference, Format,
    RunMetadata, RunOutput, WEEKLY_SAMPLING,
};
use crate::error::SimError;
use crate::monte_carlo::{run_sd_ensemble, Scenario, VariationSpec, DEFAULT_REPLICATES, DEFAULT_SIGMA_FRACTION};
use crate::network::{build_small_world, SmallWorldParams, DEFAULT_MEAN_DEGREE, DEFAULT_REWIRE_PROB};
use crate::params::{
    SirParams, WeeklySeries, DEFAULT_ILLNESS_DURATION, DEFAULT_INFECTION_PROB, DEFAULT_POPULATION, DEFAULT_WEEKS,
    TARGET_ATTACK_RATE,
};
use crate::sd::{run_sd, DEFAULT_DT};
use crate::stats::{median_series, weekly_summary, wilcoxon_signed_rank, QUANTILE_RULE};
use crate::version_string;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_SEED: u64 = 20_100_101;

#[derive(Debug, Parser)]
#[command(name = "sirvar", version, about = "SIR epidemics as ODE Monte-Carlo and agent-based ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic ODE run.
    RunSd(RunSdArgs),
    /// Monte-Carlo ensemble of the ODE model with perturbed parameters.
    RunMc(RunMcArgs),
    /// Agent-based ensemble on small-world networks.
    RunAbm(RunAbmArgs),
    /// Signed-rank validation and variance table against a reference series.
    Compare(CompareArgs),
    /// Write the synthetic reference series from the calibrated ODE run.
    Reference(ReferenceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VaryArg {
    Illness,
    Contact,
    Infection,
    All,
}

impl From<VaryArg> for Scenario {
    fn from(v: VaryArg) -> Self {
        match v {
            VaryArg::Illness => Scenario::Illness,
            VaryArg::Contact => Scenario::Contact,
            VaryArg::Infection => Scenario::Infection,
            VaryArg::All => Scenario::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecoveryArg {
    Fixed,
    Exponential,
}

impl From<RecoveryArg> for RecoveryModel {
    fn from(r: RecoveryArg) -> Self {
        match r {
            RecoveryArg::Fixed => RecoveryModel::Fixed,
            RecoveryArg::Exponential => RecoveryModel::Exponential,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory; nothing is written outside it.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_WEEKS)]
    pub weeks: usize,
    #[arg(long, default_value_t = DEFAULT_POPULATION)]
    pub population: usize,
    /// Contacts per person per day [default: calibrated to a 61% attack rate; 8.0 for run-abm]
    #[arg(long)]
    pub contact_rate: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_INFECTION_PROB)]
    pub infection_prob: f64,
    /// Days infectious.
    #[arg(long, default_value_t = DEFAULT_ILLNESS_DURATION)]
    pub illness_duration: f64,
    #[arg(long, default_value_t = 1)]
    pub initial_infected: usize,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args)]
pub struct RunSdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// RK4 step in days.
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RunMcArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub vary: VaryArg,
    /// Standard deviation of each draw as a fraction of its mean.
    #[arg(long, default_value_t = DEFAULT_SIGMA_FRACTION)]
    pub sigma: f64,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RunAbmArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Mean degree of the ring lattice (even).
    #[arg(long, default_value_t = DEFAULT_MEAN_DEGREE)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_REWIRE_PROB)]
    pub p_rewire: f64,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Use one network for every replicate.
    #[arg(long)]
    pub reuse_network: bool,
    #[arg(long, value_enum, default_value_t = RecoveryArg::Fixed)]
    pub recovery: RecoveryArg,
    /// Also write replicate 0's network as an edge list.
    #[arg(long)]
    pub export_network: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Reference series (`week,infected` CSV).
    #[arg(long)]
    pub reference: PathBuf,
    /// Run directories produced by run-sd, run-mc or run-abm.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReferenceArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WEEKS)]
    pub weeks: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParameter { .. } | SimError::InvalidDegree { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

impl CommonArgs {
    fn params(&self) -> CliResult<SirParams> {
        self.params_with(SirParams::default().contact_rate())
    }

    fn params_with(&self, default_contact: f64) -> CliResult<SirParams> {
        let contact = self.contact_rate.unwrap_or(default_contact);
        Ok(SirParams::new(
            self.population,
            contact,
            self.infection_prob,
            self.illness_duration,
            self.initial_infected,
        )?)
    }

    fn check(&self) -> CliResult<()> {
        if self.weeks == 0 {
            return Err(CliError::Usage("--weeks must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(())
    }

    fn thread_count(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    fn provenance(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let src = |default: bool, origin: &str| {
            if default {
                origin.to_string()
            } else {
                "user flag".to_string()
            }
        };
        m.insert("population".into(), src(self.population == DEFAULT_POPULATION, "reported (Osterlovsta population)"));
        m.insert("infection_prob".into(), src(self.infection_prob == DEFAULT_INFECTION_PROB, "reported best fit"));
        m.insert("illness_duration".into(), src(self.illness_duration == DEFAULT_ILLNESS_DURATION, "reported best fit"));
        m.insert(
            "contact_rate".into(),
            src(
                self.contact_rate.is_none(),
                &format!("derived: final-size calibration to attack rate {TARGET_ATTACK_RATE}"),
            ),
        );
        m.insert("initial_infected".into(), src(self.initial_infected == 1, "reported (single index case)"));
        m.insert("weeks".into(), src(self.weeks == DEFAULT_WEEKS, "reported (15-week observation window)"));
        m
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn base_metadata(command: &str, common: &CommonArgs, params: SirParams, replicates: usize) -> RunMetadata {
    RunMetadata {
        command: command.to_string(),
        version: version_string(),
        master_seed: common.seed,
        params,
        weeks: common.weeks,
        replicates,
        dt: None,
        scenario: None,
        variation: None,
        abm: None,
        threads: common.thread_count(),
        elapsed_seconds: 0.0,
        clamped_draws: 0,
        total_variation: None,
        quantile_rule: QUANTILE_RULE.to_string(),
        weekly_sampling: WEEKLY_SAMPLING.to_string(),
        provenance: common.provenance(),
    }
}

fn report_files(files: &[PathBuf]) -> String {
    files.iter().map(|f| format!("  wrote {}\n", f.display())).collect()
}

pub fn cmd_run_sd(args: &RunSdArgs) -> CliResult<String> {
    args.common.check()?;
    let params = args.common.params()?;
    let start = Instant::now();
    let series = run_sd(&params, args.common.weeks, args.dt)?;
    let mut meta = base_metadata("run-sd", &args.common, params, 1);
    meta.elapsed_seconds = start.elapsed().as_secs_f64();
    meta.dt = Some(args.dt);
    meta.threads = 1;
    let files = save_sd_run(&series, &meta, &args.common.out, args.common.format.into())?;
    let (peak, week) = series.peak();
    Ok(format!(
        "run-sd: R0={:.4}, peak {:.1} infected in week {}\n{}",
        params.rates().r0(params.population()),
        peak,
        week + 1,
        report_files(&files)
    ))
}

pub fn cmd_run_mc(args: &RunMcArgs) -> CliResult<String> {
    args.common.check()?;
    let params = args.common.params()?;
    let scenario: Scenario = args.vary.into();
    let spec = VariationSpec::for_scenario(scenario, args.sigma, args.replicates, args.common.seed)?;
    let threads = args.common.thread_count();
    let start = Instant::now();
    let result = with_pool(threads, || run_sd_ensemble(&params, &spec, args.common.weeks, args.dt))??;
    let elapsed = start.elapsed().as_secs_f64();
    let summary = weekly_summary(&result.ensemble)?;

    let mut meta = base_metadata("run-mc", &args.common, params, args.replicates);
    meta.elapsed_seconds = elapsed;
    meta.dt = Some(args.dt);
    meta.scenario = Some(scenario.name().to_string());
    meta.variation = Some(spec);
    meta.clamped_draws = result.clamped_draws;
    meta.total_variation = Some(summary.total_variation);
    meta.provenance.insert(
        "sigma".into(),
        if args.sigma == DEFAULT_SIGMA_FRACTION {
            "chosen default (spread of the normal draws is not reported)".into()
        } else {
            "user flag".into()
        },
    );
    let files = save_ensemble(&result.ensemble, &summary, &meta, &args.common.out, args.common.format.into())?;
    Ok(format!(
        "run-mc {}: {} replicates in {:.3}s, total variation {:.1}, peak median {:.1}\n{}",
        scenario.name(),
        args.replicates,
        elapsed,
        summary.total_variation,
        summary.median[summary.peak_week()],
        report_files(&files)
    ))
}

pub fn cmd_run_abm(args: &RunAbmArgs) -> CliResult<String> {
    args.common.check()?;
    let params = args.common.params_with(DEFAULT_ABM_CONTACT_RATE)?;
    let config = AbmConfig {
        network: SmallWorldParams {
            k: args.k,
            p_rewire: args.p_rewire,
        },
        recovery: args.recovery.into(),
        reuse_network: args.reuse_network,
    };
    config.network.validate(params.population())?;
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let threads = args.common.thread_count();
    let start = Instant::now();
    let ensemble = with_pool(threads, || {
        run_abm_ensemble(&params, &config, args.common.weeks, args.replicates, args.common.seed)
    })??;
    let elapsed = start.elapsed().as_secs_f64();
    let summary = weekly_summary(&ensemble)?;

    let mut meta = base_metadata("run-abm", &args.common, params, args.replicates);
    meta.elapsed_seconds = elapsed;
    meta.abm = Some(config);
    meta.total_variation = Some(summary.total_variation);
    if args.common.contact_rate.is_none() {
        meta.provenance.insert(
            "contact_rate".into(),
            "chosen default for the network model (fit to the synthetic reference)".into(),
        );
    }
    for (key, is_default) in [
        ("k", args.k == DEFAULT_MEAN_DEGREE),
        ("p_rewire", args.p_rewire == DEFAULT_REWIRE_PROB),
    ] {
        meta.provenance.insert(
            key.into(),
            if is_default {
                "chosen default (network parameters are not reported)".into()
            } else {
                "user flag".into()
            },
        );
    }
    let mut files = save_ensemble(&ensemble, &summary, &meta, &args.common.out, args.common.format.into())?;
    if args.export_network {
        let (net_seed, _) = replicate_seeds(args.common.seed, 0, args.reuse_network);
        let topo = build_small_world(params.population(), config.network, net_seed)?;
        let path = args.common.out.join("network_replicate0.edgelist");
        topo.save_edge_list(&path)?;
        files.push(path);
    }
    Ok(format!(
        "run-abm: {} replicates in {:.2}s, total variation {:.1}, peak median {:.1} (week {})\n{}",
        args.replicates,
        elapsed,
        summary.total_variation,
        summary.median[summary.peak_week()],
        summary.peak_week() + 1,
        report_files(&files)
    ))
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub input: PathBuf,
    pub n_effective: usize,
    pub w_statistic: f64,
    pub p_value: f64,
    pub reject_at_5pct: bool,
    pub total_variation: Option<f64>,
    pub peak: f64,
}

fn run_label(meta: &RunMetadata) -> String {
    match (meta.command.as_str(), meta.scenario.as_deref()) {
        ("run-sd", _) => "SD".to_string(),
        ("run-abm", _) => "ABM".to_string(),
        ("run-mc", Some("all")) => "SD - vary illness, contact, infection".to_string(),
        ("run-mc", Some(s)) => format!("SD - vary {s}"),
        (c, _) => c.to_string(),
    }
}

pub fn compare_rows(reference: &WeeklySeries, inputs: &[PathBuf]) -> CliResult<Vec<CompareRow>> {
    inputs
        .iter()
        .map(|dir| {
            let run = load_run(dir)?;
            let (series, tv) = match &run {
                RunOutput::Series { series, .. } => (series.clone(), None),
                RunOutput::Ensemble { ensemble, .. } => {
                    (median_series(ensemble)?, Some(weekly_summary(ensemble)?.total_variation))
                }
            };
            let test = wilcoxon_signed_rank(&series, reference).map_err(|e| {
                CliError::Runtime(format!("{}: {e}", dir.display()))
            })?;
            Ok(CompareRow {
                label: run_label(run.metadata()),
                input: dir.clone(),
                n_effective: test.n_effective,
                w_statistic: test.w_statistic,
                p_value: test.p_value,
                reject_at_5pct: test.reject_at_5pct,
                total_variation: tv,
                peak: series.peak().0,
            })
        })
        .collect()
}

pub fn rows_to_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("label,input,n_effective,w_statistic,p_value,reject_at_5pct,total_variation,peak_median\n");
    for r in rows {
        let _ = writeln!(
            out,
            "\"{}\",\"{}\",{},{},{},{},{},{}",
            r.label,
            r.input.display(),
            r.n_effective,
            r.w_statistic,
            r.p_value,
            r.reject_at_5pct,
            r.total_variation.map(|v| v.to_string()).unwrap_or_default(),
            r.peak
        );
    }
    out
}

pub fn rows_to_text(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:<40} {:>4} {:>8} {:>9} {:>7} {:>12}\n",
        "simulation", "n", "W", "p", "reject", "total var"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<40} {:>4} {:>8.1} {:>9.4} {:>7} {:>12}",
            r.label,
            r.n_effective,
            r.w_statistic,
            r.p_value,
            if r.reject_at_5pct { "yes" } else { "no" },
            r.total_variation.map(|v| format!("{v:.0}")).unwrap_or_else(|| "-".into())
        );
    }
    out
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult<String> {
    let reference = load_reference(&args.reference)?;
    let rows = compare_rows(&reference.series, &args.inputs)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let text = rows_to_text(&rows);
    for (name, body) in [("report.csv", rows_to_csv(&rows)), ("report.txt", text.clone())] {
        let path = args.out.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

pub fn cmd_reference(args: &ReferenceArgs) -> CliResult<String> {
    if args.weeks == 0 {
        return Err(CliError::Usage("--weeks must be at least 1".into()));
    }
    let reference = synthetic_reference(&SirParams::default(), args.weeks, DEFAULT_DT)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let path = args.out.join("reference_synthetic.csv");
    save_reference(&reference, &path)?;
    Ok(format!("wrote {}\n", path.display()))
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::RunSd(a) => cmd_run_sd(a),
        Command::RunMc(a) => cmd_run_mc(a),
        Command::RunAbm(a) => cmd_run_abm(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Reference(a) => cmd_reference(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            print!("{msg}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

