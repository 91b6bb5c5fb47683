//! `rwre-lab`: run, verify and analyze near-axis RWRE experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 a verification or threshold
//! check failed, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rwre_core::gue::{lambda_k_reference, normal_reference, tw_reference};
use rwre_core::harness::{
    run_analyze, run_couple, run_landscape, run_simulate, run_verify, verify_records, AnalyzeParams,
    ExperimentConfig, HarnessError, RunControl, StatisticKind, TargetSet, VerifyParams,
    DEFAULT_WORKERS_VAR,
};
use rwre_core::lattice::FunctionalSet;
use rwre_core::scaling::PlanePoint;
use rwre_core::EnvironmentSpec;

const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "rwre-lab", version, about = "Near-axis RWRE fluctuation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo replicas at the axis target (n, ⌊n^a⌋) or fixed-k targets.
    Simulate(SimulateArgs),
    /// Exact-inequality suites, or bit-exact re-checking of a record file.
    Verify(VerifyArgs),
    /// Sampled |S − L| over the coupling region and the coupling-bound check.
    Couple(CoupleArgs),
    /// Rescaled landscape values at mapped plane-point pairs.
    Landscape(LandscapeArgs),
    /// Build a reference sample (Tracy–Widom, λ_k or normal).
    Gue(GueArgs),
    /// Compare record statistics with a reference law.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Environment spec, e.g. `beta:1,1` or `logpareto:3,1`.
    #[arg(long, default_value = "beta:1,1")]
    env: String,
    /// Comma-separated list of n.
    #[arg(long, value_delimiter = ',', default_values_t = [1000u64, 10000, 100000])]
    n: Vec<u64>,
    #[arg(long, default_value_t = 0.3)]
    a: f64,
    #[arg(long, default_value_t = 2000)]
    replicas: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = DEFAULT_WORKERS_VAR)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse completed replicas from the run's journal.
    #[arg(long)]
    resume: bool,
    /// Stop after this many new work items (the run can be resumed later).
    #[arg(long)]
    budget: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(&self.env, self.n.clone(), self.a, self.replicas, self.seed);
        if let Some(w) = self.workers {
            c.workers = w;
        }
        c.out = self.out.clone();
        c
    }

    fn control(&self) -> RunControl {
        RunControl { resume: self.resume, budget: self.budget }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Fixed heights k; without it the target is (n, ⌊n^a⌋).
    #[arg(long, value_delimiter = ',')]
    k: Vec<u64>,
    /// Functionals to compute, from S, G, L. S is always computed.
    #[arg(long, value_delimiter = ',', default_values_t = ["S".to_string(), "G".to_string(), "L".to_string()])]
    functionals: Vec<String>,
}

#[derive(Args)]
struct LandscapeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Pairs `x1,x2:y1,y2` separated by `;`.
    #[arg(long, default_value = "0,0:0,1;0,0:1,1")]
    pairs: String,
}

#[derive(Args)]
struct CoupleArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Sampled origins per replica besides the corner.
    #[arg(long, default_value_t = 32)]
    origins: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict to these environment specs (repeatable); default is one per family.
    #[arg(long)]
    env: Vec<String>,
    #[arg(long, default_value_t = 12)]
    max_steps: u64,
    #[arg(long, default_value_t = 100)]
    environments: usize,
    #[arg(long, default_value_t = 10_000)]
    instances: usize,
    #[arg(long, default_value_t = 500)]
    max_dx: u64,
    #[arg(long, default_value_t = 50)]
    max_dy: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = DEFAULT_WORKERS_VAR)]
    workers: Option<usize>,
    /// Re-check a finalized record file instead of running the suites.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Tw,
    Lambda,
    Normal,
}

#[derive(Args)]
struct GueArgs {
    #[arg(long, value_enum, default_value = "tw")]
    kind: ReferenceArg,
    /// Matrix size: n for `tw`, k for `lambda`; unused for `normal`.
    #[arg(long, default_value_t = 2000)]
    size: u64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = DEFAULT_WORKERS_VAR)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_parser = parse_statistic)]
    statistic: StatisticKind,
    /// Pass/fail threshold for the decisive value at the largest n.
    #[arg(long)]
    threshold: Option<f64>,
    /// Require records computed with this exponent.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Summary JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantile CSV path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_statistic(s: &str) -> Result<StatisticKind, String> {
    s.parse()
}

/// Errors mapped to exit codes.
enum Failure {
    Usage(String),
    Check(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Env(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<rwre_core::gue::GueError> for Failure {
    fn from(e: rwre_core::gue::GueError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn functional_set(names: &[String]) -> Result<FunctionalSet, Failure> {
    let mut set = FunctionalSet { s: true, g: false, l: false };
    for name in names {
        match name.trim().to_ascii_uppercase().as_str() {
            "S" => {}
            "G" => set.g = true,
            "L" => set.l = true,
            other => return Err(Failure::Usage(format!("unknown functional `{other}`"))),
        }
    }
    Ok(set)
}

fn parse_pairs(text: &str) -> Result<Vec<(PlanePoint, PlanePoint)>, Failure> {
    let point = |s: &str| -> Result<PlanePoint, Failure> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::Usage(format!("bad plane point `{s}`: {e}")))?;
        match v[..] {
            [z1, z2] => Ok(PlanePoint::new(z1, z2)),
            _ => Err(Failure::Usage(format!("plane point `{s}` needs two coordinates"))),
        }
    };
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (x, y) = p
                .split_once(':')
                .ok_or_else(|| Failure::Usage(format!("pair `{p}` must look like x1,x2:y1,y2")))?;
            Ok((point(x)?, point(y)?))
        })
        .collect()
}

fn report_run(outcome: &rwre_core::harness::RunOutcome, out: Option<&Path>) {
    let status = if outcome.complete { "complete" } else { "partial" };
    eprintln!(
        "{status}: {} records, {} items computed, {} reused{}",
        outcome.records.len(),
        outcome.computed,
        outcome.reused,
        out.map(|p| format!(", written to {}", p.display())).unwrap_or_default()
    );
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut config = args.run.config().with_functionals(functional_set(&args.functionals)?);
    if !args.k.is_empty() {
        config.targets = TargetSet::FixedK { ks: args.k.clone() };
    }
    let outcome = run_simulate(&config, args.run.control())?;
    report_run(&outcome, config.out.as_deref());
    if config.out.is_none() {
        for r in &outcome.records {
            println!("{}", serde_json::to_string(r).expect("records serialize"));
        }
    }
    Ok(())
}

fn landscape(args: LandscapeArgs) -> Result<(), Failure> {
    let pairs = parse_pairs(&args.pairs)?;
    let config = args
        .run
        .config()
        .with_targets(TargetSet::Landscape { pairs })
        .with_functionals(FunctionalSet::S_ONLY);
    let outcome = run_landscape(&config, args.run.control())?;
    report_run(&outcome, config.out.as_deref());
    if config.out.is_none() {
        for r in &outcome.records {
            println!("{}", serde_json::to_string(r).expect("records serialize"));
        }
    }
    Ok(())
}

fn couple(args: CoupleArgs) -> Result<(), Failure> {
    let mut config = args.run.config();
    config.coupling.t = args.t;
    config.coupling.origins = args.origins;
    let summary = run_couple(&config)?;
    emit(&serde_json::to_value(&summary).expect("summaries serialize"), config.out.as_deref())?;
    if summary.violations() > 0 {
        return Err(Failure::Check(format!("{} coupling-bound violations", summary.violations())));
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let workers = args.workers.unwrap_or_else(rwre_core::harness::default_workers);
    let report = match &args.records {
        Some(path) => verify_records(path, workers)?,
        None => {
            let mut params = VerifyParams {
                max_steps: args.max_steps,
                environments: args.environments,
                sandwich_instances: args.instances,
                max_dx: args.max_dx,
                max_dy: args.max_dy,
                seed: args.seed,
                workers,
                ..Default::default()
            };
            if !args.env.is_empty() {
                params.families = args
                    .env
                    .iter()
                    .map(|s| s.parse::<EnvironmentSpec>().map_err(|e| Failure::Usage(e.to_string())))
                    .collect::<Result<_, _>>()?;
            }
            run_verify(&params)?
        }
    };
    emit(&serde_json::to_value(&report).expect("summaries serialize"), args.out.as_deref())?;
    for c in &report.checks {
        eprintln!("{:<24} checked {:>10}  violated {:>6}", c.name, c.checked, c.violated);
    }
    if !report.passed() {
        return Err(Failure::Check("verification found violations".into()));
    }
    Ok(())
}

fn gue(args: GueArgs) -> Result<(), Failure> {
    let build = || match args.kind {
        ReferenceArg::Tw => tw_reference(args.size, args.samples, args.seed),
        ReferenceArg::Lambda => lambda_k_reference(args.size, args.samples, args.seed),
        ReferenceArg::Normal => normal_reference(args.samples, args.seed),
    };
    let reference = match args.workers {
        Some(w) => rwre_core::harness::thread_pool(w)?.install(build)?,
        None => build()?,
    };
    reference.write_jsonl(&args.out)?;
    eprintln!("wrote {} samples to {}", reference.samples.len(), args.out.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mut params = AnalyzeParams::new(args.statistic);
    params.threshold = args.threshold;
    params.expected_a = args.a;
    params.bootstrap_resamples = args.bootstrap;
    params.seed = args.seed;
    let (summary, csv) = run_analyze(&args.records, args.reference.as_deref(), &params)?;
    if let Some(p) = &args.csv {
        std::fs::write(p, csv).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
    }
    emit(&serde_json::to_value(&summary).expect("summaries serialize"), args.out.as_deref())?;
    if summary.pass == Some(false) {
        return Err(Failure::Check(format!(
            "decisive value {:?} exceeds threshold {:?}",
            summary.decisive, summary.threshold
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Couple(a) => couple(a),
        Command::Landscape(a) => landscape(a),
        Command::Gue(a) => gue(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
