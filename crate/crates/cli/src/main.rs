mod inspect;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seedbank::suite::{run_suite, SuiteLevel, SuiteOptions};

#[derive(Parser, Debug)]
#[command(
    name = "seedbank",
    version,
    about = "Multi-colony Moran model with seed-banks: simulation and verification"
)]
struct Cli {
    /// Worker threads for replicate parallelism (default: all cores).
    #[arg(long, global = true, env = "SEEDBANK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the forward (and optional dual) experiment described by a config file.
    Run(ExperimentArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
    /// Dump generator and duality matrices of a small system.
    Oracle(OracleArgs),
    /// Partial-sum diagnostics for the duality summability conditions.
    KernelCheck(KernelCheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentArgs {
    /// Experiment config, or a run manifest to replay.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted-path config override, e.g. `geometry.L=8`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Gzip the snapshot table.
    #[arg(long)]
    pub gzip: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Quick,
    Full,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "quick")]
    suite: Suite,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for `report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replicates per statistical check.
    #[arg(long)]
    replicates: Option<u64>,
    /// Trajectories per property suite.
    #[arg(long)]
    property_runs: Option<u64>,
    /// Perturb one dual rate; the suite must then fail.
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Largest dual particle count to enumerate.
    #[arg(long, default_value_t = 2)]
    pub particles: u32,
    /// Time at which the exact duality gap is reported.
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Exponential,
    Polynomial,
}

#[derive(Args, Debug)]
pub struct KernelCheckArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_enum, default_value = "exponential")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Kernel tail exponent bound for polynomial mode.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 256)]
    pub max_radius: u64,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

fn verify(args: VerifyArgs) -> Outcome<bool> {
    let level = match args.suite {
        Suite::Quick => SuiteLevel::Quick,
        Suite::Full => SuiteLevel::Full,
    };
    let mut opts = SuiteOptions::new(level, args.seed);
    if let Some(r) = args.replicates {
        opts.replicates = r;
    }
    if let Some(r) = args.property_runs {
        opts.property_runs = r;
    }
    opts.inject_fault = args.inject_fault;
    let report = run_suite(&opts).map_err(|e| Failure::Runtime(e.into()))?;
    for c in report.failures() {
        eprintln!(
            "FAILED {}: metric {:e}, threshold {:e}",
            c.name, c.metric, c.threshold
        );
    }
    if let Some(dir) = args.out {
        let path = dir.join("report.json");
        output::write_bytes(&path, report.to_json().as_bytes()).map_err(Failure::Runtime)?;
        log::info!("report written to {}", path.display());
    }
    println!(
        "verify {:?}: {} ({} checks, {} failed)",
        level,
        if report.pass { "PASS" } else { "FAIL" },
        report.checks.len(),
        report.failures().count()
    );
    Ok(report.pass)
}

fn dispatch(command: Command) -> Outcome<ExitCode> {
    match command {
        Command::Run(args) => run::run(&args).map(|_| ExitCode::SUCCESS),
        Command::Verify(args) => verify(args).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }),
        Command::Oracle(args) => inspect::oracle(&args).map(|_| ExitCode::SUCCESS),
        Command::KernelCheck(args) => inspect::kernel_check(&args).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match std::panic::catch_unwind(|| dispatch(cli.command)) {
        Ok(Ok(code)) => code,
        Ok(Err(failure)) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &failure;
            eprintln!("error: {e:#}");
            ExitCode::from(failure.code())
        }
        Err(_) => {
            eprintln!("error: internal assertion failed");
            ExitCode::from(3)
        }
    }
}
