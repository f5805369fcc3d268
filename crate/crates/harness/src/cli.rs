//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiments::{run, ExperimentKind};
use crate::report::Format;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fvre", version, about = "Moran / Fleming–Viot simulation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward Moran against backward dual moment estimates.
    DualityCheck(CommonArgs),
    /// Exact generator identities and the Moran→FV convergence rate.
    GeneratorCheck(CommonArgs),
    /// Degree chain of the dual: first move, absorption, monotonicity.
    DegreeChain(CommonArgs),
    /// Long-time limit via the dual against the stationary environment.
    ErgodicLimit(CommonArgs),
    /// One forward trajectory.
    MoranSim(CommonArgs),
    /// One dual path.
    DualSim(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, CommonArgs) {
        match self {
            Self::DualityCheck(a) => (ExperimentKind::DualityCheck, a),
            Self::GeneratorCheck(a) => (ExperimentKind::GeneratorCheck, a),
            Self::DegreeChain(a) => (ExperimentKind::DegreeChain, a),
            Self::ErgodicLimit(a) => (ExperimentKind::ErgodicLimit, a),
            Self::MoranSim(a) => (ExperimentKind::MoranSim, a),
            Self::DualSim(a) => (ExperimentKind::DualSim, a),
        }
    }
}

/// Parses `argv`, runs the experiment and returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("fvre: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("fvre: {e}");
            EXIT_FAIL
        }
    }
}

fn execute(kind: ExperimentKind, args: CommonArgs) -> Result<bool, HarnessError> {
    let path = args.config.ok_or_else(|| HarnessError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::load(&path)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(out) = args.out {
        config.output = Some(out);
    }
    let format = match args.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let report = match args.threads {
        Some(0) => return Err(HarnessError::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot build thread pool: {e}")))?
            .install(|| run(kind, &config))?,
        None => run(kind, &config)?,
    };
    let text = report.render(format);
    match &config.output {
        Some(out) => std::fs::write(out, text)?,
        None => print!("{text}"),
    }
    eprint!("{}", report.summary());
    Ok(report.passed())
}
