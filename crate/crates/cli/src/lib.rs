//! `dtnlab`: run the verification suites from a JSON configuration.
//!
//! Exit codes: 0 when every selected check passes or is report-only, 1 when
//! a pass/fail check fails, 2 on configuration or usage errors.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;

pub use config::RunConfig;

/// Environment variable capping the worker pool size; 0 means automatic.
pub const THREADS_VAR: &str = "DTNLAB_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Usage(String),
    Core(dtnlab_core::Error),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dtnlab_core::Error> for CliError {
    fn from(e: dtnlab_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "dtnlab", version, about = "Discrete Dirichlet-to-Neumann semigroup checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; defaults to the config's `output`, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Boundary,
    Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Invariance,
    DominationForm,
    Positivity,
    Contractivity,
    Diamagnetic,
    Gauge,
    TraceHypotheses,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh statistics and quality.
    MeshInfo {
        #[command(flatten)]
        common: Common,
    },
    /// The lowest Steklov eigenvalues.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 6)]
        count: usize,
    },
    /// Apply the semigroup at time t to a vector.
    SemigroupApply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = SpaceArg::Boundary)]
        space: SpaceArg,
        /// JSON array of numbers or `[re, im]` pairs; defaults to all ones.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// The kernel matrix at time t as CSV.
    KernelExport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = SpaceArg::Boundary)]
        space: SpaceArg,
    },
    /// Run a verification suite and write a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
    },
    /// Positivity of the boundary semigroup across a range of `a0`.
    ScanThreshold {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the small-time trace exponent.
    FitTrace {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the Poisson-type kernel constant.
    FitPoisson {
        #[command(flatten)]
        common: Common,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_VAR} must be a non-negative integer, got {value:?}")))?;
    if n > 0 {
        // Fails only if the pool already exists, e.g. when run twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name), writing the result
/// to `stdout` unless redirected and diagnostics to `stderr`.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = configure_threads().and_then(|()| commands::execute(&cli.command, stdout, stderr));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

/// Runs the CLI against the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
