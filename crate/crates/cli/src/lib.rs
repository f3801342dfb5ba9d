//! Command-line front end: argument parsing, config files, experiment
//! pipelines and their CSV/JSON outputs.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{HelmholtzArgs, QuasimodeArgs, ReportArgs, ResolventArgs, SphereArgs, WaveArgs};
pub use output::{emit_plot_data, ExperimentManifest, PlotKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

/// Output directory used when neither `--out` nor the config sets one.
pub const OUT_ENV: &str = "TUBEWAVE_OUT";

#[derive(Debug, Parser)]
#[command(name = "tubewave", version, about = "Resolvent, quasimode and decay experiments on flat product tori")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest singular value of L_h over a geometric h-grid, with a power-law fit.
    ResolventScan(ResolventArgs),
    /// Best constant of the ball-by-annulus Helmholtz estimate over a tau sweep.
    HelmholtzConstant(HelmholtzArgs),
    /// Damped wave simulation from trapped initial data and a decay-rate fit.
    WaveDecay(WaveArgs),
    /// Tube masses of (x1 + i x2)^n on the sphere and the inner/annulus ratio.
    SphereTube(SphereArgs),
    /// Randomized quasimode suite on the 2-torus.
    QuasimodeCheck(QuasimodeArgs),
    /// Summarizes the manifests found in an output directory.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ResolventScan(_) => "resolvent-scan",
            Command::HelmholtzConstant(_) => "helmholtz-constant",
            Command::WaveDecay(_) => "wave-decay",
            Command::SphereTube(_) => "sphere-tube",
            Command::QuasimodeCheck(_) => "quasimode-check",
            Command::Report(_) => "report",
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file whose keys mirror the long flags; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory [default: $TUBEWAVE_OUT, else `runs`].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for parameter sweeps [default: all cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write zero in timing columns and omit wall-clock fields, so that reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

/// A problem the user can fix by changing the input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Maps an error chain onto the documented exit codes.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(core) = cause.downcast_ref::<tubewave::Error>() {
            return match core.root() {
                tubewave::Error::NonConvergence { .. } | tubewave::Error::Quadrature { .. } | tubewave::Error::Eigen(_) => {
                    EXIT_NONCONVERGENCE
                }
                _ => EXIT_VALIDATION,
            };
        }
    }
    EXIT_FAILURE
}
