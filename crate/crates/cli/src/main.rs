//! `qstretch` command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qstretch::ErrorKind;

#[derive(Parser, Debug)]
#[command(name = "qstretch", version, about = "Stretched-exponential diffusion fitting and q-space measures")]
pub struct Cli {
    /// Worker threads for voxel-wise work (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic phantom from a JSON description.
    Phantom(PhantomArgs),
    /// Fit the stretched-exponential model per direction in every voxel.
    Fit(FitArgs),
    /// Compute RTOP, QMSD and QMFD maps.
    Measures(MeasuresArgs),
    /// Check the estimators against closed forms and brute-force quadrature.
    Verify(VerifyArgs),
    /// Correlations between maps, or a b_max sweep.
    Analyze {
        #[command(subcommand)]
        which: AnalyzeCommand,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct TableArgs {
    /// Diffusion-weighted 4-D NIfTI.
    #[arg(long)]
    pub dwi: Option<PathBuf>,
    /// FSL-style b-values.
    #[arg(long)]
    pub bvals: Option<PathBuf>,
    /// FSL-style gradient directions.
    #[arg(long)]
    pub bvecs: Option<PathBuf>,
    /// Effective diffusion time Δ − δ/3 [s].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Mask NIfTI; nonzero voxels are processed.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Max b-value difference within one shell [s/mm²].
    #[arg(long)]
    pub b_tolerance: Option<f64>,
    /// Max angle for matching directions across shells [deg].
    #[arg(long)]
    pub angular_tolerance: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Phantom description (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the seed in the description.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the DWI as float32 instead of float64.
    #[arg(long)]
    pub float32: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Shells to fit, comma separated [s/mm²] (default: all).
    #[arg(long, value_delimiter = ',')]
    pub shells: Option<Vec<f64>>,
    /// Output fit container.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorArg {
    Direct,
    Expansion,
    Gaussian,
    #[value(name = "dti-3pi")]
    Dti3Pi,
    DtiGaussian,
}

impl EstimatorArg {
    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorArg::Direct => "direct",
            EstimatorArg::Expansion => "expansion",
            EstimatorArg::Gaussian => "gaussian",
            EstimatorArg::Dti3Pi => "dti-3pi",
            EstimatorArg::DtiGaussian => "dti-gaussian",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ESourceArg {
    Fitted,
    Measured,
}

#[derive(Args, Debug)]
pub struct MeasuresArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Fit container from `qstretch fit` (otherwise the DWI is fitted here).
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Shells to fit when fitting here, comma separated [s/mm²].
    #[arg(long, value_delimiter = ',')]
    pub shells: Option<Vec<f64>>,
    /// Evaluation shell [s/mm²].
    #[arg(long)]
    pub shell: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Where shell attenuations come from.
    #[arg(long, value_enum)]
    pub e_source: Option<ESourceArg>,
    /// Resample each shell onto a uniform direction set through spherical harmonics.
    #[arg(long)]
    pub resample_sh: bool,
    #[arg(long)]
    pub sh_order: Option<usize>,
    #[arg(long)]
    pub sh_lambda: Option<f64>,
    /// Output directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gaussian,
    Oracle,
    All,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Random anisotropic fields in the oracle suite.
    #[arg(long, default_value_t = 3)]
    pub fields: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Pearson correlation matrix between 3-D maps.
    Corr(CorrArgs),
    /// Refit with increasing b_max and report map changes.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct CorrArgs {
    /// NAME=PATH, at least two.
    #[arg(long = "map", required = true)]
    pub maps: Vec<String>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Also write a scatter table of the first two maps.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Output CSV (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// b_max values, comma separated (default: every shell from the second on).
    #[arg(long, value_delimiter = ',')]
    pub bmax: Option<Vec<f64>>,
    /// Fixed evaluation shell for the stretched estimator (default: lowest shell).
    #[arg(long)]
    pub b_eval: Option<f64>,
    /// Output CSV (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// A problem with how the program was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<qstretch::Error>() {
            return match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            };
        }
        if cause.is::<verify::VerifyFailed>() {
            return 3;
        }
    }
    // I/O and parse failures on inputs
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
