mod commands;
mod source;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use osk_core::Tolerances;

use crate::source::Source;

/// Exit code 2: bad input or a failed precondition.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit code 3: two routes (or both sides of an identity) disagree.
pub const EXIT_DISAGREEMENT: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Disagreement(String),
}

impl From<osk_core::Error> for CliError {
    fn from(e: osk_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("io: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "osk", version, about = "Oscillation numbers, comparative indices and Maslov indices of Lagrangian paths")]
struct Cli {
    #[command(flatten)]
    tol: TolArgs,

    /// Print diagnostics to stderr (repeat for more).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TolArgs {
    /// Relative singular-value cut for rank decisions (overrides OSK_TOL_RANK).
    #[arg(long, global = true)]
    rank_rtol: Option<f64>,
    #[arg(long, global = true)]
    struct_atol: Option<f64>,
    #[arg(long, global = true)]
    angle_atol: Option<f64>,
}

impl TolArgs {
    fn resolve(&self) -> CliResult<Tolerances> {
        let mut tol = Tolerances::from_env()?;
        if let Some(v) = self.rank_rtol {
            tol.rank_rtol = v;
        }
        if let Some(v) = self.struct_atol {
            tol.struct_atol = v;
        }
        if let Some(v) = self.angle_atol {
            tol.angle_atol = v;
        }
        tol.validate()?;
        Ok(tol)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Oscillation numbers (and Maslov indices with --against) by every applicable route.
    Compute {
        #[command(flatten)]
        src: Source,
        /// Reference path: `e` for the constant vertical plane, or a path file.
        #[arg(long)]
        against: Option<String>,
    },
    /// Run a randomized property suite.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Fixed dimension for every trial.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Replay a single trial.
        #[arg(long)]
        trial: Option<usize>,
        /// Directory for failing-instance dumps.
        #[arg(long, default_value = "osk-failures")]
        dump_dir: PathBuf,
    },
    /// Lidskii angle trace as CSV, optionally plotted to SVG.
    Angles {
        #[command(flatten)]
        src: Source,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Generate a path file.
    Gen {
        #[command(flatten)]
        src: Source,
        /// Prescribed oscillation number (needs --r; uses the family of --hamiltonian or a random one).
        #[arg(long, allow_negative_numbers = true, requires = "r")]
        ell: Option<i64>,
        #[arg(long, allow_negative_numbers = true, requires = "ell")]
        r: Option<i64>,
        /// Endpoint used when ell == r.
        #[arg(long, value_parser = ["a", "b"])]
        endpoint: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Comparative index of two frames, cross-checked by Lidskii angles.
    CompareIndex {
        /// Frame file or path file (first frame is used).
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        yhat: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let tol = cli.tol.resolve()?;
    let v = cli.verbose;
    match cli.command {
        Command::Compute { src, against } => commands::compute(&src, against.as_deref(), &tol, v),
        Command::Verify {
            suite,
            trials,
            seed,
            n,
            n_max,
            threads,
            trial,
            dump_dir,
        } => {
            let mut cfg = osk_core::suites::SuiteConfig::new(trials, seed);
            cfg.n = n;
            cfg.n_max = n_max;
            cfg.only_trial = trial;
            cfg.tol = tol;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            commands::verify(&suite, &cfg, &dump_dir, v)
        }
        Command::Angles { src, csv, svg } => commands::angles(&src, csv.as_deref(), svg.as_deref(), &tol),
        Command::Gen {
            src,
            ell,
            r,
            endpoint,
            out,
        } => commands::gen(&src, ell.zip(r), endpoint.as_deref(), out.as_deref(), &tol),
        Command::CompareIndex { y, yhat } => commands::compare_index(&y, &yhat, &tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(CliError::Disagreement(m)) => {
            eprintln!("disagreement: {m}");
            ExitCode::from(EXIT_DISAGREEMENT)
        }
    }
}
