//! `g2coflow`: validation, reduction, flows, closed forms and solitons for
//! almost-abelian Lie algebras from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use g2coflow::coflow::Adjoint;
use g2coflow::Error;

#[derive(Parser, Debug)]
#[command(name = "g2coflow", version, about = "Laplacian coflow of coclosed G2-structures on almost-abelian Lie algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check stability, positivity, |phi|^2 and coclosedness of the input.
    Check(RunArgs),
    /// Rebase to a unit normal e7 and print the SU(3)-structure on h.
    Reduce(RunArgs),
    /// Adapted frame, s, theta and l of the bracket.
    NormalForm(RunArgs),
    /// Integrate the reduced coflow over [t0, t1]; initial data sits at t = 0.
    Flow(RunArgs),
    /// Sample the closed-form solution of the symmetric, skew or block family.
    Exact(RunArgs),
    /// Solve the algebraic soliton equation.
    Soliton(RunArgs),
    /// Sample the self-similar solution of a soliton.
    Selfsim(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AdjointArg {
    Evolving,
    Frozen,
}

impl From<AdjointArg> for Adjoint {
    fn from(a: AdjointArg) -> Adjoint {
        match a {
            AdjointArg::Evolving => Adjoint::Evolving,
            AdjointArg::Frozen => Adjoint::Frozen,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Algebra file: {"A": 6x6 rows, "phi"?: form, "basis"?: 7x7 rows}.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file (a directory with --sweep); stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub t1: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Parameter grid file for `flow`: {"runs": [{"label", "A", "t1", ...}]}.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "evolving")]
    pub adjoint: AdjointArg,
    /// Number of sample intervals for `exact`, `soliton` and `selfsim`.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_BLOWUP: u8 = 4;
pub const EXIT_TOLERANCE: u8 = 5;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_) | Error::InvalidIndex(_) => EXIT_PARSE,
        Error::BlowUp { .. } | Error::OutOfDomain { .. } => EXIT_BLOWUP,
        Error::ToleranceFailure(_) => EXIT_TOLERANCE,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let args = match &cli.command {
        Command::Check(a)
        | Command::Reduce(a)
        | Command::NormalForm(a)
        | Command::Flow(a)
        | Command::Exact(a)
        | Command::Soliton(a)
        | Command::Selfsim(a) => a,
    };
    if let Err(msg) = commands::validate_range(args.t0, args.t1, args.tol) {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    let result = match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Reduce(a) => commands::reduce(a),
        Command::NormalForm(a) => commands::normal_form(a),
        Command::Flow(a) => commands::flow(a),
        Command::Exact(a) => commands::exact(a),
        Command::Soliton(a) => commands::soliton(a),
        Command::Selfsim(a) => commands::selfsim(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
