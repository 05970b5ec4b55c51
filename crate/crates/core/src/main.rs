use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use phmin::am::{AmConfig, InitKind};
use phmin::cli::{bench, convert_input, solve_input, BenchOptions, SolveOptions, EXIT_INVALID};
use phmin::io::{load_input, load_matrix, to_json};
use phmin::phgen::Variant;
use phmin::PhError;

#[derive(Parser)]
#[command(
    name = "phmin",
    version,
    about = "Minimal-order phase-type representations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a representation of a transform or generating function.
    Solve {
        input: PathBuf,
        /// jordan-plus-ones, jordan, minus-xi-i or file:PATH
        #[arg(long, default_value = "jordan-plus-ones")]
        init: String,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol_term: Option<f64>,
        /// Success when F < n^2 times this factor.
        #[arg(long)]
        success_factor: Option<f64>,
        #[arg(long)]
        qp_tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Total number of starts.
        #[arg(long, default_value_t = 1)]
        multistart: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep the whole objective trace in the report.
        #[arg(long)]
        trace_full: bool,
    },
    /// Rewrite a generating function as a continuous transform.
    Convert {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the solver on generated instances.
    Bench {
        /// Orders to test, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, value_enum, default_value = "balanced")]
        variant: VariantArg,
        /// Probability parameter of the sparse and stiff variants.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Balanced,
    Sparse,
    Stiff,
}

fn parse_init(s: &str) -> Result<InitKind, PhError> {
    match s {
        "jordan-plus-ones" => Ok(InitKind::JordanPlusOnesMinusI),
        "jordan" => Ok(InitKind::Jordan),
        "minus-xi-i" => Ok(InitKind::MinusXiI),
        _ => match s.strip_prefix("file:") {
            Some(path) => Ok(InitKind::Custom(load_matrix(Path::new(path))?)),
            None => Err(PhError::InvalidInput(format!("unknown --init value {s:?}"))),
        },
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), PhError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| PhError::InvalidInput(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32, PhError> {
    match cli.command {
        Command::Solve {
            input,
            init,
            max_iter,
            tol_term,
            success_factor,
            qp_tol,
            seed,
            multistart,
            out,
            trace_full,
        } => {
            let mut config = AmConfig::with_init(parse_init(&init)?);
            if let Some(v) = max_iter {
                config.max_outer_iter = v;
            }
            if let Some(v) = tol_term {
                config.tol_term = v;
            }
            if let Some(v) = success_factor {
                config.success_threshold_factor = v;
            }
            if let Some(v) = qp_tol {
                config.qp_tol = v;
            }
            let opts = SolveOptions {
                config,
                multistart,
                seed,
                trace_full,
            };
            let input = load_input(&input)?;
            let report = solve_input(&input, &opts)?;
            emit(&to_json(&report), out.as_deref())?;
            eprintln!(
                "{:?}: F = {:e} after {} iterations",
                report.outcome,
                report.f_final.unwrap_or(f64::NAN),
                report.iterations
            );
            Ok(report.exit_code())
        }
        Command::Convert { input, out } => {
            let lst = convert_input(&load_input(&input)?)?;
            emit(&to_json(&lst), out.as_deref())?;
            Ok(0)
        }
        Command::Bench {
            n,
            count,
            variant,
            p,
            seed,
            max_iter,
            out,
        } => {
            let variant = match variant {
                VariantArg::Balanced => Variant::Balanced,
                VariantArg::Sparse => Variant::Sparse(p),
                VariantArg::Stiff => Variant::Stiff(p),
            };
            let mut config = AmConfig::default();
            if let Some(v) = max_iter {
                config.max_outer_iter = v;
            }
            let report = bench(&BenchOptions {
                orders: n,
                count,
                variant,
                seed,
                config,
            })?;
            eprint!("{}", report.table());
            emit(&to_json(&report), out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID as u8)
        }
    }
}
