use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use optstop::cli::{self, ExperimentKind, RunOptions};
use optstop::Error;

/// Bayes factor calibration and Type-I error checks under optional stopping.
#[derive(Debug, Parser)]
#[command(name = "optstop", version)]
struct Args {
    /// exact-calibration, exact-markov, exact-expectation, mc-strong-calibration,
    /// mc-type1, mc-bf-mean, mc-marginal-calibration or invariance-check
    kind: String,

    /// Experiment config (`key = value` lines).
    #[arg(long, required_unless_present = "describe")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print what the experiment checks and exit.
    #[arg(long)]
    describe: bool,
}

fn threads_from_env() -> Result<Option<usize>, Error> {
    match std::env::var("OPTSTOP_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "OPTSTOP_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("optstop: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(args: Args) -> Result<u8, Error> {
    let kind: ExperimentKind = args.kind.parse()?;
    if args.describe {
        println!(
            "{}\n\nall experiments:\n{}",
            cli::describe(kind),
            cli::describe_all()
        );
        return Ok(0);
    }
    let path = args.config.expect("clap requires --config");
    let config = cli::load_config(kind, &path)?;
    let options = RunOptions {
        seed: args.seed,
        out: args.out,
        threads: threads_from_env()?,
    };
    let outcome = cli::run(&config, &options)?;
    let verdict = outcome.out_dir.join("verdict.txt");
    if let Ok(text) = std::fs::read_to_string(&verdict) {
        print!("{text}");
    }
    Ok(outcome.exit_code() as u8)
}
