//! Runs an experiment through the same path as the `optstop` binary and
//! prints the verdict table.

use optstop::cli::{self, ExperimentConfig, ExperimentKind, RunOptions};

fn main() -> optstop::Result<()> {
    let config = ExperimentConfig::parse(
        ExperimentKind::McBfMean,
        "# small run\nn_trials = 5000\nrule_cap = 300\ng = 0.5, 2\n",
    )?;
    let out = std::env::temp_dir().join("optstop-example");
    let outcome = cli::run(
        &config,
        &RunOptions {
            out: Some(out.clone()),
            ..Default::default()
        },
    )?;
    print!(
        "{}",
        std::fs::read_to_string(out.join("verdict.txt")).unwrap_or_default()
    );
    println!(
        "outputs in {}, exit code {}",
        out.display(),
        outcome.exit_code()
    );
    Ok(())
}
