//! Enumerates every stopped sequence of a Bernoulli model and checks that
//! the stopped Bayes factor is calibrated and has null mean one.

use optstop::exact::{build_table, verify_calibration, verify_expected_stopped_bf, FiniteModel};
use optstop::{Hypothesis, StoppingRule};

fn main() -> optstop::Result<()> {
    // θ = 1/2 against a uniform prior on θ, ten tosses at most.
    let model = FiniteModel::bernoulli_point_vs_uniform(0.5, 10_000, 10)?;
    let rule = StoppingRule::bf_threshold(3.0, None, 10)?;
    let table = build_table(&model, &rule, 1 << 20)?;

    println!(
        "{} stopped sequences under {}",
        table.len(),
        rule.describe()
    );
    println!(
        "total mass: {:.15} (H0), {:.15} (H1)",
        table.total_mass(Hypothesis::Null),
        table.total_mass(Hypothesis::Alt)
    );

    let report = verify_calibration(&table, 1e-9);
    println!(
        "\n{:>12} {:>8} {:>14} {:>14} {:>10}",
        "beta", "seqs", "P0", "P1", "residual"
    );
    for g in &report.groups {
        println!(
            "{:>12.6} {:>8} {:>14.6e} {:>14.6e} {:>10.2e}",
            g.log_beta.exp(),
            g.entries,
            g.mass0,
            g.mass1,
            g.residual
        );
    }
    println!("calibrated: {}", report.passed);
    println!("E0[beta_tau] = {:.16}", verify_expected_stopped_bf(&table));
    Ok(())
}
