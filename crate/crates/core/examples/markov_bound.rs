//! Exact probability, under the null, that the Bayes factor ever reaches
//! 1/α within the horizon. Markov's inequality bounds it by α.

use optstop::exact::{build_table, verify_markov_bound, FiniteModel};
use optstop::{SignificanceLevel, StoppingRule};

fn main() -> optstop::Result<()> {
    let horizon = 12;
    let model = FiniteModel::bernoulli_point_vs_uniform(0.5, 10_000, horizon)?;
    let alphas: Vec<SignificanceLevel> = [0.01, 0.05, 0.1, 0.2]
        .into_iter()
        .map(SignificanceLevel::new)
        .collect::<optstop::Result<_>>()?;

    // One table per level, stopping at the first crossing.
    println!(
        "{:>6} {:>10} {:>14} {:>6}",
        "alpha", "1/alpha", "P0(cross)", "holds"
    );
    for a in &alphas {
        let rule = StoppingRule::bf_threshold(a.bf_threshold(), None, horizon)?;
        let table = build_table(&model, &rule, 1 << 20)?;
        let row = &verify_markov_bound(&table, &[*a]).rows[0];
        println!(
            "{:>6} {:>10} {:>14.10} {:>6}",
            a.alpha(),
            a.bf_threshold(),
            row.probability,
            row.holds
        );
    }

    // The same numbers from the running maximum on the full tree.
    let full = build_table(&model, &StoppingRule::fixed_n(horizon)?, 1 << 20)?;
    let report = verify_markov_bound(&full, &alphas);
    println!("\nfixed-horizon cross-check:");
    for row in &report.rows {
        println!("  alpha {:>5}: {:.10}", row.alpha, row.probability);
    }
    Ok(())
}
