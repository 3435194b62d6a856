//! Stopping rules built from the Bayes factor or the maximal invariant
//! decide the same way on x and on any rescaled copy of x; a rule on the
//! raw sum of squares does not.

use optstop::stopping::{invariant_statistic, raw_statistic};
use optstop::{check_invariance, GroupKind, InvariantModelPair, StoppingRule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> optstop::Result<()> {
    let pair = InvariantModelPair::one_sample_t(1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rules = [
        StoppingRule::bf_threshold(10.0, Some(0.1), 100)?,
        StoppingRule::fixed_n(25)?,
        StoppingRule::invariant_statistic(
            GroupKind::Scale,
            invariant_statistic("abs_cosine")?,
            0.8,
            100,
        )?,
        StoppingRule::raw_statistic(raw_statistic("sum_sq")?, 20.0, 100)?,
    ];
    for rule in &rules {
        let rep = check_invariance(rule, &pair, 5_000, &mut rng)?;
        print!(
            "{:<40} declared invariant: {:<5} agreements {}/{}",
            rule.describe(),
            rep.declared_invariant,
            rep.agreements,
            rep.trials
        );
        match &rep.counterexample {
            Some(c) => println!(
                "  counterexample: {:?} at n = {} but {:?} after scaling by {}",
                c.decision_x,
                c.x.len(),
                c.decision_gx,
                c.g.scale_factor()
            ),
            None => println!(),
        }
    }
    Ok(())
}
