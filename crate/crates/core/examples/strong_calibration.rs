//! Simulates the one-sample t-test under a two-sided threshold rule and
//! checks, at several true scales, that the H1/H0 frequency ratio of the
//! stopped Bayes factor matches the Bayes factor itself.
//!
//! `cargo run --release --example strong_calibration -- 20000`

use optstop::montecarlo::{derive_seed, estimate_strong_calibration, Simulator};
use optstop::{GroupElement, Hypothesis, InvariantModelPair, StoppingRule};

fn main() -> optstop::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let rule = StoppingRule::bf_threshold(5.0, Some(0.2), 200)?;
    let sim = Simulator::new(InvariantModelPair::one_sample_t(1.0)?, rule)?;

    for (i, c) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let g = GroupElement::scale(c)?;
        let r0 = sim.run_trials(Hypothesis::Null, g, n, derive_seed(1, &[i as u64, 0]))?;
        let r1 = sim.run_trials(Hypothesis::Alt, g, n, derive_seed(1, &[i as u64, 1]))?;
        let est = estimate_strong_calibration(&r0, &r1, 20)?;
        println!("sigma = {c}: {}/{} bins covered", est.covered, est.eligible);
        for b in est.bins.iter().filter(|b| b.ratio.is_some()) {
            println!(
                "  log beta in [{:>7.3}, {:>7.3}]  ratio {:>8.4}  CI [{:>8.4}, {:>8.4}]  predicted {:>8.4}",
                b.log_beta_lo,
                b.log_beta_hi,
                b.ratio.unwrap(),
                b.ci_lo.unwrap(),
                b.ci_hi.unwrap(),
                b.predicted_ratio
            );
        }
    }
    Ok(())
}
