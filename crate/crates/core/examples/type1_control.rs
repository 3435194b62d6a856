//! Rejecting when the Bayes factor first reaches 20 keeps the null
//! rejection rate below 5% whatever the true scale, and the stopped Bayes
//! factor still averages one.
//!
//! `cargo run --release --example type1_control -- 20000`

use optstop::montecarlo::{derive_seed, estimate_stopped_bf_mean, estimate_type1, Simulator};
use optstop::{GroupElement, Hypothesis, InvariantModelPair, SignificanceLevel, StoppingRule};

fn main() -> optstop::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let alpha = SignificanceLevel::new(0.05)?;
    let rule = StoppingRule::bf_threshold(alpha.bf_threshold(), None, 1000)?;
    let sim = Simulator::new(InvariantModelPair::one_sample_t(1.0)?, rule)?;

    for (i, c) in [0.25, 1.0, 4.0].into_iter().enumerate() {
        let r0 = sim.run_trials(
            Hypothesis::Null,
            GroupElement::scale(c)?,
            n,
            derive_seed(1, &[i as u64, 0]),
        )?;
        let t = estimate_type1(&r0, alpha)?;
        let m = estimate_stopped_bf_mean(&r0)?;
        println!(
            "sigma = {c:>4}: rejection rate {:.4} (Wilson CI [{:.4}, {:.4}]), mean beta_tau {:.3} ± {:.3}",
            t.rate,
            t.ci_lo,
            t.ci_hi,
            m.mean,
            1.96 * m.se
        );
    }
    Ok(())
}
