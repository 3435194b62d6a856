//! Calibration given the first observation: the nuisance scale and effect
//! are drawn from their posterior given x_1, the sequence continues, and
//! the conditional Bayes factor is binned as in strong calibration.

use optstop::montecarlo::estimate_marginal_calibration;
use optstop::{InvariantModelPair, StoppingRule};

fn main() -> optstop::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let pair = InvariantModelPair::one_sample_t(1.0)?;
    let rule = StoppingRule::bf_threshold(5.0, Some(0.2), 200)?;
    for x1 in [1.0, -0.3] {
        let (est, records) = estimate_marginal_calibration(&pair, &[x1], &rule, n, 7, 20)?;
        let mean_stop =
            records.iter().map(|r| r.stop_index as f64).sum::<f64>() / records.len() as f64;
        println!(
            "x_1 = {x1:>5}: {}/{} bins covered, coverage {:.3}, mean stopping time {mean_stop:.1}",
            est.covered, est.eligible, est.coverage
        );
    }
    Ok(())
}
