//! Log-space algebra of Bayes factors, posterior odds and stopped values.
//!
//! Every likelihood quantity is carried as a natural logarithm: the Bayes
//! factor of a sequence of length `n` grows or decays geometrically in `n`,
//! so linear-space products overflow long before realistic horizons.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stopping::{Decision, StoppingRule};

/// Which of the two hypotheses generated (or is scored against) the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    Null,
    Alt,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::Null, Hypothesis::Alt];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::Null => 0,
            Hypothesis::Alt => 1,
        }
    }

    pub fn from_index(k: usize) -> Result<Self> {
        match k {
            0 => Ok(Hypothesis::Null),
            1 => Ok(Hypothesis::Alt),
            _ => Err(invalid(format!("hypothesis index must be 0 or 1, got {k}"))),
        }
    }
}

/// Natural log of the prior odds `π(H1) / π(H0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PriorOdds {
    log_odds: f64,
}

impl PriorOdds {
    pub fn new(log_odds: f64) -> Result<Self> {
        if !log_odds.is_finite() {
            return Err(invalid(format!(
                "log prior odds must be finite, got {log_odds}"
            )));
        }
        Ok(Self { log_odds })
    }

    pub fn from_ratio(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(invalid(format!(
                "prior odds must be positive and finite, got {ratio}"
            )));
        }
        Self::new(ratio.ln())
    }

    /// Equal prior odds.
    pub fn even() -> Self {
        Self { log_odds: 0.0 }
    }

    pub fn log_odds(self) -> f64 {
        self.log_odds
    }
}

/// Log posterior odds: prior log odds plus the log Bayes factor.
pub fn posterior_odds(prior: PriorOdds, log_beta: f64) -> Result<f64> {
    if !log_beta.is_finite() {
        return Err(invalid(format!(
            "log Bayes factor must be finite, got {log_beta}"
        )));
    }
    Ok(prior.log_odds + log_beta)
}

/// A significance level `α ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceLevel(f64);

impl SignificanceLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(invalid(format!(
                "significance level must lie in (0, 1], got {alpha}"
            )))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// The rejection threshold `1/α` on the Bayes factor.
    pub fn bf_threshold(self) -> f64 {
        1.0 / self.0
    }
}

/// Log Bayes factors of every prefix of one data sequence.
///
/// `m` is the initial-sample size: entries start at `max(m, 1)`, and for
/// `m ≥ 1` the value at `m` is what conditional Bayes factors are measured
/// against.
#[derive(Debug, Clone, PartialEq)]
pub struct BfTrajectory {
    m: usize,
    log_beta: Vec<f64>,
}

impl BfTrajectory {
    /// `log_beta[i]` is `log β_n` for `n = max(m, 1) + i`.
    pub fn new(m: usize, log_beta: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = log_beta.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!(
                "log Bayes factor at n = {} is not finite ({v})",
                m.max(1) + i
            )));
        }
        Ok(Self { m, log_beta })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn first_index(&self) -> usize {
        self.m.max(1)
    }

    /// Largest `n` with a recorded value (`m` if the trajectory is empty).
    pub fn horizon(&self) -> usize {
        self.first_index() + self.log_beta.len() - usize::from(!self.log_beta.is_empty())
    }

    pub fn len(&self) -> usize {
        self.log_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_beta.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.log_beta
    }

    pub fn log_beta(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.first_index())
            .and_then(|i| self.log_beta.get(i))
            .copied()
    }

    /// `log β_m`, defined when `m ≥ 1`.
    pub fn log_beta_initial(&self) -> Option<f64> {
        if self.m == 0 {
            None
        } else {
            self.log_beta(self.m)
        }
    }

    /// Values from `max(m, 1)` through `n` inclusive.
    pub fn prefix(&self, n: usize) -> &[f64] {
        let end = (n + 1)
            .saturating_sub(self.first_index())
            .min(self.log_beta.len());
        &self.log_beta[..end]
    }
}

/// `log β_{n|m} = log β_n − log β_m`.
pub fn conditional_bf(traj: &BfTrajectory, n: usize) -> Result<f64> {
    let m = traj.m;
    if m == 0 {
        return Err(invalid(
            "conditional Bayes factor needs an initial sample (m >= 1)",
        ));
    }
    if n < m {
        return Err(invalid(format!(
            "n = {n} precedes the initial sample m = {m}"
        )));
    }
    let at_n = traj
        .log_beta(n)
        .ok_or_else(|| invalid(format!("trajectory has no value at n = {n}")))?;
    let at_m = traj
        .log_beta(m)
        .expect("m lies inside a trajectory reaching n");
    Ok(at_n - at_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopOutcome {
    Stopped {
        index: usize,
        log_beta: f64,
    },
    /// The data ran out before the rule fired.
    Never,
}

impl StopOutcome {
    pub fn index(&self) -> Option<usize> {
        match self {
            StopOutcome::Stopped { index, .. } => Some(*index),
            StopOutcome::Never => None,
        }
    }

    pub fn log_beta(&self) -> Option<f64> {
        match self {
            StopOutcome::Stopped { log_beta, .. } => Some(*log_beta),
            StopOutcome::Never => None,
        }
    }
}

/// Applies `rule` to successive prefixes of `data` and returns the first
/// `n > m` at which it fires, with `log β_n` read off the trajectory.
///
/// `Never` is returned when the trajectory or the data end before both the
/// rule and its cap have fired.
pub fn stop(traj: &BfTrajectory, rule: &StoppingRule, data: &[f64]) -> StopOutcome {
    let last = traj.horizon().min(data.len());
    for n in (traj.m + 1)..=last {
        let Some(log_beta) = traj.log_beta(n) else {
            break;
        };
        if rule.decide(&data[..n], traj.prefix(n)) == Decision::Stop {
            return StopOutcome::Stopped { index: n, log_beta };
        }
    }
    StopOutcome::Never
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15 * a.abs().max(1.0)
    }

    #[test]
    fn posterior_odds_examples() {
        assert_eq!(posterior_odds(PriorOdds::even(), 0.0).unwrap(), 0.0);
        let lb = (4.0f64 / 3.0).ln();
        assert_eq!(posterior_odds(PriorOdds::even(), lb).unwrap(), lb);
        let odds = PriorOdds::new(2f64.ln()).unwrap();
        assert!(approx(posterior_odds(odds, 3f64.ln()).unwrap(), 6f64.ln()));
    }

    #[test]
    fn posterior_odds_rejects_non_finite() {
        assert!(posterior_odds(PriorOdds::even(), f64::INFINITY).is_err());
        assert!(posterior_odds(PriorOdds::even(), f64::NAN).is_err());
        assert!(PriorOdds::new(f64::NEG_INFINITY).is_err());
        assert!(PriorOdds::from_ratio(0.0).is_err());
    }

    #[test]
    fn posterior_odds_is_additive() {
        let p = PriorOdds::new(0.25).unwrap();
        let (a, b) = (0.5, -1.25);
        let once = posterior_odds(p, a + b).unwrap();
        let twice =
            posterior_odds(PriorOdds::new(posterior_odds(p, a).unwrap()).unwrap(), b).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn significance_level_domain() {
        assert!(SignificanceLevel::new(1.0).is_ok());
        assert!(SignificanceLevel::new(0.05).is_ok());
        assert!(SignificanceLevel::new(0.0).is_err());
        assert!(SignificanceLevel::new(1.5).is_err());
        assert!(SignificanceLevel::new(f64::NAN).is_err());
        assert_eq!(SignificanceLevel::new(0.05).unwrap().bf_threshold(), 20.0);
    }

    #[test]
    fn trajectory_indexing() {
        let t = BfTrajectory::new(2, vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(t.first_index(), 2);
        assert_eq!(t.horizon(), 4);
        assert_eq!(t.log_beta(2), Some(0.1));
        assert_eq!(t.log_beta(4), Some(0.3));
        assert_eq!(t.log_beta(5), None);
        assert_eq!(t.log_beta(1), None);
        assert_eq!(t.prefix(3), &[0.1, 0.2]);
        assert_eq!(t.log_beta_initial(), Some(0.1));

        let t0 = BfTrajectory::new(0, vec![0.5]).unwrap();
        assert_eq!(t0.first_index(), 1);
        assert_eq!(t0.log_beta_initial(), None);
        assert!(BfTrajectory::new(1, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn conditional_bf_examples() {
        let (a, b) = (0.7, -0.4);
        let t = BfTrajectory::new(1, vec![a, 0.1, b]).unwrap();
        assert_eq!(conditional_bf(&t, 1).unwrap(), 0.0);
        assert_eq!(conditional_bf(&t, 3).unwrap(), b - a);
        assert!(conditional_bf(&t, 0).is_err());
        assert!(conditional_bf(&t, 4).is_err());
        let t0 = BfTrajectory::new(0, vec![a]).unwrap();
        assert!(conditional_bf(&t0, 1).is_err());
    }

    #[test]
    fn coherence_holds_to_rounding() {
        let t = BfTrajectory::new(2, vec![0.3, -1.7, 2.9, 0.05]).unwrap();
        let lm = t.log_beta_initial().unwrap();
        for n in 2..=5 {
            let joined = lm + conditional_bf(&t, n).unwrap();
            assert!((t.log_beta(n).unwrap() - joined).abs() <= 4.0 * f64::EPSILON * 3.0);
        }
    }

    #[test]
    fn fixed_n_stop() {
        let t = BfTrajectory::new(0, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let data = [1.0; 6];
        let out = stop(&t, &StoppingRule::fixed_n(5).unwrap(), &data);
        assert_eq!(
            out,
            StopOutcome::Stopped {
                index: 5,
                log_beta: 0.4
            }
        );
    }

    #[test]
    fn cap_forces_stop() {
        let t = BfTrajectory::new(0, vec![0.0; 1000]).unwrap();
        let data = vec![0.5; 1000];
        let rule = StoppingRule::bf_threshold(20.0, None, 1000).unwrap();
        assert_eq!(stop(&t, &rule, &data).index(), Some(1000));
    }

    #[test]
    fn never_when_data_runs_out() {
        let t = BfTrajectory::new(0, vec![0.0; 10]).unwrap();
        let rule = StoppingRule::bf_threshold(20.0, None, 1000).unwrap();
        assert_eq!(stop(&t, &rule, &[0.0; 10]), StopOutcome::Never);
    }

    #[test]
    fn beta_bernoulli_threshold_stop() {
        // Point 1/2 against a uniform prior on the success probability:
        // P̄0(1,1) = 1/4 and P̄1(1,1) = 1/2 * 2/3 = 1/3.
        let log_betas: Vec<f64> = [(0.5f64, 0.5f64), (1.0 / 3.0, 0.25), (0.25, 0.125)]
            .iter()
            .map(|&(m1, m0)| (m1 / m0).ln())
            .collect();
        let t = BfTrajectory::new(0, log_betas).unwrap();
        let rule = StoppingRule::bf_threshold(4.0 / 3.0, None, 3).unwrap();
        let out = stop(&t, &rule, &[1.0, 1.0, 1.0]);
        assert_eq!(out.index(), Some(2));
        assert_eq!(out.log_beta().unwrap(), (4.0f64 / 3.0).ln());
    }

    #[test]
    fn stop_is_deterministic() {
        let t = BfTrajectory::new(1, vec![0.0, 1.0, 2.0, 3.5]).unwrap();
        let rule = StoppingRule::bf_threshold(10.0, Some(0.1), 4).unwrap();
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(stop(&t, &rule, &data), stop(&t, &rule, &data));
        assert_eq!(stop(&t, &rule, &data).index(), Some(4));
    }
}
