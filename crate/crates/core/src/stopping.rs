//! Stopping rules over data prefixes, split into rules measurable with
//! respect to the invariant filtration (fixed-n, Bayes factor thresholds,
//! functions of the maximal invariant) and rules that look at raw data.
//!
//! Invariance is declared by construction and then checked empirically by
//! [`check_invariance`]: it cannot be decided for arbitrary user statistics.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::evidence::Hypothesis;
use crate::invariant::{
    maximal_invariant, GroupElement, GroupKind, InvariantModelPair, MaximalInvariantValue,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Continue,
    Stop,
}

/// A named real-valued statistic.
pub struct Statistic<T: ?Sized> {
    name: String,
    f: Arc<dyn Fn(&T) -> f64 + Send + Sync>,
}

impl<T: ?Sized> Clone for Statistic<T> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            f: Arc::clone(&self.f),
        }
    }
}

impl<T: ?Sized> Statistic<T> {
    pub fn new(name: impl Into<String>, f: impl Fn(&T) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &T) -> f64 {
        (self.f)(x)
    }
}

impl<T: ?Sized> fmt::Debug for Statistic<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Statistic({})", self.name)
    }
}

pub type RawStatistic = Statistic<[f64]>;
pub type InvariantStatistic = Statistic<MaximalInvariantValue>;

/// Built-in statistics of the raw prefix, addressable by name.
pub fn raw_statistic(name: &str) -> Result<RawStatistic> {
    match name {
        "sum_sq" => Ok(Statistic::new(name, |x: &[f64]| {
            x.iter().map(|v| v * v).sum()
        })),
        "abs_sum" => Ok(Statistic::new(name, |x: &[f64]| {
            x.iter().sum::<f64>().abs()
        })),
        "len" => Ok(Statistic::new(name, |x: &[f64]| x.len() as f64)),
        _ => Err(invalid(format!(
            "unknown raw statistic {name:?} (expected sum_sq, abs_sum or len)"
        ))),
    }
}

/// Built-in statistics of the maximal invariant, addressable by name.
pub fn invariant_statistic(name: &str) -> Result<InvariantStatistic> {
    match name {
        "u_sum_sq" => Ok(Statistic::new(name, |u: &MaximalInvariantValue| {
            u.coords.iter().map(|v| v * v).sum()
        })),
        // |Σu| / |u|: the cosine between the data and the all-ones direction.
        "abs_cosine" => Ok(Statistic::new(name, |u: &MaximalInvariantValue| {
            let s: f64 = u.coords.iter().sum();
            let q: f64 = u.coords.iter().map(|v| v * v).sum();
            s.abs() / q.sqrt()
        })),
        "len" => Ok(Statistic::new(name, |u: &MaximalInvariantValue| {
            u.coords.len() as f64
        })),
        _ => Err(invalid(format!(
            "unknown invariant statistic {name:?} (expected u_sum_sq, abs_cosine or len)"
        ))),
    }
}

#[derive(Debug, Clone)]
pub enum RuleKind {
    FixedN(usize),
    BfThreshold {
        upper: f64,
        lower: Option<f64>,
    },
    InvariantStatistic {
        group: GroupKind,
        statistic: InvariantStatistic,
        threshold: f64,
    },
    RawStatistic {
        statistic: RawStatistic,
        threshold: f64,
    },
}

/// A stopping rule with a mandatory horizon cap.
#[derive(Debug, Clone)]
pub struct StoppingRule {
    kind: RuleKind,
    cap: usize,
    log_upper: f64,
    log_lower: Option<f64>,
}

impl StoppingRule {
    fn build(kind: RuleKind, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(invalid("stopping rule cap must be at least 1"));
        }
        let (log_upper, log_lower) = match &kind {
            RuleKind::BfThreshold { upper, lower } => {
                if !(*upper > 0.0 && upper.is_finite()) {
                    return Err(invalid(format!(
                        "upper threshold must be positive, got {upper}"
                    )));
                }
                if let Some(l) = lower {
                    if !(*l > 0.0 && *l < *upper) {
                        return Err(invalid(format!(
                            "lower threshold must lie in (0, upper), got {l}"
                        )));
                    }
                }
                (upper.ln(), lower.map(f64::ln))
            }
            RuleKind::InvariantStatistic { threshold, .. }
            | RuleKind::RawStatistic { threshold, .. }
                if !threshold.is_finite() =>
            {
                return Err(invalid("statistic threshold must be finite"));
            }
            _ => (f64::INFINITY, None),
        };
        Ok(Self {
            kind,
            cap,
            log_upper,
            log_lower,
        })
    }

    /// Stop at exactly `n`.
    pub fn fixed_n(n: usize) -> Result<Self> {
        Self::build(RuleKind::FixedN(n), n)
    }

    /// Stop once `β ≥ upper` or (if set) `β ≤ lower`, or at `cap`.
    pub fn bf_threshold(upper: f64, lower: Option<f64>, cap: usize) -> Result<Self> {
        Self::build(RuleKind::BfThreshold { upper, lower }, cap)
    }

    /// Stop once a statistic of the maximal invariant reaches `threshold`.
    pub fn invariant_statistic(
        group: GroupKind,
        statistic: InvariantStatistic,
        threshold: f64,
        cap: usize,
    ) -> Result<Self> {
        Self::build(
            RuleKind::InvariantStatistic {
                group,
                statistic,
                threshold,
            },
            cap,
        )
    }

    /// Stop once a statistic of the raw prefix reaches `threshold`.
    pub fn raw_statistic(statistic: RawStatistic, threshold: f64, cap: usize) -> Result<Self> {
        Self::build(
            RuleKind::RawStatistic {
                statistic,
                threshold,
            },
            cap,
        )
    }

    pub fn kind(&self) -> &RuleKind {
        &self.kind
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn declared_invariant(&self) -> bool {
        !matches!(self.kind, RuleKind::RawStatistic { .. })
    }

    pub fn uses_log_beta(&self) -> bool {
        matches!(self.kind, RuleKind::BfThreshold { .. })
    }

    /// Errors unless the cap leaves room for a decision after `m` initial
    /// observations.
    pub fn validate_for(&self, m: usize) -> Result<()> {
        if self.cap < m + 1 {
            return Err(invalid(format!(
                "rule cap {} must be at least m + 1 = {}",
                self.cap,
                m + 1
            )));
        }
        Ok(())
    }

    /// `(log upper, log lower)` for threshold rules.
    pub fn log_thresholds(&self) -> Option<(f64, Option<f64>)> {
        self.uses_log_beta()
            .then_some((self.log_upper, self.log_lower))
    }

    /// Decision after observing `prefix`. `log_beta_prefix` ends with
    /// `log β_n` for `n = prefix.len()`; rules that do not read the Bayes
    /// factor accept an empty slice.
    pub fn decide(&self, prefix: &[f64], log_beta_prefix: &[f64]) -> Decision {
        if prefix.len() >= self.cap {
            return Decision::Stop;
        }
        let stop = match &self.kind {
            RuleKind::FixedN(n) => prefix.len() >= *n,
            RuleKind::BfThreshold { .. } => log_beta_prefix
                .last()
                .is_some_and(|&lb| lb >= self.log_upper || self.log_lower.is_some_and(|l| lb <= l)),
            RuleKind::InvariantStatistic {
                group,
                statistic,
                threshold,
            } => maximal_invariant(*group, prefix)
                .map(|u| statistic.eval(&u) >= *threshold)
                .unwrap_or(false),
            RuleKind::RawStatistic {
                statistic,
                threshold,
            } => statistic.eval(prefix) >= *threshold,
        };
        if stop {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match &self.kind {
            RuleKind::FixedN(n) => format!("fixed n = {n}"),
            RuleKind::BfThreshold { upper, lower } => match lower {
                Some(l) => format!("beta >= {upper} or beta <= {l}, cap {}", self.cap),
                None => format!("beta >= {upper}, cap {}", self.cap),
            },
            RuleKind::InvariantStatistic {
                statistic,
                threshold,
                ..
            } => format!("{}(U) >= {threshold}, cap {}", statistic.name(), self.cap),
            RuleKind::RawStatistic {
                statistic,
                threshold,
            } => format!("{}(x) >= {threshold}, cap {}", statistic.name(), self.cap),
        }
    }
}

/// A data prefix and group element on which a rule decides differently for
/// `x` and `x·g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub g: GroupElement,
    pub decision_x: Decision,
    pub decision_gx: Decision,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub declared_invariant: bool,
    pub trials: usize,
    pub agreements: usize,
    /// Trials whose statistic fell within the boundary band of the threshold.
    pub skipped: usize,
    pub counterexample: Option<Counterexample>,
}

impl InvarianceReport {
    /// For declared-invariant rules: no disagreement was found. Nothing is
    /// asserted for raw-statistic rules.
    pub fn passed(&self) -> bool {
        !self.declared_invariant || self.counterexample.is_none()
    }
}

const BOUNDARY_BAND: f64 = 1e-10;

fn random_element<R: Rng + ?Sized>(kind: GroupKind, rng: &mut R) -> GroupElement {
    let a = rng.random_range(-3.0f64..3.0).exp();
    match kind {
        GroupKind::Scale => GroupElement::Scale(a),
        GroupKind::LocationScale => GroupElement::LocationScale {
            scale: a,
            shift: rng.random_range(-10.0..10.0),
        },
    }
}

/// Distance of the deciding quantity from its threshold, when the rule has
/// one; decisions closer than the band are not counted.
fn margin(rule: &StoppingRule, x: &[f64], log_beta: Option<f64>) -> Option<f64> {
    match &rule.kind {
        RuleKind::BfThreshold { .. } => {
            let lb = log_beta?;
            let up = (lb - rule.log_upper).abs();
            Some(rule.log_lower.map_or(up, |l| up.min((lb - l).abs())))
        }
        RuleKind::InvariantStatistic {
            group,
            statistic,
            threshold,
        } => {
            let u = maximal_invariant(*group, x).ok()?;
            Some((statistic.eval(&u) - threshold).abs() / threshold.abs().max(1.0))
        }
        _ => None,
    }
}

/// Samples random prefixes and group elements and compares
/// `decide(x)` with `decide(x·g)`, recomputing the Bayes factor on the
/// transformed data.
pub fn check_invariance<R: Rng + ?Sized>(
    rule: &StoppingRule,
    pair: &InvariantModelPair,
    trials: usize,
    rng: &mut R,
) -> Result<InvarianceReport> {
    if trials == 0 {
        return Err(invalid("invariance check needs at least one trial"));
    }
    let m = pair.m();
    rule.validate_for(m)?;
    let max_len = rule.cap().min(m + 30).max(m + 1);
    let mut report = InvarianceReport {
        declared_invariant: rule.declared_invariant(),
        trials,
        agreements: 0,
        skipped: 0,
        counterexample: None,
    };
    for _ in 0..trials {
        let k = if rng.random_bool(0.5) {
            Hypothesis::Alt
        } else {
            Hypothesis::Null
        };
        let n = rng.random_range(m + 1..=max_len);
        let base = random_element(pair.group(), rng);
        let x = pair.sample(k, base, n, rng)?;
        let g = random_element(pair.group(), rng);
        let gx = g.act(&x);
        if pair.group().is_excluded(&gx) {
            report.skipped += 1;
            continue;
        }

        let (lb_x, lb_gx) = if rule.uses_log_beta() {
            match (pair.log_bf(&x), pair.log_bf(&gx)) {
                (Ok(a), Ok(b)) => (Some(a), Some(b)),
                _ => {
                    report.skipped += 1;
                    continue;
                }
            }
        } else {
            (None, None)
        };
        let near = |x: &[f64], lb| margin(rule, x, lb).is_some_and(|d| d < BOUNDARY_BAND);
        if near(&x, lb_x) || near(&gx, lb_gx) {
            report.skipped += 1;
            continue;
        }
        let dx = rule.decide(&x, lb_x.as_slice());
        let dgx = rule.decide(&gx, lb_gx.as_slice());
        if dx == dgx {
            report.agreements += 1;
        } else if report.counterexample.is_none() {
            report.counterexample = Some(Counterexample {
                x,
                g,
                decision_x: dx,
                decision_gx: dgx,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bf_threshold_stops_above_upper() {
        let r = StoppingRule::bf_threshold(20.0, None, 100).unwrap();
        assert_eq!(r.decide(&[1.0, 2.0], &[0.0, 25f64.ln()]), Decision::Stop);
        assert_eq!(
            r.decide(&[1.0, 2.0], &[0.0, 19f64.ln()]),
            Decision::Continue
        );
    }

    #[test]
    fn bf_threshold_lower_and_cap() {
        let r = StoppingRule::bf_threshold(5.0, Some(0.2), 3).unwrap();
        assert_eq!(r.decide(&[1.0, 2.0], &[0.0, 0.1f64.ln()]), Decision::Stop);
        assert_eq!(r.decide(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), Decision::Stop);
        assert_eq!(r.decide(&[1.0, 2.0], &[0.0, 0.0]), Decision::Continue);
    }

    #[test]
    fn fixed_n_continues_before_n() {
        let r = StoppingRule::fixed_n(5).unwrap();
        assert_eq!(r.decide(&[0.0; 4], &[]), Decision::Continue);
        assert_eq!(r.decide(&[0.0; 5], &[]), Decision::Stop);
    }

    #[test]
    fn raw_statistic_arithmetic() {
        let r = StoppingRule::raw_statistic(raw_statistic("sum_sq").unwrap(), 20.0, 100).unwrap();
        assert_eq!(r.decide(&[3.0, 3.0, 2.0], &[]), Decision::Stop);
        assert_eq!(r.decide(&[1.0, 1.0, 1.0], &[]), Decision::Continue);
        assert_eq!(r.decide(&[5.0, 5.0, 5.0], &[]), Decision::Stop);
        assert!(!r.declared_invariant());
    }

    #[test]
    fn invalid_rules_are_rejected() {
        assert!(StoppingRule::bf_threshold(-1.0, None, 10).is_err());
        assert!(StoppingRule::bf_threshold(5.0, Some(6.0), 10).is_err());
        assert!(StoppingRule::fixed_n(0).is_err());
        assert!(raw_statistic("nope").is_err());
        assert!(StoppingRule::fixed_n(1).unwrap().validate_for(1).is_err());
    }

    #[test]
    fn decide_is_pure() {
        let r = StoppingRule::invariant_statistic(
            GroupKind::Scale,
            invariant_statistic("abs_cosine").unwrap(),
            1.5,
            50,
        )
        .unwrap();
        let x = [1.0, 0.9, 1.2, 1.1];
        assert_eq!(r.decide(&x, &[]), r.decide(&x, &[]));
        assert_eq!(r.decide(&x, &[]), Decision::Stop);
    }

    #[test]
    fn declared_invariant_rules_pass() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for rule in [
            StoppingRule::fixed_n(5).unwrap(),
            StoppingRule::bf_threshold(3.0, Some(1.0 / 3.0), 40).unwrap(),
            StoppingRule::invariant_statistic(
                GroupKind::Scale,
                invariant_statistic("u_sum_sq").unwrap(),
                8.0,
                40,
            )
            .unwrap(),
        ] {
            let report = check_invariance(&rule, &pair, 300, &mut rng).unwrap();
            assert!(
                report.passed(),
                "{}: {:?}",
                rule.describe(),
                report.counterexample
            );
            assert_eq!(report.agreements + report.skipped, 300);
        }
    }

    #[test]
    fn raw_sum_of_squares_has_counterexample() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rule = StoppingRule::raw_statistic(raw_statistic("sum_sq").unwrap(), 20.0, 40).unwrap();
        let report = check_invariance(&rule, &pair, 300, &mut rng).unwrap();
        let ce = report.counterexample.clone().expect("scale-dependent rule");
        assert_ne!(ce.decision_x, ce.decision_gx);
        assert!(report.passed());
    }
}
