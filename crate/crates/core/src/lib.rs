//! Bayes factor hypothesis testing under optional stopping.
//!
//! The crate checks three properties of Bayes factors under data-dependent
//! stopping rules:
//!
//! * the reported Bayes factor depends on the observed data alone, not on
//!   the rule that produced it;
//! * calibration: among outcomes with Bayes factor `b`, the ratio of
//!   alternative to null probability is `b`;
//! * Type-I error control: `P(∃n: β_n ≥ 1/α) ≤ α` under the null.
//!
//! [`exact`] verifies them by exhaustive enumeration on finite sample
//! spaces. [`montecarlo`] verifies their strong (per-nuisance-value)
//! versions by simulation on group-invariant t-test models from
//! [`invariant`], whose nuisance parameters carry the right Haar prior.

pub mod cli;
pub mod error;
pub mod evidence;
pub mod exact;
pub mod invariant;
pub mod montecarlo;
pub mod quadrature;
pub mod stopping;

pub use error::{Error, Result};
pub use evidence::{
    conditional_bf, posterior_odds, stop, BfTrajectory, Hypothesis, PriorOdds, SignificanceLevel,
    StopOutcome,
};
pub use invariant::{EffectPrior, GroupElement, GroupKind, InvariantModelPair};
pub use stopping::{check_invariance, Decision, StoppingRule};
