//! Per-sample-size critical values for Bayes factor threshold rules.
//!
//! For a symmetric effect prior the log Bayes factor at sample size `n` is a
//! strictly decreasing function of the summary's `gap`. A threshold rule
//! "stop when `β ≥ upper` or `β ≤ lower`" is therefore equivalent to
//! comparing `gap` against two critical values per `n`, which avoids a
//! quadrature per observation in long simulated sequences. Gaps within a
//! narrow relative band of a critical value are resolved by evaluating the
//! Bayes factor directly, so decisions match direct evaluation.

use super::group::GroupKind;
use super::marginal::{log_bf_symmetric, EffectPrior, Summary};
use crate::error::{invalid, Error, Result};

const BAND: f64 = 1e-8;
const ROOT_REL_TOL: f64 = 1e-13;

/// Where the threshold is crossed at one sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Crossing {
    Never,
    Always,
    /// Upper: stop iff `gap ≤ at`. Lower: stop iff `gap ≥ at`.
    At(f64),
}

#[derive(Debug, Clone)]
pub struct ThresholdBoundary {
    prior: EffectPrior,
    kind: GroupKind,
    log_upper: f64,
    log_lower: Option<f64>,
    first_n: usize,
    upper: Vec<Crossing>,
    lower: Vec<Crossing>,
}

/// `(ν, D)` at sample size `n`.
fn shape(kind: GroupKind, n: usize) -> (usize, f64) {
    match kind {
        GroupKind::Scale => (n, n as f64),
        GroupKind::LocationScale => {
            let odd = n.div_ceil(2) as f64;
            let even = (n / 2) as f64;
            (n - 1, odd * even / n as f64)
        }
    }
}

impl ThresholdBoundary {
    /// Critical values for `n` in `first_n..=last_n`.
    pub fn new(
        kind: GroupKind,
        prior: EffectPrior,
        upper: f64,
        lower: Option<f64>,
        first_n: usize,
        last_n: usize,
    ) -> Result<Self> {
        if !prior.is_symmetric() {
            return Err(invalid(
                "critical-value boundaries need an effect prior symmetric about zero",
            ));
        }
        if first_n <= kind.initial_size().saturating_sub(1) || last_n < first_n {
            return Err(invalid(format!(
                "boundary range {first_n}..={last_n} must start after the initial sample"
            )));
        }
        let log_upper = upper.ln();
        let log_lower = lower.map(f64::ln);
        let mut up = Vec::with_capacity(last_n - first_n + 1);
        let mut lo = Vec::with_capacity(last_n - first_n + 1);
        for n in first_n..=last_n {
            if let EffectPrior::PointMass(_) = prior {
                // Symmetric point mass sits at zero, so log β is identically 0.
                up.push(if log_upper <= 0.0 {
                    Crossing::Always
                } else {
                    Crossing::Never
                });
                lo.push(match log_lower {
                    Some(l) if l >= 0.0 => Crossing::Always,
                    _ => Crossing::Never,
                });
                continue;
            }
            let (nu, d) = shape(kind, n);
            let f = |gap: f64| log_bf_symmetric(&prior, nu, d, gap);
            up.push(upper_crossing(&f, nu, d, log_upper)?);
            lo.push(match log_lower {
                Some(l) => lower_crossing(&f, nu, d, l)?,
                None => Crossing::Never,
            });
        }
        Ok(Self {
            prior,
            kind,
            log_upper,
            log_lower,
            first_n,
            upper: up,
            lower: lo,
        })
    }

    pub fn range(&self) -> (usize, usize) {
        (self.first_n, self.first_n + self.upper.len() - 1)
    }

    /// Whether the threshold rule fires on the summarized prefix.
    pub fn fires(&self, summary: &Summary) -> Result<bool> {
        debug_assert_eq!(summary.kind(), self.kind);
        let n = summary.len();
        let i = n
            .checked_sub(self.first_n)
            .filter(|&i| i < self.upper.len())
            .ok_or_else(|| invalid(format!("sample size {n} outside boundary range")))?;
        let gap = summary.gap();
        let direct = || -> Result<f64> {
            let (nu, d) = shape(self.kind, n);
            log_bf_symmetric(&self.prior, nu, d, gap)
        };
        let near = |at: f64| (gap - at).abs() <= BAND * at.abs().max(f64::MIN_POSITIVE);
        match self.upper[i] {
            Crossing::Always => return Ok(true),
            Crossing::At(at) if near(at) => {
                if direct()? >= self.log_upper {
                    return Ok(true);
                }
            }
            Crossing::At(at) if gap <= at => return Ok(true),
            _ => {}
        }
        match (self.lower[i], self.log_lower) {
            (Crossing::Always, _) => Ok(true),
            (Crossing::At(at), Some(l)) if near(at) => Ok(direct()? <= l),
            (Crossing::At(at), _) => Ok(gap >= at),
            _ => Ok(false),
        }
    }
}

/// log β at the smallest representable positive gap, or +∞ when the Bayes
/// factor diverges as the gap closes.
fn at_zero<F: Fn(f64) -> Result<f64>>(f: &F, nu: usize) -> Result<f64> {
    if nu >= 2 {
        Ok(f64::INFINITY)
    } else {
        f(0.0)
    }
}

fn upper_crossing<F: Fn(f64) -> Result<f64>>(
    f: &F,
    nu: usize,
    d: f64,
    log_upper: f64,
) -> Result<Crossing> {
    if f(d)? >= log_upper {
        return Ok(Crossing::Always);
    }
    if at_zero(f, nu)? < log_upper {
        return Ok(Crossing::Never);
    }
    // f decreases in gap: find where f crosses log_upper from above.
    let lo = bracket_low(f, d, log_upper)?;
    Ok(Crossing::At(root(f, lo, d, log_upper)?))
}

fn lower_crossing<F: Fn(f64) -> Result<f64>>(
    f: &F,
    nu: usize,
    d: f64,
    log_lower: f64,
) -> Result<Crossing> {
    if f(d)? > log_lower {
        return Ok(Crossing::Never);
    }
    if at_zero(f, nu)? <= log_lower {
        return Ok(Crossing::Always);
    }
    let lo = bracket_low(f, d, log_lower)?;
    Ok(Crossing::At(root(f, lo, d, log_lower)?))
}

/// A gap in `(0, d)` where `f ≥ target`, found by halving from `d`.
fn bracket_low<F: Fn(f64) -> Result<f64>>(f: &F, d: f64, target: f64) -> Result<f64> {
    let mut g = d;
    for _ in 0..2000 {
        g *= 0.5;
        if g == 0.0 {
            break;
        }
        if f(g)? >= target {
            return Ok(g);
        }
    }
    Err(Error::Numeric {
        residual: f64::NAN,
        tolerance: ROOT_REL_TOL,
    })
}

/// Illinois-style regula falsi for the decreasing function `f − target` on
/// `[lo, hi]` with `f(lo) ≥ target > f(hi)`.
fn root<F: Fn(f64) -> Result<f64>>(f: &F, mut lo: f64, mut hi: f64, target: f64) -> Result<f64> {
    let mut f_lo = f(lo)? - target;
    let mut f_hi = f(hi)? - target;
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= ROOT_REL_TOL * hi {
            break;
        }
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)? - target;
        if fx >= 0.0 {
            lo = x;
            f_lo = fx;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            f_hi = fx;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(0.5 * (lo + hi))
}
