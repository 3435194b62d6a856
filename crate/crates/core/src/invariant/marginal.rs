//! Right Haar marginal likelihoods and Bayes factors of the invariant
//! t-test models.
//!
//! Under both groups the data, after integrating out the location (if any),
//! reduce to a vector `y` in `ν` dimensions with `y ~ N(σ δ d, σ² I)` for a
//! fixed design vector `d` with `|d|² = D`. The null fixes `δ = 0`. Writing
//! `c = dᵀy / |y|` and `gap = D − c²`, the Bayes factor given `δ` is
//!
//! ```text
//!     β(δ) = exp(−D δ²/2) · K_ν(δ c) / K_ν(0),   K_ν(t) = ∫₀^∞ u^{ν−1} e^{−u²/2 + t u} du
//! ```
//!
//! after the analytic σ-integral. A Cauchy(r) prior on δ is the mixture
//! `δ | g ~ N(0, g)`, `g ~ InvGamma(1/2, r²/2)`; integrating δ analytically
//! leaves
//!
//! ```text
//!     β = ∫₀^∞ (1 + g D)^{(ν−1)/2} (1 + g·gap)^{−ν/2} p(g) dg,
//! ```
//!
//! a one-dimensional integral evaluated on the log-g scale by adaptive
//! Gauss–Kronrod quadrature.
//!
//! For the scale group `ν = n`, `d = 1`. For the location-scale group the
//! design is the alternating two-sample allocation (`d_i = +1/2` for odd
//! `i`, `−1/2` for even `i`), with `ν = n − 1`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::group::GroupKind;
use crate::error::{invalid, Error, Result};
use crate::quadrature::{self, Tolerance};

const QUAD_TOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-13,
    max_panels: 4000,
};

/// Prior on the standardized effect size δ under the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffectPrior {
    PointMass(f64),
    Cauchy(f64),
}

impl EffectPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EffectPrior::PointMass(d) if d.is_finite() => Ok(()),
            EffectPrior::Cauchy(r) if r > 0.0 && r.is_finite() => Ok(()),
            other => Err(invalid(format!("invalid effect prior {other:?}"))),
        }
    }

    /// Symmetric about zero, so the Bayes factor depends on the data only
    /// through `gap` and is strictly decreasing in it.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            EffectPrior::Cauchy(_) => true,
            EffectPrior::PointMass(delta) => delta == 0.0,
        }
    }
}

impl Default for EffectPrior {
    fn default() -> Self {
        EffectPrior::Cauchy(1.0)
    }
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }
}

/// Incrementally updated sufficient statistics of a data prefix.
///
/// Pushing observations one at a time and summarizing a whole vector go
/// through the same arithmetic, so trajectories computed online agree bit for
/// bit with Bayes factors recomputed from the prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    kind: GroupKind,
    sum: f64,
    sum_sq: f64,
    all: Moments,
    odd: Moments,
    even: Moments,
}

impl Summary {
    pub fn new(kind: GroupKind) -> Self {
        Self {
            kind,
            sum: 0.0,
            sum_sq: 0.0,
            all: Moments::default(),
            odd: Moments::default(),
            even: Moments::default(),
        }
    }

    pub fn from_data(kind: GroupKind, x: &[f64]) -> Self {
        let mut s = Self::new(kind);
        for &v in x {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        if self.all.n % 2 == 0 {
            self.odd.push(x);
        } else {
            self.even.push(x);
        }
        self.all.push(x);
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.all.n
    }

    pub fn is_empty(&self) -> bool {
        self.all.n == 0
    }

    /// Dimension `ν` left after the location (if any) is integrated out.
    pub fn dof(&self) -> usize {
        match self.kind {
            GroupKind::Scale => self.all.n,
            GroupKind::LocationScale => self.all.n.saturating_sub(1),
        }
    }

    /// Squared norm `D` of the projected design vector.
    pub fn design_norm_sq(&self) -> f64 {
        let n = self.all.n as f64;
        match self.kind {
            GroupKind::Scale => n,
            GroupKind::LocationScale if self.all.n == 0 => 0.0,
            GroupKind::LocationScale => self.odd.n as f64 * self.even.n as f64 / n,
        }
    }

    /// Squared norm of the projected data vector (`Σx²`, or `Σ(x − x̄)²`).
    pub fn norm_sq(&self) -> f64 {
        match self.kind {
            GroupKind::Scale => self.sum_sq,
            GroupKind::LocationScale => self.all.m2,
        }
    }

    /// `c = dᵀy / |y|`.
    pub fn cosine(&self) -> f64 {
        match self.kind {
            GroupKind::Scale => self.sum / self.sum_sq.sqrt(),
            GroupKind::LocationScale => {
                self.design_norm_sq() * (self.odd.mean - self.even.mean) / self.all.m2.sqrt()
            }
        }
    }

    /// `D − c²`, computed from within-sample spread so it stays accurate
    /// when the evidence is strong, clamped to `[0, D]`.
    pub fn gap(&self) -> f64 {
        let d = self.design_norm_sq();
        let g = match self.kind {
            GroupKind::Scale => d * self.all.m2 / self.sum_sq,
            GroupKind::LocationScale => {
                let within = self.odd.m2 + self.even.m2;
                let diff = self.odd.mean - self.even.mean;
                d * within / (within + d * diff * diff)
            }
        };
        if g.is_nan() {
            0.0
        } else {
            g.clamp(0.0, d)
        }
    }

    fn check(&self) -> Result<()> {
        let m = self.kind.initial_size();
        if self.all.n < m {
            return Err(Error::SingularInput(format!(
                "{} model needs at least {m} observation(s), got {}",
                self.kind, self.all.n
            )));
        }
        if !(self.norm_sq() > 0.0) || !self.norm_sq().is_finite() {
            return Err(Error::SingularInput(format!(
                "data lies in the excluded set of the {} group",
                self.kind
            )));
        }
        Ok(())
    }
}

/// `log p̄₀(x)`: the null density integrated against the right Haar prior.
///
/// Scale: `Γ(n/2) / (2 π^{n/2} S^{n/2})` with `S = Σx²`. Location-scale:
/// `n^{−1/2} Γ(ν/2) / (2 π^{ν/2} SSD^{ν/2})` with `ν = n − 1`.
pub fn log_marginal_null(summary: &Summary) -> Result<f64> {
    summary.check()?;
    let half_nu = summary.dof() as f64 / 2.0;
    let mut v = ln_gamma(half_nu) - LN_2 - half_nu * (PI.ln() + summary.norm_sq().ln());
    if summary.kind == GroupKind::LocationScale {
        v -= 0.5 * (summary.len() as f64).ln();
    }
    Ok(v)
}

/// Log Bayes factor `log p̄₁(x) − log p̄₀(x)` from the sufficient summary.
pub fn log_bf(prior: &EffectPrior, summary: &Summary) -> Result<f64> {
    summary.check()?;
    let nu = summary.dof();
    let d = summary.design_norm_sq();
    match *prior {
        EffectPrior::PointMass(delta) if delta == 0.0 => Ok(0.0),
        EffectPrior::PointMass(delta) => {
            let t = delta * summary.cosine();
            Ok(-0.5 * d * delta * delta + log_k(nu, t)? - log_k0(nu))
        }
        EffectPrior::Cauchy(r) => cauchy_log_bf(nu, d, summary.gap(), r),
    }
}

/// Log Bayes factor of a symmetric prior as a function of `(ν, D, gap)`.
pub fn log_bf_symmetric(prior: &EffectPrior, nu: usize, d: f64, gap: f64) -> Result<f64> {
    match *prior {
        EffectPrior::PointMass(delta) if delta == 0.0 => Ok(0.0),
        EffectPrior::Cauchy(r) => cauchy_log_bf(nu, d, gap, r),
        other => Err(invalid(format!("{other:?} is not symmetric about zero"))),
    }
}

fn softplus(t: f64) -> f64 {
    if t > 35.0 {
        t + (-t).exp()
    } else if t == f64::NEG_INFINITY {
        0.0
    } else {
        t.exp().ln_1p()
    }
}

fn cauchy_log_bf(nu: usize, d: f64, gap: f64, r: f64) -> Result<f64> {
    if nu == 0 || !(d > 0.0) {
        return Err(invalid("Bayes factor needs at least one degree of freedom"));
    }
    if gap <= 0.0 && nu >= 2 {
        return Err(Error::SingularInput(
            "observations have zero within-sample spread; the Bayes factor is infinite".into(),
        ));
    }
    let nu_f = nu as f64;
    let (ln_d, ln_gap) = (d.ln(), gap.ln());
    let half_r2 = 0.5 * r * r;
    let norm = r.ln() - 0.5 * (2.0 * PI).ln();
    // Integrand over s = log g, including the dg = g ds Jacobian.
    let log_f = |s: f64| -> f64 {
        0.5 * (nu_f - 1.0) * softplus(ln_d + s) - 0.5 * nu_f * softplus(ln_gap + s) + norm
            - 0.5 * s
            - half_r2 * (-s).exp()
    };

    let lo = half_r2.ln() - 800f64.ln();
    let knee = (-ln_d).max(if gap > 0.0 { -ln_gap } else { -ln_d });
    let hi = knee.max(2.0 * r.ln()).max(lo + 1.0) + 60.0;
    integrate_log_density(log_f, lo, hi)
}

/// `log ∫ exp(log_f(s)) ds` over `[lo, hi]`, scaling by the peak found on a
/// grid so the integrand stays in floating-point range.
fn integrate_log_density<F: Fn(f64) -> f64>(log_f: F, lo: f64, hi: f64) -> Result<f64> {
    const STEP: f64 = 0.5;
    let steps = ((hi - lo) / STEP).ceil() as usize;
    let grid: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let s = (lo + i as f64 * STEP).min(hi);
            (s, log_f(s))
        })
        .collect();
    let (imax, &(_, peak)) = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty grid");
    if !peak.is_finite() {
        return Err(Error::Numeric {
            residual: f64::NAN,
            tolerance: QUAD_TOL.rel,
        });
    }

    let mut cuts = Vec::new();
    let mut add_peak = |i: usize| {
        let s0 = grid[i].0;
        let (fl, f0, fr) = (
            grid[i.saturating_sub(1)].1,
            grid[i].1,
            grid[(i + 1).min(grid.len() - 1)].1,
        );
        // Parabolic refinement of the peak and its curvature.
        let curv = (fl - 2.0 * f0 + fr) / (STEP * STEP);
        let (centre, width) = if curv < 0.0 && i > 0 && i + 1 < grid.len() {
            let shift = (0.5 * STEP * (fl - fr) / (fl - 2.0 * f0 + fr)).clamp(-STEP, STEP);
            (s0 + shift, (-1.0 / curv).sqrt().min(4.0))
        } else {
            (s0, STEP)
        };
        for k in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
            cuts.push(centre + k * width);
        }
    };
    add_peak(imax);
    // Any other local maximum that carries non-negligible mass.
    for i in 1..grid.len().saturating_sub(1) {
        if i != imax
            && grid[i].1 >= grid[i - 1].1
            && grid[i].1 >= grid[i + 1].1
            && grid[i].1 > peak - 40.0
        {
            add_peak(i);
        }
    }
    let est = quadrature::integrate(|s| (log_f(s) - peak).exp(), lo, hi, &cuts, QUAD_TOL)?;
    Ok(peak + est.value.ln())
}

/// `log K_ν(0) = (ν/2 − 1) log 2 + log Γ(ν/2)`.
fn log_k0(nu: usize) -> f64 {
    let h = nu as f64 / 2.0;
    (h - 1.0) * LN_2 + ln_gamma(h)
}

/// `log ∫₀^∞ u^{ν−1} exp(−u²/2 + t u) du`, integrated over `s = log u`.
fn log_k(nu: usize, t: f64) -> Result<f64> {
    let nu_f = nu as f64;
    // Mode of ν s − e^{2s}/2 + t e^s, written to avoid cancellation for t < 0.
    let root = (t * t + 4.0 * nu_f).sqrt();
    let u_star = if t >= 0.0 {
        0.5 * (t + root)
    } else {
        2.0 * nu_f / (root - t)
    };
    let s_star = u_star.ln();
    let width = 1.0 / (u_star * u_star + nu_f).sqrt();
    let log_f = |s: f64| {
        let u = s.exp();
        nu_f * s - 0.5 * u * u + t * u
    };
    let lo = s_star - 60.0 / nu_f - 10.0 * width;
    let hi = s_star + 4.0 + 20.0 * width;
    integrate_log_density(log_f, lo, hi)
}
