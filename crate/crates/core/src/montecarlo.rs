//! Parallel trial engine and estimators for the stopped Bayes factor.
//!
//! Every trial owns a ChaCha8 stream selected by its index, so results do not
//! depend on how trials are spread over worker threads. Records come back in
//! trial order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::evidence::{stop, Hypothesis, SignificanceLevel};
use crate::exact::FiniteModel;
use crate::invariant::{GroupElement, InvariantModelPair, Summary, ThresholdBoundary};
use crate::stopping::{Decision, RuleKind, StoppingRule};

/// Default number of equal-count bins.
pub const DEFAULT_BINS: usize = 30;
/// Fraction of eligible bins whose centre must fall inside the ratio CI.
pub const BIN_COVERAGE: f64 = 0.93;

const Z95: f64 = 1.959_963_984_540_054;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `seed`, giving independent seeds for sub-experiments
/// (one per hypothesis and nuisance value, say).
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// The random stream of trial `trial` under experiment seed `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `f` on a pool of at most `threads` workers (all cores if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(invalid("thread count must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Outcome of one simulated sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub hypothesis: Hypothesis,
    /// Nuisance value that generated the data; `None` for finite models.
    pub g: Option<GroupElement>,
    pub stop_index: usize,
    pub stopped_log_beta: f64,
    pub seed: u64,
    pub trial: u64,
}

/// Writes `k,g,stop_index,stopped_log_beta,seed,trial` rows.
pub fn write_records_csv<W: Write>(mut w: W, records: &[TrialRecord]) -> std::io::Result<()> {
    writeln!(w, "k,g,stop_index,stopped_log_beta,seed,trial")?;
    for r in records {
        let g = r.g.map(|g| g.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:.16e},{},{}",
            r.hypothesis.index(),
            g,
            r.stop_index,
            r.stopped_log_beta,
            r.seed,
            r.trial
        )?;
    }
    Ok(())
}

/// A model pair and rule prepared for repeated simulation.
///
/// Threshold rules under a symmetric effect prior are decided through
/// precomputed critical values, so a step costs O(1); the Bayes factor
/// itself is evaluated only at the stopping time.
#[derive(Debug, Clone)]
pub struct Simulator {
    pair: InvariantModelPair,
    rule: StoppingRule,
    boundary: Option<ThresholdBoundary>,
}

impl Simulator {
    pub fn new(pair: InvariantModelPair, rule: StoppingRule) -> Result<Self> {
        let m = pair.m();
        rule.validate_for(m)?;
        let boundary = match rule.kind() {
            RuleKind::BfThreshold { upper, lower } if pair.effect_prior().is_symmetric() => {
                Some(ThresholdBoundary::new(
                    pair.group(),
                    pair.effect_prior(),
                    *upper,
                    *lower,
                    m + 1,
                    rule.cap(),
                )?)
            }
            _ => None,
        };
        Ok(Self {
            pair,
            rule,
            boundary,
        })
    }

    pub fn pair(&self) -> &InvariantModelPair {
        &self.pair
    }

    pub fn rule(&self) -> &StoppingRule {
        &self.rule
    }

    /// Continues from `summary`/`data` until the rule fires; returns the
    /// stopping index and `log β_τ`.
    fn continue_until_stop<R: Rng>(
        &self,
        stream: &mut crate::invariant::ObservationStream,
        summary: &mut Summary,
        data: &mut Vec<f64>,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        let cap = self.rule.cap();
        let fast = self.boundary.is_some();
        debug_assert!(data.len() == summary.len() || fast);
        let mut log_betas = Vec::new();
        loop {
            let x = stream.next_obs(rng);
            summary.push(x);
            let n = summary.len();
            if !fast {
                data.push(x);
            }
            if n <= self.pair.m() {
                continue;
            }
            let fire = if let Some(b) = &self.boundary {
                n >= cap || b.fires(summary)?
            } else {
                if self.rule.uses_log_beta() {
                    log_betas.push(self.pair.log_bf_summary(summary)?);
                }
                self.rule.decide(data, &log_betas) == Decision::Stop
            };
            if fire {
                let lb = match log_betas.last() {
                    Some(&lb) => lb,
                    None => self.pair.log_bf_summary(summary)?,
                };
                return Ok((n, lb));
            }
        }
    }

    /// One trial under `P_{k,g}`.
    pub fn run_trial(
        &self,
        k: Hypothesis,
        g: GroupElement,
        seed: u64,
        trial: u64,
    ) -> Result<TrialRecord> {
        let mut rng = trial_rng(seed, trial);
        let effect = self.pair.draw_effect(k, &mut rng);
        let mut stream = self.pair.stream(g, effect)?;
        let mut summary = Summary::new(self.pair.group());
        let mut data = Vec::new();
        let (stop_index, stopped_log_beta) =
            self.continue_until_stop(&mut stream, &mut summary, &mut data, &mut rng)?;
        Ok(TrialRecord {
            hypothesis: k,
            g: Some(g),
            stop_index,
            stopped_log_beta,
            seed,
            trial,
        })
    }

    /// Trials `0..n_trials` under `P_{k,g}`, in trial order.
    pub fn run_trials(
        &self,
        k: Hypothesis,
        g: GroupElement,
        n_trials: usize,
        seed: u64,
    ) -> Result<Vec<TrialRecord>> {
        (0..n_trials as u64)
            .into_par_iter()
            .map(|t| self.run_trial(k, g, seed, t))
            .collect()
    }

    /// One trial that starts from the initial sample `x_m`, draws `(g, δ)`
    /// from the posterior under `k` given `x_m`, and continues the sequence.
    /// The record's value is the conditional `log β_{τ|m}` and its `g` is the
    /// drawn nuisance value.
    pub fn run_conditional_trial(
        &self,
        k: Hypothesis,
        x_m: &[f64],
        seed: u64,
        trial: u64,
    ) -> Result<TrialRecord> {
        let mut rng = trial_rng(seed, trial);
        let draw = self.pair.sample_posterior_given_initial(k, x_m, &mut rng)?;
        let mut stream = self.pair.stream(draw.g, draw.effect.unwrap_or(0.0))?;
        stream.skip_initial(x_m);
        let mut summary = Summary::from_data(self.pair.group(), x_m);
        let log_beta_m = self.pair.log_bf_summary(&summary)?;
        let mut data = x_m.to_vec();
        let (stop_index, lb) =
            self.continue_until_stop(&mut stream, &mut summary, &mut data, &mut rng)?;
        Ok(TrialRecord {
            hypothesis: k,
            g: Some(draw.g),
            stop_index,
            stopped_log_beta: lb - log_beta_m,
            seed,
            trial,
        })
    }

    pub fn run_conditional_trials(
        &self,
        k: Hypothesis,
        x_m: &[f64],
        n_trials: usize,
        seed: u64,
    ) -> Result<Vec<TrialRecord>> {
        (0..n_trials as u64)
            .into_par_iter()
            .map(|t| self.run_conditional_trial(k, x_m, seed, t))
            .collect()
    }
}

/// `n_trials` independent records under `P_{k,g}`.
pub fn run_trials(
    pair: &InvariantModelPair,
    k: Hypothesis,
    g: GroupElement,
    rule: &StoppingRule,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    Simulator::new(*pair, rule.clone())?.run_trials(k, g, n_trials, seed)
}

/// Trials on a finite model: sequences drawn from the Bayes marginal of `k`
/// and stopped by `rule` (whose cap must not exceed the horizon).
pub fn run_finite_trials(
    model: &FiniteModel,
    k: Hypothesis,
    rule: &StoppingRule,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    if rule.cap() > model.horizon() {
        return Err(invalid("rule cap exceeds the model horizon"));
    }
    (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x = model.sample(k, rule.cap(), &mut rng)?;
            let traj = model.trajectory(&x)?;
            let data: Vec<f64> = x.iter().map(|&s| s as f64).collect();
            let out = stop(&traj, rule, &data);
            let (Some(stop_index), Some(stopped_log_beta)) = (out.index(), out.log_beta()) else {
                return Err(invalid("capped rule did not stop"));
            };
            Ok(TrialRecord {
                hypothesis: k,
                g: None,
                stop_index,
                stopped_log_beta,
                seed,
                trial: t,
            })
        })
        .collect()
}

/// One equal-count bin of pooled stopped log Bayes factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub log_beta_lo: f64,
    pub log_beta_hi: f64,
    pub count0: usize,
    pub count1: usize,
    /// `(count1/N1) / (count0/N0)`, absent when `count0 = 0`.
    pub ratio: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// Mean of the pooled log Bayes factors in the bin (log of their
    /// geometric mean).
    pub log_center: f64,
    /// `E₀[β | bin]` estimated from the pooled values: the bin ratio that
    /// calibration predicts, exact however wide the bin is.
    pub predicted_ratio: f64,
    /// Whether `predicted_ratio` lies in `[ci_lo, ci_hi]`; absent when
    /// `count0 = 0`.
    pub covered: Option<bool>,
    /// Whether `exp(log_center)` lies in `[ci_lo, ci_hi]`.
    pub geometric_covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationEstimate {
    pub n0: usize,
    pub n1: usize,
    pub bins: Vec<CalibrationBin>,
    /// Bins with `count0 > 0`.
    pub eligible: usize,
    pub covered: usize,
    pub coverage: f64,
    /// Coverage when the geometric mean is used as the bin centre.
    pub geometric_coverage: f64,
    pub passed: bool,
}

fn finite_values(records: &[TrialRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            if r.stopped_log_beta.is_finite() {
                Ok(r.stopped_log_beta)
            } else {
                Err(Error::Numeric {
                    residual: r.stopped_log_beta,
                    tolerance: 0.0,
                })
            }
        })
        .collect()
}

/// Checks that the frequency ratio of `H1` to `H0` among stopped Bayes
/// factors in a bin equals the Bayes factor there.
///
/// Bins hold roughly equal numbers of pooled values; equal values never
/// straddle a cut. The 95% interval for the ratio comes from the delta
/// method on its logarithm. A bin is covered when the ratio calibration
/// predicts for it, `E₀[β | bin]`, lies inside that interval.
pub fn estimate_strong_calibration(
    records0: &[TrialRecord],
    records1: &[TrialRecord],
    n_bins: usize,
) -> Result<CalibrationEstimate> {
    if n_bins == 0 {
        return Err(invalid("need at least one bin"));
    }
    if records0.is_empty() || records1.is_empty() {
        return Err(invalid("both arms need at least one record"));
    }
    let v0 = finite_values(records0)?;
    let v1 = finite_values(records1)?;
    let (n0, n1) = (v0.len(), v1.len());
    let mut pooled: Vec<(f64, bool)> = v0
        .iter()
        .map(|&v| (v, false))
        .chain(v1.iter().map(|&v| (v, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = pooled.len();

    let mut bins = Vec::new();
    let mut start = 0;
    for i in 1..=n_bins {
        if start >= total {
            break;
        }
        let mut end = if i == n_bins {
            total
        } else {
            ((i * total) / n_bins).max(start + 1)
        };
        while end < total && pooled[end].0 == pooled[end - 1].0 {
            end += 1;
        }
        if end <= start {
            continue;
        }
        let slice = &pooled[start..end];
        let count1 = slice.iter().filter(|p| p.1).count();
        let count0 = slice.len() - count1;
        let log_center = slice.iter().map(|p| p.0).sum::<f64>() / slice.len() as f64;
        let predicted_ratio = predicted_bin_ratio(slice.iter().map(|p| p.0), n0, n1);
        let (ratio, ci_lo, ci_hi, covered) = if count0 == 0 {
            (None, None, None, None)
        } else {
            let r = (count1 as f64 / n1 as f64) / (count0 as f64 / n0 as f64);
            let (lo, hi) = if count1 == 0 {
                (0.0, (3.0 / n1 as f64) / (count0 as f64 / n0 as f64))
            } else {
                let var =
                    1.0 / count1 as f64 - 1.0 / n1 as f64 + 1.0 / count0 as f64 - 1.0 / n0 as f64;
                let h = Z95 * var.max(0.0).sqrt();
                (r * (-h).exp(), r * h.exp())
            };
            (Some(r), Some(lo), Some(hi), Some((lo, hi)))
        };
        let inside = |c: f64| covered.map(|(lo, hi)| lo <= c && c <= hi);
        bins.push(CalibrationBin {
            log_beta_lo: slice[0].0,
            log_beta_hi: slice[slice.len() - 1].0,
            count0,
            count1,
            ratio,
            ci_lo,
            ci_hi,
            log_center,
            predicted_ratio,
            covered: inside(predicted_ratio),
            geometric_covered: inside(log_center.exp()),
        });
        start = end;
    }
    let eligible = bins.iter().filter(|b| b.covered.is_some()).count();
    let covered = bins.iter().filter(|b| b.covered == Some(true)).count();
    let geometric = bins
        .iter()
        .filter(|b| b.geometric_covered == Some(true))
        .count();
    let share = |c: usize| {
        if eligible == 0 {
            0.0
        } else {
            c as f64 / eligible as f64
        }
    };
    let coverage = share(covered);
    Ok(CalibrationEstimate {
        n0,
        n1,
        bins,
        eligible,
        covered,
        coverage,
        geometric_coverage: share(geometric),
        passed: eligible > 0 && coverage >= BIN_COVERAGE,
    })
}

/// `E₀[β | bin]` from pooled values `b_i`: under calibration the pooled
/// density is `p₀(b)(N0 + N1 b)/(N0 + N1)`, so weighting each value by
/// `1/(N0 + N1 b)` recovers the null distribution within the bin.
fn predicted_bin_ratio(log_betas: impl Iterator<Item = f64>, n0: usize, n1: usize) -> f64 {
    let (n0, n1) = (n0 as f64, n1 as f64);
    let (mut num, mut den) = (0.0, 0.0);
    for lb in log_betas {
        // w = 1/(N0 + N1 e^lb), written to stay finite for large |lb|.
        let (wb, w) = if lb > 0.0 {
            let inv = (-lb).exp();
            (1.0 / (n0 * inv + n1), inv / (n0 * inv + n1))
        } else {
            let b = lb.exp();
            (b / (n0 + n1 * b), 1.0 / (n0 + n1 * b))
        };
        num += wb;
        den += w;
    }
    num / den
}

/// Wilson score interval for `successes` out of `n` at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Type1Estimate {
    pub alpha: f64,
    pub trials: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial standard error at the nominal level, `sqrt(α(1−α)/N)`.
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `rate ≤ α + 3·se`.
    pub passed: bool,
}

/// Fraction of null trials whose stopped Bayes factor reached `1/α`.
pub fn estimate_type1(records0: &[TrialRecord], alpha: SignificanceLevel) -> Result<Type1Estimate> {
    let v = finite_values(records0)?;
    let n = v.len();
    if n == 0 {
        return Err(invalid("no records"));
    }
    let log_t = alpha.bf_threshold().ln();
    let rejections = v.iter().filter(|&&lb| lb >= log_t).count();
    let rate = rejections as f64 / n as f64;
    let a = alpha.alpha();
    let se = (a * (1.0 - a) / n as f64).sqrt();
    let (ci_lo, ci_hi) = wilson_interval(rejections, n);
    Ok(Type1Estimate {
        alpha: a,
        trials: n,
        rejections,
        rate,
        se,
        ci_lo,
        ci_hi,
        passed: rate <= a + 3.0 * se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub trials: usize,
    pub mean: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Whether the 95% interval contains 1.
    pub ci_contains_one: bool,
    /// `|mean − 1| ≤ 3·se`.
    pub within_3se: bool,
}

/// Sample mean of `β_τ` over null trials with a normal 95% interval.
pub fn estimate_stopped_bf_mean(records0: &[TrialRecord]) -> Result<MeanEstimate> {
    let v = finite_values(records0)?;
    let n = v.len();
    if n == 0 {
        return Err(invalid("no records"));
    }
    let n_f = n as f64;
    let b: Vec<f64> = v.iter().map(|lb| lb.exp()).collect();
    let mean = b.iter().sum::<f64>() / n_f;
    let var = if n > 1 {
        b.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n_f - 1.0)
    } else {
        0.0
    };
    let se = (var / n_f).sqrt();
    let (ci_lo, ci_hi) = (mean - Z95 * se, mean + Z95 * se);
    Ok(MeanEstimate {
        trials: n,
        mean,
        se,
        ci_lo,
        ci_hi,
        ci_contains_one: ci_lo <= 1.0 && 1.0 <= ci_hi,
        within_3se: (mean - 1.0).abs() <= 3.0 * se,
    })
}

/// Calibration of `β_{τ|m}` given the initial sample `x_m`: each arm's
/// trials draw the nuisance value from its posterior given `x_m` and
/// continue from there.
pub fn estimate_marginal_calibration(
    pair: &InvariantModelPair,
    x_m: &[f64],
    rule: &StoppingRule,
    n_trials: usize,
    seed: u64,
    n_bins: usize,
) -> Result<(CalibrationEstimate, Vec<TrialRecord>)> {
    let sim = Simulator::new(*pair, rule.clone())?;
    marginal_calibration_with(&sim, x_m, n_trials, seed, n_bins)
}

/// [`estimate_marginal_calibration`] with a prepared simulator.
pub fn marginal_calibration_with(
    sim: &Simulator,
    x_m: &[f64],
    n_trials: usize,
    seed: u64,
    n_bins: usize,
) -> Result<(CalibrationEstimate, Vec<TrialRecord>)> {
    let mut records = Vec::with_capacity(2 * n_trials);
    for k in Hypothesis::BOTH {
        let s = derive_seed(seed, &[k.index() as u64]);
        records.extend(sim.run_conditional_trials(k, x_m, n_trials, s)?);
    }
    let (r0, r1) = records.split_at(n_trials);
    let est = estimate_strong_calibration(r0, r1, n_bins)?;
    Ok((est, records))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at level 0.01.
pub fn ks_critical_001(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::{EffectPrior, GroupKind};

    fn record(k: Hypothesis, lb: f64) -> TrialRecord {
        TrialRecord {
            hypothesis: k,
            g: None,
            stop_index: 1,
            stopped_log_beta: lb,
            seed: 0,
            trial: 0,
        }
    }

    #[test]
    fn zero_trials_is_empty() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let rule = StoppingRule::fixed_n(5).unwrap();
        let g = GroupElement::scale(1.0).unwrap();
        assert!(run_trials(&pair, Hypothesis::Alt, g, &rule, 0, 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn fixed_n_stops_at_n() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let rule = StoppingRule::fixed_n(5).unwrap();
        let g = GroupElement::scale(2.0).unwrap();
        let recs = run_trials(&pair, Hypothesis::Alt, g, &rule, 50, 3).unwrap();
        assert!(recs.iter().all(|r| r.stop_index == 5));
        let x: Vec<f64> = {
            let mut rng = trial_rng(3, 7);
            let effect = pair.draw_effect(Hypothesis::Alt, &mut rng);
            let mut s = pair.stream(g, effect).unwrap();
            (0..5).map(|_| s.next_obs(&mut rng)).collect()
        };
        assert_eq!(recs[7].stopped_log_beta, pair.log_bf(&x).unwrap());
    }

    #[test]
    fn point_mass_zero_gives_unit_bayes_factor() {
        let pair = InvariantModelPair::new(GroupKind::Scale, EffectPrior::PointMass(0.0)).unwrap();
        let rule = StoppingRule::bf_threshold(20.0, Some(0.05), 40).unwrap();
        let g = GroupElement::scale(1.0).unwrap();
        let recs = run_trials(&pair, Hypothesis::Null, g, &rule, 20, 1).unwrap();
        assert!(recs
            .iter()
            .all(|r| r.stopped_log_beta == 0.0 && r.stop_index == 40));
        let m = estimate_stopped_bf_mean(&recs).unwrap();
        assert_eq!(m.mean, 1.0);
        let t = estimate_type1(&recs, SignificanceLevel::new(0.05).unwrap()).unwrap();
        assert_eq!(t.rejections, 0);
    }

    #[test]
    fn records_match_direct_trajectory() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let rule = StoppingRule::bf_threshold(5.0, Some(0.2), 60).unwrap();
        let sim = Simulator::new(pair, rule.clone()).unwrap();
        let g = GroupElement::scale(0.5).unwrap();
        for t in 0..40 {
            let rec = sim.run_trial(Hypothesis::Alt, g, 11, t).unwrap();
            let mut rng = trial_rng(11, t);
            let effect = pair.draw_effect(Hypothesis::Alt, &mut rng);
            let mut s = pair.stream(g, effect).unwrap();
            let x: Vec<f64> = (0..60).map(|_| s.next_obs(&mut rng)).collect();
            let traj = pair.trajectory(&x).unwrap();
            let out = stop(&traj, &rule, &x);
            assert_eq!(out.index(), Some(rec.stop_index));
            assert_eq!(out.log_beta(), Some(rec.stopped_log_beta));
        }
    }

    #[test]
    fn asymmetric_prior_takes_direct_path() {
        let pair = InvariantModelPair::new(GroupKind::Scale, EffectPrior::PointMass(0.8)).unwrap();
        let rule = StoppingRule::bf_threshold(5.0, Some(0.2), 30).unwrap();
        let sim = Simulator::new(pair, rule.clone()).unwrap();
        let g = GroupElement::scale(1.0).unwrap();
        let rec = sim.run_trial(Hypothesis::Alt, g, 5, 2).unwrap();
        let mut rng = trial_rng(5, 2);
        let effect = pair.draw_effect(Hypothesis::Alt, &mut rng);
        let mut s = pair.stream(g, effect).unwrap();
        let x: Vec<f64> = (0..30).map(|_| s.next_obs(&mut rng)).collect();
        let out = stop(&pair.trajectory(&x).unwrap(), &rule, &x);
        assert_eq!(out.index(), Some(rec.stop_index));
        assert_eq!(out.log_beta(), Some(rec.stopped_log_beta));
    }

    #[test]
    fn identical_arms_are_calibrated_at_one() {
        let r0: Vec<_> = (0..100).map(|_| record(Hypothesis::Null, 0.0)).collect();
        let est = estimate_strong_calibration(&r0, &r0, 30).unwrap();
        assert_eq!(est.bins.len(), 1);
        assert_eq!(est.bins[0].ratio, Some(1.0));
        assert!(est.passed);
    }

    #[test]
    fn bins_split_at_quantiles_and_merge_ties() {
        let r0: Vec<_> = (0..90)
            .map(|i| record(Hypothesis::Null, (i / 3) as f64))
            .collect();
        let r1 = r0.clone();
        let est = estimate_strong_calibration(&r0, &r1, 7).unwrap();
        let total: usize = est.bins.iter().map(|b| b.count0 + b.count1).sum();
        assert_eq!(total, 180);
        for w in est.bins.windows(2) {
            assert!(w[0].log_beta_hi < w[1].log_beta_lo);
        }
    }

    #[test]
    fn empty_null_bin_is_flagged() {
        let r0 = vec![record(Hypothesis::Null, 0.0)];
        let r1 = vec![record(Hypothesis::Alt, 5.0)];
        let est = estimate_strong_calibration(&r0, &r1, 2).unwrap();
        assert_eq!(est.bins.len(), 2);
        assert_eq!(est.bins[1].covered, None);
        assert_eq!(est.eligible, 1);
    }

    #[test]
    fn wilson_interval_brackets_rate() {
        let (lo, hi) = wilson_interval(5, 100);
        assert!(lo < 0.05 && 0.05 < hi);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
        // Reference: 0.0215 and 0.1118 for 5/100.
        assert!((lo - 0.021_543).abs() < 1e-5 && (hi - 0.111_752).abs() < 1e-5);
    }

    #[test]
    fn ks_statistic_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[2.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0, 0]);
        let b = derive_seed(1, &[0, 1]);
        let c = derive_seed(1, &[1, 0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[0, 0]));
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let rule = StoppingRule::bf_threshold(5.0, Some(0.2), 50).unwrap();
        let g = GroupElement::scale(1.0).unwrap();
        let one = with_threads(Some(1), || {
            run_trials(&pair, Hypothesis::Null, g, &rule, 200, 4)
        })
        .unwrap()
        .unwrap();
        let three = with_threads(Some(3), || {
            run_trials(&pair, Hypothesis::Null, g, &rule, 200, 4)
        })
        .unwrap()
        .unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn conditional_trials_start_from_initial_sample() {
        let pair = InvariantModelPair::one_sample_t(1.0).unwrap();
        let rule = StoppingRule::fixed_n(4).unwrap();
        let sim = Simulator::new(pair, rule).unwrap();
        let rec = sim
            .run_conditional_trial(Hypothesis::Null, &[2.0], 8, 0)
            .unwrap();
        assert_eq!(rec.stop_index, 4);
        assert!(rec.g.unwrap().scale_factor() > 0.0);
    }

    #[test]
    fn finite_trials_stop_within_cap() {
        let m = FiniteModel::bernoulli_point_vs_beta(0.5, 1.0, 1.0, 6).unwrap();
        let rule = StoppingRule::bf_threshold(3.0, None, 6).unwrap();
        let recs = run_finite_trials(&m, Hypothesis::Null, &rule, 100, 2).unwrap();
        assert!(recs.iter().all(|r| (1..=6).contains(&r.stop_index)));
    }
}
