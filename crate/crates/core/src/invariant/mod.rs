//! Group-invariant model pairs: the one-sample t-test under the scale group
//! and the alternating two-sample t-test under the location-scale group,
//! both with the right Haar prior on the nuisance parameters.

mod boundary;
mod group;
mod marginal;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use boundary::ThresholdBoundary;
pub use group::{
    maximal_invariant, recover_element, GroupElement, GroupKind, MaximalInvariantValue,
};
pub use marginal::{log_bf_symmetric, EffectPrior, Summary};

use crate::error::{invalid, Error, Result};
use crate::evidence::{BfTrajectory, Hypothesis};

/// `H0` and `H1` sharing a group `G`, with the right Haar prior on `G` under
/// both and `effect_prior` on δ under `H1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantModelPair {
    group: GroupKind,
    effect_prior: EffectPrior,
}

/// One draw from the posterior of the nuisance (and effect) parameters given
/// an initial sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorDraw {
    pub g: GroupElement,
    /// δ under the alternative, `None` under the null.
    pub effect: Option<f64>,
}

impl InvariantModelPair {
    pub fn new(group: GroupKind, effect_prior: EffectPrior) -> Result<Self> {
        effect_prior.validate()?;
        Ok(Self {
            group,
            effect_prior,
        })
    }

    /// One-sample t-test with a Cauchy(r) prior on the effect size.
    pub fn one_sample_t(r: f64) -> Result<Self> {
        Self::new(GroupKind::Scale, EffectPrior::Cauchy(r))
    }

    pub fn group(&self) -> GroupKind {
        self.group
    }

    pub fn effect_prior(&self) -> EffectPrior {
        self.effect_prior
    }

    /// Initial-sample size `m`.
    pub fn m(&self) -> usize {
        self.group.initial_size()
    }

    /// Effect direction of observation `i` (zero-based) under the alternative.
    pub fn design(&self, i: usize) -> f64 {
        match self.group {
            GroupKind::Scale => 1.0,
            GroupKind::LocationScale if i % 2 == 0 => 0.5,
            GroupKind::LocationScale => -0.5,
        }
    }

    fn summarize(&self, x: &[f64]) -> Result<Summary> {
        self.group.check_sample(x)?;
        Ok(Summary::from_data(self.group, x))
    }

    pub fn log_marginal_null(&self, x: &[f64]) -> Result<f64> {
        marginal::log_marginal_null(&self.summarize(x)?)
    }

    pub fn log_marginal_alt(&self, x: &[f64]) -> Result<f64> {
        let s = self.summarize(x)?;
        Ok(marginal::log_marginal_null(&s)? + marginal::log_bf(&self.effect_prior, &s)?)
    }

    pub fn log_bf(&self, x: &[f64]) -> Result<f64> {
        marginal::log_bf(&self.effect_prior, &self.summarize(x)?)
    }

    /// Log Bayes factor of an already summarized prefix.
    pub fn log_bf_summary(&self, summary: &Summary) -> Result<f64> {
        marginal::log_bf(&self.effect_prior, summary)
    }

    /// `log β_n` for every `n` from `m` through `x.len()`.
    pub fn trajectory(&self, x: &[f64]) -> Result<BfTrajectory> {
        let m = self.m();
        self.group.check_sample(x)?;
        let mut s = Summary::new(self.group);
        let mut values = Vec::with_capacity(x.len().saturating_sub(m) + 1);
        for (i, &v) in x.iter().enumerate() {
            s.push(v);
            if i + 1 >= m {
                values.push(marginal::log_bf(&self.effect_prior, &s)?);
            }
        }
        BfTrajectory::new(m, values)
    }

    pub fn maximal_invariant(&self, x: &[f64]) -> Result<MaximalInvariantValue> {
        maximal_invariant(self.group, x)
    }

    fn check_element(&self, g: &GroupElement) -> Result<()> {
        if g.kind() != self.group {
            return Err(invalid(format!(
                "group element {g:?} does not belong to the {} group",
                self.group
            )));
        }
        Ok(())
    }

    /// Draws the effect size for one sequence under hypothesis `k`.
    pub fn draw_effect<R: Rng + ?Sized>(&self, k: Hypothesis, rng: &mut R) -> f64 {
        match (k, self.effect_prior) {
            (Hypothesis::Null, _) => 0.0,
            (Hypothesis::Alt, EffectPrior::PointMass(d)) => d,
            (Hypothesis::Alt, EffectPrior::Cauchy(r)) => {
                Cauchy::new(0.0, r).expect("validated scale").sample(rng)
            }
        }
    }

    /// A sequential source of observations from `P_{k,g}` with the effect
    /// size fixed for the whole sequence.
    pub fn stream(&self, g: GroupElement, effect: f64) -> Result<ObservationStream> {
        self.check_element(&g)?;
        Ok(ObservationStream {
            pair: *self,
            g,
            effect,
            drawn: 0,
            first: 0.0,
        })
    }

    /// `n` observations from `P_{k,g}`: a draw from `P_{k,e}` moved by `g`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        k: Hypothesis,
        g: GroupElement,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if n < self.m() {
            return Err(invalid(format!(
                "need at least m = {} observations, asked for {n}",
                self.m()
            )));
        }
        let effect = self.draw_effect(k, rng);
        let mut stream = self.stream(g, effect)?;
        Ok((0..n).map(|_| stream.next_obs(rng)).collect())
    }

    /// Posterior draw of `(g, δ)` given the initial sample `x_m`, for the
    /// scale group.
    ///
    /// With `v = x_1 / σ` the joint posterior is proportional to
    /// `π(δ) φ(v − δ)` restricted to `sign v = sign x_1`, so a draw is
    /// `δ ~ π`, `v ~ N(δ, 1)` accepted on matching sign, then `σ = x_1 / v`.
    /// Under the null `x_1²/σ² = v²` is χ²₁.
    pub fn sample_posterior_given_initial<R: Rng + ?Sized>(
        &self,
        k: Hypothesis,
        x_m: &[f64],
        rng: &mut R,
    ) -> Result<PosteriorDraw> {
        if self.group != GroupKind::Scale {
            return Err(Error::NotImplemented(format!(
                "posterior given the initial sample for the {} group",
                self.group
            )));
        }
        if x_m.len() != self.m() {
            return Err(invalid(format!(
                "initial sample must have exactly {} value(s)",
                self.m()
            )));
        }
        self.group.check_sample(x_m)?;
        let x1 = x_m[0];
        loop {
            let effect = self.draw_effect(k, rng);
            let eps: f64 = StandardNormal.sample(rng);
            let v = effect + eps;
            if v != 0.0 && v.is_sign_positive() == x1.is_sign_positive() {
                return Ok(PosteriorDraw {
                    g: GroupElement::Scale(x1 / v),
                    effect: (k == Hypothesis::Alt).then_some(effect),
                });
            }
        }
    }

    /// Posterior draw of the nuisance element `g` alone given `x_m`.
    pub fn sample_posterior_g_given_initial<R: Rng + ?Sized>(
        &self,
        k: Hypothesis,
        x_m: &[f64],
        rng: &mut R,
    ) -> Result<GroupElement> {
        Ok(self.sample_posterior_given_initial(k, x_m, rng)?.g)
    }

    /// Continues `x_m` with `n − m` further observations from
    /// `P_{k,g}(· | x^m)` for a posterior draw `(g, δ)`.
    pub fn continue_from<R: Rng + ?Sized>(
        &self,
        draw: &PosteriorDraw,
        x_m: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut stream = self.stream(draw.g, draw.effect.unwrap_or(0.0))?;
        stream.skip_initial(x_m);
        let mut x = x_m.to_vec();
        while x.len() < n {
            x.push(stream.next_obs(rng));
        }
        Ok(x)
    }
}

/// Generates one observation at a time from `P_{k,g}` for fixed δ,
/// redrawing exact hits of the excluded set.
#[derive(Debug, Clone)]
pub struct ObservationStream {
    pair: InvariantModelPair,
    g: GroupElement,
    effect: f64,
    drawn: usize,
    first: f64,
}

impl ObservationStream {
    pub fn next_obs<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let i = self.drawn;
        let mean = self.effect * self.pair.design(i);
        loop {
            let eps: f64 = StandardNormal.sample(rng);
            let x = self.g.act_scalar(mean + eps);
            let excluded = match (self.pair.group, i) {
                (GroupKind::Scale, 0) => x == 0.0,
                (GroupKind::LocationScale, 1) => x == self.first,
                _ => false,
            };
            if !excluded {
                if i == 0 {
                    self.first = x;
                }
                self.drawn += 1;
                return x;
            }
        }
    }

    /// Marks `x` as already drawn, so the stream continues after it.
    pub fn skip_initial(&mut self, x: &[f64]) {
        if let Some(&first) = x.first() {
            self.first = first;
        }
        self.drawn = x.len();
    }

    pub fn drawn(&self) -> usize {
        self.drawn
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair() -> InvariantModelPair {
        InvariantModelPair::one_sample_t(1.0).unwrap()
    }

    #[test]
    fn point_mass_zero_alt_equals_null() {
        let p = InvariantModelPair::new(GroupKind::Scale, EffectPrior::PointMass(0.0)).unwrap();
        let x = [0.3, -1.1, 2.5];
        assert_eq!(
            p.log_marginal_alt(&x).unwrap(),
            p.log_marginal_null(&x).unwrap()
        );
        assert_eq!(p.log_bf(&x).unwrap(), 0.0);
    }

    #[test]
    fn bayes_factor_is_scale_invariant() {
        let x = [0.4, 1.3, -0.2, 2.0];
        let a = pair().log_bf(&x).unwrap();
        let b = pair().log_bf(&GroupElement::Scale(3.0).act(&x)).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn excluded_inputs_are_rejected() {
        assert!(matches!(
            pair().log_bf(&[0.0, 1.0]),
            Err(Error::SingularInput(_))
        ));
        assert!(matches!(
            pair().log_marginal_null(&[]),
            Err(Error::SingularInput(_))
        ));
        let ls =
            InvariantModelPair::new(GroupKind::LocationScale, EffectPrior::Cauchy(1.0)).unwrap();
        assert!(ls.log_bf(&[1.0, 1.0, 3.0]).is_err());
    }

    #[test]
    fn trajectory_matches_prefix_evaluation() {
        let x = [0.7, 1.9, -0.4, 1.1, 2.6];
        let t = pair().trajectory(&x).unwrap();
        assert_eq!(t.m(), 1);
        for n in 1..=x.len() {
            assert_eq!(t.log_beta(n).unwrap(), pair().log_bf(&x[..n]).unwrap());
        }
    }

    #[test]
    fn sampler_respects_group_kind_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pair();
        assert!(p
            .sample(
                Hypothesis::Null,
                GroupElement::LocationScale {
                    scale: 1.0,
                    shift: 0.0
                },
                3,
                &mut rng
            )
            .is_err());
        assert!(p
            .sample(Hypothesis::Null, GroupElement::Scale(1.0), 0, &mut rng)
            .is_err());
        let x = p
            .sample(Hypothesis::Alt, GroupElement::Scale(2.0), 7, &mut rng)
            .unwrap();
        assert_eq!(x.len(), 7);
    }

    #[test]
    fn posterior_sampler_rejects_unsupported_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ls =
            InvariantModelPair::new(GroupKind::LocationScale, EffectPrior::Cauchy(1.0)).unwrap();
        assert!(matches!(
            ls.sample_posterior_g_given_initial(Hypothesis::Null, &[1.0, 2.0], &mut rng),
            Err(Error::NotImplemented(_))
        ));
        assert!(pair()
            .sample_posterior_g_given_initial(Hypothesis::Null, &[0.0], &mut rng)
            .is_err());
    }

    #[test]
    fn posterior_draw_keeps_sign_of_initial_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x1 in [1.5, -0.8] {
            for k in Hypothesis::BOTH {
                let d = pair()
                    .sample_posterior_given_initial(k, &[x1], &mut rng)
                    .unwrap();
                assert!(d.g.scale_factor() > 0.0);
                let cont = pair().continue_from(&d, &[x1], 5, &mut rng).unwrap();
                assert_eq!(cont[0], x1);
                assert_eq!(cont.len(), 5);
            }
        }
    }
}
