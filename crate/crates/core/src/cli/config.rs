//! Flat `key = value` experiment configs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evidence::SignificanceLevel;
use crate::exact::DEFAULT_BUDGET;
use crate::invariant::{EffectPrior, GroupElement, GroupKind, InvariantModelPair};
use crate::montecarlo::DEFAULT_BINS;
use crate::stopping::{invariant_statistic, raw_statistic, StoppingRule};

/// The experiments the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    ExactCalibration,
    ExactMarkov,
    ExactExpectation,
    McStrongCalibration,
    McType1,
    McBfMean,
    McMarginalCalibration,
    InvarianceCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::ExactCalibration,
        ExperimentKind::ExactMarkov,
        ExperimentKind::ExactExpectation,
        ExperimentKind::McStrongCalibration,
        ExperimentKind::McType1,
        ExperimentKind::McBfMean,
        ExperimentKind::McMarginalCalibration,
        ExperimentKind::InvarianceCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ExactCalibration => "exact-calibration",
            ExperimentKind::ExactMarkov => "exact-markov",
            ExperimentKind::ExactExpectation => "exact-expectation",
            ExperimentKind::McStrongCalibration => "mc-strong-calibration",
            ExperimentKind::McType1 => "mc-type1",
            ExperimentKind::McBfMean => "mc-bf-mean",
            ExperimentKind::McMarginalCalibration => "mc-marginal-calibration",
            ExperimentKind::InvarianceCheck => "invariance-check",
        }
    }

    fn is_exact(self) -> bool {
        matches!(
            self,
            ExperimentKind::ExactCalibration
                | ExperimentKind::ExactMarkov
                | ExperimentKind::ExactExpectation
        )
    }

    /// Keys this experiment accepts.
    fn keys(self) -> &'static [&'static str] {
        const RULE: [&str; 7] = [
            "rule",
            "rule_n",
            "rule_upper",
            "rule_lower",
            "rule_cap",
            "rule_stat",
            "rule_threshold",
        ];
        match self {
            ExperimentKind::ExactCalibration | ExperimentKind::ExactExpectation => &[
                "seed",
                "out",
                "theta0",
                "prior_points",
                "horizon",
                "budget",
                "tol",
                RULE[0],
                RULE[1],
                RULE[2],
                RULE[3],
                RULE[4],
                RULE[5],
                RULE[6],
            ],
            ExperimentKind::ExactMarkov => &[
                "seed",
                "out",
                "theta0",
                "prior_points",
                "horizon",
                "budget",
                "alpha",
            ],
            ExperimentKind::McStrongCalibration | ExperimentKind::McBfMean => &[
                "seed",
                "out",
                "group",
                "prior",
                "prior_scale",
                "prior_delta",
                "g",
                "n_trials",
                "bins",
                RULE[0],
                RULE[1],
                RULE[2],
                RULE[3],
                RULE[4],
                RULE[5],
                RULE[6],
            ],
            ExperimentKind::McType1 => &[
                "seed",
                "out",
                "group",
                "prior",
                "prior_scale",
                "prior_delta",
                "g",
                "n_trials",
                "alpha",
                "rule_cap",
            ],
            ExperimentKind::McMarginalCalibration => &[
                "seed",
                "out",
                "group",
                "prior",
                "prior_scale",
                "prior_delta",
                "initial",
                "n_trials",
                "bins",
                RULE[0],
                RULE[1],
                RULE[2],
                RULE[3],
                RULE[4],
                RULE[5],
                RULE[6],
            ],
            ExperimentKind::InvarianceCheck => &[
                "seed",
                "out",
                "group",
                "prior",
                "prior_scale",
                "prior_delta",
                "trials",
                RULE[0],
                RULE[1],
                RULE[2],
                RULE[3],
                RULE[4],
                RULE[5],
                RULE[6],
            ],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown experiment kind {s:?} (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are an error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                i + 1
            )));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key {k:?}",
                i + 1
            )));
        }
    }
    Ok(map)
}

/// Which stopping rule to build and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RuleSpec {
    FixedN(usize),
    BfThreshold {
        upper: f64,
        lower: Option<f64>,
        cap: usize,
    },
    InvariantStatistic {
        statistic: String,
        threshold: f64,
        cap: usize,
    },
    RawStatistic {
        statistic: String,
        threshold: f64,
        cap: usize,
    },
}

impl RuleSpec {
    pub fn build(&self, group: GroupKind) -> Result<StoppingRule> {
        match self {
            RuleSpec::FixedN(n) => StoppingRule::fixed_n(*n),
            RuleSpec::BfThreshold { upper, lower, cap } => {
                StoppingRule::bf_threshold(*upper, *lower, *cap)
            }
            RuleSpec::InvariantStatistic {
                statistic,
                threshold,
                cap,
            } => StoppingRule::invariant_statistic(
                group,
                invariant_statistic(statistic)?,
                *threshold,
                *cap,
            ),
            RuleSpec::RawStatistic {
                statistic,
                threshold,
                cap,
            } => StoppingRule::raw_statistic(raw_statistic(statistic)?, *threshold, *cap),
        }
    }
}

/// A validated experiment config with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: Option<String>,
    pub theta0: f64,
    /// Midpoints of the discretized uniform prior.
    pub prior_points: usize,
    pub horizon: usize,
    pub budget: usize,
    pub tol: f64,
    pub group: GroupKind,
    pub prior: EffectPrior,
    pub rule: Option<RuleSpec>,
    pub g: Vec<GroupElement>,
    pub alpha: Vec<f64>,
    pub n_trials: usize,
    pub bins: usize,
    pub initial: Vec<f64>,
    pub trials: usize,
}

struct Reader {
    map: BTreeMap<String, String>,
}

impl Reader {
    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("key {key}: cannot parse {v:?}: {e}"))),
        }
    }

    fn take_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("key {key}: cannot parse {v:?}: {e}"))),
        }
    }

    fn take_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.map.remove(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("key {key}: cannot parse {s:?}: {e}")))
                })
                .collect(),
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

fn parse_group_elements(kind: GroupKind, text: &str) -> Result<Vec<GroupElement>> {
    text.split(',')
        .map(|item| {
            let item = item.trim();
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("key g: cannot parse {s:?}: {e}")))
            };
            match kind {
                GroupKind::Scale => GroupElement::scale(parse(item)?),
                GroupKind::LocationScale => {
                    let (a, b) = item.split_once(':').ok_or_else(|| {
                        Error::Config(format!(
                            "key g: location-scale elements are written scale:shift, got {item:?}"
                        ))
                    })?;
                    GroupElement::location_scale(parse(a)?, parse(b)?)
                }
            }
            .map_err(config_err)
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses and validates `text` for experiment `kind`.
    pub fn parse(kind: ExperimentKind, text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        let allowed = kind.keys();
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown key {k:?} for {kind} (accepted: {})",
                allowed.join(", ")
            )));
        }
        Self::from_map(kind, map).map_err(config_err)
    }

    /// Defaults only.
    pub fn defaults(kind: ExperimentKind) -> Result<Self> {
        Self::parse(kind, "")
    }

    fn from_map(kind: ExperimentKind, map: BTreeMap<String, String>) -> Result<Self> {
        use ExperimentKind::*;
        let mut r = Reader { map };
        let seed = r.take("seed", 1u64)?;
        let out = r.take_opt::<String>("out")?;
        let theta0 = r.take("theta0", 0.5)?;
        let prior_points = r.take("prior_points", 10_000usize)?;
        let default_horizon = if kind == ExactMarkov { 12 } else { 10 };
        let horizon = r.take("horizon", default_horizon)?;
        let budget = r.take("budget", DEFAULT_BUDGET)?;
        let tol = r.take(
            "tol",
            if kind == ExactExpectation {
                1e-10
            } else {
                1e-9
            },
        )?;
        if !(tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {tol}")));
        }

        let group = match r.take("group", "scale".to_string())?.as_str() {
            "scale" => GroupKind::Scale,
            "location_scale" => GroupKind::LocationScale,
            other => {
                return Err(Error::Config(format!(
                    "group must be scale or location_scale, got {other:?}"
                )))
            }
        };
        let prior = match r.take("prior", "cauchy".to_string())?.as_str() {
            "cauchy" => EffectPrior::Cauchy(r.take("prior_scale", 1.0)?),
            "point" => EffectPrior::PointMass(r.take("prior_delta", 0.0)?),
            other => {
                return Err(Error::Config(format!(
                    "prior must be cauchy or point, got {other:?}"
                )))
            }
        };
        prior.validate()?;

        let default_alpha: &[f64] = match kind {
            ExactMarkov => &[0.01, 0.05, 0.1, 0.2],
            _ => &[0.05],
        };
        let alpha = r.take_list("alpha", default_alpha)?;
        if alpha.is_empty() {
            return Err(Error::Config("alpha list is empty".into()));
        }
        for &a in &alpha {
            SignificanceLevel::new(a)?;
        }

        let default_g: &str = match kind {
            McType1 => "0.25, 1, 4",
            McBfMean => "1, 4",
            _ => "0.5, 1, 2",
        };
        let g = match (r.take_opt::<String>("g")?, group) {
            (Some(text), _) => parse_group_elements(group, &text)?,
            (None, GroupKind::Scale) => parse_group_elements(group, default_g)?,
            (None, GroupKind::LocationScale) => {
                let text: Vec<String> = default_g
                    .split(',')
                    .map(|s| format!("{}:0", s.trim()))
                    .collect();
                parse_group_elements(group, &text.join(","))?
            }
        };

        let n_trials = r.take("n_trials", 100_000usize)?;
        let bins = r.take("bins", DEFAULT_BINS)?;
        if bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        let initial = r.take_list("initial", &[1.0, 2.0])?;
        let trials = r.take("trials", 10_000usize)?;
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }

        let rule = match kind {
            ExactMarkov => None,
            McType1 => {
                let cap = r.take("rule_cap", 1000usize)?;
                let a = SignificanceLevel::new(alpha[0])?;
                Some(RuleSpec::BfThreshold {
                    upper: a.bf_threshold(),
                    lower: None,
                    cap,
                })
            }
            _ => {
                let (upper, lower, cap) = match kind {
                    ExactCalibration | ExactExpectation => (3.0, None, horizon),
                    McStrongCalibration | McMarginalCalibration => (5.0, Some(0.2), 200),
                    _ => (20.0, None, 1000),
                };
                Some(Self::rule_spec(&mut r, upper, lower, cap)?)
            }
        };

        let cfg = Self {
            kind,
            seed,
            out,
            theta0,
            prior_points,
            horizon,
            budget,
            tol,
            group,
            prior,
            rule,
            g,
            alpha,
            n_trials,
            bins,
            initial,
            trials,
        };
        debug_assert!(r.map.is_empty(), "unconsumed keys {:?}", r.map.keys());
        cfg.validate()?;
        Ok(cfg)
    }

    fn rule_spec(r: &mut Reader, upper: f64, lower: Option<f64>, cap: usize) -> Result<RuleSpec> {
        let name = r.take("rule", "bf_threshold".to_string())?;
        let cap = r.take("rule_cap", cap)?;
        Ok(match name.as_str() {
            "fixed_n" => {
                let n = r.take("rule_n", cap)?;
                RuleSpec::FixedN(n)
            }
            "bf_threshold" => {
                let upper = r.take("rule_upper", upper)?;
                let lower = match r.take_opt::<String>("rule_lower")? {
                    None => lower,
                    Some(s) if s == "none" => None,
                    Some(s) => Some(s.parse::<f64>().map_err(|e| {
                        Error::Config(format!("key rule_lower: cannot parse {s:?}: {e}"))
                    })?),
                };
                RuleSpec::BfThreshold { upper, lower, cap }
            }
            "invariant_statistic" => RuleSpec::InvariantStatistic {
                statistic: r.take("rule_stat", "abs_cosine".to_string())?,
                threshold: r.take("rule_threshold", 0.9)?,
                cap,
            },
            "raw_statistic" => RuleSpec::RawStatistic {
                statistic: r.take("rule_stat", "sum_sq".to_string())?,
                threshold: r.take("rule_threshold", 20.0)?,
                cap,
            },
            other => {
                return Err(Error::Config(format!(
                    "rule must be fixed_n, bf_threshold, invariant_statistic or raw_statistic, got {other:?}"
                )))
            }
        })
    }

    fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if self.kind.is_exact() {
            if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
                return Err(Error::Config(format!(
                    "theta0 must lie in (0, 1), got {}",
                    self.theta0
                )));
            }
            if self.prior_points == 0 || self.horizon == 0 || self.budget == 0 {
                return Err(Error::Config(
                    "prior_points, horizon and budget must be positive".into(),
                ));
            }
        }
        if let Some(rule) = &self.rule {
            let built = rule.build(self.group)?;
            if self.kind.is_exact() && built.cap() > self.horizon {
                return Err(Error::Config(format!(
                    "rule cap {} exceeds horizon {}",
                    built.cap(),
                    self.horizon
                )));
            }
            if !self.kind.is_exact() {
                built.validate_for(self.group.initial_size())?;
            }
        }
        if matches!(self.kind, McStrongCalibration | McType1 | McBfMean) && self.g.is_empty() {
            return Err(Error::Config("g list is empty".into()));
        }
        if self.kind == McMarginalCalibration {
            if self.group != GroupKind::Scale {
                return Err(Error::NotImplemented(
                    "marginal calibration is available for the scale group only".into(),
                ));
            }
            if self.initial.is_empty() || self.initial.iter().any(|&x| x == 0.0 || !x.is_finite()) {
                return Err(Error::Config(
                    "initial values must be finite and non-zero".into(),
                ));
            }
        }
        if !self.kind.is_exact() && self.kind != InvarianceCheck && self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn pair(&self) -> Result<InvariantModelPair> {
        InvariantModelPair::new(self.group, self.prior)
    }

    pub fn stopping_rule(&self) -> Result<StoppingRule> {
        self.rule
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} has no configurable rule", self.kind)))?
            .build(self.group)
    }

    pub fn significance_levels(&self) -> Vec<SignificanceLevel> {
        self.alpha
            .iter()
            .map(|&a| SignificanceLevel::new(a).expect("validated"))
            .collect()
    }
}
