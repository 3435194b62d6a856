//! Exhaustive enumeration of finite sample spaces.
//!
//! A [`FiniteModel`] gives each hypothesis a finite mixture of sequential
//! sources over a finite alphabet. [`build_table`] walks the tree of
//! sequences depth first and records the stopped sequences of a rule with
//! their exact marginal masses, which the `verify_*` functions then check
//! against the calibration identity, the Markov bound and `E₀[β_τ] = 1`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::evidence::{BfTrajectory, Hypothesis, SignificanceLevel};
use crate::stopping::{Decision, StoppingRule};

/// Default cap on the number of stopped sequences in a table.
pub const DEFAULT_BUDGET: usize = 1 << 24;

const NORMALIZATION_TOL: f64 = 1e-12;

/// A sequential source of symbols, i.e. the conditional mass functions
/// `P_θ(x_{n+1} | x^n)` of one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Independent draws from a fixed mass function.
    Iid(Vec<f64>),
    /// First symbol from `initial`, then row `transition[previous]`.
    Markov {
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    /// Pólya urn: `P(a | x^n) = (c_a + #a in x^n) / (Σc + n)`. This is the
    /// exact Dirichlet mixture of i.i.d. sources.
    Polya { concentration: Vec<f64> },
}

impl Source {
    fn validate(&self, k: usize) -> Result<()> {
        let check_pmf = |p: &[f64], what: &str| -> Result<()> {
            if p.len() != k {
                return Err(invalid(format!(
                    "{what} has {} entries, alphabet has {k}",
                    p.len()
                )));
            }
            if p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(invalid(format!(
                    "{what} must be strictly positive (full support)"
                )));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(invalid(format!("{what} sums to {s}, not 1")));
            }
            Ok(())
        };
        match self {
            Source::Iid(p) => check_pmf(p, "i.i.d. mass function"),
            Source::Markov {
                initial,
                transition,
            } => {
                check_pmf(initial, "initial mass function")?;
                if transition.len() != k {
                    return Err(invalid("transition matrix must have one row per symbol"));
                }
                for row in transition {
                    check_pmf(row, "transition row")?;
                }
                Ok(())
            }
            Source::Polya { concentration } => {
                if concentration.len() != k {
                    return Err(invalid("concentration must have one entry per symbol"));
                }
                if concentration.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
                    return Err(invalid("concentration parameters must be positive"));
                }
                Ok(())
            }
        }
    }

    /// `P(a | prefix)`.
    pub fn conditional(&self, prefix: &[u8], a: u8) -> f64 {
        let a = a as usize;
        match self {
            Source::Iid(p) => p[a],
            Source::Markov {
                initial,
                transition,
            } => match prefix.last() {
                None => initial[a],
                Some(&prev) => transition[prev as usize][a],
            },
            Source::Polya { concentration } => {
                let count = prefix.iter().filter(|&&s| s as usize == a).count() as f64;
                let total: f64 = concentration.iter().sum();
                (concentration[a] + count) / (total + prefix.len() as f64)
            }
        }
    }
}

/// One mixture component: prior weight and source.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub source: Source,
}

/// Two hypotheses, each a prior-weighted mixture of sources on the alphabet
/// `{0, …, K−1}`, observed up to a horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    alphabet: usize,
    horizon: usize,
    hypotheses: [Vec<Component>; 2],
}

impl FiniteModel {
    pub fn new(
        alphabet: usize,
        horizon: usize,
        null: Vec<Component>,
        alt: Vec<Component>,
    ) -> Result<Self> {
        if !(2..=256).contains(&alphabet) {
            return Err(invalid(format!(
                "alphabet size must lie in 2..=256, got {alphabet}"
            )));
        }
        if horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        for (k, comps) in [&null, &alt].into_iter().enumerate() {
            if comps.is_empty() {
                return Err(invalid(format!("hypothesis {k} has no components")));
            }
            if comps
                .iter()
                .any(|c| !(c.weight > 0.0 && c.weight.is_finite()))
            {
                return Err(invalid(format!(
                    "hypothesis {k} has a non-positive prior weight"
                )));
            }
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "prior weights of hypothesis {k} sum to {total}, not 1"
                )));
            }
            for c in comps {
                c.source.validate(alphabet)?;
            }
        }
        Ok(Self {
            alphabet,
            horizon,
            hypotheses: [null, alt],
        })
    }

    /// Point Bernoulli(`theta0`) against Bernoulli(θ) with θ uniform,
    /// discretized to `points` midpoints `(i − 1/2)/points`.
    pub fn bernoulli_point_vs_uniform(theta0: f64, points: usize, horizon: usize) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < 1.0) {
            return Err(invalid(format!("theta0 must lie in (0, 1), got {theta0}")));
        }
        if points == 0 {
            return Err(invalid("need at least one prior point"));
        }
        let w = 1.0 / points as f64;
        let alt = (0..points)
            .map(|i| {
                let t = (i as f64 + 0.5) * w;
                Component {
                    weight: w,
                    source: Source::Iid(vec![1.0 - t, t]),
                }
            })
            .collect();
        let null = vec![Component {
            weight: 1.0,
            source: Source::Iid(vec![1.0 - theta0, theta0]),
        }];
        Self::new(2, horizon, null, alt)
    }

    /// Point Bernoulli(`theta0`) against the exact Beta(`a`, `b`) mixture.
    pub fn bernoulli_point_vs_beta(theta0: f64, a: f64, b: f64, horizon: usize) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < 1.0) {
            return Err(invalid(format!("theta0 must lie in (0, 1), got {theta0}")));
        }
        let null = vec![Component {
            weight: 1.0,
            source: Source::Iid(vec![1.0 - theta0, theta0]),
        }];
        let alt = vec![Component {
            weight: 1.0,
            source: Source::Polya {
                concentration: vec![b, a],
            },
        }];
        Self::new(2, horizon, null, alt)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn components(&self, k: Hypothesis) -> &[Component] {
        &self.hypotheses[k.index()]
    }

    fn initial_masses(&self) -> [Vec<f64>; 2] {
        [0, 1].map(|k| self.hypotheses[k].iter().map(|c| c.weight).collect())
    }

    fn advance(&self, masses: &[Vec<f64>; 2], prefix: &[u8], a: u8, out: &mut [Vec<f64>; 2]) {
        for k in 0..2 {
            out[k].clear();
            out[k].extend(
                self.hypotheses[k]
                    .iter()
                    .zip(&masses[k])
                    .map(|(c, &w)| w * c.source.conditional(prefix, a)),
            );
        }
    }

    fn check_sequence(&self, x: &[u8]) -> Result<()> {
        if x.len() > self.horizon {
            return Err(invalid(format!(
                "sequence length {} exceeds horizon {}",
                x.len(),
                self.horizon
            )));
        }
        if let Some(&s) = x.iter().find(|&&s| s as usize >= self.alphabet) {
            return Err(invalid(format!(
                "symbol {s} outside alphabet of size {}",
                self.alphabet
            )));
        }
        Ok(())
    }

    /// Per-prefix log Bayes factors `log β_1, …, log β_n` of `x`, computed
    /// with the same arithmetic as [`build_table`].
    pub fn trajectory(&self, x: &[u8]) -> Result<BfTrajectory> {
        self.check_sequence(x)?;
        let mut masses = self.initial_masses();
        let mut next = [Vec::new(), Vec::new()];
        let mut log_beta = Vec::with_capacity(x.len());
        for n in 0..x.len() {
            self.advance(&masses, &x[..n], x[n], &mut next);
            std::mem::swap(&mut masses, &mut next);
            log_beta.push(log_ratio(&masses));
        }
        BfTrajectory::new(0, log_beta)
    }

    /// Draws a sequence of length `n` from the Bayes marginal of `k`.
    pub fn sample<R: Rng + ?Sized>(&self, k: Hypothesis, n: usize, rng: &mut R) -> Result<Vec<u8>> {
        if n > self.horizon {
            return Err(invalid(format!(
                "length {n} exceeds horizon {}",
                self.horizon
            )));
        }
        let comps = &self.hypotheses[k.index()];
        let mut u: f64 = rng.random::<f64>();
        let mut source = &comps[comps.len() - 1].source;
        for c in comps {
            if u < c.weight {
                source = &c.source;
                break;
            }
            u -= c.weight;
        }
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let mut u: f64 = rng.random::<f64>();
            let mut sym = (self.alphabet - 1) as u8;
            for a in 0..self.alphabet as u8 {
                let p = source.conditional(&x, a);
                if u < p {
                    sym = a;
                    break;
                }
                u -= p;
            }
            x.push(sym);
        }
        Ok(x)
    }
}

/// Compensated (Neumaier) sum, so that large mixtures of small weights add
/// up without drift.
fn mixture_sum(v: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn log_ratio(masses: &[Vec<f64>; 2]) -> f64 {
    mixture_sum(&masses[1]).ln() - mixture_sum(&masses[0]).ln()
}

/// `P̄_k(x) = Σ_θ w_θ Π_n P_θ(x_n | x^{n−1})`.
pub fn marginal_mass(model: &FiniteModel, k: Hypothesis, x: &[u8]) -> Result<f64> {
    model.check_sequence(x)?;
    let mut masses = model.initial_masses();
    let mut next = [Vec::new(), Vec::new()];
    for n in 0..x.len() {
        model.advance(&masses, &x[..n], x[n], &mut next);
        std::mem::swap(&mut masses, &mut next);
    }
    Ok(mixture_sum(&masses[k.index()]))
}

/// One stopped sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEntry {
    pub sequence: Vec<u8>,
    pub mass0: f64,
    pub mass1: f64,
    /// `log β_τ`.
    pub log_beta: f64,
    /// `max_{n ≤ τ} log β_n` along the path.
    pub max_log_beta: f64,
}

impl TableEntry {
    pub fn stop_index(&self) -> usize {
        self.sequence.len()
    }
}

/// All stopped sequences of a rule, in depth-first (lexicographic) order.
#[derive(Debug, Clone)]
pub struct ExactTable {
    entries: Vec<TableEntry>,
    rule: StoppingRule,
}

impl ExactTable {
    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn rule(&self) -> &StoppingRule {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ mass_k` over entries.
    pub fn total_mass(&self, k: Hypothesis) -> f64 {
        self.entries
            .iter()
            .map(|e| match k {
                Hypothesis::Null => e.mass0,
                Hypothesis::Alt => e.mass1,
            })
            .sum()
    }

    pub fn get(&self, sequence: &[u8]) -> Option<&TableEntry> {
        self.entries
            .binary_search_by(|e| e.sequence.as_slice().cmp(sequence))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Writes `sequence,mass0,mass1,log_beta,stop_index` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sequence,mass0,mass1,log_beta,stop_index")?;
        for e in &self.entries {
            let seq: Vec<String> = e.sequence.iter().map(|s| s.to_string()).collect();
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{}",
                seq.join("-"),
                e.mass0,
                e.mass1,
                e.log_beta,
                e.stop_index()
            )?;
        }
        Ok(())
    }
}

/// Enumerates every stopped sequence of `rule` on `model`.
///
/// The rule's cap must not exceed the horizon, so that every path stops.
/// More than `budget` stopped sequences is a resource-limit error.
pub fn build_table(model: &FiniteModel, rule: &StoppingRule, budget: usize) -> Result<ExactTable> {
    if rule.cap() > model.horizon {
        return Err(invalid(format!(
            "rule cap {} exceeds the model horizon {}",
            rule.cap(),
            model.horizon
        )));
    }
    let t = rule.cap();
    let k = model.alphabet;
    // levels[d] holds component masses after d symbols.
    let mut levels: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; t + 1];
    levels[0] = model.initial_masses();
    let mut path: Vec<u8> = Vec::with_capacity(t);
    let mut data: Vec<f64> = Vec::with_capacity(t);
    let mut log_betas: Vec<f64> = Vec::with_capacity(t);
    let mut maxima: Vec<f64> = Vec::with_capacity(t);
    let mut entries = Vec::new();
    // next[d] is the next symbol to try at depth d.
    let mut next = vec![0usize; t + 1];

    loop {
        let d = path.len();
        if next[d] == k {
            if d == 0 {
                break;
            }
            path.pop();
            data.pop();
            log_betas.pop();
            maxima.pop();
            continue;
        }
        let a = next[d] as u8;
        next[d] += 1;
        let (lo, hi) = levels.split_at_mut(d + 1);
        model.advance(&lo[d], &path, a, &mut hi[0]);
        path.push(a);
        data.push(a as f64);
        let lb = log_ratio(&hi[0]);
        log_betas.push(lb);
        maxima.push(maxima.last().map_or(lb, |&m: &f64| m.max(lb)));

        if rule.decide(&data, &log_betas) == Decision::Stop {
            if entries.len() == budget {
                return Err(Error::ResourceLimit { budget });
            }
            entries.push(TableEntry {
                sequence: path.clone(),
                mass0: mixture_sum(&hi[0][0]),
                mass1: mixture_sum(&hi[0][1]),
                log_beta: lb,
                max_log_beta: *maxima.last().expect("nonempty path"),
            });
            path.pop();
            data.pop();
            log_betas.pop();
            maxima.pop();
        } else {
            next[d + 1] = 0;
        }
    }
    Ok(ExactTable {
        entries,
        rule: rule.clone(),
    })
}

/// One group of stopped sequences sharing a Bayes factor value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationGroup {
    /// `log c` of the first entry in the group.
    pub log_beta: f64,
    pub entries: usize,
    pub mass0: f64,
    pub mass1: f64,
    /// `|mass1 / mass0 − c| / c`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub tolerance: f64,
    pub groups: Vec<CalibrationGroup>,
    pub max_residual: f64,
    pub passed: bool,
}

/// Groups entries by `log β` rounded to 12 significant digits and checks
/// `P̄1(β_τ = c) / P̄0(β_τ = c) = c` within relative tolerance `tol`.
pub fn verify_calibration(table: &ExactTable, tol: f64) -> CalibrationReport {
    let mut groups: BTreeMap<String, CalibrationGroup> = BTreeMap::new();
    for e in &table.entries {
        let key = format!("{:.11e}", e.log_beta);
        let g = groups.entry(key).or_insert_with(|| CalibrationGroup {
            log_beta: e.log_beta,
            entries: 0,
            mass0: 0.0,
            mass1: 0.0,
            residual: 0.0,
        });
        g.entries += 1;
        g.mass0 += e.mass0;
        g.mass1 += e.mass1;
    }
    let mut groups: Vec<CalibrationGroup> = groups.into_values().collect();
    groups.sort_by(|a, b| a.log_beta.total_cmp(&b.log_beta));
    let mut max_residual: f64 = 0.0;
    for g in &mut groups {
        let c = g.log_beta.exp();
        g.residual = ((g.mass1 / g.mass0 - c) / c).abs();
        max_residual = max_residual.max(g.residual);
    }
    CalibrationReport {
        tolerance: tol,
        groups,
        max_residual,
        passed: max_residual <= tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovRow {
    pub alpha: f64,
    /// `P̄0(∃n ≤ τ: β_n ≥ 1/α)`.
    pub probability: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovReport {
    pub rows: Vec<MarkovRow>,
    pub passed: bool,
}

/// Exact `P̄0(∃n ≤ τ: β_n ≥ 1/α)` for each α, checked against `α`.
///
/// On a table built with "stop when `β ≥ 1/α`" this is the probability that
/// the stopped Bayes factor reaches the threshold; on a fixed-horizon table
/// it is the probability that the path ever does.
pub fn verify_markov_bound(table: &ExactTable, alphas: &[SignificanceLevel]) -> MarkovReport {
    let rows: Vec<MarkovRow> = alphas
        .iter()
        .map(|a| {
            let log_t = a.bf_threshold().ln();
            let probability: f64 = table
                .entries
                .iter()
                .filter(|e| e.max_log_beta >= log_t)
                .map(|e| e.mass0)
                .sum();
            MarkovRow {
                alpha: a.alpha(),
                probability,
                holds: probability <= a.alpha(),
            }
        })
        .collect();
    let passed = rows.iter().all(|r| r.holds);
    MarkovReport { rows, passed }
}

/// `E_{P̄0}[β_τ] = Σ mass0 · β`.
pub fn verify_expected_stopped_bf(table: &ExactTable) -> f64 {
    table
        .entries
        .iter()
        .map(|e| e.mass0 * e.log_beta.exp())
        .sum()
}
