//! Test-only oracles and generators, independent of the library's numerics.
#![allow(dead_code)]

use optstop::exact::{Component, FiniteModel, Source};
use optstop::{GroupKind, StoppingRule};
use rand::Rng;

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    assert!(delta.is_finite(), "non-finite integrand on [{a}, {b}]");
    if depth == 0 || delta.abs() <= 15.0 * tol.max(64.0 * f64::EPSILON * (left.abs() + right.abs()))
    {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson to relative tolerance, split into `panels` pieces so
/// narrow peaks are not missed.
pub fn simpson_rel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let coarse: f64 = (0..panels)
        .map(|i| {
            let (l, r) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            (r - l) / 6.0 * (f(l) + 4.0 * f(0.5 * (l + r)) + f(r))
        })
        .sum();
    let tol = rel * coarse.abs() / panels as f64;
    (0..panels)
        .map(|i| simpson(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol))
        .sum()
}

/// Sufficient quantities after integrating out location (when present).
/// The likelihood in `u = 1/σ` is
/// `C · u^p · exp(−(s·u² − 2δ·t·u + δ²·e)/2)`, integrated against `du/u`.
struct Reduced {
    p: f64,
    s: f64,
    t: f64,
    e: f64,
    log_c: f64,
}

/// `+1/2` on odd (1-based) positions and `−1/2` on even ones.
fn two_sample_design(i: usize) -> f64 {
    if i % 2 == 0 {
        0.5
    } else {
        -0.5
    }
}

fn reduce(kind: GroupKind, x: &[f64]) -> Reduced {
    let n = x.len() as f64;
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    match kind {
        GroupKind::Scale => Reduced {
            p: n,
            s: x.iter().map(|v| v * v).sum(),
            t: x.iter().sum(),
            e: n,
            log_c: -n * half_log_2pi,
        },
        GroupKind::LocationScale => {
            let xbar = x.iter().sum::<f64>() / n;
            let d: Vec<f64> = (0..x.len()).map(two_sample_design).collect();
            let dbar = d.iter().sum::<f64>() / n;
            let y: Vec<f64> = x.iter().map(|v| v - xbar).collect();
            let e: Vec<f64> = d.iter().map(|v| v - dbar).collect();
            Reduced {
                p: n - 1.0,
                s: y.iter().map(|v| v * v).sum(),
                t: y.iter().zip(&e).map(|(a, b)| a * b).sum(),
                e: e.iter().map(|v| v * v).sum(),
                log_c: -(n - 1.0) * half_log_2pi - 0.5 * n.ln(),
            }
        }
    }
}

/// `log ∫ u^p exp(−(s u² − 2δ t u + δ² e)/2) du/u` by quadrature in `ln u`.
fn log_inner(r: &Reduced, delta: f64, rel: f64) -> f64 {
    let b = delta * r.t;
    let root = (b * b + 4.0 * r.p * r.s).sqrt();
    let u_star = if b >= 0.0 {
        (b + root) / (2.0 * r.s)
    } else {
        2.0 * r.p / (root - b)
    };
    let t_star = u_star.ln();
    let h_star =
        r.p * t_star - 0.5 * (r.s * u_star * u_star - 2.0 * b * u_star + delta * delta * r.e);
    // h(t) − h(t*) factored so the large quadratic terms cancel exactly.
    let f = |t: f64| {
        let u = t.exp();
        (r.p * (t - t_star) - 0.5 * (u - u_star) * (r.s * (u + u_star) - 2.0 * b)).exp()
    };
    let sd = 1.0 / (r.s * u_star * u_star + r.p).sqrt();
    let reach = |dir: f64| {
        let mut step = sd;
        while f(t_star + dir * step) > 1e-20 {
            step *= 2.0;
        }
        t_star + dir * step
    };
    let (lo, hi) = (reach(-1.0), reach(1.0));
    h_star + simpson_rel(&f, lo, hi, rel, 16).ln()
}

/// `log p̄0(x)` under the right Haar prior, by quadrature.
pub fn oracle_log_null(kind: GroupKind, x: &[f64], rel: f64) -> f64 {
    let r = reduce(kind, x);
    r.log_c + log_inner(&r, 0.0, rel)
}

/// `log p̄1(x)` with a point-mass effect `δ0`.
pub fn oracle_log_alt_point(kind: GroupKind, x: &[f64], delta0: f64, rel: f64) -> f64 {
    let r = reduce(kind, x);
    r.log_c + log_inner(&r, delta0, rel)
}

/// `log p̄1(x)` with a Cauchy(0, `scale`) effect, nested quadrature over
/// `δ = scale·tan θ`.
pub fn oracle_log_alt_cauchy(kind: GroupKind, x: &[f64], scale: f64, rel: f64) -> f64 {
    let r = reduce(kind, x);
    let shift = log_inner(&r, 0.0, rel);
    let f = |theta: f64| {
        let delta = scale * theta.tan();
        (log_inner(&r, delta, rel) - shift).exp() / std::f64::consts::PI
    };
    let edge = std::f64::consts::FRAC_PI_2 - 1e-9;
    r.log_c + shift + simpson_rel(&f, -edge, edge, rel, 32).ln()
}

/// `n` standard normal draws scaled and shifted, never exactly zero.
pub fn random_sample<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let scale = (rng.random_range(-2.0f64..2.0)).exp();
    let shift = rng.random_range(-1.0..1.0);
    (0..n)
        .map(|_| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            shift + scale * z
        })
        .collect()
}

fn random_pmf<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_source<R: Rng>(rng: &mut R, k: usize) -> Source {
    match rng.random_range(0..3) {
        0 => Source::Iid(random_pmf(rng, k)),
        1 => Source::Markov {
            initial: random_pmf(rng, k),
            transition: (0..k).map(|_| random_pmf(rng, k)).collect(),
        },
        _ => Source::Polya {
            concentration: (0..k).map(|_| rng.random_range(0.2..3.0)).collect(),
        },
    }
}

fn random_mixture<R: Rng>(rng: &mut R, k: usize) -> Vec<Component> {
    let c = rng.random_range(1..=3);
    let w = random_pmf(rng, c);
    w.into_iter()
        .map(|weight| Component {
            weight,
            source: random_source(rng, k),
        })
        .collect()
}

/// A random finite model (alphabet 2 or 3, horizon up to 8) and a random
/// rule whose cap fits the horizon.
pub fn random_finite_case<R: Rng>(rng: &mut R) -> (FiniteModel, StoppingRule) {
    let k = rng.random_range(2..=3);
    let horizon = if k == 2 {
        rng.random_range(1..=8)
    } else {
        rng.random_range(1..=5)
    };
    let model =
        FiniteModel::new(k, horizon, random_mixture(rng, k), random_mixture(rng, k)).unwrap();
    let cap = rng.random_range(1..=horizon);
    let rule = match rng.random_range(0..3) {
        0 => StoppingRule::fixed_n(cap).unwrap(),
        1 => StoppingRule::bf_threshold(rng.random_range(1.1..5.0), None, cap).unwrap(),
        _ => StoppingRule::bf_threshold(
            rng.random_range(1.1..5.0),
            Some(rng.random_range(0.2..0.9)),
            cap,
        )
        .unwrap(),
    };
    (model, rule)
}
