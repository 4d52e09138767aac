//! Brute-force checks that do not share code paths with the solver:
//! exhaustive lattice search over small simplices, central finite
//! differences, concavity and convexity probes, and random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::functionals::{cmi_weights, d_q_weights};
use crate::model::{ModelTable, OutcomeSpace, PredictiveTable, Prior};

/// Largest grid the lattice search accepts.
pub const MAX_ORACLE_THETAS: usize = 4;

/// Default lattice spacing for three parameters (about 20k points).
pub const DEFAULT_STEP: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub prior: Prior,
    pub value: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum Functional<'a> {
    /// `I(theta; y | x)`.
    Lip,
    /// `D_q` for a fixed predictive.
    Dq(&'a PredictiveTable),
}

impl Functional<'_> {
    pub fn eval(&self, m: &ModelTable, weights: &[f64]) -> f64 {
        match self {
            Functional::Lip => cmi_weights(m, weights),
            Functional::Dq(q) => d_q_weights(m, weights, q).value(),
        }
    }
}

fn lattice_size(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid(format!("lattice step {step} must lie in (0, 1]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("lattice step {step} must divide 1")));
    }
    Ok(n as usize)
}

/// Every composition of `n` into `parts` nonnegative integers whose first
/// entry is `first`.
fn compositions(first: usize, n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, left: usize, parts: usize, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            rec(prefix, left - v, parts - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    let mut prefix = vec![first];
    if parts == 1 {
        if first == n {
            out.push(prefix);
        }
        return out;
    }
    rec(&mut prefix, n - first, parts - 1, &mut out);
    out
}

/// Best lattice point of `score` (larger is better); ties go to the first
/// point in lexicographic order so the result is independent of scheduling.
fn lattice_search<F>(t: usize, step: f64, score: F) -> Result<GridSearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if t > MAX_ORACLE_THETAS {
        return Err(Error::OracleTooLarge {
            thetas: t,
            limit: MAX_ORACLE_THETAS,
        });
    }
    if t == 0 {
        return Err(invalid("empty parameter grid"));
    }
    let n = lattice_size(step)?;
    let best = (0..=n)
        .into_par_iter()
        .map(|first| {
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut count = 0usize;
            for c in compositions(first, n, t) {
                count += 1;
                let w: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
                let s = score(&w);
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, w));
                }
            }
            (best, count)
        })
        .collect::<Vec<_>>();
    let points = best.iter().map(|(_, c)| c).sum();
    let (value, weights) = best
        .into_iter()
        .filter_map(|(b, _)| b)
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("lattice is nonempty");
    Ok(GridSearchResult {
        prior: Prior::normalized(weights)?,
        value,
        points,
    })
}

/// Maximizes `I(theta; y | x)` over the lattice `{w : w_t in step * Z}`.
pub fn grid_search_lip(m: &ModelTable, step: f64) -> Result<GridSearchResult> {
    lattice_search(m.t(), step, |w| cmi_weights(m, w))
}

/// Minimizes `D_q` over the same lattice.
pub fn grid_search_dq(m: &ModelTable, q: &PredictiveTable, step: f64) -> Result<GridSearchResult> {
    q.check_shape(m)?;
    let mut r = lattice_search(m.t(), step, |w| -d_q_weights(m, w, q).value())?;
    r.value = -r.value;
    Ok(r)
}

/// Central differences of a functional along `e_t - e_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifference {
    pub reference: usize,
    /// `F'(e_t - e_ref)`; zero at the reference index.
    pub differences: Vec<f64>,
}

impl FiniteDifference {
    /// `max_t |fd_t - (g_t - g_ref)| / max_t |g_t - g_ref|`.
    pub fn relative_error(&self, gradient: &[f64]) -> f64 {
        let base = gradient[self.reference];
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for (&d, &g) in self.differences.iter().zip(gradient) {
            let analytic = g - base;
            err = err.max((d - analytic).abs());
            scale = scale.max(analytic.abs());
        }
        if scale == 0.0 {
            err
        } else {
            err / scale
        }
    }
}

/// Finite-difference directional derivatives at an interior prior, in the
/// simplex directions `e_t - e_ref` with `ref` the heaviest atom.
pub fn finite_diff_gradient(
    functional: Functional<'_>,
    m: &ModelTable,
    prior: &Prior,
    h: f64,
) -> Result<FiniteDifference> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(invalid(format!("step {h} outside [1e-8, 1e-4]")));
    }
    if prior.len() != m.t() {
        return Err(invalid("prior length differs from the parameter grid"));
    }
    let w = prior.weights();
    if let Some(t) = w.iter().position(|&v| v < 2.0 * h) {
        return Err(invalid(format!(
            "prior weight {} at index {t} is too close to the boundary",
            w[t]
        )));
    }
    let reference = (0..w.len())
        .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        .unwrap_or(0);
    let differences = (0..w.len())
        .map(|t| {
            if t == reference {
                return 0.0;
            }
            let mut plus = w.to_vec();
            plus[t] += h;
            plus[reference] -= h;
            let mut minus = w.to_vec();
            minus[t] -= h;
            minus[reference] += h;
            (functional.eval(m, &plus) - functional.eval(m, &minus)) / (2.0 * h)
        })
        .collect();
    Ok(FiniteDifference {
        reference,
        differences,
    })
}

/// `lambda F(a) + (1 - lambda) F(b) - F(lambda a + (1 - lambda) b)`, positive
/// when `F` fails to be concave along the segment.
pub fn concavity_violation(m: &ModelTable, a: &Prior, b: &Prior, lambda: f64) -> Result<f64> {
    let mid = Prior::mix(a, b, lambda)?;
    let f = |p: &Prior| cmi_weights(m, p.weights());
    Ok(lambda * f(a) + (1.0 - lambda) * f(b) - f(&mid))
}

/// `D_q(lambda a + (1 - lambda) b) - lambda D_q(a) - (1 - lambda) D_q(b)`,
/// positive when `D_q` fails to be convex along the segment.
pub fn convexity_violation(
    m: &ModelTable,
    q: &PredictiveTable,
    a: &Prior,
    b: &Prior,
    lambda: f64,
) -> Result<f64> {
    q.check_shape(m)?;
    let mid = Prior::mix(a, b, lambda)?;
    let f = |p: &Prior| d_q_weights(m, p.weights(), q).value();
    Ok(f(&mid) - lambda * f(a) - (1.0 - lambda) * f(b))
}

/// Largest observed `|F(a) - F(b)| / |a - b|_1` over random prior pairs.
pub fn empirical_lipschitz(
    functional: Functional<'_>,
    m: &ModelTable,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = seeded_rng(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let a = random_prior(&mut rng, m.t());
        let b = random_prior(&mut rng, m.t());
        let dist: f64 = a
            .weights()
            .iter()
            .zip(b.weights())
            .map(|(x, y)| (x - y).abs())
            .sum();
        if dist > 0.0 {
            let df = functional.eval(m, a.weights()) - functional.eval(m, b.weights());
            best = best.max(df.abs() / dist);
        }
    }
    best
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard exponential draw; normalized vectors of these are uniform on the simplex.
fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

fn simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| exponential(rng)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 && v.iter().all(|&x| x > 0.0) {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Full-support prior drawn uniformly from the simplex.
pub fn random_prior<R: Rng + ?Sized>(rng: &mut R, t: usize) -> Prior {
    Prior::normalized(simplex_point(rng, t)).expect("positive weights")
}

/// Model with every cell strictly positive.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, t: usize, k: usize, l: usize) -> ModelTable {
    let space = OutcomeSpace::numbered(k, l).expect("positive sizes");
    let labels = (0..t).map(|i| format!("t{i}")).collect();
    let probs = (0..t).flat_map(|_| simplex_point(rng, k * l)).collect();
    ModelTable::from_flat(space, labels, probs).expect("well-formed table")
}

/// Predictive with every entry strictly positive.
pub fn random_predictive<R: Rng + ?Sized>(rng: &mut R, k: usize, l: usize) -> PredictiveTable {
    let q = (0..k).flat_map(|_| simplex_point(rng, l)).collect();
    PredictiveTable::new(k, l, q).expect("normalized rows")
}
