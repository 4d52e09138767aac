//! KL prediction risk, the `D_q` functional and the conditional mutual
//! information `I(theta; y | x)`, all in nats.
//!
//! Conventions: `0 log 0 = 0`, `0 log(c / 0) = 0`, and a positive mass on a
//! cell where the predictive is zero makes the risk `+inf`. Conditionals
//! `p(y | x, theta)` are never formed where `p(x | theta) = 0`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use crate::error::{Error, Result};
use crate::model::{ModelTable, PredictiveTable, Prior};
use crate::simplex::EntropyObjective;

/// A value in `[0, +inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const ZERO: Self = Self(0.0);
    pub const INFINITY: Self = Self(f64::INFINITY);

    /// Rounding residue below zero is clamped; anything else negative is a bug.
    pub fn new(value: f64) -> Self {
        debug_assert!(!value.is_nan(), "NaN is not an extended real");
        debug_assert!(value > -1e-9, "negative divergence {value}");
        Self(value.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }
}

impl Eq for ExtendedReal {}

impl Ord for ExtendedReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for ExtendedReal {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Per-parameter risks `R(theta_t, q)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskProfile {
    pub risks: Vec<ExtendedReal>,
}

impl RiskProfile {
    pub fn len(&self) -> usize {
        self.risks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risks.is_empty()
    }

    /// Worst-case risk over the grid.
    pub fn sup(&self) -> ExtendedReal {
        self.risks
            .iter()
            .copied()
            .max()
            .unwrap_or(ExtendedReal::ZERO)
    }
}

#[inline]
pub(crate) fn xlogx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

/// `R(theta_t, q) = sum p(x,y|theta_t) log(p(y|x,theta_t) / q(y;x))`.
pub fn kl_risk(m: &ModelTable, t: usize, q: &PredictiveTable) -> ExtendedReal {
    debug_assert!(q.k() == m.k() && q.l() == m.l());
    let l = m.l();
    let px = m.x_marginal_row(t);
    let mut total = 0.0;
    for (idx, &p) in m.joint_row(t).iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let qv = q.flat()[idx];
        if qv == 0.0 {
            return ExtendedReal::INFINITY;
        }
        total += p * (p / (px[idx / l] * qv)).ln();
    }
    ExtendedReal::new(total)
}

pub fn risk_profile(m: &ModelTable, q: &PredictiveTable) -> RiskProfile {
    RiskProfile {
        risks: (0..m.t()).map(|t| kl_risk(m, t, q)).collect(),
    }
}

/// Prior-averaged risk; zero-weight parameters contribute nothing even when
/// their risk is infinite.
pub fn bayes_risk(m: &ModelTable, prior: &Prior, q: &PredictiveTable) -> ExtendedReal {
    let mut total = 0.0;
    for (t, &w) in prior.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let r = kl_risk(m, t, q);
        if r.is_infinite() {
            return ExtendedReal::INFINITY;
        }
        total += w * r.value();
    }
    ExtendedReal::new(total)
}

/// `D_q(pi) = sum_x p_pi(x) KL(p_pi(. | x) || q(. ; x))`.
pub fn d_q(m: &ModelTable, prior: &Prior, q: &PredictiveTable) -> ExtendedReal {
    d_q_weights(m, prior.weights(), q)
}

pub(crate) fn d_q_weights(m: &ModelTable, weights: &[f64], q: &PredictiveTable) -> ExtendedReal {
    let l = m.l();
    let joint = m.mixture_joint(weights);
    let xm = m.mixture_x(weights);
    let mut total = 0.0;
    for (idx, &p) in joint.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let qv = q.flat()[idx];
        if qv == 0.0 {
            return ExtendedReal::INFINITY;
        }
        total += p * (p / (qv * xm[idx / l])).ln();
    }
    ExtendedReal::new(total)
}

/// The three mutual informations related by the chain rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRule {
    /// `I(theta; y | x)`
    pub i_cond: f64,
    /// `I(theta; (x, y))`
    pub i_xy: f64,
    /// `I(theta; x)`
    pub i_x: f64,
}

struct EntropyTerms {
    joint_avg: f64,
    joint_mix: f64,
    x_avg: f64,
    x_mix: f64,
}

fn entropy_terms(m: &ModelTable, weights: &[f64]) -> EntropyTerms {
    let mut joint_avg = 0.0;
    let mut x_avg = 0.0;
    for (t, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        joint_avg += w * m.joint_row(t).iter().map(|&p| xlogx(p)).sum::<f64>();
        x_avg += w * m.x_marginal_row(t).iter().map(|&p| xlogx(p)).sum::<f64>();
    }
    EntropyTerms {
        joint_avg,
        joint_mix: m.mixture_joint(weights).into_iter().map(xlogx).sum(),
        x_avg,
        x_mix: m.mixture_x(weights).into_iter().map(xlogx).sum(),
    }
}

/// `I(theta; y | x)` under `pi`, from the four-term entropy expansion.
pub fn conditional_mutual_information(m: &ModelTable, prior: &Prior) -> f64 {
    cmi_weights(m, prior.weights())
}

pub(crate) fn cmi_weights(m: &ModelTable, weights: &[f64]) -> f64 {
    let e = entropy_terms(m, weights);
    (e.joint_avg - e.joint_mix - e.x_avg + e.x_mix).max(0.0)
}

pub fn chain_rule_check(m: &ModelTable, prior: &Prior) -> ChainRule {
    let e = entropy_terms(m, prior.weights());
    ChainRule {
        i_cond: e.joint_avg - e.joint_mix - e.x_avg + e.x_mix,
        i_xy: e.joint_avg - e.joint_mix,
        i_x: e.x_avg - e.x_mix,
    }
}

/// Per-`(t, i)` negative conditional entropies
/// `sum_j p(i,j|t) log p(j|i,t)`, flat `[t][i]`.
pub(crate) fn row_neg_entropies(m: &ModelTable) -> Vec<f64> {
    let l = m.l();
    let mut out = Vec::with_capacity(m.t() * m.k());
    for t in 0..m.t() {
        let px = m.x_marginal_row(t);
        for (i, row) in m.joint_row(t).chunks(l).enumerate() {
            out.push(row.iter().map(|&p| xlogx(p)).sum::<f64>() - xlogx(px[i]));
        }
    }
    out
}

fn require_positive_marginals(m: &ModelTable, xm: &[f64]) -> Result<()> {
    match xm.iter().position(|&p| p <= 0.0) {
        Some(i) => Err(Error::ZeroMarginal {
            index: i,
            label: m.space().x_labels()[i].clone(),
        }),
        None => Ok(()),
    }
}

/// Gradient of `I(theta; y | x)`: component `t` is the risk at `theta_t` of
/// the Bayes predictive of `pi`.
pub fn lip_gradient(m: &ModelTable, prior: &Prior) -> Result<Vec<f64>> {
    let xm = m.mixture_x(prior.weights());
    require_positive_marginals(m, &xm)?;
    Ok(EntropyObjective::mutual_information(m).gradient(prior.weights()))
}

/// Gradient of `D_q`: component `t` is `sum p(x,y|theta_t) log(p_pi(y|x) / q(y;x))`.
pub fn dq_gradient(m: &ModelTable, prior: &Prior, q: &PredictiveTable) -> Result<Vec<f64>> {
    q.check_shape(m)?;
    let xm = m.mixture_x(prior.weights());
    require_positive_marginals(m, &xm)?;
    let objective = EntropyObjective::negative_dq(m, &log_table(q));
    Ok(objective
        .gradient(prior.weights())
        .into_iter()
        .map(|g| -g)
        .collect())
}

pub(crate) fn log_table(q: &PredictiveTable) -> Vec<f64> {
    q.flat()
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect()
}
