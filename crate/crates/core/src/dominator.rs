//! Replacing an arbitrary predictive density by a limit of Bayes predictives
//! whose risk is no larger at any parameter.

use serde::Serialize;

use crate::error::Result;
use crate::functionals::{d_q_weights, kl_risk, log_table, ExtendedReal};
use crate::model::{validate_model, zero_pattern, ModelTable, PredictiveTable, Prior, ZeroPattern};
use crate::predictive::{limit_predictive, LimitReport};
use crate::simplex::{maximize, EntropyObjective};
use crate::solver::{default_floors, SolverConfig};

/// Additive slack on risk comparisons, absorbing solver tolerance.
pub const DOMINANCE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Exceeds,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Exceeds => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceEntry {
    pub theta_label: String,
    pub r1: ExtendedReal,
    pub r2: ExtendedReal,
    /// How `r1` compares to `r2`.
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub entries: Vec<DominanceEntry>,
    /// `r1 <= r2` (within the slack) at every parameter.
    pub dominates: bool,
}

/// Per-parameter comparison of `R(theta, q1)` against `R(theta, q2)` with the
/// default slack. Infinite risks compare as `inf <= inf`.
pub fn dominance_check(
    m: &ModelTable,
    q1: &PredictiveTable,
    q2: &PredictiveTable,
) -> Result<DominanceReport> {
    dominance_check_with_slack(m, q1, q2, DOMINANCE_SLACK)
}

pub fn dominance_check_with_slack(
    m: &ModelTable,
    q1: &PredictiveTable,
    q2: &PredictiveTable,
    slack: f64,
) -> Result<DominanceReport> {
    q1.check_shape(m)?;
    q2.check_shape(m)?;
    let entries: Vec<DominanceEntry> = m
        .theta_labels()
        .iter()
        .enumerate()
        .map(|(t, label)| {
            let r1 = kl_risk(m, t, q1);
            let r2 = kl_risk(m, t, q2);
            let at_most = r2.is_infinite() || (r1.is_finite() && r1.value() <= r2.value() + slack);
            DominanceEntry {
                theta_label: label.clone(),
                r1,
                r2,
                relation: if at_most {
                    Relation::AtMost
                } else {
                    Relation::Exceeds
                },
            }
        })
        .collect();
    let dominates = entries.iter().all(|e| e.relation == Relation::AtMost);
    Ok(DominanceReport { entries, dominates })
}

/// Minimizer of `D_q` over priors supported on the finite-risk parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DqSolution {
    /// Minimizer embedded in the full grid.
    pub prior: Prior,
    /// Achieved `D_q`, nats.
    pub value: f64,
    /// Frank-Wolfe gap of the convex minimization; bounds `value - inf D_q`.
    pub certificate_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub predictive: PredictiveTable,
    pub zero_pattern: ZeroPattern,
    /// Absent when every parameter has infinite risk under `q`.
    pub solution: Option<DqSolution>,
    pub limit: LimitReport,
    /// Risks of the output (`r1`) against those of `q` (`r2`).
    pub comparison: DominanceReport,
}

impl DominationReport {
    pub fn dominates(&self) -> bool {
        self.comparison.dominates
    }

    pub fn converged(&self) -> bool {
        self.solution.as_ref().is_none_or(|s| s.converged)
    }
}

/// Builds a predictive density that is a limit of Bayes predictives and
/// whose risk is nowhere larger than that of `q`.
///
/// `D_q` is minimized over priors on the parameters where `q` has finite
/// risk, first along shrinking floors toward the uniform measure on that set
/// and then without a floor. Data rows the minimizer leaves uncharged are
/// filled with the conditional of the uniform prior on the whole grid.
pub fn dominating_predictive(
    m: &ModelTable,
    q: &PredictiveTable,
    cfg: &SolverConfig,
) -> Result<DominationReport> {
    validate_model(m).into_result()?;
    cfg.validate()?;
    let zp = zero_pattern(m, q)?;
    let uniform = Prior::uniform(m.t());

    let (prior, solution) = if zp.theta_q.is_empty() {
        (uniform.clone(), None)
    } else {
        let support: Vec<usize> = zp.theta_q.iter().copied().collect();
        let restricted = m.restrict(&support)?;
        let log_q = log_table(q);
        let objective = EntropyObjective::negative_dq(&restricted, &log_q);
        let mu = Prior::uniform(support.len());

        let mut nu = mu.weights().to_vec();
        for floor in default_floors() {
            let out = maximize(&objective, &nu, mu.weights(), &cfg.with_floor(floor));
            nu = out
                .pi
                .iter()
                .zip(mu.weights())
                .map(|(&w, &u)| ((w - floor * u) / (1.0 - floor)).max(0.0))
                .collect();
        }
        let out = maximize(&objective, &nu, mu.weights(), &cfg.with_floor(0.0));
        let restricted_prior = Prior::from_raw(out.pi);
        let prior = restricted_prior.embed(&support, m.t());
        let value = d_q_weights(m, prior.weights(), q).value();
        let solution = DqSolution {
            prior: prior.clone(),
            value,
            certificate_gap: out.simplex_gap,
            iterations: out.iterations,
            converged: out.converged,
        };
        (prior, Some(solution))
    };

    let limit = limit_predictive(m, &prior, &uniform)?;
    let comparison = dominance_check(m, &limit.predictive, q)?;
    Ok(DominationReport {
        predictive: limit.predictive.clone(),
        zero_pattern: zp,
        solution,
        limit,
        comparison,
    })
}
