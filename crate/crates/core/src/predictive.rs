//! Predictive densities: Bayes predictives of a prior, plug-in predictives of
//! an estimator, and limits of Bayes predictives along floor mixtures.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{ModelTable, PredictiveTable, Prior};

/// Conditional `p_pi(y | x)` for every `x`.
///
/// Fails with [`Error::ZeroMarginal`] when some `p_pi(x) = 0`; use
/// [`limit_predictive`] in that case.
pub fn bayes_predictive(m: &ModelTable, prior: &Prior) -> Result<PredictiveTable> {
    let l = m.l();
    let mut joint = m.mixture_joint(prior.weights());
    for (i, row) in joint.chunks_mut(l).enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMarginal {
                index: i,
                label: m.space().x_labels()[i].clone(),
            });
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(PredictiveTable::from_raw(m.k(), l, joint))
}

/// `q(. ; x) = p(. | x, theta_{estimator[x]})`.
///
/// Where the estimated parameter gives `x` zero probability the conditional
/// is undefined; with `uniform_fallback` a uniform row is substituted and
/// flagged in the returned vector, otherwise this is an error.
pub fn plug_in_predictive(
    m: &ModelTable,
    estimator: &[usize],
    uniform_fallback: bool,
) -> Result<(PredictiveTable, Vec<bool>)> {
    if estimator.len() != m.k() {
        return Err(invalid(format!(
            "estimator maps {} data values but the model has {}",
            estimator.len(),
            m.k()
        )));
    }
    let l = m.l();
    let mut q = Vec::with_capacity(m.cells());
    let mut substituted = vec![false; m.k()];
    for (i, &t) in estimator.iter().enumerate() {
        if t >= m.t() {
            return Err(invalid(format!(
                "estimator maps x[{i}] to missing parameter {t}"
            )));
        }
        let px = m.x_marginal_row(t)[i];
        if px > 0.0 {
            let row = &m.joint_row(t)[i * l..(i + 1) * l];
            q.extend(row.iter().map(|&p| p / px));
        } else if uniform_fallback {
            q.extend(std::iter::repeat_n(1.0 / l as f64, l));
            substituted[i] = true;
        } else {
            return Err(Error::UndefinedConditional {
                index: i,
                label: m.space().x_labels()[i].clone(),
            });
        }
    }
    Ok((PredictiveTable::from_raw(m.k(), l, q), substituted))
}

/// How a row of a limit predictive was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// Bayes conditional of the limiting prior (`p_pi(x) > 0`).
    Direct,
    /// Conditional of the reference measure `mu` (`p_pi(x) = 0`).
    LimitFilled,
}

/// Decreasing floor weights `1/n` toward the reference measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    floors: Vec<f64>,
    tolerance: f64,
}

impl AnnealingSchedule {
    pub fn new(floors: Vec<f64>, tolerance: f64) -> Result<Self> {
        if floors.is_empty() {
            return Err(invalid("annealing schedule has no floors"));
        }
        if floors.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(invalid("annealing floors must lie in (0, 1]"));
        }
        if floors.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("annealing floors must be strictly decreasing"));
        }
        if tolerance.is_nan() || tolerance <= 0.0 {
            return Err(invalid("annealing tolerance must be positive"));
        }
        Ok(Self { floors, tolerance })
    }

    /// Floors `2^-1, ..., 2^-steps`.
    pub fn geometric(steps: u32, tolerance: f64) -> Result<Self> {
        Self::new(
            (1..=steps as i32).map(|k| 2f64.powi(-k)).collect(),
            tolerance,
        )
    }

    pub fn floors(&self) -> &[f64] {
        &self.floors
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self::geometric(20, 1e-5).expect("valid default schedule")
    }
}

/// One floor of an annealing check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealStep {
    pub floor: f64,
    /// Max entrywise distance to the closed-form limit.
    pub max_deviation: f64,
    /// Max entrywise change from the previous floor (0 for the first).
    pub max_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub predictive: PredictiveTable,
    pub row_kinds: Vec<RowKind>,
    /// Empty for the closed form.
    pub trace: Vec<AnnealStep>,
    /// Whether the annealed path reached the closed form within tolerance
    /// (always true for the closed form itself).
    pub converged: bool,
}

impl LimitReport {
    pub fn final_deviation(&self) -> f64 {
        self.trace.last().map_or(0.0, |s| s.max_deviation)
    }
}

fn check_reference(m: &ModelTable, mu: &Prior) -> Result<()> {
    if mu.len() != m.t() {
        return Err(invalid(
            "reference measure length differs from the parameter grid",
        ));
    }
    let xm = m.mixture_x(mu.weights());
    if let Some(i) = xm.iter().position(|&p| p <= 0.0) {
        return Err(Error::ZeroMarginal {
            index: i,
            label: m.space().x_labels()[i].clone(),
        });
    }
    Ok(())
}

/// Limit of `p_{(1/n) mu + (1 - 1/n) pi}(y | x)` as `n -> inf`, in closed
/// form: rows with `p_pi(x) > 0` are the Bayes conditional of `pi`, the rest
/// are the conditional of `mu` (for those rows the mixture conditional equals
/// it for every `n`).
pub fn limit_predictive(m: &ModelTable, prior: &Prior, mu: &Prior) -> Result<LimitReport> {
    if prior.len() != m.t() {
        return Err(invalid("prior length differs from the parameter grid"));
    }
    check_reference(m, mu)?;
    let l = m.l();
    let mut q = m.mixture_joint(prior.weights());
    let fallback = m.mixture_joint(mu.weights());
    let mut row_kinds = Vec::with_capacity(m.k());
    for (i, row) in q.chunks_mut(l).enumerate() {
        let mut total: f64 = row.iter().sum();
        if total > 0.0 {
            row_kinds.push(RowKind::Direct);
        } else {
            row.copy_from_slice(&fallback[i * l..(i + 1) * l]);
            total = row.iter().sum();
            row_kinds.push(RowKind::LimitFilled);
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(LimitReport {
        predictive: PredictiveTable::from_raw(m.k(), l, q),
        row_kinds,
        trace: Vec::new(),
        converged: true,
    })
}

/// Follows the floor mixtures numerically and measures how close their Bayes
/// predictives come to [`limit_predictive`].
pub fn verify_limit_by_annealing(
    m: &ModelTable,
    prior: &Prior,
    mu: &Prior,
    schedule: &AnnealingSchedule,
) -> Result<LimitReport> {
    let closed = limit_predictive(m, prior, mu)?;
    let mut trace = Vec::with_capacity(schedule.floors().len());
    let mut previous: Option<PredictiveTable> = None;
    for &floor in schedule.floors() {
        let mixed = Prior::mix(mu, prior, floor)?;
        let q = bayes_predictive(m, &mixed)?;
        let max_deviation = q.max_abs_diff(&closed.predictive);
        let max_change = previous.as_ref().map_or(0.0, |p| q.max_abs_diff(p));
        trace.push(AnnealStep {
            floor,
            max_deviation,
            max_change,
        });
        previous = Some(q);
    }
    let converged = trace
        .last()
        .is_some_and(|s| s.max_deviation <= schedule.tolerance());
    Ok(LimitReport {
        predictive: previous.expect("schedule is nonempty"),
        row_kinds: closed.row_kinds,
        trace,
        converged,
    })
}
