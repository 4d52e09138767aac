//! Latent information priors: maximizers of `I(theta; y | x)` over the
//! simplex, and the minimax predictive densities built from them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::functionals::{cmi_weights, risk_profile, ExtendedReal, RiskProfile};
use crate::model::{validate_model, ModelTable, PredictiveTable, Prior};
use crate::predictive::{bayes_predictive, limit_predictive, LimitReport};
use crate::simplex::{maximize, EntropyObjective};

/// Weights above this count toward the reported support size.
pub const SUPPORT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Away-step Frank-Wolfe with exact line search.
    FrankWolfe,
    /// Multiplicative update `w <- w exp(eta g)`, with step halving on descent.
    ExponentiatedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Mass held on the reference measure: iterates live in
    /// `{floor * mu + (1 - floor) * nu}`.
    pub floor: f64,
    pub max_iterations: usize,
    /// Stop once the Frank-Wolfe gap (nats) drops to this value.
    pub certificate_tolerance: f64,
    pub line_search_tolerance: f64,
    /// Exponentiated-gradient step size.
    pub step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::FrankWolfe,
            floor: 0.0,
            max_iterations: 100_000,
            certificate_tolerance: 1e-10,
            line_search_tolerance: 1e-12,
            step_size: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.floor) {
            return Err(invalid(format!(
                "floor {} must lie in [0, 0.5)",
                self.floor
            )));
        }
        if !(self.certificate_tolerance > 0.0 && self.line_search_tolerance > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(invalid("step size must be positive"));
        }
        Ok(())
    }

    pub fn with_floor(&self, floor: f64) -> Self {
        Self {
            floor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub objective: f64,
    pub gap: f64,
}

/// A prior averaged with its mirror image on a reflection-symmetric model.
#[derive(Debug, Clone, PartialEq)]
pub struct Symmetrized {
    pub prior: Prior,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub prior: Prior,
    /// `I(theta; y | x)` at `prior`, nats.
    pub objective: f64,
    /// `max_t g_t - sum_t w_t g_t` over the whole simplex, where `g_t` is the
    /// risk at `theta_t` of the Bayes predictive of `prior`.
    pub certificate_gap: f64,
    /// Frank-Wolfe gap within the floored feasible set; equals
    /// `certificate_gap` when `floor = 0`.
    pub feasible_gap: f64,
    pub floor: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub symmetrized: Option<Symmetrized>,
}

impl SolverResult {
    pub fn support_size(&self) -> usize {
        self.prior.support_size(SUPPORT_THRESHOLD)
    }
}

/// `1/2 (pi + mirror(pi))` when the model is invariant under reversing `x`
/// and `y` together with a relabeling of the grid.
pub fn symmetrize(m: &ModelTable, prior: &Prior) -> Option<Symmetrized> {
    let sigma = m.mirror_permutation()?;
    let mirrored = prior.permuted(&sigma);
    let prior = Prior::mix(prior, &mirrored, 0.5).ok()?;
    let objective = cmi_weights(m, prior.weights());
    Some(Symmetrized { prior, objective })
}

fn run(
    m: &ModelTable,
    cfg: &SolverConfig,
    mu: &[f64],
    nu0: &[f64],
    symmetric: bool,
) -> SolverResult {
    let objective_fn = EntropyObjective::mutual_information(m);
    let out = maximize(&objective_fn, nu0, mu, cfg);
    let prior = Prior::from_raw(out.pi);
    let objective = cmi_weights(m, prior.weights());
    let symmetrized = if symmetric {
        symmetrize(m, &prior)
    } else {
        None
    };
    SolverResult {
        objective,
        certificate_gap: out.simplex_gap,
        feasible_gap: out.feasible_gap,
        floor: cfg.floor,
        iterations: out.iterations,
        trace: out
            .trace
            .into_iter()
            .map(|(objective, gap)| TracePoint { objective, gap })
            .collect(),
        converged: out.converged,
        symmetrized,
        prior,
    }
}

/// Maximizes the conditional mutual information from the uniform prior,
/// holding `cfg.floor` of the mass on the uniform reference measure.
///
/// Hitting `max_iterations` is not an error: the last iterate is returned
/// with `converged = false`.
pub fn solve_lip(m: &ModelTable, cfg: &SolverConfig) -> Result<SolverResult> {
    validate_model(m).into_result()?;
    cfg.validate()?;
    let uniform = Prior::uniform(m.t());
    let symmetric = m.mirror_permutation().is_some();
    Ok(run(m, cfg, uniform.weights(), uniform.weights(), symmetric))
}

/// Default annealing floors `2^-2, ..., 2^-20`. The floor must stay below
/// one half, so the geometric schedule starts at its second term.
pub fn default_floors() -> Vec<f64> {
    (2..=20).map(|k| 2f64.powi(-k)).collect()
}

/// Solves on a shrinking sequence of floor classes, warm-starting each
/// solve from the previous prior (which lies in every smaller-floor class).
pub fn anneal_lip(m: &ModelTable, floors: &[f64], cfg: &SolverConfig) -> Result<Vec<SolverResult>> {
    validate_model(m).into_result()?;
    if floors.is_empty() {
        return Err(invalid("no annealing floors given"));
    }
    if floors.iter().any(|&f| !(f > 0.0 && f < 0.5)) {
        return Err(invalid("annealing floors must lie in (0, 0.5)"));
    }
    if floors.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("annealing floors must be strictly decreasing"));
    }
    let mu = Prior::uniform(m.t());
    let symmetric = m.mirror_permutation().is_some();
    let mut results: Vec<SolverResult> = Vec::with_capacity(floors.len());
    for &floor in floors {
        let step_cfg = cfg.with_floor(floor);
        step_cfg.validate()?;
        let nu0: Vec<f64> = match results.last() {
            None => mu.weights().to_vec(),
            Some(prev) => prev
                .prior
                .weights()
                .iter()
                .zip(mu.weights())
                .map(|(&w, &u)| ((w - floor * u) / (1.0 - floor)).max(0.0))
                .collect(),
        };
        results.push(run(m, &step_cfg, mu.weights(), &nu0, symmetric));
    }
    Ok(results)
}

/// Minimax sandwich for the Bayes predictive of `pi`:
/// `I(pi) <= inf_q sup_theta R(theta, q) <= sup_risk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub gap: f64,
    pub sup_risk: f64,
    pub bayes_risk_value: f64,
}

pub fn certificate(m: &ModelTable, prior: &Prior) -> Result<Certificate> {
    let q = bayes_predictive(m, prior)?;
    let sup_risk = risk_profile(m, &q).sup().value();
    let bayes_risk_value = cmi_weights(m, prior.weights());
    Ok(Certificate {
        gap: (sup_risk - bayes_risk_value).max(0.0),
        sup_risk,
        bayes_risk_value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSolution {
    pub predictive: PredictiveTable,
    /// The unfloored solve: its prior approximates the latent information prior.
    pub result: SolverResult,
    /// Present when the unfloored prior leaves some data value with zero
    /// marginal and the predictive had to be taken along floor mixtures.
    pub annealed: Option<Vec<SolverResult>>,
    pub limit: LimitReport,
    pub risks: RiskProfile,
    /// `sup_theta R(theta, predictive)`.
    pub sup_risk: ExtendedReal,
    /// `sup_risk - I(result.prior)`: an upper bound on the excess over the
    /// minimax value.
    pub minimax_gap: f64,
}

/// Latent information prior plus the minimax predictive density it induces.
pub fn minimax_predictive(m: &ModelTable, cfg: &SolverConfig) -> Result<MinimaxSolution> {
    let unfloored = cfg.with_floor(0.0);
    let result = solve_lip(m, &unfloored)?;
    let mu = Prior::uniform(m.t());
    let full_marginals = m.mixture_x(result.prior.weights()).iter().all(|&p| p > 0.0);
    let (limit, annealed) = if full_marginals {
        (limit_predictive(m, &result.prior, &mu)?, None)
    } else {
        let path = anneal_lip(m, &default_floors(), &unfloored)?;
        let last = path.last().expect("floors are nonempty");
        (limit_predictive(m, &last.prior, &mu)?, Some(path))
    };
    let risks = risk_profile(m, &limit.predictive);
    let sup_risk = risks.sup();
    Ok(MinimaxSolution {
        predictive: limit.predictive.clone(),
        minimax_gap: sup_risk.value() - result.objective,
        result,
        annealed,
        limit,
        risks,
        sup_risk,
    })
}
