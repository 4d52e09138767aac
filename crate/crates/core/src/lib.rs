//! Latent information priors and limit-of-Bayes predictive densities for
//! finite families `p(x, y | theta)`.
//!
//! A model is a table over a finite parameter grid, a finite data space `X`
//! and a finite future-observation space `Y`. The crate evaluates
//! Kullback-Leibler prediction risks, maximizes the conditional mutual
//! information `I(theta; y | x)` to obtain least favorable priors and minimax
//! predictive densities, and replaces any predictive density by a limit of
//! Bayes predictives whose risk is nowhere larger.

pub mod builders;
pub mod dominator;
pub mod error;
pub mod functionals;
pub mod io;
pub mod model;
pub mod oracle;
pub mod predictive;
mod simplex;
pub mod solver;

pub use dominator::{
    dominance_check, dominating_predictive, DominanceReport, DominationReport, Relation,
};
pub use error::{Error, Result};
pub use functionals::{
    bayes_risk, chain_rule_check, conditional_mutual_information, d_q, dq_gradient, kl_risk,
    lip_gradient, risk_profile, ExtendedReal, RiskProfile,
};
pub use model::{
    validate_model, zero_pattern, ModelTable, OutcomeSpace, PredictiveTable, Prior, ZeroPattern,
};
pub use predictive::{
    bayes_predictive, limit_predictive, plug_in_predictive, verify_limit_by_annealing, LimitReport,
};
pub use solver::{
    anneal_lip, certificate, minimax_predictive, solve_lip, Algorithm, SolverConfig, SolverResult,
};
