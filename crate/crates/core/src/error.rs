use thiserror::Error;

use crate::model::ValidationReport;

/// Errors raised by model construction, file handling and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("schema error in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("model failed validation:\n{0}")]
    InvalidModel(ValidationReport),

    /// A mixture marginal `p_pi(x)` vanished where the operation needs it positive.
    #[error("precondition violated: marginal p(x = {label}) is zero (x index {index})")]
    ZeroMarginal { index: usize, label: String },

    #[error(
        "conditional p(y | x = {label}) is undefined for the estimated parameter (x index {index})"
    )]
    UndefinedConditional { index: usize, label: String },

    #[error("grid search over {thetas} parameters is intractable (limit {limit}); use the solver")]
    OracleTooLarge { thetas: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        field: field.into(),
        message: message.into(),
    }
}
