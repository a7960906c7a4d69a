use nalgebra::DVector;
use thiserror::Error;

use crate::model::Group;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("group {0:?} has no samples")]
    EmptyGroup(Group),

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("solver did not converge in {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        best: DVector<f64>,
    },

    #[error("level {lambda} is below the constraint minimum {minimum}; feasible set is empty")]
    Infeasible { lambda: f64, minimum: f64 },

    #[error("no multiplier up to {mu_max:e} brings the constraint down to {lambda}")]
    DualBracket { lambda: f64, mu_max: f64 },

    #[error("assumption on group optima violated: {failing} (margins {margin_g0:.6}, {margin_g1:.6}, gamma {gamma})")]
    Assumption {
        failing: &'static str,
        margin_g0: f64,
        margin_g1: f64,
        gamma: f64,
    },

    #[error("both constrained branches failed: +gamma: {plus}; -gamma: {minus}")]
    BranchesFailed { plus: Box<Error>, minus: Box<Error> },

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
}

impl Error {
    /// True for errors raised by a numerical routine rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteStart
                | Error::NotConverged { .. }
                | Error::Infeasible { .. }
                | Error::DualBracket { .. }
                | Error::Assumption { .. }
                | Error::BranchesFailed { .. }
                | Error::Diverged { .. }
        )
    }
}
