use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::Trajectory;

/// Errors raised by parameter validation and the analytic routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: must be {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("b = beta / (a C T) is undefined for a = 0")]
    UndefinedMapping,
    #[error("model variant {variant} does not match its parameters: {reason}")]
    VariantMismatch {
        variant: &'static str,
        reason: &'static str,
    },
    #[error("({a}, {second}) is not on the stability boundary (critical a = {critical})")]
    NotOnBoundary { a: f64, second: f64, critical: f64 },
    #[error("window is empty after discarding the transient")]
    EmptyWindow,
    #[error("no converged sample followed by a non-converged one in the sampled range")]
    NoBracket,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no characteristic roots found in the search box")]
    NoRoots,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Reasons a right-hand side cannot be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RhsFault {
    #[error("mean-queue function is singular: delayed load reached capacity")]
    Singular,
}

/// Failure of a delay-equation integration.
#[derive(Debug, Clone, Error)]
pub enum IntegrateError<T: Scalar> {
    /// The state became non-finite, exceeded the blow-up limit, or the
    /// right-hand side could not be evaluated. `partial` holds every sample
    /// accepted before `time`.
    #[error("integration diverged at t = {time}")]
    Diverged { time: T, partial: Trajectory<T> },
    #[error("invalid problem: {0}")]
    Config(String),
}

impl<T: Scalar> IntegrateError<T> {
    pub fn failure_time(&self) -> Option<T> {
        match self {
            IntegrateError::Diverged { time, .. } => Some(*time),
            IntegrateError::Config(_) => None,
        }
    }
}

pub(crate) fn check(
    ok: bool,
    name: &'static str,
    value: f64,
    constraint: &'static str,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            constraint,
        })
    }
}
