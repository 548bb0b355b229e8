use thiserror::Error;

use crate::geodesic::GeodesicState;

/// Failures of the adaptive integrator.
#[derive(Debug, Clone, Error)]
pub enum IntegrationError {
    #[error("step budget of {max_steps} exhausted at s = {reached}")]
    MaxSteps {
        max_steps: usize,
        reached: f64,
        /// Last accepted state, when the integrated system is a geodesic.
        partial: Option<Box<GeodesicState>>,
    },
    #[error("non-finite state at s = {at}")]
    NonFinite { at: f64 },
    #[error("step size underflow at s = {at}")]
    StepUnderflow { at: f64 },
    #[error("exponent a_i * x_last = {exponent:.3} exceeds the overflow guard at s = {at}")]
    Range { exponent: f64, at: f64 },
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parameter vector must have at least one entry")]
    EmptyParams,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate 2-plane: the two vectors are linearly dependent")]
    DegeneratePlane,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("all coordinates of a must be nonzero for {0}")]
    ZeroRate(&'static str),
    #[error("not a Heintze derivation: eigenvalue with real part {0:.3e}")]
    NotHeintze(f64),
    #[error("matrix is not diagonalizable (eigenvalue {0:.6} is defective)")]
    Defective(f64),
    #[error("fit error: {0}")]
    Fit(String),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
