//! Error type shared by all solver modules.

use thiserror::Error;

/// Errors produced by the solvers and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (time outside the
    /// horizon, empty grid, non-positive parameter, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense solve was requested for a problem size above the cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The input combination is not handled by any solver path.
    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    /// The adaptive integrator drove the step size below the underflow
    /// floor. Cannot occur for the linear control system at sane
    /// tolerances; kept as a stiffness guard.
    #[error("step size underflow at t = {t}: step {step} below floor {floor}")]
    StepSizeUnderflow { t: f64, step: f64, floor: f64 },

    /// A finite-volume update produced a negative density. Treated as a
    /// bug signal: the Rusanov dissipation at CFL <= 0.9 preserves
    /// positivity.
    #[error("density positivity failure at t = {t}: min rho = {min_rho}")]
    PositivityFailure { t: f64, min_rho: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
