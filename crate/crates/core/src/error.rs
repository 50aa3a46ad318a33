use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::qp::InfeasibilityCertificate;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Eigenvalues are reported as `(re, im)` pairs.
    #[error("state matrix is not Hurwitz, eigenvalues {0:?}")]
    NotHurwitz(Vec<(f64, f64)>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Newton steady-state iteration diverged (last residual {last_residual:e})")]
    NewtonDiverged { last_residual: f64 },

    #[error("state Jacobian is numerically singular (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("steady-state map failed: {0}")]
    SteadyStateMapFailure(Box<Error>),

    #[error("analytic barrier chain needs a linear plant and an at-most-quadratic state constraint")]
    UnsupportedAnalytic,

    #[error("input does not appear within {0} differentiations of the state constraint")]
    NoRelativeDegree(usize),

    #[error(
        "relative degree ill-defined: level {level} depends on the input at only {nonzero} of {total} samples"
    )]
    AmbiguousRelativeDegree { level: usize, nonzero: usize, total: usize },

    #[error("controller QP infeasible: {certificate}")]
    QpInfeasible { certificate: InfeasibilityCertificate },

    #[error("controller QP infeasible at x = {x:?}, u = {u:?}: {certificate}")]
    Infeasible { certificate: InfeasibilityCertificate, x: Vec<f64>, u: Vec<f64> },
}
