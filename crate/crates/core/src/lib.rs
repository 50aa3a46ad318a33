//! Safe feedback optimization.
//!
//! A plant `ẋ = f(x, u)` is interconnected with a quadratic-program controller
//! `u̇ = g(x, u)` that follows the gradient of the steady-state objective while
//! enforcing an input constraint `b(u) ≥ 0` and, through a high-order barrier
//! chain, a state constraint `h(x) ≥ 0` at all times.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command line
//! front end and parallel sweeps live in the `safeflow` crate.

#![no_std]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
pub mod controller;
mod error;
pub mod hocbf;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};

pub mod prelude {
    pub use crate::analysis::{classify_equilibrium, kkt_residual, regularize, EquivalenceReport, KktReport};
    pub use crate::controller::{baseline_rhs, sgf_rhs, ControlEvaluation, ControllerParams};
    pub use crate::hocbf::{build_chain, detect_relative_degree, BarrierChain};
    pub use crate::sim::{integrate, Outcome, RhsKind, SimConfig, Trajectory};
    pub use crate::model::{
        make_linear_plant, steady_state, PlantModel, ProblemSpec, Quadratic, ScalarField, Separable,
        SeparableTerm, VectorField,
    };
    pub use crate::qp::{qp_kkt_residual, solve_qp, ActiveSet, QpResult, QpStatus, TwoConstraintQp};

    pub use crate::{DMatrix, DVector, Error, Result};
}
