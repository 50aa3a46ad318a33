//! Plants, steady-state maps and steady-state optimization problems.

use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, FD_REL_STEP};
use crate::{Error, Result};

/// Condition-number ceiling for `∂f/∂x` before it is declared singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// A smooth vector field `f(x, u)`.
///
/// Jacobians default to central finite differences with step
/// `1e-6 · (1 + ‖point‖∞)`.
pub trait VectorField: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        linalg::central_jacobian(|xp| self.eval(xp, u), x, FD_REL_STEP)
    }

    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        linalg::central_jacobian(|up| self.eval(x, up), u, FD_REL_STEP)
    }
}

#[derive(Clone)]
pub enum PlantKind {
    LinearAB { a: DMatrix<f64>, b: DMatrix<f64> },
    GeneralSmooth(Arc<dyn VectorField>),
}

impl fmt::Debug for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantKind::LinearAB { a, b } => f.debug_struct("LinearAB").field("a", a).field("b", b).finish(),
            PlantKind::GeneralSmooth(_) => f.write_str("GeneralSmooth(..)"),
        }
    }
}

/// How `w(u)` is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyStateMethod {
    LinearClosedForm,
    Newton { max_iters: usize, residual_tol: f64 },
}

impl SteadyStateMethod {
    pub const DEFAULT_NEWTON: SteadyStateMethod = SteadyStateMethod::Newton { max_iters: 50, residual_tol: 1e-10 };
}

#[derive(Debug, Clone)]
pub struct PlantModel {
    n: usize,
    m: usize,
    kind: PlantKind,
    method: SteadyStateMethod,
    /// `−A⁻¹B` for linear plants.
    steady_gain: Option<DMatrix<f64>>,
}

/// Builds `ẋ = A x + B u`, rejecting a non-Hurwitz `A`.
pub fn make_linear_plant(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<PlantModel> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    if b.nrows() != n || b.ncols() == 0 {
        return Err(Error::Dimension(format!("B must have {} rows and at least one column, got {}x{}", n, b.nrows(), b.ncols())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("plant matrices must be finite".into()));
    }
    let eigs = linalg::eigenvalues(&a);
    if !linalg::is_hurwitz(&eigs) {
        return Err(Error::NotHurwitz(eigs));
    }
    let condition = linalg::condition_estimate(&a);
    if condition > SINGULAR_CONDITION {
        return Err(Error::SingularJacobian { condition });
    }
    let a_inv = a.clone().try_inverse().ok_or(Error::SingularJacobian { condition: f64::INFINITY })?;
    let steady_gain = -(a_inv * &b);
    Ok(PlantModel {
        n,
        m: b.ncols(),
        kind: PlantKind::LinearAB { a, b },
        method: SteadyStateMethod::LinearClosedForm,
        steady_gain: Some(steady_gain),
    })
}

impl PlantModel {
    /// Wraps a general smooth vector field.
    ///
    /// Global exponential stability of the equilibrium for every constant
    /// input cannot be checked here; it is the caller's responsibility. The
    /// steady-state map uses Newton's method with the default settings.
    pub fn general(field: Arc<dyn VectorField>) -> Self {
        Self::general_with(field, SteadyStateMethod::DEFAULT_NEWTON)
    }

    pub fn general_with(field: Arc<dyn VectorField>, method: SteadyStateMethod) -> Self {
        PlantModel {
            n: field.state_dim(),
            m: field.input_dim(),
            kind: PlantKind::GeneralSmooth(field),
            method,
            steady_gain: None,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &PlantKind {
        &self.kind
    }

    pub fn method(&self) -> SteadyStateMethod {
        self.method
    }

    /// `(A, B)` for linear plants.
    pub fn linear_parts(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.kind {
            PlantKind::LinearAB { a, b } => Some((a, b)),
            PlantKind::GeneralSmooth(_) => None,
        }
    }

    pub fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            PlantKind::LinearAB { a, b } => a * x + b * u,
            PlantKind::GeneralSmooth(field) => field.eval(x, u),
        }
    }

    pub fn dfdx(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            PlantKind::LinearAB { a, .. } => a.clone(),
            PlantKind::GeneralSmooth(field) => field.jacobian_x(x, u),
        }
    }

    pub fn dfdu(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            PlantKind::LinearAB { b, .. } => b.clone(),
            PlantKind::GeneralSmooth(field) => field.jacobian_u(x, u),
        }
    }
}

/// `w(u)` together with `∂w/∂u(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub x: DVector<f64>,
    pub dwdu: DMatrix<f64>,
}

/// Newton warm start. One per simulation run; never shared between runs.
#[derive(Debug, Clone, Default)]
pub struct WarmStart(Option<DVector<f64>>);

impl WarmStart {
    pub fn from_state(x: DVector<f64>) -> Self {
        WarmStart(Some(x))
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.0.as_ref()
    }
}

/// Solves `f(x, u) = 0` for `x` and returns `∂w/∂u = −(∂f/∂x)⁻¹ ∂f/∂u`.
pub fn steady_state(plant: &PlantModel, u: &DVector<f64>, warm: &mut WarmStart) -> Result<SteadyState> {
    if u.len() != plant.m {
        return Err(Error::Dimension(format!("input has length {}, plant expects {}", u.len(), plant.m)));
    }
    if let Some(gain) = &plant.steady_gain {
        return Ok(SteadyState { x: gain * u, dwdu: gain.clone() });
    }
    let (max_iters, residual_tol) = match plant.method {
        SteadyStateMethod::Newton { max_iters, residual_tol } => (max_iters, residual_tol),
        SteadyStateMethod::LinearClosedForm => (50, 1e-10),
    };
    let mut x = warm.0.clone().unwrap_or_else(|| DVector::zeros(plant.n));
    let mut fx = plant.f(&x, u);
    let mut residual = fx.norm();
    let mut iters = 0;
    while residual > residual_tol {
        if iters == max_iters || !residual.is_finite() {
            return Err(Error::NewtonDiverged { last_residual: residual });
        }
        iters += 1;
        let jac = plant.dfdx(&x, u);
        let step = newton_solve(&jac, &fx)?;
        // Halve the step until the residual decreases; plain Newton is kept
        // when it already makes progress.
        let mut t = 1.0;
        loop {
            let trial = &x - &step * t;
            let f_trial = plant.f(&trial, u);
            let r_trial = f_trial.norm();
            if r_trial < residual || t < 1e-4 {
                x = trial;
                fx = f_trial;
                residual = r_trial;
                break;
            }
            t *= 0.5;
        }
    }
    let jac = plant.dfdx(&x, u);
    let dwdu = -newton_solve_matrix(&jac, &plant.dfdu(&x, u))?;
    warm.0 = Some(x.clone());
    Ok(SteadyState { x, dwdu })
}

fn newton_solve(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = linalg::condition_estimate(jac);
    if condition > SINGULAR_CONDITION {
        return Err(Error::SingularJacobian { condition });
    }
    jac.clone().lu().solve(rhs).ok_or(Error::SingularJacobian { condition: f64::INFINITY })
}

fn newton_solve_matrix(jac: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = linalg::condition_estimate(jac);
    if condition > SINGULAR_CONDITION {
        return Err(Error::SingularJacobian { condition });
    }
    jac.clone().lu().solve(rhs).ok_or(Error::SingularJacobian { condition: f64::INFINITY })
}

/// A smooth scalar function on `Rᵈ`.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        linalg::central_gradient(|p| self.value(p), x, FD_REL_STEP)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        linalg::symmetrize(&linalg::central_jacobian(|p| self.gradient(p), x, FD_REL_STEP))
    }

    /// The `c + gᵀx + xᵀQx` representation, when the function has one.
    fn as_quadratic(&self) -> Option<Quadratic> {
        None
    }
}

/// `c + gᵀx + xᵀQx`. Only the symmetric part of `Q` matters.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub constant: f64,
    pub linear: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(constant: f64, linear: DVector<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        let d = linear.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "quadratic term must be {d}x{d}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Quadratic { constant, linear, matrix })
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Quadratic { constant: value, linear: DVector::zeros(dim), matrix: DMatrix::zeros(dim, dim) }
    }

    /// `‖x − center‖²` scaled by `weight`.
    pub fn squared_distance(center: &DVector<f64>, weight: f64) -> Self {
        let d = center.len();
        Quadratic {
            constant: weight * center.norm_squared(),
            linear: center * (-2.0 * weight),
            matrix: DMatrix::identity(d, d) * weight,
        }
    }
}

impl ScalarField for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.linear.dot(x) + x.dot(&(&self.matrix * x))
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear + (&self.matrix + self.matrix.transpose()) * x
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        &self.matrix + self.matrix.transpose()
    }

    fn as_quadratic(&self) -> Option<Quadratic> {
        Some(self.clone())
    }
}

/// One term `coef · (x[index]^power − center)²` of a [`Separable`] function.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SeparableTerm {
    pub index: usize,
    pub coef: f64,
    pub center: f64,
    pub power: u32,
}

/// `constant + Σ coef · (x[index]^power − center)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    dim: usize,
    constant: f64,
    terms: Vec<SeparableTerm>,
}

fn ipow(x: f64, p: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..p {
        acc *= x;
    }
    acc
}

impl Separable {
    pub fn new(dim: usize, constant: f64, terms: Vec<SeparableTerm>) -> Result<Self> {
        for t in &terms {
            if t.index >= dim {
                return Err(Error::Dimension(format!("term index {} out of range for dimension {dim}", t.index)));
            }
            if t.power == 0 {
                return Err(Error::InvalidParameter("separable term power must be at least 1".into()));
            }
        }
        Ok(Separable { dim, constant, terms })
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[SeparableTerm] {
        &self.terms
    }
}

impl ScalarField for Separable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().fold(self.constant, |acc, t| {
            let inner = ipow(x[t.index], t.power) - t.center;
            acc + t.coef * inner * inner
        })
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for t in &self.terms {
            let xi = x[t.index];
            let inner = ipow(xi, t.power) - t.center;
            g[t.index] += 2.0 * t.coef * inner * f64::from(t.power) * ipow(xi, t.power - 1);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            let xi = x[t.index];
            let p = f64::from(t.power);
            let inner = ipow(xi, t.power) - t.center;
            let d1 = p * ipow(xi, t.power - 1);
            let d2 = if t.power >= 2 { p * (p - 1.0) * ipow(xi, t.power - 2) } else { 0.0 };
            hess[(t.index, t.index)] += 2.0 * t.coef * (d1 * d1 + inner * d2);
        }
        hess
    }

    fn as_quadratic(&self) -> Option<Quadratic> {
        if self.terms.iter().any(|t| t.power > 1) {
            return None;
        }
        let mut q = Quadratic::constant(self.dim, self.constant);
        for t in &self.terms {
            q.constant += t.coef * t.center * t.center;
            q.linear[t.index] -= 2.0 * t.coef * t.center;
            q.matrix[(t.index, t.index)] += t.coef;
        }
        Some(q)
    }
}

/// A scalar field given by a closure; derivatives by finite differences.
pub struct ScalarFn<F> {
    dim: usize,
    f: F,
}

impl<F> ScalarFn<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        ScalarFn { dim, f }
    }
}

impl<F> fmt::Debug for ScalarFn<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl<F> ScalarField for ScalarFn<F>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.f)(x)
    }
}

/// Penalty `p · (margin − h(x))²` added to the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Regularization {
    pub p: f64,
    pub margin: f64,
}

/// Objective `Φ`, state constraint `h(x) ≥ 0` and input constraint `b(u) ≥ 0`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub phi: Arc<dyn ScalarField>,
    pub h: Arc<dyn ScalarField>,
    pub b: Arc<dyn ScalarField>,
    pub regularization: Option<Regularization>,
}

impl ProblemSpec {
    pub fn new(
        phi: Arc<dyn ScalarField>,
        h: Arc<dyn ScalarField>,
        b: Arc<dyn ScalarField>,
    ) -> Result<Self> {
        if phi.dim() != h.dim() {
            return Err(Error::Dimension(format!(
                "objective acts on R^{} but the state constraint on R^{}",
                phi.dim(),
                h.dim()
            )));
        }
        Ok(ProblemSpec { phi, h, b, regularization: None })
    }

    pub fn state_dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.b.dim()
    }

    pub fn check_plant(&self, plant: &PlantModel) -> Result<()> {
        if self.state_dim() != plant.state_dim() || self.input_dim() != plant.input_dim() {
            return Err(Error::Dimension(format!(
                "problem is on R^{} x R^{}, plant on R^{} x R^{}",
                self.state_dim(),
                self.input_dim(),
                plant.state_dim(),
                plant.input_dim()
            )));
        }
        Ok(())
    }

    /// `Φ(x)` plus the regularization penalty when present.
    pub fn effective_objective(&self, x: &DVector<f64>) -> f64 {
        let base = self.phi.value(x);
        match self.regularization {
            None => base,
            Some(Regularization { p, margin }) => {
                let gap = margin - self.h.value(x);
                base + p * gap * gap
            }
        }
    }

    pub fn effective_objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        effective_objective_gradient(self, x)
    }

    pub(crate) fn with_regularization(&self, reg: Option<Regularization>) -> Self {
        ProblemSpec { regularization: reg, ..self.clone() }
    }
}

/// `∇Φ(x)`, or `∇Φ(x) − 2p(margin − h(x))∇h(x)` with regularization.
pub fn effective_objective_gradient(spec: &ProblemSpec, x: &DVector<f64>) -> DVector<f64> {
    let grad = spec.phi.gradient(x);
    match spec.regularization {
        None => grad,
        Some(Regularization { p, margin }) => {
            let gap = margin - spec.h.value(x);
            grad - spec.h.gradient(x) * (2.0 * p * gap)
        }
    }
}

/// Boxes an error raised while evaluating the steady-state map.
pub(crate) fn steady_state_failure(err: Error) -> Error {
    Error::SteadyStateMapFailure(Box::new(err))
}
