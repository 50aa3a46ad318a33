//! High-order barrier chain.
//!
//! ```text
//! h₀(x, u) = h(x)
//! hᵢ(x, u) = ∂hᵢ₋₁/∂x (x, u) · f(x, u) + β hᵢ₋₁(x, u)
//! ```
//!
//! For a linear plant and a quadratic `h` every level is again a quadratic in
//! the stacked point `z = (x, u)`, so the chain is carried exactly. Anything
//! else is evaluated with nested central differences.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, symmetrize};
use crate::model::{PlantModel, ProblemSpec, Quadratic, ScalarField};
use crate::{Error, Result};

/// Relative step of the finite-difference backend, per differentiation level.
pub const FD_CHAIN_STEP: f64 = 1e-5;
/// Deepest chain the finite-difference backend will build.
pub const FD_MAX_DEGREE: usize = 3;
/// `‖∂hᵢ/∂u‖` at or below this counts as zero when detecting the relative degree.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainBackend {
    AnalyticLinearChain,
    FiniteDifferenceChain { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendRequest {
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
}

/// Value and partial derivatives of one chain level at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPartials {
    pub value: f64,
    pub dh_dx: DVector<f64>,
    pub dh_du: DVector<f64>,
    /// `∂h/∂x · f(x, u)`.
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct BarrierChain {
    beta: f64,
    r: usize,
    backend: ChainBackend,
    plant: PlantModel,
    h: Arc<dyn ScalarField>,
    /// `h₀ … h_r` as quadratics in `z = (x, u)`; analytic backend only.
    levels: Vec<Quadratic>,
}

pub fn build_chain(plant: &PlantModel, spec: &ProblemSpec, beta: f64, r: usize) -> Result<BarrierChain> {
    build_chain_with(plant, spec, beta, r, BackendRequest::Auto)
}

pub fn build_chain_with(
    plant: &PlantModel,
    spec: &ProblemSpec,
    beta: f64,
    r: usize,
    request: BackendRequest,
) -> Result<BarrierChain> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive and finite, got {beta}")));
    }
    if r == 0 {
        return Err(Error::InvalidParameter("relative degree must be at least 1".into()));
    }
    spec.check_plant(plant)?;

    let analytic = match (plant.linear_parts(), spec.h.as_quadratic()) {
        (Some((a, b)), Some(hq)) => Some(analytic_levels(a, b, &hq, beta, r)),
        _ => None,
    };
    let (backend, levels) = match (request, analytic) {
        (BackendRequest::Analytic, None) => return Err(Error::UnsupportedAnalytic),
        (BackendRequest::Auto | BackendRequest::Analytic, Some(levels)) => (ChainBackend::AnalyticLinearChain, levels),
        (BackendRequest::Auto | BackendRequest::FiniteDifference, _) => {
            if r > FD_MAX_DEGREE {
                return Err(Error::InvalidParameter(format!(
                    "finite-difference chain is capped at relative degree {FD_MAX_DEGREE}, got {r}"
                )));
            }
            (ChainBackend::FiniteDifferenceChain { step: FD_CHAIN_STEP }, Vec::new())
        }
    };
    Ok(BarrierChain { beta, r, backend, plant: plant.clone(), h: spec.h.clone(), levels })
}

fn analytic_levels(a: &DMatrix<f64>, b: &DMatrix<f64>, h: &Quadratic, beta: f64, r: usize) -> Vec<Quadratic> {
    let n = a.nrows();
    let m = b.ncols();
    let dim = n + m;
    // f = F z with F = [A B]
    let mut f = DMatrix::zeros(n, dim);
    f.view_mut((0, 0), (n, n)).copy_from(a);
    f.view_mut((0, n), (n, m)).copy_from(b);

    let mut linear = DVector::zeros(dim);
    linear.rows_mut(0, n).copy_from(&h.linear);
    let mut matrix = DMatrix::zeros(dim, dim);
    matrix.view_mut((0, 0), (n, n)).copy_from(&symmetrize(&h.matrix));
    let mut levels = alloc::vec![Quadratic { constant: h.constant, linear, matrix }];

    for _ in 0..r {
        let prev = levels.last().unwrap();
        // ∇ₓhᵢ₋₁ = gₓ + 2 Qₓ z, so ∇ₓhᵢ₋₁ · F z = gₓᵀF z + 2 zᵀQₓᵀF z
        let g_x = prev.linear.rows(0, n).into_owned();
        let q_x = prev.matrix.rows(0, n).into_owned();
        let lie_linear = f.transpose() * &g_x;
        let lie_matrix = symmetrize(&(q_x.transpose() * &f * 2.0));
        levels.push(Quadratic {
            constant: beta * prev.constant,
            linear: lie_linear + &prev.linear * beta,
            matrix: lie_matrix + &prev.matrix * beta,
        });
    }
    levels
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

impl BarrierChain {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn relative_degree(&self) -> usize {
        self.r
    }

    pub fn backend(&self) -> ChainBackend {
        self.backend
    }

    /// The quadratic form of level `i` over `z = (x, u)`, analytic backend only.
    pub fn level_form(&self, i: usize) -> Option<&Quadratic> {
        self.levels.get(i)
    }

    /// `hᵢ(x, u)` for `i ≤ r`.
    pub fn level(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        assert!(i <= self.r, "chain level {i} beyond relative degree {}", self.r);
        match self.backend {
            ChainBackend::AnalyticLinearChain => self.levels[i].value(&stack(x, u)),
            ChainBackend::FiniteDifferenceChain { step } => self.fd_level(i, x, u, step),
        }
    }

    /// `(h₀(x, u), …, h_r(x, u))`.
    pub fn eval_chain(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<f64> {
        match self.backend {
            ChainBackend::AnalyticLinearChain => {
                let z = stack(x, u);
                self.levels.iter().map(|q| q.value(&z)).collect()
            }
            ChainBackend::FiniteDifferenceChain { step } => (0..=self.r).map(|i| self.fd_level(i, x, u, step)).collect(),
        }
    }

    fn fd_level(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>, step: f64) -> f64 {
        if i == 0 {
            return self.h.value(x);
        }
        let grad = self.fd_grad_x(i - 1, x, u, step);
        grad.dot(&self.plant.f(x, u)) + self.beta * self.fd_level(i - 1, x, u, step)
    }

    fn fd_grad_x(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>, step: f64) -> DVector<f64> {
        if i == 0 {
            return self.h.gradient(x);
        }
        let scale = 1.0 + linalg::inf_norm(x).max(linalg::inf_norm(u));
        central(|xp| self.fd_level(i, xp, u, step), x, step * scale)
    }

    /// Value, partials and drift of level `i`.
    pub fn level_partials(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> ChainPartials {
        assert!(i <= self.r, "chain level {i} beyond relative degree {}", self.r);
        let f = self.plant.f(x, u);
        let (value, dh_dx, dh_du) = match self.backend {
            ChainBackend::AnalyticLinearChain => {
                let n = x.len();
                let z = stack(x, u);
                let form = &self.levels[i];
                let grad = form.gradient(&z);
                (form.value(&z), grad.rows(0, n).into_owned(), grad.rows(n, u.len()).into_owned())
            }
            ChainBackend::FiniteDifferenceChain { step } => {
                let scale = 1.0 + linalg::inf_norm(x).max(linalg::inf_norm(u));
                let h = step * scale;
                (
                    self.fd_level(i, x, u, step),
                    central(|xp| self.fd_level(i, xp, u, step), x, h),
                    central(|up| self.fd_level(i, x, up, step), u, h),
                )
            }
        };
        let drift = dh_dx.dot(&f);
        ChainPartials { value, dh_dx, dh_du, drift }
    }

    /// Partials of the top level `h_r`, as used by the controller's barrier row.
    pub fn partials(&self, x: &DVector<f64>, u: &DVector<f64>) -> ChainPartials {
        self.level_partials(self.r, x, u)
    }

    /// `‖∂hᵢ/∂u‖` assuming the lower levels do not depend on `u`, in which case
    /// `∂hᵢ/∂u = (∂f/∂u)ᵀ ∇ₓhᵢ₋₁`.
    fn input_sensitivity(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        match self.backend {
            ChainBackend::AnalyticLinearChain => self.level_partials(i, x, u).dh_du.norm(),
            ChainBackend::FiniteDifferenceChain { step } => {
                if i == 0 {
                    return 0.0;
                }
                let grad = self.fd_grad_x(i - 1, x, u, step);
                (self.plant.dfdu(x, u).transpose() * grad).norm()
            }
        }
    }
}

fn central<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |k, _| {
        let xk = x[k];
        probe[k] = xk + h;
        let fp = f(&probe);
        probe[k] = xk - h;
        let fm = f(&probe);
        probe[k] = xk;
        (fp - fm) / (2.0 * h)
    })
}

/// `(∂h_r/∂x, ∂h_r/∂u, ∂h_r/∂x · f)` at `(x, u)`.
pub fn chain_partials(chain: &BarrierChain, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let p = chain.partials(x, u);
    (p.dh_dx, p.dh_du, p.drift)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDegree {
    pub r: usize,
    /// Sample indices where `∂h_r/∂u` vanishes.
    pub degenerate: Vec<usize>,
}

/// Smallest `r ≤ r_max` at which the input shows up in the chain.
///
/// Level `r` must depend on `u` at a strict majority of samples; samples where
/// it does not are reported as degenerate instead of failing the detection,
/// since `∂h_r/∂u` may vanish on a measure-zero set.
pub fn detect_relative_degree(
    plant: &PlantModel,
    spec: &ProblemSpec,
    beta: f64,
    r_max: usize,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<RelativeDegree> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("relative-degree detection needs at least one sample".into()));
    }
    let chain = build_chain(plant, spec, beta, r_max)?;
    for level in 1..=r_max {
        // Each extra finite-difference nesting costs about five digits.
        let tol = match chain.backend {
            ChainBackend::AnalyticLinearChain => ZERO_TOL,
            ChainBackend::FiniteDifferenceChain { .. } => ZERO_TOL * libm::pow(1e5, (level - 1) as f64),
        };
        let vanishing: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, (x, u))| chain.input_sensitivity(level, x, u) <= tol)
            .map(|(k, _)| k)
            .collect();
        let nonzero = samples.len() - vanishing.len();
        if nonzero == 0 {
            continue;
        }
        if 2 * nonzero > samples.len() {
            return Ok(RelativeDegree { r: level, degenerate: vanishing });
        }
        return Err(Error::AmbiguousRelativeDegree { level, nonzero, total: samples.len() });
    }
    Err(Error::NoRelativeDegree(r_max))
}
