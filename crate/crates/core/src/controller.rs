//! The safe gradient flow and the steady-state-constrained baseline.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::hocbf::BarrierChain;
use crate::linalg::{sym2_eigenvalues, to_vec};
use crate::model::{effective_objective_gradient, steady_state, steady_state_failure, PlantModel, ProblemSpec, WarmStart};
use crate::qp::{solve_qp, QpResult, TwoConstraintQp};
use crate::{Error, Result};

/// Activity band used by the feasibility diagnostics.
pub const BOUNDARY_BAND: f64 = 1e-6;
/// Both constraints must be within this of zero for a CRCQ sample to count.
pub const CRCQ_BAND: f64 = 1e-3;
/// Smallest singular value below which the constraint rows count as dependent.
pub const CRCQ_FLAG: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ControllerParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl ControllerParams {
    pub fn new(epsilon: f64, alpha: f64, gamma: f64, beta: f64) -> Result<Self> {
        let p = ControllerParams { epsilon, alpha, gamma, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("alpha", self.alpha), ("gamma", self.gamma), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams { epsilon: 1.0, alpha: 5.0, gamma: 5.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDiagnostics {
    /// Value of the constrained barrier quantity: `h_r` for the safe gradient
    /// flow, `h(w(u))` for the baseline.
    pub h_r: f64,
    pub b: f64,
    /// `∂h_r/∂x · f(x, u)`; zero for the baseline.
    pub drift: f64,
    /// `‖(∂w/∂u)ᵀ ∇Φ(x)‖`.
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEvaluation {
    pub q: DVector<f64>,
    pub qp: QpResult,
    pub diagnostics: ControlDiagnostics,
}

/// Mutable state confined to one closed-loop run.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub warm: WarmStart,
}

impl RunContext {
    pub fn new() -> Self {
        Self::default()
    }
}

fn check_dims(plant: &PlantModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    if x.len() != plant.state_dim() || u.len() != plant.input_dim() {
        return Err(Error::Dimension(format!(
            "point is in R^{} x R^{}, plant expects R^{} x R^{}",
            x.len(),
            u.len(),
            plant.state_dim(),
            plant.input_dim()
        )));
    }
    Ok(())
}

fn solve_at(qp: &TwoConstraintQp, x: &DVector<f64>, u: &DVector<f64>) -> Result<QpResult> {
    solve_qp(qp).map_err(|err| match err {
        Error::QpInfeasible { certificate } => Error::Infeasible { certificate, x: to_vec(x), u: to_vec(u) },
        other => other,
    })
}

/// Safe gradient flow `u̇ = g(x, u)`.
pub fn sgf_rhs(
    plant: &PlantModel,
    spec: &ProblemSpec,
    chain: &BarrierChain,
    params: &ControllerParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<ControlEvaluation> {
    sgf_rhs_with(plant, spec, chain, params, x, u, &mut RunContext::default())
}

pub fn sgf_rhs_with(
    plant: &PlantModel,
    spec: &ProblemSpec,
    chain: &BarrierChain,
    params: &ControllerParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    ctx: &mut RunContext,
) -> Result<ControlEvaluation> {
    check_dims(plant, x, u)?;
    if chain.beta() != params.beta {
        return Err(Error::InvalidParameter(format!(
            "chain was built with beta = {}, controller uses {}",
            chain.beta(),
            params.beta
        )));
    }
    let ss = steady_state(plant, u, &mut ctx.warm).map_err(steady_state_failure)?;
    let reduced = ss.dwdu.transpose() * effective_objective_gradient(spec, x);
    let b = spec.b.value(u);
    let top = chain.partials(x, u);
    let qp = TwoConstraintQp::new(
        &reduced * params.epsilon,
        spec.b.gradient(u),
        params.alpha * b,
        top.dh_du,
        top.drift + params.gamma * top.value,
    )?;
    let result = solve_at(&qp, x, u)?;
    Ok(ControlEvaluation {
        q: result.q.clone(),
        qp: result,
        diagnostics: ControlDiagnostics { h_r: top.value, b, drift: top.drift, gradient_norm: reduced.norm() },
    })
}

/// Same QP with the barrier row replaced by the steady-state constraint
/// `h(w(u)) ≥ 0`, which only keeps the state safe asymptotically.
pub fn baseline_rhs(
    plant: &PlantModel,
    spec: &ProblemSpec,
    params: &ControllerParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<ControlEvaluation> {
    baseline_rhs_with(plant, spec, params, x, u, &mut RunContext::default())
}

pub fn baseline_rhs_with(
    plant: &PlantModel,
    spec: &ProblemSpec,
    params: &ControllerParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    ctx: &mut RunContext,
) -> Result<ControlEvaluation> {
    check_dims(plant, x, u)?;
    let ss = steady_state(plant, u, &mut ctx.warm).map_err(steady_state_failure)?;
    let reduced = ss.dwdu.transpose() * effective_objective_gradient(spec, x);
    let b = spec.b.value(u);
    let h_ss = spec.h.value(&ss.x);
    let qp = TwoConstraintQp::new(
        &reduced * params.epsilon,
        spec.b.gradient(u),
        params.alpha * b,
        ss.dwdu.transpose() * spec.h.gradient(&ss.x),
        params.gamma * h_ss,
    )?;
    let result = solve_at(&qp, x, u)?;
    Ok(ControlEvaluation {
        q: result.q.clone(),
        qp: result,
        diagnostics: ControlDiagnostics { h_r: h_ss, b, drift: 0.0, gradient_norm: reduced.norm() },
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeasibilityReport {
    pub samples: usize,
    /// Samples with `b` or `h_r` inside the activity band.
    pub boundary_samples: usize,
    pub satisfied: usize,
    /// `satisfied / boundary_samples`, or 1 when no sample touches a boundary.
    pub satisfaction_rate: f64,
    /// Smallest best-direction margin over boundary samples.
    pub worst_margin: f64,
    /// Boundary samples whose active constraint row has a vanishing input gradient.
    pub degenerate: Vec<usize>,
}

/// Probes whether some unit direction strictly increases every active
/// constraint, trying `±∇b` and `±∂h_r/∂u` as candidates.
pub fn check_prop1_conditions(
    _plant: &PlantModel,
    spec: &ProblemSpec,
    chain: &BarrierChain,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> FeasibilityReport {
    let mut boundary_samples = 0;
    let mut satisfied = 0;
    let mut worst_margin = f64::INFINITY;
    let mut degenerate = Vec::new();

    for (k, (x, u)) in samples.iter().enumerate() {
        let grad_b = spec.b.gradient(u);
        let top = chain.partials(x, u);
        let b_active = spec.b.value(u).abs() <= BOUNDARY_BAND;
        let h_active = top.value.abs() <= BOUNDARY_BAND;
        if !b_active && !h_active {
            continue;
        }
        boundary_samples += 1;
        if (b_active && grad_b.norm() <= crate::hocbf::ZERO_TOL) || (h_active && top.dh_du.norm() <= crate::hocbf::ZERO_TOL) {
            degenerate.push(k);
        }

        let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(4);
        for v in [&grad_b, &top.dh_du] {
            let norm = v.norm();
            if norm > 0.0 {
                candidates.push(v / norm);
                candidates.push(-v / norm);
            }
        }
        if candidates.is_empty() {
            candidates.push(DVector::zeros(u.len()));
        }
        let margin = candidates
            .iter()
            .map(|q| {
                let mut m = f64::INFINITY;
                if b_active {
                    m = m.min(grad_b.dot(q));
                }
                if h_active {
                    m = m.min(top.dh_du.dot(q) + top.drift);
                }
                m
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if margin > 0.0 {
            satisfied += 1;
        }
        worst_margin = worst_margin.min(margin);
    }

    FeasibilityReport {
        samples: samples.len(),
        boundary_samples,
        satisfied,
        satisfaction_rate: if boundary_samples == 0 { 1.0 } else { satisfied as f64 / boundary_samples as f64 },
        worst_margin,
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrcqReport {
    /// `(sample index, smallest singular value)` for samples on the joint boundary.
    pub singular_values: Vec<(usize, f64)>,
    pub skipped: usize,
    /// Samples whose smallest singular value falls below the flag threshold.
    pub flagged: Vec<usize>,
    pub min_singular_value: f64,
}

/// Smallest singular value of the `2 × m` matrix stacking `∇b(u)ᵀ` and `∂h_r/∂u`.
pub fn check_crcq_diagnostic(
    spec: &ProblemSpec,
    chain: &BarrierChain,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> CrcqReport {
    let mut singular_values = Vec::new();
    let mut skipped = 0;
    for (k, (x, u)) in samples.iter().enumerate() {
        let top = chain.partials(x, u);
        if spec.b.value(u).abs() > CRCQ_BAND || top.value.abs() > CRCQ_BAND {
            skipped += 1;
            continue;
        }
        let sigma = if u.len() < 2 {
            0.0
        } else {
            let a = spec.b.gradient(u);
            let c = &top.dh_du;
            let (lo, _) = sym2_eigenvalues(a.norm_squared(), a.dot(c), c.norm_squared());
            libm::sqrt(lo.max(0.0))
        };
        singular_values.push((k, sigma));
    }
    let flagged = singular_values.iter().filter(|(_, s)| *s < CRCQ_FLAG).map(|(k, _)| *k).collect();
    let min_singular_value = singular_values.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    CrcqReport { singular_values, skipped, flagged, min_singular_value }
}
