//! Steady-state optimality analysis: KKT residuals of the reduced problem,
//! equilibrium classification and regularization.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::controller::{sgf_rhs, ControllerParams};
use crate::hocbf::BarrierChain;
use crate::linalg::{angle_between, to_vec};
use crate::model::{
    effective_objective_gradient, steady_state, steady_state_failure, PlantModel, ProblemSpec, Regularization,
    WarmStart,
};
use crate::{Error, Result};

/// Constraints within this of zero may carry a multiplier.
pub const ACTIVITY_BAND: f64 = 1e-6;
/// Stationarity tolerance for `is_kkt`, sized for points quoted to two decimals.
pub const KKT_TOL: f64 = 1e-4;
/// Both `‖f‖` and `‖q‖` must be below this for a point to count as an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-7;
/// Largest angle, in radians, between `v` and `Jv` accepted as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Feasibility {
    pub h: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KktReport {
    pub point: Point,
    /// `‖x − w(u)‖`.
    pub steady_state_residual: f64,
    pub stationarity_residual: f64,
    pub lambda_h: f64,
    pub lambda_b: f64,
    /// `h(w(u))` and `b(u)`.
    pub feasibility: Feasibility,
    pub is_kkt: bool,
}

fn least_squares(cols: &[&DVector<f64>], rhs: &DVector<f64>) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let mat = DMatrix::from_columns(&cols.iter().map(|c| (*c).clone()).collect::<Vec<_>>());
    let svd = mat.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    match svd.solve(rhs, tol) {
        Ok(sol) => to_vec(&sol),
        Err(_) => alloc::vec![0.0; cols.len()],
    }
}

/// KKT residual of the reduced problem `min Φ(w(u))` s.t. `h(w(u)) ≥ 0`, `b(u) ≥ 0`.
pub fn kkt_residual(plant: &PlantModel, spec: &ProblemSpec, u: &DVector<f64>) -> Result<KktReport> {
    kkt_residual_with(plant, spec, None, u, KKT_TOL)
}

/// Same as [`kkt_residual`] but also reports how far `x` is from `w(u)`.
pub fn kkt_residual_at(plant: &PlantModel, spec: &ProblemSpec, x: &DVector<f64>, u: &DVector<f64>) -> Result<KktReport> {
    kkt_residual_with(plant, spec, Some(x), u, KKT_TOL)
}

pub fn kkt_residual_with(
    plant: &PlantModel,
    spec: &ProblemSpec,
    x: Option<&DVector<f64>>,
    u: &DVector<f64>,
    tol: f64,
) -> Result<KktReport> {
    spec.check_plant(plant)?;
    let mut warm = x.map(|x| WarmStart::from_state(x.clone())).unwrap_or_default();
    let ss = steady_state(plant, u, &mut warm).map_err(steady_state_failure)?;
    let w = &ss.x;
    let g_phi = ss.dwdu.transpose() * effective_objective_gradient(spec, w);
    let g_h = ss.dwdu.transpose() * spec.h.gradient(w);
    let g_b = spec.b.gradient(u);
    let h = spec.h.value(w);
    let b = spec.b.value(u);

    let feasible = h >= -ACTIVITY_BAND && b >= -ACTIVITY_BAND;
    let h_active = h.abs() <= ACTIVITY_BAND;
    let b_active = b.abs() <= ACTIVITY_BAND;

    // (residual, λ_h, λ_b) for the best admissible active-set hypothesis
    let mut best = (g_phi.norm(), 0.0, 0.0);
    for (use_h, use_b) in [(true, false), (false, true), (true, true)] {
        if (use_h && !h_active) || (use_b && !b_active) {
            continue;
        }
        let mut cols = Vec::new();
        if use_h {
            cols.push(&g_h);
        }
        if use_b {
            cols.push(&g_b);
        }
        let lam = least_squares(&cols, &g_phi);
        if lam.iter().any(|&l| l < 0.0) {
            continue;
        }
        let mut it = lam.into_iter();
        let lambda_h = if use_h { it.next().unwrap() } else { 0.0 };
        let lambda_b = if use_b { it.next().unwrap() } else { 0.0 };
        let residual = (&g_phi - &g_h * lambda_h - &g_b * lambda_b).norm();
        if residual < best.0 {
            best = (residual, lambda_h, lambda_b);
        }
    }

    let steady_state_residual = x.map_or(0.0, |x| (x - w).norm());
    let (stationarity_residual, lambda_h, lambda_b) = best;
    Ok(KktReport {
        point: Point { x: to_vec(x.unwrap_or(w)), u: to_vec(u) },
        steady_state_residual,
        stationarity_residual,
        lambda_h,
        lambda_b,
        feasibility: Feasibility { h, b },
        is_kkt: feasible && stationarity_residual <= tol && steady_state_residual <= tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenTest {
    /// All candidate vectors are eigenvectors sharing one eigenvalue.
    pub is_eigenvector: bool,
    /// Rayleigh quotient of the (first) candidate vector.
    pub eigenvalue: f64,
    pub e_pow_r_negative: bool,
    /// Largest deviation from collinearity over the candidate vectors, radians.
    pub angle: f64,
}

impl EigenTest {
    pub fn holds(&self) -> bool {
        self.is_eigenvector && self.e_pow_r_negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivalenceReport {
    /// `h(x) > 0`.
    pub condition1: bool,
    /// `∇h(x)` as a right eigenvector of `∂f/∂x`.
    pub condition2: EigenTest,
    /// Columns of `∂w/∂u` as left eigenvectors of `∂f/∂x`.
    pub condition3: EigenTest,
    pub any_condition_holds: bool,
}

fn eigen_test(jac: &DMatrix<f64>, vectors: &[DVector<f64>], r: usize) -> EigenTest {
    let mut angle: f64 = 0.0;
    let mut eigenvalues = Vec::new();
    let mut degenerate = vectors.is_empty();
    for v in vectors {
        let nv = v.norm_squared();
        if nv == 0.0 {
            degenerate = true;
            continue;
        }
        let image = jac * v;
        let e = v.dot(&image) / nv;
        eigenvalues.push(e);
        // a zero image is an eigenvector with eigenvalue zero
        let a = angle_between(v, &image).map_or(0.0, |a| a.min(core::f64::consts::PI - a));
        angle = angle.max(a);
    }
    let eigenvalue = eigenvalues.first().copied().unwrap_or(f64::NAN);
    let shared = eigenvalues.iter().all(|e| (e - eigenvalue).abs() <= COLLINEARITY_TOL * (1.0 + eigenvalue.abs()));
    let is_eigenvector = !degenerate && shared && angle < COLLINEARITY_TOL;
    EigenTest {
        is_eigenvector,
        eigenvalue,
        e_pow_r_negative: libm::pow(eigenvalue, r as f64) < 0.0,
        angle,
    }
}

/// Checks the three sufficient conditions under which equilibria and critical
/// points coincide.
pub fn equivalence_conditions(
    plant: &PlantModel,
    spec: &ProblemSpec,
    r: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<EquivalenceReport> {
    let jac = plant.dfdx(x, u);
    let ss = steady_state(plant, u, &mut WarmStart::from_state(x.clone())).map_err(steady_state_failure)?;
    let condition1 = spec.h.value(x) > 0.0;
    let condition2 = eigen_test(&jac, &[spec.h.gradient(x)], r);
    let columns: Vec<DVector<f64>> = ss.dwdu.column_iter().map(|c| c.into_owned()).collect();
    let condition3 = eigen_test(&jac.transpose(), &columns, r);
    Ok(EquivalenceReport {
        condition1,
        condition2,
        condition3,
        any_condition_holds: condition1 || condition2.holds() || condition3.holds(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Classification {
    pub is_equilibrium: bool,
    pub f_norm: f64,
    /// `None` when the controller QP could not be solved at the point.
    pub q_norm: Option<f64>,
    pub equivalence: EquivalenceReport,
    pub kkt: KktReport,
}

pub fn classify_equilibrium(
    plant: &PlantModel,
    spec: &ProblemSpec,
    chain: &BarrierChain,
    params: &ControllerParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<Classification> {
    let f_norm = plant.f(x, u).norm();
    let q_norm = sgf_rhs(plant, spec, chain, params, x, u).ok().map(|e| e.q.norm());
    let is_equilibrium = f_norm <= EQUILIBRIUM_TOL && q_norm.is_some_and(|q| q <= EQUILIBRIUM_TOL);
    Ok(Classification {
        is_equilibrium,
        f_norm,
        q_norm,
        equivalence: equivalence_conditions(plant, spec, chain.relative_degree(), x, u)?,
        kkt: kkt_residual_at(plant, spec, x, u)?,
    })
}

/// Adds the penalty `p (margin − h(x))²` to the objective; constraints are unchanged.
pub fn regularize(spec: &ProblemSpec, p: f64, margin: f64) -> Result<ProblemSpec> {
    if !(p > 0.0 && p.is_finite() && margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "regularization needs positive p and margin, got p = {p}, margin = {margin}"
        )));
    }
    Ok(spec.with_regularization(Some(Regularization { p, margin })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hocbf::build_chain;
    use crate::linalg::{central_gradient, central_jacobian};
    use crate::model::{make_linear_plant, Quadratic};
    use alloc::sync::Arc;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn spurious() -> (PlantModel, ProblemSpec) {
        let plant = make_linear_plant(DMatrix::from_diagonal(&dv(&[-2.0, -4.0])), DMatrix::identity(2, 2)).unwrap();
        let h = Quadratic::new(1.0, dv(&[-1.0, -1.0]), DMatrix::zeros(2, 2)).unwrap();
        let b = Quadratic::new(25.0, dv(&[0.0, 0.0]), -DMatrix::identity(2, 2)).unwrap();
        let spec =
            ProblemSpec::new(Arc::new(Quadratic::squared_distance(&dv(&[2.0, 2.0]), 1.0)), Arc::new(h), Arc::new(b))
                .unwrap();
        (plant, spec)
    }

    #[test]
    fn boundary_kkt_point_multiplier() {
        let (plant, spec) = spurious();
        let rep = kkt_residual(&plant, &spec, &dv(&[1.0, 2.0])).unwrap();
        assert_eq!(rep.point.x, alloc::vec![0.5, 0.5]);
        assert!(rep.is_kkt);
        assert!(rep.stationarity_residual <= 1e-9);
        assert!((rep.lambda_h - 3.0).abs() <= 1e-9);
        assert_eq!(rep.lambda_b, 0.0);
    }

    #[test]
    fn spurious_point_is_not_kkt() {
        let (plant, spec) = spurious();
        let rep = kkt_residual(&plant, &spec, &dv(&[2.0, 0.0])).unwrap();
        assert!(!rep.is_kkt);
        // best fit λ = 2.4 leaves (−1, −1) − 2.4·(−0.5, −0.25) = (0.2, −0.4)
        assert!((rep.stationarity_residual - libm::sqrt(0.2)).abs() < 1e-12);
        assert!((rep.lambda_h - 2.4).abs() < 1e-12);
    }

    #[test]
    fn spurious_equilibrium_classified() {
        let (plant, spec) = spurious();
        let chain = build_chain(&plant, &spec, 1.0, 1).unwrap();
        let c = classify_equilibrium(&plant, &spec, &chain, &ControllerParams::default(), &dv(&[1.0, 0.0]), &dv(&[2.0, 0.0]))
            .unwrap();
        assert!(c.is_equilibrium);
        assert!(!c.equivalence.condition1);
        assert!(!c.equivalence.condition2.holds());
        assert!(!c.equivalence.condition3.holds());
        assert!(!c.equivalence.any_condition_holds);
        assert!(!c.kkt.is_kkt);

        let c = classify_equilibrium(&plant, &spec, &chain, &ControllerParams::default(), &dv(&[0.3, 0.1]), &dv(&[2.0, 0.0]))
            .unwrap();
        assert!(!c.is_equilibrium);
    }

    #[test]
    fn eigenvector_conditions_on_symmetric_plant() {
        // A = −I: every vector is an eigenvector with e = −1
        let plant = make_linear_plant(-DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let (_, spec) = spurious();
        let rep = equivalence_conditions(&plant, &spec, 1, &dv(&[1.0, 0.0]), &dv(&[1.0, 0.0])).unwrap();
        assert!(rep.condition2.holds() && rep.condition3.holds());
        assert!((rep.condition2.eigenvalue + 1.0).abs() < 1e-15);
        // even relative degree flips the sign test
        let rep = equivalence_conditions(&plant, &spec, 2, &dv(&[1.0, 0.0]), &dv(&[1.0, 0.0])).unwrap();
        assert!(rep.condition2.is_eigenvector && !rep.condition2.holds());
    }

    #[test]
    fn regularization_changes_only_objective() {
        let (plant, spec) = spurious();
        let reg = regularize(&spec, 2.0, 0.8).unwrap();
        assert!(spec.regularization.is_none());
        assert!(Arc::ptr_eq(&reg.h, &spec.h) && Arc::ptr_eq(&reg.b, &spec.b));
        assert!(regularize(&spec, 0.0, 0.8).is_err());
        assert!(regularize(&spec, 1.0, -0.1).is_err());

        // the regularized interior optimum u = (0.96, 1.92) is an unconstrained
        // critical point of the reduced problem
        let rep = kkt_residual(&plant, &reg, &dv(&[0.96, 1.92])).unwrap();
        assert!(rep.is_kkt && rep.stationarity_residual < 1e-12);
        assert!((rep.feasibility.h - 0.04).abs() < 1e-12);
    }

    #[test]
    fn penalty_vanishes_as_p_shrinks() {
        let (_, spec) = spurious();
        let x = dv(&[0.3, -0.7]);
        let base = spec.phi.gradient(&x);
        for p in [1e-2, 1e-4, 1e-8] {
            let reg = regularize(&spec, p, 0.5).unwrap();
            assert!((effective_objective_gradient(&reg, &x) - &base).norm() <= 10.0 * p);
        }
    }

    #[test]
    fn polishing_reduces_residual() {
        // Newton on ∇(Φ∘w)(u) = 0 from a rounded interior optimum
        let (plant, spec) = spurious();
        let reg = regularize(&spec, 2.0, 0.8).unwrap();
        let reduced = |u: &DVector<f64>| {
            let ss = steady_state(&plant, u, &mut WarmStart::default()).unwrap();
            ss.dwdu.transpose() * effective_objective_gradient(&reg, &ss.x)
        };
        let mut u = dv(&[0.97, 1.9]);
        let before = kkt_residual(&plant, &reg, &u).unwrap().stationarity_residual;
        let hess = central_jacobian(reduced, &u, 1e-6);
        u -= hess.lu().solve(&reduced(&u)).unwrap();
        let after = kkt_residual(&plant, &reg, &u).unwrap().stationarity_residual;
        assert!(after < before * 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn regularized_gradient_matches_finite_differences(
            x0 in -3.0..3.0f64, x1 in -3.0..3.0f64, p in 0.1..5.0f64, margin in 0.05..2.0f64,
        ) {
            let (_, spec) = spurious();
            let reg = regularize(&spec, p, margin).unwrap();
            let x = dv(&[x0, x1]);
            let fd = central_gradient(|v| reg.effective_objective(v), &x, 1e-6);
            let exact = effective_objective_gradient(&reg, &x);
            prop_assert!((&fd - &exact).norm() <= 1e-5 * (1.0 + exact.norm()));
        }

        #[test]
        fn kkt_report_complementarity(u0 in -4.0..4.0f64, u1 in -4.0..4.0f64) {
            let (plant, spec) = spurious();
            let rep = kkt_residual(&plant, &spec, &dv(&[u0, u1])).unwrap();
            prop_assert!(rep.lambda_h >= 0.0 && rep.lambda_b >= 0.0);
            if rep.is_kkt {
                prop_assert!(rep.lambda_h * rep.feasibility.h.abs() <= 1e-5);
                prop_assert!(rep.lambda_b * rep.feasibility.b.abs() <= 1e-5);
            }
        }
    }
}
