//! Closed-form solver for the controller's least-distance QP
//!
//! ```text
//! min ½‖q + d‖²   s.t.   c1ᵀq + e1 ≥ 0,   c2ᵀq + e2 ≥ 0
//! ```
//!
//! With two inequality rows the active set is enumerated exhaustively, so no
//! iterative tolerance enters the control loop.

use core::fmt;

use nalgebra::DVector;

use crate::linalg;
use crate::{Error, Result};

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

/// Constraint values within this band of zero count as satisfied.
pub const BOUNDARY_TIE: f64 = 1e-12;
/// Relative eigenvalue cutoff for the 2×2 Gram pseudo-inverse.
pub const GRAM_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoConstraintQp {
    pub d: DVector<f64>,
    /// Input-constraint row.
    pub c1: DVector<f64>,
    pub e1: f64,
    /// Barrier row.
    pub c2: DVector<f64>,
    pub e2: f64,
}

impl TwoConstraintQp {
    pub fn new(d: DVector<f64>, c1: DVector<f64>, e1: f64, c2: DVector<f64>, e2: f64) -> Result<Self> {
        let m = d.len();
        if m == 0 || c1.len() != m || c2.len() != m {
            return Err(Error::Dimension(alloc::format!(
                "QP rows must match the decision dimension {m} (got {} and {})",
                c1.len(),
                c2.len()
            )));
        }
        let finite = d.iter().chain(c1.iter()).chain(c2.iter()).all(|v| v.is_finite());
        if !finite || !e1.is_finite() || !e2.is_finite() {
            return Err(Error::InvalidParameter("QP data must be finite".into()));
        }
        Ok(TwoConstraintQp { d, c1, e1, c2, e2 })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// `(c1ᵀq + e1, c2ᵀq + e2)`.
    pub fn constraint_values(&self, q: &DVector<f64>) -> (f64, f64) {
        (self.c1.dot(q) + self.e1, self.c2.dot(q) + self.e2)
    }

    fn tie(&self, c: &DVector<f64>, e: f64, q: &DVector<f64>) -> f64 {
        BOUNDARY_TIE * (1.0 + e.abs() + c.norm() * q.norm())
    }

    fn feasible(&self, q: &DVector<f64>) -> bool {
        let (g1, g2) = self.constraint_values(q);
        g1 >= -self.tie(&self.c1, self.e1, q) && g2 >= -self.tie(&self.c2, self.e2, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ActiveSet {
    None,
    Input,
    Barrier,
    Both,
}

impl ActiveSet {
    /// Bitmask with 1 for the input row and 2 for the barrier row.
    pub fn bits(self) -> u8 {
        match self {
            ActiveSet::None => 0,
            ActiveSet::Input => 1,
            ActiveSet::Barrier => 2,
            ActiveSet::Both => 3,
        }
    }

    pub fn contains_input(self) -> bool {
        matches!(self, ActiveSet::Input | ActiveSet::Both)
    }

    pub fn contains_barrier(self) -> bool {
        matches!(self, ActiveSet::Barrier | ActiveSet::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum QpStatus {
    Optimal,
    /// Both rows active and linearly dependent; multipliers are least-norm.
    DegenerateActive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpResult {
    pub q: DVector<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub active: ActiveSet,
    pub status: QpStatus,
}

/// Farkas certificate: `w1·c1 + w2·c2 = 0` with `w ≥ 0` and `w1·e1 + w2·e2 < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InfeasibilityCertificate {
    pub weights: [f64; 2],
    /// `w1·e1 + w2·e2`, negative for a valid certificate.
    pub aggregated_offset: f64,
    /// `‖w1·c1 + w2·c2‖`, zero up to rounding.
    pub aggregated_row_norm: f64,
}

impl fmt::Display for InfeasibilityCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.3e}·row1 + {:.3e}·row2 gives {:.3e} ≥ 0 with |row| = {:.1e}",
            self.weights[0], self.weights[1], self.aggregated_offset, self.aggregated_row_norm
        )
    }
}

pub fn solve_qp(qp: &TwoConstraintQp) -> Result<QpResult> {
    let d = &qp.d;
    let q0 = -d;
    if qp.feasible(&q0) {
        return Ok(QpResult { q: q0, lambda1: 0.0, lambda2: 0.0, active: ActiveSet::None, status: QpStatus::Optimal });
    }

    let n1 = qp.c1.norm_squared();
    let n2 = qp.c2.norm_squared();
    let scale = n1.max(n2);

    for (row, c, e, norm2) in [(1, &qp.c1, qp.e1, n1), (2, &qp.c2, qp.e2, n2)] {
        if norm2 <= GRAM_CUTOFF * scale || norm2 == 0.0 {
            continue;
        }
        // projection of −d onto the hyperplane cᵀq + e = 0
        let num = c.dot(d) - e;
        if num < -BOUNDARY_TIE * (1.0 + e.abs() + libm::sqrt(norm2) * d.norm()) {
            continue;
        }
        let lambda = (num / norm2).max(0.0);
        let q = c * lambda - d;
        if qp.feasible(&q) {
            let (lambda1, lambda2, active) =
                if row == 1 { (lambda, 0.0, ActiveSet::Input) } else { (0.0, lambda, ActiveSet::Barrier) };
            return Ok(QpResult { q, lambda1, lambda2, active, status: QpStatus::Optimal });
        }
    }

    if let Some(res) = solve_both_active(qp, n1, n2) {
        return Ok(res);
    }
    Err(Error::QpInfeasible { certificate: certificate(qp) })
}

fn solve_both_active(qp: &TwoConstraintQp, n1: f64, n2: f64) -> Option<QpResult> {
    let d = &qp.d;
    let g12 = qp.c1.dot(&qp.c2);
    let r1 = qp.c1.dot(d) - qp.e1;
    let r2 = qp.c2.dot(d) - qp.e2;
    let (lo, hi) = linalg::sym2_eigenvalues(n1, g12, n2);
    if hi <= 0.0 {
        return None;
    }
    let tol = BOUNDARY_TIE * (1.0 + d.norm());

    if lo > GRAM_CUTOFF * hi {
        // QR of [c1 c2]: the Gram system RᵀR λ = r is solved through R so that
        // nearly parallel rows do not lose accuracy in the determinant.
        let (ca, cb, ra, rb, swapped) =
            if n1 >= n2 { (&qp.c1, &qp.c2, r1, r2, false) } else { (&qp.c2, &qp.c1, r2, r1, true) };
        let na = libm::sqrt(ca.norm_squared());
        let ua = ca / na;
        let proj = ua.dot(cb);
        let w = cb - &ua * proj;
        let nw = w.norm();
        if nw == 0.0 {
            return None;
        }
        let ub = &w / nw;
        // Rᵀz = r, then R λ = z; the step Cᵀλ equals ua·za + ub·zb.
        let solve = |ra: f64, rb: f64| {
            let za = ra / na;
            let zb = (rb - proj * za) / nw;
            let lb = zb / nw;
            (za, zb, (za - proj * lb) / na, lb)
        };
        let (za, zb, mut la, mut lb) = solve(ra, rb);
        let mut q = &ua * za + &ub * zb - d;
        // one refinement pass on the hyperplane residuals
        let ga = ca.dot(&q) + if swapped { qp.e2 } else { qp.e1 };
        let gb = cb.dot(&q) + if swapped { qp.e1 } else { qp.e2 };
        let (dza, dzb, dla, dlb) = solve(-ga, -gb);
        q += &ua * dza + &ub * dzb;
        la += dla;
        lb += dlb;
        let (l1, l2) = if swapped { (lb, la) } else { (la, lb) };
        let dual_ok = l1 * libm::sqrt(n1) >= -tol && l2 * libm::sqrt(n2) >= -tol;
        if !dual_ok {
            return None;
        }
        return qp.feasible(&q).then_some(QpResult {
            q,
            lambda1: l1.max(0.0),
            lambda2: l2.max(0.0),
            active: ActiveSet::Both,
            status: QpStatus::Optimal,
        });
    }

    // Rank one: c_i = k_i·v for a unit vector v. The least-norm pseudo-inverse
    // solution only fixes s = k1·λ1 + k2·λ2; split it into nonnegative parts.
    let (v, _) = if n1 >= n2 { (&qp.c1 / libm::sqrt(n1), n1) } else { (&qp.c2 / libm::sqrt(n2), n2) };
    let k1 = qp.c1.dot(&v);
    let k2 = qp.c2.dot(&v);
    let kk = k1 * k1 + k2 * k2;
    let s = (k1 * r1 + k2 * r2) / kk;
    let q = &v * s - d;
    if !qp.feasible(&q) {
        return None;
    }
    let (l1, l2) = if k1 * k2 >= 0.0 {
        let t = s / kk;
        (t * k1, t * k2)
    } else if s * k1 >= 0.0 {
        (s / k1, 0.0)
    } else {
        (0.0, s / k2)
    };
    if l1 < -tol || l2 < -tol {
        return None;
    }
    Some(QpResult {
        q,
        lambda1: l1.max(0.0),
        lambda2: l2.max(0.0),
        active: ActiveSet::Both,
        status: QpStatus::DegenerateActive,
    })
}

fn certificate(qp: &TwoConstraintQp) -> InfeasibilityCertificate {
    let build = |w1: f64, w2: f64| InfeasibilityCertificate {
        weights: [w1, w2],
        aggregated_offset: w1 * qp.e1 + w2 * qp.e2,
        aggregated_row_norm: (&qp.c1 * w1 + &qp.c2 * w2).norm(),
    };
    let n1 = qp.c1.norm();
    let n2 = qp.c2.norm();
    if qp.e1 < 0.0 && n1 <= GRAM_CUTOFF * n2.max(1.0) {
        return build(1.0, 0.0);
    }
    if qp.e2 < 0.0 && n2 <= GRAM_CUTOFF * n1.max(1.0) {
        return build(0.0, 1.0);
    }
    // opposed rows: w1 = ‖c2‖, w2 = ‖c1‖ cancels c1 and c2 = −k·c1
    build(n2, n1)
}

/// Largest violation among stationarity, primal feasibility, dual feasibility
/// and complementary slackness.
pub fn qp_kkt_residual(qp: &TwoConstraintQp, result: &QpResult) -> f64 {
    let stationarity = (&result.q + &qp.d - &qp.c1 * result.lambda1 - &qp.c2 * result.lambda2).norm();
    let (g1, g2) = qp.constraint_values(&result.q);
    [
        stationarity,
        (-g1).max(0.0),
        (-g2).max(0.0),
        (-result.lambda1).max(0.0),
        (-result.lambda2).max(0.0),
        (result.lambda1 * g1).abs(),
        (result.lambda2 * g2).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
