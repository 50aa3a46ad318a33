//! Brute-force reference for [`solve_qp`](super::solve_qp), test use only.
//!
//! The feasible set is a polyhedron with at most two facets, so the projection
//! of `−d` lies on one of four faces: the whole space, either hyperplane, or
//! their intersection. Each face's affine hull is projected onto with an SVD
//! least-squares solve, and the closest *feasible* candidate wins. No
//! multipliers or dual-sign tests are involved.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::TwoConstraintQp;

const FEAS_TOL: f64 = 1e-9;

fn project_onto_face(p: &TwoConstraintQp, rows: &[(&DVector<f64>, f64)]) -> Option<DVector<f64>> {
    let point = -&p.d;
    if rows.is_empty() {
        return Some(point);
    }
    let m = p.dim();
    let mut a = DMatrix::zeros(rows.len(), m);
    let mut rhs = DVector::zeros(rows.len());
    for (i, (c, e)) in rows.iter().enumerate() {
        a.set_row(i, &c.transpose());
        rhs[i] = -e - c.dot(&point);
    }
    // minimum-norm correction δ with A δ = rhs
    let svd = a.svd(true, true);
    let delta = svd.solve(&rhs, 1e-13).ok()?;
    Some(point + delta)
}

/// The projection of `−d` onto the feasible set, or `None` when no face
/// candidate is feasible.
pub fn project(p: &TwoConstraintQp) -> Option<DVector<f64>> {
    let faces: [Vec<(&DVector<f64>, f64)>; 4] = [
        Vec::new(),
        alloc::vec![(&p.c1, p.e1)],
        alloc::vec![(&p.c2, p.e2)],
        alloc::vec![(&p.c1, p.e1), (&p.c2, p.e2)],
    ];
    faces
        .iter()
        .filter_map(|rows| project_onto_face(p, rows))
        .filter(|q| {
            let (g1, g2) = p.constraint_values(q);
            g1 >= -FEAS_TOL && g2 >= -FEAS_TOL
        })
        .min_by(|a, b| (a + &p.d).norm().total_cmp(&(b + &p.d).norm()))
}
