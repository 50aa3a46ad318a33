//! Small dense helpers shared by the model, chain and analysis code.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Relative step factor for first-order central differences.
pub const FD_REL_STEP: f64 = 1e-6;

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Central-difference step `rel · (1 + ‖point‖∞)`.
pub fn scaled_step(rel: f64, point: &DVector<f64>) -> f64 {
    rel * (1.0 + inf_norm(point))
}

pub fn central_gradient<F>(f: F, x: &DVector<f64>, rel: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = scaled_step(rel, x);
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = f(&probe);
        probe[i] = xi - h;
        let fm = f(&probe);
        probe[i] = xi;
        (fp - fm) / (2.0 * h)
    })
}

/// Jacobian of a vector map, one column per coordinate of `x`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, rel: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h = scaled_step(rel, x);
    let mut probe = x.clone();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let fp = f(&probe);
        probe[i] = xi - h;
        let fm = f(&probe);
        probe[i] = xi;
        cols.push((fp - fm) / (2.0 * h));
    }
    DMatrix::from_columns(&cols)
}

/// Eigenvalues as `(re, im)` pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    a.clone().complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect()
}

pub fn is_hurwitz(eigs: &[(f64, f64)]) -> bool {
    eigs.iter().all(|&(re, _)| re < 0.0)
}

/// 2-norm condition number from the singular values; `inf` for singular input.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues `(small, large)` of the symmetric matrix `[[a, b], [b, c]]`.
pub fn sym2_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let rad = libm::sqrt(half_diff * half_diff + b * b);
    (mean - rad, mean + rad)
}

/// Angle in radians between two vectors, `None` when either is zero.
pub fn angle_between(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let ua = a / na;
    let ub = b / nb;
    // accurate for angles near 0 and π, unlike acos of the cosine
    Some(2.0 * libm::atan2((&ua - &ub).norm(), (&ua + &ub).norm()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_cubic() {
        let x = DVector::from_vec(alloc::vec![1.0, -2.0]);
        let g = central_gradient(|v| v[0] * v[0] * v[0] + 3.0 * v[0] * v[1], &x, FD_REL_STEP);
        assert!((g[0] - (3.0 - 6.0)).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn hurwitz_gate() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.3, -0.3, -1.4, -0.5]);
        assert!(is_hurwitz(&eigenvalues(&a)));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(!is_hurwitz(&eigenvalues(&a)));
    }

    #[test]
    fn small_angles_resolve() {
        let a = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let b = DVector::from_vec(alloc::vec![1.0, 1e-9]);
        let ang = angle_between(&a, &b).unwrap();
        assert!((ang - 1e-9).abs() < 1e-15);
    }

    #[test]
    fn sym2() {
        let (lo, hi) = sym2_eigenvalues(2.0, 1.0, 2.0);
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
    }
}
