//! Property tests over randomly generated plants, forms and closed loops.

use std::sync::Arc;

use proptest::prelude::*;
use safeflow_core::prelude::*;
use safeflow_core::model::WarmStart;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn central(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let h = 1e-6 * (1.0 + x.amax());
    DVector::from_fn(x.len(), |i, _| {
        let (mut p, mut q) = (x.clone(), x.clone());
        p[i] += h;
        q[i] -= h;
        (f(&p) - f(&q)) / (2.0 * h)
    })
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn vector(n: usize, r: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-r..r, n).prop_map(|v| dv(&v))
}

fn matrix(n: usize, m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * m).prop_map(move |v| DMatrix::from_row_slice(n, m, &v))
}

/// Hurwitz by construction: a negative definite symmetric part.
fn hurwitz(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (matrix(n, n), matrix(n, n)).prop_map(move |(m, s)| {
        -(&m * m.transpose() + DMatrix::identity(n, n) * 0.3) + (&s - s.transpose()) * 0.5
    })
}

fn plant_and_point() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    (2usize..=4)
        .prop_flat_map(|n| (Just(n), 1usize..=n))
        .prop_flat_map(|(n, m)| (hurwitz(n), matrix(n, m), vector(n, 2.0), vector(m, 2.0)))
}

fn quadratic(n: usize) -> impl Strategy<Value = Quadratic> {
    (-2.0..2.0f64, vector(n, 1.0), matrix(n, n)).prop_map(|(c, g, q)| Quadratic::new(c, g, (&q + q.transpose()) * 0.5).unwrap())
}

fn separable(n: usize) -> impl Strategy<Value = Separable> {
    let term = (0..n, -2.0..2.0f64, -1.5..1.5f64, 1u32..=3).prop_map(|(index, coef, center, power)| SeparableTerm {
        index,
        coef,
        center,
        power,
    });
    (-1.0..1.0f64, prop::collection::vec(term, 1..5)).prop_map(move |(c, terms)| Separable::new(n, c, terms).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quadratic_derivatives_match_differences((f, x) in (2usize..5).prop_flat_map(|n| (quadratic(n), vector(n, 2.0)))) {
        prop_assert!(rel(&f.gradient(&x), &central(|p| f.value(p), &x)) <= 1e-7);
        let hess = f.hessian(&x);
        for i in 0..x.len() {
            let row = central(|p| f.gradient(p)[i], &x);
            prop_assert!(rel(&hess.row(i).transpose(), &row) <= 1e-6);
        }
    }

    #[test]
    fn separable_derivatives_match_differences((f, x) in (1usize..4).prop_flat_map(|n| (separable(n), vector(n, 2.0)))) {
        prop_assert!(rel(&f.gradient(&x), &central(|p| f.value(p), &x)) <= 1e-6);
        let hess = f.hessian(&x);
        for i in 0..x.len() {
            let row = central(|p| f.gradient(p)[i], &x);
            prop_assert!(rel(&hess.row(i).transpose(), &row) <= 1e-5);
        }
    }

    #[test]
    fn steady_state_map_and_its_jacobian((a, b, _x, u) in plant_and_point()) {
        let plant = make_linear_plant(a.clone(), b.clone()).unwrap();
        let ss = steady_state(&plant, &u, &mut WarmStart::default()).unwrap();
        prop_assert!(plant.f(&ss.x, &u).amax() <= 1e-10);
        // the implicit-function identity A·∂w/∂u = −B
        prop_assert!((&a * &ss.dwdu + &b).amax() <= 1e-10);
        for i in 0..ss.x.len() {
            let fd = central(|p| steady_state(&plant, p, &mut WarmStart::default()).unwrap().x[i], &u);
            prop_assert!(rel(&ss.dwdu.row(i).transpose(), &fd) <= 1e-6);
        }
    }

    #[test]
    fn first_chain_level_is_the_lie_derivative(
        (a, b, x, u, h, beta) in plant_and_point()
            .prop_flat_map(|(a, b, x, u)| { let n = x.len(); (Just(a), Just(b), Just(x), Just(u), quadratic(n), 0.2..3.0f64) })
    ) {
        let plant = make_linear_plant(a, b).unwrap();
        let m = u.len();
        let n = x.len();
        let spec = ProblemSpec::new(
            Arc::new(Quadratic::constant(n, 0.0)),
            Arc::new(h.clone()),
            Arc::new(Quadratic::constant(m, 1.0)),
        ).unwrap();
        let chain = build_chain(&plant, &spec, beta, 2).unwrap();
        let f = plant.f(&x, &u);
        let h1 = h.gradient(&x).dot(&f) + beta * h.value(&x);
        prop_assert!((chain.level(1, &x, &u) - h1).abs() <= 1e-9 * (1.0 + h1.abs()));
        for i in 0..=2 {
            let p = chain.level_partials(i, &x, &u);
            prop_assert!(rel(&p.dh_dx, &central(|xp| chain.level(i, xp, &u), &x)) <= 1e-6);
            prop_assert!(rel(&p.dh_du, &central(|up| chain.level(i, &x, up), &u)) <= 1e-6);
            prop_assert!((p.drift - p.dh_dx.dot(&f)).abs() <= 1e-9 * (1.0 + p.drift.abs()));
        }
    }

    #[test]
    fn interior_critical_points_are_rest_points(
        (a, b, u) in plant_and_point().prop_map(|(a, b, _, u)| (a, b, u)),
        gains in (0.1..2.0f64, 1.0..10.0f64, 1.0..10.0f64, 0.5..3.0f64),
    ) {
        let plant = make_linear_plant(a, b).unwrap();
        let (n, m) = (plant.state_dim(), plant.input_dim());
        let x = steady_state(&plant, &u, &mut WarmStart::default()).unwrap().x;
        let phi = Quadratic::squared_distance(&x, 1.0);
        let h = Quadratic::new(x.norm_squared() + 1.0, DVector::zeros(n), -DMatrix::identity(n, n)).unwrap();
        let bf = Quadratic::new(u.norm_squared() + 1.0, DVector::zeros(m), -DMatrix::identity(m, m)).unwrap();
        let spec = ProblemSpec::new(Arc::new(phi), Arc::new(h), Arc::new(bf)).unwrap();
        let params = ControllerParams::new(gains.0, gains.1, gains.2, gains.3).unwrap();
        let chain = build_chain(&plant, &spec, params.beta, 1).unwrap();
        let eval = sgf_rhs(&plant, &spec, &chain, &params, &x, &u).unwrap();
        prop_assert!(eval.q.amax() <= 1e-9);
        let report = kkt_residual(&plant, &spec, &u).unwrap();
        prop_assert!(report.is_kkt);
    }

    #[test]
    fn unstable_plants_are_rejected(n in 1usize..4, shift in 0.01..2.0f64) {
        let a = DMatrix::identity(n, n) * shift;
        prop_assert!(matches!(make_linear_plant(a, DMatrix::identity(n, 1)), Err(Error::NotHurwitz(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Closed-loop runs that start in the safe set stay there.
    #[test]
    fn safe_set_is_forward_invariant(
        x0 in vector(2, 1.5),
        u0 in vector(2, 2.5),
        target in vector(2, 4.0),
    ) {
        let plant = make_linear_plant(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::identity(2, 2),
        ).unwrap();
        let spec = ProblemSpec::new(
            Arc::new(Quadratic::squared_distance(&target, 1.0)),
            Arc::new(Quadratic::new(4.0, DVector::zeros(2), -DMatrix::identity(2, 2)).unwrap()),
            Arc::new(Quadratic::new(9.0, DVector::zeros(2), -DMatrix::identity(2, 2)).unwrap()),
        ).unwrap();
        let params = ControllerParams::new(0.5, 10.0, 10.0, 1.0).unwrap();
        let chain = build_chain(&plant, &spec, params.beta, 1).unwrap();
        let safe = spec.b.value(&u0) >= 0.0 && chain.eval_chain(&x0, &u0).iter().all(|&v| v >= 0.0);
        prop_assume!(safe);
        let cfg = SimConfig { dt: 5e-3, t_final: 10.0, record_stride: 100, ..Default::default() };
        let traj = integrate(&plant, &spec, &chain, &params, RhsKind::Sgf, &x0, &u0, &cfg);
        prop_assert!(!matches!(traj.outcome, Outcome::Aborted { .. }), "{:?}", traj.outcome);
        prop_assert!(traj.safe_start);
        prop_assert!(traj.min_constraint() >= -1e-6, "min {}", traj.min_constraint());
    }
}
