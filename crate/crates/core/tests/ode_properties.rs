use gmfg_core::ode::{self, TimeGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(n: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, n * n).prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn terminal_error(a: &DMatrix<f64>, steps: usize) -> f64 {
    let x0 = DVector::from_element(a.nrows(), 1.0);
    let exact = (a.clone()).exp() * &x0;
    let grid = TimeGrid::with_steps(1.0, steps).unwrap();
    let path = ode::rk4_forward(|_, x: &DVector<f64>| a * x, x0, &grid).unwrap();
    (path.last() - exact).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backward_is_reversed_forward(a in matrix(3, 2.0), xt in prop::collection::vec(-1.0..1.0f64, 3)) {
        let grid = TimeGrid::new(1.0, 1e-2).unwrap();
        let horizon = grid.horizon();
        let f = |t: f64, x: &DVector<f64>| (&a * x) * (1.0 + t);
        let xt = DVector::from_vec(xt);
        let back = ode::rk4_backward(f, xt.clone(), &grid).unwrap();
        let fwd = ode::rk4_forward(|tau, y: &DVector<f64>| -f(horizon - tau, y), xt, &grid).unwrap();
        let n = grid.len();
        for i in 0..n {
            let scale = 1.0 + back.at(i).norm();
            prop_assert!((back.at(i) - fwd.at(n - 1 - i)).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn rk4_self_convergence(a in matrix(2, 3.0)) {
        let coarse = terminal_error(&a, 20);
        let fine = terminal_error(&a, 40);
        prop_assume!(coarse > 1e-11);
        prop_assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn riccati_residual(a in matrix(2, 3.0), qf in matrix(2, 1.0), rf in matrix(2, 1.0)) {
        let q = &qf * qf.transpose();
        let r = &rf * rf.transpose() + DMatrix::identity(2, 2) * 0.5;
        let q_t = DMatrix::identity(2, 2);
        let b = DMatrix::identity(2, 2);
        let grid = TimeGrid::new(1.0, 1e-3).unwrap();
        let pi = ode::solve_symmetric_riccati(&a, &b, &q, &r, &q_t, &grid).unwrap();
        prop_assert!(ode::symmetric_riccati_residual(&pi, &a, &b, &q, &r).unwrap() <= 1e-4);
    }
}
