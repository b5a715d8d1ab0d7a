use deepesn::readout::{evaluate, predict, train_ridge};
use deepesn::{GlobalState, Metric, Readout, RegressionProblem, StateTrajectory};
use nalgebra::{DMatrix, DVector};
use ndarray_linalg::Inverse;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// `(SᵀS + λI)⁻¹ SᵀY` through LAPACK's explicit inverse.
fn inverse_solution(s: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = s.ncols();
    let gram = s.transpose() * s + DMatrix::identity(n, n) * lambda;
    let a = ndarray::Array2::from_shape_fn((n, n), |(i, j)| gram[(i, j)]);
    let inv = a.inv().unwrap();
    let inv = DMatrix::from_fn(n, n, |i, j| inv[(i, j)]);
    (inv * s.transpose() * y).transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normal_equations_hold(seed in any::<u64>(), rows in 5usize..120, cols in 1usize..40, outs in 1usize..4, lambda in 1e-6f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(&mut rng, rows, cols);
        let y = random_matrix(&mut rng, rows, outs);
        let r = train_ridge(&RegressionProblem::new(s.clone(), y.clone()).unwrap(), lambda, false).unwrap();
        let w = r.weights().transpose();
        let sty = s.transpose() * &y;
        let grad = s.transpose() * (&s * &w - &y) + &w * lambda;
        prop_assert!(grad.norm() <= 1e-6 * (1.0 + sty.norm()), "gradient {}", grad.norm());
    }

    #[test]
    fn matches_explicit_inverse(seed in any::<u64>(), cols in 1usize..30, lambda in 1e-3f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(&mut rng, 3 * cols + 5, cols);
        let y = random_matrix(&mut rng, 3 * cols + 5, 2);
        let r = train_ridge(&RegressionProblem::new(s.clone(), y.clone()).unwrap(), lambda, false).unwrap();
        let gap = (r.weights() - inverse_solution(&s, &y, lambda)).amax();
        prop_assert!(gap <= 1e-8, "gap {gap}");
    }

    #[test]
    fn column_permutation_commutes(seed in any::<u64>(), cols in 2usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(&mut rng, 60, cols);
        let y = random_matrix(&mut rng, 60, 1);
        let perm: Vec<usize> = (0..cols).rev().collect();
        let sp = DMatrix::from_fn(60, cols, |i, j| s[(i, perm[j])]);
        let a = train_ridge(&RegressionProblem::new(s.clone(), y.clone()).unwrap(), 0.1, true).unwrap();
        let b = train_ridge(&RegressionProblem::new(sp.clone(), y).unwrap(), 0.1, true).unwrap();
        for (j, &from) in perm.iter().enumerate() {
            prop_assert!((a.weights()[(0, from)] - b.weights()[(0, j)]).abs() <= 1e-10);
        }
        let gap = (a.apply(&s).unwrap() - b.apply(&sp).unwrap()).amax();
        prop_assert!(gap <= 1e-10);
    }

    #[test]
    fn norm_shrinks_as_lambda_grows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_matrix(&mut rng, 50, 10);
        let y = random_matrix(&mut rng, 50, 1);
        let p = RegressionProblem::new(s, y).unwrap();
        let norms: Vec<f64> = (-8..=6)
            .map(|e| train_ridge(&p, 10f64.powi(e), false).unwrap().weights().norm())
            .collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(norms[norms.len() - 1] < 1e-3 * norms[0]);
    }
}

#[test]
fn noiseless_linear_target_is_reproduced() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = [4, 6];
    let steps: Vec<GlobalState> = (0..80)
        .map(|_| {
            GlobalState::new(
                dims.iter()
                    .map(|&n| DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)))
                    .collect(),
            )
        })
        .collect();
    let traj = StateTrajectory::new(steps, 10).unwrap();
    let truth = random_matrix(&mut rng, 2, 10);
    let s = traj.state_matrix(10..80);
    let y = &s * truth.transpose();
    let r = train_ridge(&RegressionProblem::new(s, y).unwrap(), 0.0, false).unwrap();
    let pred = predict(&r, &traj).unwrap();
    assert_eq!(pred.nrows(), 80);
    let full = traj.state_matrix(0..80) * truth.transpose();
    let rmse = evaluate(&pred, &full, Metric::Mse).unwrap().sqrt();
    assert!(rmse <= 1e-8, "rmse {rmse}");
}

#[test]
fn zeroing_the_informative_layer_degrades_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // target depends on the first layer's columns only
    let s = random_matrix(&mut rng, 200, 10);
    let y = s.columns(0, 5) * DMatrix::from_fn(5, 1, |i, _| (i + 1) as f64);
    let mse = |s: &DMatrix<f64>| {
        let r = train_ridge(&RegressionProblem::new(s.clone(), y.clone()).unwrap(), 1e-8, true).unwrap();
        evaluate(&r.apply(s).unwrap(), &y, Metric::Mse).unwrap()
    };
    let mut without_first = s.clone();
    without_first.columns_mut(0, 5).fill(0.0);
    let mut without_second = s.clone();
    without_second.columns_mut(5, 5).fill(0.0);
    assert!(mse(&without_first) > 100.0 * mse(&s).max(1e-12));
    assert!(mse(&without_second) <= 1e-10);
}

#[test]
fn nrmse_of_constant_offset() {
    // values ±2 have population variance 4
    let target = DMatrix::from_row_slice(4, 1, &[2.0, -2.0, 2.0, -2.0]);
    let pred = target.add_scalar(1.0);
    assert!((evaluate(&pred, &target, Metric::Mse).unwrap() - 1.0).abs() < 1e-15);
    assert!((evaluate(&pred, &target, Metric::Nrmse).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn zero_weights_give_zero_outputs() {
    let r = Readout::new(DMatrix::zeros(2, 3), None, 0.0).unwrap();
    let out = r.apply(&DMatrix::from_element(5, 3, 7.0)).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}
