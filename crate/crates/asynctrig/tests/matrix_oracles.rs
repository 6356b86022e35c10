mod common;

use asynctrig::linalg::{
    lambda_max, lambda_min, mat_exp, matrix, solve_discrete_lyapunov, spectral_norm,
    spectral_radius, zoh_pair, Matrix,
};
use common::{random_matrix, random_schur, rng, taylor_exp};
use proptest::prelude::*;

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn plant_a() -> Matrix {
    matrix(2, 2, &[0.0, 1.0, -2.0, 3.0]).unwrap()
}

#[test]
fn exp_matches_series_on_plant() {
    let a = plant_a();
    for t in [0.0, 0.05, 0.3, 0.595, 1.0, -0.4] {
        let got = mat_exp(&a, t).unwrap();
        assert!(rel_err(&got, &taylor_exp(&a, t, 200)) < 1e-10, "t = {t}");
    }
}

#[test]
fn exp_matches_series_on_random_matrices() {
    let mut r = rng(11);
    for n in 1..=6 {
        for _ in 0..20 {
            let a = random_matrix(&mut r, n, n, 1.5);
            let got = mat_exp(&a, 0.7).unwrap();
            assert!(rel_err(&got, &taylor_exp(&a, 0.7, 200)) < 1e-10);
        }
    }
}

#[test]
fn zoh_matches_simpson_quadrature() {
    let a = plant_a();
    let b = matrix(2, 1, &[0.0, 1.0]).unwrap();
    let t = 0.3;
    let panels = 10_000;
    let h = t / panels as f64;
    let mut acc = Matrix::zeros(2, 1);
    for i in 0..=panels {
        let w = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += taylor_exp(&a, i as f64 * h, 40) * &b * w;
    }
    acc *= h / 3.0;
    let (a_t, b_t) = zoh_pair(&a, &b, t).unwrap();
    assert!((b_t - acc).amax() < 1e-8);
    assert!(rel_err(&a_t, &taylor_exp(&a, t, 200)) < 1e-10);
}

#[test]
fn lyapunov_residual_on_random_schur_matrices() {
    let mut r = rng(5);
    for trial in 0..100 {
        let n = 2 + trial % 5;
        let phi = random_schur(&mut r, n, 0.3 + 0.65 * (trial as f64 / 100.0));
        let q = Matrix::identity(n, n);
        let p = solve_discrete_lyapunov(&phi, 1.0, &q).unwrap();
        let resid = phi.transpose() * &p * &phi - &p + &q;
        assert!(resid.amax() <= 1e-9 * p.amax().max(1.0), "trial {trial}");
        assert!(lambda_min(&p) >= 1.0 - 1e-9);
    }
}

#[test]
fn lyapunov_rejects_non_schur_input() {
    let phi = Matrix::identity(2, 2) * 1.01;
    assert!(solve_discrete_lyapunov(&phi, 1.0, &Matrix::identity(2, 2)).is_err());
}

#[test]
fn derivative_of_sampled_matrix_is_a_times_it() {
    let a = plant_a();
    let (t, h) = (0.3, 1e-5);
    let fd = (mat_exp(&a, t + h).unwrap() - mat_exp(&a, t - h).unwrap()) / (2.0 * h);
    let exact = &a * mat_exp(&a, t).unwrap();
    assert!(rel_err(&fd, &exact) < 1e-7);
}

fn square(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| Matrix::from_row_slice(n, n, &v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_semigroup(a in (1usize..5).prop_flat_map(square), s in -0.8..0.8f64, t in -0.8..0.8f64) {
        let lhs = mat_exp(&a, s + t).unwrap();
        let rhs = mat_exp(&a, s).unwrap() * mat_exp(&a, t).unwrap();
        prop_assert!(rel_err(&rhs, &lhs) < 1e-11);
    }

    #[test]
    fn exp_inverse(a in (1usize..5).prop_flat_map(square), t in 0.0..1.0f64) {
        let n = a.nrows();
        let prod = mat_exp(&a, t).unwrap() * mat_exp(&a, -t).unwrap();
        prop_assert!((prod - Matrix::identity(n, n)).amax() < 1e-10);
    }

    #[test]
    fn norm_of_transpose(m in (1usize..6).prop_flat_map(square)) {
        let (x, y) = (spectral_norm(&m), spectral_norm(&m.transpose()));
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        prop_assert!(spectral_radius(&m).unwrap() <= x * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn zoh_zero_dynamics(b in prop::collection::vec(-2.0..2.0f64, 3), t in 0.01..2.0f64) {
        let b = Matrix::from_column_slice(3, 1, &b);
        let (a_t, b_t) = zoh_pair(&Matrix::zeros(3, 3), &b, t).unwrap();
        prop_assert!((a_t - Matrix::identity(3, 3)).amax() < 1e-14);
        prop_assert!((b_t - &b * t).amax() < 1e-13);
    }

    #[test]
    fn eigen_bounds_bracket_rayleigh(m in (2usize..6).prop_flat_map(square), seed in 0u64..1000) {
        let s = (&m + m.transpose()) * 0.5;
        let mut r = rng(seed);
        let x = random_matrix(&mut r, s.nrows(), 1, 1.0);
        let q = (x.transpose() * &s * &x)[(0, 0)] / x.norm_squared();
        prop_assert!(q >= lambda_min(&s) - 1e-10 && q <= lambda_max(&s) + 1e-10);
    }
}
