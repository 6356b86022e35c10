mod common;

use asynctrig::horizon::Horizon;
use asynctrig::linalg::{mat_exp, spectral_norm, Matrix, Vector};
use asynctrig::plant::{
    aggregate_disturbance, collective_state, disturbance_integral, disturbance_step_bound,
    growth_constants, selection_matrices, transition_from_steps,
};
use asynctrig::simulation::Stepper;
use asynctrig::{enumerate_horizons, DiscretePlant, HorizonBank, PlantModel};
use common::{random_matrix, random_plant, rng};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn selectors_partition_identity() {
    for blocks in [vec![1, 1], vec![2, 1, 3], vec![4]] {
        let n: usize = blocks.iter().sum();
        let mut total = Matrix::zeros(n, n);
        for a in 1..=blocks.len() {
            let (m, nn) = selection_matrices(a as u8, &blocks).unwrap();
            assert_eq!(&m + &nn, Matrix::identity(n, n));
            assert_eq!(&m * &m, m);
            total += m;
        }
        assert_eq!(total, Matrix::identity(n, n));
        let (m0, n0) = selection_matrices(0, &blocks).unwrap();
        assert_eq!(m0, Matrix::zeros(n, n));
        assert_eq!(n0, Matrix::identity(n, n));
        assert!(selection_matrices(blocks.len() as u8 + 1, &blocks).is_err());
    }
}

#[test]
fn componentwise_step_matches_collective_matrix() {
    let mut r = rng(3);
    for _ in 0..50 {
        let plant = random_plant(&mut r);
        let t = r.random_range(0.05..0.5);
        let dp = DiscretePlant::new(&plant, t).unwrap();
        let stepper = Stepper::new(&plant, dp.clone(), None, 10);
        let x = random_matrix(&mut r, 2, 1, 3.0).column(0).into_owned();
        let xh = random_matrix(&mut r, 2, 1, 3.0).column(0).into_owned();
        for a in 0..=2u8 {
            let (xhat, _, next) = stepper.step(&x, &xh, a, 0);
            let eta = dp.step_matrix(a).unwrap() * collective_state(&x, &xh);
            assert!((eta - collective_state(&next, &xhat)).amax() < 1e-12);
        }
    }
}

#[test]
fn step_matches_direct_integration() {
    // x(T) = e^{AT}x + ∫₀ᵀ e^{As} ds B u with u held constant
    let plant = PlantModel::second_order();
    let t = 0.3;
    let dp = DiscretePlant::new(&plant, t).unwrap();
    let x = Vector::from_vec(vec![1.5, -0.7]);
    let xh = Vector::from_vec(vec![0.4, 2.0]);
    let stepper = Stepper::new(&plant, dp.clone(), None, 1);
    let (xhat, u, next) = stepper.step(&x, &xh, 1, 0);
    assert_eq!(xhat, Vector::from_vec(vec![1.5, 2.0]));
    let panels = 4000;
    let h = t / panels as f64;
    let mut integral = Vector::zeros(2);
    for i in 0..panels {
        let s = (i as f64 + 0.5) * h;
        integral += mat_exp(&plant.a, s).unwrap() * &plant.b * &u * h;
    }
    let direct = mat_exp(&plant.a, t).unwrap() * &x + integral;
    assert!((next - direct).amax() < 1e-7);
}

#[test]
fn aggregated_disturbance_matches_stepping() {
    let plant = PlantModel::second_order_perturbed();
    let dp = DiscretePlant::new(&plant, 0.205).unwrap();
    let steps = dp.step_matrices();
    let mut r = rng(8);
    for _ in 0..200 {
        let len = r.random_range(1..=6);
        let sigma = Horizon::new((0..len).map(|_| r.random_range(0..=2u8)).collect()).unwrap();
        let ws: Vec<Vector> = (0..len)
            .map(|_| random_matrix(&mut r, 2, 1, 0.3).column(0).into_owned())
            .collect();
        let eta0 = random_matrix(&mut r, 4, 1, 2.0).column(0).into_owned();
        let mut eta = eta0.clone();
        for (&a, w) in sigma.actions().iter().zip(&ws) {
            eta = &steps[usize::from(a)] * eta;
            let mut top = eta.rows_mut(0, 2);
            top += w;
        }
        let phi = transition_from_steps(&steps, &sigma);
        let agg = aggregate_disturbance(&steps, &sigma, &ws);
        assert!((&phi * &eta0 + &agg - &eta).amax() < 1e-12);
    }
}

#[test]
fn aggregated_disturbance_norm_bound() {
    // ‖w̄‖ ≤ ϖ Σ_{q<l} C^q whenever every ‖w̃_i‖ ≤ ϖ
    let plant = PlantModel::second_order_perturbed();
    let dp = DiscretePlant::new(&plant, 0.205).unwrap();
    let varpi = 0.1;
    let consts = growth_constants(&dp, 6, varpi);
    let steps = dp.step_matrices();
    let mut r = rng(9);
    for _ in 0..2000 {
        let len = r.random_range(1..=6);
        let sigma = Horizon::new((0..len).map(|_| r.random_range(0..=2u8)).collect()).unwrap();
        let ws: Vec<Vector> = (0..len)
            .map(|_| {
                let v = random_matrix(&mut r, 2, 1, 1.0).column(0).into_owned();
                v.normalize() * (varpi * r.random_range(0.0..=1.0f64))
            })
            .collect();
        let agg = aggregate_disturbance(&steps, &sigma, &ws);
        assert!(agg.norm() <= consts.chi_linear(len) * (1.0 + 1e-12));
    }
}

#[test]
fn disturbance_integral_matches_fine_trapezoid() {
    let plant = PlantModel::second_order_perturbed();
    let d = plant.d.clone().unwrap();
    let t = 0.205;
    let panels = 100_000;
    let h = t / panels as f64;
    // e^{A(s+h)} = e^{Ah} e^{As}, so one small exponential drives the sweep
    let step = mat_exp(&plant.a, h).unwrap();
    let mut e = Matrix::identity(2, 2);
    let mut prev = spectral_norm(&(&e * &d));
    let mut trap = 0.0;
    for _ in 0..panels {
        e = &step * e;
        let cur = spectral_norm(&(&e * &d));
        trap += 0.5 * h * (prev + cur);
        prev = cur;
    }
    let (simpson, err) = disturbance_integral(&plant.a, &d, t, 2000).unwrap();
    assert!((simpson - trap).abs() < 1e-9, "{simpson} vs {trap}");
    assert!(err < 1e-10);
    let varpi = disturbance_step_bound(&plant, t).unwrap();
    assert!(varpi >= trap - 1e-12 && varpi - trap < 1e-9);
}

#[test]
fn growth_constant_matches_power_iteration() {
    let dp = DiscretePlant::new(&PlantModel::second_order(), 0.205).unwrap();
    let consts = growth_constants(&dp, 6, 1.0);
    let mut best: f64 = 0.0;
    for s in dp.step_matrices() {
        let g = s.transpose() * &s;
        let mut v = Vector::from_element(g.nrows(), 1.0);
        let mut lam = 0.0;
        for _ in 0..2000 {
            let w = &g * &v;
            lam = w.norm();
            v = w / lam;
        }
        best = best.max(lam.sqrt());
    }
    assert!((consts.c - best).abs() < 1e-8 * best);
    assert!((consts.c_prime - spectral_norm(&dp.step_matrix(0).unwrap())).abs() < 1e-15);
}

#[test]
fn bank_agrees_with_direct_transitions() {
    let dp = DiscretePlant::new(&PlantModel::second_order(), 0.3).unwrap();
    let bank = HorizonBank::build(&dp, 1, 3, 1000).unwrap();
    assert_eq!(bank.len(), 39);
    for (h, phi) in bank.horizons.iter().zip(&bank.transitions) {
        assert_eq!(&dp.horizon_transition(h).unwrap(), phi);
    }
    for i in bank.stable_candidates() {
        assert!(bank.radii[i] < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transitions_compose(a in prop::collection::vec(0u8..=2, 1..5), b in prop::collection::vec(0u8..=2, 1..5)) {
        let dp = DiscretePlant::new(&PlantModel::second_order(), 0.25).unwrap();
        let (sa, sb) = (Horizon::new(a).unwrap(), Horizon::new(b).unwrap());
        let joint = dp.horizon_transition(&sa.concat(&sb)).unwrap();
        let split = dp.horizon_transition(&sb).unwrap() * dp.horizon_transition(&sa).unwrap();
        prop_assert!((joint - split).amax() < 1e-12);
    }

    #[test]
    fn bank_order_is_stable(m in 1usize..4, lmax in 1usize..5) {
        let hs = enumerate_horizons(m, 1, lmax, 100_000).unwrap();
        prop_assert!(hs.windows(2).all(|w| (w[0].len(), w[0].actions()) < (w[1].len(), w[1].actions())));
    }
}
