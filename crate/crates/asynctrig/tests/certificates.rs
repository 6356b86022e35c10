mod common;

use asynctrig::certificate::{
    augmented_form, build_u_c, build_u_sigma, lambda_pmp, synthesize_perturbed_online,
    synthesize_unperturbed, ultimate_bound, verify_lmi_pair,
};
use asynctrig::horizon::Horizon;
use asynctrig::linalg::{lambda_min, quad_form, Matrix, Vector};
use asynctrig::plant::growth_from;
use asynctrig::simulation::prepare;
use asynctrig::{Certificate, Disturbance, Mode, PlantModel, Policy, Scenario, SimConfig};
use common::{random_matrix, random_schur, rng};
use proptest::prelude::*;
use rand::Rng;
use std::sync::OnceLock;

fn config(mode: Mode, t: f64, l_min: usize, l_max: usize) -> SimConfig {
    let perturbed = mode.is_perturbed();
    SimConfig {
        plant: if perturbed { PlantModel::second_order_perturbed() } else { PlantModel::second_order() },
        t,
        l_min,
        l_max,
        horizon_cap: 1 << 20,
        mode,
        beta: 0.0,
        gamma: 0.35,
        gamma1: 0.35,
        gamma2: 0.35,
        regions: 6,
        sigma_star: None,
        x0: vec![5.0, -2.0],
        total_steps: 60,
        seed: 3,
        substeps: 100,
        disturbance: perturbed.then(Disturbance::sine_5pi),
    }
}

fn online_perturbed() -> &'static Scenario {
    static CELL: OnceLock<Scenario> = OnceLock::new();
    CELL.get_or_init(|| prepare(&config(Mode::OnlinePerturbed, 0.205, 1, 6)).unwrap())
}

fn random_vector(r: &mut impl Rng, n: usize) -> Vector {
    random_matrix(r, n, 1, 1.0).column(0).into_owned()
}

#[test]
fn unperturbed_decay_on_feasible_horizons() {
    let scenario = prepare(&config(Mode::OnlineUnperturbed, 0.3, 1, 3)).unwrap();
    let Policy::OnlineUnperturbed { cert, rule } = &scenario.policy else { unreachable!() };
    let bank = &scenario.bank;
    let mut r = rng(21);
    let mut checked = 0;
    for _ in 0..1000 {
        let eta = random_vector(&mut r, 4) * r.random_range(0.1..10.0);
        let v = quad_form(&cert.p, &eta);
        for i in rule.feasible(&eta) {
            let after = quad_form(&cert.p, &(&bank.transitions[i] * &eta));
            assert!(after <= cert.rate(bank.horizons[i].len()) * v + 1e-9 * v.max(1.0));
            checked += 1;
        }
    }
    assert!(checked >= 1000);
}

#[test]
fn perturbed_step_inequality_monte_carlo() {
    // outside E(P, 1), an admissible σ gives V(Φη + w̄) ≤ β̄ V(η) whenever ‖w̄‖² ≤ χ
    let scenario = online_perturbed();
    let Policy::OnlinePerturbed { cert, rule } = &scenario.policy else { unreachable!() };
    let consts = scenario.consts.as_ref().unwrap();
    let bank = &scenario.bank;
    let mut r = rng(33);
    let mut admissible = 0;
    for _ in 0..1000 {
        let dir = random_vector(&mut r, 4);
        let v0 = quad_form(&cert.p, &dir);
        let eta = dir * ((1.0 + r.random_range(0.0..50.0f64)) / v0).sqrt();
        let i = r.random_range(0..bank.len());
        if rule.form(i, &eta) < 0.0 {
            continue;
        }
        admissible += 1;
        let len = bank.horizons[i].len();
        let scale = consts.chi_squared(len).sqrt() * r.random_range(0.0..=1.0f64);
        let w = random_vector(&mut r, 4).normalize() * scale;
        let after = quad_form(&cert.p, &(&bank.transitions[i] * &eta + w));
        let v = quad_form(&cert.p, &eta);
        assert!(after <= cert.rate(len) * v + 1e-9 * v);
    }
    assert!(admissible > 0);
}

#[test]
fn u_sigma_matches_its_summands() {
    let scenario = online_perturbed();
    let Policy::OnlinePerturbed { cert, rule } = &scenario.policy else { unreachable!() };
    let consts = scenario.consts.as_ref().unwrap();
    let bank = &scenario.bank;
    let lam = lambda_pmp(&cert.p, &cert.m).unwrap();
    let mut r = rng(4);
    for _ in 0..100 {
        let i = r.random_range(0..bank.len());
        let eta = random_vector(&mut r, 4) * r.random_range(0.01..1.0);
        let (phi, len) = (&bank.transitions[i], bank.horizons[i].len());
        let beta_bar = cert.rate(len);
        let chi = consts.chi_squared(len);
        let u = build_u_sigma(&cert.p, &cert.m, cert.gamma, phi, beta_bar, chi).unwrap();
        let direct = (beta_bar - cert.gamma) * quad_form(&cert.p, &eta)
            - quad_form(&(&cert.p + &cert.m), &(phi * &eta))
            + cert.gamma
            - chi * lam;
        let form = augmented_form(&u, &eta);
        assert!((form - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        assert!((rule.form(i, &eta) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }
}

#[test]
fn online_synthesis_self_verifies() {
    let mut r = rng(17);
    let sigma: Horizon = "1".parse().unwrap();
    let consts = growth_from(1.2, 1.1, 0.01, 1);
    for _ in 0..50 {
        // LMI1 needs ρ(Φ)² < (1 − γ)/(1 + α)
        let radius = r.random_range(0.1..0.75);
        let phi = random_schur(&mut r, 4, radius);
        let cert = synthesize_perturbed_online(&phi, &sigma, 0.0, 0.1, &consts, 0.35).unwrap();
        assert!(verify_lmi_pair(&cert.p, &cert.m, 0.35, consts.chi_squared(1), &phi, 1.0, 1e-9));
        assert!(cert.verify(&phi, 1e-9));
    }
    let phi = random_schur(&mut r, 4, 0.9);
    assert!(synthesize_perturbed_online(&phi, &sigma, 0.0, 0.1, &consts, 0.35).is_err());
}

#[test]
fn gamma_must_be_positive() {
    let consts = growth_from(1.0, 1.0, 0.01, 1);
    let phi = Matrix::identity(2, 2) * 0.5;
    let sigma: Horizon = "1".parse().unwrap();
    assert!(synthesize_perturbed_online(&phi, &sigma, 0.0, 0.1, &consts, 0.0).is_err());
}

#[test]
fn offline_perturbed_certificate_eigencheck() {
    let scenario = prepare(&config(Mode::OfflinePerturbed, 0.205, 3, 6)).unwrap();
    let Policy::OfflinePerturbed { cert, .. } = &scenario.policy else { unreachable!() };
    let star = scenario.bank.index_of(&cert.sigma_star).unwrap();
    let phi = &scenario.bank.transitions[star];
    let u = build_u_c(&cert.p, cert.gamma1, cert.gamma2, phi, cert.rate(cert.sigma_star.len()), cert.chi_linear, None, 0.0)
        .unwrap();
    assert!(lambda_min(&u) >= -1e-9);
    assert!(lambda_min(&cert.p) > 0.0);
}

#[test]
fn certificates_survive_json_round_trip() {
    let online = online_perturbed();
    let unperturbed = prepare(&config(Mode::OnlineUnperturbed, 0.3, 1, 3)).unwrap();
    let offline = prepare(&config(Mode::OfflinePerturbed, 0.205, 3, 6)).unwrap();
    for scenario in [online, &unperturbed, &offline] {
        let cert = scenario.policy.certificate();
        let star = scenario.bank.index_of(cert.sigma_star()).unwrap();
        let phi = &scenario.bank.transitions[star];
        let json = serde_json::to_string(&cert).unwrap();
        let back: Certificate = serde_json::from_str(&json).unwrap();
        assert!(back.verify(phi, 1e-9), "{json}");
        assert_eq!(back.sigma_star(), cert.sigma_star());
    }
}

#[test]
fn unperturbed_scalar_example() {
    let phi = Matrix::identity(2, 2) * 0.5;
    let cert = synthesize_unperturbed(&phi, &"1".parse().unwrap(), 0.0, 0.3).unwrap();
    assert!((cert.p - Matrix::identity(2, 2) * (4.0 / 3.0)).amax() < 1e-12);
}

proptest! {
    #[test]
    fn ultimate_bound_is_monotone(
        d in prop::collection::vec(0.1..10.0f64, 3),
        c1 in 0.0..5.0f64, dc in 0.0..5.0f64,
        w1 in 0.0..5.0f64, dw in 0.0..5.0f64,
    ) {
        let p = Matrix::from_diagonal(&Vector::from_vec(d));
        let (mu, psi) = ultimate_bound(&p, c1, w1);
        prop_assert!(ultimate_bound(&p, c1 + dc, w1).0 >= mu);
        prop_assert!(ultimate_bound(&p, c1, w1 + dw).0 >= mu);
        prop_assert!((psi * lambda_min(&p) - mu).abs() <= 1e-12 * mu.max(1.0));
    }
}
