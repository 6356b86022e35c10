//! Horizon selection for the four self-triggering mechanisms.
//!
//! Every mechanism picks, among the horizons admissible for the current
//! collective state, one with maximal average-idle metric. Ties are broken
//! by a counter-based generator keyed by `(seed, decision index)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{
    build_u_c, Certificate, PerturbedOfflineCertificate, PerturbedOnlineCertificate,
    UnperturbedCertificate,
};
use crate::error::{Error, Result};
use crate::horizon::Horizon;
use crate::linalg::{lambda_min, quad_form, spectral_norm, Matrix, Vector, PSD_TOL};
use crate::partition::{maximize_multiplier, region_of, sprocedure_on_form, ConicRegion};
use crate::plant::{GrowthConstants, HorizonBank};

const METRIC_TIE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    OnlineUnperturbed,
    OfflineUnperturbed,
    OnlinePerturbed,
    OfflinePerturbed,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::OnlineUnperturbed,
        Mode::OfflineUnperturbed,
        Mode::OnlinePerturbed,
        Mode::OfflinePerturbed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::OnlineUnperturbed => "online-unperturbed",
            Mode::OfflineUnperturbed => "offline-unperturbed",
            Mode::OnlinePerturbed => "online-perturbed",
            Mode::OfflinePerturbed => "offline-perturbed",
        }
    }

    pub fn is_offline(self) -> bool {
        matches!(self, Mode::OfflineUnperturbed | Mode::OfflinePerturbed)
    }

    pub fn is_perturbed(self) -> bool {
        matches!(self, Mode::OnlinePerturbed | Mode::OfflinePerturbed)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub horizon: Horizon,
    pub metric: f64,
    pub feasible_count: usize,
    pub tie_count: usize,
    pub mode: Mode,
    pub inside_ellipsoid: bool,
    pub region: Option<usize>,
}

/// Uniform index in `0..n` from the stream `step` of a generator keyed by `seed`.
pub fn tie_break(seed: u64, step: u64, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng.random_range(0..n)
}

/// Indices among `candidates` attaining the maximal metric.
fn argmax_metric(bank: &HorizonBank, candidates: &[usize]) -> (f64, Vec<usize>) {
    let best = candidates
        .iter()
        .map(|&i| bank.metrics[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let ties = candidates
        .iter()
        .copied()
        .filter(|&i| bank.metrics[i] >= best - METRIC_TIE)
        .collect();
    (best, ties)
}

fn decide_among(
    bank: &HorizonBank,
    feasible: &[usize],
    mode: Mode,
    seed: u64,
    step: u64,
    region: Option<usize>,
) -> TriggerDecision {
    let (metric, ties) = argmax_metric(bank, feasible);
    let pick = ties[tie_break(seed, step, ties.len())];
    TriggerDecision {
        horizon: bank.horizons[pick].clone(),
        metric,
        feasible_count: feasible.len(),
        tie_count: ties.len(),
        mode,
        inside_ellipsoid: false,
        region,
    }
}

fn idle_decision(mode: Mode, sensors: usize) -> TriggerDecision {
    let horizon = Horizon::idle();
    TriggerDecision {
        metric: crate::horizon::avg_idle_metric(&horizon, sensors),
        horizon,
        feasible_count: 1,
        tie_count: 1,
        mode,
        inside_ellipsoid: true,
        region: None,
    }
}

fn star_index(bank: &HorizonBank, sigma_star: &Horizon) -> Result<usize> {
    bank.index_of(sigma_star).ok_or_else(|| {
        Error::Config(format!("horizon {sigma_star} is not in the enumerated horizon set"))
    })
}

/// Online unperturbed rule: `σ` is admissible at `η` iff
/// `ηᵀ(Φ_σᵀPΦ_σ − e^{−β|σ|T}P)η ≤ 1e-12 ‖η‖² ‖P‖`.
#[derive(Clone, Debug)]
pub struct OnlineUnperturbedRule {
    forms: Vec<Matrix>,
    p_norm: f64,
    star: usize,
}

impl OnlineUnperturbedRule {
    pub fn new(cert: &UnperturbedCertificate, bank: &HorizonBank) -> Result<Self> {
        let star = star_index(bank, &cert.sigma_star)?;
        let forms = bank
            .horizons
            .par_iter()
            .zip(&bank.transitions)
            .map(|(h, phi)| phi.transpose() * &cert.p * phi - &cert.p * cert.rate(h.len()))
            .collect();
        Ok(Self { forms, p_norm: spectral_norm(&cert.p), star })
    }

    pub fn feasible(&self, eta: &Vector) -> Vec<usize> {
        let tol = 1e-12 * eta.norm_squared() * self.p_norm;
        let mut out: Vec<usize> = (0..self.forms.len())
            .filter(|&i| quad_form(&self.forms[i], eta) <= tol)
            .collect();
        if !out.contains(&self.star) {
            out.push(self.star);
        }
        out
    }

    pub fn select(&self, eta: &Vector, bank: &HorizonBank, seed: u64, step: u64) -> TriggerDecision {
        decide_among(bank, &self.feasible(eta), Mode::OnlineUnperturbed, seed, step, None)
    }
}

pub fn online_unperturbed_select(
    eta: &Vector,
    cert: &UnperturbedCertificate,
    bank: &HorizonBank,
    seed: u64,
    step: u64,
) -> Result<TriggerDecision> {
    Ok(OnlineUnperturbedRule::new(cert, bank)?.select(eta, bank, seed, step))
}

/// Online perturbed rule: idle inside `E(P, 1)`, otherwise `σ` is
/// admissible iff `(η; 1)ᵀ U_σ (η; 1) ≥ −1e-12`.
#[derive(Clone, Debug)]
pub struct OnlinePerturbedRule {
    p: Matrix,
    tops: Vec<Matrix>,
    offsets: Vec<f64>,
    star: usize,
}

impl OnlinePerturbedRule {
    pub fn new(
        cert: &PerturbedOnlineCertificate,
        consts: &GrowthConstants,
        bank: &HorizonBank,
    ) -> Result<Self> {
        let star = star_index(bank, &cert.sigma_star)?;
        let pm = &cert.p + &cert.m;
        let tops = bank
            .horizons
            .par_iter()
            .zip(&bank.transitions)
            .map(|(h, phi)| &cert.p * (cert.rate(h.len()) - cert.gamma) - phi.transpose() * &pm * phi)
            .collect();
        let offsets = bank
            .horizons
            .iter()
            .map(|h| cert.gamma - consts.chi_squared(h.len()) * cert.lambda_pmp)
            .collect();
        Ok(Self { p: cert.p.clone(), tops, offsets, star })
    }

    pub fn inside_unit_ellipsoid(&self, eta: &Vector) -> bool {
        quad_form(&self.p, eta) <= 1.0
    }

    /// Value of `(η; 1)ᵀ U_σ (η; 1)` for bank entry `i`.
    pub fn form(&self, i: usize, eta: &Vector) -> f64 {
        quad_form(&self.tops[i], eta) + self.offsets[i]
    }

    pub fn feasible(&self, eta: &Vector) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.tops.len()).filter(|&i| self.form(i, eta) >= -1e-12).collect();
        if !out.contains(&self.star) {
            out.push(self.star);
        }
        out
    }

    pub fn select(&self, eta: &Vector, bank: &HorizonBank, seed: u64, step: u64) -> TriggerDecision {
        if self.inside_unit_ellipsoid(eta) {
            return idle_decision(Mode::OnlinePerturbed, bank.sensors);
        }
        decide_among(bank, &self.feasible(eta), Mode::OnlinePerturbed, seed, step, None)
    }
}

pub fn online_perturbed_select(
    eta: &Vector,
    cert: &PerturbedOnlineCertificate,
    consts: &GrowthConstants,
    bank: &HorizonBank,
    seed: u64,
    step: u64,
) -> Result<TriggerDecision> {
    Ok(OnlinePerturbedRule::new(cert, consts, bank)?.select(eta, bank, seed, step))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    /// Bank indices of the optimal horizons.
    pub horizons: Vec<usize>,
    pub metric: f64,
    pub feasible_count: usize,
    /// True when no horizon passed and `σ*` was inserted.
    pub fallback: bool,
}

/// Per-region optimal horizon sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineTable {
    pub entries: Vec<TableEntry>,
}

impl OfflineTable {
    fn from_feasibility(
        bank: &HorizonBank,
        regions: &[ConicRegion],
        star: usize,
        test: impl Fn(usize, &ConicRegion) -> bool + Sync,
    ) -> Self {
        let entries = regions
            .par_iter()
            .map(|region| {
                let feasible: Vec<usize> = (0..bank.len()).filter(|&i| test(i, region)).collect();
                let fallback = feasible.is_empty();
                let pool = if fallback { vec![star] } else { feasible.clone() };
                let (metric, horizons) = argmax_metric(bank, &pool);
                TableEntry { horizons, metric, feasible_count: feasible.len(), fallback }
            })
            .collect();
        Self { entries }
    }

    /// `Ψ_c` from the S-procedure test `ΦᵀPΦ − e^{−β|σ|T}P + εQ_c ⪯ 0`.
    pub fn build_unperturbed(
        cert: &UnperturbedCertificate,
        bank: &HorizonBank,
        regions: &[ConicRegion],
    ) -> Result<Self> {
        let star = star_index(bank, &cert.sigma_star)?;
        let forms: Vec<Matrix> = bank
            .horizons
            .par_iter()
            .zip(&bank.transitions)
            .map(|(h, phi)| phi.transpose() * &cert.p * phi - &cert.p * cert.rate(h.len()))
            .collect();
        Ok(Self::from_feasibility(bank, regions, star, |i, r| {
            sprocedure_on_form(&forms[i], &r.q).is_some()
        }))
    }

    /// `Ψ_c` from `∃ε ≥ 0 : U_c(ε) ⪰ 0`.
    pub fn build_perturbed(
        cert: &PerturbedOfflineCertificate,
        consts: &GrowthConstants,
        bank: &HorizonBank,
        regions: &[ConicRegion],
    ) -> Result<Self> {
        let star = star_index(bank, &cert.sigma_star)?;
        Ok(Self::from_feasibility(bank, regions, star, |i, r| {
            perturbed_region_multiplier(cert, consts, bank, i, r).is_some()
        }))
    }

    pub fn horizons_of(&self, region: usize) -> &[usize] {
        &self.entries[region].horizons
    }
}

/// Multiplier making `U_c` PSD for bank entry `i` on `region`, if any.
pub fn perturbed_region_multiplier(
    cert: &PerturbedOfflineCertificate,
    consts: &GrowthConstants,
    bank: &HorizonBank,
    i: usize,
    region: &ConicRegion,
) -> Option<f64> {
    let len = bank.horizons[i].len();
    let phi = &bank.transitions[i];
    let base = build_u_c(
        &cert.p,
        cert.gamma1,
        cert.gamma2,
        phi,
        cert.rate(len),
        consts.chi_linear(len),
        None,
        0.0,
    )
    .ok()?;
    let n = cert.p.nrows();
    let mut dq = Matrix::zeros(base.nrows(), base.ncols());
    dq.view_mut((0, 0), (n, n)).copy_from(&region.q);
    let (eps, val) = maximize_multiplier(|e| lambda_min(&(&base - &dq * e)), -PSD_TOL);
    (val >= -PSD_TOL).then_some(eps)
}

fn table_select(
    eta: &Vector,
    table: &OfflineTable,
    regions: &[ConicRegion],
    bank: &HorizonBank,
    mode: Mode,
    seed: u64,
    step: u64,
) -> TriggerDecision {
    let c = region_of(eta, regions);
    let entry = &table.entries[c];
    let pick = entry.horizons[tie_break(seed, step, entry.horizons.len())];
    TriggerDecision {
        horizon: bank.horizons[pick].clone(),
        metric: entry.metric,
        feasible_count: entry.feasible_count.max(1),
        tie_count: entry.horizons.len(),
        mode,
        inside_ellipsoid: false,
        region: Some(c),
    }
}

pub fn offline_select(
    eta: &Vector,
    table: &OfflineTable,
    regions: &[ConicRegion],
    bank: &HorizonBank,
    seed: u64,
    step: u64,
) -> TriggerDecision {
    table_select(eta, table, regions, bank, Mode::OfflineUnperturbed, seed, step)
}

pub fn offline_perturbed_select(
    eta: &Vector,
    table: &OfflineTable,
    cert: &PerturbedOfflineCertificate,
    regions: &[ConicRegion],
    bank: &HorizonBank,
    seed: u64,
    step: u64,
) -> TriggerDecision {
    if quad_form(&cert.p, eta) <= 1.0 {
        return idle_decision(Mode::OfflinePerturbed, bank.sensors);
    }
    table_select(eta, table, regions, bank, Mode::OfflinePerturbed, seed, step)
}

/// A synthesised mechanism ready to drive a simulation.
#[derive(Clone, Debug)]
pub enum Policy {
    OnlineUnperturbed {
        cert: UnperturbedCertificate,
        rule: OnlineUnperturbedRule,
    },
    OfflineUnperturbed {
        cert: UnperturbedCertificate,
        regions: Vec<ConicRegion>,
        table: OfflineTable,
    },
    OnlinePerturbed {
        cert: PerturbedOnlineCertificate,
        rule: OnlinePerturbedRule,
    },
    OfflinePerturbed {
        cert: PerturbedOfflineCertificate,
        regions: Vec<ConicRegion>,
        table: OfflineTable,
    },
}

impl Policy {
    pub fn mode(&self) -> Mode {
        match self {
            Policy::OnlineUnperturbed { .. } => Mode::OnlineUnperturbed,
            Policy::OfflineUnperturbed { .. } => Mode::OfflineUnperturbed,
            Policy::OnlinePerturbed { .. } => Mode::OnlinePerturbed,
            Policy::OfflinePerturbed { .. } => Mode::OfflinePerturbed,
        }
    }

    pub fn decide(&self, eta: &Vector, bank: &HorizonBank, seed: u64, step: u64) -> TriggerDecision {
        match self {
            Policy::OnlineUnperturbed { rule, .. } => rule.select(eta, bank, seed, step),
            Policy::OfflineUnperturbed { regions, table, .. } => {
                offline_select(eta, table, regions, bank, seed, step)
            }
            Policy::OnlinePerturbed { rule, .. } => rule.select(eta, bank, seed, step),
            Policy::OfflinePerturbed { cert, regions, table } => {
                offline_perturbed_select(eta, table, cert, regions, bank, seed, step)
            }
        }
    }

    pub fn certificate(&self) -> Certificate {
        match self {
            Policy::OnlineUnperturbed { cert, .. } | Policy::OfflineUnperturbed { cert, .. } => {
                Certificate::Unperturbed(cert.clone())
            }
            Policy::OnlinePerturbed { cert, .. } => Certificate::PerturbedOnline(cert.clone()),
            Policy::OfflinePerturbed { cert, .. } => Certificate::PerturbedOffline(cert.clone()),
        }
    }

    pub fn lyapunov_matrix(&self) -> &Matrix {
        match self {
            Policy::OnlineUnperturbed { cert, .. } | Policy::OfflineUnperturbed { cert, .. } => &cert.p,
            Policy::OnlinePerturbed { cert, .. } => &cert.p,
            Policy::OfflinePerturbed { cert, .. } => &cert.p,
        }
    }

    pub fn regions(&self) -> Option<&[ConicRegion]> {
        match self {
            Policy::OfflineUnperturbed { regions, .. } | Policy::OfflinePerturbed { regions, .. } => {
                Some(regions)
            }
            _ => None,
        }
    }

    pub fn table(&self) -> Option<&OfflineTable> {
        match self {
            Policy::OfflineUnperturbed { table, .. } | Policy::OfflinePerturbed { table, .. } => {
                Some(table)
            }
            _ => None,
        }
    }
}
