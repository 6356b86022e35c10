//! Closed-loop simulation of the sampled plant under a triggering policy.
//!
//! The linear part of each period is propagated exactly with the ZOH pair;
//! the disturbance convolution `∫₀ᵀ e^{A(T−s)} D w(t_h+s) ds` is integrated
//! with fixed-step RK4.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::certificate::{
    synthesize_perturbed_offline, synthesize_perturbed_online, synthesize_unperturbed,
};
use crate::error::{Error, Result};
use crate::horizon::{Horizon, DEFAULT_CAP};
use crate::linalg::{quad_form, spectral_radius, Matrix, Vector};
use crate::partition::make_partition;
use crate::plant::{
    collective_state, disturbance_step_bound, growth_constants, selection_matrices, DiscretePlant,
    GrowthConstants, HorizonBank, PlantModel,
};
use crate::trigger::{
    Mode, OfflineTable, OnlinePerturbedRule, OnlineUnperturbedRule, Policy, TriggerDecision,
};

/// Scalar disturbance signal applied to every column of `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Disturbance {
    /// `amplitude · sin(angular_frequency · t)`.
    Sine { amplitude: f64, angular_frequency: f64 },
    Constant { value: f64 },
}

impl Disturbance {
    /// `sin(5πt)`.
    pub fn sine_5pi() -> Self {
        Disturbance::Sine { amplitude: 1.0, angular_frequency: 5.0 * PI }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Disturbance::Sine { amplitude, angular_frequency } => amplitude * (angular_frequency * t).sin(),
            Disturbance::Constant { value } => value,
        }
    }

    /// `sup_t |w(t)|`.
    pub fn peak(&self) -> f64 {
        match *self {
            Disturbance::Sine { amplitude, .. } => amplitude.abs(),
            Disturbance::Constant { value } => value.abs(),
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

fn default_substeps() -> usize {
    100
}

fn default_gamma() -> f64 {
    0.35
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub plant: PlantModel,
    pub t: f64,
    pub l_min: usize,
    pub l_max: usize,
    #[serde(default = "default_cap")]
    pub horizon_cap: usize,
    pub mode: Mode,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_gamma")]
    pub gamma1: f64,
    #[serde(default = "default_gamma")]
    pub gamma2: f64,
    #[serde(default)]
    pub regions: usize,
    #[serde(default)]
    pub sigma_star: Option<Horizon>,
    /// Plant state (`n` values, duplicated into `η₀`) or collective state (`2n` values).
    pub x0: Vec<f64>,
    pub total_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate().map_err(|e| Error::Config(e.to_string()))?;
        let n = self.plant.n();
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.t > 0.0) || !self.t.is_finite() {
            return fail(format!("sampling period {} must be positive", self.t));
        }
        if self.l_min == 0 || self.l_min > self.l_max {
            return fail(format!("invalid horizon lengths [{}, {}]", self.l_min, self.l_max));
        }
        if self.total_steps < self.l_max {
            return fail(format!(
                "total_steps = {} is below l_max = {}",
                self.total_steps, self.l_max
            ));
        }
        if self.x0.len() != n && self.x0.len() != 2 * n {
            return fail(format!("x0 has {} entries, expected {n} or {}", self.x0.len(), 2 * n));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return fail("x0 must be finite".into());
        }
        if self.substeps == 0 {
            return fail("substeps must be >= 1".into());
        }
        if !(self.beta >= 0.0) {
            return fail(format!("beta = {} must be >= 0", self.beta));
        }
        if self.mode.is_offline() && self.regions == 0 {
            return fail("offline modes need at least one region".into());
        }
        if self.mode.is_perturbed() && !self.plant.is_perturbed() {
            return fail(format!("mode {} needs a plant with D and w_max > 0", self.mode));
        }
        if let Some(w) = &self.disturbance {
            if self.plant.d.is_none() {
                return fail("a disturbance signal needs a plant with D".into());
            }
            let cols = self.plant.d.as_ref().map_or(1, |d| d.ncols()) as f64;
            if w.peak() * cols.sqrt() > self.plant.w_max * (1.0 + 1e-12) {
                return fail(format!(
                    "disturbance peak {} exceeds w_max = {}",
                    w.peak(),
                    self.plant.w_max
                ));
            }
        }
        Ok(())
    }

    pub fn initial_collective(&self) -> Vector {
        let x0 = Vector::from_vec(self.x0.clone());
        if self.x0.len() == self.plant.n() {
            collective_state(&x0, &x0)
        } else {
            x0
        }
    }
}

/// Advances `(x, x̂)` one period at a time.
#[derive(Clone, Debug)]
pub struct Stepper {
    dp: DiscretePlant,
    a: Matrix,
    k: Matrix,
    d: Option<Matrix>,
    signal: Option<Disturbance>,
    substeps: usize,
    selectors: Vec<(Matrix, Matrix)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub x: Vector,
    pub xhat: Vector,
    pub u: Vector,
    pub action: u8,
    /// `V(η_h)` with `η_h = (x(t_h), x̂(t_{h−1}))`.
    pub v: f64,
}

impl Stepper {
    pub fn new(plant: &PlantModel, dp: DiscretePlant, signal: Option<Disturbance>, substeps: usize) -> Self {
        let selectors = (0..=dp.sensors())
            .map(|a| selection_matrices(a as u8, &dp.blocks).expect("action in range"))
            .collect();
        Self {
            a: plant.a.clone(),
            k: plant.k.clone(),
            d: plant.d.clone(),
            signal,
            substeps: substeps.max(1),
            selectors,
            dp,
        }
    }

    /// `w̃(t_h) = ∫₀ᵀ e^{A(T−s)} D w(t_h + s) ds` by RK4.
    pub fn disturbance_increment(&self, t_h: f64) -> Option<Vector> {
        let (d, w) = (self.d.as_ref()?, self.signal.as_ref()?);
        let h = self.dp.t / self.substeps as f64;
        let ones = Vector::from_element(d.ncols(), 1.0);
        let dcol = d * ones;
        let f = |s: f64, z: &Vector| &self.a * z + &dcol * w.value(t_h + s);
        let mut z = Vector::zeros(self.a.nrows());
        for i in 0..self.substeps {
            let s = i as f64 * h;
            let k1 = f(s, &z);
            let k2 = f(s + h / 2.0, &(&z + &k1 * (h / 2.0)));
            let k3 = f(s + h / 2.0, &(&z + &k2 * (h / 2.0)));
            let k4 = f(s + h, &(&z + &k3 * h));
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Some(z)
    }

    /// One period with `action`; returns `(x̂(t_h), u(t_h), x(t_{h+1}))`.
    pub fn step(&self, x: &Vector, xhat_prev: &Vector, action: u8, h: usize) -> (Vector, Vector, Vector) {
        let (ms, ns) = &self.selectors[usize::from(action)];
        let xhat = ms * x + ns * xhat_prev;
        let u = &self.k * &xhat;
        let mut next = &self.dp.a_t * x + &self.dp.b_t * &u;
        if let Some(w) = self.disturbance_increment(h as f64 * self.dp.t) {
            next += w;
        }
        (xhat, u, next)
    }
}

/// Runs a fixed action schedule from `η₀`; returns the collective states
/// `η_0, …, η_len`.
pub fn run_schedule(
    plant: &PlantModel,
    t: f64,
    eta0: &Vector,
    actions: &[u8],
    signal: Option<Disturbance>,
    substeps: usize,
) -> Result<Vec<Vector>> {
    let dp = DiscretePlant::new(plant, t)?;
    let n = dp.n();
    if eta0.len() != 2 * n {
        return Err(Error::Dimension(format!("eta0 has {} entries, expected {}", eta0.len(), 2 * n)));
    }
    if let Some(&a) = actions.iter().find(|&&a| usize::from(a) > dp.sensors()) {
        return Err(Error::Domain(format!("action {a} exceeds sensor count {}", dp.sensors())));
    }
    let stepper = Stepper::new(plant, dp, signal, substeps);
    let mut x = eta0.rows(0, n).into_owned();
    let mut xhat = eta0.rows(n, n).into_owned();
    let mut out = vec![eta0.clone()];
    for (h, &a) in actions.iter().enumerate() {
        let (xh, _, next) = stepper.step(&x, &xhat, a, h);
        x = next;
        xhat = xh;
        out.push(collective_state(&x, &xhat));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationMetrics {
    pub steps: usize,
    pub readings: usize,
    pub idle_fraction: f64,
    pub utilization_reduction: f64,
}

/// `1 − readings/(m · steps)`.
pub fn utilization_metrics(actions: &[u8], m: usize) -> UtilizationMetrics {
    let steps = actions.len();
    let readings = actions.iter().filter(|&&a| a != 0).count();
    let reduction = if steps == 0 {
        0.0
    } else {
        1.0 - readings as f64 / (m as f64 * steps as f64)
    };
    UtilizationMetrics { steps, readings, idle_fraction: reduction, utilization_reduction: reduction }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub records: Vec<StepRecord>,
    /// Step index at which each decision was taken.
    pub boundaries: Vec<usize>,
    pub decisions: Vec<TriggerDecision>,
    pub initial_v: f64,
    pub final_eta: Vector,
    pub final_v: f64,
    pub metrics: UtilizationMetrics,
}

impl SimTrace {
    pub fn actions(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.action).collect()
    }

    /// `V(η_k)` at every decision instant followed by the final value.
    pub fn boundary_values(&self) -> Vec<f64> {
        self.boundaries
            .iter()
            .map(|&h| self.records[h].v)
            .chain(std::iter::once(self.final_v))
            .collect()
    }

    /// Decision times `τ_k` followed by the final time.
    pub fn boundary_times(&self, t: f64) -> Vec<f64> {
        self.boundaries
            .iter()
            .map(|&h| h as f64 * t)
            .chain(std::iter::once(self.records.len() as f64 * t))
            .collect()
    }
}

/// Certified mechanism plus everything needed to run it.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SimConfig,
    pub dp: DiscretePlant,
    pub bank: HorizonBank,
    pub consts: Option<GrowthConstants>,
    pub policy: Policy,
}

/// Maximum number of `σ*` candidates tried before giving up.
pub const SIGMA_STAR_ATTEMPTS: usize = 64;

/// Discretises, enumerates, picks `σ*`, synthesises the certificate and,
/// for offline modes, builds the region table.
///
/// Without an explicit `sigma_star`, candidates are the Schur-stable
/// horizons ordered by decreasing metric, increasing spectral radius and
/// lexicographic order; the first one whose certificate exists is used.
pub fn prepare(config: &SimConfig) -> Result<Scenario> {
    config.validate()?;
    let dp = DiscretePlant::new(&config.plant, config.t)?;
    let bank = HorizonBank::build(&dp, config.l_min, config.l_max, config.horizon_cap)?;
    let consts = if config.mode.is_perturbed() {
        let varpi = disturbance_step_bound(&config.plant, config.t)?;
        Some(growth_constants(&dp, config.l_max, varpi))
    } else {
        None
    };
    let candidates = match &config.sigma_star {
        Some(s) => vec![bank
            .index_of(s)
            .ok_or_else(|| Error::Config(format!("sigma_star {s} is not an enumerated horizon")))?],
        None => bank.stable_candidates(),
    };
    if candidates.is_empty() {
        return Err(Error::Infeasible(format!(
            "no Schur-stable horizon with length in [{}, {}] at T = {}",
            config.l_min, config.l_max, config.t
        )));
    }
    let mut last_err = None;
    for &i in candidates.iter().take(SIGMA_STAR_ATTEMPTS) {
        match build_policy(config, &dp, &bank, consts.as_ref(), i) {
            Ok(policy) => return Ok(Scenario { config: config.clone(), dp, bank, consts, policy }),
            Err(e @ Error::Infeasible(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one candidate tried"))
}

fn build_policy(
    config: &SimConfig,
    dp: &DiscretePlant,
    bank: &HorizonBank,
    consts: Option<&GrowthConstants>,
    star: usize,
) -> Result<Policy> {
    let sigma = &bank.horizons[star];
    let phi = &bank.transitions[star];
    let dim = 2 * dp.n();
    match config.mode {
        Mode::OnlineUnperturbed => {
            let cert = synthesize_unperturbed(phi, sigma, config.beta, config.t)?;
            let rule = OnlineUnperturbedRule::new(&cert, bank)?;
            Ok(Policy::OnlineUnperturbed { cert, rule })
        }
        Mode::OfflineUnperturbed => {
            let cert = synthesize_unperturbed(phi, sigma, config.beta, config.t)?;
            let regions = make_partition(dim, config.regions)?;
            let table = OfflineTable::build_unperturbed(&cert, bank, &regions)?;
            Ok(Policy::OfflineUnperturbed { cert, regions, table })
        }
        Mode::OnlinePerturbed => {
            let consts = consts.expect("perturbed constants");
            let cert = synthesize_perturbed_online(phi, sigma, config.beta, config.t, consts, config.gamma)?;
            let rule = OnlinePerturbedRule::new(&cert, consts, bank)?;
            Ok(Policy::OnlinePerturbed { cert, rule })
        }
        Mode::OfflinePerturbed => {
            let consts = consts.expect("perturbed constants");
            let cert = synthesize_perturbed_offline(
                phi,
                sigma,
                config.beta,
                config.t,
                consts,
                config.gamma1,
                config.gamma2,
            )?;
            let regions = make_partition(dim, config.regions)?;
            let table = OfflineTable::build_perturbed(&cert, consts, bank, &regions)?;
            Ok(Policy::OfflinePerturbed { cert, regions, table })
        }
    }
}

impl Scenario {
    pub fn sigma_star(&self) -> &Horizon {
        match &self.policy {
            Policy::OnlineUnperturbed { cert, .. } | Policy::OfflineUnperturbed { cert, .. } => &cert.sigma_star,
            Policy::OnlinePerturbed { cert, .. } => &cert.sigma_star,
            Policy::OfflinePerturbed { cert, .. } => &cert.sigma_star,
        }
    }

    pub fn stepper(&self) -> Stepper {
        Stepper::new(
            &self.config.plant,
            self.dp.clone(),
            self.config.disturbance.clone(),
            self.config.substeps,
        )
    }

    /// Runs whole horizons until at least `total_steps` periods elapsed.
    pub fn run(&self) -> SimTrace {
        self.run_with_seed(self.config.seed)
    }

    pub fn run_with_seed(&self, seed: u64) -> SimTrace {
        let n = self.dp.n();
        let p = self.policy.lyapunov_matrix();
        let stepper = self.stepper();
        let eta0 = self.config.initial_collective();
        let mut x = eta0.rows(0, n).into_owned();
        let mut xhat_prev = eta0.rows(n, n).into_owned();
        let mut records = Vec::with_capacity(self.config.total_steps + self.config.l_max);
        let mut boundaries = Vec::new();
        let mut decisions = Vec::new();
        let mut h = 0usize;
        let mut k = 0u64;
        while h < self.config.total_steps {
            let eta = collective_state(&x, &xhat_prev);
            let decision = self.policy.decide(&eta, &self.bank, seed, k);
            boundaries.push(h);
            for &a in decision.horizon.actions() {
                let eta = collective_state(&x, &xhat_prev);
                let (xhat, u, next) = stepper.step(&x, &xhat_prev, a, h);
                records.push(StepRecord {
                    step: h,
                    t: h as f64 * self.config.t,
                    x: x.clone(),
                    xhat: xhat.clone(),
                    u,
                    action: a,
                    v: quad_form(p, &eta),
                });
                x = next;
                xhat_prev = xhat;
                h += 1;
            }
            decisions.push(decision);
            k += 1;
        }
        let final_eta = collective_state(&x, &xhat_prev);
        let actions: Vec<u8> = records.iter().map(|r| r.action).collect();
        SimTrace {
            initial_v: quad_form(p, &eta0),
            final_v: quad_form(p, &final_eta),
            final_eta,
            metrics: utilization_metrics(&actions, self.dp.sensors()),
            records,
            boundaries,
            decisions,
        }
    }
}

/// [`prepare`] followed by [`Scenario::run`].
pub fn simulate(config: &SimConfig) -> Result<(Scenario, SimTrace)> {
    let scenario = prepare(config)?;
    let trace = scenario.run();
    Ok((scenario, trace))
}

/// First boundary with `V ≤ 1` and the largest later boundary value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuubReport {
    pub mu: f64,
    pub entered_at: Option<usize>,
    pub max_v_after: f64,
    pub contained: bool,
}

pub fn guub_containment(trace: &SimTrace, mu: f64, tol: f64) -> GuubReport {
    let values = trace.boundary_values();
    let entered = values.iter().position(|&v| v <= 1.0);
    let max_after = entered.map_or(f64::NAN, |i| values[i..].iter().copied().fold(f64::NEG_INFINITY, f64::max));
    GuubReport {
        mu,
        entered_at: entered,
        max_v_after: max_after,
        contained: entered.is_some() && max_after <= mu + tol,
    }
}

/// Largest violation of `V(η_{k+1}) ≤ e^{−β(τ_{k+1}−τ_k)} V(η_k)`,
/// relative to `V(η_k)`; nonpositive when the decay holds.
pub fn worst_decay_violation(trace: &SimTrace, beta: f64, t: f64) -> f64 {
    let v = trace.boundary_values();
    let tau = trace.boundary_times(t);
    v.windows(2)
        .zip(tau.windows(2))
        .filter(|(w, _)| w[0] > 0.0)
        .map(|(w, s)| (w[1] - (-beta * (s[1] - s[0])).exp() * w[0]) / w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest `T` in `[lo, hi]` keeping full periodic sampling Schur-stable,
/// by bisection on the spectral radius.
pub fn schur_threshold(plant: &PlantModel, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::Domain(format!("invalid bisection range [{lo}, {hi}] / tol {tol}")));
    }
    let radius = |t: f64| -> Result<f64> {
        let dp = DiscretePlant::new(plant, t)?;
        spectral_radius(&dp.full_sampling_matrix())
    };
    if radius(lo)? >= 1.0 {
        return Err(Error::Range { lo, hi });
    }
    if radius(hi)? < 1.0 {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if radius(mid)? < 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
