//! Continuous-time plant, ZOH discretisation and the switched collective
//! dynamics `η_{h+1} = Ã_(a) η_h` with `η_h = (x(t_h), x̂(t_{h−1}))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::horizon::{avg_idle_metric, enumerate_horizons, Horizon};
use crate::linalg::{self, mat_exp, spectral_norm, spectral_radius, zoh_pair, Matrix, Vector, SCHUR_BOUND};

/// Continuous-time LTI plant `ẋ = Ax + Bu + Dw`, `u = Kx̂`, with the
/// state split into sensor blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    #[serde(with = "linalg::rows")]
    pub a: Matrix,
    #[serde(with = "linalg::rows")]
    pub b: Matrix,
    #[serde(with = "linalg::rows")]
    pub k: Matrix,
    #[serde(with = "linalg::opt_rows", default)]
    pub d: Option<Matrix>,
    pub blocks: Vec<usize>,
    #[serde(default)]
    pub w_max: f64,
}

impl PlantModel {
    pub fn new(
        a: Matrix,
        b: Matrix,
        k: Matrix,
        d: Option<Matrix>,
        blocks: Vec<usize>,
        w_max: f64,
    ) -> Result<Self> {
        let plant = Self { a, b, k, d, blocks, w_max };
        plant.validate()?;
        Ok(plant)
    }

    /// Re-checks the structural invariants, e.g. after deserialisation.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || n == 0 {
            return Err(Error::Dimension("A must be square and nonempty".into()));
        }
        if self.b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", self.b.nrows())));
        }
        if self.k.nrows() != self.b.ncols() || self.k.ncols() != n {
            return Err(Error::Dimension(format!(
                "K is {}x{}, expected {}x{n}",
                self.k.nrows(),
                self.k.ncols(),
                self.b.ncols()
            )));
        }
        if self.blocks.is_empty() || self.blocks.contains(&0) {
            return Err(Error::Domain("sensor blocks must be nonempty with sizes >= 1".into()));
        }
        if self.blocks.iter().sum::<usize>() != n {
            return Err(Error::Dimension(format!(
                "sensor blocks {:?} do not sum to n = {n}",
                self.blocks
            )));
        }
        if !(self.w_max >= 0.0) || !self.w_max.is_finite() {
            return Err(Error::Domain(format!("w_max = {} must be finite and >= 0", self.w_max)));
        }
        match &self.d {
            Some(d) if d.nrows() != n => {
                return Err(Error::Dimension(format!("D has {} rows, expected {n}", d.nrows())))
            }
            Some(_) if self.w_max == 0.0 => {
                return Err(Error::Domain("D given but w_max = 0".into()))
            }
            None if self.w_max > 0.0 => {
                return Err(Error::Domain("w_max > 0 requires a disturbance map D".into()))
            }
            _ => {}
        }
        for m in [&self.a, &self.b, &self.k].into_iter().chain(self.d.as_ref()) {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("plant matrices must be finite".into()));
            }
        }
        Ok(())
    }

    /// Second-order unstable plant `A = [0 1; −2 3]`, `B = [0; 1]`,
    /// `K = [1 −4]`, one scalar sensor per state.
    pub fn second_order() -> Self {
        Self {
            a: Matrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 3.0]),
            b: Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            k: Matrix::from_row_slice(1, 2, &[1.0, -4.0]),
            d: None,
            blocks: vec![1, 1],
            w_max: 0.0,
        }
    }

    /// [`second_order`](Self::second_order) with `D = [1; 1]` and `|w| ≤ 1`.
    pub fn second_order_perturbed() -> Self {
        Self {
            d: Some(Matrix::from_row_slice(2, 1, &[1.0, 1.0])),
            w_max: 1.0,
            ..Self::second_order()
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn sensors(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_perturbed(&self) -> bool {
        self.w_max > 0.0
    }
}

/// Sampled plant for period `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePlant {
    pub t: f64,
    pub a_t: Matrix,
    pub b_t: Matrix,
    pub bk_t: Matrix,
    pub blocks: Vec<usize>,
}

impl DiscretePlant {
    pub fn new(plant: &PlantModel, t: f64) -> Result<Self> {
        plant.validate()?;
        let (a_t, b_t) = zoh_pair(&plant.a, &plant.b, t)?;
        let bk_t = &b_t * &plant.k;
        Ok(Self { t, a_t, b_t, bk_t, blocks: plant.blocks.clone() })
    }

    pub fn n(&self) -> usize {
        self.a_t.nrows()
    }

    pub fn sensors(&self) -> usize {
        self.blocks.len()
    }

    /// `Ã_(a) = [[A_T + BK_T M, BK_T N], [M, N]]`.
    pub fn step_matrix(&self, action: u8) -> Result<Matrix> {
        let (ms, ns) = selection_matrices(action, &self.blocks)?;
        let n = self.n();
        let mut s = Matrix::zeros(2 * n, 2 * n);
        s.view_mut((0, 0), (n, n)).copy_from(&(&self.a_t + &self.bk_t * &ms));
        s.view_mut((0, n), (n, n)).copy_from(&(&self.bk_t * &ns));
        s.view_mut((n, 0), (n, n)).copy_from(&ms);
        s.view_mut((n, n), (n, n)).copy_from(&ns);
        Ok(s)
    }

    /// `Ã_(0), …, Ã_(m)`.
    pub fn step_matrices(&self) -> Vec<Matrix> {
        (0..=self.sensors())
            .map(|a| self.step_matrix(a as u8).expect("action within alphabet"))
            .collect()
    }

    /// `Φ_σ = Ã_(σ_l) ⋯ Ã_(σ_1)`.
    pub fn horizon_transition(&self, sigma: &Horizon) -> Result<Matrix> {
        if sigma.max_action() as usize > self.sensors() {
            return Err(Error::Domain(format!(
                "horizon {sigma} uses an action above m = {}",
                self.sensors()
            )));
        }
        Ok(transition_from_steps(&self.step_matrices(), sigma))
    }

    /// Full-sampling matrix `[[A_T + BK_T, 0], [I, 0]]`.
    pub fn full_sampling_matrix(&self) -> Matrix {
        let n = self.n();
        let mut s = Matrix::zeros(2 * n, 2 * n);
        s.view_mut((0, 0), (n, n)).copy_from(&(&self.a_t + &self.bk_t));
        s.view_mut((n, 0), (n, n)).fill_with_identity();
        s
    }
}

/// Enumerated horizons with their transition matrices and spectral radii.
#[derive(Clone, Debug)]
pub struct HorizonBank {
    pub sensors: usize,
    pub t: f64,
    pub horizons: Vec<Horizon>,
    pub transitions: Vec<Matrix>,
    pub radii: Vec<f64>,
    pub metrics: Vec<f64>,
}

impl HorizonBank {
    pub fn build(dp: &DiscretePlant, l_min: usize, l_max: usize, cap: usize) -> Result<Self> {
        let m = dp.sensors();
        let horizons = enumerate_horizons(m, l_min, l_max, cap)?;
        let steps = dp.step_matrices();
        let transitions: Vec<Matrix> = horizons
            .par_iter()
            .map(|h| transition_from_steps(&steps, h))
            .collect();
        let radii = transitions
            .par_iter()
            .map(spectral_radius)
            .collect::<Result<Vec<f64>>>()?;
        let metrics = horizons.iter().map(|h| avg_idle_metric(h, m)).collect();
        Ok(Self { sensors: m, t: dp.t, horizons, transitions, radii, metrics })
    }

    pub fn len(&self) -> usize {
        self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }

    pub fn index_of(&self, sigma: &Horizon) -> Option<usize> {
        self.horizons.iter().position(|h| h == sigma)
    }

    /// Schur-stable horizons ordered by decreasing metric, then increasing
    /// spectral radius (to 1e-9), then lexicographically.
    pub fn stable_candidates(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.radii[i] < SCHUR_BOUND).collect();
        idx.sort_by(|&i, &j| {
            self.metrics[j]
                .total_cmp(&self.metrics[i])
                .then(((self.radii[i] * 1e9).round() as i64).cmp(&((self.radii[j] * 1e9).round() as i64)))
                .then(self.horizons[i].cmp(&self.horizons[j]))
        });
        idx
    }
}

/// Ordered product of precomputed step matrices.
pub fn transition_from_steps(steps: &[Matrix], sigma: &Horizon) -> Matrix {
    let mut phi = steps[usize::from(sigma.actions()[0])].clone();
    for &a in &sigma.actions()[1..] {
        phi = &steps[usize::from(a)] * phi;
    }
    phi
}

/// Diagonal selectors `(M, N)` for refreshing sensor block `action`.
pub fn selection_matrices(action: u8, blocks: &[usize]) -> Result<(Matrix, Matrix)> {
    let m = blocks.len();
    if usize::from(action) > m {
        return Err(Error::Domain(format!("action {action} exceeds sensor count {m}")));
    }
    let n: usize = blocks.iter().sum();
    let mut sel = Matrix::zeros(n, n);
    if action > 0 {
        let a = usize::from(action);
        let start: usize = blocks[..a - 1].iter().sum();
        for i in start..start + blocks[a - 1] {
            sel[(i, i)] = 1.0;
        }
    }
    let other = Matrix::identity(n, n) - &sel;
    Ok((sel, other))
}

/// Stacks `(x, x̂)` into the collective state.
pub fn collective_state(x: &Vector, xhat: &Vector) -> Vector {
    let mut eta = Vector::zeros(x.len() + xhat.len());
    eta.rows_mut(0, x.len()).copy_from(x);
    eta.rows_mut(x.len(), xhat.len()).copy_from(xhat);
    eta
}

/// `∫₀ᵀ ‖e^{As} D‖₂ ds` by composite Simpson with `panels` (even) panels,
/// returned with a Richardson error estimate.
pub fn disturbance_integral(a: &Matrix, d: &Matrix, t: f64, panels: usize) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("sampling period {t} must be positive")));
    }
    let panels = panels.max(2) + panels % 2;
    let h = t / panels as f64;
    let values: Vec<f64> = (0..=panels)
        .map(|i| mat_exp(a, i as f64 * h).map(|e| spectral_norm(&(e * d))))
        .collect::<Result<_>>()?;
    let simpson = |stride: usize| {
        let hh = h * stride as f64;
        let last = values.len() - 1;
        let mut acc = values[0] + values[last];
        for (j, i) in (stride..last).step_by(stride).enumerate() {
            acc += if j % 2 == 0 { 4.0 } else { 2.0 } * values[i];
        }
        acc * hh / 3.0
    };
    let fine = simpson(1);
    let err = if panels % 4 == 0 {
        (fine - simpson(2)).abs() / 15.0
    } else {
        0.0
    };
    Ok((fine, err))
}

/// Certified per-step disturbance bound
/// `ϖ = w_max ∫₀ᵀ ‖e^{As}D‖₂ ds` (quadrature plus its error estimate).
pub fn disturbance_step_bound(plant: &PlantModel, t: f64) -> Result<f64> {
    let d = match (&plant.d, plant.w_max > 0.0) {
        (Some(d), true) => d,
        _ => return Err(Error::Domain("plant has no disturbance".into())),
    };
    let (value, err) = disturbance_integral(&plant.a, d, t, 2000)?;
    Ok(plant.w_max * (value + err))
}

/// Growth constants of the switched dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    /// `C = max_a ‖Ã_(a)‖₂`.
    pub c: f64,
    /// `C' = ‖Ã_(0)‖₂`.
    pub c_prime: f64,
    pub varpi: f64,
    /// `ϖ Σ_{q<l} C^q`, indexed by `l − 1`.
    pub chi_linear: Vec<f64>,
    /// Squares of `chi_linear`.
    pub chi_squared: Vec<f64>,
}

impl GrowthConstants {
    pub fn chi_linear(&self, len: usize) -> f64 {
        self.chi_linear[len - 1]
    }

    pub fn chi_squared(&self, len: usize) -> f64 {
        self.chi_squared[len - 1]
    }
}

pub fn growth_constants(dp: &DiscretePlant, l_max: usize, varpi: f64) -> GrowthConstants {
    let norms: Vec<f64> = dp.step_matrices().iter().map(spectral_norm).collect();
    let c = norms.iter().copied().fold(0.0, f64::max);
    growth_from(c, norms[0], varpi, l_max)
}

/// Growth constants from already known `C`, `C'`.
pub fn growth_from(c: f64, c_prime: f64, varpi: f64, l_max: usize) -> GrowthConstants {
    let mut chi_linear = Vec::with_capacity(l_max);
    let mut sum = 0.0;
    let mut pow = 1.0;
    for _ in 0..l_max {
        sum += pow;
        pow *= c;
        chi_linear.push(varpi * sum);
    }
    let chi_squared = chi_linear.iter().map(|v| v * v).collect();
    GrowthConstants { c, c_prime, varpi, chi_linear, chi_squared }
}

/// Accumulated horizon disturbance `w̄ = Σ_i Ã_(σ_l)⋯Ã_(σ_{i+1}) [w̃_i; 0]`.
pub fn aggregate_disturbance(steps: &[Matrix], sigma: &Horizon, w_steps: &[Vector]) -> Vector {
    let n2 = steps[0].nrows();
    let mut acc = Vector::zeros(n2);
    for (&a, w) in sigma.actions().iter().zip(w_steps) {
        acc = &steps[usize::from(a)] * acc;
        let mut top = acc.rows_mut(0, w.len());
        top += w;
    }
    acc
}
