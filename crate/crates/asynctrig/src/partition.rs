//! Conic covering of the collective state space and the S-procedure
//! feasibility test for a horizon restricted to one cone.
//!
//! Region `c` is the double cone `{x : xᵀQ_c x ≥ 0}` with
//! `Q_c = v_c v_cᵀ − cos²θ I`, i.e. all lines within angle `θ` of `v_c`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, lambda_max, quad_form, Matrix, Vector};

/// Relative widening applied to the minimal covering angle.
pub const COVERAGE_MARGIN: f64 = 0.05;
/// Sample count used to size the cones when `dim > 2`.
pub const SIZING_SAMPLES: usize = 60_000;
/// Sample count used to confirm coverage when `dim > 2`.
pub const CHECK_SAMPLES: usize = 100_000;
/// Acceptance threshold of the S-procedure test.
pub const SPROC_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicRegion {
    pub index: usize,
    #[serde(with = "linalg::rows")]
    pub q: Matrix,
    pub direction: Vec<f64>,
    pub half_angle: f64,
}

impl ConicRegion {
    pub fn new(index: usize, direction: &Vector, half_angle: f64) -> Self {
        let v = direction.normalize();
        let c = half_angle.min(FRAC_PI_2).cos();
        let q = &v * v.transpose() - Matrix::identity(v.len(), v.len()) * (c * c);
        Self { index, q, direction: v.iter().copied().collect(), half_angle }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// `xᵀ Q_c x`.
    pub fn form(&self, x: &Vector) -> f64 {
        quad_form(&self.q, x)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.form(x) >= -1e-12 * x.norm_squared()
    }
}

/// `N` cones covering `R^dim`.
pub fn make_partition(dim: usize, n: usize) -> Result<Vec<ConicRegion>> {
    if n == 0 || dim < 2 {
        return Err(Error::Domain(format!("need N >= 1 and dim >= 2, got N = {n}, dim = {dim}")));
    }
    if dim == 2 {
        let theta = (PI / (2.0 * n as f64) * (1.0 + COVERAGE_MARGIN)).min(FRAC_PI_2);
        return Ok((0..n)
            .map(|c| {
                let phi = PI * c as f64 / n as f64;
                ConicRegion::new(c, &Vector::from_vec(vec![phi.cos(), phi.sin()]), theta)
            })
            .collect());
    }
    let dirs = spread_directions(dim, n);
    let sizing = sphere_samples(dim, SIZING_SAMPLES, 0x00c0_ffee);
    let needed = sizing
        .iter()
        .map(|u| nearest_line_angle(&dirs, u))
        .fold(0.0, f64::max);
    let mut theta = (needed * (1.0 + COVERAGE_MARGIN)).min(FRAC_PI_2);
    let check = sphere_samples(dim, CHECK_SAMPLES, 0x0bad_cafe);
    loop {
        let regions: Vec<ConicRegion> = dirs
            .iter()
            .enumerate()
            .map(|(c, v)| ConicRegion::new(c, v, theta))
            .collect();
        if coverage_check(&regions, &check) {
            return Ok(regions);
        }
        if theta >= FRAC_PI_2 {
            return Err(Error::Construction(format!(
                "{n} cones fail to cover R^{dim} at half-angle pi/2"
            )));
        }
        theta = (theta * (1.0 + COVERAGE_MARGIN)).min(FRAC_PI_2);
    }
}

/// True iff every sample lies in some region.
pub fn coverage_check(regions: &[ConicRegion], samples: &[Vector]) -> bool {
    samples.iter().all(|u| regions.iter().any(|r| r.form(u) >= 0.0))
}

/// Lowest index `c` with `xᵀQ_c x ≥ −1e-12‖x‖²`.
pub fn region_of(x: &Vector, regions: &[ConicRegion]) -> usize {
    regions
        .iter()
        .position(|r| r.contains(x))
        .unwrap_or_else(|| {
            // unreachable for a verified cover; fall back to the largest form
            regions
                .iter()
                .map(|r| r.form(x))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
                .0
        })
}

fn nearest_line_angle(dirs: &[Vector], u: &Vector) -> f64 {
    let best = dirs.iter().map(|v| v.dot(u).abs()).fold(0.0, f64::max);
    (best / u.norm()).min(1.0).acos()
}

/// Gaussian directions normalised to the unit sphere.
pub fn sphere_samples(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = Vector::from_iterator(dim, (0..dim).map(|_| gaussian(&mut rng)));
            v.normalize()
        })
        .collect()
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Deterministic, well separated line directions: Halton points mapped to
/// the sphere by Box–Muller, then spread by pairwise repulsion of lines.
fn spread_directions(dim: usize, n: usize) -> Vec<Vector> {
    let coords = dim + dim % 2;
    let mut dirs: Vec<Vector> = (1..=n as u64)
        .map(|i| {
            let mut z = Vec::with_capacity(coords);
            for pair in 0..coords / 2 {
                let b1 = PRIMES[(2 * pair) % PRIMES.len()];
                let b2 = PRIMES[(2 * pair + 1) % PRIMES.len()];
                let u1 = radical_inverse(i, b1).max(1e-12);
                let u2 = radical_inverse(i, b2);
                let r = (-2.0 * u1.ln()).sqrt();
                z.push(r * (2.0 * PI * u2).cos());
                z.push(r * (2.0 * PI * u2).sin());
            }
            z.truncate(dim);
            Vector::from_vec(z).normalize()
        })
        .collect();
    if n == 1 {
        return dirs;
    }
    let step = 0.1 / n as f64;
    for _ in 0..400 {
        let snapshot = dirs.clone();
        for (i, v) in dirs.iter_mut().enumerate() {
            let mut force = Vector::zeros(dim);
            for (j, w) in snapshot.iter().enumerate() {
                if i == j {
                    continue;
                }
                let w = if snapshot[i].dot(w) < 0.0 { -w } else { w.clone() };
                let diff = &snapshot[i] - &w;
                let d = diff.norm().max(1e-6);
                force += diff / (d * d * d);
            }
            *v = (&*v + force * step).normalize();
        }
    }
    dirs
}

/// Maximises a function that is concave in `ε ≥ 0`: `ε = 0`, then a log
/// grid on `[1e-8, 1e8]`, then golden-section refinement in `log ε`.
/// Returns early once `g(ε) ≥ target`.
pub fn maximize_multiplier(g: impl Fn(f64) -> f64, target: f64) -> (f64, f64) {
    let g0 = g(0.0);
    if g0 >= target {
        return (0.0, g0);
    }
    const POINTS: usize = 33;
    let grid: Vec<f64> = (0..POINTS).map(|i| -8.0 + 16.0 * i as f64 / (POINTS - 1) as f64).collect();
    let mut values = Vec::with_capacity(POINTS);
    for &s in &grid {
        let v = g(10f64.powf(s));
        if v >= target {
            return (10f64.powf(s), v);
        }
        values.push(v);
    }
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    if g0 >= best_val {
        return (0.0, g0);
    }
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(POINTS - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = g(10f64.powf(x1));
    let mut f2 = g(10f64.powf(x2));
    let (mut arg, mut val) = (grid[best], best_val);
    for _ in 0..40 {
        if f1.max(f2) >= target {
            break;
        }
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = g(10f64.powf(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = g(10f64.powf(x2));
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > val {
            arg = x;
            val = f;
        }
    }
    (10f64.powf(arg), val)
}

/// Searches `ε ≥ 0` with `λ_max(ΦᵀPΦ − β̄P + εQ_c) ≤ 1e-9`.
pub fn sprocedure_feasible(phi: &Matrix, p: &Matrix, beta_bar: f64, q_c: &Matrix) -> Option<f64> {
    let g = phi.transpose() * p * phi - p * beta_bar;
    sprocedure_on_form(&g, q_c)
}

/// As [`sprocedure_feasible`] with `ΦᵀPΦ − β̄P` precomputed.
pub fn sprocedure_on_form(g: &Matrix, q_c: &Matrix) -> Option<f64> {
    let (eps, val) = maximize_multiplier(|e| -lambda_max(&(g + q_c * e)), -SPROC_TOL);
    (val >= -SPROC_TOL).then_some(eps)
}
