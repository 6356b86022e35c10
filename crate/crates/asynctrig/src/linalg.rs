//! Dense matrix kernels: exponential, zero-order-hold integrals, eigenvalue
//! bounds, spectral norm, discrete Lyapunov solve and PSD tests.
//!
//! Storage, LU and the eigen decompositions come from `nalgebra`; the
//! exponential and the Lyapunov solve are implemented here.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default tolerance for PSD checks.
pub const PSD_TOL: f64 = 1e-9;
/// Default bound for the Schur test (`rho < SCHUR_BOUND`).
pub const SCHUR_BOUND: f64 = 1.0 - 1e-9;
/// Relative asymmetry accepted by the symmetric eigen routines.
pub const SYM_TOL: f64 = 1e-9;

/// Builds a matrix from row-major entries, rejecting non-finite values.
pub fn matrix(rows: usize, cols: usize, entries: &[f64]) -> Result<Matrix> {
    if entries.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix entries must be finite".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, entries))
}

/// Builds a matrix from nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    matrix(rows.len(), cols, &flat)
}

/// Row-major nested representation, the inverse of [`from_rows`].
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `e^{A t}` by scaling and squaring with a degree-13 Padé approximant.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    ensure_square(a, "exponent")?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("time {t} is not finite")));
    }
    let n = a.nrows();
    let x = a * t;
    let norm1 = x
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let x = x / 2f64.powi(s);
    let id = Matrix::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let b = &PADE13;
    let inner_u = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]);
    let u = &x * (inner_u + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1]);
    let inner_v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]);
    let v = inner_v + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];
    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Construction("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `(e^{AT}, ∫₀ᵀ e^{As} B ds)` from one augmented exponential.
pub fn zoh_pair(a: &Matrix, b: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    ensure_square(a, "state matrix")?;
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "input matrix has {} rows, state has {}",
            b.nrows(),
            a.nrows()
        )));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("sampling period {t} must be positive")));
    }
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = Matrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = mat_exp(&aug, t)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    ))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    ensure_square(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, 100_000) {
        return Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max));
    }
    // Gelfand's formula through repeated normalised squaring.
    let mut p = m.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..40 {
        let nrm = p.norm();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        p /= nrm;
        log_scale = 2.0 * (log_scale + nrm.ln());
        p = &p * &p;
        k *= 2.0;
    }
    Ok(((log_scale + p.norm().ln()) / k).exp())
}

/// `(S + Sᵀ)/2`.
pub fn symmetrize(s: &Matrix) -> Matrix {
    (s + s.transpose()) * 0.5
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    ensure_square(s, "symmetric matrix")?;
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > SYM_TOL * scale {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

fn eigenvalues(s: &Matrix) -> Vector {
    SymmetricEigen::new(symmetrize(s)).eigenvalues
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn sym_eig_bounds(s: &Matrix) -> Result<(f64, f64)> {
    check_symmetric(s)?;
    let ev = eigenvalues(s);
    Ok((ev.min(), ev.max()))
}

/// Smallest eigenvalue of the symmetric part; no symmetry check.
pub fn lambda_min(s: &Matrix) -> f64 {
    eigenvalues(s).min()
}

/// Largest eigenvalue of the symmetric part; no symmetry check.
pub fn lambda_max(s: &Matrix) -> f64 {
    eigenvalues(s).max()
}

/// `‖M‖₂ = sqrt(λ_max(MᵀM))`.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() < m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    lambda_max(&g).max(0.0).sqrt()
}

/// Solves `ΦᵀPΦ − ρP = −Q` through the Kronecker form
/// `(Φᵀ⊗Φᵀ − ρI) vec(P) = −vec(Q)`.
pub fn solve_discrete_lyapunov(phi: &Matrix, rho: f64, q: &Matrix) -> Result<Matrix> {
    ensure_square(phi, "transition matrix")?;
    check_symmetric(q)?;
    if q.nrows() != phi.nrows() {
        return Err(Error::Dimension("Q and Φ sizes differ".into()));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("rate {rho} outside (0, 1]")));
    }
    let radius = spectral_radius(phi)?;
    let bound = rho.sqrt();
    if radius >= bound * SCHUR_BOUND {
        return Err(Error::Infeasible(format!(
            "spectral radius {radius:.6} is not below sqrt(rate) = {bound:.6}"
        )));
    }
    let n = phi.nrows();
    let pt = phi.transpose();
    let mut sys = pt.kronecker(&pt);
    for i in 0..n * n {
        sys[(i, i)] -= rho;
    }
    let rhs = -Vector::from_column_slice(q.as_slice());
    let x = sys.lu().solve(&rhs).ok_or_else(|| {
        Error::Infeasible(format!("singular Lyapunov system (spectral radius {radius:.6})"))
    })?;
    let p = symmetrize(&Matrix::from_column_slice(n, n, x.as_slice()));
    let resid = (phi.transpose() * &p * phi - &p * rho + q).norm();
    if resid > 1e-8 * q.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Infeasible(format!(
            "Lyapunov residual {resid:.3e} too large (spectral radius {radius:.6})"
        )));
    }
    Ok(p)
}

/// `λ_min(S) ≥ −tol` on the symmetric part of `S`.
pub fn is_psd(s: &Matrix, tol: f64) -> bool {
    s.nrows() == s.ncols() && lambda_min(s) >= -tol
}

/// `xᵀ S x`.
pub fn quad_form(s: &Matrix, x: &Vector) -> f64 {
    x.dot(&(s * x))
}

/// Serde adapter writing matrices as row-major nested arrays.
pub mod rows {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Serde adapter for optional matrices.
pub mod opt_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Matrix;

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(super::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
        use serde::de::Error as _;
        match Option::<Vec<Vec<f64>>>::deserialize(d)? {
            None => Ok(None),
            Some(rows) => super::from_rows(&rows).map(Some).map_err(D::Error::custom),
        }
    }
}
