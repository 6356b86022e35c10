//! Lyapunov and LMI certificates backing the four triggering mechanisms.
//!
//! Synthesis avoids a general SDP solver. The unperturbed certificate is an
//! exact Lyapunov solve; the perturbed ones use a Lyapunov ansatz followed by
//! a scalar search, and every result is re-checked by an eigenvalue test on
//! the assembled matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::horizon::Horizon;
use crate::linalg::{
    self, is_psd, lambda_max, lambda_min, quad_form, solve_discrete_lyapunov, spectral_radius,
    Matrix, Vector, PSD_TOL,
};
use crate::plant::GrowthConstants;

/// `P` with `Φ*ᵀPΦ* − e^{−β|σ*|T}P ≺ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnperturbedCertificate {
    #[serde(with = "linalg::rows")]
    pub p: Matrix,
    pub beta: f64,
    pub t: f64,
    pub sigma_star: Horizon,
}

impl UnperturbedCertificate {
    /// `e^{−β l T}`.
    pub fn rate(&self, len: usize) -> f64 {
        (-self.beta * len as f64 * self.t).exp()
    }

    /// Strict decrease on `σ*` with margin `tol`.
    pub fn verify(&self, phi_star: &Matrix, tol: f64) -> bool {
        let rate = self.rate(self.sigma_star.len());
        let gap = &self.p * rate - phi_star.transpose() * &self.p * phi_star;
        lambda_min(&self.p) > 0.0 && lambda_min(&gap) > tol
    }
}

/// `(P, M)` satisfying both perturbed online LMIs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedOnlineCertificate {
    #[serde(with = "linalg::rows")]
    pub p: Matrix,
    #[serde(with = "linalg::rows")]
    pub m: Matrix,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub t: f64,
    pub sigma_star: Horizon,
    /// `(ϖ Σ_{q<|σ*|} C^q)²`.
    pub chi: f64,
    pub c: f64,
    pub c_prime: f64,
    pub varpi: f64,
    pub mu: f64,
    pub psi: f64,
    /// `λ_max(P M⁻¹ P + P)`.
    pub lambda_pmp: f64,
}

impl PerturbedOnlineCertificate {
    pub fn rate(&self, len: usize) -> f64 {
        (-self.beta * len as f64 * self.t).exp()
    }

    pub fn verify(&self, phi_star: &Matrix, tol: f64) -> bool {
        verify_lmi_pair(
            &self.p,
            &self.m,
            self.gamma,
            self.chi,
            phi_star,
            self.rate(self.sigma_star.len()),
            tol,
        )
    }
}

/// `P` with the three-block offline matrix `U ⪰ 0` on `σ*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedOfflineCertificate {
    #[serde(with = "linalg::rows")]
    pub p: Matrix,
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta: f64,
    pub t: f64,
    pub sigma_star: Horizon,
    /// `ϖ Σ_{q<|σ*|} C^q`.
    pub chi_linear: f64,
    pub scale: f64,
    pub c: f64,
    pub c_prime: f64,
    pub varpi: f64,
    pub mu: f64,
    pub psi: f64,
}

impl PerturbedOfflineCertificate {
    pub fn rate(&self, len: usize) -> f64 {
        (-self.beta * len as f64 * self.t).exp()
    }

    pub fn verify(&self, phi_star: &Matrix, tol: f64) -> bool {
        build_u_c(
            &self.p,
            self.gamma1,
            self.gamma2,
            phi_star,
            self.rate(self.sigma_star.len()),
            self.chi_linear,
            None,
            0.0,
        )
        .map(|u| lambda_min(&self.p) > 0.0 && is_psd(&u, tol))
        .unwrap_or(false)
    }
}

/// Any of the three certificate kinds, tagged for serialisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    Unperturbed(UnperturbedCertificate),
    PerturbedOnline(PerturbedOnlineCertificate),
    PerturbedOffline(PerturbedOfflineCertificate),
}

impl Certificate {
    pub fn p(&self) -> &Matrix {
        match self {
            Certificate::Unperturbed(c) => &c.p,
            Certificate::PerturbedOnline(c) => &c.p,
            Certificate::PerturbedOffline(c) => &c.p,
        }
    }

    pub fn sigma_star(&self) -> &Horizon {
        match self {
            Certificate::Unperturbed(c) => &c.sigma_star,
            Certificate::PerturbedOnline(c) => &c.sigma_star,
            Certificate::PerturbedOffline(c) => &c.sigma_star,
        }
    }

    /// Ultimate bound `μ` of the perturbed certificates.
    pub fn mu(&self) -> Option<f64> {
        match self {
            Certificate::Unperturbed(_) => None,
            Certificate::PerturbedOnline(c) => Some(c.mu),
            Certificate::PerturbedOffline(c) => Some(c.mu),
        }
    }

    pub fn verify(&self, phi_star: &Matrix, tol: f64) -> bool {
        match self {
            Certificate::Unperturbed(c) => c.verify(phi_star, tol),
            Certificate::PerturbedOnline(c) => c.verify(phi_star, tol),
            Certificate::PerturbedOffline(c) => c.verify(phi_star, tol),
        }
    }
}

fn check_rate_inputs(beta: f64, t: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("decay parameter beta = {beta} must be >= 0")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("sampling period {t} must be positive")));
    }
    Ok(())
}

/// Solves `Φ*ᵀPΦ* − e^{−β|σ*|T}P = −I`.
pub fn synthesize_unperturbed(
    phi_star: &Matrix,
    sigma_star: &Horizon,
    beta: f64,
    t: f64,
) -> Result<UnperturbedCertificate> {
    check_rate_inputs(beta, t)?;
    let rate = (-beta * sigma_star.len() as f64 * t).exp();
    let radius = spectral_radius(phi_star)?;
    let bound = rate.sqrt();
    if radius >= bound * linalg::SCHUR_BOUND {
        return Err(Error::Infeasible(format!(
            "horizon {sigma_star}: spectral radius {radius:.6} is not below e^(-beta|sigma|T/2) = {bound:.6}"
        )));
    }
    let n = phi_star.nrows();
    let p = solve_discrete_lyapunov(phi_star, rate, &Matrix::identity(n, n))?;
    let cert = UnperturbedCertificate { p, beta, t, sigma_star: sigma_star.clone() };
    if !cert.verify(phi_star, PSD_TOL) {
        return Err(Error::Infeasible(format!(
            "horizon {sigma_star}: Lyapunov solution failed the strict decrease check"
        )));
    }
    Ok(cert)
}

/// `(μ, ψ)` with `μ = λ_max(P)(C'/λ_min(P) + ϖ)²` and `ψ = μ/λ_min(P)`.
pub fn ultimate_bound(p: &Matrix, c_prime: f64, varpi: f64) -> (f64, f64) {
    let lo = lambda_min(p);
    let hi = lambda_max(p);
    let mu = hi * (c_prime / lo + varpi).powi(2);
    (mu, mu / lo)
}

fn stack2(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = Matrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

/// Checks `(β̄ − γ)P − Φᵀ(P+M)Φ ⪰ 0` and `[[M, P], [P, (γ/χ)I − P]] ⪰ 0`.
///
/// `χ = 0` removes the disturbance term, so the second condition reduces
/// to `M ⪰ 0`.
pub fn verify_lmi_pair(
    p: &Matrix,
    m: &Matrix,
    gamma: f64,
    chi: f64,
    phi: &Matrix,
    beta_bar: f64,
    tol: f64,
) -> bool {
    let lmi1 = p * (beta_bar - gamma) - phi.transpose() * (p + m) * phi;
    if !is_psd(&lmi1, tol) {
        return false;
    }
    if chi <= 0.0 {
        return is_psd(m, tol);
    }
    let n = p.nrows();
    let corner = Matrix::identity(n, n) * (gamma / chi) - p;
    is_psd(&stack2(m, p, p, &corner), tol)
}

/// `λ_max(P M⁻¹ P + P)`; errors when `M` is not positive definite.
pub fn lambda_pmp(p: &Matrix, m: &Matrix) -> Result<f64> {
    let chol = linalg::symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Domain("M is not positive definite".into()))?;
    Ok(lambda_max(&(p * chol.solve(p) + p)))
}

/// `diag((β̄−γ)P − Φᵀ(P+M)Φ, γ − χ λ_max(PM⁻¹P + P))`.
pub fn build_u_sigma(
    p: &Matrix,
    m: &Matrix,
    gamma: f64,
    phi: &Matrix,
    beta_bar: f64,
    chi_squared: f64,
) -> Result<Matrix> {
    let lam = lambda_pmp(p, m)?;
    let n = p.nrows();
    let mut u = Matrix::zeros(n + 1, n + 1);
    let top = p * (beta_bar - gamma) - phi.transpose() * (p + m) * phi;
    u.view_mut((0, 0), (n, n)).copy_from(&linalg::symmetrize(&top));
    u[(n, n)] = gamma - chi_squared * lam;
    Ok(u)
}

/// `(η; 1)ᵀ U (η; 1)`.
pub fn augmented_form(u: &Matrix, eta: &Vector) -> f64 {
    let n = eta.len();
    let mut z = Vector::from_element(n + 1, 1.0);
    z.rows_mut(0, n).copy_from(eta);
    quad_form(u, &z)
}

/// The ansatz `M = αP` over `α ∈ {2^k : k = −6..6}`; `P` solves the
/// Lyapunov equation at rate `(β̄ − γ)/(1 + α)` and is scaled so that
/// `λ_max(P)(1 + 1/α) = 0.9 γ/χ`. The pair with the smallest `μ` wins.
pub fn synthesize_perturbed_online(
    phi_star: &Matrix,
    sigma_star: &Horizon,
    beta: f64,
    t: f64,
    consts: &GrowthConstants,
    gamma: f64,
) -> Result<PerturbedOnlineCertificate> {
    check_rate_inputs(beta, t)?;
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must be positive")));
    }
    let len = sigma_star.len();
    let beta_bar = (-beta * len as f64 * t).exp();
    let chi = consts.chi_squared(len);
    let n = phi_star.nrows();
    let mut best: Option<PerturbedOnlineCertificate> = None;
    for k in -6..=6 {
        let alpha = 2f64.powi(k);
        let rate = (beta_bar - gamma) / (1.0 + alpha);
        if rate <= 0.0 {
            continue;
        }
        let Ok(p0) = solve_discrete_lyapunov(phi_star, rate, &Matrix::identity(n, n)) else {
            continue;
        };
        let scale = if chi > 0.0 {
            0.9 * (gamma / chi) / ((1.0 + 1.0 / alpha) * lambda_max(&p0))
        } else {
            1.0
        };
        let p = p0 * scale;
        let m = &p * alpha;
        if !verify_lmi_pair(&p, &m, gamma, chi, phi_star, beta_bar, PSD_TOL) {
            continue;
        }
        let (mu, psi) = ultimate_bound(&p, consts.c_prime, consts.varpi);
        if best.as_ref().is_some_and(|b| b.mu <= mu) {
            continue;
        }
        let lambda_pmp = lambda_pmp(&p, &m)?;
        best = Some(PerturbedOnlineCertificate {
            p,
            m,
            gamma,
            alpha,
            beta,
            t,
            sigma_star: sigma_star.clone(),
            chi,
            c: consts.c,
            c_prime: consts.c_prime,
            varpi: consts.varpi,
            mu,
            psi,
            lambda_pmp,
        });
    }
    best.ok_or_else(|| {
        let radius = spectral_radius(phi_star).unwrap_or(f64::NAN);
        Error::Infeasible(format!(
            "horizon {sigma_star}: no alpha in 2^[-6, 6] satisfies the online LMIs \
             (spectral radius {radius:.6}, needs < sqrt(({beta_bar:.6} - {gamma})/(1 + alpha)))"
        ))
    })
}

/// Offline perturbed block matrix
/// `[[−ΦᵀPΦ + (β̄−γ₁)P − εQ_c, −ΦᵀP, 0], [−PΦ, (γ₂/χ)I − P, 0], [0, 0, γ₁ − γ₂]]`.
/// `q_c = None` drops the region term.
#[allow(clippy::too_many_arguments)]
pub fn build_u_c(
    p: &Matrix,
    gamma1: f64,
    gamma2: f64,
    phi: &Matrix,
    beta_bar: f64,
    chi_linear: f64,
    q_c: Option<&Matrix>,
    eps: f64,
) -> Result<Matrix> {
    if !(chi_linear > 0.0) {
        return Err(Error::Domain(format!("chi = {chi_linear} must be positive")));
    }
    if eps < 0.0 {
        return Err(Error::Domain(format!("multiplier {eps} must be >= 0")));
    }
    let pp = p * phi;
    let mut u11 = p * (beta_bar - gamma1) - phi.transpose() * &pp;
    if let Some(q) = q_c {
        u11 -= q * eps;
    }
    let n = p.nrows();
    let u22 = Matrix::identity(n, n) * (gamma2 / chi_linear) - p;
    let mut u = Matrix::zeros(2 * n + 1, 2 * n + 1);
    u.view_mut((0, 0), (2 * n, 2 * n))
        .copy_from(&stack2(&u11, &(-pp.transpose()), &(-&pp), &u22));
    u[(2 * n, 2 * n)] = gamma1 - gamma2;
    Ok(linalg::symmetrize(&u))
}

/// Lyapunov ansatz at rate `β̄ − γ₁` scaled over a 121-point log grid on
/// `[1e-6, 1e6]`; the largest scale whose assembled matrix is PSD wins.
pub fn synthesize_perturbed_offline(
    phi_star: &Matrix,
    sigma_star: &Horizon,
    beta: f64,
    t: f64,
    consts: &GrowthConstants,
    gamma1: f64,
    gamma2: f64,
) -> Result<PerturbedOfflineCertificate> {
    check_rate_inputs(beta, t)?;
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::Domain(format!(
            "gamma1 = {gamma1} and gamma2 = {gamma2} must be positive"
        )));
    }
    if gamma2 > gamma1 {
        return Err(Error::Infeasible(format!(
            "gamma2 = {gamma2} exceeds gamma1 = {gamma1}, the last diagonal block is negative"
        )));
    }
    let len = sigma_star.len();
    let beta_bar = (-beta * len as f64 * t).exp();
    let rate = beta_bar - gamma1;
    if rate <= 0.0 {
        return Err(Error::Infeasible(format!(
            "gamma1 = {gamma1} leaves no decay margin below {beta_bar:.6}"
        )));
    }
    let chi_linear = consts.chi_linear(len);
    let n = phi_star.nrows();
    let p0 = solve_discrete_lyapunov(phi_star, rate, &Matrix::identity(n, n))?;
    for i in 0..121 {
        let scale = 10f64.powf(6.0 - 12.0 * i as f64 / 120.0);
        let p = &p0 * scale;
        let u = build_u_c(&p, gamma1, gamma2, phi_star, beta_bar, chi_linear, None, 0.0)?;
        if is_psd(&u, PSD_TOL) {
            let (mu, psi) = ultimate_bound(&p, consts.c_prime, consts.varpi);
            return Ok(PerturbedOfflineCertificate {
                p,
                gamma1,
                gamma2,
                beta,
                t,
                sigma_star: sigma_star.clone(),
                chi_linear,
                scale,
                c: consts.c,
                c_prime: consts.c_prime,
                varpi: consts.varpi,
                mu,
                psi,
            });
        }
    }
    Err(Error::Infeasible(format!(
        "horizon {sigma_star}: no scaling in [1e-6, 1e6] makes the offline block matrix PSD"
    )))
}
