//! V-geometric ergodicity constants. A drift/minorization certificate
//! `(λ, b, d, m, ε)` witnesses
//!
//! ```text
//! QV ≤ λV + b,     {V ≤ d} is (m, ε)-small,     λ + 2b/(1+d) < 1,
//! ```
//!
//! and implies `‖ξQⁿ − π‖_V ≤ c {ξ(V) + π(V)} ρⁿ` with fully explicit
//! `(ρ, c)`. This module computes `(ρ, c)`, the `V^α` deviation envelope and
//! the stationary variance envelope that downstream bounds consume.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Witness for the drift and minorization conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftCertificate {
    /// Drift factor λ ∈ (0,1).
    pub lambda: f64,
    /// Drift offset b ≥ 0.
    pub b: f64,
    /// Level-set radius d > 0 defining the small set {V ≤ d}.
    pub d: f64,
    /// Number of steps m ≥ 1 of the minorization.
    pub m: u32,
    /// Minorization mass ε ∈ (0,1).
    pub eps: f64,
    /// π(V) when known; must be ≥ e. When absent, callers may substitute the
    /// stationary upper bound b/(1−λ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_v: Option<f64>,
}

/// Which value was used for π(V) in a downstream computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiVSource {
    /// The certificate supplied π(V) directly.
    Supplied,
    /// The stationary consequence π(V) ≤ b/(1−λ) was used as an upper bound.
    DriftFallback,
}

impl DriftCertificate {
    pub fn new(lambda: f64, b: f64, d: f64, m: u32, eps: f64) -> Self {
        DriftCertificate { lambda, b, d, m, eps, pi_v: None }
    }

    pub fn with_pi_v(mut self, pi_v: f64) -> Self {
        self.pi_v = Some(pi_v);
        self
    }

    /// Strict validation; every downstream constant is meaningless otherwise.
    pub fn validate(&self) -> Result<()> {
        let &DriftCertificate { lambda, b, d, m, eps, pi_v } = self;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidCertificate(format!("λ ∈ (0,1) violated: λ={lambda}")));
        }
        if !(b >= 0.0) {
            return Err(Error::InvalidCertificate(format!("b ≥ 0 violated: b={b}")));
        }
        if !(d > 0.0) {
            return Err(Error::InvalidCertificate(format!("d > 0 violated: d={d}")));
        }
        if m < 1 {
            return Err(Error::InvalidCertificate("m ≥ 1 violated".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidCertificate(format!("ε ∈ (0,1) violated: ε={eps}")));
        }
        if !(lambda + 2.0 * b / (1.0 + d) < 1.0) {
            return Err(Error::InvalidCertificate(format!(
                "λ + 2b/(1+d) < 1 violated: {} ≥ 1",
                lambda + 2.0 * b / (1.0 + d)
            )));
        }
        if let Some(pv) = pi_v {
            if !(pv >= std::f64::consts::E) {
                return Err(Error::InvalidCertificate(format!("π(V) ≥ e violated: π(V)={pv}")));
            }
            // Stationarity forces π(V) ≤ b/(1−λ); check when that bound is
            // itself ≥ e (i.e. when it can possibly hold).
            let cap = b / (1.0 - lambda);
            if b >= std::f64::consts::E * (1.0 - lambda) && pv > cap * (1.0 + 1e-12) {
                return Err(Error::InvalidCertificate(format!(
                    "π(V) ≤ b/(1−λ) violated: {pv} > {cap}"
                )));
            }
        }
        Ok(())
    }

    /// π(V) to use downstream: the supplied value, or the drift consequence
    /// `b/(1−λ)` as a valid upper bound (the bounds are increasing in π(V)).
    pub fn pi_v_or_fallback(&self) -> (f64, PiVSource) {
        match self.pi_v {
            Some(v) => (v, PiVSource::Supplied),
            None => (self.b / (1.0 - self.lambda), PiVSource::DriftFallback),
        }
    }

    /// m-step drift offset `b_m = b(1−λ^m)/(1−λ)`.
    pub fn b_m(&self) -> f64 {
        self.b * (1.0 - self.lambda.powi(self.m as i32)) / (1.0 - self.lambda)
    }

    /// `λ̄_m = λ^m + 2 b_m/(1+d)`; < 1 whenever the certificate is valid.
    pub fn lambda_bar_m(&self) -> f64 {
        self.lambda.powi(self.m as i32) + 2.0 * self.b_m() / (1.0 + self.d)
    }
}

/// The V-geometric mixing description implied by a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomRate {
    pub rho: f64,
    /// log ρ in nats; downstream bounds need log(1/ρ) = −log_rho directly.
    pub log_rho: f64,
    pub c: f64,
    pub lambda_bar_m: f64,
    pub b_m: f64,
    pub b_bar_m: f64,
}

impl GeomRate {
    pub fn log_inv_rho(&self) -> f64 {
        -self.log_rho
    }
}

/// Rate and constant of `‖ξQⁿ − π‖_V ≤ c {ξ(V)+π(V)} ρⁿ`:
///
/// ```text
/// log ρ = log(1−ε)·log λ̄_m / ( m·(log(1−ε) + log λ̄_m − log b̄_m) )
/// c     = ρ^{−m} {λ^m + (1−λ^m)/(1−λ)} {1 + b̄_m/[(1−ε)(1−λ̄_m)]}
/// ```
///
/// with `b_m = b(1−λ^m)/(1−λ)`, `λ̄_m = λ^m + 2b_m/(1+d)`, `b̄_m = λ^m b_m + d`.
pub fn geometric_rate(cert: &DriftCertificate) -> Result<GeomRate> {
    cert.validate()?;
    let m = cert.m as f64;
    let lam_m = cert.lambda.powi(cert.m as i32);
    let b_m = cert.b_m();
    let lambda_bar_m = cert.lambda_bar_m();
    let b_bar_m = lam_m * b_m + cert.d;

    let log_one_minus_eps = (1.0 - cert.eps).ln();
    let log_lambda_bar = lambda_bar_m.ln();
    let denom = m * (log_one_minus_eps + log_lambda_bar - b_bar_m.ln());
    if !(denom < 0.0) {
        return Err(Error::InvalidCertificate(format!(
            "rate denominator must be negative (b̄_m > (1−ε)λ̄_m required): denom={denom}"
        )));
    }
    let log_rho = log_one_minus_eps * log_lambda_bar / denom;
    let rho = log_rho.exp();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Internal(format!("ρ ∉ (0,1): ρ={rho}")));
    }
    let c = (-m * log_rho).exp()
        * (lam_m + (1.0 - lam_m) / (1.0 - cert.lambda))
        * (1.0 + b_bar_m / ((1.0 - cert.eps) * (1.0 - lambda_bar_m)));
    if !(c >= 1.0) {
        return Err(Error::Internal(format!("c ≥ 1 violated: c={c}")));
    }
    Ok(GeomRate { rho, log_rho, c, lambda_bar_m, b_m, b_bar_m })
}

/// Deviation envelope `2 {c ρⁿ π(V) V(x)}^α`, an upper bound on
/// `‖Qⁿ(x,·) − π‖_{V^α}` for α ∈ (0, 1].
pub fn valpha_deviation(rate: &GeomRate, pi_v: f64, alpha: f64, v_x: f64, n: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("α ∈ (0,1] violated: α={alpha}")));
    }
    let ln_inner = rate.c.ln() + f64::from(n) * rate.log_rho + pi_v.ln() + v_x.ln();
    Ok(2.0 * (alpha * ln_inner).exp())
}

/// Stationary variance envelope
/// `Var_π(S_n) ≤ 5 n c^{1/2} ρ^{−1/2} {log(1/ρ)}^{−1} π(V)^{3/2} ‖ḡ‖²`,
/// where the norm is `‖ḡ‖_{V^{1/2}}` or any norm dominating it.
pub fn variance_upper(n: u32, rate: &GeomRate, pi_v: f64, norm_g: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    5.0 * f64::from(n) * rate.c.sqrt() / rate.rho.sqrt() / rate.log_inv_rho()
        * pi_v.powf(1.5)
        * norm_g
        * norm_g
}
