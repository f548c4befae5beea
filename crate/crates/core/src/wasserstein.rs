//! Wasserstein contraction constants. A coupling certificate
//! `(λ, b, d, m, ε, κ_K)` witnesses the drift condition together with
//!
//! ```text
//! K c ≤ κ_K c,    K^m c ≤ (1 − ε·1_{C̄}) c,    C̄ = {V ≤ d} × {V ≤ d},
//! ```
//!
//! for a distance-like cost `c ≤ 1`. The implied contraction rate `ϱ` comes
//! from the unique positive root `δ*` of a one-dimensional balance equation,
//! solved here by bracketed bisection.

use serde::{Deserialize, Serialize};

use crate::vgeom::DriftCertificate;
use crate::{Error, Result};

/// Drift certificate extended with the one-step coupling expansion constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WassCertificate {
    pub lambda: f64,
    pub b: f64,
    pub d: f64,
    pub m: u32,
    pub eps: f64,
    /// One-step expansion constant κ_K ≥ 1 of the coupling kernel.
    pub kappa_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_v: Option<f64>,
}

impl WassCertificate {
    pub fn new(lambda: f64, b: f64, d: f64, m: u32, eps: f64, kappa_k: f64) -> Self {
        WassCertificate { lambda, b, d, m, eps, kappa_k, pi_v: None }
    }

    pub fn with_pi_v(mut self, pi_v: f64) -> Self {
        self.pi_v = Some(pi_v);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.drift_part().validate()?;
        if !(self.kappa_k >= 1.0) {
            return Err(Error::InvalidCertificate(format!(
                "κ_K ≥ 1 violated: κ_K={}",
                self.kappa_k
            )));
        }
        Ok(())
    }

    pub fn drift_part(&self) -> DriftCertificate {
        let mut c = DriftCertificate::new(self.lambda, self.b, self.d, self.m, self.eps);
        c.pi_v = self.pi_v;
        c
    }

    /// `b_m = b(1−λ^m)/(1−λ)`.
    pub fn b_m(&self) -> f64 {
        self.drift_part().b_m()
    }

    /// `λ̄_m = λ^m + 2b_m/(1+d)`.
    pub fn lambda_bar_m(&self) -> f64 {
        self.drift_part().lambda_bar_m()
    }

    /// `d̄ = (d+1)/2`.
    pub fn d_bar(&self) -> f64 {
        (self.d + 1.0) / 2.0
    }
}

/// Root of the balance equation together with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaStar {
    pub value: f64,
    /// |LHS − RHS| at the returned root; 0 in the degenerate branch.
    pub residual: f64,
    /// True when `(1−ε)(λ̄_m + b_m) ≤ λ̄_m` and the root is exactly 0.
    pub degenerate: bool,
}

/// Contraction description: `ϱ < 1` and the constants built from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassRate {
    pub delta_star: f64,
    pub residual: f64,
    pub degenerate_branch: bool,
    pub varrho: f64,
    pub log_varrho: f64,
    /// `c_K = (1 + b/(1−λ) + δ*)^{1/2} / ϱ^m`.
    pub c_k: f64,
    /// `ζ = π(V)^{1/2} c_K / √2`.
    pub zeta: f64,
    /// `C₁ = 2√2 κ_K^{m/2} c_K π(V)^{1/2}`.
    pub c1: f64,
    pub kappa_k: f64,
    pub m: u32,
}

impl WassRate {
    pub fn log_inv_varrho(&self) -> f64 {
        -self.log_varrho
    }
}

const BISECTION_TOL: f64 = 1e-12;

/// Unique positive root `δ*` of
///
/// ```text
/// (1−ε)(λ̄_m + b_m + δ)/(1+δ) = (λ̄_m d̄ + δ)/(d̄ + δ),
/// ```
///
/// found by doubling the bracket until the sign flips and bisecting to a
/// residual below 1e-12. Returns 0 when `(1−ε)(λ̄_m + b_m) ≤ λ̄_m` (the
/// equation then has no positive root).
pub fn delta_star(cert: &WassCertificate) -> Result<DeltaStar> {
    cert.validate()?;
    let lam_bar = cert.lambda_bar_m();
    let b_m = cert.b_m();
    let d_bar = cert.d_bar();
    let one_minus_eps = 1.0 - cert.eps;

    let f = |delta: f64| {
        one_minus_eps * (lam_bar + b_m + delta) / (1.0 + delta)
            - (lam_bar * d_bar + delta) / (d_bar + delta)
    };

    if one_minus_eps * (lam_bar + b_m) <= lam_bar {
        return Ok(DeltaStar { value: 0.0, residual: 0.0, degenerate: true });
    }

    // f(0) > 0; the LHS decreases to (1−ε) and the RHS increases to 1, so f
    // eventually turns negative. Double the upper end until it does.
    let mut hi = 1.0f64;
    let mut doublings = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 {
            return Err(Error::Internal(format!(
                "delta_star bracket expansion failed: f({hi}) = {} still positive \
                 (λ̄_m={lam_bar}, b_m={b_m}, d̄={d_bar}, ε={})",
                f(hi),
                cert.eps
            )));
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if f(0.5 * (lo + hi)).abs() < BISECTION_TOL {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    let residual = f(root).abs();
    if residual >= BISECTION_TOL {
        return Err(Error::Internal(format!(
            "delta_star bisection residual {residual} ≥ {BISECTION_TOL} at δ={root}"
        )));
    }
    Ok(DeltaStar { value: root, residual, degenerate: false })
}

/// Full contraction rate:
/// `ϱ = ((λ̄_m d̄ + δ*)/(d̄ + δ*))^{1/(2m)}`, `c_K`, `ζ`, `C₁`.
pub fn contraction_rate(cert: &WassCertificate, pi_v: f64) -> Result<WassRate> {
    let ds = delta_star(cert)?;
    let lam_bar = cert.lambda_bar_m();
    let d_bar = cert.d_bar();
    let m = f64::from(cert.m);

    let ratio = (lam_bar * d_bar + ds.value) / (d_bar + ds.value);
    let log_varrho = ratio.ln() / (2.0 * m);
    let varrho = log_varrho.exp();
    if !(varrho > 0.0 && varrho < 1.0) {
        return Err(Error::Internal(format!("ϱ ∉ (0,1): ϱ={varrho}")));
    }
    let c_k = (1.0 + cert.b / (1.0 - cert.lambda) + ds.value).sqrt() / varrho.powf(m);
    let zeta = pi_v.sqrt() * c_k / std::f64::consts::SQRT_2;
    let c1 = 2.0 * std::f64::consts::SQRT_2 * cert.kappa_k.powf(m / 2.0) * c_k * pi_v.sqrt();
    Ok(WassRate {
        delta_star: ds.value,
        residual: ds.residual,
        degenerate_branch: ds.degenerate,
        varrho,
        log_varrho,
        c_k,
        zeta,
        c1,
        kappa_k: cert.kappa_k,
        m: cert.m,
    })
}

/// Mixing bound `(1/√2) κ_K^{m/2} c_K ϱⁿ (ξ(V^{1/2}) + π(V^{1/2}))`, an upper
/// bound on the Wasserstein distance `W_c(ξQⁿ, π)`.
pub fn wasser_mixing_bound(rate: &WassRate, n: u32, xi_sqrt_v: f64, pi_sqrt_v: f64) -> f64 {
    rate.kappa_k.powf(f64::from(rate.m) / 2.0) / std::f64::consts::SQRT_2
        * rate.c_k
        * (f64::from(n) * rate.log_varrho).exp()
        * (xi_sqrt_v + pi_sqrt_v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cert() -> WassCertificate {
        WassCertificate::new(0.5, 1.0, 9.0, 1, 0.5, 1.0)
    }

    fn rel_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn reference_root_matches_quadratic_formula() {
        // λ̄=0.7, b₁=1, d̄=5 reduces the balance equation to
        // 0.5δ² + 1.15δ − 0.75 = 0, whose positive root is
        // (−1.15 + √2.8225)/1.
        let ds = delta_star(&reference_cert()).unwrap();
        let exact = (-1.15 + 2.8225f64.sqrt()) / 1.0;
        assert!(!ds.degenerate);
        assert!((ds.value - exact).abs() < 1e-10, "got {} want {}", ds.value, exact);
        assert!(ds.residual < 1e-12);
    }

    #[test]
    fn degenerate_branch_is_exact_zero() {
        let mut cert = reference_cert();
        cert.eps = 0.9; // (1−ε)(λ̄+b₁) = 0.17 ≤ 0.7
        let ds = delta_star(&cert).unwrap();
        assert!(ds.degenerate);
        assert_eq!(ds.value, 0.0);
        // ϱ collapses to λ̄_m^{1/(2m)}
        let r = contraction_rate(&cert, 9.0).unwrap();
        assert!(rel_close(r.varrho, 0.7f64.sqrt(), 1e-14));
    }

    #[test]
    fn branch_selection_matches_sign() {
        for eps in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let mut cert = reference_cert();
            cert.eps = eps;
            let lam_bar = cert.lambda_bar_m();
            let expect_root = (1.0 - eps) * (lam_bar + cert.b_m()) > lam_bar;
            let ds = delta_star(&cert).unwrap();
            assert_eq!(ds.degenerate, !expect_root, "ε={eps}");
        }
    }

    #[test]
    fn reference_contraction_constants() {
        let r = contraction_rate(&reference_cert(), 9.0).unwrap();
        // ϱ = ((3.5+δ*)/(5+δ*))^{1/2} ≈ 0.8537, c_K = √3.53/ϱ ≈ 2.201
        assert!(rel_close(r.varrho, 0.8537, 1e-3));
        assert!(rel_close(r.c_k, 2.201, 1e-3));
        // ζ and C₁ from their defining displays
        assert!(rel_close(r.zeta, 9.0f64.sqrt() * r.c_k / 2f64.sqrt(), 1e-15));
        assert!(rel_close(r.c1, 2.0 * 2f64.sqrt() * r.c_k * 3.0, 1e-15));
    }

    #[test]
    fn monotone_sides_guarantee_unique_root() {
        // LHS strictly decreasing, RHS strictly increasing on a δ grid.
        let cert = reference_cert();
        let lam_bar = cert.lambda_bar_m();
        let b_m = cert.b_m();
        let d_bar = cert.d_bar();
        let lhs = |d: f64| (1.0 - cert.eps) * (lam_bar + b_m + d) / (1.0 + d);
        let rhs = |d: f64| (lam_bar * d_bar + d) / (d_bar + d);
        let grid: Vec<f64> = (0..200).map(|i| f64::from(i) * 0.1).collect();
        for w in grid.windows(2) {
            assert!(lhs(w[1]) < lhs(w[0]));
            assert!(rhs(w[1]) > rhs(w[0]));
        }
    }

    #[test]
    fn random_certificates_contract() {
        let mut state = 0x13198A2E03707344u64;
        let mut unif = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut checked = 0;
        while checked < 200 {
            let lambda = 0.05 + 0.9 * unif();
            let b = 1.0 + 10.0 * unif();
            let d = 2.0 * b / (1.0 - lambda) / (0.2 + 0.7 * unif()) + 1.0;
            let m = 1 + (unif() * 3.0) as u32;
            let eps = 0.01 + 0.98 * unif();
            let kappa = 1.0 + 2.0 * unif();
            let cert = WassCertificate::new(lambda, b, d, m, eps, kappa);
            if cert.validate().is_err() {
                continue;
            }
            let r = contraction_rate(&cert, b / (1.0 - lambda)).unwrap();
            assert!(r.varrho > 0.0 && r.varrho < 1.0, "ϱ={} {:?}", r.varrho, cert);
            if !r.degenerate_branch {
                assert!(r.residual < 1e-12);
            }
            checked += 1;
        }
    }

    #[test]
    fn mixing_bound_geometric_decay() {
        let r = contraction_rate(&reference_cert(), 9.0).unwrap();
        let at = |n| wasser_mixing_bound(&r, n, 3.0, 2.0);
        // n=0 value
        let expected0 = r.c_k / 2f64.sqrt() * 5.0;
        assert!(rel_close(at(0), expected0, 1e-14));
        // exact geometric decay
        assert!(rel_close(at(7) / at(6), r.varrho, 1e-12));
    }
}
