//! Finite-dimensional preconditioned Crank–Nicolson sampler against a
//! centered Gaussian reference measure with diagonal covariance:
//!
//! ```text
//! proposal  z' = ρ_H x + (1−ρ_H²)^{1/2} z,          z ~ N(0, diag(c_i)),
//! accept with probability 1 ∧ exp(−Φ(z') + Φ(x)),
//! ```
//!
//! together with the explicit drift/coupling constants for V(x) = e^{‖x‖}.
//! Ball masses of the reference measure are estimated by seeded Monte Carlo
//! and always replaced by the confidence endpoint that enlarges the final
//! bound; the per-quantity direction is recorded in the output.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::harness::clopper_pearson;
use crate::wasserstein::WassCertificate;
use crate::{Error, Result};

/// Potential of the target density relative to the Gaussian reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// Φ ≡ 0: the sampler targets the reference measure itself.
    Zero,
    /// Φ(x) = scale·√(1 + ‖x‖²), globally Lipschitz with constant `scale`.
    SmoothNorm { scale: f64 },
    /// Φ(x) = β‖x‖²/2. Not globally Lipschitz; usable for simulation and
    /// reversibility checks but rejected by the constants computation.
    Quadratic { beta: f64 },
}

impl Potential {
    pub fn value(&self, x: &[f64]) -> f64 {
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        match self {
            Potential::Zero => 0.0,
            Potential::SmoothNorm { scale } => scale * (1.0 + norm_sq).sqrt(),
            Potential::Quadratic { beta } => 0.5 * beta * norm_sq,
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        match self {
            Potential::Zero => Some(0.0),
            Potential::SmoothNorm { scale } => Some(*scale),
            Potential::Quadratic { .. } => None,
        }
    }
}

/// Model description with the trusted acceptance-floor parameters
/// `(ᾱ_H, r̄, a)` of the contraction analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcnModel {
    pub dim: usize,
    /// Positive eigenvalues of the diagonal Gaussian covariance.
    pub cov_spectrum: Vec<f64>,
    /// Autoregression coefficient ρ_H ∈ (0,1).
    pub rho_h: f64,
    pub potential: Potential,
    /// Lipschitz constant of Φ (must dominate the potential's).
    pub l_phi: f64,
    /// Acceptance log-floor ᾱ_H of the contraction analysis (trusted input).
    pub alpha_bar: f64,
    /// Proposal-ball radius coefficient r̄ > 0 (trusted input).
    pub r_bar: f64,
    /// Radius exponent a ∈ (1/2, 1) (trusted input).
    pub a_exponent: f64,
}

impl PcnModel {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.cov_spectrum.len() != self.dim {
            return Err(Error::InvalidArgument("covariance spectrum must match dim ≥ 1".into()));
        }
        if self.cov_spectrum.iter().any(|&c| c <= 0.0) {
            return Err(Error::InvalidArgument("covariance eigenvalues must be positive".into()));
        }
        if !(self.rho_h > 0.0 && self.rho_h < 1.0) {
            return Err(Error::InvalidArgument("ρ_H ∈ (0,1) violated".into()));
        }
        if !(self.a_exponent > 0.5 && self.a_exponent < 1.0) {
            return Err(Error::InvalidArgument("a ∈ (1/2,1) violated".into()));
        }
        if !(self.r_bar > 0.0) {
            return Err(Error::InvalidArgument("r̄ > 0 violated".into()));
        }
        if let Some(actual) = self.potential.lipschitz() {
            if self.l_phi < actual {
                return Err(Error::InvalidArgument(format!(
                    "l_phi={} below the potential's Lipschitz constant {actual}",
                    self.l_phi
                )));
            }
        }
        Ok(())
    }

    /// Sample the reference measure.
    pub fn sample_reference(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        self.cov_spectrum
            .iter()
            .map(|&c| c.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    }

    /// Acceptance probability 1 ∧ exp(−Φ(z') + Φ(x)).
    pub fn acceptance(&self, x: &[f64], proposal: &[f64]) -> f64 {
        (self.potential.value(x) - self.potential.value(proposal)).exp().min(1.0)
    }

    fn proposal(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let s = (1.0 - self.rho_h * self.rho_h).sqrt();
        x.iter().zip(z).map(|(xi, zi)| self.rho_h * xi + s * zi).collect()
    }
}

/// One Metropolis step.
pub fn pcn_step(model: &PcnModel, x: &mut Vec<f64>, rng: &mut ChaCha12Rng) {
    let z = model.sample_reference(rng);
    let proposal = model.proposal(x, &z);
    let u: f64 = rand::Rng::random(rng);
    if u <= model.acceptance(x, &proposal) {
        *x = proposal;
    }
}

/// One synchronously coupled step: shared innovation z and uniform u.
pub fn pcn_coupled_step(model: &PcnModel, x: &mut Vec<f64>, x_prime: &mut Vec<f64>, rng: &mut ChaCha12Rng) {
    let z = model.sample_reference(rng);
    let u: f64 = rand::Rng::random(rng);
    let prop_x = model.proposal(x, &z);
    if u <= model.acceptance(x, &prop_x) {
        *x = prop_x;
    }
    let prop_xp = model.proposal(x_prime, &z);
    if u <= model.acceptance(x_prime, &prop_xp) {
        *x_prime = prop_xp;
    }
}

/// A Monte Carlo ball-mass estimate with the confidence endpoint that was
/// used downstream and the direction it protects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallEstimate {
    pub radius: f64,
    pub point: f64,
    /// Conservative endpoint actually used (lower CP bound).
    pub used: f64,
    pub direction: String,
}

/// Output of the constants computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcnConstants {
    /// Conservative 3/4-quantile radius of ‖Z‖ under the reference measure.
    pub tau: f64,
    pub alpha_tau: f64,
    pub d_tau: f64,
    pub lambda: f64,
    pub b: f64,
    pub b1: f64,
    pub b2: f64,
    /// One-step cost contraction constant (named `contraction_gamma`: the
    /// source display reuses the letter γ taken by the SGD stepsize).
    pub contraction_gamma: f64,
    /// Cost scale ε_H = γ/(2L), capped at 1 so the cost stays distance-like.
    pub eps_h: f64,
    pub eps_h_capped: bool,
    /// Acceptance floor p₁ from the Lipschitz bound on Φ oscillation.
    pub p1: f64,
    /// Coupling-set radius R = log(4b/(1−λ) − 1).
    pub radius: f64,
    /// Contraction step count; floored at 1 when the display is ≤ 0.
    pub m: u32,
    pub m_floored: bool,
    pub eps: f64,
    pub certificate: WassCertificate,
    pub ball_estimates: Vec<BallEstimate>,
    pub confidence: f64,
}

fn ball_mass(model: &PcnModel, radius: f64, budget: u32, rng: &mut ChaCha12Rng) -> (f64, f64, f64) {
    let mut hits = 0u32;
    for _ in 0..budget {
        let z = model.sample_reference(rng);
        let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= radius {
            hits += 1;
        }
    }
    let point = f64::from(hits) / f64::from(budget);
    let (lo, hi) = clopper_pearson(hits as u64, budget as u64, 0.99);
    let _ = hi;
    (point, lo, hi)
}

/// Compute all drift/coupling constants of the sampler. Every estimated ball
/// mass enters through its lower confidence endpoint, which pushes λ up,
/// γ and ε down — the directions that keep the final bound valid.
pub fn pcn_constants(model: &PcnModel, mc_budget: u32, seed: u64) -> Result<PcnConstants> {
    model.validate()?;
    if model.potential.lipschitz().is_none() || !model.l_phi.is_finite() {
        return Err(Error::CertificationFailure(
            "constants need a globally Lipschitz potential with a finite constant".into(),
        ));
    }
    if mc_budget < 10_000 {
        return Err(Error::BudgetExceeded(format!(
            "mc_budget {mc_budget} too small for the requested 99% confidence"
        )));
    }
    let confidence = 0.99;
    let mut balls = Vec::new();
    let mut stream = 0u64;
    let fresh_rng = |stream: &mut u64| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(*stream);
        *stream += 1;
        rng
    };

    // τ by bisection on the conservative predicate CP_low(μ̂(B(0,τ))) ≥ 3/4.
    let covers = |r: f64, stream: &mut u64| {
        let mut rng = fresh_rng(stream);
        let (_, lo, _) = ball_mass(model, r, mc_budget, &mut rng);
        lo >= 0.75
    };
    let mut hi = model.cov_spectrum.iter().sum::<f64>().sqrt().max(1e-3);
    let mut grow = 0;
    while !covers(hi, &mut stream) {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Internal("tau bracket expansion failed".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 2e-3 {
        let mid = 0.5 * (lo + hi);
        if covers(mid, &mut stream) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = hi; // upper endpoint: smaller α_τ, larger b — conservative
    let alpha_tau = 3f64.ln() / (24.0 * tau * tau);
    let sqrt2 = std::f64::consts::SQRT_2;
    let d_tau = 0.75
        * (3f64.powf(1.0 / 24.0) + 1.0 / (1.0 - 3f64.powf((1.0 + sqrt2) * (1.0 + sqrt2) / 6.0 - 1.0)));

    let rho = model.rho_h;
    let beta = (1.0 - rho * rho).sqrt();
    let k1 = model.r_bar / beta;
    let r_big = (2.0 * model.r_bar / (1.0 - rho)).powf(1.0 / (1.0 - model.a_exponent));

    let mut mass_lo = |radius: f64, label: &str, stream: &mut u64| {
        let mut rng = fresh_rng(stream);
        let (point, lo, _) = ball_mass(model, radius, mc_budget, &mut rng);
        balls.push(BallEstimate {
            radius,
            point,
            used: lo,
            direction: format!("{label}: lower endpoint (enlarges the bound)"),
        });
        lo
    };

    // drift constants
    let mu_small = mass_lo(k1 * model.r_bar.powf(model.a_exponent), "lambda ball", &mut stream);
    let lambda =
        1.0 - mu_small * (1.0 - (-(1.0 - rho) * r_big / 2.0).exp()) * model.alpha_bar.exp();
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::CertificationFailure(format!("pCN drift λ={lambda} outside (0,1)")));
    }
    let b1 = d_tau * (r_big + (1.0 - rho * rho) / (4.0 * alpha_tau)).exp();
    let c_tau_beta = d_tau * (1.0 + std::f64::consts::PI.sqrt() * beta / (2.0 * alpha_tau.sqrt()));
    let g = |t: f64| (rho + beta * k1) * t - alpha_tau * k1 * k1 * t.powf(2.0 * model.a_exponent);
    let t_star = ((beta * k1 + rho) / (2.0 * alpha_tau * k1 * k1 * model.a_exponent))
        .powf(1.0 / (2.0 * model.a_exponent - 1.0));
    let b2 = c_tau_beta * (g(t_star) + beta * k1).exp();
    if !b2.is_finite() {
        return Err(Error::CertificationFailure(
            "pCN offset b₂ overflows; the drift penalty is too weak for these parameters".into(),
        ));
    }
    let b = b1.max(b2);

    // one-step cost contraction
    let p1 = (-2.0 * model.l_phi * (2.0 * r_big + 1.0)).exp();
    let mu_big = mass_lo(r_big / beta, "contraction ball 1", &mut stream);
    let mu_k1r = mass_lo(k1 * r_big.powf(model.a_exponent), "contraction ball 2", &mut stream);
    let contraction_gamma =
        (p1 * mu_big).min(model.alpha_bar.exp() * mu_k1r) * (1.0 - rho) / 2.0;
    if !(contraction_gamma > 0.0) {
        return Err(Error::CertificationFailure("pCN contraction γ is zero".into()));
    }
    let eps_h_raw = contraction_gamma / (2.0 * model.l_phi.max(f64::MIN_POSITIVE));
    let eps_h_capped = eps_h_raw > 1.0;
    let eps_h = eps_h_raw.min(1.0);

    // m-step coupling constants
    let radius = (4.0 * b / (1.0 - lambda) - 1.0).ln();
    let m_display = (eps_h / (4.0 * radius)).ln() / rho.ln();
    let m_floored = m_display < 1.0;
    let m = (m_display.ceil().max(1.0)) as u32;
    let r_m = radius / (f64::from(m) * beta);
    let mu_rm = mass_lo(r_m, "m-step ball", &mut stream);
    let eps = contraction_gamma.min((p1 * mu_rm).powi(m as i32) / 2.0);
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::CertificationFailure(format!(
            "pCN minorization ε={eps} outside (0,1); constants too small to represent"
        )));
    }

    let d = radius.exp();
    let certificate = WassCertificate::new(lambda, b, d, m, eps, 1.0);
    certificate.validate()?;

    Ok(PcnConstants {
        tau,
        alpha_tau,
        d_tau,
        lambda,
        b,
        b1,
        b2,
        contraction_gamma,
        eps_h,
        eps_h_capped,
        p1,
        radius,
        m,
        m_floored,
        eps,
        certificate,
        ball_estimates: balls,
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_model() -> PcnModel {
        PcnModel {
            dim: 2,
            cov_spectrum: vec![0.02, 0.01],
            rho_h: 0.2,
            potential: Potential::SmoothNorm { scale: 0.3 },
            l_phi: 0.3,
            alpha_bar: -0.2,
            r_bar: 0.4,
            a_exponent: 0.75,
        }
    }

    #[test]
    fn zero_potential_always_accepts() {
        let model = PcnModel {
            potential: Potential::Zero,
            l_phi: 0.0,
            ..reference_model()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = model.sample_reference(&mut rng);
            let z = model.sample_reference(&mut rng);
            let p = model.proposal(&x, &z);
            assert_eq!(model.acceptance(&x, &p), 1.0);
        }
    }

    #[test]
    fn coupled_equal_states_stay_equal() {
        let model = reference_model();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut x = vec![0.3, -0.1];
        let mut y = x.clone();
        for _ in 0..200 {
            pcn_coupled_step(&model, &mut x, &mut y, &mut rng);
            assert_eq!(x, y);
        }
    }

    #[test]
    fn quadratic_potential_reversibility_smoke() {
        // d=1, Φ = βx²/2 against N(0, σ₀²): the target is N(0, (1/σ₀² + β)⁻¹).
        let beta = 2.0;
        let sigma0_sq = 0.5;
        let model = PcnModel {
            dim: 1,
            cov_spectrum: vec![sigma0_sq],
            rho_h: 0.6,
            potential: Potential::Quadratic { beta },
            l_phi: f64::INFINITY,
            alpha_bar: -0.2,
            r_bar: 0.4,
            a_exponent: 0.75,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut x = vec![0.0];
        let burn = 2_000;
        let reps = 400_000;
        for _ in 0..burn {
            pcn_step(&model, &mut x, &mut rng);
        }
        let mut acc = 0.0;
        for _ in 0..reps {
            pcn_step(&model, &mut x, &mut rng);
            acc += x[0] * x[0];
        }
        let second_moment = acc / f64::from(reps as u32);
        let target = 1.0 / (1.0 / sigma0_sq + beta);
        // generous MC tolerance: autocorrelated draws
        assert!(
            (second_moment - target).abs() < 0.02 * target.max(0.05),
            "{second_moment} vs {target}"
        );
    }

    #[test]
    fn quadratic_potential_rejected_by_constants() {
        let model = PcnModel {
            potential: Potential::Quadratic { beta: 1.0 },
            l_phi: f64::INFINITY,
            ..reference_model()
        };
        // fine to simulate, but no certifiable constants
        model.validate().unwrap();
        assert!(pcn_constants(&model, 20_000, 1).is_err());
    }

    #[test]
    fn small_budget_rejected() {
        assert!(pcn_constants(&reference_model(), 100, 1).is_err());
    }

    #[test]
    fn tau_matches_gaussian_quantile_in_1d() {
        // standard Gaussian: μ(B(0,τ)) = 3/4 at τ = Φ⁻¹(0.875) ≈ 1.1503
        let model = PcnModel {
            dim: 1,
            cov_spectrum: vec![1.0],
            rho_h: 0.5,
            potential: Potential::Zero,
            l_phi: 0.0,
            alpha_bar: 0.0,
            r_bar: 0.4,
            a_exponent: 0.75,
        };
        model.validate().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        // reuse the bisection through pcn_constants would need a full run;
        // probe the ball mass directly against the error-function oracle
        let (point, lo, hi) = ball_mass(&model, 1.150349, 1_000_000, &mut rng);
        let exact = statrs::function::erf::erf(1.150349 / std::f64::consts::SQRT_2);
        assert!((point - exact).abs() < 2e-3, "{point} vs {exact}");
        assert!(lo <= exact && exact <= hi);
    }

    #[test]
    fn constants_on_reference_model() {
        let model = reference_model();
        let c = pcn_constants(&model, 40_000, 12345).unwrap();
        assert!(c.lambda > 0.0 && c.lambda < 1.0);
        assert!(c.b >= c.b1 && c.b >= c.b2);
        assert!(c.eps > 0.0 && c.eps < 1.0);
        assert!(c.m >= 1);
        assert!(!c.ball_estimates.is_empty());
        c.certificate.validate().unwrap();
        // monotone check: a larger Lipschitz constant shrinks ε_H = γ/(2L)
        let mut steeper = model.clone();
        steeper.potential = Potential::SmoothNorm { scale: 0.45 };
        steeper.l_phi = 0.45;
        let c2 = pcn_constants(&steeper, 40_000, 12345).unwrap();
        assert!(c2.eps_h < c.eps_h);
    }

    #[test]
    fn constants_deterministic_in_seed() {
        let model = reference_model();
        let a = pcn_constants(&model, 20_000, 7).unwrap();
        let b = pcn_constants(&model, 20_000, 7).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.eps, b.eps);
        let c = pcn_constants(&model, 20_000, 8).unwrap();
        assert_ne!(a.lambda, c.lambda);
    }
}
