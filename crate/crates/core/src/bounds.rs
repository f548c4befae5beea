//! Theorem-level bound evaluators. Every formula is evaluated twice, in log
//! space and in direct doubles, and the two must agree wherever the direct
//! value is finite; reports carry both. Tail bounds keep their raw value
//! (which is meaningful above 1 for diagnostics) alongside a presentation
//! clamp to [0,1].

use serde::{Deserialize, Serialize};

use crate::combinatorics::{b_coefficient, gaussian_moment};
use crate::logspace::{ln_factorial, LogValue};
use crate::vgeom::GeomRate;
use crate::wasserstein::WassRate;
use crate::{Error, Result};

/// Which inequality a report came from. T1–T5 and the non-stationary tail
/// live on the total-variation side; T6–T11 on the Wasserstein side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremId {
    T1,
    T2,
    T3,
    T4,
    T5,
    /// Non-stationary tail on the total-variation side.
    NonstatV,
    T6,
    T7,
    T8,
    T9,
    T10,
    T11,
    /// High-probability deviation radius derived from T5/T10.
    HpRadius,
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TheoremId::T1 => "T1",
            TheoremId::T2 => "T2",
            TheoremId::T3 => "T3",
            TheoremId::T4 => "T4",
            TheoremId::T5 => "T5",
            TheoremId::NonstatV => "NONSTAT_V",
            TheoremId::T6 => "T6",
            TheoremId::T7 => "T7",
            TheoremId::T8 => "T8",
            TheoremId::T9 => "T9",
            TheoremId::T10 => "T10",
            TheoremId::T11 => "T11",
            TheoremId::HpRadius => "HP_RADIUS",
        };
        f.write_str(s)
    }
}

/// Where the variance input came from. The bounds stay valid under any upper
/// bound of the true stationary variance; an underestimate would silently
/// invalidate them, so the provenance is mandatory and echoed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarProvenance {
    Exact,
    AnalyticUpper,
    EmpiricalUpper,
}

/// Which norm of ḡ the `norm_g` field carries. Each theorem demands its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GNorm {
    /// ‖ḡ‖_{V^{1/(2q)}} — T1/T2.
    VPow2qInv,
    /// ‖ḡ‖_{W^γ}, W = log V — T3/T4/T5 and the non-stationary V tail.
    WGamma,
    /// N_{1/(4q),V} — T6/T7.
    NQuarterQV,
    /// N_{1,W^γ} — T8–T11.
    NWGamma,
}

/// Inputs shared by all evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub q: u32,
    pub gamma: f64,
    pub n: u32,
    pub norm_g: f64,
    pub norm_kind: GNorm,
    pub var_sn: f64,
    pub var_provenance: VarProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_sqrt_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_sqrt_v: Option<f64>,
}

impl BoundInputs {
    pub fn new(
        q: u32,
        gamma: f64,
        n: u32,
        norm_g: f64,
        norm_kind: GNorm,
        var_sn: f64,
        var_provenance: VarProvenance,
    ) -> Self {
        BoundInputs {
            q,
            gamma,
            n,
            norm_g,
            norm_kind,
            var_sn,
            var_provenance,
            pi_v: None,
            xi_v: None,
            pi_sqrt_v: None,
            xi_sqrt_v: None,
        }
    }

    fn need_pi_v(&self) -> Result<f64> {
        self.pi_v.ok_or_else(|| {
            Error::InvalidArgument("π(V) required (supply it or the b/(1−λ) fallback)".into())
        })
    }

    fn need_xi_v(&self) -> Result<f64> {
        self.xi_v
            .ok_or_else(|| Error::InvalidArgument("ξ(V) required for a non-stationary bound".into()))
    }

    fn need_sqrt_vs(&self) -> Result<(f64, f64)> {
        match (self.xi_sqrt_v, self.pi_sqrt_v) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::InvalidArgument("ξ(V^{1/2}) and π(V^{1/2}) required".into())),
        }
    }

    fn expect_norm(&self, kind: GNorm, theorem: TheoremId) -> Result<()> {
        if self.norm_kind != kind {
            return Err(Error::InvalidArgument(format!(
                "{theorem} needs norm {kind:?}, inputs carry {:?}",
                self.norm_kind
            )));
        }
        Ok(())
    }
}

/// A finished bound evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub inputs: BoundInputs,
    /// The bound in log space (always finite).
    pub log_value: LogValue,
    /// Direct-double evaluation when finite, otherwise exp(log_value).
    pub value: f64,
    /// min(1, value) for probability bounds; absent for moment bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamped: Option<f64>,
    /// Leading (variance) term of a moment bound, or the t-independent
    /// variance input of a tail bound.
    pub leading_term: f64,
    /// Remainder sum of a moment bound; additive initial-condition terms of
    /// non-stationary bounds; the Bernstein constant of a tail bound.
    pub remainder_term: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Both-path positive scalar: exact log-space value next to the plain-double
/// evaluation of the same expression.
#[derive(Debug, Clone, Copy)]
struct Dual {
    log: LogValue,
    direct: f64,
}

impl Dual {
    const ZERO: Dual = Dual { log: LogValue::ZERO, direct: 0.0 };

    fn from_f64(x: f64) -> Dual {
        Dual { log: LogValue::from_f64(x), direct: x }
    }

    fn from_ln(ln: f64) -> Dual {
        Dual { log: LogValue::from_ln(ln), direct: ln.exp() }
    }

    fn factorial(n: u64) -> Dual {
        let mut direct = 1.0f64;
        for k in 2..=n {
            direct *= k as f64;
        }
        Dual { log: LogValue::from_ln(ln_factorial(n)), direct }
    }

    /// x^e with the 0⁰ = 1 convention.
    fn pow0(x: f64, e: f64) -> Dual {
        if x == 0.0 {
            if e == 0.0 {
                Dual::from_f64(1.0)
            } else {
                Dual::ZERO
            }
        } else {
            Dual { log: LogValue::from_ln(e * x.ln()), direct: x.powf(e) }
        }
    }

    fn mul(self, o: Dual) -> Dual {
        Dual { log: self.log.mul(o.log), direct: self.direct * o.direct }
    }

    fn div(self, o: Dual) -> Dual {
        Dual { log: self.log.div(o.log), direct: self.direct / o.direct }
    }

    fn add(self, o: Dual) -> Dual {
        Dual { log: self.log.add(o.log), direct: self.direct + o.direct }
    }

    fn powf(self, e: f64) -> Dual {
        Dual { log: self.log.powf(e), direct: self.direct.powf(e) }
    }

    /// Direct value when finite, log-space fallback otherwise.
    fn value(self) -> f64 {
        if self.direct.is_finite() {
            self.direct
        } else {
            self.log.to_f64()
        }
    }
}

fn gaussian_moment_f64(q: u32) -> Dual {
    let m: f64 = gaussian_moment(q).expect("q ≥ 1").to_str_radix(10).parse().unwrap();
    Dual::from_f64(m)
}

fn report(
    theorem: TheoremId,
    inputs: &BoundInputs,
    total: Dual,
    leading: Dual,
    remainder: Dual,
    clamp: bool,
    notes: Vec<String>,
) -> BoundReport {
    BoundReport {
        theorem,
        inputs: inputs.clone(),
        log_value: total.log,
        value: total.value(),
        clamped: clamp.then(|| total.value().min(1.0)),
        leading_term: leading.value(),
        remainder_term: remainder.value(),
        notes,
        config_hash: None,
    }
}

/// Shared Rosenthal skeleton:
/// `m_q var^q + base^{2q}·extra·norm^{2q} Σ_u B_γ(u,q) n^u / (r^{u/2} log^{2q−u}(1/r))`.
fn rosenthal_core(
    q: u32,
    gamma: f64,
    n: u32,
    norm_g: f64,
    var_sn: f64,
    base_const: f64,
    gamma_factor: Dual,
    rate: f64,
    log_inv_rate: f64,
) -> Result<(Dual, Dual, Dual)> {
    if q < 1 {
        return Err(Error::InvalidArgument("q must be ≥ 1".into()));
    }
    let leading = gaussian_moment_f64(q).mul(Dual::from_f64(var_sn).powf(f64::from(q)));
    let mut remainder = Dual::ZERO;
    if q >= 2 {
        let prefix = Dual::from_f64(base_const)
            .powf(f64::from(2 * q))
            .mul(gamma_factor)
            .mul(Dual::from_f64(norm_g).powf(f64::from(2 * q)));
        for u in 1..=q - 1 {
            let b = b_coefficient(gamma, u, q)?;
            let b_dual = Dual { log: b, direct: b.to_f64() };
            let term = b_dual
                .mul(Dual::from_f64(f64::from(n)).powf(f64::from(u)))
                .div(Dual::from_f64(rate).powf(f64::from(u) / 2.0))
                .div(Dual::from_f64(log_inv_rate).powf(f64::from(2 * q - u)));
            remainder = remainder.add(term);
        }
        remainder = prefix.mul(remainder);
    }
    Ok((leading.add(remainder), leading, remainder))
}

/// Stationary Rosenthal bound on `E_π[|S_n|^{2q}]` for `g` measured in
/// `‖·‖_{V^{1/(2q)}}`, with constant `C₀ = 2cπ(V)`.
pub fn rosenthal_v(inputs: &BoundInputs, rate: &GeomRate) -> Result<BoundReport> {
    inputs.expect_norm(GNorm::VPow2qInv, TheoremId::T1)?;
    let c0 = 2.0 * rate.c * inputs.need_pi_v()?;
    let (total, leading, remainder) = rosenthal_core(
        inputs.q,
        0.0,
        inputs.n,
        inputs.norm_g,
        inputs.var_sn,
        c0,
        Dual::from_f64(1.0),
        rate.rho,
        rate.log_inv_rho(),
    )?;
    Ok(report(TheoremId::T1, inputs, total, leading, remainder, false, vec![]))
}

/// Non-stationary version: `2^{2q−1}`·(stationary bound) plus the
/// initial-condition term
/// `2^{6q−1} ‖ḡ‖^{2q} c(ξ(V)+π(V)) q^{2q}/(ρ log^{2q}(1/ρ))`.
pub fn rosenthal_v_shift(inputs: &BoundInputs, rate: &GeomRate) -> Result<BoundReport> {
    inputs.expect_norm(GNorm::VPow2qInv, TheoremId::T2)?;
    let xi_v = inputs.need_xi_v()?;
    let pi_v = inputs.need_pi_v()?;
    let t1 = rosenthal_v(inputs, rate)?;
    let q = f64::from(inputs.q);

    let leading = Dual::pow0(2.0, 2.0 * q - 1.0).mul(Dual { log: t1.log_value, direct: t1.value });
    let shift = Dual::pow0(2.0, 6.0 * q - 1.0)
        .mul(Dual::from_f64(inputs.norm_g).powf(2.0 * q))
        .mul(Dual::from_f64(rate.c))
        .mul(Dual::from_f64(xi_v + pi_v))
        .mul(Dual::pow0(q, 2.0 * q))
        .div(Dual::from_f64(rate.rho))
        .div(Dual::from_f64(rate.log_inv_rho()).powf(2.0 * q));
    let total = leading.add(shift);
    Ok(report(TheoremId::T2, inputs, total, leading, shift, false, vec![]))
}

/// Stationary Rosenthal bound for `g` measured in `‖·‖_{W^γ}`, W = log V:
/// the variance term plus `C₀^{2q} (2γ)^{2γq} ‖ḡ‖^{2q} Σ B_γ(u,q)…`.
pub fn rosenthal_logv(inputs: &BoundInputs, rate: &GeomRate) -> Result<BoundReport> {
    inputs.expect_norm(GNorm::WGamma, TheoremId::T3)?;
    if inputs.gamma < 0.0 {
        return Err(Error::InvalidArgument("γ must be ≥ 0".into()));
    }
    let c0 = 2.0 * rate.c * inputs.need_pi_v()?;
    let gamma_factor = Dual::pow0(2.0 * inputs.gamma, 2.0 * inputs.gamma * f64::from(inputs.q));
    let (total, leading, remainder) = rosenthal_core(
        inputs.q,
        inputs.gamma,
        inputs.n,
        inputs.norm_g,
        inputs.var_sn,
        c0,
        gamma_factor,
        rate.rho,
        rate.log_inv_rho(),
    )?;
    Ok(report(TheoremId::T3, inputs, total, leading, remainder, false, vec![]))
}

/// Non-stationary log-Lyapunov Rosenthal bound with
/// `D⁽¹⁾ = e⁻¹ρ⁻¹(log(1/ρ))^{1−4q}(4q−2)! + ρ⁻¹(log(1/ρ))⁻¹(4qγ/e)^{4qγ}`.
pub fn rosenthal_logv_shift(inputs: &BoundInputs, rate: &GeomRate) -> Result<BoundReport> {
    inputs.expect_norm(GNorm::WGamma, TheoremId::T4)?;
    let xi_v = inputs.need_xi_v()?;
    let pi_v = inputs.need_pi_v()?;
    let t3 = rosenthal_logv(inputs, rate)?;
    let q = f64::from(inputs.q);
    let gamma = inputs.gamma;
    let e = std::f64::consts::E;

    let d1 = Dual::from_f64(1.0 / e)
        .div(Dual::from_f64(rate.rho))
        .mul(Dual::from_f64(rate.log_inv_rho()).powf(1.0 - 4.0 * q))
        .mul(Dual::factorial(4 * u64::from(inputs.q) - 2))
        .add(
            Dual::from_f64(rate.rho)
                .powf(-1.0)
                .div(Dual::from_f64(rate.log_inv_rho()))
                .mul(Dual::pow0(4.0 * q * gamma / e, 4.0 * q * gamma)),
        );
    let leading = Dual::pow0(2.0, 2.0 * q - 1.0).mul(Dual { log: t3.log_value, direct: t3.value });
    let shift = Dual::pow0(2.0, 4.0 * q - 2.0)
        .mul(Dual::from_f64(inputs.norm_g).powf(2.0 * q))
        .mul(Dual::from_f64(rate.c))
        .mul(Dual::from_f64(xi_v + pi_v))
        .mul(d1);
    let total = leading.add(shift);
    Ok(report(TheoremId::T4, inputs, total, leading, shift, false, vec![]))
}

fn bernstein_constant(
    n: u32,
    gamma: f64,
    norm_g: f64,
    var_sn: f64,
    base: f64,
    ratio_gamma_pow: f64,
    outer: Dual,
    log_inv_rate: f64,
    rate: f64,
) -> Result<f64> {
    if !(var_sn > 0.0) {
        return Err(Error::InvalidArgument("var_Sn must be > 0 for the Bernstein constant".into()));
    }
    let ratio = Dual::from_f64(f64::from(n))
        .div(Dual::from_f64(rate).powf(0.5))
        .div(Dual::from_f64(log_inv_rate))
        .mul(Dual::from_f64(base).powf(2.0))
        .mul(Dual::pow0(2.0 * gamma, ratio_gamma_pow))
        .mul(Dual::from_f64(norm_g).powf(2.0))
        .div(Dual::from_f64(var_sn));
    let clamped = if ratio.value() > 1.0 { ratio } else { Dual::from_f64(1.0) };
    Ok(clamped.mul(outer).value())
}

/// `B̃` of the total-variation Bernstein bound:
/// `(n ρ^{−1/2} log(1/ρ)^{−1} C₀² ‖ḡ‖² / Var ∨ 1) · 2^{1+3γ} γ^{3γ} C₀ ‖ḡ‖ / log(1/ρ)`.
pub fn bernstein_constant_v(inputs: &BoundInputs, rate: &GeomRate) -> Result<f64> {
    inputs.expect_norm(GNorm::WGamma, TheoremId::T5)?;
    let c0 = 2.0 * rate.c * inputs.need_pi_v()?;
    let g = inputs.gamma;
    let outer = Dual::pow0(2.0, 1.0 + 3.0 * g)
        .mul(Dual::pow0(g, 3.0 * g))
        .mul(Dual::from_f64(c0))
        .mul(Dual::from_f64(inputs.norm_g))
        .div(Dual::from_f64(rate.log_inv_rho()));
    bernstein_constant(
        inputs.n,
        g,
        inputs.norm_g,
        inputs.var_sn,
        c0,
        0.0,
        outer,
        rate.log_inv_rho(),
        rate.rho,
    )
}

/// `J̃` of the Wasserstein Bernstein bound:
/// `(n ϱ^{−1/2} log(1/ϱ)^{−1} C₁² (2γ)^{4γ} N² / Var ∨ 1) · 2 (2γ)^{2γ} C₁ N / log(1/ϱ)`.
pub fn bernstein_constant_w(inputs: &BoundInputs, rate: &WassRate) -> Result<f64> {
    inputs.expect_norm(GNorm::NWGamma, TheoremId::T10)?;
    let g = inputs.gamma;
    let outer = Dual::from_f64(2.0)
        .mul(Dual::pow0(2.0 * g, 2.0 * g))
        .mul(Dual::from_f64(rate.c1))
        .mul(Dual::from_f64(inputs.norm_g))
        .div(Dual::from_f64(rate.log_inv_varrho()));
    bernstein_constant(
        inputs.n,
        g,
        inputs.norm_g,
        inputs.var_sn,
        rate.c1,
        4.0 * g,
        outer,
        rate.log_inv_varrho(),
        rate.varrho,
    )
}

/// Bernstein tail kernel shared by the two sides:
/// `2 exp{ −(t²/2) / (Var + B^{1/(γ+3)} t^{2−1/(γ+3)}) }`.
pub fn bernstein_tail(theorem: TheoremId, t: f64, inputs: &BoundInputs, bconst: f64) -> Result<BoundReport> {
    if t < 0.0 {
        return Err(Error::InvalidArgument("t must be ≥ 0".into()));
    }
    let gamma = inputs.gamma;
    let denom = if bconst.is_finite() {
        inputs.var_sn + bconst.powf(1.0 / (gamma + 3.0)) * t.powf(2.0 - 1.0 / (gamma + 3.0))
    } else {
        f64::INFINITY
    };
    let exponent = if t == 0.0 { 0.0 } else { -(t * t / 2.0) / denom };
    let total = Dual { log: LogValue::from_ln(2f64.ln() + exponent), direct: 2.0 * exponent.exp() };
    Ok(report(theorem, inputs, total, Dual::from_f64(inputs.var_sn), Dual::from_f64(bconst), true, vec![]))
}

/// Radius r(δ) with `P(|S_n| ≥ r(δ)) ≤ δ`:
/// `2 √Var √log(4/δ) + 4^{γ+3} B (log(4/δ))^{γ+3}`.
pub fn deviation_radius(delta: f64, var_sn: f64, bconst: f64, gamma: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ ∈ (0,1) violated: δ={delta}")));
    }
    let l = (4.0 / delta).ln();
    Ok(2.0 * var_sn.sqrt() * l.sqrt() + 4f64.powf(gamma + 3.0) * bconst * l.powf(gamma + 3.0))
}

/// Non-stationary tail on the total-variation side: the stationary tail at
/// t/4 plus two initial-condition exponentials with exponent `ϖ_γ = 1/(1+γ)`.
/// At γ = 0 the second exponential's rate diverges and the term is taken at
/// its limit (0 for t > 0).
pub fn nonstationary_tail_v(t: f64, inputs: &BoundInputs, rate: &GeomRate) -> Result<BoundReport> {
    inputs.expect_norm(GNorm::WGamma, TheoremId::NonstatV)?;
    let xi_v = inputs.need_xi_v()?;
    let pi_v = inputs.need_pi_v()?;
    let bconst = bernstein_constant_v(inputs, rate)?;
    let base = bernstein_tail(TheoremId::T5, t / 4.0, inputs, bconst)?;

    let gamma = inputs.gamma;
    let w = 1.0 / (1.0 + gamma);
    let norm_pow = inputs.norm_g.powf(w);
    let tw = t.powf(w);
    let mut notes = Vec::new();

    let term1 = Dual::from_ln(
        0.5 * rate.log_inv_rho() - rate.log_inv_rho() * tw / (4f64.powf(1.0 + w) * norm_pow * w),
    );
    let term2 = if gamma == 0.0 {
        notes.push("gamma=0: second initial-condition term taken at its limit".into());
        if t == 0.0 {
            Dual::from_f64(1.0 / (1.0 - rate.rho))
        } else {
            Dual::ZERO
        }
    } else {
        Dual::from_ln(
            -(1.0 - rate.rho).ln()
                - (1.0 + gamma) * tw / (2f64.powf(1.0 + 2.0 * w) * norm_pow * gamma),
        )
    };
    let shift = term1.add(term2).mul(Dual::from_f64(rate.c * (xi_v + pi_v)));
    let total = Dual { log: base.log_value, direct: base.value }.add(shift);
    Ok(report(TheoremId::NonstatV, inputs, total, Dual::from_f64(base.value), shift, true, notes))
}

/// Mode selector for the Wasserstein Rosenthal family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WMode {
    T6,
    T7,
    T8,
    T9,
}

/// Rosenthal bounds under the coupling assumptions. T6/T8 are the stationary
/// polynomial and log-Lyapunov versions with `(C₁, ϱ)` in place of
/// `(C₀, ρ)`; T7/T9 add the initial-condition terms.
pub fn rosenthal_w_family(mode: WMode, inputs: &BoundInputs, rate: &WassRate) -> Result<BoundReport> {
    let q = f64::from(inputs.q);
    let kappa_m = rate.kappa_k.powf(f64::from(rate.m) / 2.0);
    match mode {
        WMode::T6 | WMode::T7 => inputs.expect_norm(
            GNorm::NQuarterQV,
            if mode == WMode::T6 { TheoremId::T6 } else { TheoremId::T7 },
        )?,
        WMode::T8 | WMode::T9 => inputs.expect_norm(
            GNorm::NWGamma,
            if mode == WMode::T8 { TheoremId::T8 } else { TheoremId::T9 },
        )?,
    }
    let gamma_factor = match mode {
        WMode::T6 | WMode::T7 => Dual::from_f64(1.0),
        WMode::T8 | WMode::T9 => Dual::pow0(2.0 * inputs.gamma, 2.0 * inputs.gamma * q),
    };
    let gamma_eff = match mode {
        WMode::T6 | WMode::T7 => 0.0,
        WMode::T8 | WMode::T9 => inputs.gamma,
    };
    let (stationary, leading, remainder) = rosenthal_core(
        inputs.q,
        gamma_eff,
        inputs.n,
        inputs.norm_g,
        inputs.var_sn,
        rate.c1,
        gamma_factor,
        rate.varrho,
        rate.log_inv_varrho(),
    )?;
    match mode {
        WMode::T6 => Ok(report(TheoremId::T6, inputs, stationary, leading, remainder, false, vec![])),
        WMode::T8 => Ok(report(TheoremId::T8, inputs, stationary, leading, remainder, false, vec![])),
        WMode::T7 => {
            let (xi_sv, pi_sv) = inputs.need_sqrt_vs()?;
            let lead = Dual::pow0(2.0, 2.0 * q - 1.0).mul(stationary);
            let shift = Dual::pow0(2.0, 4.0 * q - 1.0)
                .mul(Dual::from_f64(inputs.norm_g).powf(2.0 * q))
                .mul(Dual::from_f64(kappa_m * rate.c_k * (xi_sv + pi_sv)))
                .mul(Dual::pow0(q, 2.0 * q))
                .div(Dual::from_f64(rate.varrho))
                .div(Dual::from_f64(rate.log_inv_varrho()).powf(2.0 * q));
            let total = lead.add(shift);
            Ok(report(TheoremId::T7, inputs, total, lead, shift, false, vec![]))
        }
        WMode::T9 => {
            let (xi_sv, pi_sv) = inputs.need_sqrt_vs()?;
            let e = std::f64::consts::E;
            let d2 = Dual::from_f64(kappa_m * rate.c_k * (xi_sv + pi_sv))
                .div(Dual::from_f64(rate.varrho))
                .mul(
                    Dual::from_f64(2.0 * std::f64::consts::SQRT_2)
                        .div(Dual::from_f64(rate.log_inv_varrho()))
                        .powf(4.0 * q)
                        .mul(Dual::factorial(4 * u64::from(inputs.q) - 1))
                        .add(
                            Dual::pow0(8.0 * q * inputs.gamma / e, 4.0 * q * inputs.gamma)
                                .div(Dual::from_f64(rate.log_inv_varrho())),
                        ),
                );
            let lead = Dual::pow0(2.0, 2.0 * q - 1.0).mul(stationary);
            let shift = Dual::pow0(2.0, 2.0 * q - 1.0)
                .mul(Dual::from_f64(inputs.norm_g).powf(2.0 * q))
                .mul(d2);
            let total = lead.add(shift);
            Ok(report(TheoremId::T9, inputs, total, lead, shift, false, vec![]))
        }
    }
}

/// `sup_{a ≥ e} log(a)·a^{−υ/4}`, attained at `a = e^{4/υ}` with value
/// `4/(υe)` for υ ≤ 4.
pub fn sup_log_over_power(upsilon: f64) -> f64 {
    debug_assert!(upsilon > 0.0 && upsilon <= 4.0);
    4.0 / (upsilon * std::f64::consts::E)
}

/// Non-stationary tail on the Wasserstein side: the stationary tail at t/2
/// plus two initial-condition exponentials, with `ϖ_γ = 1/(1+γ)` and
/// `υ_γ = 1 ∧ (2γ)^{−1}`. The γ = 0 limit drops the third term for t > 0.
pub fn nonstationary_tail_w(t: f64, inputs: &BoundInputs, rate: &WassRate) -> Result<BoundReport> {
    inputs.expect_norm(GNorm::NWGamma, TheoremId::T11)?;
    let (xi_sv, pi_sv) = inputs.need_sqrt_vs()?;
    let jconst = bernstein_constant_w(inputs, rate)?;
    let base = bernstein_tail(TheoremId::T10, t / 2.0, inputs, jconst)?;

    let gamma = inputs.gamma;
    let w = 1.0 / (1.0 + gamma);
    let upsilon = if gamma > 0.0 { 1f64.min(1.0 / (2.0 * gamma)) } else { 1.0 };
    let norm_pow = inputs.norm_g.powf(w);
    let tw = t.powf(w);
    let a = rate.kappa_k.powf(f64::from(rate.m) / 2.0) * rate.c_k * (pi_sv + xi_sv);
    let mut notes = Vec::new();

    let brace1 = 1.0
        + (rate.log_inv_varrho() / 4.0) * a.sqrt()
            / (rate.varrho.powf(0.25) * (1.0 - rate.varrho.powf(0.25)));
    let term1 = Dual::from_ln(
        brace1.ln() - rate.log_inv_varrho() * tw / (2f64.powf(3.0 + w) * norm_pow * w),
    );

    let brace2 =
        1.0 + upsilon * sup_log_over_power(upsilon) * a.powf(upsilon) / (1.0 - rate.varrho.powf(upsilon));
    let term2 = if gamma == 0.0 {
        notes.push("gamma=0: third term taken at its limit".into());
        if t == 0.0 {
            Dual::from_f64(brace2)
        } else {
            Dual::ZERO
        }
    } else {
        Dual::from_ln(
            brace2.ln() - (1.0 + gamma) * upsilon * tw / (2f64.powf(5.0 + w) * norm_pow * gamma),
        )
    };
    let shift = term1.add(term2);
    let total = Dual { log: base.log_value, direct: base.value }.add(shift);
    Ok(report(TheoremId::T11, inputs, total, Dual::from_f64(base.value), shift, true, notes))
}
