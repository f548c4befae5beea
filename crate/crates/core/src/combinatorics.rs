//! Exact and log-space combinatorial quantities used by the moment bounds:
//! even Gaussian moments, the composition sets behind the remainder
//! coefficients `B_γ(u, q)`, their closed-form upper bounds, and the
//! univariate moment ↔ cumulant transforms.

use num_bigint::BigUint;

use crate::logspace::{ln_binomial, ln_factorial, LogValue};
use crate::{Error, Result};

/// Hard cap on the moment/cumulant transform order. Set-partition counts
/// (Bell numbers) explode past this point and nothing downstream needs more.
pub const MAX_TRANSFORM_ORDER: usize = 20;

/// One element of the composition set: parts ≥ 2 summing to 2q.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    pub parts: Vec<u32>,
}

fn factorial_big(n: u32) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for k in 2..=n {
        acc *= BigUint::from(k);
    }
    acc
}

/// 2q-th moment of the standard Gaussian, `(2q)! / (q! 2^q)`, exactly.
pub fn gaussian_moment(q: u32) -> Result<BigUint> {
    if q == 0 {
        return Err(Error::InvalidArgument("gaussian_moment: q must be ≥ 1".into()));
    }
    let num = factorial_big(2 * q);
    let den = factorial_big(q) * BigUint::from(2u32).pow(q);
    Ok(num / den)
}

fn check_uq(u: u32, q: u32) -> Result<()> {
    if q < 2 || u < 1 || u > q - 1 {
        return Err(Error::InvalidArgument(format!(
            "composition range: need q ≥ 2 and 1 ≤ u ≤ q−1, got u={u}, q={q}"
        )));
    }
    Ok(())
}

/// Enumerate all tuples `(k_1, …, k_u)` with every part ≥ 2 and `Σ k_i = 2q`,
/// in lexicographic order.
pub fn compositions(u: u32, q: u32) -> Result<Vec<Composition>> {
    check_uq(u, q)?;
    let mut out = Vec::new();
    let mut parts = Vec::with_capacity(u as usize);
    fn rec(remaining: u32, slots: u32, parts: &mut Vec<u32>, out: &mut Vec<Composition>) {
        if slots == 1 {
            if remaining >= 2 {
                parts.push(remaining);
                out.push(Composition { parts: parts.clone() });
                parts.pop();
            }
            return;
        }
        // Leave at least 2 per remaining slot.
        let hi = remaining.saturating_sub(2 * (slots - 1));
        for k in 2..=hi {
            parts.push(k);
            rec(remaining - k, slots - 1, parts, out);
            parts.pop();
        }
    }
    rec(2 * q, u, &mut parts, &mut out);
    Ok(out)
}

/// Cardinality of the composition set, `C(2q−u−1, u−1)`.
pub fn composition_count(u: u32, q: u32) -> Result<BigUint> {
    check_uq(u, q)?;
    let n = (2 * q - u - 1) as u64;
    let k = (u - 1) as u64;
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    Ok(acc)
}

/// `B_γ(u,q) = (2q)!/u! · Σ Π (k_i!)^{γ+2}` for integer γ, exactly.
pub fn b_coefficient_exact(gamma: u32, u: u32, q: u32) -> Result<BigUint> {
    let comps = compositions(u, q)?;
    let mut sum = BigUint::from(0u32);
    for c in &comps {
        let mut prod = BigUint::from(1u32);
        for &k in &c.parts {
            prod *= factorial_big(k).pow(gamma + 2);
        }
        sum += prod;
    }
    Ok(factorial_big(2 * q) / factorial_big(u) * sum)
}

/// `B_γ(u,q)` for real γ ≥ 0, in log space.
pub fn b_coefficient(gamma: f64, u: u32, q: u32) -> Result<LogValue> {
    check_uq(u, q)?;
    if gamma < 0.0 {
        return Err(Error::InvalidArgument("b_coefficient: γ must be ≥ 0".into()));
    }
    let comps = compositions(u, q)?;
    let terms: Vec<LogValue> = comps
        .iter()
        .map(|c| {
            let ln: f64 = c
                .parts
                .iter()
                .map(|&k| (gamma + 2.0) * ln_factorial(k as u64))
                .sum();
            LogValue::from_ln(ln)
        })
        .collect();
    let prefix = ln_factorial(2 * q as u64) - ln_factorial(u as u64);
    Ok(LogValue::from_ln(prefix).mul(LogValue::sum(&terms)))
}

/// Closed-form upper bound
/// `(2q)!/u! · C(2q−u−1,u−1) · ((2q−2u+2)!)^{2+γ} · 2^{(u−1)(2+γ)}`.
pub fn b_coefficient_upper(gamma: f64, u: u32, q: u32) -> Result<LogValue> {
    check_uq(u, q)?;
    if gamma < 0.0 {
        return Err(Error::InvalidArgument("b_coefficient_upper: γ must be ≥ 0".into()));
    }
    let ln = ln_factorial(2 * q as u64) - ln_factorial(u as u64)
        + ln_binomial((2 * q - u - 1) as u64, (u - 1) as u64)
        + (2.0 + gamma) * ln_factorial((2 * q - 2 * u + 2) as u64)
        + f64::from(u - 1) * (2.0 + gamma) * 2f64.ln();
    Ok(LogValue::from_ln(ln))
}

/// Scaling bound `c₁ (2q)^{2q} (2q−u)^{2(2q−u)} e^{−(2q−u)}` with
/// `c₁ = e²√2`; dominates `B_0(u,q)`.
pub fn b0_scaling_bound(u: u32, q: u32) -> Result<LogValue> {
    check_uq(u, q)?;
    let tq = f64::from(2 * q);
    let tqu = f64::from(2 * q - u);
    let ln = 2.0 + 0.5 * 2f64.ln() + tq * tq.ln() + 2.0 * tqu * tqu.ln() - tqu;
    Ok(LogValue::from_ln(ln))
}

/// Uniform (u-free) variant `c₁ q^{6q} 2^{7q} e^{−2q}`.
pub fn b0_scaling_bound_uniform(q: u32) -> Result<LogValue> {
    if q < 2 {
        return Err(Error::InvalidArgument("b0_scaling_bound_uniform: q must be ≥ 2".into()));
    }
    let qf = f64::from(q);
    let ln = 2.0 + 0.5 * 2f64.ln() + 6.0 * qf * qf.ln() + 7.0 * qf * 2f64.ln() - 2.0 * qf;
    Ok(LogValue::from_ln(ln))
}

fn binom_f64(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn check_transform_len(len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::InvalidArgument("transform: empty sequence".into()));
    }
    if len > MAX_TRANSFORM_ORDER {
        return Err(Error::BudgetExceeded(format!(
            "transform order {len} exceeds cap {MAX_TRANSFORM_ORDER}"
        )));
    }
    Ok(())
}

/// Raw moments `(E X, E X², …)` to cumulants `(κ₁, κ₂, …)` through the
/// standard recursion `κ_n = m_n − Σ_{j<n} C(n−1, j−1) κ_j m_{n−j}`, which is
/// the set-partition (Möbius) transform written triangularly.
pub fn moments_to_cumulants(moments: &[f64]) -> Result<Vec<f64>> {
    check_transform_len(moments.len())?;
    let k = moments.len();
    let mut kappa = vec![0.0; k];
    for n in 1..=k {
        let mut s = 0.0;
        for j in 1..n {
            s += binom_f64(n - 1, j - 1) * kappa[j - 1] * moments[n - j - 1];
        }
        kappa[n - 1] = moments[n - 1] - s;
    }
    Ok(kappa)
}

/// Inverse of [`moments_to_cumulants`].
pub fn cumulants_to_moments(cumulants: &[f64]) -> Result<Vec<f64>> {
    check_transform_len(cumulants.len())?;
    let k = cumulants.len();
    let mut m = vec![0.0; k];
    for n in 1..=k {
        let mut s = cumulants[n - 1];
        for j in 1..n {
            s += binom_f64(n - 1, j - 1) * cumulants[j - 1] * m[n - j - 1];
        }
        m[n - 1] = s;
    }
    Ok(m)
}

/// All set partitions of `{0, …, k−1}` as sorted blocks, enumerated through
/// restricted-growth strings. Used for the joint-cumulant oracle.
pub fn set_partitions(k: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    if k == 0 || k > 12 {
        return Err(Error::BudgetExceeded(format!(
            "set_partitions: k={k} outside 1..=12"
        )));
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; k];
    loop {
        let blocks_n = a.iter().copied().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); blocks_n];
        for (i, &b) in a.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(blocks);
        // next restricted-growth string
        let mut i = k;
        loop {
            if i == 1 {
                return Ok(out);
            }
            i -= 1;
            let max_prefix = a[..i].iter().copied().max().unwrap();
            if a[i] <= max_prefix {
                a[i] += 1;
                for v in a.iter_mut().skip(i + 1) {
                    *v = 0;
                }
                break;
            }
        }
    }
}
