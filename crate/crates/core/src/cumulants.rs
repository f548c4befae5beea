//! Exact moment and cumulant machinery on finite chains: the nested-centering
//! moments defined by the backward recursion
//! `Z_ℓ = h_ℓ(X_{t_ℓ}) Z_{ℓ+1} − E_π[h_ℓ(X_{t_ℓ}) Z_{ℓ+1}]`, dynamic-programming
//! tables for `E[S_n^j]`, the cumulant expansion of `E[|S_n|^{2q}]`, and the
//! spectral density that lower-bounds the stationary variance growth.

use crate::chains::FiniteChain;
use crate::combinatorics::{gaussian_moment, moments_to_cumulants, set_partitions};
use crate::logspace::ln_factorial;
use crate::{Error, Result};

/// Sorted time indices with one observable per index. Observables are ids
/// into a caller-supplied table of per-state value vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexTuple {
    pub times: Vec<u32>,
    pub observables: Vec<usize>,
}

impl IndexTuple {
    pub fn new(times: Vec<u32>, observables: Vec<usize>) -> Result<IndexTuple> {
        if times.len() != observables.len() {
            return Err(Error::InvalidArgument("times/observables length mismatch".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidArgument("empty index tuple".into()));
        }
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(
                "times must be nondecreasing (centered moments are order-sensitive)".into(),
            ));
        }
        Ok(IndexTuple { times, observables })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest gap between consecutive times.
    pub fn gap(&self) -> u32 {
        self.times.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }
}

const MAX_TUPLE_LEN: usize = 8;

fn resolve<'a>(tuple: &IndexTuple, table: &'a [Vec<f64>], s: usize) -> Result<Vec<&'a [f64]>> {
    if tuple.len() > MAX_TUPLE_LEN {
        return Err(Error::BudgetExceeded(format!(
            "tuple length {} exceeds cap {MAX_TUPLE_LEN}",
            tuple.len()
        )));
    }
    tuple
        .observables
        .iter()
        .map(|&i| {
            let h = table
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("observable id {i} out of range")))?;
            if h.len() != s {
                return Err(Error::InvalidArgument(format!("observable {i} has wrong length")));
            }
            Ok(h.as_slice())
        })
        .collect()
}

/// Exact centered moment `Ē_π[h₁(X_{t₁}), …, h_k(X_{t_k})]`, evaluated by
/// propagating the backward recursion through the transition kernel. Each
/// centering constant is the stationary mean of the partially folded
/// function, so the whole computation is a sequence of exact matrix-vector
/// products.
pub fn centered_moment(chain: &FiniteChain, tuple: &IndexTuple, table: &[Vec<f64>]) -> Result<f64> {
    let hs = resolve(tuple, table, chain.states())?;
    let k = tuple.len();
    if k == 1 {
        return Ok(chain.pi_mean(hs[0]));
    }
    // zeta(x) = E[Z_{ℓ+1} | X_{t_ℓ} = x] for the current ℓ, built backward.
    let mut zeta: Vec<f64> = {
        // ℓ = k−1: Z_k = h_k(X_{t_k}) − π(h_k) pulled back over the last gap
        let gap = (tuple.times[k - 1] - tuple.times[k - 2]) as usize;
        let pulled = chain.apply_n(hs[k - 1], gap);
        let constant = chain.pi_mean(&pulled);
        pulled.iter().map(|p| p - constant).collect()
    };
    for l in (1..k - 1).rev() {
        let folded: Vec<f64> = hs[l].iter().zip(&zeta).map(|(h, z)| h * z).collect();
        let gap = (tuple.times[l] - tuple.times[l - 1]) as usize;
        let pulled = chain.apply_n(&folded, gap);
        let constant = chain.pi_mean(&pulled);
        zeta = pulled.iter().map(|p| p - constant).collect();
    }
    let h1z: Vec<f64> = hs[0].iter().zip(&zeta).map(|(h, z)| h * z).collect();
    Ok(chain.pi_mean(&h1z))
}

/// Exact joint moment `E_π[Π h_i(X_{t_i})]` (order-insensitive).
pub fn joint_moment(chain: &FiniteChain, tuple: &IndexTuple, table: &[Vec<f64>]) -> Result<f64> {
    let hs = resolve(tuple, table, chain.states())?;
    let k = tuple.len();
    let mut phi: Vec<f64> = hs[k - 1].to_vec();
    for l in (0..k - 1).rev() {
        let gap = (tuple.times[l + 1] - tuple.times[l]) as usize;
        let pulled = chain.apply_n(&phi, gap);
        phi = hs[l].iter().zip(&pulled).map(|(h, p)| h * p).collect();
    }
    Ok(chain.pi_mean(&phi))
}

/// Exact joint cumulant through the set-partition Möbius formula
/// `Γ = Σ_σ (−1)^{|σ|−1} (|σ|−1)! Π_B E[Π_{i∈B} h_i(X_{t_i})]`.
pub fn joint_cumulant(chain: &FiniteChain, tuple: &IndexTuple, table: &[Vec<f64>]) -> Result<f64> {
    let k = tuple.len();
    let mut acc = 0.0;
    for partition in set_partitions(k)? {
        let blocks = partition.len();
        let mut prod = 1.0;
        for block in &partition {
            // a block keeps its (time, observable) pairs; times stay sorted
            let sub = IndexTuple::new(
                block.iter().map(|&i| tuple.times[i]).collect(),
                block.iter().map(|&i| tuple.observables[i]).collect(),
            )?;
            prod *= joint_moment(chain, &sub, table)?;
        }
        let sign = if (blocks - 1) % 2 == 0 { 1.0 } else { -1.0 };
        let weight: f64 = (1..blocks).map(|j| j as f64).product();
        acc += sign * weight * prod;
    }
    Ok(acc)
}

/// Both sides of the one-step reduction
/// `Ē_π[h₁,…,h_k] = Ē_π[h₁,…,h_{k−1}·h̃_k]` with
/// `h̃_k = Q^{t_k−t_{k−1}} h_k − π(h_k)`.
///
/// `rel_err` is taken relative to the larger of the two sides and the
/// product of sup norms `Π ‖h_j‖_∞`, the natural magnitude of a centered
/// moment; both sides can cancel to values far below that scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub pass: bool,
}

pub fn markov_reduction_check(
    chain: &FiniteChain,
    tuple: &IndexTuple,
    table: &[Vec<f64>],
) -> Result<ReductionCheck> {
    let k = tuple.len();
    if k < 2 {
        return Err(Error::InvalidArgument("reduction needs k ≥ 2".into()));
    }
    let hs = resolve(tuple, table, chain.states())?;
    let lhs = centered_moment(chain, tuple, table)?;

    let gap = (tuple.times[k - 1] - tuple.times[k - 2]) as usize;
    let pi_hk = chain.pi_mean(hs[k - 1]);
    let pulled = chain.apply_n(hs[k - 1], gap);
    let merged: Vec<f64> = hs[k - 2]
        .iter()
        .zip(&pulled)
        .map(|(h, p)| h * (p - pi_hk))
        .collect();

    let mut reduced_table: Vec<Vec<f64>> = tuple.observables[..k - 2]
        .iter()
        .map(|&i| table[i].clone())
        .collect();
    reduced_table.push(merged);
    let reduced = IndexTuple::new(tuple.times[..k - 1].to_vec(), (0..k - 1).collect())?;
    let rhs = centered_moment(chain, &reduced, &reduced_table)?;

    let norm_scale: f64 = hs
        .iter()
        .map(|h| h.iter().fold(0.0f64, |a, &x| a.max(x.abs())))
        .product();
    let scale = lhs.abs().max(rhs.abs()).max(norm_scale).max(1e-300);
    let rel_err = (lhs - rhs).abs() / scale;
    Ok(ReductionCheck { lhs, rhs, rel_err, pass: rel_err < 1e-12 })
}

/// Neumaier compensated accumulator for the moment DP.
#[derive(Debug, Clone, Copy, Default)]
struct Comp {
    sum: f64,
    c: f64,
}

impl Comp {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(self) -> f64 {
        self.sum + self.c
    }
}

const DP_BUDGET: usize = 100_000_000;

/// Exact `E[S_n^j]` for j = 0..=max_power, where `S_n = Σ_{ℓ=0}^{n−1} ḡ(X_ℓ)`
/// and the chain starts from `initial` (defaults to π). The DP propagates
/// `E[S_t^j ; X_t = x]` with a binomial expansion at each step.
pub fn exact_sn_moments_from(
    chain: &FiniteChain,
    initial: Option<&[f64]>,
    n: u32,
    max_power: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be ≥ 1".into()));
    }
    let s = chain.states();
    if (n as usize) * s * (max_power + 1) > DP_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "moment DP size n·S·(p+1) = {} exceeds {DP_BUDGET}",
            (n as usize) * s * (max_power + 1)
        )));
    }
    let xi = match initial {
        Some(xi) => {
            if xi.len() != s {
                return Err(Error::InvalidArgument("initial law has wrong length".into()));
            }
            xi.to_vec()
        }
        None => chain.pi.clone(),
    };
    let gbar = chain.g_bar();
    let p = max_power;

    let mut binom = vec![vec![0.0f64; p + 1]; p + 1];
    for j in 0..=p {
        binom[j][0] = 1.0;
        for i in 1..=j {
            binom[j][i] = binom[j - 1][i - 1] + if i <= j - 1 { binom[j - 1][i] } else { 0.0 };
        }
    }

    let gpow: Vec<Vec<f64>> = (0..s)
        .map(|x| {
            let mut v = vec![1.0; p + 1];
            for j in 1..=p {
                v[j] = v[j - 1] * gbar[x];
            }
            v
        })
        .collect();

    // table[x][j] = E[S_{t+1}^j ; X_t = x] where S includes times 0..=t
    let mut table: Vec<Vec<f64>> = (0..s)
        .map(|x| (0..=p).map(|j| xi[x] * gpow[x][j]).collect())
        .collect();

    for _t in 1..n {
        let mut next = vec![vec![0.0f64; p + 1]; s];
        for (y, next_y) in next.iter_mut().enumerate() {
            let mut pushed = vec![Comp::default(); p + 1];
            for (x, tx) in table.iter().enumerate() {
                let pxy = chain.transition[x][y];
                if pxy != 0.0 {
                    for i in 0..=p {
                        pushed[i].add(pxy * tx[i]);
                    }
                }
            }
            let pushed: Vec<f64> = pushed.into_iter().map(Comp::value).collect();
            for j in 0..=p {
                let mut acc = Comp::default();
                for i in 0..=j {
                    acc.add(binom[j][i] * pushed[i] * gpow[y][j - i]);
                }
                next_y[j] = acc.value();
            }
        }
        table = next;
    }

    Ok((0..=p)
        .map(|j| {
            let mut acc = Comp::default();
            for tx in &table {
                acc.add(tx[j]);
            }
            acc.value()
        })
        .collect())
}

/// Stationary-start version of [`exact_sn_moments_from`].
pub fn exact_sn_moments(chain: &FiniteChain, n: u32, max_power: usize) -> Result<Vec<f64>> {
    exact_sn_moments_from(chain, None, n, max_power)
}

/// Exact stationary variance of S_n. The observable is centered, so this is
/// the plain second moment of the DP.
pub fn exact_sn_variance(chain: &FiniteChain, n: u32) -> Result<f64> {
    Ok(exact_sn_moments(chain, n, 2)?[2])
}

/// Exact cumulants `Γ_{π,1..k_max}(S_n)` from the moment DP.
pub fn sn_cumulants(chain: &FiniteChain, n: u32, k_max: usize) -> Result<Vec<f64>> {
    let moments = exact_sn_moments(chain, n, k_max)?;
    moments_to_cumulants(&moments[1..])
}

/// Decomposition of the 2q-th moment into cumulant products.
#[derive(Debug, Clone, PartialEq)]
pub struct LeonovCheck {
    /// Exact E_π[S_n^{2q}] from the DP.
    pub exact: f64,
    /// Full composition-sum assembly from cumulants.
    pub assembled: f64,
    /// Simplified form: m_q Var^q plus the u ≤ q−1 composition sum with
    /// parts ≥ 2.
    pub simplified: f64,
    pub rel_err_assembled: f64,
    pub rel_err_simplified: f64,
    pub pass: bool,
}

fn compositions_min_parts(total: usize, parts: usize, min_part: usize) -> Vec<Vec<usize>> {
    fn rec(rem: usize, slots: usize, min_part: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            if rem >= min_part {
                cur.push(rem);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        if rem < min_part * slots {
            return;
        }
        for k in min_part..=rem - min_part * (slots - 1) {
            cur.push(k);
            rec(rem - k, slots - 1, min_part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(parts);
    rec(total, parts, min_part, &mut cur, &mut out);
    out
}

/// Verify the cumulant expansion of `E_π[|S_n|^{2q}]`:
/// the full sum `Σ_u (1/u!) Σ_{|k|=2q} (2q)!/k! Π Γ_{k_p}` must reproduce the
/// exact moment, and so must the reduced form whose u = q term collapses to
/// `m_q Var^q` (parts of size 1 vanish because ḡ is centered).
pub fn leonov_check(chain: &FiniteChain, n: u32, q: u32) -> Result<LeonovCheck> {
    if q == 0 || q > 3 {
        return Err(Error::BudgetExceeded("leonov_check supports 1 ≤ q ≤ 3".into()));
    }
    let two_q = (2 * q) as usize;
    let exact = exact_sn_moments(chain, n, two_q)?[two_q];
    let gam = sn_cumulants(chain, n, two_q)?;

    let ln2q_fact = ln_factorial(two_q as u64);
    let mut assembled = 0.0;
    for u in 1..=two_q {
        let mut inner = 0.0;
        for comp in compositions_min_parts(two_q, u, 1) {
            let mut term = 1.0;
            let mut ln_coeff = ln2q_fact;
            for &k in &comp {
                term *= gam[k - 1];
                ln_coeff -= ln_factorial(k as u64);
            }
            inner += ln_coeff.exp() * term;
        }
        let u_fact: f64 = (1..=u).map(|j| j as f64).product();
        assembled += inner / u_fact;
    }

    let m_q: f64 = gaussian_moment(q)?.to_str_radix(10).parse().unwrap();
    let mut simplified = m_q * gam[1].powi(q as i32);
    for u in 1..(q as usize) {
        let mut inner = 0.0;
        for comp in compositions_min_parts(two_q, u, 2) {
            let mut term = 1.0;
            let mut ln_coeff = ln2q_fact;
            for &k in &comp {
                term *= gam[k - 1];
                ln_coeff -= ln_factorial(k as u64);
            }
            inner += ln_coeff.exp() * term;
        }
        let u_fact: f64 = (1..=u).map(|j| j as f64).product();
        simplified += inner / u_fact;
    }

    let scale = exact.abs().max(1e-300);
    let rel_err_assembled = (assembled - exact).abs() / scale;
    let rel_err_simplified = (simplified - exact).abs() / scale;
    Ok(LeonovCheck {
        exact,
        assembled,
        simplified,
        rel_err_assembled,
        rel_err_simplified,
        pass: rel_err_assembled < 1e-10 && rel_err_simplified < 1e-10,
    })
}

/// Spectral density on a grid, with a certified truncation slack.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Truncation level L of the autocovariance sum.
    pub truncation: usize,
    /// Uniform bound on the discarded tail (already divided by 2π).
    pub slack: f64,
    /// Grid minimum minus slack, floored at 0.
    pub f_min: f64,
    /// Set when the slack swallowed the grid minimum.
    pub floored: bool,
}

/// `f(g,λ) = (2π)^{−1} Σ_{|ℓ|≤L} ς_π(g,ℓ) e^{−iℓλ}` with
/// `ς_π(g,ℓ) = Cov_π(g(X₀), g(X_ℓ))`, truncated at the smallest L with
/// `c π(V) ρ^{L/2} < 1e−12 · Var_π(g)` and certified by the geometric decay
/// `|ς(ℓ)| ≤ 2 c^{1/2} π(V)^{3/2} ‖ḡ‖²_{V^{1/2}} ρ^{ℓ/2}`.
pub fn spectral_density(
    chain: &FiniteChain,
    rate: &crate::vgeom::GeomRate,
    grid: &[f64],
) -> Result<SpectralDensity> {
    let gbar = chain.g_bar();
    let var_g = chain.pi_mean(&gbar.iter().map(|x| x * x).collect::<Vec<_>>());
    let pi_v = chain.pi_v();
    if var_g <= 0.0 {
        return Err(Error::InvalidArgument("observable is π-a.s. constant".into()));
    }
    let threshold = 1e-12 * var_g;
    let mut l = 1usize;
    while rate.c * pi_v * (0.5 * l as f64 * rate.log_rho).exp() >= threshold {
        l += 1;
        if l > 10_000_000 {
            return Err(Error::BudgetExceeded("spectral truncation level exceeds 1e7".into()));
        }
    }

    // exact autocovariances ς(ℓ) = π(ḡ · Q^ℓ ḡ)
    let mut cov = Vec::with_capacity(l + 1);
    let mut qlg = gbar.clone();
    for _ in 0..=l {
        let c: f64 = chain
            .pi
            .iter()
            .zip(&gbar)
            .zip(&qlg)
            .map(|((p, g), q)| p * g * q)
            .sum();
        cov.push(c);
        qlg = chain.apply(&qlg);
    }

    let norm_sqrt_v = chain.norm_g_valpha(0.5);
    let k_decay = 2.0 * rate.c.sqrt() * pi_v.powf(1.5) * norm_sqrt_v * norm_sqrt_v;
    let tail =
        k_decay * (0.5 * (l + 1) as f64 * rate.log_rho).exp() / (1.0 - (0.5 * rate.log_rho).exp());
    let slack = 2.0 * tail / (2.0 * std::f64::consts::PI);

    let values: Vec<f64> = grid
        .iter()
        .map(|&lam| {
            let mut acc = cov[0];
            for (ell, &c) in cov.iter().enumerate().skip(1) {
                acc += 2.0 * c * (ell as f64 * lam).cos();
            }
            acc / (2.0 * std::f64::consts::PI)
        })
        .collect();

    let min = values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let f_min_raw = min - slack;
    let floored = f_min_raw < 0.0;
    Ok(SpectralDensity {
        grid: grid.to_vec(),
        values,
        truncation: l,
        slack,
        f_min: f_min_raw.max(0.0),
        floored,
    })
}

/// Envelope for centered moments under the mixing assumption:
/// `D^k (k!)^α Π Ψ(h_j) ρ_*^{gap}` with `D = 2cπ(V)`, `α = 0`, `ρ_* = ρ^{1/2}`.
pub fn centered_moment_envelope(
    rate: &crate::vgeom::GeomRate,
    pi_v: f64,
    norms: &[f64],
    gap: u32,
) -> f64 {
    let d = 2.0 * rate.c * pi_v;
    let k = norms.len() as i32;
    d.powi(k) * norms.iter().product::<f64>() * (0.5 * f64::from(gap) * rate.log_rho).exp()
}

/// Envelope for cumulants of S_n:
/// `n ρ_*^{−1} (log(1/ρ_*))^{1−k} D^k Ψ(ḡ)^k (k!)^{3+α}` with the same
/// constants (`ρ_* = ρ^{1/2}`, `α = 0`, `D = 2cπ(V)`).
pub fn sn_cumulant_envelope(
    n: u32,
    rate: &crate::vgeom::GeomRate,
    pi_v: f64,
    norm_g: f64,
    k: usize,
) -> f64 {
    let d = 2.0 * rate.c * pi_v;
    let log_inv_rho_star = 0.5 * rate.log_inv_rho();
    let k_fact: f64 = (1..=k).map(|j| j as f64).product();
    f64::from(n)
        * (-0.5 * rate.log_rho).exp()
        * log_inv_rho_star.powi(1 - k as i32)
        * d.powi(k as i32)
        * norm_g.powi(k as i32)
        * k_fact.powi(3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{certify, CertifyOptions};
    use crate::vgeom::geometric_rate;
    use num_rational::BigRational;
    use num_traits::cast::FromPrimitive;
    use num_traits::ToPrimitive;

    fn rel_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    /// Exhaustive path-enumeration oracle in exact rational arithmetic.
    fn joint_by_paths(chain: &FiniteChain, times: &[u32], hs: &[&[f64]]) -> f64 {
        let s = chain.states();
        let horizon = *times.last().unwrap() as usize + 1;
        let rat = |x: f64| BigRational::from_f64(x).unwrap();
        let mut total = BigRational::from_integer(0.into());
        let mut path = vec![0usize; horizon];
        loop {
            let mut p = rat(chain.pi[path[0]]);
            for t in 1..horizon {
                p *= rat(chain.transition[path[t - 1]][path[t]]);
            }
            let mut prod = BigRational::from_integer(1.into());
            for (i, &t) in times.iter().enumerate() {
                prod *= rat(hs[i][path[t as usize]]);
            }
            total += p * prod;
            let mut pos = 0;
            loop {
                path[pos] += 1;
                if path[pos] < s {
                    break;
                }
                path[pos] = 0;
                pos += 1;
                if pos == horizon {
                    return total.to_f64().unwrap();
                }
            }
        }
    }

    #[test]
    fn centered_moment_k1_is_pi_mean() {
        let chain = FiniteChain::two_state_reference();
        let h = vec![vec![2.0, -0.5]];
        let t = IndexTuple::new(vec![3], vec![0]).unwrap();
        let got = centered_moment(&chain, &t, &h).unwrap();
        assert!(rel_close(got, chain.pi_mean(&h[0]), 1e-15));
    }

    #[test]
    fn centered_moment_k2_is_covariance() {
        let chain = FiniteChain::two_state_reference();
        let table = vec![vec![1.0, -2.0], vec![0.3, 1.1]];
        let t = IndexTuple::new(vec![1, 4], vec![0, 1]).unwrap();
        let got = centered_moment(&chain, &t, &table).unwrap();
        let hs: Vec<&[f64]> = table.iter().map(|v| v.as_slice()).collect();
        let e12 = joint_by_paths(&chain, &[1, 4], &hs);
        let e1 = chain.pi_mean(&table[0]);
        let e2 = chain.pi_mean(&table[1]);
        assert!(rel_close(got, e12 - e1 * e2, 1e-13));
    }

    #[test]
    fn centered_moment_k3_against_path_enumeration() {
        // Ē[h₁,h₂,h₃] = E[h₁h₂h₃] − c₃E[h₁h₂] − c₂E[h₁] with c₃ = E[h₃],
        // c₂ = E[h₂h₃] − c₃E[h₂], all path-enumerated in rationals.
        let chain = FiniteChain::two_state_reference();
        let table = vec![vec![1.0, -2.0], vec![0.3, 1.1], vec![-0.7, 0.4]];
        let hs: Vec<&[f64]> = table.iter().map(|v| v.as_slice()).collect();
        let t = IndexTuple::new(vec![0, 1, 3], vec![0, 1, 2]).unwrap();
        let got = centered_moment(&chain, &t, &table).unwrap();

        let c3 = chain.pi_mean(&table[2]);
        let e23 = joint_by_paths(&chain, &[1, 3], &[hs[1], hs[2]]);
        let e2 = chain.pi_mean(&table[1]);
        let c2 = e23 - c3 * e2;
        let e123 = joint_by_paths(&chain, &[0, 1, 3], &hs);
        let e12 = joint_by_paths(&chain, &[0, 1], &[hs[0], hs[1]]);
        let e1 = chain.pi_mean(&table[0]);
        let expected = e123 - c3 * e12 - c2 * e1;
        assert!(rel_close(got, expected, 1e-12), "{got} vs {expected}");
    }

    #[test]
    fn unsorted_tuple_rejected() {
        assert!(IndexTuple::new(vec![3, 1], vec![0, 0]).is_err());
    }

    fn random_chain(seed: u64, states: usize) -> FiniteChain {
        let mut state = seed.max(1) ^ 0xDEADBEEFCAFE;
        let mut unif = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let e = std::f64::consts::E;
        let q: Vec<Vec<f64>> = (0..states)
            .map(|_| {
                let raw: Vec<f64> = (0..states).map(|_| 0.05 + unif()).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        let v: Vec<f64> = (0..states).map(|_| e * (2.0 * unif()).exp()).collect();
        let g: Vec<f64> = (0..states).map(|_| 2.0 * unif() - 1.0).collect();
        FiniteChain::new(q, v, g).unwrap()
    }

    #[test]
    fn markov_reduction_random_instances() {
        for seed in 1..=40u64 {
            let chain = random_chain(seed, 2 + (seed % 3) as usize);
            let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D) | 1;
            let mut unif = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let k = 3 + (seed % 2) as usize;
            let table: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..chain.states()).map(|_| 2.0 * unif() - 1.0).collect())
                .collect();
            let mut times: Vec<u32> = (0..k).map(|_| (unif() * 12.0) as u32).collect();
            times.sort_unstable();
            let tuple = IndexTuple::new(times, (0..k).collect()).unwrap();
            let check = markov_reduction_check(&chain, &tuple, &table).unwrap();
            assert!(check.pass, "seed {seed}: rel err {}", check.rel_err);
        }
    }

    #[test]
    fn reduction_with_zero_gap_is_plain_centering() {
        let chain = FiniteChain::two_state_reference();
        let table = vec![vec![1.0, -2.0], vec![0.3, 1.1]];
        let t = IndexTuple::new(vec![2, 2], vec![0, 1]).unwrap();
        let check = markov_reduction_check(&chain, &t, &table).unwrap();
        assert!(check.pass);
    }

    #[test]
    fn reduction_large_gap_within_mixing_envelope() {
        let chain = FiniteChain::two_state_reference();
        let cert = certify(&chain, &CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let alpha = 0.25; // 1/(2·2q) with q = 1
        let table = vec![chain.g_bar(), chain.g_bar()];
        let t = IndexTuple::new(vec![0, 30], vec![0, 1]).unwrap();
        let val = centered_moment(&chain, &t, &table).unwrap();
        let norm = chain.norm_g_valpha(alpha);
        let envelope = centered_moment_envelope(&rate, chain.pi_v(), &[norm, norm], 30);
        assert!(val.abs() <= envelope, "{} > {}", val.abs(), envelope);
    }

    #[test]
    fn sn_moments_n1_and_two_step_paths() {
        let chain = FiniteChain::two_state_reference();
        let gbar = chain.g_bar();
        let m = exact_sn_moments(&chain, 1, 4).unwrap();
        for j in 0..=4usize {
            let direct: f64 = chain
                .pi
                .iter()
                .zip(&gbar)
                .map(|(p, g)| p * g.powi(j as i32))
                .sum();
            assert!(rel_close(m[j], direct, 1e-14), "j={j}");
        }
        let m2 = exact_sn_moments(&chain, 2, 2).unwrap()[2];
        let mut expected = 0.0;
        for x0 in 0..2 {
            for x1 in 0..2 {
                let p = chain.pi[x0] * chain.transition[x0][x1];
                expected += p * (gbar[x0] + gbar[x1]).powi(2);
            }
        }
        assert!(rel_close(m2, expected, 1e-14));
    }

    #[test]
    fn sn_moments_match_path_enumeration_small() {
        for seed in [3u64, 7, 11] {
            let chain = random_chain(seed, 3);
            let gbar = chain.g_bar();
            let n = 5u32;
            let m = exact_sn_moments(&chain, n, 4).unwrap();
            let s = chain.states();
            let rat = |x: f64| BigRational::from_f64(x).unwrap();
            let mut sums = vec![BigRational::from_integer(0.into()); 5];
            let mut path = vec![0usize; n as usize];
            'outer: loop {
                let mut p = rat(chain.pi[path[0]]);
                for t in 1..n as usize {
                    p *= rat(chain.transition[path[t - 1]][path[t]]);
                }
                // accumulate ḡ along the path in rationals as well
                let mut total = BigRational::from_integer(0.into());
                for &x in &path {
                    total += rat(gbar[x]);
                }
                let mut power = BigRational::from_integer(1.into());
                for acc in sums.iter_mut() {
                    *acc += p.clone() * power.clone();
                    power *= total.clone();
                }
                let mut pos = 0;
                loop {
                    path[pos] += 1;
                    if path[pos] < s {
                        break;
                    }
                    path[pos] = 0;
                    pos += 1;
                    if pos == n as usize {
                        break 'outer;
                    }
                }
            }
            let gmax = gbar.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            for j in 0..=4usize {
                // compare at the natural magnitude (n·max|ḡ|)^j; odd moments
                // cancel to float noise far below it
                let tol = 1e-12 * (f64::from(n) * gmax).powi(j as i32).max(1.0);
                let want = sums[j].to_f64().unwrap();
                assert!(
                    (m[j] - want).abs() <= tol,
                    "seed={seed} j={j}: {} vs {want}",
                    m[j],
                );
            }
        }
    }

    #[test]
    fn odd_moments_vanish_for_symmetric_construction() {
        let e = std::f64::consts::E;
        let chain = FiniteChain::new(
            vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            vec![e, e],
            vec![1.0, -1.0],
        )
        .unwrap();
        let m = exact_sn_moments(&chain, 9, 5).unwrap();
        assert!(m[1].abs() < 1e-13);
        assert!(m[3].abs() < 1e-12);
        assert!(m[5].abs() < 1e-11);
    }

    #[test]
    fn variance_matches_autocovariance_sum() {
        let chain = FiniteChain::two_state_reference();
        let gbar = chain.g_bar();
        for n in [1u32, 5, 25] {
            let var = exact_sn_variance(&chain, n).unwrap();
            let mut qlg = gbar.clone();
            let mut acc = 0.0;
            for l in 0..n {
                let cov: f64 = chain
                    .pi
                    .iter()
                    .zip(&gbar)
                    .zip(&qlg)
                    .map(|((p, g), q)| p * g * q)
                    .sum();
                acc += if l == 0 { f64::from(n) * cov } else { 2.0 * f64::from(n - l) * cov };
                qlg = chain.apply(&qlg);
            }
            assert!(rel_close(var, acc, 1e-12), "n={n}");
        }
    }

    #[test]
    fn sn_cumulants_first_two() {
        let chain = FiniteChain::two_state_reference();
        let n = 12;
        let gam = sn_cumulants(&chain, n, 4).unwrap();
        assert!(gam[0].abs() < 1e-12);
        let var = exact_sn_variance(&chain, n).unwrap();
        assert!(rel_close(gam[1], var, 1e-12));
    }

    #[test]
    fn sn_cumulants_match_joint_cumulant_sum() {
        // Γ_{π,k}(S_n) = Σ over all ordered k-tuples of Γ(Y_{t₁},…,Y_{t_k}),
        // grouped into sorted tuples with multinomial multiplicities.
        let chain = FiniteChain::two_state_reference();
        let n = 4u32;
        let table = vec![chain.g_bar()];
        for k in 2..=3usize {
            let direct = sn_cumulants(&chain, n, k).unwrap()[k - 1];
            let mut total = 0.0;
            let mut tuple = vec![0u32; k];
            loop {
                let sorted = IndexTuple::new(tuple.clone(), vec![0; k]).unwrap();
                let gamma = joint_cumulant(&chain, &sorted, &table).unwrap();
                // multiplicity = k! / Π (run lengths)!
                let mut runs: Vec<usize> = Vec::new();
                let mut run = 1usize;
                for i in 1..k {
                    if tuple[i] == tuple[i - 1] {
                        run += 1;
                    } else {
                        runs.push(run);
                        run = 1;
                    }
                }
                runs.push(run);
                let k_fact: f64 = (1..=k).map(|j| j as f64).product();
                let denom: f64 = runs
                    .iter()
                    .map(|&r| (1..=r).map(|j| j as f64).product::<f64>())
                    .product();
                total += k_fact / denom * gamma;
                let mut pos = k;
                let mut done = true;
                while pos > 0 {
                    pos -= 1;
                    if tuple[pos] + 1 < n {
                        let v = tuple[pos] + 1;
                        for t in tuple.iter_mut().skip(pos) {
                            *t = v;
                        }
                        done = false;
                        break;
                    }
                }
                if done {
                    break;
                }
            }
            assert!(
                rel_close(direct, total, 1e-9),
                "k={k}: DP {direct} vs tuple sum {total}"
            );
        }
    }

    #[test]
    fn joint_cumulants_permutation_invariant() {
        let chain = FiniteChain::two_state_reference();
        let table = vec![vec![1.0, -2.0], vec![0.3, 1.1], vec![-0.7, 0.4], vec![0.2, 0.9]];
        let times = vec![0u32, 2, 3, 7];
        let base = IndexTuple::new(times.clone(), vec![0, 1, 2, 3]).unwrap();
        let reference = joint_cumulant(&chain, &base, &table).unwrap();
        let perms = [[1usize, 0, 2, 3], [3, 2, 1, 0], [2, 0, 3, 1]];
        for perm in perms {
            // permute the (time, observable) pairs then restore time order
            let mut pairs: Vec<(u32, usize)> = perm.iter().map(|&i| (times[i], i)).collect();
            pairs.sort_by_key(|p| p.0);
            let t = IndexTuple::new(
                pairs.iter().map(|p| p.0).collect(),
                pairs.iter().map(|p| p.1).collect(),
            )
            .unwrap();
            let got = joint_cumulant(&chain, &t, &table).unwrap();
            assert!(rel_close(got, reference, 1e-10));
        }
    }

    #[test]
    fn leonov_small_cases() {
        let chain = FiniteChain::two_state_reference();
        let check = leonov_check(&chain, 1, 1).unwrap();
        assert!(check.pass);
        let gbar = chain.g_bar();
        let var_g: f64 = chain.pi.iter().zip(&gbar).map(|(p, g)| p * g * g).sum();
        assert!(rel_close(check.exact, var_g, 1e-13));
        let check = leonov_check(&chain, 10, 2).unwrap();
        assert!(check.pass, "rel errs {} {}", check.rel_err_assembled, check.rel_err_simplified);
    }

    #[test]
    fn leonov_randomized_instances() {
        for seed in 1..=12u64 {
            let chain = random_chain(seed, 2 + (seed % 3) as usize);
            let n = 3 + (seed % 7) as u32;
            for q in 1..=2u32 {
                let check = leonov_check(&chain, n, q).unwrap();
                assert!(
                    check.pass,
                    "seed={seed} n={n} q={q}: {} {}",
                    check.rel_err_assembled, check.rel_err_simplified
                );
            }
        }
    }

    #[test]
    fn cumulant_envelope_holds_on_certified_chain() {
        let chain = FiniteChain::two_state_reference();
        let cert = certify(&chain, &CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        for n in [5u32, 20] {
            for k in 2..=4usize {
                let q = k.div_ceil(2) as u32;
                let norm = chain.norm_g_valpha(1.0 / (2.0 * f64::from(2 * q)));
                let gamma = sn_cumulants(&chain, n, k).unwrap()[k - 1];
                let envelope = sn_cumulant_envelope(n, &rate, chain.pi_v(), norm, k);
                assert!(gamma.abs() <= envelope, "n={n} k={k}: |{gamma}| > {envelope}");
            }
        }
    }

    #[test]
    fn spectral_density_iid_chain_is_flat() {
        let e = std::f64::consts::E;
        let chain = FiniteChain::new(
            vec![vec![0.6, 0.4], vec![0.6, 0.4]],
            vec![e, e],
            vec![1.0, -1.5],
        )
        .unwrap();
        let cert = certify(&chain, &CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let grid: Vec<f64> = (0..=16).map(|i| -3.14 + f64::from(i) * 0.3925).collect();
        let sd = spectral_density(&chain, &rate, &grid).unwrap();
        let gbar = chain.g_bar();
        let var_g: f64 = chain.pi.iter().zip(&gbar).map(|(p, g)| p * g * g).sum();
        let flat = var_g / (2.0 * std::f64::consts::PI);
        for v in &sd.values {
            assert!(rel_close(*v, flat, 1e-9), "{v} vs {flat}");
        }
    }

    #[test]
    fn spectral_density_zero_frequency_matches_variance_growth() {
        let chain = FiniteChain::two_state_reference();
        let cert = certify(&chain, &CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let sd = spectral_density(&chain, &rate, &[0.0]).unwrap();
        let n = 500u32;
        let var_rate = exact_sn_variance(&chain, n).unwrap() / f64::from(n);
        assert!(
            rel_close(2.0 * std::f64::consts::PI * sd.values[0], var_rate, 1e-2),
            "{} vs {}",
            2.0 * std::f64::consts::PI * sd.values[0],
            var_rate
        );
    }

    #[test]
    fn variance_dominates_n_f_min() {
        let chain = FiniteChain::two_state_reference();
        let cert = certify(&chain, &CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let grid: Vec<f64> = (0..=64)
            .map(|i| -std::f64::consts::PI + f64::from(i) * std::f64::consts::PI / 32.0)
            .collect();
        let sd = spectral_density(&chain, &rate, &grid).unwrap();
        for n in [1u32, 10, 50, 200] {
            let var = exact_sn_variance(&chain, n).unwrap();
            assert!(var >= f64::from(n) * sd.f_min, "n={n}: {var} < {}", f64::from(n) * sd.f_min);
        }
    }
}
