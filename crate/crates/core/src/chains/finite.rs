//! Finite state spaces, where everything the theory promises can be computed
//! exactly: stationary distributions by linear solve, drift and minorization
//! constants by direct evaluation, mixing distances by matrix iteration, and
//! coupling contraction on the product chain.

use serde::{Deserialize, Serialize};

use crate::vgeom::DriftCertificate;
use crate::wasserstein::WassCertificate;
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-14;
const STATIONARY_TOL: f64 = 1e-12;

/// A finite-state chain: row-stochastic transition matrix, Lyapunov values
/// `V ≥ e`, an observable `g`, and the exact stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    pub transition: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub g: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FiniteChain {
    /// Build a chain, solving for π and validating all invariants.
    pub fn new(transition: Vec<Vec<f64>>, v: Vec<f64>, g: Vec<f64>) -> Result<FiniteChain> {
        let s = transition.len();
        if s == 0 {
            return Err(Error::InvalidArgument("empty state space".into()));
        }
        if v.len() != s || g.len() != s {
            return Err(Error::InvalidArgument("V and g must have one entry per state".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidArgument(format!("row {i} has wrong length")));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {sum}, outside 1 ± {ROW_SUM_TOL}"
                )));
            }
        }
        if v.iter().any(|&x| x < std::f64::consts::E) {
            return Err(Error::InvalidArgument("V must be ≥ e entrywise".into()));
        }
        let pi = finite_stationary(&transition)?;
        Ok(FiniteChain { transition, v, g, pi })
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn pi_mean(&self, h: &[f64]) -> f64 {
        self.pi.iter().zip(h).map(|(p, x)| p * x).sum()
    }

    /// π(V).
    pub fn pi_v(&self) -> f64 {
        self.pi_mean(&self.v)
    }

    /// π(V^{1/2}).
    pub fn pi_sqrt_v(&self) -> f64 {
        self.pi.iter().zip(&self.v).map(|(p, v)| p * v.sqrt()).sum()
    }

    /// Centered observable ḡ = g − π(g).
    pub fn g_bar(&self) -> Vec<f64> {
        let mean = self.pi_mean(&self.g);
        self.g.iter().map(|x| x - mean).collect()
    }

    /// (Qh)(x) = Σ_y Q(x,y) h(y).
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.transition
            .iter()
            .map(|row| row.iter().zip(h).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// Q^n h by repeated application.
    pub fn apply_n(&self, h: &[f64], n: usize) -> Vec<f64> {
        let mut out = h.to_vec();
        for _ in 0..n {
            out = self.apply(&out);
        }
        out
    }

    /// Row x of Q^n, i.e. the law of X_n started from state x.
    pub fn row_n(&self, x: usize, n: usize) -> Vec<f64> {
        let mut dist = vec![0.0; self.states()];
        dist[x] = 1.0;
        for _ in 0..n {
            dist = self.push_forward(&dist);
        }
        dist
    }

    /// One-step push-forward of a distribution: (ξQ)(y) = Σ_x ξ(x)Q(x,y).
    pub fn push_forward(&self, xi: &[f64]) -> Vec<f64> {
        let s = self.states();
        let mut out = vec![0.0; s];
        for (x, &w) in xi.iter().enumerate() {
            if w != 0.0 {
                for y in 0..s {
                    out[y] += w * self.transition[x][y];
                }
            }
        }
        out
    }

    /// Exact weighted distance ‖δ_x Qⁿ − π‖_{V^α} = Σ_y |Qⁿ(x,y) − π(y)| V(y)^α.
    pub fn valpha_distance(&self, x: usize, n: usize, alpha: f64) -> f64 {
        let row = self.row_n(x, n);
        row.iter()
            .zip(&self.pi)
            .zip(&self.v)
            .map(|((q, p), v)| (q - p).abs() * v.powf(alpha))
            .sum()
    }

    /// ‖ḡ‖_{V^α} = max_x |ḡ(x)| / V(x)^α.
    pub fn norm_g_valpha(&self, alpha: f64) -> f64 {
        self.g_bar()
            .iter()
            .zip(&self.v)
            .map(|(g, v)| g.abs() / v.powf(alpha))
            .fold(0.0, f64::max)
    }

    /// ‖ḡ‖_{W^γ} with W = log V.
    pub fn norm_g_wgamma(&self, gamma: f64) -> f64 {
        self.g_bar()
            .iter()
            .zip(&self.v)
            .map(|(g, v)| g.abs() / v.ln().powf(gamma))
            .fold(0.0, f64::max)
    }

    /// `N_{β,V}(ḡ)` for the discrete cost c(x,x') = 1_{x≠x'}: the larger of
    /// the sup part and the Lipschitz part over distinct pairs.
    pub fn norm_g_n_beta_v(&self, beta: f64) -> f64 {
        let gbar = self.g_bar();
        let sup_part = gbar
            .iter()
            .zip(&self.v)
            .map(|(g, v)| g.abs() / v.powf(beta))
            .fold(0.0, f64::max);
        let mut lip_part: f64 = 0.0;
        for x in 0..self.states() {
            for y in 0..self.states() {
                if x != y {
                    let vbar = 0.5 * (self.v[x] + self.v[y]);
                    lip_part = lip_part.max((gbar[x] - gbar[y]).abs() / vbar.powf(beta));
                }
            }
        }
        sup_part.max(lip_part)
    }

    /// `N_{1,W^γ}(ḡ)` for the discrete cost.
    pub fn norm_g_n_wgamma(&self, gamma: f64) -> f64 {
        let gbar = self.g_bar();
        let w: Vec<f64> = self.v.iter().map(|v| v.ln()).collect();
        let sup_part = gbar
            .iter()
            .zip(&w)
            .map(|(g, wx)| g.abs() / wx.powf(gamma))
            .fold(0.0, f64::max);
        let mut lip_part: f64 = 0.0;
        for x in 0..self.states() {
            for y in 0..self.states() {
                if x != y {
                    let wbar = 0.5 * (w[x] + w[y]);
                    lip_part = lip_part.max((gbar[x] - gbar[y]).abs() / wbar.powf(gamma));
                }
            }
        }
        sup_part.max(lip_part)
    }

    /// The two-state reference chain Q=[[0.9,0.1],[0.2,0.8]] with
    /// V=(e, e³) and centered observable g=(1,−2).
    pub fn two_state_reference() -> FiniteChain {
        let e = std::f64::consts::E;
        FiniteChain::new(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![e, e.powi(3)],
            vec![1.0, -2.0],
        )
        .expect("reference chain is valid")
    }
}

/// Exact stationary vector of an irreducible row-stochastic matrix, by
/// Gaussian elimination on (Qᵀ − I)π = 0 with Σπ = 1.
pub fn finite_stationary(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let s = transition.len();
    if !is_irreducible(transition) {
        return Err(Error::InvalidArgument("transition matrix is reducible".into()));
    }
    // Build (Qᵀ − I) with the last equation replaced by Σπ = 1.
    let mut a = vec![vec![0.0f64; s + 1]; s];
    for x in 0..s {
        for y in 0..s {
            a[y][x] += transition[x][y];
        }
    }
    for x in 0..s {
        a[x][x] -= 1.0;
    }
    for x in 0..s {
        a[s - 1][x] = 1.0;
    }
    a[s - 1][s] = 1.0;

    // Partial-pivot elimination.
    for col in 0..s {
        let pivot = (col..s)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        if a[col][col].abs() < 1e-300 {
            return Err(Error::Internal("singular system in stationary solve".into()));
        }
        for row in 0..s {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=s {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    let mut pi: Vec<f64> = (0..s).map(|i| a[i][s] / a[i][i]).collect();
    // Normalize away elimination round-off and check the residual.
    let total: f64 = pi.iter().sum();
    for p in pi.iter_mut() {
        *p /= total;
    }
    for (y, p) in pi.iter().enumerate() {
        if *p < -STATIONARY_TOL {
            return Err(Error::Internal(format!("negative stationary mass at state {y}")));
        }
        let back: f64 = (0..s).map(|x| pi[x] * transition[x][y]).sum();
        if (back - p).abs() > STATIONARY_TOL {
            return Err(Error::Internal(format!(
                "stationarity residual {} at state {y}",
                (back - p).abs()
            )));
        }
    }
    Ok(pi)
}

fn is_irreducible(transition: &[Vec<f64>]) -> bool {
    let s = transition.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; s];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..s {
                let p = if forward { transition[x][y] } else { transition[y][x] };
                if p > 0.0 && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    reach(true) && reach(false)
}

/// Drift constants for a given λ (or a fitted one), with the witness state
/// attaining the maximum of (QV)(x) − λV(x).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftWitness {
    pub lambda: f64,
    pub b: f64,
    pub witness_state: usize,
}

/// Evaluate (QV)(x) exactly and fit the offset: b = max_x ((QV)(x) − λV(x))⁺.
/// Without a target λ, scans a λ grid and returns the choice minimizing the
/// implied `λ̄₁ = λ + 2b/(1+d)` subject to feasibility.
pub fn certify_drift(chain: &FiniteChain, target_lambda: Option<f64>, d: f64) -> Result<DriftWitness> {
    let qv = chain.apply(&chain.v);
    let fit = |lambda: f64| -> DriftWitness {
        let mut b: f64 = 0.0;
        let mut witness = 0;
        for (x, (&qvx, &vx)) in qv.iter().zip(&chain.v).enumerate() {
            let gap = qvx - lambda * vx;
            if gap > b {
                b = gap;
                witness = x;
            }
        }
        DriftWitness { lambda, b: b.max(0.0), witness_state: witness }
    };
    if let Some(lambda) = target_lambda {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("target λ ∉ (0,1): {lambda}")));
        }
        return Ok(fit(lambda));
    }
    let mut best: Option<DriftWitness> = None;
    let mut best_bar = f64::INFINITY;
    for i in 1..100 {
        let lambda = f64::from(i) / 100.0;
        let w = fit(lambda);
        let bar = lambda + 2.0 * w.b / (1.0 + d);
        if bar < 1.0 && bar < best_bar {
            best_bar = bar;
            best = Some(w);
        }
    }
    best.ok_or_else(|| {
        Error::CertificationFailure(format!(
            "no λ on the grid satisfies λ + 2b/(1+d) < 1 with d = {d}; best λ̄ = {best_bar}"
        ))
    })
}

/// Minorization mass and measure over the level set C = {V ≤ d}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallSetWitness {
    pub eps: f64,
    /// Witness minorization measure ν (normalized min vector).
    pub nu: Vec<f64>,
    pub small_set: Vec<usize>,
}

/// Doeblin min-sum construction: ε = Σ_y min_{x∈C} Q^m(x,y).
pub fn certify_small_set(chain: &FiniteChain, m: u32, d: f64) -> Result<SmallSetWitness> {
    let set: Vec<usize> = (0..chain.states()).filter(|&x| chain.v[x] <= d).collect();
    if set.is_empty() {
        return Err(Error::CertificationFailure(format!("level set {{V ≤ {d}}} is empty")));
    }
    let rows: Vec<Vec<f64>> = set.iter().map(|&x| chain.row_n(x, m as usize)).collect();
    let s = chain.states();
    let mins: Vec<f64> = (0..s)
        .map(|y| rows.iter().map(|r| r[y]).fold(f64::INFINITY, f64::min))
        .collect();
    let eps: f64 = mins.iter().sum();
    if eps <= 0.0 {
        return Err(Error::CertificationFailure(format!(
            "minorization mass is zero for m={m}, d={d}"
        )));
    }
    let nu = mins.iter().map(|x| x / eps).collect();
    Ok(SmallSetWitness { eps, nu, small_set: set })
}

/// Options for the full certification search.
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    /// Level-set radii to try, as multiples of max V.
    pub d_factors: Vec<f64>,
    /// Minorization step counts to try.
    pub m_candidates: Vec<u32>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { d_factors: vec![1.5, 3.0, 10.0, 30.0], m_candidates: vec![1, 2, 3] }
    }
}

/// Search (λ, d, m) for the certificate minimizing the mixing rate ρ, with
/// π(V) attached exactly.
pub fn certify(chain: &FiniteChain, opts: &CertifyOptions) -> Result<DriftCertificate> {
    let vmax = chain.v.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut best: Option<(f64, DriftCertificate)> = None;
    let mut last_err = String::new();
    for &f in &opts.d_factors {
        let d = f * vmax;
        for &m in &opts.m_candidates {
            let drift = match certify_drift(chain, None, d) {
                Ok(w) => w,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            let small = match certify_small_set(chain, m, d) {
                Ok(w) => w,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            // ε must be < 1 for the rate formulas; a full-mass minorization
            // is clipped just below 1.
            let eps = small.eps.min(1.0 - 1e-9);
            let cert =
                DriftCertificate::new(drift.lambda, drift.b, d, m, eps).with_pi_v(chain.pi_v());
            if cert.validate().is_err() {
                continue;
            }
            match crate::vgeom::geometric_rate(&cert) {
                Ok(rate) => {
                    if best.as_ref().map_or(true, |(r, _)| rate.rho < *r) {
                        best = Some((rate.rho, cert));
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
        }
    }
    best.map(|(_, c)| c).ok_or_else(|| {
        Error::CertificationFailure(format!("no feasible (λ, d, m) found; last failure: {last_err}"))
    })
}

/// Maximal-coupling witness for the product chain, certifying the coupling
/// conditions for the discrete cost c(x,x') = 1_{x≠x'}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingWitness {
    pub eps: f64,
    pub kappa_k: f64,
    /// S²×S² coupling kernel, rows indexed by (x, x') = x*S + x'.
    pub kernel: Vec<Vec<f64>>,
}

/// Row-maximal coupling of Q with itself: from (x, x') the two copies move
/// together with probability Σ_y min(Q(x,y), Q(x',y)) and independently
/// according to the normalized residuals otherwise. The diagonal is
/// absorbing, so K c ≤ c (κ_K = 1) and the m-step meet probability over
/// C̄ = {V ≤ d}² gives ε.
pub fn certify_coupling(chain: &FiniteChain, m: u32, d: f64) -> Result<CouplingWitness> {
    let s = chain.states();
    let q = &chain.transition;
    let mut kernel = vec![vec![0.0f64; s * s]; s * s];
    for x in 0..s {
        for xp in 0..s {
            let row = &mut kernel[x * s + xp];
            if x == xp {
                for y in 0..s {
                    row[y * s + y] = q[x][y];
                }
                continue;
            }
            let meet: Vec<f64> = (0..s).map(|y| q[x][y].min(q[xp][y])).collect();
            let eps_xy: f64 = meet.iter().sum();
            for (y, &p) in meet.iter().enumerate() {
                row[y * s + y] += p;
            }
            if eps_xy < 1.0 {
                let res_x: Vec<f64> = (0..s).map(|y| q[x][y] - meet[y]).collect();
                let res_xp: Vec<f64> = (0..s).map(|y| q[xp][y] - meet[y]).collect();
                let norm = 1.0 - eps_xy;
                for y in 0..s {
                    for yp in 0..s {
                        row[y * s + yp] += res_x[y] * res_xp[yp] / norm;
                    }
                }
            }
        }
    }

    // K^m applied to the discrete cost, evaluated exactly.
    let cost: Vec<f64> = (0..s * s)
        .map(|i| if i / s == i % s { 0.0 } else { 1.0 })
        .collect();
    let mut kmc = cost.clone();
    for _ in 0..m {
        kmc = (0..s * s)
            .map(|i| kernel[i].iter().zip(&kmc).map(|(p, c)| p * c).sum())
            .collect();
    }
    // κ_K: one-step expansion over distinct pairs (1 for this coupling).
    let mut k1c = cost.clone();
    k1c = (0..s * s)
        .map(|i| kernel[i].iter().zip(&k1c).map(|(p, c)| p * c).sum())
        .collect();
    let mut kappa_k: f64 = 1.0;
    let mut eps: f64 = 1.0;
    for x in 0..s {
        for xp in 0..s {
            if x == xp {
                continue;
            }
            let i = x * s + xp;
            kappa_k = kappa_k.max(k1c[i]); // cost is 1 on distinct pairs
            if chain.v[x] <= d && chain.v[xp] <= d {
                eps = eps.min(1.0 - kmc[i]);
            }
        }
    }
    if eps <= 0.0 || eps >= 1.0 {
        return Err(Error::CertificationFailure(format!(
            "coupling meet probability {eps} outside (0,1) for m={m}, d={d}"
        )));
    }
    Ok(CouplingWitness { eps, kappa_k, kernel })
}

impl CouplingWitness {
    /// Exact E_{(x,x')}[ c^{1/2}(X_n, X'_n) V̄^{β}(X_n, X'_n) ] by iterating
    /// the product chain, for the discrete cost.
    pub fn coupled_expectation(
        &self,
        chain: &FiniteChain,
        x: usize,
        xp: usize,
        n: u32,
        beta: f64,
    ) -> f64 {
        let s = chain.states();
        let mut dist = vec![0.0f64; s * s];
        dist[x * s + xp] = 1.0;
        for _ in 0..n {
            let mut next = vec![0.0f64; s * s];
            for (i, &w) in dist.iter().enumerate() {
                if w != 0.0 {
                    for (j, &p) in self.kernel[i].iter().enumerate() {
                        if p != 0.0 {
                            next[j] += w * p;
                        }
                    }
                }
            }
            dist = next;
        }
        let mut acc = 0.0;
        for (i, &w) in dist.iter().enumerate() {
            let (y, yp) = (i / s, i % s);
            if y != yp {
                let vbar = 0.5 * (chain.v[y] + chain.v[yp]);
                acc += w * vbar.powf(beta);
            }
        }
        acc
    }

    /// Certificate assembled from this witness and a drift fit.
    pub fn to_certificate(&self, drift: &DriftWitness, d: f64, m: u32, pi_v: f64) -> WassCertificate {
        WassCertificate::new(drift.lambda, drift.b, d, m, self.eps, self.kappa_k).with_pi_v(pi_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn stationary_reference_chain() {
        let q = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let pi = finite_stationary(&q).unwrap();
        // hand linear solve: π = (2/3, 1/3); 0.9·2/3 + 0.2·1/3 = 2/3 checks
        assert!(rel_close(pi[0], 2.0 / 3.0, 1e-13));
        assert!(rel_close(pi[1], 1.0 / 3.0, 1e-13));
    }

    #[test]
    fn stationary_doubly_stochastic_is_uniform() {
        let q = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
        ];
        let pi = finite_stationary(&q).unwrap();
        for p in pi {
            assert!(rel_close(p, 1.0 / 3.0, 1e-12));
        }
    }

    #[test]
    fn stationary_identity_perturbation_uniform() {
        // Q = (1−δ)I + δU with uniform rows is doubly stochastic.
        let s = 4;
        let delta = 0.3;
        let q: Vec<Vec<f64>> = (0..s)
            .map(|x| {
                (0..s)
                    .map(|y| if x == y { 1.0 - delta + delta / s as f64 } else { delta / s as f64 })
                    .collect()
            })
            .collect();
        let pi = finite_stationary(&q).unwrap();
        for p in pi {
            assert!(rel_close(p, 0.25, 1e-12));
        }
    }

    #[test]
    fn reducible_matrix_rejected() {
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(finite_stationary(&q).is_err());
    }

    #[test]
    fn drift_constant_v_gives_free_lambda() {
        let e = std::f64::consts::E;
        let chain = FiniteChain::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![e, e],
            vec![1.0, -1.0],
        )
        .unwrap();
        // QV = e·1, so for any λ the fitted b is e(1−λ).
        let w = certify_drift(&chain, Some(0.4), 10.0).unwrap();
        assert!(rel_close(w.b, e * 0.6, 1e-13));
    }

    #[test]
    fn drift_two_state_reference() {
        let chain = FiniteChain::two_state_reference();
        let qv = chain.apply(&chain.v);
        let w = certify_drift(&chain, Some(0.8), 30.0).unwrap();
        // equality at the witness state
        let attained = qv[w.witness_state] - 0.8 * chain.v[w.witness_state];
        assert!(rel_close(attained, w.b, 1e-13));
        for x in 0..2 {
            assert!(qv[x] <= 0.8 * chain.v[x] + w.b + 1e-12);
        }
    }

    #[test]
    fn drift_b_monotone_in_lambda() {
        let chain = FiniteChain::two_state_reference();
        let mut prev = f64::INFINITY;
        for i in 1..10 {
            let w = certify_drift(&chain, Some(f64::from(i) * 0.1), 30.0).unwrap();
            assert!(w.b <= prev + 1e-15);
            prev = w.b;
        }
    }

    #[test]
    fn small_set_min_sum_reference() {
        let chain = FiniteChain::two_state_reference();
        // both states in C, m=1: ε = min(0.9,0.2) + min(0.1,0.8) = 0.3
        let w = certify_small_set(&chain, 1, 30.0).unwrap();
        assert!(rel_close(w.eps, 0.3, 1e-15));
        assert_eq!(w.small_set, vec![0, 1]);
        // ε nondecreasing in m on this chain
        let e1 = certify_small_set(&chain, 1, 30.0).unwrap().eps;
        let e2 = certify_small_set(&chain, 2, 30.0).unwrap().eps;
        let e3 = certify_small_set(&chain, 3, 30.0).unwrap().eps;
        assert!(e2 >= e1);
        assert!(e3 >= e2);
    }

    #[test]
    fn single_state_small_set_has_full_mass() {
        let chain = FiniteChain::two_state_reference();
        // d = e keeps only state 0 in C; a single row minorizes itself.
        let w = certify_small_set(&chain, 1, std::f64::consts::E).unwrap();
        assert_eq!(w.small_set, vec![0]);
        assert!(rel_close(w.eps, 1.0, 1e-15));
    }

    #[test]
    fn empty_small_set_rejected() {
        let chain = FiniteChain::two_state_reference();
        assert!(certify_small_set(&chain, 1, 1.0).is_err());
    }

    #[test]
    fn full_certification_of_reference_chain() {
        let chain = FiniteChain::two_state_reference();
        let cert = certify(&chain, &CertifyOptions::default()).unwrap();
        cert.validate().unwrap();
        let rate = crate::vgeom::geometric_rate(&cert).unwrap();
        assert!(rate.rho < 1.0);
        // the certificate must actually witness the drift inequality
        let qv = chain.apply(&chain.v);
        for x in 0..chain.states() {
            assert!(qv[x] <= cert.lambda * chain.v[x] + cert.b + 1e-12);
        }
    }

    #[test]
    fn coupling_witness_reference_chain() {
        let chain = FiniteChain::two_state_reference();
        let w = certify_coupling(&chain, 1, 30.0).unwrap();
        // meet probability of the two distinct rows is 0.3
        assert!(rel_close(w.eps, 0.3, 1e-13));
        assert!(rel_close(w.kappa_k, 1.0, 1e-13));
        // kernel rows are stochastic
        for row in &w.kernel {
            assert!(rel_close(row.iter().sum::<f64>(), 1.0, 1e-12));
        }
        // marginals of the coupling are both Q
        let s = chain.states();
        for x in 0..s {
            for xp in 0..s {
                let row = &w.kernel[x * s + xp];
                for y in 0..s {
                    let m1: f64 = (0..s).map(|yp| row[y * s + yp]).sum();
                    let m2: f64 = (0..s).map(|yy| row[yy * s + y]).sum();
                    assert!(rel_close(m1, chain.transition[x][y], 1e-12));
                    assert!(rel_close(m2, chain.transition[xp][y], 1e-12));
                }
            }
        }
    }

    #[test]
    fn coupled_diagonal_stays_together() {
        let chain = FiniteChain::two_state_reference();
        let w = certify_coupling(&chain, 1, 30.0).unwrap();
        for n in [1u32, 5, 20] {
            assert!(w.coupled_expectation(&chain, 0, 0, n, 0.5) < 1e-15);
        }
    }
}
