//! End-to-end verification suite: one function per acceptance criterion,
//! shared by the `acceptance` integration tests and `mcbound verify`.
//! Every criterion pins its tolerance and time budget here.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bounds::{self, BoundInputs, GNorm, TheoremId, VarProvenance};
use crate::chains::{self, sgd, FiniteChain};
use crate::combinatorics;
use crate::cumulants::{self, IndexTuple};
use crate::harness::{self, FiniteModel, McModel, ModelSpec, SgdMcModel, SweepConfig};
use crate::vgeom::{geometric_rate, valpha_deviation};
use crate::wasserstein::{contraction_rate, delta_star, WassCertificate};
use crate::Result;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {} — {} ({:.2}s)",
            self.index,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.seconds
        )
    }
}

fn finish(index: usize, name: &'static str, start: Instant, budget: f64, passed: bool, detail: String) -> CriterionResult {
    let seconds = start.elapsed().as_secs_f64();
    CriterionResult {
        index,
        name,
        passed: passed && seconds < budget,
        detail: if seconds >= budget {
            format!("{detail}; exceeded {budget}s budget")
        } else {
            detail
        },
        seconds,
    }
}

/// Deterministic certified random chain with ≤ 5 states. Transition entries
/// are floored away from zero so a minorization always exists.
pub fn random_certified_chain(seed: u64, index: u64) -> FiniteChain {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0xC0FFEE ^ index);
    loop {
        let states = rng.random_range(2..=5usize);
        let transition: Vec<Vec<f64>> = (0..states)
            .map(|_| {
                let raw: Vec<f64> = (0..states).map(|_| 0.05 + rng.random::<f64>()).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        let v: Vec<f64> = (0..states)
            .map(|_| (1.0 + 1.2 * rng.random::<f64>()).exp())
            .collect();
        let g: Vec<f64> = (0..states).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        if let Ok(chain) = FiniteChain::new(transition, v, g) {
            if chains::certify(&chain, &chains::CertifyOptions::default()).is_ok()
                && chain.g_bar().iter().any(|x| x.abs() > 0.05)
            {
                return chain;
            }
        }
    }
}

/// The reference SGD model of the applications section.
pub fn reference_sgd() -> sgd::SgdModel {
    sgd::SgdModel::new(1.0, 3.0, 1.0, 0.1, 2, vec![0.0, 0.0]).expect("reference model is valid")
}

/// The reference pCN model: two modes, tight covariance, smooth bounded-slope
/// potential, trusted contraction parameters.
pub fn reference_pcn() -> chains::pcn::PcnModel {
    chains::pcn::PcnModel {
        dim: 2,
        cov_spectrum: vec![0.02, 0.01],
        rho_h: 0.2,
        potential: chains::pcn::Potential::SmoothNorm { scale: 0.3 },
        l_phi: 0.3,
        alpha_bar: -0.2,
        r_bar: 0.4,
        a_exponent: 0.75,
    }
}

/// Criterion 1: exact Rosenthal domination on randomized certified chains.
pub fn criterion_1(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut violations = 0u32;
    let mut cells = 0u32;
    for idx in 0..20u64 {
        let chain = random_certified_chain(seed, idx);
        let cert = chains::certify(&chain, &chains::CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let pi_v = chain.pi_v();
        for n in 2..=40u32 {
            let moments = cumulants::exact_sn_moments(&chain, n, 6).unwrap();
            let var = moments[2];
            for q in 1..=3u32 {
                let exact = moments[2 * q as usize];
                let mut inputs = BoundInputs::new(
                    q,
                    0.0,
                    n,
                    chain.norm_g_valpha(1.0 / f64::from(2 * q)),
                    GNorm::VPow2qInv,
                    var,
                    VarProvenance::Exact,
                );
                inputs.pi_v = Some(pi_v);
                let t1 = bounds::rosenthal_v(&inputs, &rate).unwrap();
                if !(exact <= t1.value) {
                    violations += 1;
                }
                inputs.norm_kind = GNorm::WGamma;
                inputs.norm_g = chain.norm_g_wgamma(0.0);
                let t3 = bounds::rosenthal_logv(&inputs, &rate).unwrap();
                if !(exact <= t3.value) {
                    violations += 1;
                }
                cells += 2;
            }
        }
    }
    finish(
        1,
        "exact Rosenthal domination",
        start,
        60.0,
        violations == 0,
        format!("{cells} exact comparisons, {violations} violations"),
    )
}

/// Criterion 2: the cumulant-expansion assembly reproduces the exact moment.
pub fn criterion_2(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut failures = 0u32;
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let chain = random_certified_chain(seed ^ 0xA5A5, i);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(0x1E0 ^ i);
        let n = rng.random_range(1..=40u32);
        let q = rng.random_range(1..=3u32);
        let check = cumulants::leonov_check(&chain, n, q).unwrap();
        worst = worst.max(check.rel_err_assembled).max(check.rel_err_simplified);
        if !check.pass {
            failures += 1;
        }
    }
    finish(
        2,
        "moment-from-cumulants exactness",
        start,
        30.0,
        failures == 0,
        format!("50 instances, worst rel err {worst:.2e}, {failures} failures"),
    )
}

/// Criterion 3: the one-step reduction identity for nested-centered moments.
pub fn criterion_3(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut failures = 0u32;
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let chain = random_certified_chain(seed ^ 0x3C3C, i % 25);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(0x700 ^ i);
        let k = rng.random_range(2..=4usize);
        let table: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..chain.states()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect())
            .collect();
        let mut times: Vec<u32> = (0..k).map(|_| rng.random_range(0..15u32)).collect();
        times.sort_unstable();
        let tuple = IndexTuple::new(times, (0..k).collect()).unwrap();
        let check = cumulants::markov_reduction_check(&chain, &tuple, &table).unwrap();
        worst = worst.max(check.rel_err);
        if !check.pass {
            failures += 1;
        }
    }
    finish(
        3,
        "nested-moment reduction identity",
        start,
        10.0,
        failures == 0,
        format!("100 tuples, worst rel err {worst:.2e}, {failures} failures"),
    )
}

/// Criterion 4: exact mixing distances stay below the certified envelope.
pub fn criterion_4(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut violations = 0u32;
    let mut cells = 0u32;
    let mut chains_under_test = vec![FiniteChain::two_state_reference()];
    for idx in 0..5u64 {
        chains_under_test.push(random_certified_chain(seed ^ 0x44, idx));
    }
    for chain in &chains_under_test {
        let cert = chains::certify(chain, &chains::CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let pi_v = chain.pi_v();
        for x in 0..chain.states() {
            for n in 0..=100u32 {
                let exact = chain.valpha_distance(x, n as usize, 1.0);
                let envelope = rate.c * (chain.v[x] + pi_v) * (f64::from(n) * rate.log_rho).exp();
                if !(exact <= envelope) {
                    violations += 1;
                }
                cells += 1;
                for alpha in [0.25, 0.5, 1.0] {
                    let exact_a = chain.valpha_distance(x, n as usize, alpha);
                    let dev = valpha_deviation(&rate, pi_v, alpha, chain.v[x], n).unwrap();
                    if !(exact_a <= dev) {
                        violations += 1;
                    }
                    cells += 1;
                }
            }
        }
    }
    finish(
        4,
        "mixing-rate domination",
        start,
        10.0,
        violations == 0,
        format!("{cells} envelope checks, {violations} violations"),
    )
}

/// Criterion 5: the contraction root solver.
pub fn criterion_5(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();

    let reference = WassCertificate::new(0.5, 1.0, 9.0, 1, 0.5, 1.0);
    let ds = delta_star(&reference).unwrap();
    let quadratic = (-1.15 + 2.8225f64.sqrt()) / 1.0;
    if (ds.value - quadratic).abs() >= 1e-10 {
        ok = false;
        detail.push(format!("root {} vs quadratic {}", ds.value, quadratic));
    }

    let mut degenerate = reference.clone();
    degenerate.eps = 0.9;
    let ds0 = delta_star(&degenerate).unwrap();
    if ds0.value != 0.0 || !ds0.degenerate {
        ok = false;
        detail.push("degenerate branch not exactly 0".into());
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x55);
    let mut checked = 0;
    while checked < 200 {
        let lambda = 0.05 + 0.9 * rng.random::<f64>();
        let b = 1.0 + 10.0 * rng.random::<f64>();
        let d = 2.0 * b / (1.0 - lambda) / (0.2 + 0.7 * rng.random::<f64>()) + 1.0;
        let m = rng.random_range(1..=3u32);
        let eps = 0.01 + 0.98 * rng.random::<f64>();
        let cert = WassCertificate::new(lambda, b, d, m, eps, 1.0 + rng.random::<f64>());
        if cert.validate().is_err() {
            continue;
        }
        let rate = contraction_rate(&cert, b / (1.0 - lambda)).unwrap();
        if !(rate.varrho > 0.0 && rate.varrho < 1.0) {
            ok = false;
            detail.push(format!("ϱ={} out of range", rate.varrho));
            break;
        }
        checked += 1;
    }
    if detail.is_empty() {
        detail.push(format!(
            "root {:.10} (residual {:.1e}), degenerate exact 0, 200 contraction rates in (0,1)",
            ds.value, ds.residual
        ));
    }
    finish(5, "contraction root solver", start, 5.0, ok, detail.join("; "))
}

struct TailCase {
    clamped: f64,
    ci_low: f64,
    t: f64,
}

fn tail_grid_check(cases: &[TailCase]) -> (bool, String) {
    let ok = cases.iter().all(|c| c.clamped >= c.ci_low);
    let detail = cases
        .iter()
        .map(|c| format!("t={:.2}: bound {:.3} vs CP-low {:.4}", c.t, c.clamped, c.ci_low))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, detail)
}

/// Criterion 6: stationary Bernstein tails dominate the Monte Carlo truth.
pub fn criterion_6(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let n = 100u32;
    let replicas = 100_000u32;
    let level = 0.999;

    // total-variation side on the two-state reference chain
    let chain = FiniteChain::two_state_reference();
    let cert = chains::certify(&chain, &chains::CertifyOptions::default()).unwrap();
    let rate = geometric_rate(&cert).unwrap();
    let var = cumulants::exact_sn_variance(&chain, n).unwrap();
    let sigma_root_n = var.sqrt();
    let mut inputs = BoundInputs::new(
        1,
        0.0,
        n,
        chain.norm_g_wgamma(0.0),
        GNorm::WGamma,
        var,
        VarProvenance::Exact,
    );
    inputs.pi_v = Some(chain.pi_v());
    let bconst = bounds::bernstein_constant_v(&inputs, &rate).unwrap();
    let model = FiniteModel::stationary(&chain);
    let samples = harness::mc_sn(&model, n, replicas, seed ^ 0x61);
    let mut cases = Vec::new();
    for factor in [0.5, 1.0, 2.0, 4.0] {
        let t = factor * sigma_root_n;
        let report = bounds::bernstein_tail(TheoremId::T5, t, &inputs, bconst).unwrap();
        let est = harness::tail_from_samples(&samples, t, level, seed ^ 0x61);
        cases.push(TailCase { clamped: report.clamped.unwrap(), ci_low: est.ci_low, t });
    }
    let (ok_v, detail_v) = tail_grid_check(&cases);

    // Wasserstein side on the SGD chain with an empirical-upper variance
    let sgd_model = reference_sgd();
    let consts = sgd::sgd_constants(&sgd_model).unwrap();
    let pi_v_upper = consts.b / (1.0 - consts.lambda);
    let wrate = contraction_rate(&consts.certificate, pi_v_upper).unwrap();
    let mc = SgdMcModel {
        model: &sgd_model,
        direction: vec![1.0, 0.0],
        burn_in: 2_000,
        disperse_radius: None,
    };
    let var_est = harness::batch_means_var_upper(&mc, n, 400, 2_000, seed ^ 0x62, 0.99);
    let mut winputs = BoundInputs::new(
        1,
        0.0,
        n,
        sgd_model.observable_norm_upper(),
        GNorm::NWGamma,
        var_est.ci_high,
        VarProvenance::EmpiricalUpper,
    );
    winputs.pi_v = Some(pi_v_upper);
    let jconst = bounds::bernstein_constant_w(&winputs, &wrate).unwrap();
    let wsamples = harness::mc_sn(&mc, n, replicas, seed ^ 0x63);
    let sg_sigma = var_est.point.sqrt();
    let mut wcases = Vec::new();
    for factor in [0.5, 1.0, 2.0, 4.0] {
        let t = factor * sg_sigma;
        let report = bounds::bernstein_tail(TheoremId::T10, t, &winputs, jconst).unwrap();
        let est = harness::tail_from_samples(&wsamples, t, level, seed ^ 0x63);
        wcases.push(TailCase { clamped: report.clamped.unwrap(), ci_low: est.ci_low, t });
    }
    let (ok_w, detail_w) = tail_grid_check(&wcases);

    finish(
        6,
        "Bernstein tail domination",
        start,
        300.0,
        ok_v && ok_w,
        format!("TV side: {detail_v} | W side: {detail_w}"),
    )
}

/// Criterion 7: non-stationary envelopes (exact moments and statistical tails).
pub fn criterion_7(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut violations = 0u32;
    let mut cells = 0u32;

    // exact moment domination from the worst state, T2 and T4
    let mut chains_under_test = vec![FiniteChain::two_state_reference()];
    for idx in 0..2u64 {
        chains_under_test.push(random_certified_chain(seed ^ 0x77, idx));
    }
    for chain in &chains_under_test {
        let cert = chains::certify(chain, &chains::CertifyOptions::default()).unwrap();
        let rate = geometric_rate(&cert).unwrap();
        let worst = (0..chain.states())
            .max_by(|&a, &b| chain.v[a].partial_cmp(&chain.v[b]).unwrap())
            .unwrap();
        let mut law = vec![0.0; chain.states()];
        law[worst] = 1.0;
        for n in 2..=30u32 {
            let from_worst = cumulants::exact_sn_moments_from(chain, Some(&law), n, 4).unwrap();
            let stationary_var = cumulants::exact_sn_variance(chain, n).unwrap();
            for q in 1..=2u32 {
                let exact = from_worst[2 * q as usize];
                let mut inputs = BoundInputs::new(
                    q,
                    0.0,
                    n,
                    chain.norm_g_valpha(1.0 / f64::from(2 * q)),
                    GNorm::VPow2qInv,
                    stationary_var,
                    VarProvenance::Exact,
                );
                inputs.pi_v = Some(chain.pi_v());
                inputs.xi_v = Some(chain.v[worst]);
                let t2 = bounds::rosenthal_v_shift(&inputs, &rate).unwrap();
                if !(exact <= t2.value) {
                    violations += 1;
                }
                inputs.norm_kind = GNorm::WGamma;
                inputs.norm_g = chain.norm_g_wgamma(0.0);
                let t4 = bounds::rosenthal_logv_shift(&inputs, &rate).unwrap();
                if !(exact <= t4.value) {
                    violations += 1;
                }
                cells += 2;
            }
        }
    }

    // statistical tails: total-variation side from the worst state
    let chain = FiniteChain::two_state_reference();
    let cert = chains::certify(&chain, &chains::CertifyOptions::default()).unwrap();
    let rate = geometric_rate(&cert).unwrap();
    let n = 100u32;
    let var = cumulants::exact_sn_variance(&chain, n).unwrap();
    let worst = 1usize;
    let mut inputs = BoundInputs::new(
        1,
        0.0,
        n,
        chain.norm_g_wgamma(0.0),
        GNorm::WGamma,
        var,
        VarProvenance::Exact,
    );
    inputs.pi_v = Some(chain.pi_v());
    inputs.xi_v = Some(chain.v[worst]);
    let model = FiniteModel::from_state(&chain, worst);
    let samples = harness::mc_sn(&model, n, 100_000, seed ^ 0x71);
    for factor in [0.5, 1.0, 2.0, 4.0] {
        let t = factor * var.sqrt();
        let report = bounds::nonstationary_tail_v(t, &inputs, &rate).unwrap();
        let est = harness::tail_from_samples(&samples, t, 0.999, seed ^ 0x71);
        if report.clamped.unwrap() < est.ci_low {
            violations += 1;
        }
        cells += 1;
    }

    // Wasserstein side from a dispersed initial law on the SGD chain
    let sgd_model = reference_sgd();
    let consts = sgd::sgd_constants(&sgd_model).unwrap();
    let pi_v_upper = consts.b / (1.0 - consts.lambda);
    let wrate = contraction_rate(&consts.certificate, pi_v_upper).unwrap();
    let mc = SgdMcModel {
        model: &sgd_model,
        direction: vec![1.0, 0.0],
        burn_in: 2_000,
        disperse_radius: None,
    };
    let var_est = harness::batch_means_var_upper(&mc, n, 400, 2_000, seed ^ 0x72, 0.99);
    let mut winputs = BoundInputs::new(
        1,
        0.0,
        n,
        sgd_model.observable_norm_upper(),
        GNorm::NWGamma,
        var_est.ci_high,
        VarProvenance::EmpiricalUpper,
    );
    winputs.pi_v = Some(pi_v_upper);
    winputs.pi_sqrt_v = Some(pi_v_upper.sqrt());
    let radius = consts.radius;
    winputs.xi_sqrt_v = Some((1.0 + radius * radius / consts.sigma_tilde_sq).exp().sqrt());
    let dispersed = SgdMcModel {
        model: &sgd_model,
        direction: vec![1.0, 0.0],
        burn_in: 0,
        disperse_radius: Some(radius),
    };
    let wsamples = harness::mc_sn(&dispersed, n, 100_000, seed ^ 0x73);
    for factor in [0.5, 1.0, 2.0, 4.0] {
        let t = factor * var_est.point.sqrt();
        let report = bounds::nonstationary_tail_w(t, &winputs, &wrate).unwrap();
        let est = harness::tail_from_samples(&wsamples, t, 0.999, seed ^ 0x73);
        if report.clamped.unwrap() < est.ci_low {
            violations += 1;
        }
        cells += 1;
    }

    finish(
        7,
        "non-stationary envelopes",
        start,
        300.0,
        violations == 0,
        format!("{cells} checks, {violations} violations"),
    )
}

fn hoeffding_upper(mean: f64, range: f64, n: u32, level: f64) -> f64 {
    mean + range * ((1.0 / (1.0 - level)).ln() / (2.0 * f64::from(n))).sqrt()
}

/// Criterion 8: coupling contraction, exact on the finite product chain and
/// statistical for the SGD and pCN synchronous couplings.
pub fn criterion_8(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut violations = 0u32;
    let mut cells = 0u32;
    let level = 0.99;

    // exact finite-chain contraction for p ∈ {1, 2q}, q = 2
    let chain = FiniteChain::two_state_reference();
    let d = 30.0;
    let drift = chains::certify_drift(&chain, Some(0.8), d).unwrap();
    let coupling = chains::certify_coupling(&chain, 1, d).unwrap();
    let cert = coupling.to_certificate(&drift, d, 1, chain.pi_v());
    cert.validate().unwrap();
    let wrate = contraction_rate(&cert, chain.pi_v()).unwrap();
    let q = 2u32;
    for p in [1u32, 2 * q] {
        let beta = f64::from(p) / f64::from(4 * q);
        for x in 0..chain.states() {
            for xp in 0..chain.states() {
                if x == xp {
                    continue;
                }
                let vbar = 0.5 * (chain.v[x] + chain.v[xp]);
                for n in cert.m..=30u32 {
                    let lhs = coupling.coupled_expectation(&chain, x, xp, n, beta);
                    let rhs = cert.kappa_k.powf(f64::from(cert.m) / 2.0)
                        * wrate.c_k.powf(f64::from(p) / f64::from(2 * q))
                        * vbar.powf(beta)
                        * (f64::from(n) * f64::from(p) / f64::from(2 * q) * wrate.log_varrho).exp();
                    if !(lhs <= rhs) {
                        violations += 1;
                    }
                    cells += 1;
                }
            }
        }
    }

    // SGD synchronous coupling: one-step and m-step at 99%
    let sgd_model = reference_sgd();
    let consts = sgd::sgd_constants(&sgd_model).unwrap();
    let reps = 40_000u32;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x81);
    {
        let theta0 = vec![1.5, -0.8];
        let theta0p = vec![-0.4, 0.9];
        let d0: f64 = theta0.iter().zip(&theta0p).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut acc = 0.0;
        for _ in 0..reps {
            let mut a = theta0.clone();
            let mut b = theta0p.clone();
            sgd::sgd_coupled_step(&sgd_model, &mut a, &mut b, &mut rng);
            acc += a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        let upper = hoeffding_upper(acc / f64::from(reps), d0, reps, level);
        if !(upper <= (1.0 - consts.eps) * d0) {
            violations += 1;
        }
        cells += 1;
    }
    {
        // pair at distance 2R inside the coupling set
        let r = consts.radius;
        let x0 = vec![r, 0.0];
        let x0p = vec![-r, 0.0];
        let mut acc = 0.0;
        for _ in 0..reps {
            let mut a = x0.clone();
            let mut b = x0p.clone();
            for _ in 0..consts.m {
                sgd::sgd_coupled_step(&sgd_model, &mut a, &mut b, &mut rng);
            }
            let dist_sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            acc += dist_sq.min(1.0);
        }
        let upper = hoeffding_upper(acc / f64::from(reps), 1.0, reps, level);
        if !(upper <= 1.0 - consts.eps) {
            violations += 1;
        }
        cells += 1;
    }

    // pCN synchronous coupling with certified constants
    let pcn_model = reference_pcn();
    let pconsts = chains::pcn::pcn_constants(&pcn_model, 100_000, seed ^ 0x82).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x83);
    let cost = |x: &[f64], y: &[f64]| {
        let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        (d / pconsts.eps_h).min(1.0)
    };
    {
        // one-step expansion: K c ≤ κ_K c with κ_K = 1, close pair
        let x0 = vec![0.05, 0.02];
        let x0p = vec![0.05 + 0.6 * pcn_model.rho_h * pconsts.eps_h, 0.02];
        let c0 = cost(&x0, &x0p);
        let mut acc = 0.0;
        for _ in 0..reps {
            let mut a = x0.clone();
            let mut b = x0p.clone();
            chains::pcn::pcn_coupled_step(&pcn_model, &mut a, &mut b, &mut rng);
            acc += cost(&a, &b);
        }
        let upper = hoeffding_upper(acc / f64::from(reps), 1.0, reps, level);
        if !(upper <= c0) {
            violations += 1;
        }
        cells += 1;
    }
    {
        // m-step contraction on a distant pair inside C̄ = B(0,R)²
        let r = pconsts.radius.min(3.0); // stay in a region the sampler visits
        let x0 = vec![r, 0.0];
        let x0p = vec![-r, 0.0];
        let mut acc = 0.0;
        for _ in 0..reps {
            let mut a = x0.clone();
            let mut b = x0p.clone();
            for _ in 0..pconsts.m {
                chains::pcn::pcn_coupled_step(&pcn_model, &mut a, &mut b, &mut rng);
            }
            acc += cost(&a, &b);
        }
        let upper = hoeffding_upper(acc / f64::from(reps), 1.0, reps, level);
        if !(upper <= 1.0 - pconsts.eps) {
            violations += 1;
        }
        cells += 1;
    }

    finish(
        8,
        "coupling contraction",
        start,
        180.0,
        violations == 0,
        format!("{cells} checks, {violations} violations"),
    )
}

/// Criterion 9: combinatorial coefficients and their closed-form bounds.
pub fn criterion_9(_seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut ok = true;
    let mut checks = 0;
    for q in 2..=6u32 {
        for u in 1..=q - 1 {
            let comps = combinatorics::compositions(u, q).unwrap();
            let count = combinatorics::composition_count(u, q).unwrap();
            if num_bigint::BigUint::from(comps.len()) != count {
                ok = false;
            }
            for gamma in [0.0, 0.5, 1.0, 2.0] {
                let b = combinatorics::b_coefficient(gamma, u, q).unwrap();
                let upper = combinatorics::b_coefficient_upper(gamma, u, q).unwrap();
                if upper.log_abs < b.log_abs - 1e-12 {
                    ok = false;
                }
                checks += 1;
            }
            for gamma_int in [0u32, 1, 2] {
                let exact: f64 = combinatorics::b_coefficient_exact(gamma_int, u, q)
                    .unwrap()
                    .to_str_radix(10)
                    .parse()
                    .unwrap();
                let log = combinatorics::b_coefficient(f64::from(gamma_int), u, q).unwrap().to_f64();
                if (exact - log).abs() > 1e-12 * exact {
                    ok = false;
                }
                checks += 1;
            }
            let exact0: f64 = combinatorics::b_coefficient_exact(0, u, q)
                .unwrap()
                .to_str_radix(10)
                .parse()
                .unwrap();
            if combinatorics::b0_scaling_bound(u, q).unwrap().to_f64() < exact0 {
                ok = false;
            }
            checks += 1;
        }
    }
    finish(9, "combinatorial coefficients", start, 5.0, ok, format!("{checks} checks"))
}

/// Criterion 10: the SGD application end to end.
pub fn criterion_10(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut failures = Vec::new();
    let model = reference_sgd();
    let consts = sgd::sgd_constants(&model).unwrap();

    // closed-form reference values evaluated independently
    let e = std::f64::consts::E;
    let sigma_tilde_expected = 2.0 * (e + 1.0) / (e - 1.0);
    let bias_expected = 0.1 * 1.0 / (1.0 * (1.0 - 0.1 * 3.0));
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    if rel(consts.sigma_tilde_sq, sigma_tilde_expected) > 1e-6 {
        failures.push(format!("σ̃² {} vs {}", consts.sigma_tilde_sq, sigma_tilde_expected));
    }
    if rel(consts.kappa_f, 0.75) > 1e-6 {
        failures.push(format!("κ_f {}", consts.kappa_f));
    }
    if rel(consts.bias_bound, bias_expected) > 1e-6 {
        failures.push(format!("bias {} vs {}", consts.bias_bound, bias_expected));
    }

    // empirical drift at 50 probe points, 99% bootstrap upper endpoint
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xD1);
    let probe_reps = 4_000u32;
    let mut drift_failures = 0;
    for i in 0..50u32 {
        let radius = consts.radius * 1.2 * f64::from(i) / 49.0;
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let theta0 = vec![radius * angle.cos(), radius * angle.sin()];
        let vs: Vec<f64> = (0..probe_reps)
            .map(|_| {
                let mut theta = theta0.clone();
                sgd::sgd_step(&model, &mut theta, &mut rng);
                model.v(&theta)
            })
            .collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let (_, hi) = harness::bootstrap_percentile(&vs, mean, 2000, 0.99, seed ^ u64::from(i));
        if !(hi <= consts.lambda * model.v(&theta0) + consts.b) {
            drift_failures += 1;
        }
    }
    if drift_failures > 0 {
        failures.push(format!("{drift_failures}/50 drift probes failed"));
    }

    // one-step coupling contraction at 99%
    let reps = 10_000u32;
    let theta0 = vec![2.0, 1.0];
    let theta0p = vec![-1.0, 0.5];
    let d0: f64 = theta0.iter().zip(&theta0p).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut acc = 0.0;
    for _ in 0..reps {
        let mut a = theta0.clone();
        let mut b = theta0p.clone();
        sgd::sgd_coupled_step(&model, &mut a, &mut b, &mut rng);
        acc += a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    let upper = hoeffding_upper(acc / f64::from(reps), d0, reps, 0.99);
    if !(upper <= (1.0 - consts.eps) * d0) {
        failures.push("one-step coupling contraction failed".into());
    }

    let passed = failures.is_empty();
    finish(
        10,
        "SGD application end-to-end",
        start,
        120.0,
        passed,
        if passed {
            format!(
                "σ̃²={:.4}, κ_f={}, bias={:.4}, 50 drift probes, coupling ok",
                consts.sigma_tilde_sq, consts.kappa_f, consts.bias_bound
            )
        } else {
            failures.join("; ")
        },
    )
}

/// The reference sweep behind the determinism criterion and
/// `mcbound sweep --acceptance`.
pub fn acceptance_sweep_config(seed: u64) -> SweepConfig {
    SweepConfig {
        model: ModelSpec::FiniteReference,
        theorems: vec![TheoremId::T1, TheoremId::T3, TheoremId::T2, TheoremId::T4, TheoremId::T5],
        q: vec![1, 2],
        gamma: vec![0.0],
        n: vec![10, 40],
        t: vec![2.0, 6.0],
        replicas: 2_000,
        seed,
        ci_level: 0.999,
    }
}

/// Criterion 11: bit-identical sweep output across runs and worker counts,
/// with no violated cells.
pub fn criterion_11(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let config = acceptance_sweep_config(seed);
    let first = harness::run_sweep(&config, 1).unwrap();
    let second = harness::run_sweep(&config, 1).unwrap();
    let parallel = harness::run_sweep(&config, 4).unwrap();
    let identical = first == second && first == parallel;
    let no_violations = !first.contains(",violated,");
    finish(
        11,
        "sweep determinism",
        start,
        300.0,
        identical && no_violations,
        format!(
            "{} rows, identical={identical}, violations={}",
            first.trim_end().lines().count() - 1,
            !no_violations
        ),
    )
}

/// Run every criterion in order.
pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    vec![
        criterion_1(seed),
        criterion_2(seed),
        criterion_3(seed),
        criterion_4(seed),
        criterion_5(seed),
        criterion_6(seed),
        criterion_7(seed),
        criterion_8(seed),
        criterion_9(seed),
        criterion_10(seed),
        criterion_11(seed),
    ]
}

/// Convenience entry point used by the CLI: prints one line per criterion
/// and reports overall success.
pub fn run_and_print(seed: u64, out: &mut dyn std::io::Write) -> Result<bool> {
    let results = run_all(seed);
    let mut all = true;
    for r in &results {
        writeln!(out, "{}", r.line()).map_err(|e| crate::Error::Internal(e.to_string()))?;
        all &= r.passed;
    }
    Ok(all)
}
