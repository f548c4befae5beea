//! Seeded Monte Carlo with rigorous confidence intervals, bound-vs-truth
//! verdicts, and a deterministic sweep engine. Replicas run in fixed-size
//! blocks with per-block derived streams and are merged in block order, so
//! identical (config, seed) pairs produce bit-identical output at any worker
//! count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bounds::{self, BoundInputs, BoundReport, GNorm, TheoremId, VarProvenance};
use crate::chains::{self, sgd, FiniteChain};
use crate::cumulants;
use crate::vgeom::{geometric_rate, DriftCertificate};
use crate::wasserstein::contraction_rate;
use crate::{Error, Result};

const BLOCK: u32 = 4096;

/// A Monte Carlo estimate with its confidence interval and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub replicas: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Exact (Clopper–Pearson) binomial confidence interval for k successes out
/// of n, via beta quantiles.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(k <= n && n > 0, "clopper_pearson: k ≤ n, n > 0");
    assert!(level > 0.0 && level < 1.0);
    let alpha = 1.0 - level;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Percentile bootstrap interval for a statistic of an f64 sample.
pub fn bootstrap_percentile<F>(data: &[f64], statistic: F, resamples: u32, level: f64, seed: u64) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    assert!(!data.is_empty());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0xB007);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let resample: Vec<f64> =
                (0..data.len()).map(|_| data[rng.random_range(0..data.len())]).collect();
            statistic(&resample)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - level;
    let lo_idx = ((alpha / 2.0) * f64::from(resamples)) as usize;
    let hi_idx = (((1.0 - alpha / 2.0) * f64::from(resamples)) as usize).min(stats.len() - 1);
    (stats[lo_idx], stats[hi_idx])
}

/// Anything the harness can simulate: an initial sampler, a transition, and
/// a centered observable.
pub trait McModel: Sync {
    type State: Clone + Send;
    fn init(&self, rng: &mut ChaCha12Rng) -> Self::State;
    fn step(&self, state: &mut Self::State, rng: &mut ChaCha12Rng);
    fn observe(&self, state: &Self::State) -> f64;
}

/// Finite chain with a configurable initial law (stationary by default).
pub struct FiniteModel<'a> {
    pub chain: &'a FiniteChain,
    pub initial: Option<Vec<f64>>,
    gbar: Vec<f64>,
}

impl<'a> FiniteModel<'a> {
    pub fn stationary(chain: &'a FiniteChain) -> Self {
        FiniteModel { chain, initial: None, gbar: chain.g_bar() }
    }

    pub fn from_state(chain: &'a FiniteChain, state: usize) -> Self {
        let mut law = vec![0.0; chain.states()];
        law[state] = 1.0;
        FiniteModel { chain, initial: Some(law), gbar: chain.g_bar() }
    }

    fn sample_law(law: &[f64], rng: &mut ChaCha12Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in law.iter().enumerate() {
            acc += p;
            if u <= acc {
                return i;
            }
        }
        law.len() - 1
    }
}

impl McModel for FiniteModel<'_> {
    type State = usize;

    fn init(&self, rng: &mut ChaCha12Rng) -> usize {
        match &self.initial {
            Some(law) => Self::sample_law(law, rng),
            None => Self::sample_law(&self.chain.pi, rng),
        }
    }

    fn step(&self, state: &mut usize, rng: &mut ChaCha12Rng) {
        *state = Self::sample_law(&self.chain.transition[*state], rng);
    }

    fn observe(&self, state: &usize) -> f64 {
        self.gbar[*state]
    }
}

/// SGD chain observed through the bounded odd observable. `burn_in` steps
/// approximate the stationary start; a dispersed start takes a uniform point
/// in a ball around θ*.
pub struct SgdMcModel<'a> {
    pub model: &'a sgd::SgdModel,
    pub direction: Vec<f64>,
    pub burn_in: u32,
    pub disperse_radius: Option<f64>,
}

impl McModel for SgdMcModel<'_> {
    type State = Vec<f64>;

    fn init(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut theta = match self.disperse_radius {
            None => self.model.theta_star.clone(),
            Some(r) => {
                // uniform direction, uniform radius (dispersed, not uniform
                // in volume — only used as a spread-out initial law)
                let dir: Vec<f64> = (0..self.model.dim)
                    .map(|_| {
                        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
                    })
                    .collect();
                let norm: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = r * rng.random::<f64>() / norm.max(1e-300);
                self.model
                    .theta_star
                    .iter()
                    .zip(&dir)
                    .map(|(s, d)| s + scale * d)
                    .collect()
            }
        };
        for _ in 0..self.burn_in {
            sgd::sgd_step(self.model, &mut theta, rng);
        }
        theta
    }

    fn step(&self, state: &mut Vec<f64>, rng: &mut ChaCha12Rng) {
        sgd::sgd_step(self.model, state, rng);
    }

    fn observe(&self, state: &Vec<f64>) -> f64 {
        sgd::sgd_observable(self.model, &self.direction, state)
    }
}

/// Deterministic S_n samples: `replicas` independent runs of n observation
/// steps, blocked and merged in block order.
pub fn mc_sn<M: McModel>(model: &M, n: u32, replicas: u32, seed: u64) -> Vec<f64> {
    let blocks: Vec<(u64, u32)> = (0..replicas.div_ceil(BLOCK))
        .map(|b| (u64::from(b), BLOCK.min(replicas - b * BLOCK)))
        .collect();
    let chunks: Vec<Vec<f64>> = rayon::iter::ParallelIterator::collect(
        rayon::iter::ParallelIterator::map(
            rayon::iter::IntoParallelIterator::into_par_iter(blocks),
            |(block_idx, count)| {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(block_idx + 1);
                (0..count)
                    .map(|_| {
                        let mut state = model.init(&mut rng);
                        let mut acc = model.observe(&state);
                        for _ in 1..n {
                            model.step(&mut state, &mut rng);
                            acc += model.observe(&state);
                        }
                        acc
                    })
                    .collect()
            },
        ),
    );
    chunks.into_iter().flatten().collect()
}

/// Exceedance estimate P(|S_n| ≥ t) with an exact binomial interval.
pub fn mc_tail<M: McModel>(model: &M, n: u32, t: f64, replicas: u32, seed: u64, level: f64) -> Result<McEstimate> {
    if replicas < 100 {
        return Err(Error::InvalidArgument("need at least 100 replicas".into()));
    }
    let samples = mc_sn(model, n, replicas, seed);
    Ok(tail_from_samples(&samples, t, level, seed))
}

/// Tail estimate from precomputed S_n samples.
pub fn tail_from_samples(samples: &[f64], t: f64, level: f64, seed: u64) -> McEstimate {
    let k = samples.iter().filter(|s| s.abs() >= t).count() as u64;
    let n = samples.len() as u64;
    let (lo, hi) = clopper_pearson(k, n, level);
    McEstimate {
        point: k as f64 / n as f64,
        ci_low: lo,
        ci_high: hi,
        level,
        replicas: n as u32,
        seed,
        config_hash: None,
    }
}

/// Moment estimate E|S_n|^p with a percentile-bootstrap interval.
pub fn mc_moment<M: McModel>(model: &M, n: u32, power: u32, replicas: u32, seed: u64, level: f64) -> Result<McEstimate> {
    if replicas < 100 {
        return Err(Error::InvalidArgument("need at least 100 replicas".into()));
    }
    let samples = mc_sn(model, n, replicas, seed);
    Ok(moment_from_samples(&samples, power, level, seed))
}

pub fn moment_from_samples(samples: &[f64], power: u32, level: f64, seed: u64) -> McEstimate {
    let powered: Vec<f64> = samples.iter().map(|s| s.abs().powi(power as i32)).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let point = mean(&powered);
    let (lo, hi) = if power == 0 {
        (1.0, 1.0)
    } else {
        bootstrap_percentile(&powered, mean, 2000, level, seed)
    };
    McEstimate {
        point,
        ci_low: lo.min(point),
        ci_high: hi.max(point),
        level,
        replicas: samples.len() as u32,
        seed,
        config_hash: None,
    }
}

/// Batch-means upper confidence endpoint for Var(S_n): one long trajectory
/// split into batches of length n after a burn-in, bootstrap on the batch
/// sums' variance.
pub fn batch_means_var_upper<M: McModel>(
    model: &M,
    n: u32,
    batches: u32,
    burn_in: u32,
    seed: u64,
    level: f64,
) -> McEstimate {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut state = model.init(&mut rng);
    for _ in 0..burn_in {
        model.step(&mut state, &mut rng);
    }
    let mut sums = Vec::with_capacity(batches as usize);
    for _ in 0..batches {
        let mut acc = model.observe(&state);
        for _ in 1..n {
            model.step(&mut state, &mut rng);
            acc += model.observe(&state);
        }
        sums.push(acc);
        model.step(&mut state, &mut rng);
    }
    let var_stat = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let point = var_stat(&sums);
    let (lo, hi) = bootstrap_percentile(&sums, var_stat, 2000, level, seed);
    McEstimate {
        point,
        ci_low: lo.min(point),
        ci_high: hi.max(point),
        level,
        replicas: batches,
        seed,
        config_hash: None,
    }
}

/// Verdict of a bound-vs-truth comparison. A statistically certain failure
/// (the whole interval above the bound) is `Violated`; a Monte Carlo
/// estimate below the bound can only ever be `Inconclusive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Dominates,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VerdictStatus::Dominates => "dominates",
            VerdictStatus::Violated => "violated",
            VerdictStatus::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub bound_value: f64,
    pub status: VerdictStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<McEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
}

/// The truth side of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    Exact(f64),
    Mc(McEstimate),
}

/// Compare a report to evidence. `Exact` comparisons are strict floating
/// `≤`; config hashes must match when both sides carry one.
pub fn compare(report: &BoundReport, evidence: &Evidence) -> Result<Verdict> {
    let bound = report.clamped.unwrap_or(report.value);
    if let (Some(a), Evidence::Mc(est)) = (&report.config_hash, evidence) {
        if let Some(b) = &est.config_hash {
            if a != b {
                return Err(Error::ProvenanceMismatch(format!("bound {a} vs estimate {b}")));
            }
        }
    }
    Ok(match evidence {
        Evidence::Exact(v) => Verdict {
            bound_value: bound,
            status: if *v <= bound { VerdictStatus::Dominates } else { VerdictStatus::Violated },
            estimate: None,
            exact: Some(*v),
        },
        Evidence::Mc(est) => Verdict {
            bound_value: bound,
            status: if est.ci_low > bound { VerdictStatus::Violated } else { VerdictStatus::Inconclusive },
            estimate: Some(est.clone()),
            exact: None,
        },
    })
}

/// Short hex digest of a serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Model selector shared by the sweep engine and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Built-in two-state reference chain.
    FiniteReference,
    Finite { transition: Vec<Vec<f64>>, v: Vec<f64>, g: Vec<f64> },
    Sgd { mu: f64, l: f64, sigma2: f64, gamma_step: f64, dim: usize, theta_star: Vec<f64> },
    Pcn(crate::chains::pcn::PcnModel),
    /// Bound-only evaluation from a raw certificate.
    Certificate { certificate: DriftCertificate, norm_g: f64 },
}

impl ModelSpec {
    pub fn id(&self) -> String {
        match self {
            ModelSpec::FiniteReference => "finite_reference".into(),
            ModelSpec::Finite { .. } => "finite".into(),
            ModelSpec::Sgd { .. } => "sgd".into(),
            ModelSpec::Pcn(_) => "pcn".into(),
            ModelSpec::Certificate { .. } => "certificate".into(),
        }
    }
}

/// Declarative sweep: the cross product of the declared grids, one report
/// and verdict per cell, streamed to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelSpec,
    pub theorems: Vec<TheoremId>,
    pub q: Vec<u32>,
    #[serde(default = "default_gamma_grid")]
    pub gamma: Vec<f64>,
    pub n: Vec<u32>,
    #[serde(default)]
    pub t: Vec<f64>,
    pub replicas: u32,
    pub seed: u64,
    #[serde(default = "default_level")]
    pub ci_level: f64,
}

fn default_gamma_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_level() -> f64 {
    0.999
}

pub const CSV_HEADER: &str = "config_hash,theorem_id,model_id,n,q,gamma,t,bound_log,bound_clamped,est_point,ci_low,ci_high,status,seed";

/// One finished sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub theorem_id: String,
    pub model_id: String,
    pub n: u32,
    pub q: u32,
    pub gamma: f64,
    pub t: f64,
    pub bound_log: Option<f64>,
    pub bound_clamped: Option<f64>,
    pub est_point: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub status: String,
    pub seed: u64,
}

impl SweepRow {
    fn csv(&self) -> String {
        fn opt(x: Option<f64>) -> String {
            x.map(|v| format!("{v:e}")).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config_hash,
            self.theorem_id,
            self.model_id,
            self.n,
            self.q,
            self.gamma,
            self.t,
            opt(self.bound_log),
            opt(self.bound_clamped),
            opt(self.est_point),
            opt(self.ci_low),
            opt(self.ci_high),
            self.status,
            self.seed
        )
    }
}

fn finite_cell(
    chain: &FiniteChain,
    theorem: TheoremId,
    q: u32,
    gamma: f64,
    n: u32,
    t: f64,
    replicas: u32,
    seed: u64,
    level: f64,
) -> Result<(BoundReport, Verdict)> {
    let cert = chains::certify(chain, &chains::CertifyOptions::default())?;
    let rate = geometric_rate(&cert)?;
    let pi_v = chain.pi_v();
    let var = cumulants::exact_sn_variance(chain, n)?;
    let worst = (0..chain.states())
        .max_by(|&a, &b| chain.v[a].partial_cmp(&chain.v[b]).unwrap())
        .unwrap();

    let mut inputs = BoundInputs::new(q, gamma, n, 0.0, GNorm::VPow2qInv, var, VarProvenance::Exact);
    inputs.pi_v = Some(pi_v);
    inputs.xi_v = Some(chain.v[worst]);
    inputs.pi_sqrt_v = Some(chain.pi_sqrt_v());
    inputs.xi_sqrt_v = Some(chain.v[worst].sqrt());

    match theorem {
        TheoremId::T1 | TheoremId::T2 => {
            inputs.norm_g = chain.norm_g_valpha(1.0 / f64::from(2 * q));
            inputs.norm_kind = GNorm::VPow2qInv;
            let (report, exact) = if theorem == TheoremId::T1 {
                (bounds::rosenthal_v(&inputs, &rate)?, cumulants::exact_sn_moments(chain, n, 2 * q as usize)?)
            } else {
                (
                    bounds::rosenthal_v_shift(&inputs, &rate)?,
                    cumulants::exact_sn_moments_from(chain, Some(&{
                        let mut law = vec![0.0; chain.states()];
                        law[worst] = 1.0;
                        law
                    }), n, 2 * q as usize)?,
                )
            };
            let verdict = compare(&report, &Evidence::Exact(exact[2 * q as usize]))?;
            Ok((report, verdict))
        }
        TheoremId::T3 | TheoremId::T4 => {
            inputs.norm_g = chain.norm_g_wgamma(gamma);
            inputs.norm_kind = GNorm::WGamma;
            let (report, exact) = if theorem == TheoremId::T3 {
                (bounds::rosenthal_logv(&inputs, &rate)?, cumulants::exact_sn_moments(chain, n, 2 * q as usize)?)
            } else {
                (
                    bounds::rosenthal_logv_shift(&inputs, &rate)?,
                    cumulants::exact_sn_moments_from(chain, Some(&{
                        let mut law = vec![0.0; chain.states()];
                        law[worst] = 1.0;
                        law
                    }), n, 2 * q as usize)?,
                )
            };
            let verdict = compare(&report, &Evidence::Exact(exact[2 * q as usize]))?;
            Ok((report, verdict))
        }
        TheoremId::T5 => {
            inputs.norm_g = chain.norm_g_wgamma(gamma);
            inputs.norm_kind = GNorm::WGamma;
            let bconst = bounds::bernstein_constant_v(&inputs, &rate)?;
            let report = bounds::bernstein_tail(TheoremId::T5, t, &inputs, bconst)?;
            let model = FiniteModel::stationary(chain);
            let est = mc_tail(&model, n, t, replicas, seed, level)?;
            let verdict = compare(&report, &Evidence::Mc(est))?;
            Ok((report, verdict))
        }
        TheoremId::NonstatV => {
            inputs.norm_g = chain.norm_g_wgamma(gamma);
            inputs.norm_kind = GNorm::WGamma;
            let report = bounds::nonstationary_tail_v(t, &inputs, &rate)?;
            let model = FiniteModel::from_state(chain, worst);
            let est = mc_tail(&model, n, t, replicas, seed, level)?;
            let verdict = compare(&report, &Evidence::Mc(est))?;
            Ok((report, verdict))
        }
        other => Err(Error::InvalidArgument(format!("{other} not available on a finite-chain sweep cell"))),
    }
}

fn sgd_cell(
    model: &sgd::SgdModel,
    theorem: TheoremId,
    q: u32,
    gamma: f64,
    n: u32,
    t: f64,
    replicas: u32,
    seed: u64,
    level: f64,
) -> Result<(BoundReport, Verdict)> {
    let consts = sgd::sgd_constants(model)?;
    let cert = &consts.certificate;
    let pi_v_upper = cert.b / (1.0 - cert.lambda);
    let wrate = contraction_rate(cert, pi_v_upper)?;
    let direction: Vec<f64> = {
        let mut d = vec![0.0; model.dim];
        d[0] = 1.0;
        d
    };
    let burn = 2_000;
    let mc = SgdMcModel { model, direction, burn_in: burn, disperse_radius: None };
    let var_est = batch_means_var_upper(&mc, n, 400, burn, seed ^ 0x5EED, level);
    let var_upper = var_est.ci_high;

    let mut inputs = BoundInputs::new(
        q,
        gamma,
        n,
        model.observable_norm_upper(),
        GNorm::NWGamma,
        var_upper,
        VarProvenance::EmpiricalUpper,
    );
    inputs.pi_v = Some(pi_v_upper);
    inputs.pi_sqrt_v = Some(pi_v_upper.sqrt());
    inputs.xi_sqrt_v = Some(pi_v_upper.sqrt());

    match theorem {
        TheoremId::T6 => {
            inputs.norm_kind = GNorm::NQuarterQV;
            let report = bounds::rosenthal_w_family(bounds::WMode::T6, &inputs, &wrate)?;
            let est = mc_moment(&mc, n, 2 * q, replicas, seed, level)?;
            let verdict = compare(&report, &Evidence::Mc(est))?;
            Ok((report, verdict))
        }
        TheoremId::T10 => {
            let jconst = bounds::bernstein_constant_w(&inputs, &wrate)?;
            let report = bounds::bernstein_tail(TheoremId::T10, t, &inputs, jconst)?;
            let est = mc_tail(&mc, n, t, replicas, seed, level)?;
            let verdict = compare(&report, &Evidence::Mc(est))?;
            Ok((report, verdict))
        }
        TheoremId::T11 => {
            // dispersed start inside the coupling set
            let radius = consts.radius;
            inputs.xi_sqrt_v = Some((1.0 + radius * radius / consts.sigma_tilde_sq).exp().sqrt());
            let report = bounds::nonstationary_tail_w(t, &inputs, &wrate)?;
            let dispersed = SgdMcModel {
                model,
                direction: {
                    let mut d = vec![0.0; model.dim];
                    d[0] = 1.0;
                    d
                },
                burn_in: 0,
                disperse_radius: Some(radius),
            };
            let est = mc_tail(&dispersed, n, t, replicas, seed, level)?;
            let verdict = compare(&report, &Evidence::Mc(est))?;
            Ok((report, verdict))
        }
        other => Err(Error::InvalidArgument(format!("{other} not available on an SGD sweep cell"))),
    }
}

fn evaluate_cell(config: &SweepConfig, theorem: TheoremId, q: u32, gamma: f64, n: u32, t: f64, cell_seed: u64) -> Result<(BoundReport, Verdict)> {
    match &config.model {
        ModelSpec::FiniteReference => {
            let chain = FiniteChain::two_state_reference();
            finite_cell(&chain, theorem, q, gamma, n, t, config.replicas, cell_seed, config.ci_level)
        }
        ModelSpec::Finite { transition, v, g } => {
            let chain = FiniteChain::new(transition.clone(), v.clone(), g.clone())?;
            finite_cell(&chain, theorem, q, gamma, n, t, config.replicas, cell_seed, config.ci_level)
        }
        ModelSpec::Sgd { mu, l, sigma2, gamma_step, dim, theta_star } => {
            let model = sgd::SgdModel::new(*mu, *l, *sigma2, *gamma_step, *dim, theta_star.clone())?;
            sgd_cell(&model, theorem, q, gamma, n, t, config.replicas, cell_seed, config.ci_level)
        }
        ModelSpec::Pcn(_) => Err(Error::InvalidArgument(
            "pCN sweep cells are not defined; use the coupling verification commands".into(),
        )),
        ModelSpec::Certificate { certificate, norm_g } => {
            let rate = geometric_rate(certificate)?;
            let (pi_v, _) = certificate.pi_v_or_fallback();
            let var = crate::vgeom::variance_upper(n, &rate, pi_v, *norm_g);
            let mut inputs =
                BoundInputs::new(q, gamma, n, *norm_g, GNorm::VPow2qInv, var, VarProvenance::AnalyticUpper);
            inputs.pi_v = Some(pi_v);
            let report = match theorem {
                TheoremId::T1 => bounds::rosenthal_v(&inputs, &rate)?,
                TheoremId::T3 => {
                    inputs.norm_kind = GNorm::WGamma;
                    bounds::rosenthal_logv(&inputs, &rate)?
                }
                TheoremId::T5 => {
                    inputs.norm_kind = GNorm::WGamma;
                    let b = bounds::bernstein_constant_v(&inputs, &rate)?;
                    bounds::bernstein_tail(TheoremId::T5, t, &inputs, b)?
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "{other} not available on a certificate-only sweep cell"
                    )))
                }
            };
            let verdict = Verdict {
                bound_value: report.clamped.unwrap_or(report.value),
                status: VerdictStatus::Inconclusive,
                estimate: None,
                exact: None,
            };
            Ok((report, verdict))
        }
    }
}

/// Run the full sweep on `workers` threads and render the CSV. Identical
/// (config, seed) inputs produce identical bytes at any worker count.
pub fn run_sweep(config: &SweepConfig, workers: usize) -> Result<String> {
    let hash = config_hash(config);
    let mut cells = Vec::new();
    for &theorem in &config.theorems {
        for &q in &config.q {
            for &gamma in &config.gamma {
                for &n in &config.n {
                    let ts: &[f64] = if config.t.is_empty() { &[0.0] } else { &config.t };
                    for &t in ts {
                        cells.push((theorem, q, gamma, n, t));
                    }
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        rayon::iter::ParallelIterator::collect(rayon::iter::ParallelIterator::map(
            rayon::iter::IntoParallelIterator::into_par_iter(cells.into_iter().enumerate().collect::<Vec<_>>()),
            |(idx, (theorem, q, gamma, n, t))| {
                let cell_seed = config.seed ^ (idx as u64).wrapping_mul(0x9E3779B97F4A7C15);
                match evaluate_cell(config, theorem, q, gamma, n, t, cell_seed) {
                    Ok((report, verdict)) => SweepRow {
                        config_hash: hash.clone(),
                        theorem_id: theorem.to_string(),
                        model_id: config.model.id(),
                        n,
                        q,
                        gamma,
                        t,
                        bound_log: Some(report.log_value.log_abs),
                        bound_clamped: Some(report.clamped.unwrap_or(report.value)),
                        est_point: verdict.estimate.as_ref().map(|e| e.point).or(verdict.exact),
                        ci_low: verdict.estimate.as_ref().map(|e| e.ci_low).or(verdict.exact),
                        ci_high: verdict.estimate.as_ref().map(|e| e.ci_high).or(verdict.exact),
                        status: verdict.status.to_string(),
                        seed: cell_seed,
                    },
                    Err(err) => SweepRow {
                        config_hash: hash.clone(),
                        theorem_id: theorem.to_string(),
                        model_id: config.model.id(),
                        n,
                        q,
                        gamma,
                        t,
                        bound_log: None,
                        bound_clamped: None,
                        est_point: None,
                        ci_low: None,
                        ci_high: None,
                        status: format!("error: {}", err.to_string().replace(',', ";")),
                        seed: cell_seed,
                    },
                }
            },
        ))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv());
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// i.i.d. standard Gaussian "chain" for calibration.
    struct GaussianIid;

    impl McModel for GaussianIid {
        type State = f64;
        fn init(&self, rng: &mut ChaCha12Rng) -> f64 {
            rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
        }
        fn step(&self, state: &mut f64, rng: &mut ChaCha12Rng) {
            *state = rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng);
        }
        fn observe(&self, state: &f64) -> f64 {
            *state
        }
    }

    #[test]
    fn clopper_pearson_edges_and_sanity() {
        let (lo, hi) = clopper_pearson(0, 100, 0.99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = clopper_pearson(100, 100, 0.99);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.9);
        let (lo, hi) = clopper_pearson(50, 100, 0.95);
        assert!(lo < 0.5 && 0.5 < hi);
    }

    #[test]
    fn clopper_pearson_coverage_self_test() {
        // CP must cover the true p at ≥ the nominal rate (it is conservative)
        let p = 0.3;
        let level = 0.9;
        let trials = 1000;
        let mut covered = 0;
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..trials {
            let n = 200u64;
            let k = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
            let (lo, hi) = clopper_pearson(k, n, level);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        assert!(
            f64::from(covered) / f64::from(trials as u32) >= level,
            "coverage {covered}/{trials}"
        );
    }

    #[test]
    fn mc_tail_edges_and_gaussian_calibration() {
        let model = GaussianIid;
        // t = 0: estimate exactly 1
        let est = mc_tail(&model, 1, 0.0, 1000, 5, 0.99).unwrap();
        assert_eq!(est.point, 1.0);
        assert_eq!(est.ci_high, 1.0);

        // n=1 tail matches the error-function oracle within the CI
        let t = 1.3;
        let est = mc_tail(&model, 1, t, 200_000, 5, 0.999).unwrap();
        let exact = 1.0 - statrs::function::erf::erf(t / std::f64::consts::SQRT_2);
        assert!(est.ci_low <= exact && exact <= est.ci_high, "{est:?} vs {exact}");

        // replicas ×4 shrinks the CI width by ≈ 2 (within 20%)
        let narrow = mc_tail(&model, 1, t, 80_000, 5, 0.99).unwrap();
        let wide = mc_tail(&model, 1, t, 20_000, 5, 0.99).unwrap();
        let ratio = (wide.ci_high - wide.ci_low) / (narrow.ci_high - narrow.ci_low);
        assert!((ratio - 2.0).abs() < 0.4, "width ratio {ratio}");

        assert!(mc_tail(&model, 1, t, 50, 5, 0.99).is_err());
    }

    #[test]
    fn mc_moment_edges() {
        let model = GaussianIid;
        let est = mc_moment(&model, 3, 0, 500, 9, 0.95).unwrap();
        assert_eq!(est.point, 1.0);

        // symmetric odd power: CI contains 0... the absolute moment is used
        // for tails, so check the raw mean of S directly instead
        let samples = mc_sn(&model, 4, 50_000, 9);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let (lo, hi) = bootstrap_percentile(&samples, |xs| xs.iter().sum::<f64>() / xs.len() as f64, 2000, 0.99, 9);
        assert!(lo <= 0.0 && 0.0 <= hi, "mean {mean} CI [{lo},{hi}]");
    }

    #[test]
    fn mc_moment_covers_exact_dp_value() {
        // 95% bootstrap CIs over random finite chains must cover the exact
        // moment at roughly the nominal rate; allow generous slack
        let mut misses = 0;
        for seed in 0..50u64 {
            let chain = FiniteChain::two_state_reference();
            let model = FiniteModel::stationary(&chain);
            let n = 3 + (seed % 8) as u32;
            let est = mc_moment(&model, n, 2, 4000, seed, 0.95).unwrap();
            let exact = cumulants::exact_sn_moments(&chain, n, 2).unwrap()[2];
            if !(est.ci_low <= exact && exact <= est.ci_high) {
                misses += 1;
            }
        }
        assert!(misses <= 8, "{misses} misses out of 50 at 95%");
    }

    #[test]
    fn mc_sn_is_deterministic_and_block_invariant() {
        let chain = FiniteChain::two_state_reference();
        let model = FiniteModel::stationary(&chain);
        let a = mc_sn(&model, 10, 10_000, 42);
        let b = mc_sn(&model, 10, 10_000, 42);
        assert_eq!(a, b);
        let c = mc_sn(&model, 10, 10_000, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn compare_semantics() {
        let rate = geometric_rate(&DriftCertificate::new(0.5, 1.0, 9.0, 1, 0.5)).unwrap();
        let mut inputs = BoundInputs::new(1, 0.0, 10, 1.0, GNorm::VPow2qInv, 12.0, VarProvenance::Exact);
        inputs.pi_v = Some(9.0);
        let report = bounds::rosenthal_v(&inputs, &rate).unwrap(); // bound = 12.0

        let v = compare(&report, &Evidence::Exact(10.0)).unwrap();
        assert_eq!(v.status, VerdictStatus::Dominates);
        let v = compare(&report, &Evidence::Exact(12.5)).unwrap();
        assert_eq!(v.status, VerdictStatus::Violated);

        let mk = |lo: f64, hi: f64| McEstimate {
            point: (lo + hi) / 2.0,
            ci_low: lo,
            ci_high: hi,
            level: 0.999,
            replicas: 1000,
            seed: 0,
            config_hash: None,
        };
        // statistically certain violation: whole interval above the bound
        let v = compare(&report, &Evidence::Mc(mk(12.2, 12.4))).unwrap();
        assert_eq!(v.status, VerdictStatus::Violated);
        // interval straddling or below: inconclusive, never "dominates"
        let v = compare(&report, &Evidence::Mc(mk(11.0, 12.5))).unwrap();
        assert_eq!(v.status, VerdictStatus::Inconclusive);
        let v = compare(&report, &Evidence::Mc(mk(1.0, 2.0))).unwrap();
        assert_eq!(v.status, VerdictStatus::Inconclusive);
    }

    #[test]
    fn compare_enforces_config_hash() {
        let rate = geometric_rate(&DriftCertificate::new(0.5, 1.0, 9.0, 1, 0.5)).unwrap();
        let mut inputs = BoundInputs::new(1, 0.0, 10, 1.0, GNorm::VPow2qInv, 12.0, VarProvenance::Exact);
        inputs.pi_v = Some(9.0);
        let mut report = bounds::rosenthal_v(&inputs, &rate).unwrap();
        report.config_hash = Some("aaaa".into());
        let est = McEstimate {
            point: 1.0,
            ci_low: 0.5,
            ci_high: 1.5,
            level: 0.99,
            replicas: 100,
            seed: 0,
            config_hash: Some("bbbb".into()),
        };
        assert!(compare(&report, &Evidence::Mc(est)).is_err());
    }

    #[test]
    fn sweep_row_counts_and_determinism() {
        let config = SweepConfig {
            model: ModelSpec::Certificate {
                certificate: DriftCertificate::new(0.5, 1.0, 9.0, 1, 0.5),
                norm_g: 1.0,
            },
            theorems: vec![TheoremId::T1, TheoremId::T3, TheoremId::T5],
            q: vec![1, 2, 3],
            gamma: vec![0.0],
            n: vec![10],
            t: vec![2.0],
            replicas: 200,
            seed: 7,
            ci_level: 0.99,
        };
        let csv = run_sweep(&config, 1).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3 * 3);
        // bit-identical across runs and worker counts
        assert_eq!(csv, run_sweep(&config, 1).unwrap());
        assert_eq!(csv, run_sweep(&config, 4).unwrap());
    }

    #[test]
    fn sweep_empty_grid_gives_header_only() {
        let config = SweepConfig {
            model: ModelSpec::FiniteReference,
            theorems: vec![],
            q: vec![],
            gamma: vec![0.0],
            n: vec![],
            t: vec![],
            replicas: 100,
            seed: 1,
            ci_level: 0.99,
        };
        let csv = run_sweep(&config, 2).unwrap();
        assert_eq!(csv.trim_end(), CSV_HEADER);
    }

    #[test]
    fn sweep_records_per_cell_errors_and_continues() {
        let config = SweepConfig {
            model: ModelSpec::Certificate {
                certificate: DriftCertificate::new(0.5, 1.0, 9.0, 1, 0.5),
                norm_g: 1.0,
            },
            // T6 is not available on certificate-only cells
            theorems: vec![TheoremId::T6, TheoremId::T1],
            q: vec![2],
            gamma: vec![0.0],
            n: vec![10],
            t: vec![],
            replicas: 100,
            seed: 1,
            ci_level: 0.99,
        };
        let csv = run_sweep(&config, 1).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("error:"));
        assert!(lines[2].contains("inconclusive"));
    }

    #[test]
    fn finite_tail_cell_end_to_end() {
        let chain = FiniteChain::two_state_reference();
        let (report, verdict) =
            finite_cell(&chain, TheoremId::T5, 1, 0.0, 40, 3.0, 2000, 11, 0.999).unwrap();
        assert!(report.clamped.is_some());
        assert_ne!(verdict.status, VerdictStatus::Violated);
    }

    #[test]
    fn batch_means_variance_is_positive_and_deterministic() {
        let chain = FiniteChain::two_state_reference();
        let model = FiniteModel::stationary(&chain);
        let a = batch_means_var_upper(&model, 20, 200, 100, 3, 0.99);
        let b = batch_means_var_upper(&model, 20, 200, 100, 3, 0.99);
        assert_eq!(a, b);
        assert!(a.point > 0.0);
        assert!(a.ci_high >= a.point && a.ci_low <= a.point);
        // the exact value should be in the right ballpark of the estimate
        let exact = cumulants::exact_sn_variance(&chain, 20).unwrap();
        assert!(a.point > 0.3 * exact && a.point < 3.0 * exact, "{} vs {exact}", a.point);
    }
}
