//! Run-time checks of the convergence analysis: compressor constants,
//! first- and second-moment bounds at a frozen state, the gradient
//! dissimilarity envelope, and the linear-rate certificate.

use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::codec::quantize_levels;
use crate::error::{Error, Result};
use crate::protocol::{CompressorKind, EncodePlan, RunHistory, Scheme};
use crate::rng::{Purpose, StreamKey};
use crate::trigger::{compute_b, ThresholdCoefficient};
use crate::vector::{dot, norm, norm_sq};
use crate::workload::{LossConfig, Shard};

/// Monte-Carlo slack, in standard errors.
pub const SE_SLACK: f64 = 4.0;

/// `1 + (alpha - 1) ||e||^2 / ||g||^2`.
pub fn alpha_k(e_norm: f64, g_norm: f64, alpha_measured: f64) -> Result<f64> {
    if !(g_norm > 0.0) || !(e_norm >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need ||g|| > 0 and ||e|| >= 0, got {g_norm}, {e_norm}"
        )));
    }
    if !(alpha_measured >= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {alpha_measured}")));
    }
    if e_norm > g_norm {
        return Err(Error::ContractionViolated { e_norm, g_norm });
    }
    let ratio = e_norm / g_norm;
    Ok(1.0 + (alpha_measured - 1.0) * ratio * ratio)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped(String),
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckStatus::Pass => f.write_str("pass"),
            CheckStatus::Fail => f.write_str("fail"),
            CheckStatus::Skipped(why) => write!(f, "skipped ({why})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub status: CheckStatus,
    pub value: f64,
    /// Bounds already widened by the Monte-Carlo slack.
    pub lower: f64,
    pub upper: f64,
}

impl MomentCheck {
    fn skipped(why: &str) -> Self {
        Self {
            status: CheckStatus::Skipped(why.to_string()),
            value: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
        }
    }

    fn judge(value: f64, lower: f64, upper: f64) -> Self {
        let status = if value >= lower && value <= upper {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self { status, value, lower, upper }
    }

    /// Distance to the nearer bound; negative on failure.
    pub fn margin(&self) -> f64 {
        (self.value - self.lower).min(self.upper - self.value)
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

fn first_moment_verdict(g_norm_sq: f64, inner: f64, se: f64, b: Option<f64>) -> MomentCheck {
    let Some(b) = b else {
        return MomentCheck::skipped("aggregate gradient is zero");
    };
    if b >= 1.0 {
        return MomentCheck::skipped("b >= 1, threshold assumption violated");
    }
    MomentCheck::judge(
        inner,
        (1.0 - b) * g_norm_sq - SE_SLACK * se,
        (1.0 + b) * g_norm_sq + SE_SLACK * se,
    )
}

/// `(1 - b) ||g||^2 <= <g, E g_tilde> <= (1 + b) ||g||^2`, with the
/// expectation replaced by the sample mean.
pub fn check_first_moment(g: &[f64], samples: &[Vec<f64>], b: f64) -> Result<MomentCheck> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut acc = Welford::default();
    for s in samples {
        crate::vector::check_dim(g.len(), s.len())?;
        acc.push(dot(g, s));
    }
    Ok(first_moment_verdict(norm_sq(g), acc.mean, acc.standard_error(), Some(b)))
}

/// Streaming mean and squared deviations, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.n == 0.0 {
            return other;
        }
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Self {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }

    fn sample_variance(&self) -> f64 {
        if self.n > 1.0 {
            self.m2 / (self.n - 1.0)
        } else {
            0.0
        }
    }

    fn standard_error(&self) -> f64 {
        if self.n > 1.0 {
            (self.sample_variance() / self.n).sqrt()
        } else {
            0.0
        }
    }
}

/// Frozen-state measurements at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryProbe {
    pub t: usize,
    /// `None` when the aggregate gradient vanished.
    pub b_t: Option<f64>,
    pub alpha_k: Vec<f64>,
    pub alpha_bar: f64,
    pub c_t: f64,
    /// `max(alpha_bar - 1, c_t^2)`.
    pub p_t: f64,
    /// Sample mean of `<g, g_tilde>`.
    pub inner_product: f64,
    pub inner_se: f64,
    pub g_norm_sq: f64,
    pub agent_grad_norms_sq: Vec<f64>,
    /// `||g - mean(g_tilde)||`.
    pub delta_norm: f64,
    /// Trace of the covariance of `g_tilde`; `None` if nothing was random.
    pub var_estimate: Option<f64>,
    pub var_se: f64,
    pub samples: usize,
    /// The compressor is unbiased, so the moment bounds apply.
    pub unbiased: bool,
}

const PROBE_CHUNK: usize = 128;

struct Pass1 {
    level_sums: Vec<Vec<i64>>,
    inner: Welford,
}

/// Resamples only the quantizer randomness of the given plans.
///
/// Replica `r` of agent `k` draws from the stream `(seed, Probe, k, t, r)`, so
/// the result does not depend on thread count.
pub fn probe_frozen_state(plans: &[EncodePlan], scheme: &Scheme, seed: u64, samples: usize) -> Result<TheoryProbe> {
    let first = plans
        .first()
        .ok_or_else(|| Error::InvalidArgument("no agent plans to probe".into()))?;
    let t = first.t;
    let dim = first.gradient.len();
    let mut g = vec![0.0; dim];
    for p in plans {
        for (gi, v) in g.iter_mut().zip(&p.gradient) {
            *gi += v;
        }
    }
    let g_norm_sq = norm_sq(&g);
    let thresholds: Vec<f64> = plans.iter().map(|p| p.decision.threshold).collect();
    let b_t = match compute_b(&thresholds, norm(&g)) {
        ThresholdCoefficient::Value { b, .. } => Some(b),
        ThresholdCoefficient::Converged => None,
    };
    let alpha_k = plans.iter().map(EncodePlan::alpha).collect::<Result<Vec<_>>>()?;
    let alpha_bar = alpha_k.iter().copied().fold(1.0, f64::max);
    let c_t = plans.iter().map(|p| p.trigger_coefficient).fold(0.0, f64::max);
    let unbiased = matches!(scheme.compressor, CompressorKind::Quantizer(_) | CompressorKind::Identity);

    // Deterministic part of g_tilde, and the agents whose residual is random.
    let mut base = vec![0.0; dim];
    let mut stochastic: Vec<&EncodePlan> = Vec::new();
    for p in plans {
        let random = matches!(scheme.compressor, CompressorKind::Quantizer(_)) && p.transmit();
        let fixed = if random {
            stochastic.push(p);
            p.prediction.clone()
        } else {
            let mut unused = StreamKey::new(seed, Purpose::Probe, p.agent, t).stream();
            crate::protocol::compress_plan(p, scheme, &mut unused)?.1
        };
        for (b, v) in base.iter_mut().zip(&fixed) {
            *b += v;
        }
    }
    let base_inner = dot(&g, &base);

    let mut probe = TheoryProbe {
        t,
        b_t,
        p_t: (alpha_bar - 1.0).max(c_t * c_t),
        alpha_k,
        alpha_bar,
        c_t,
        inner_product: base_inner,
        inner_se: 0.0,
        g_norm_sq,
        agent_grad_norms_sq: plans.iter().map(|p| p.g_norm * p.g_norm).collect(),
        delta_norm: norm(&crate::vector::sub(&g, &base)),
        var_estimate: None,
        var_se: 0.0,
        samples: 1,
        unbiased,
    };
    if stochastic.is_empty() {
        return Ok(probe);
    }

    let draw = |p: &EncodePlan, r: usize| -> Result<Vec<i32>> {
        let delta = p.interval.expect("transmitting quantizer plans carry an interval").delta;
        let mut rng = StreamKey::new(seed, Purpose::Probe, p.agent, t)
            .with_replica(r as u64)
            .stream();
        quantize_levels(&p.residual, delta, &mut rng)
    };
    let chunks: Vec<std::ops::Range<usize>> = (0..samples)
        .step_by(PROBE_CHUNK)
        .map(|s| s..(s + PROBE_CHUNK).min(samples))
        .collect();

    let partials: Vec<Pass1> = chunks
        .par_iter()
        .map(|range| -> Result<Pass1> {
            let mut acc = Pass1 {
                level_sums: vec![vec![0; dim]; stochastic.len()],
                inner: Welford::default(),
            };
            for r in range.clone() {
                let mut inner = base_inner;
                for (j, p) in stochastic.iter().enumerate() {
                    let levels = draw(p, r)?;
                    let delta = p.interval.map_or(0.0, |iv| iv.delta);
                    let mut gl = 0.0;
                    for ((s, &l), gi) in acc.level_sums[j].iter_mut().zip(&levels).zip(&g) {
                        *s += l as i64;
                        gl += gi * l as f64;
                    }
                    inner += delta * gl;
                }
                acc.inner.push(inner);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut level_sums = vec![vec![0i64; dim]; stochastic.len()];
    let mut inner = Welford::default();
    for part in partials {
        for (tot, s) in level_sums.iter_mut().zip(&part.level_sums) {
            for (a, b) in tot.iter_mut().zip(s) {
                *a += b;
            }
        }
        inner = inner.merge(part.inner);
    }
    let n = samples as f64;
    let mean_levels: Vec<Vec<f64>> = level_sums
        .iter()
        .map(|s| s.iter().map(|&v| v as f64 / n).collect())
        .collect();

    let dev_partials: Vec<Vec<Welford>> = chunks
        .par_iter()
        .map(|range| -> Result<Vec<Welford>> {
            let mut acc = vec![Welford::default(); stochastic.len()];
            for r in range.clone() {
                for (j, p) in stochastic.iter().enumerate() {
                    let levels = draw(p, r)?;
                    let delta = p.interval.map_or(0.0, |iv| iv.delta);
                    let dev: f64 = levels
                        .iter()
                        .zip(&mean_levels[j])
                        .map(|(&l, m)| (l as f64 - m).powi(2))
                        .sum();
                    acc[j].push(delta * delta * dev);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut devs = vec![Welford::default(); stochastic.len()];
    for part in dev_partials {
        for (d, p) in devs.iter_mut().zip(part) {
            *d = d.merge(p);
        }
    }

    let mut mean_g_tilde = base;
    for (p, m) in stochastic.iter().zip(&mean_levels) {
        let delta = p.interval.map_or(0.0, |iv| iv.delta);
        for (o, l) in mean_g_tilde.iter_mut().zip(m) {
            *o += delta * l;
        }
    }
    let bessel = if samples > 1 { n / (n - 1.0) } else { 1.0 };
    probe.inner_product = inner.mean;
    probe.inner_se = inner.standard_error();
    probe.delta_norm = norm(&crate::vector::sub(&g, &mean_g_tilde));
    probe.var_estimate = Some(devs.iter().map(|d| d.mean * bessel).sum());
    probe.var_se = devs.iter().map(|d| d.standard_error().powi(2)).sum::<f64>().sqrt() * bessel;
    probe.samples = samples;
    Ok(probe)
}

pub fn first_moment_check(probe: &TheoryProbe) -> MomentCheck {
    if !probe.unbiased {
        return MomentCheck::skipped("biased compressor");
    }
    first_moment_verdict(probe.g_norm_sq, probe.inner_product, probe.inner_se, probe.b_t)
}

/// Per-iteration gradient norms feeding the dissimilarity fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientNorms {
    pub agents_sq: Vec<f64>,
    pub global_sq: f64,
}

impl GradientNorms {
    pub fn mean_agent_sq(&self) -> f64 {
        self.agents_sq.iter().sum::<f64>() / self.agents_sq.len() as f64
    }
}

/// Envelope `(1/K) sum_k ||g_k||^2 <= G^2 + B^2 ||g||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityFit {
    pub g_sq: f64,
    pub b_sq: f64,
    /// Smallest `B^2` that works with `G = 0`, if any.
    pub b_sq_without_g: Option<f64>,
    /// `G^2 + B^2 ||g||^2 - mean` per fitted iteration.
    pub slack: Vec<f64>,
}

impl DissimilarityFit {
    pub fn covers(&self, n: &GradientNorms) -> bool {
        let mean = n.mean_agent_sq();
        mean <= self.g_sq + self.b_sq * n.global_sq + 1e-12 * mean.abs()
    }

    /// The `G = 0` alternative, when feasible.
    pub fn without_g(&self) -> Option<Self> {
        self.b_sq_without_g.map(|b_sq| Self {
            g_sq: 0.0,
            b_sq,
            b_sq_without_g: Some(b_sq),
            slack: Vec::new(),
        })
    }
}

/// Minimal `G^2` at `B^2 = 1`, and the minimal `B^2` at `G = 0`.
pub fn fit_dissimilarity(history: &[GradientNorms]) -> Result<DissimilarityFit> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("no iterations to fit".into()));
    }
    let g_sq = history
        .iter()
        .map(|n| n.mean_agent_sq() - n.global_sq)
        .fold(0.0, f64::max);
    let mut b_sq_without_g = Some(1.0f64);
    for n in history {
        let mean = n.mean_agent_sq();
        b_sq_without_g = match b_sq_without_g {
            Some(b) if n.global_sq > 0.0 => Some(b.max(mean / n.global_sq)),
            Some(b) if mean == 0.0 => Some(b),
            _ => None,
        };
    }
    let slack = history
        .iter()
        .map(|n| g_sq + n.global_sq - n.mean_agent_sq())
        .collect();
    Ok(DissimilarityFit {
        g_sq,
        b_sq: 1.0,
        b_sq_without_g,
        slack,
    })
}

pub fn gradient_norms(history: &RunHistory) -> Vec<GradientNorms> {
    history
        .records
        .iter()
        .map(|r| GradientNorms {
            agents_sq: r.agent_grad_norms_sq.clone(),
            global_sq: r.global_grad_norm_sq,
        })
        .collect()
}

/// `Var(g_tilde) <= K P (G^2 + B^2 ||g||^2)`.
pub fn check_variance(probe: &TheoryProbe, fit: &DissimilarityFit) -> MomentCheck {
    if !probe.unbiased {
        return MomentCheck::skipped("biased compressor");
    }
    let k = probe.agent_grad_norms_sq.len() as f64;
    let bound = k * probe.p_t * (fit.g_sq + fit.b_sq * probe.g_norm_sq);
    MomentCheck::judge(
        probe.var_estimate.unwrap_or(0.0),
        f64::NEG_INFINITY,
        bound + SE_SLACK * probe.var_se,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessEstimate {
    pub l_hat: f64,
    pub mu_hat: f64,
}

/// Global constants of `f = sum_k f_k`: the regularizer contributes `2 lambda`
/// per agent to both, and each logistic term at most `||u||^2 / 4` scaled by
/// `1/K` to the smoothness.
pub fn estimate_smoothness_convexity(shards: &[Shard], loss: &LossConfig) -> SmoothnessEstimate {
    let k = loss.agents as f64;
    let data: f64 = shards
        .iter()
        .flat_map(|s| s.samples())
        .map(|(u, _)| norm_sq(u))
        .sum();
    let mu_hat = 2.0 * loss.lambda * k;
    SmoothnessEstimate {
        l_hat: mu_hat + data / (4.0 * k),
        mu_hat,
    }
}

/// Worst-case constants observed over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConstants {
    pub b: f64,
    pub c: f64,
    pub alpha_bar: f64,
}

impl RunConstants {
    pub fn from_history(history: &RunHistory) -> Self {
        let mut out = Self {
            b: 0.0,
            c: 0.0,
            alpha_bar: 1.0,
        };
        for r in &history.records {
            if r.b_t.is_finite() {
                out.b = out.b.max(r.b_t);
            }
            out.c = out.c.max(r.c_t);
            out.alpha_bar = out.alpha_bar.max(r.max_alpha);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateParams {
    pub l_hat: f64,
    pub mu_hat: f64,
    pub gamma: f64,
    pub b: f64,
    pub c: f64,
    pub alpha_bar: f64,
    pub p: f64,
    pub agents: usize,
    pub g_sq: f64,
    pub b_sq: f64,
}

impl CertificateParams {
    pub fn new(
        smooth: SmoothnessEstimate,
        gamma: f64,
        constants: RunConstants,
        agents: usize,
        fit: &DissimilarityFit,
    ) -> Result<Self> {
        if !(smooth.mu_hat > 0.0) || !(smooth.l_hat >= smooth.mu_hat) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < mu <= L, got mu = {}, L = {}",
                smooth.mu_hat, smooth.l_hat
            )));
        }
        Ok(Self {
            l_hat: smooth.l_hat,
            mu_hat: smooth.mu_hat,
            gamma,
            b: constants.b,
            c: constants.c,
            alpha_bar: constants.alpha_bar,
            p: (constants.alpha_bar - 1.0).max(constants.c * constants.c).max(0.0),
            agents,
            g_sq: fit.g_sq,
            b_sq: fit.b_sq,
        })
    }

    /// Largest step size the convergence guarantee allows.
    pub fn step_size_limit(&self) -> f64 {
        if self.b >= 1.0 {
            return 0.0;
        }
        let k = self.agents as f64;
        (1.0 - self.b) / (self.l_hat * (k * self.b_sq * self.p + (1.0 + self.b).powi(2)))
    }

    pub fn step_condition_holds(&self) -> bool {
        self.gamma > 0.0 && self.gamma <= self.step_size_limit()
    }

    /// `gamma L K G^2 P / (2 mu (1 - b))`.
    pub fn floor(&self) -> f64 {
        self.gamma * self.l_hat * self.agents as f64 * self.g_sq * self.p / (2.0 * self.mu_hat * (1.0 - self.b))
    }

    pub fn rate(&self) -> f64 {
        1.0 - self.mu_hat * self.gamma * (1.0 - self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `bounds[i]` bounds the gap at iteration `i + 1`.
    pub bounds: Vec<f64>,
    /// The step-size condition holds, so the bound is guaranteed.
    pub applicable: bool,
}

impl Certificate {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,bound\n");
        for (i, b) in self.bounds.iter().enumerate() {
            let _ = writeln!(out, "{},{:e}", i + 1, b);
        }
        out
    }
}

/// `floor + rate^(t-1) (f1_gap - floor)` for `t = 1..=horizon`.
pub fn certificate_curve(params: &CertificateParams, f1_gap: f64, horizon: usize) -> Result<Certificate> {
    if !(params.mu_hat > 0.0) {
        return Err(Error::InvalidArgument("strong convexity estimate must be > 0".into()));
    }
    let shrink = params.mu_hat * params.gamma * (1.0 - params.b);
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "contraction factor mu gamma (1 - b) = {shrink} is outside (0, 1)"
        )));
    }
    let floor = params.floor();
    let rate = params.rate();
    let mut bounds = Vec::with_capacity(horizon);
    let mut pow = 1.0;
    for _ in 0..horizon {
        bounds.push(floor + pow * (f1_gap - floor));
        pow *= rate;
    }
    Ok(Certificate {
        bounds,
        applicable: params.step_condition_holds(),
    })
}

pub const PROBE_CSV_HEADER: &str = "t,b_t,alpha_bar_t,c_t,inner_product,inner_se,g_norm_sq,delta_norm,var_estimate,var_se,samples,first_moment,variance";

/// One line per probe; the variance verdict needs a fit over the whole run.
pub fn probes_to_csv(probes: &[TheoryProbe], fit: Option<&DissimilarityFit>) -> String {
    let mut out = String::from(PROBE_CSV_HEADER);
    out.push('\n');
    for p in probes {
        let variance = fit.map_or_else(|| "unchecked".to_string(), |f| check_variance(p, f).status.to_string());
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{}",
            p.t,
            p.b_t.unwrap_or(f64::NAN),
            p.alpha_bar,
            p.c_t,
            p.inner_product,
            p.inner_se,
            p.g_norm_sq,
            p.delta_norm,
            p.var_estimate.unwrap_or(0.0),
            p.var_se,
            p.samples,
            first_moment_check(p).status,
            variance
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_k_examples() {
        assert_eq!(alpha_k(0.0, 1.0, 3.0).unwrap(), 1.0);
        assert_eq!(alpha_k(2.0, 2.0, 3.0).unwrap(), 3.0);
        assert!((alpha_k(0.5, 1.0, 2.0).unwrap() - 1.25).abs() < 1e-15);
        assert!(alpha_k(1.1, 1.0, 2.0).is_err());
        assert!(alpha_k(0.1, 0.0, 2.0).is_err());
    }

    #[test]
    fn first_moment_of_exact_reconstruction() {
        let g = vec![1.0, -2.0];
        let c = check_first_moment(&g, std::slice::from_ref(&g), 0.0).unwrap();
        assert_eq!(c.status, CheckStatus::Pass);
        assert_eq!(c.value, 5.0);
        let skipped = check_first_moment(&g, std::slice::from_ref(&g), 1.0).unwrap();
        assert!(matches!(skipped.status, CheckStatus::Skipped(_)));
        let off = check_first_moment(&g, &[vec![0.0, 0.0]], 0.5).unwrap();
        assert_eq!(off.status, CheckStatus::Fail);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        let m = a.merge(b);
        assert!((m.mean - all.mean).abs() < 1e-12);
        assert!((m.m2 - all.m2).abs() < 1e-9);
    }

    #[test]
    fn dissimilarity_degenerate_cases() {
        let single = [GradientNorms {
            agents_sq: vec![4.0],
            global_sq: 4.0,
        }];
        let fit = fit_dissimilarity(&single).unwrap();
        assert_eq!(fit.g_sq, 0.0);
        assert_eq!(fit.b_sq_without_g, Some(1.0));

        let cancel = [GradientNorms {
            agents_sq: vec![2.0, 2.0],
            global_sq: 0.0,
        }];
        let fit = fit_dissimilarity(&cancel).unwrap();
        assert_eq!(fit.g_sq, 2.0);
        assert_eq!(fit.b_sq_without_g, None);
        assert!(fit.covers(&cancel[0]));
        assert!(fit_dissimilarity(&[]).is_err());
    }

    fn params(b: f64, p: f64) -> CertificateParams {
        CertificateParams {
            l_hat: 4.0,
            mu_hat: 0.5,
            gamma: 0.1,
            b,
            c: 0.0,
            alpha_bar: 1.0 + p,
            p,
            agents: 2,
            g_sq: 1.0,
            b_sq: 1.0,
        }
    }

    #[test]
    fn noiseless_certificate_is_linear() {
        let c = certificate_curve(&params(0.0, 0.0), 2.0, 5).unwrap();
        assert_eq!(c.bounds[0], 2.0);
        for (t, b) in c.bounds.iter().enumerate() {
            assert!((b - 2.0 * 0.95f64.powi(t as i32)).abs() < 1e-12);
        }
        assert!(c.applicable);
    }

    #[test]
    fn certificate_floor_and_condition() {
        let p = params(0.2, 0.5);
        let c = certificate_curve(&p, 3.0, 2000).unwrap();
        assert_eq!(c.bounds[0], 3.0);
        let floor = 0.1 * 4.0 * 2.0 * 0.5 / (2.0 * 0.5 * 0.8);
        assert!((c.bounds[1999] - floor).abs() < 1e-6);
        let limit = 0.8 / (4.0 * (2.0 * 0.5 + 1.44));
        assert!((p.step_size_limit() - limit).abs() < 1e-15);
        assert!(!c.applicable);
        let mut bad = params(0.0, 0.0);
        bad.gamma = 10.0;
        assert!(certificate_curve(&bad, 1.0, 3).is_err());
    }
}
