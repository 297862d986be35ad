use std::fmt::Write as _;

use log::{debug, info, warn};
use rayon::prelude::*;

use super::agent::{finish_step, plan_step, AgentState, EncodePlan, StepContext};
use super::ledger::{account_bits, BitLedger};
use super::scheme::{Scheme, TriggerRule};
use super::server::{server_step, ServerState};
use super::ModelState;
use crate::baselines::LaqState;
use crate::error::{Error, Result};
use crate::theory::{probe_frozen_state, TheoryProbe};
use crate::trigger::{compute_b, ThresholdCoefficient};
use crate::vector::{dot, norm, norm_sq, sub};
use crate::workload::{local_gradient, local_loss, LossConfig, Shard};

/// A run aborts once the loss gap exceeds this multiple of the initial gap.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct RunSetup {
    pub shards: Vec<Shard>,
    pub loss: LossConfig,
    pub scheme: Scheme,
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once `f(x) - f* <= target_gap`; an infinite target never stops early.
    pub target_gap: f64,
    pub seed: u64,
    pub fstar: f64,
    /// Run a frozen-state Monte-Carlo probe every this many iterations.
    pub probe_every: Option<usize>,
    pub probe_samples: usize,
    /// Keep `x(t)` for every iteration.
    pub record_iterates: bool,
}

impl RunSetup {
    pub fn new(shards: Vec<Shard>, loss: LossConfig, scheme: Scheme, gamma: f64, fstar: f64) -> Self {
        Self {
            shards,
            loss,
            scheme,
            gamma,
            max_iters: 1000,
            target_gap: 1e-5,
            seed: 0,
            fstar,
            probe_every: None,
            probe_samples: 10_000,
            record_iterates: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.shards.is_empty() || self.shards.len() != self.loss.agents {
            return Err(Error::InvalidArgument(format!(
                "{} shards for {} agents",
                self.shards.len(),
                self.loss.agents
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be > 0, got {}", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if self.target_gap.is_nan() || !self.fstar.is_finite() {
            return Err(Error::InvalidArgument("target gap and f* must be numbers".into()));
        }
        if self.probe_every == Some(0) || self.probe_samples == 0 {
            return Err(Error::InvalidArgument("probe interval and sample count must be >= 1".into()));
        }
        Ok(())
    }
}

/// State after iteration `t`; `loss_gap` is measured at `x(t+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub loss_gap: f64,
    pub cumulative_bits: u64,
    pub cumulative_channel_uses: u64,
    pub transmissions: usize,
    /// `NaN` when the aggregate gradient vanished.
    pub b_t: f64,
    pub max_alpha: f64,
    /// Largest trigger coefficient.
    pub c_t: f64,
    pub agent_grad_norms_sq: Vec<f64>,
    pub global_grad_norm_sq: f64,
    /// `<g, g_tilde>` for the realized reconstruction.
    pub inner_product: f64,
    /// `||g - g_tilde||`.
    pub delta_norm: f64,
    /// Largest `||e_k|| / ||g_k||` among transmitting predictor agents.
    pub max_contraction_ratio: f64,
    pub contraction_fallbacks: usize,
    pub max_skip: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub agents: usize,
    pub dim: usize,
    pub fstar: f64,
    /// `f(x(1)) - f*`.
    pub initial_gap: f64,
    pub records: Vec<IterationRecord>,
    pub ledger: BitLedger,
    pub probes: Vec<TheoryProbe>,
    /// First iteration whose gap reached the target.
    pub converged_at: Option<usize>,
    /// Agent/server comparisons performed (all matched, or the run would have failed).
    pub sync_checks: u64,
    pub final_x: Vec<f64>,
    /// `x(1), x(2), ...` when requested.
    pub iterates: Vec<Vec<f64>>,
}

impl RunHistory {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn transmissions(&self) -> u64 {
        self.ledger.transmissions
    }

    /// Residual transmissions as a percentage of `K * T`.
    pub fn transmission_frequency(&self) -> f64 {
        let slots = (self.agents * self.iterations()) as f64;
        if slots == 0.0 {
            return 0.0;
        }
        100.0 * self.ledger.transmissions as f64 / slots
    }

    pub fn total_bits(&self) -> u64 {
        self.ledger.total_bits
    }

    pub fn channel_uses(&self) -> u64 {
        self.ledger.channel_uses
    }

    /// Gap at `x(1), x(2), ..., x(T+1)`.
    pub fn gap_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_gap)
            .chain(self.records.iter().map(|r| r.loss_gap))
            .collect()
    }

    pub const CSV_HEADER: &'static str =
        "t,loss_gap,cumulative_bits,cumulative_channel_uses,transmissions_this_iter,b_t,max_alpha_t";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{},{},{},{:e},{:e}",
                r.t, r.loss_gap, r.cumulative_bits, r.cumulative_channel_uses, r.transmissions, r.b_t, r.max_alpha
            );
        }
        out
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn global_loss_par(x: &[f64], shards: &[Shard], loss: &LossConfig) -> Result<f64> {
    let parts: Vec<f64> = shards.par_iter().map(|s| local_loss(x, s, loss)).collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

fn global_gradient_par(x: &[f64], shards: &[Shard], loss: &LossConfig) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = shards.par_iter().map(|s| local_gradient(x, s, loss)).collect::<Result<_>>()?;
    let mut total = vec![0.0; x.len()];
    for g in &parts {
        for (t, gi) in total.iter_mut().zip(g) {
            *t += gi;
        }
    }
    Ok(total)
}

fn summarize_plans(plans: &[EncodePlan]) -> Result<(Vec<f64>, f64, f64, f64)> {
    let dim = plans[0].gradient.len();
    let mut g = vec![0.0; dim];
    for p in plans {
        for (gi, v) in g.iter_mut().zip(&p.gradient) {
            *gi += v;
        }
    }
    let thresholds: Vec<f64> = plans.iter().map(|p| p.decision.threshold).collect();
    let b_t = match compute_b(&thresholds, norm(&g)) {
        ThresholdCoefficient::Value { b, .. } => b,
        ThresholdCoefficient::Converged => f64::NAN,
    };
    let max_alpha = plans.iter().map(EncodePlan::alpha).try_fold(1.0f64, |m, a| a.map(|a| m.max(a)))?;
    let c_t = plans.iter().map(|p| p.trigger_coefficient).fold(0.0, f64::max);
    Ok((g, b_t, max_alpha, c_t))
}

/// Runs the full protocol from `x(1) = 0`.
pub fn run_training(setup: &RunSetup) -> Result<RunHistory> {
    setup.validate()?;
    let scheme = &setup.scheme;
    let agents_n = setup.shards.len();
    let dim = setup.shards[0].dim();
    let mut agents: Vec<AgentState> = setup
        .shards
        .iter()
        .map(|s| AgentState::new(s.clone(), scheme, setup.seed))
        .collect();
    let mut server = ServerState::new(agents_n, scheme, ModelState::zeros(dim));
    let mut laq = match &scheme.trigger {
        TriggerRule::Laq(p) => Some(LaqState::new(*p)),
        _ => None,
    };

    let initial_gap = global_loss_par(&server.model.x, &setup.shards, &setup.loss)? - setup.fstar;
    let limit = DIVERGENCE_FACTOR * initial_gap.abs().max(f64::MIN_POSITIVE);
    let mut history = RunHistory {
        agents: agents_n,
        dim,
        fstar: setup.fstar,
        initial_gap,
        records: Vec::new(),
        ledger: BitLedger::new(),
        probes: Vec::new(),
        converged_at: None,
        sync_checks: 0,
        final_x: Vec::new(),
        iterates: Vec::new(),
    };

    for t in 1..=setup.max_iters {
        let x = server.model.x.clone();
        if setup.record_iterates {
            history.iterates.push(x.clone());
        }
        let ctx = StepContext {
            t,
            laq_model_term: laq.as_ref().map_or(0.0, |l| l.model_term(setup.gamma, agents_n)),
        };
        let plans: Vec<EncodePlan> = agents
            .par_iter()
            .map(|a| plan_step(a, &x, scheme, &setup.loss, &ctx))
            .collect::<Result<_>>()?;
        let (g, b_t, max_alpha, c_t) = summarize_plans(&plans)?;

        if setup.probe_every.is_some_and(|every| t % every == 0) {
            history
                .probes
                .push(probe_frozen_state(&plans, scheme, setup.seed, setup.probe_samples)?);
        }

        let mut max_contraction_ratio: f64 = 0.0;
        let mut contraction_fallbacks = 0;
        for p in &plans {
            contraction_fallbacks += p.contraction_fallback as usize;
            if p.transmit() && p.coefficients.is_some() && p.g_norm > 0.0 {
                let ratio = p.e_norm() / p.g_norm;
                if ratio > 1.0 {
                    return Err(Error::ContractionViolated {
                        e_norm: p.e_norm(),
                        g_norm: p.g_norm,
                    });
                }
                max_contraction_ratio = max_contraction_ratio.max(ratio);
            }
        }
        let agent_grad_norms_sq: Vec<f64> = plans.iter().map(|p| p.g_norm * p.g_norm).collect();

        let outputs: Vec<_> = agents
            .par_iter_mut()
            .zip(plans)
            .map(|(a, p)| finish_step(a, p, scheme))
            .collect::<Result<_>>()?;

        let mut reconstructions = Vec::with_capacity(agents_n);
        let mut transmissions = 0;
        for (k, out) in outputs.iter().enumerate() {
            let recon = server_step(&mut server, k, &out.packet, scheme)?;
            let memories_match = server.mirrors[k].len() == agents[k].memory.len()
                && server.mirrors[k]
                    .iter()
                    .zip(agents[k].memory.iter())
                    .all(|(a, b)| same_bits(a, b));
            if !same_bits(&recon, &out.reconstruction) || !memories_match {
                return Err(Error::Desync { agent: k, t });
            }
            history.sync_checks += 1;
            account_bits(&mut history.ledger, &out.packet);
            transmissions += out.packet.transmitted() as usize;
            reconstructions.push(recon);
        }

        let mut g_tilde = vec![0.0; dim];
        for r in &reconstructions {
            for (s, v) in g_tilde.iter_mut().zip(r) {
                *s += v;
            }
        }
        server.apply(&reconstructions, setup.gamma)?;
        if let Some(l) = laq.as_mut() {
            l.record_update(norm_sq(&sub(&server.model.x, &x)));
        }

        let loss_gap = global_loss_par(&server.model.x, &setup.shards, &setup.loss)? - setup.fstar;
        history.records.push(IterationRecord {
            t,
            loss_gap,
            cumulative_bits: history.ledger.total_bits,
            cumulative_channel_uses: history.ledger.channel_uses,
            transmissions,
            b_t,
            max_alpha,
            c_t,
            agent_grad_norms_sq,
            global_grad_norm_sq: norm_sq(&g),
            inner_product: dot(&g, &g_tilde),
            delta_norm: norm(&sub(&g, &g_tilde)),
            max_contraction_ratio,
            contraction_fallbacks,
            max_skip: agents.iter().map(|a| a.skip_count).max().unwrap_or(0),
        });
        debug!("t={t} gap={loss_gap:e} tx={transmissions} bits={}", history.ledger.total_bits);

        if !loss_gap.is_finite() || loss_gap > limit {
            return Err(Error::Diverged { t, gap: loss_gap, limit });
        }
        if setup.target_gap.is_finite() && loss_gap <= setup.target_gap {
            history.converged_at = Some(t);
            break;
        }
    }
    if history.converged_at.is_none() && setup.target_gap.is_finite() {
        info!("target gap {:e} not reached in {} iterations", setup.target_gap, setup.max_iters);
    }
    history.final_x = server.model.x;
    Ok(history)
}

/// Result of the exact gradient-descent reference used to obtain `f*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactReference {
    pub fstar: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// The tolerance was reached before the cap.
    pub converged: bool,
    pub x: Vec<f64>,
}

/// Uncompressed gradient descent from zero until `||grad f|| <= tol`.
pub fn reference_optimum(
    shards: &[Shard],
    loss: &LossConfig,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ExactReference> {
    let dim = shards
        .first()
        .ok_or_else(|| Error::InvalidArgument("no shards".into()))?
        .dim();
    let mut x = vec![0.0; dim];
    let mut iterations = 0;
    let mut g = global_gradient_par(&x, shards, loss)?;
    let mut best = (global_loss_par(&x, shards, loss)?, x.clone());
    while norm(&g) > tol && iterations < max_iters {
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= gamma * gi;
        }
        iterations += 1;
        g = global_gradient_par(&x, shards, loss)?;
        if iterations % 64 == 0 || norm(&g) <= tol {
            let f = global_loss_par(&x, shards, loss)?;
            if !f.is_finite() {
                return Err(Error::Diverged { t: iterations, gap: f, limit: f64::MAX });
            }
            if f <= best.0 {
                best = (f, x.clone());
            }
        }
    }
    let f = global_loss_par(&x, shards, loss)?;
    if f <= best.0 {
        best = (f, x);
    }
    let grad_norm = norm(&g);
    let converged = grad_norm <= tol;
    if !converged {
        warn!("reference descent stopped at the cap with gradient norm {grad_norm:e}");
    }
    Ok(ExactReference {
        fstar: best.0,
        iterations,
        grad_norm,
        converged,
        x: best.1,
    })
}
