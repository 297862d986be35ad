use log::debug;
use rand::Rng;

use super::scheme::{CompressorKind, PredictorKind, Scheme, TriggerRule};
use super::{apply_levels, apply_raw, apply_sparse, CompressedResidual, ResidualPacket};
use crate::codec::{entropy_encode, quantize_levels, select_interval, top_l, IntervalChoice};
use crate::error::Result;
use crate::predictor::{build_matrix, ls_coefficients, predict, residual, PredictorCoefficients, PredictorMemory};
use crate::rng::{Purpose, StreamKey};
use crate::theory::alpha_k;
use crate::trigger::{threshold, TriggerDecision};
use crate::vector::{check_dim, check_finite, norm};
use crate::workload::{local_gradient, LossConfig, Shard};

#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    pub shard: Shard,
    pub memory: PredictorMemory,
    /// Run seed; the quantizer stream for iteration `t` is keyed by `(seed, id, t)`.
    pub seed: u64,
    /// Consecutive omissions.
    pub skip_count: usize,
}

impl AgentState {
    pub fn new(shard: Shard, scheme: &Scheme, seed: u64) -> Self {
        let dim = shard.dim();
        Self {
            id: shard.agent_id,
            memory: PredictorMemory::new(scheme.predictor.memory_len(), dim),
            shard,
            seed,
            skip_count: 0,
        }
    }

    pub fn quantizer_stream(&self, t: usize) -> rand_chacha::ChaCha8Rng {
        StreamKey::new(self.seed, Purpose::Quantize, self.id, t).stream()
    }
}

/// Per-iteration inputs shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub t: usize,
    /// Model-update part of the LAQ criterion; zero for other triggers.
    pub laq_model_term: f64,
}

/// Everything an agent decides before drawing quantizer randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodePlan {
    pub agent: usize,
    pub t: usize,
    pub gradient: Vec<f64>,
    pub g_norm: f64,
    /// Wire-rounded coefficients, for schemes that send them.
    pub coefficients: Option<PredictorCoefficients>,
    pub prediction: Vec<f64>,
    pub residual: Vec<f64>,
    /// `c_k(t)` for threshold triggers, zero otherwise.
    pub trigger_coefficient: f64,
    pub decision: TriggerDecision,
    pub interval: Option<IntervalChoice>,
    /// The rounded coefficients predicted worse than zero and were replaced.
    pub contraction_fallback: bool,
}

impl EncodePlan {
    pub fn transmit(&self) -> bool {
        self.decision.transmit
    }

    pub fn e_norm(&self) -> f64 {
        self.decision.residual_norm
    }

    /// `alpha_k(t)`: one for omitted or non-quantized residuals, else
    /// `1 + d delta^2 / (4 ||g_k||^2)`.
    pub fn alpha(&self) -> Result<f64> {
        let Some(iv) = self.interval.filter(|_| self.transmit()) else {
            return Ok(1.0);
        };
        let e_norm = self.e_norm();
        if e_norm == 0.0 || self.g_norm == 0.0 {
            return Ok(1.0);
        }
        let noise = self.residual.len() as f64 * iv.delta * iv.delta / 4.0;
        if self.coefficients.is_some() {
            alpha_k(e_norm, self.g_norm, 1.0 + noise / (e_norm * e_norm))
        } else {
            Ok(1.0 + noise / (self.g_norm * self.g_norm))
        }
    }

    /// Quantization noise bound `d delta^2 / 4` of a transmitted residual.
    pub fn noise_bound(&self) -> f64 {
        match self.interval {
            Some(iv) if self.transmit() => self.residual.len() as f64 * iv.delta * iv.delta / 4.0,
            _ => 0.0,
        }
    }
}

/// Gradient, prediction, residual, trigger decision and interval, all
/// deterministic in the agent state and `x`.
pub fn plan_step(
    agent: &AgentState,
    x: &[f64],
    scheme: &Scheme,
    loss: &LossConfig,
    ctx: &StepContext,
) -> Result<EncodePlan> {
    check_dim(agent.memory.dim(), x.len())?;
    let gradient = local_gradient(x, &agent.shard, loss)?;
    check_finite(&gradient, "local gradient")?;
    let dim = gradient.len();
    let g_norm = norm(&gradient);

    let mut contraction_fallback = false;
    let (coefficients, prediction) = match scheme.predictor {
        PredictorKind::LeastSquares { memory } => {
            let matrix = build_matrix(&agent.memory)?;
            let wire = ls_coefficients(&gradient, &matrix, memory)?.quantized(scheme.coeff_precision);
            let prediction = predict(&matrix, &wire)?;
            if norm(&residual(&gradient, &prediction)?) > g_norm {
                debug!("agent {} t={}: rounded coefficients lost contraction, sending zeros", agent.id, ctx.t);
                contraction_fallback = true;
                let zeros = PredictorCoefficients::zeros(memory).quantized(scheme.coeff_precision);
                (Some(zeros), vec![0.0; dim])
            } else {
                (Some(wire), prediction)
            }
        }
        PredictorKind::Previous => (None, agent.memory.get(0).map_or_else(|| vec![0.0; dim], <[f64]>::to_vec)),
        PredictorKind::Disabled => (None, vec![0.0; dim]),
    };
    let e = residual(&gradient, &prediction)?;
    let e_norm = norm(&e);

    let quantizer = scheme.quantizer().copied();
    let mut interval = None;
    let (decision, trigger_coefficient) = match &scheme.trigger {
        TriggerRule::Threshold(schedule) => {
            let th = threshold(agent.id, ctx.t, g_norm, schedule)?;
            (crate::trigger::decide_norm(e_norm, th), schedule.coefficient(agent.id, ctx.t))
        }
        TriggerRule::Always => (
            TriggerDecision {
                transmit: true,
                threshold: 0.0,
                residual_norm: e_norm,
            },
            0.0,
        ),
        TriggerRule::Laq(params) => {
            if let Some(q) = &quantizer {
                interval = Some(select_interval(&e, q)?);
            }
            let noise = interval.map_or(0.0, |iv| dim as f64 * iv.delta * iv.delta / 4.0);
            let rhs = ctx.laq_model_term + params.noise_weight * noise;
            let forced = agent.memory.is_empty() || agent.skip_count >= params.max_skip;
            (
                TriggerDecision {
                    transmit: forced || e_norm * e_norm >= rhs,
                    threshold: rhs.sqrt(),
                    residual_norm: e_norm,
                },
                0.0,
            )
        }
    };
    if decision.transmit && interval.is_none() {
        if let Some(q) = &quantizer {
            interval = Some(select_interval(&e, q)?);
        }
    }

    Ok(EncodePlan {
        agent: agent.id,
        t: ctx.t,
        gradient,
        g_norm,
        coefficients,
        prediction,
        residual: e,
        trigger_coefficient,
        decision,
        interval,
        contraction_fallback,
    })
}

/// Applies the compressor to a plan. Returns the wire residual (if any) and
/// the agent-side reconstruction `g_hat + C(e)`.
pub fn compress_plan(
    plan: &EncodePlan,
    scheme: &Scheme,
    rng: &mut impl Rng,
) -> Result<(Option<CompressedResidual>, Vec<f64>)> {
    if !plan.transmit() {
        return Ok((None, plan.prediction.clone()));
    }
    match scheme.compressor {
        CompressorKind::Quantizer(q) => {
            let iv = plan.interval.expect("transmitting quantizer plans carry an interval");
            let levels = quantize_levels(&plan.residual, iv.delta, rng)?;
            let payload = entropy_encode(&levels)?;
            let recon = apply_levels(&plan.prediction, iv.delta, &levels);
            let packet = CompressedResidual::Quantized {
                delta: iv.delta,
                precision: q.precision,
                payload,
                dim: levels.len(),
            };
            Ok((Some(packet), recon))
        }
        CompressorKind::TopL(keep) => {
            let sparse = top_l(&plan.residual, keep)?;
            let recon = apply_sparse(&plan.prediction, &sparse);
            Ok((Some(CompressedResidual::Sparse(sparse)), recon))
        }
        CompressorKind::Identity => {
            let recon = apply_raw(&plan.prediction, &plan.residual);
            Ok((Some(CompressedResidual::Raw(plan.residual.clone())), recon))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutput {
    pub packet: ResidualPacket,
    pub reconstruction: Vec<f64>,
    pub plan: EncodePlan,
}

/// One full agent iteration: plan, compress, update memory.
pub fn agent_step(
    agent: &mut AgentState,
    x: &[f64],
    scheme: &Scheme,
    loss: &LossConfig,
    ctx: &StepContext,
) -> Result<AgentOutput> {
    let plan = plan_step(agent, x, scheme, loss, ctx)?;
    finish_step(agent, plan, scheme)
}

/// Compresses an existing plan and commits its result to the agent.
pub(crate) fn finish_step(agent: &mut AgentState, plan: EncodePlan, scheme: &Scheme) -> Result<AgentOutput> {
    let mut rng = agent.quantizer_stream(plan.t);
    let (residual, reconstruction) = compress_plan(&plan, scheme, &mut rng)?;
    agent.memory.push(reconstruction.clone())?;
    if plan.transmit() {
        agent.skip_count = 0;
    } else {
        agent.skip_count += 1;
    }
    Ok(AgentOutput {
        packet: ResidualPacket {
            agent: agent.id,
            t: plan.t,
            coefficients: plan.coefficients.clone(),
            residual,
        },
        reconstruction,
        plan,
    })
}
