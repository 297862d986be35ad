//! Comparison schemes, expressed as predictor/trigger/compressor choices on
//! the shared protocol pipeline.
//!
//! | scheme | prediction | trigger | compressor |
//! |---|---|---|---|
//! | gradient difference | previous `g_tilde` | always | quantizer |
//! | LAQ | previous `g_tilde` | LAQ criterion | quantizer |
//! | EF21 | previous `g_tilde` | always | Top-L |
//! | proposed + Top-L | least squares | threshold | Top-L |
//!
//! With "previous `g_tilde`" prediction the one-slot predictor memory is
//! exactly the last transmitted gradient (LAQ) or the server estimate (EF21),
//! and the server mirror keeps its copy in step.

use std::collections::VecDeque;

use crate::codec::QuantizerConfig;
use crate::error::{Error, Result};
use crate::protocol::{agent_step, AgentOutput, AgentState, Scheme, StepContext};
use crate::trigger::TriggerSchedule;
use crate::wire::Precision;
use crate::workload::LossConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaqParams {
    /// Number of past model updates in the criterion (`D`).
    pub window: usize,
    /// Weight on the model-update sum, divided by `D`.
    pub factor: f64,
    /// Multiplier on the quantization noise `d delta^2 / 4`.
    pub noise_weight: f64,
    /// Consecutive omissions after which a transmission is forced.
    pub max_skip: usize,
}

impl Default for LaqParams {
    fn default() -> Self {
        Self {
            window: 10,
            factor: 0.8,
            noise_weight: 3.0,
            max_skip: 50,
        }
    }
}

impl LaqParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.max_skip == 0 {
            return Err(Error::InvalidArgument("LAQ window and skip limit must be >= 1".into()));
        }
        if !(self.factor >= 0.0) || !(self.noise_weight >= 0.0) {
            return Err(Error::InvalidArgument("LAQ weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Ring buffer of recent `||x(t+1) - x(t)||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaqState {
    pub params: LaqParams,
    history: VecDeque<f64>,
}

impl LaqState {
    pub fn new(params: LaqParams) -> Self {
        Self {
            params,
            history: VecDeque::with_capacity(params.window),
        }
    }

    pub fn record_update(&mut self, step_sq: f64) {
        if self.history.len() == self.params.window {
            self.history.pop_back();
        }
        self.history.push_front(step_sq);
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// `(factor / D) * sum_j ||dx_j||^2 / (gamma^2 K^2)`.
    pub fn model_term(&self, gamma: f64, agents: usize) -> f64 {
        let scale = gamma * gamma * (agents * agents) as f64;
        self.params.factor / self.params.window as f64 * self.history.iter().sum::<f64>() / scale
    }
}

pub fn grad_diff_step(
    agent: &mut AgentState,
    x: &[f64],
    qcfg: QuantizerConfig,
    loss: &LossConfig,
    t: usize,
) -> Result<AgentOutput> {
    let ctx = StepContext { t, laq_model_term: 0.0 };
    agent_step(agent, x, &Scheme::grad_diff(qcfg), loss, &ctx)
}

pub fn laq_step(
    agent: &mut AgentState,
    laq: &LaqState,
    x: &[f64],
    qcfg: QuantizerConfig,
    loss: &LossConfig,
    gamma: f64,
    t: usize,
) -> Result<AgentOutput> {
    let ctx = StepContext {
        t,
        laq_model_term: laq.model_term(gamma, loss.agents),
    };
    agent_step(agent, x, &Scheme::laq(laq.params, qcfg), loss, &ctx)
}

pub fn ef21_step(agent: &mut AgentState, x: &[f64], keep: usize, loss: &LossConfig, t: usize) -> Result<AgentOutput> {
    let ctx = StepContext { t, laq_model_term: 0.0 };
    agent_step(agent, x, &Scheme::ef21(keep), loss, &ctx)
}

#[allow(clippy::too_many_arguments)]
pub fn proposed_with_topl_step(
    agent: &mut AgentState,
    x: &[f64],
    keep: usize,
    memory: usize,
    schedule: TriggerSchedule,
    precision: Precision,
    loss: &LossConfig,
    t: usize,
) -> Result<AgentOutput> {
    let ctx = StepContext { t, laq_model_term: 0.0 };
    agent_step(agent, x, &Scheme::proposed_topl(memory, keep, schedule, precision), loss, &ctx)
}
