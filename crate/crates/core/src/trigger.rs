//! Event-triggered residual transmission.
//!
//! Agent `k` omits its residual at iteration `t` when
//! `||e_k|| <= c_k(t) * ||g_k||`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vector::norm;

/// Trigger coefficient `c_k(t)` as a function of agent and iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum TriggerSchedule {
    /// `c(t) = max(0, (1 - t / horizon) / K)`.
    LinearDecay { horizon: f64, agents: usize },
    Constant(f64),
    /// One constant per agent.
    PerAgent(Vec<f64>),
}

impl TriggerSchedule {
    pub fn linear_decay(horizon: f64, agents: usize) -> Result<Self> {
        if !(horizon > 0.0) || agents == 0 {
            return Err(Error::InvalidArgument(format!(
                "linear decay needs horizon > 0 and K >= 1, got {horizon}, {agents}"
            )));
        }
        Ok(TriggerSchedule::LinearDecay { horizon, agents })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("trigger coefficient must be >= 0, got {c}")));
        }
        Ok(TriggerSchedule::Constant(c))
    }

    pub fn never() -> Self {
        TriggerSchedule::Constant(0.0)
    }

    /// `c_k(t)`, always nonnegative.
    pub fn coefficient(&self, agent: usize, t: usize) -> f64 {
        match self {
            TriggerSchedule::LinearDecay { horizon, agents } => {
                ((1.0 - t as f64 / horizon) / *agents as f64).max(0.0)
            }
            TriggerSchedule::Constant(c) => *c,
            TriggerSchedule::PerAgent(cs) => cs.get(agent).copied().unwrap_or(0.0),
        }
    }

    /// `c(t) = max_k c_k(t)`.
    pub fn max_coefficient(&self, agents: usize, t: usize) -> f64 {
        (0..agents).map(|k| self.coefficient(k, t)).fold(0.0, f64::max)
    }
}

impl fmt::Display for TriggerSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggerSchedule::LinearDecay { .. } => write!(f, "linear"),
            TriggerSchedule::Constant(c) => write!(f, "const:{c}"),
            TriggerSchedule::PerAgent(cs) => {
                let parts: Vec<String> = cs.iter().map(f64::to_string).collect();
                write!(f, "agents:{}", parts.join(","))
            }
        }
    }
}

/// Schedule spec as written in a run config, before `K` and the horizon are known.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Linear,
    Constant(f64),
    PerAgent(Vec<f64>),
}

impl ScheduleSpec {
    pub fn build(&self, horizon: f64, agents: usize) -> Result<TriggerSchedule> {
        match self {
            ScheduleSpec::Linear => TriggerSchedule::linear_decay(horizon, agents),
            ScheduleSpec::Constant(c) => TriggerSchedule::constant(*c),
            ScheduleSpec::PerAgent(cs) => {
                if cs.len() != agents {
                    return Err(Error::InvalidArgument(format!(
                        "per-agent schedule lists {} coefficients for {agents} agents",
                        cs.len()
                    )));
                }
                if cs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                    return Err(Error::InvalidArgument("trigger coefficients must be >= 0".into()));
                }
                Ok(TriggerSchedule::PerAgent(cs.clone()))
            }
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown schedule {s:?} (linear, const:<c>, agents:<c1>,<c2>,...)"));
        if s == "linear" {
            return Ok(ScheduleSpec::Linear);
        }
        if let Some(c) = s.strip_prefix("const:") {
            return c.trim().parse().map(ScheduleSpec::Constant).map_err(|_| bad());
        }
        if let Some(list) = s.strip_prefix("agents:") {
            return list
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(ScheduleSpec::PerAgent)
                .map_err(|_| bad());
        }
        Err(bad())
    }
}

/// `e_th,k = c_k(t) * ||g_k||`.
pub fn threshold(agent: usize, t: usize, g_norm: f64, schedule: &TriggerSchedule) -> Result<f64> {
    if !(g_norm >= 0.0) {
        return Err(Error::InvalidArgument(format!("gradient norm must be >= 0, got {g_norm}")));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("iterations are numbered from 1".into()));
    }
    Ok(schedule.coefficient(agent, t) * g_norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerDecision {
    pub transmit: bool,
    pub threshold: f64,
    pub residual_norm: f64,
}

/// Transmit strictly above the threshold; equality omits.
pub fn decide(e: &[f64], threshold: f64) -> TriggerDecision {
    decide_norm(norm(e), threshold)
}

pub fn decide_norm(residual_norm: f64, threshold: f64) -> TriggerDecision {
    TriggerDecision {
        transmit: residual_norm > threshold,
        threshold,
        residual_norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdCoefficient {
    Value { b: f64, violates_assumption: bool },
    /// The aggregate gradient vanished.
    Converged,
}

/// `b(t) = sum_k e_th,k / ||g||`; values `>= 1` are flagged, not rejected.
pub fn compute_b(thresholds: &[f64], global_g_norm: f64) -> ThresholdCoefficient {
    if !(global_g_norm > 0.0) {
        return ThresholdCoefficient::Converged;
    }
    let b = thresholds.iter().sum::<f64>() / global_g_norm;
    ThresholdCoefficient::Value {
        b,
        violates_assumption: b >= 1.0,
    }
}
