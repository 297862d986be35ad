//! Agent encode, server decode, synchronized memories, aggregation and the
//! gradient step.

mod agent;
mod ledger;
mod run;
mod scheme;
mod server;

pub use agent::{agent_step, compress_plan, plan_step, AgentOutput, AgentState, EncodePlan, StepContext};
pub use ledger::{account_bits, BitLedger, LedgerEntry};
pub use run::{
    reference_optimum, run_training, ExactReference, IterationRecord, RunHistory, RunSetup,
    DIVERGENCE_FACTOR,
};
pub use scheme::{CompressorKind, Method, PredictorKind, Scheme, TriggerRule};
pub use server::{server_step, ServerState};

use crate::codec::{EncodedPayload, SparseResidual};
use crate::error::{Error, Result};
use crate::predictor::PredictorCoefficients;
use crate::vector::{check_dim, check_finite};
use crate::wire::Precision;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub x: Vec<f64>,
    /// Index of the iteration about to run; starts at 1.
    pub t: usize,
}

impl ModelState {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        check_finite(&x, "model")?;
        Ok(Self { x, t: 1 })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { x: vec![0.0; dim], t: 1 }
    }

    pub fn step(&mut self, reconstructions: &[Vec<f64>], gamma: f64) -> Result<()> {
        self.x = global_update(&self.x, reconstructions, gamma)?;
        self.t += 1;
        Ok(())
    }
}

/// Compressed form of a transmitted residual.
#[derive(Debug, Clone, PartialEq)]
pub enum CompressedResidual {
    Quantized {
        delta: f64,
        /// Wire precision of `delta`.
        precision: Precision,
        payload: EncodedPayload,
        dim: usize,
    },
    Sparse(SparseResidual),
    Raw(Vec<f64>),
}

impl CompressedResidual {
    pub fn dim(&self) -> usize {
        match self {
            CompressedResidual::Quantized { dim, .. } => *dim,
            CompressedResidual::Sparse(s) => s.dim,
            CompressedResidual::Raw(v) => v.len(),
        }
    }

    pub fn interval(&self) -> Option<f64> {
        match self {
            CompressedResidual::Quantized { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    /// Scalars carried on the channel.
    pub fn elements(&self) -> u64 {
        match self {
            CompressedResidual::Quantized { dim, .. } => *dim as u64,
            CompressedResidual::Sparse(s) => s.nnz() as u64,
            CompressedResidual::Raw(v) => v.len() as u64,
        }
    }
}

/// One agent's uplink message for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPacket {
    pub agent: usize,
    pub t: usize,
    /// Present only for schemes with a least-squares predictor.
    pub coefficients: Option<PredictorCoefficients>,
    /// Absent when the trigger omitted the residual.
    pub residual: Option<CompressedResidual>,
}

impl ResidualPacket {
    pub fn transmitted(&self) -> bool {
        self.residual.is_some()
    }
}

/// `x - gamma * sum_k g_k`, summing in ascending agent order.
pub fn global_update(x: &[f64], reconstructions: &[Vec<f64>], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be > 0, got {gamma}")));
    }
    let (first, rest) = reconstructions
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no agent reconstructions to aggregate".into()))?;
    check_dim(x.len(), first.len())?;
    let mut sum = first.clone();
    for r in rest {
        check_dim(x.len(), r.len())?;
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    let next: Vec<f64> = x.iter().zip(&sum).map(|(xi, si)| xi - gamma * si).collect();
    check_finite(&next, "model")?;
    Ok(next)
}

/// `prediction + delta * levels`.
pub(crate) fn apply_levels(prediction: &[f64], delta: f64, levels: &[i32]) -> Vec<f64> {
    prediction
        .iter()
        .zip(levels)
        .map(|(p, &l)| p + delta * l as f64)
        .collect()
}

pub(crate) fn apply_sparse(prediction: &[f64], sparse: &SparseResidual) -> Vec<f64> {
    let mut out = prediction.to_vec();
    for (&i, &v) in sparse.indices.iter().zip(&sparse.values) {
        out[i] += v;
    }
    out
}

pub(crate) fn apply_raw(prediction: &[f64], e: &[f64]) -> Vec<f64> {
    prediction.iter().zip(e).map(|(p, v)| p + v).collect()
}
