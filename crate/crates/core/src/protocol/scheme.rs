use std::fmt;
use std::str::FromStr;

use crate::baselines::LaqParams;
use crate::codec::QuantizerConfig;
use crate::error::{Error, Result};
use crate::trigger::TriggerSchedule;
use crate::wire::Precision;

/// How the agent and the server form the prediction `g_hat`.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    /// Least-squares combination of the `memory` most recent imperfect
    /// gradients; coefficients are sent every iteration.
    LeastSquares { memory: usize },
    /// The previous imperfect gradient with a fixed unit coefficient; nothing
    /// extra is sent.
    Previous,
    /// `g_hat = 0`.
    Disabled,
}

impl PredictorKind {
    pub fn memory_len(&self) -> usize {
        match self {
            PredictorKind::LeastSquares { memory } => *memory,
            PredictorKind::Previous => 1,
            PredictorKind::Disabled => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerRule {
    /// Omit when `||e_k|| <= c_k(t) ||g_k||`.
    Threshold(TriggerSchedule),
    Always,
    Laq(LaqParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressorKind {
    Quantizer(QuantizerConfig),
    TopL(usize),
    /// Residual sent at full precision.
    Identity,
}

/// A complete encode/decode pipeline shared by agents and the server.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    pub predictor: PredictorKind,
    pub trigger: TriggerRule,
    pub compressor: CompressorKind,
    /// Wire precision of predictor coefficients.
    pub coeff_precision: Precision,
}

impl Scheme {
    pub fn proposed(memory: usize, schedule: TriggerSchedule, quantizer: QuantizerConfig) -> Self {
        Self {
            predictor: PredictorKind::LeastSquares { memory },
            trigger: TriggerRule::Threshold(schedule),
            compressor: CompressorKind::Quantizer(quantizer),
            coeff_precision: quantizer.precision,
        }
    }

    pub fn proposed_topl(memory: usize, keep: usize, schedule: TriggerSchedule, precision: Precision) -> Self {
        Self {
            predictor: PredictorKind::LeastSquares { memory },
            trigger: TriggerRule::Threshold(schedule),
            compressor: CompressorKind::TopL(keep),
            coeff_precision: precision,
        }
    }

    pub fn grad_diff(quantizer: QuantizerConfig) -> Self {
        Self {
            predictor: PredictorKind::Previous,
            trigger: TriggerRule::Always,
            compressor: CompressorKind::Quantizer(quantizer),
            coeff_precision: quantizer.precision,
        }
    }

    pub fn laq(params: LaqParams, quantizer: QuantizerConfig) -> Self {
        Self {
            predictor: PredictorKind::Previous,
            trigger: TriggerRule::Laq(params),
            compressor: CompressorKind::Quantizer(quantizer),
            coeff_precision: quantizer.precision,
        }
    }

    pub fn ef21(keep: usize) -> Self {
        Self {
            predictor: PredictorKind::Previous,
            trigger: TriggerRule::Always,
            compressor: CompressorKind::TopL(keep),
            coeff_precision: Precision::Bits32,
        }
    }

    /// Uncompressed distributed gradient descent.
    pub fn exact() -> Self {
        Self {
            predictor: PredictorKind::Disabled,
            trigger: TriggerRule::Threshold(TriggerSchedule::never()),
            compressor: CompressorKind::Identity,
            coeff_precision: Precision::Bits32,
        }
    }

    pub fn quantizer(&self) -> Option<&QuantizerConfig> {
        match &self.compressor {
            CompressorKind::Quantizer(q) => Some(q),
            _ => None,
        }
    }

    pub fn sends_coefficients(&self) -> bool {
        matches!(self.predictor, PredictorKind::LeastSquares { .. })
    }
}

/// The schemes a run config can name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Proposed,
    GradDiff,
    Laq,
    Ef21,
    ProposedTopL,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::GradDiff => "grad_diff",
            Method::Laq => "laq",
            Method::Ef21 => "ef21",
            Method::ProposedTopL => "proposed_topl",
        }
    }

    pub fn uses_sparsifier(self) -> bool {
        matches!(self, Method::Ef21 | Method::ProposedTopL)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "grad_diff" => Ok(Method::GradDiff),
            "laq" => Ok(Method::Laq),
            "ef21" => Ok(Method::Ef21),
            "proposed_topl" => Ok(Method::ProposedTopL),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (proposed, grad_diff, laq, ef21, proposed_topl)"
            ))),
        }
    }
}
