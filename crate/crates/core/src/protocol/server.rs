use super::scheme::{PredictorKind, Scheme};
use super::{apply_levels, apply_raw, apply_sparse, CompressedResidual, ModelState, ResidualPacket};
use crate::codec::entropy_decode;
use crate::error::{Error, Result};
use crate::predictor::{build_matrix, predict, PredictorMemory};
use crate::vector::check_dim;

#[derive(Debug, Clone)]
pub struct ServerState {
    /// Copy of each agent's memory, updated from packets only.
    pub mirrors: Vec<PredictorMemory>,
    pub model: ModelState,
}

impl ServerState {
    pub fn new(agents: usize, scheme: &Scheme, model: ModelState) -> Self {
        let dim = model.x.len();
        Self {
            mirrors: (0..agents)
                .map(|_| PredictorMemory::new(scheme.predictor.memory_len(), dim))
                .collect(),
            model,
        }
    }

    pub fn agents(&self) -> usize {
        self.mirrors.len()
    }

    /// Gradient step once every agent's reconstruction is in.
    pub fn apply(&mut self, reconstructions: &[Vec<f64>], gamma: f64) -> Result<()> {
        if reconstructions.len() != self.agents() {
            return Err(Error::InvalidArgument(format!(
                "expected {} agent reconstructions, got {}",
                self.agents(),
                reconstructions.len()
            )));
        }
        self.model.step(reconstructions, gamma)
    }
}

/// Decodes agent `k`'s packet against its mirror and records the result.
pub fn server_step(server: &mut ServerState, k: usize, pkt: &ResidualPacket, scheme: &Scheme) -> Result<Vec<f64>> {
    let agents = server.agents();
    let mirror = server
        .mirrors
        .get_mut(k)
        .ok_or_else(|| Error::InvalidArgument(format!("agent {k} out of range for {agents} agents")))?;
    let dim = mirror.dim();

    let prediction = match scheme.predictor {
        PredictorKind::LeastSquares { .. } => {
            let a = pkt
                .coefficients
                .as_ref()
                .ok_or_else(|| Error::Payload("packet lacks predictor coefficients".into()))?;
            predict(&build_matrix(mirror)?, a)?
        }
        PredictorKind::Previous => mirror.get(0).map_or_else(|| vec![0.0; dim], <[f64]>::to_vec),
        PredictorKind::Disabled => vec![0.0; dim],
    };

    let recon = match &pkt.residual {
        None => prediction,
        Some(r) => {
            check_dim(dim, r.dim())?;
            match r {
                CompressedResidual::Quantized { delta, payload, dim, .. } => {
                    let levels = entropy_decode(payload, *dim)?;
                    apply_levels(&prediction, *delta, &levels)
                }
                CompressedResidual::Sparse(s) => {
                    if s.indices.iter().any(|&i| i >= dim) {
                        return Err(Error::Payload("sparse index out of range".into()));
                    }
                    apply_sparse(&prediction, s)
                }
                CompressedResidual::Raw(e) => apply_raw(&prediction, e),
            }
        }
    };
    mirror.push(recon.clone())?;
    Ok(recon)
}
