//! Data ingestion, uniform partitioning and the regularized logistic loss.
//!
//! Agent `k` holds shard `k` and evaluates
//!
//! ```text
//! f_k(x) = (1/K) * sum_i log(1 + exp(-y_i u_i^T x)) + lambda * ||x||^2
//! ```
//!
//! so the global objective is `f(x) = sum_k f_k(x)`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};
use crate::vector::{check_dim, dot};

/// Dense feature matrix (row-major) with +/-1 labels, plus a compressed
/// sparse row index of the nonzeros used by the loss kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
    row_start: Vec<usize>,
    nz_index: Vec<u32>,
    nz_value: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = features[0].len();
        Self::from_flat(features.into_iter().flatten().collect(), labels, dim)
    }

    pub fn from_flat(features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dataset dimension must be positive".into()));
        }
        check_dim(labels.len() * dim, features.len())?;
        if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidArgument(format!("label {y} is not +1 or -1")));
        }
        let mut row_start = Vec::with_capacity(labels.len() + 1);
        let mut nz_index = Vec::new();
        let mut nz_value = Vec::new();
        row_start.push(0);
        for row in features.chunks_exact(dim) {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    nz_index.push(j as u32);
                    nz_value.push(v);
                }
            }
            row_start.push(nz_index.len());
        }
        Ok(Self {
            features,
            labels,
            dim,
            row_start,
            nz_index,
            nz_value,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Nonzero positions and values of row `i`, positions increasing.
    pub fn sparse_row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_start[i]..self.row_start[i + 1];
        (&self.nz_index[r.clone()], &self.nz_value[r])
    }

    pub fn nnz(&self) -> usize {
        self.nz_index.len()
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// Reads a LIBSVM sparse text file into a dense [`Dataset`].
///
/// The dimension is the largest feature index seen unless `dim_override` is
/// given, in which case every index must be within it. Labels `0`/`1` are
/// mapped to `-1`/`+1`.
pub fn load_libsvm(path: impl AsRef<Path>, dim_override: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm(BufReader::new(file), dim_override).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_libsvm(reader: impl BufRead, dim_override: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label = parse_label(label_tok).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("invalid label {label_tok:?}"),
        })?;

        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid feature index {idx:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid feature value {val:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if let Some(d) = dim_override {
                if idx > d {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("feature index {idx} exceeds dimension {d}"),
                    });
                }
            }
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite feature value {val}"),
                });
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = dim_override.unwrap_or(max_index);
    if dim == 0 {
        return Err(Error::InvalidArgument("dataset has no features".into()));
    }
    let mut features = vec![0.0; rows.len() * dim];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * dim + j] = v;
        }
    }
    Dataset::from_flat(features, labels, dim)
}

fn parse_label(tok: &str) -> Option<f64> {
    let v: f64 = tok.parse().ok()?;
    if v == 1.0 {
        Some(1.0)
    } else if v == -1.0 || v == 0.0 {
        Some(-1.0)
    } else {
        None
    }
}

/// Sparse binary features with labels drawn from a planted logistic model.
///
/// Used when a real dataset is not at hand; `density` is the probability that
/// a feature is active and `positive_rate` steers the label imbalance through
/// the planted intercept.
pub fn synthetic_sparse_binary(
    samples: usize,
    dim: usize,
    density: f64,
    positive_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    if samples == 0 || dim == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = StreamKey::new(seed, Purpose::Synthetic, 0, 0).stream();
    let planted: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let intercept = (positive_rate / (1.0 - positive_rate)).ln();
    let mut features = vec![0.0; samples * dim];
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let row = &mut features[i * dim..(i + 1) * dim];
        for v in row.iter_mut() {
            if rng.gen_bool(density) {
                *v = 1.0;
            }
        }
        let z = intercept + dot(row, &planted);
        let p = sigmoid(z);
        labels.push(if rng.gen_bool(p) { 1.0 } else { -1.0 });
    }
    Dataset::from_flat(features, labels, dim)
}

/// A contiguous block of samples owned by one agent.
#[derive(Debug, Clone)]
pub struct Shard {
    pub agent_id: usize,
    data: Arc<Dataset>,
    range: Range<usize>,
}

impl Shard {
    pub fn new(agent_id: usize, data: Arc<Dataset>, range: Range<usize>) -> Result<Self> {
        if range.end > data.len() || range.start > range.end {
            return Err(Error::InvalidArgument(format!(
                "shard range {range:?} outside dataset of {} samples",
                data.len()
            )));
        }
        Ok(Self { agent_id, data, range })
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.range.clone().map(|i| (self.data.row(i), self.data.label(i)))
    }

    /// `(positions, values, label)` per sample.
    pub fn sparse_samples(&self) -> impl Iterator<Item = (&[u32], &[f64], f64)> + '_ {
        self.range.clone().map(|i| {
            let (idx, val) = self.data.sparse_row(i);
            (idx, val, self.data.label(i))
        })
    }
}

/// Splits the first `K * floor(N / K)` samples in file order; the remainder is
/// dropped.
pub fn partition_uniform(data: Arc<Dataset>, agents: usize) -> Result<Vec<Shard>> {
    if agents == 0 {
        return Err(Error::InvalidArgument("agent count must be at least 1".into()));
    }
    let n = data.len();
    if agents > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} samples across {agents} agents"
        )));
    }
    let per_agent = n / agents;
    (0..agents)
        .map(|k| Shard::new(k, Arc::clone(&data), k * per_agent..(k + 1) * per_agent))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub agents: usize,
}

impl LossConfig {
    pub fn new(lambda: f64, agents: usize) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if agents == 0 {
            return Err(Error::InvalidArgument("agent count must be at least 1".into()));
        }
        Ok(Self { lambda, agents })
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sparse_dot(idx: &[u32], val: &[f64], x: &[f64]) -> f64 {
    idx.iter().zip(val).map(|(&j, v)| v * x[j as usize]).sum()
}

pub fn local_loss(x: &[f64], shard: &Shard, cfg: &LossConfig) -> Result<f64> {
    check_dim(shard.dim(), x.len())?;
    let data_term: f64 = shard
        .sparse_samples()
        .map(|(idx, val, y)| softplus(-y * sparse_dot(idx, val, x)))
        .sum();
    Ok(data_term / cfg.agents as f64 + cfg.lambda * dot(x, x))
}

pub fn local_gradient(x: &[f64], shard: &Shard, cfg: &LossConfig) -> Result<Vec<f64>> {
    check_dim(shard.dim(), x.len())?;
    let inv_k = 1.0 / cfg.agents as f64;
    let mut grad = vec![0.0; x.len()];
    for (idx, val, y) in shard.sparse_samples() {
        let weight = -y * sigmoid(-y * sparse_dot(idx, val, x)) * inv_k;
        if weight != 0.0 {
            for (&j, v) in idx.iter().zip(val) {
                grad[j as usize] += weight * v;
            }
        }
    }
    for (g, xi) in grad.iter_mut().zip(x) {
        *g += 2.0 * cfg.lambda * xi;
    }
    Ok(grad)
}

/// `f(x) = sum_k f_k(x)`, summed in ascending agent order.
pub fn global_loss(x: &[f64], shards: &[Shard], cfg: &LossConfig) -> Result<f64> {
    shards.iter().map(|s| local_loss(x, s, cfg)).sum()
}

pub fn global_gradient(x: &[f64], shards: &[Shard], cfg: &LossConfig) -> Result<Vec<f64>> {
    let mut total = vec![0.0; x.len()];
    for shard in shards {
        let g = local_gradient(x, shard, cfg)?;
        for (t, gi) in total.iter_mut().zip(&g) {
            *t += gi;
        }
    }
    Ok(total)
}
