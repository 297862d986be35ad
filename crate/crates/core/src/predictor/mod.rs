//! Least-squares linear prediction of the current local gradient from the
//! `s` most recent imperfect gradients.
//!
//! The prediction `G a` is the orthogonal projection of `g` onto the span of
//! the memory columns, so the residual `g - G a` is orthogonal to the
//! prediction and never longer than `g`.

mod lstsq;

use std::collections::VecDeque;

pub use lstsq::LsSolution;

use crate::error::{Error, Result};
use crate::vector::{check_dim, check_finite, dot, norm_sq};
use crate::wire::Precision;

/// The `s` most recent imperfect gradients, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMemory {
    entries: VecDeque<Vec<f64>>,
    capacity: usize,
    dim: usize,
}

impl PredictorMemory {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            dim,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry `i` holds the gradient from `i + 1` iterations ago.
    pub fn get(&self, i: usize) -> Option<&[f64]> {
        self.entries.get(i).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(Vec::as_slice)
    }

    /// Inserts the newest imperfect gradient, evicting the oldest when full.
    pub fn push(&mut self, gradient: Vec<f64>) -> Result<()> {
        check_dim(self.dim, gradient.len())?;
        if self.capacity == 0 {
            return Ok(());
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front(gradient);
        Ok(())
    }
}

/// `d x m` matrix whose column `i` is memory entry `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryMatrix {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl MemoryMatrix {
    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        for c in &columns {
            check_dim(rows, c.len())?;
        }
        Ok(Self { rows, columns })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }
}

pub fn build_matrix(mem: &PredictorMemory) -> Result<MemoryMatrix> {
    MemoryMatrix::from_columns(mem.dim(), mem.iter().map(<[f64]>::to_vec).collect())
}

/// Coefficient vector of length `s`, zero-padded past the filled memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorCoefficients {
    pub values: Vec<f64>,
    /// Wire precision the values have been rounded to, if any.
    pub precision: Option<Precision>,
}

impl PredictorCoefficients {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            precision: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&a| a == 0.0)
    }

    pub fn quantized(&self, precision: Precision) -> Self {
        Self {
            values: self.values.iter().map(|&a| precision.round_coefficient(a)).collect(),
            precision: Some(precision),
        }
    }

    pub fn wire_bits(&self) -> u64 {
        self.precision.map_or(64, Precision::bits) * self.values.len() as u64
    }
}

/// Full least-squares solve with rank diagnostics.
pub fn solve_least_squares(g: &[f64], matrix: &MemoryMatrix) -> Result<LsSolution> {
    check_dim(matrix.rows(), g.len())?;
    check_finite(g, "gradient")?;
    for c in &matrix.columns {
        check_finite(c, "memory")?;
    }
    let cols: Vec<&[f64]> = matrix.columns.iter().map(Vec::as_slice).collect();
    let sol = lstsq::solve(&cols, matrix.rows(), g);
    check_finite(&sol.coefficients, "predictor coefficients")?;
    Ok(sol)
}

/// `argmin_a ||g - G a||^2`, minimum-norm on rank deficiency, padded to `capacity`.
pub fn ls_coefficients(
    g: &[f64],
    matrix: &MemoryMatrix,
    capacity: usize,
) -> Result<PredictorCoefficients> {
    if matrix.cols() > capacity {
        return Err(Error::InvalidArgument(format!(
            "memory matrix has {} columns but capacity is {capacity}",
            matrix.cols()
        )));
    }
    let sol = solve_least_squares(g, matrix)?;
    let mut values = sol.coefficients;
    values.resize(capacity, 0.0);
    Ok(PredictorCoefficients {
        values,
        precision: None,
    })
}

/// `sum_i a_i * column_i`; coefficients past the last column are ignored.
pub fn predict(matrix: &MemoryMatrix, a: &PredictorCoefficients) -> Result<Vec<f64>> {
    if matrix.cols() > a.len() {
        return Err(Error::DimensionMismatch {
            expected: matrix.cols(),
            got: a.len(),
        });
    }
    let mut out = vec![0.0; matrix.rows()];
    for (col, &ai) in matrix.columns.iter().zip(&a.values) {
        if ai != 0.0 {
            for (o, c) in out.iter_mut().zip(col) {
                *o += ai * c;
            }
        }
    }
    Ok(out)
}

pub fn residual(g: &[f64], prediction: &[f64]) -> Result<Vec<f64>> {
    check_dim(g.len(), prediction.len())?;
    Ok(crate::vector::sub(g, prediction))
}

/// Optimal scalar for an externally supplied predictor: `<g, p> / ||p||^2`.
pub fn ls_scale_external(g: &[f64], other: &[f64]) -> Result<f64> {
    check_dim(g.len(), other.len())?;
    check_finite(g, "gradient")?;
    check_finite(other, "external prediction")?;
    let denom = norm_sq(other);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(g, other) / denom)
}
