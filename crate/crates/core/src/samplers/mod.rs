//! Trajectory samplers: seeded draws of the next `h` observations given a
//! history.
//!
//! Every sampler is a deterministic function of `(request, params)`; the seed
//! travels inside the request, including for remote samplers.

mod bootstrap;
mod cyclic;
mod external;
mod gaussian_ar;
mod regime;
mod replay;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{running_mean_slices, Matrix};

pub use bootstrap::{bootstrap_sample, BootstrapSampler};
pub use cyclic::{CyclicRegimeParams, CyclicRegimeSampler};
pub use external::{external_sample, ExternalSampler, Handshake, DEFAULT_TIMEOUT};
pub use gaussian_ar::{gaussian_ar_sample, GaussianArParams, GaussianArSampler};
pub use regime::{regime_mixture_sample, RegimeMixtureParams, RegimeMixtureSampler};
pub use replay::ReplaySampler;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler input: {0}")]
    InvalidInput(String),
    #[error("sampler protocol error: {0}")]
    Protocol(String),
    #[error("remote sampler error: {0}")]
    Remote(String),
    #[error("remote sampler timed out after {0:?}")]
    Timeout(Duration),
    #[error("sampler i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A request for `m` trajectories of `h` steps conditioned on `history`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerRequest {
    /// T×D observations, most recent row last.
    pub history: Matrix,
    pub m: usize,
    pub h: usize,
    pub seed: u64,
}

impl SamplerRequest {
    pub fn new(history: Matrix, m: usize, h: usize, seed: u64) -> Self {
        Self { history, m, h, seed }
    }

    /// Checks `m`, `h`, the history dimension and the minimum context.
    pub fn validate(&self, dim: usize, min_context: usize) -> Result<(), SamplerError> {
        if self.m == 0 || self.h == 0 {
            return Err(SamplerError::InvalidInput(format!(
                "m and h must be positive (m={}, h={})",
                self.m, self.h
            )));
        }
        if self.history.rows() < min_context {
            return Err(SamplerError::InvalidInput(format!(
                "history has {} rows, sampler needs at least {min_context}",
                self.history.rows()
            )));
        }
        if self.history.rows() > 0 && self.history.cols() != dim {
            return Err(SamplerError::InvalidInput(format!(
                "history dimension {} does not match sampler dimension {dim}",
                self.history.cols()
            )));
        }
        if !self.history.is_finite() {
            return Err(SamplerError::InvalidInput("history contains non-finite values".into()));
        }
        Ok(())
    }
}

/// An `m × h × d` tensor of sampled prices, stored sample-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    m: usize,
    h: usize,
    d: usize,
    data: Vec<f64>,
}

impl TrajectoryBatch {
    /// Panics if `data.len() != m * h * d`.
    pub fn from_vec(m: usize, h: usize, d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), m * h * d, "batch storage length mismatch");
        Self { m, h, d, data }
    }

    /// Validating constructor from nested `[sample][step][dim]` arrays.
    pub fn from_nested(samples: &[Vec<Vec<f64>>]) -> Result<Self, SamplerError> {
        let m = samples.len();
        let h = samples.first().map_or(0, Vec::len);
        let d = samples.first().and_then(|s| s.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(m * h * d);
        for (i, s) in samples.iter().enumerate() {
            if s.len() != h {
                return Err(SamplerError::Protocol(format!(
                    "sample {i} has {} steps, expected {h}",
                    s.len()
                )));
            }
            for (t, step) in s.iter().enumerate() {
                if step.len() != d {
                    return Err(SamplerError::Protocol(format!(
                        "sample {i} step {t} has dimension {}, expected {d}",
                        step.len()
                    )));
                }
                data.extend_from_slice(step);
            }
        }
        Ok(Self { m, h, d, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.h, self.d)
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn get(&self, sample: usize, step: usize, dim: usize) -> f64 {
        self.data[(sample * self.h + step) * self.d + dim]
    }

    /// Flattened `h·d` values of one sample.
    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.h * self.d;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_matrix(&self, i: usize) -> Matrix {
        Matrix::from_vec(self.h, self.d, self.sample(i).to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// The batch as an `m × (h·d)` matrix, one flattened sample per row.
    pub fn to_points(&self) -> Matrix {
        Matrix::from_vec(self.m, self.h * self.d, self.data.clone())
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.m).map(|i| self.sample_matrix(i).to_nested()).collect()
    }

    /// Per-step mean trajectory (h×d).
    pub fn mean_trajectory(&self) -> Matrix {
        let mean =
            running_mean_slices((0..self.m).map(|i| self.sample(i))).unwrap_or_else(|| vec![0.0; self.h * self.d]);
        Matrix::from_vec(self.h, self.d, mean)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks the `(m, h, d)` shape and finiteness against a request.
    pub fn check(&self, m: usize, h: usize, d: usize) -> Result<(), SamplerError> {
        if self.shape() != (m, h, d) {
            return Err(SamplerError::InvalidInput(format!(
                "batch shape {:?} does not match expected {:?}",
                self.shape(),
                (m, h, d)
            )));
        }
        if !self.is_finite() {
            return Err(SamplerError::InvalidInput("batch contains non-finite values".into()));
        }
        Ok(())
    }
}

/// The trajectory-sampler contract.
///
/// Implementations must be deterministic in `(request, params)`. They are
/// shared across tree-building workers, hence `Send + Sync`.
pub trait TrajectorySampler: Send + Sync {
    fn name(&self) -> &str;

    /// Series dimension D.
    fn dim(&self) -> usize;

    /// Minimum history length accepted by [`sample`](Self::sample).
    fn min_context(&self) -> usize {
        1
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError>;
}

impl<S: TrajectorySampler + ?Sized> TrajectorySampler for &S {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn min_context(&self) -> usize {
        (**self).min_context()
    }
    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        (**self).sample(req)
    }
}

impl<S: TrajectorySampler + ?Sized> TrajectorySampler for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn min_context(&self) -> usize {
        (**self).min_context()
    }
    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        (**self).sample(req)
    }
}
