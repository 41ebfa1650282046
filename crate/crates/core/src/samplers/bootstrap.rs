use rand::Rng;

use super::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

/// Resamples whole historical blocks uniformly with replacement.
///
/// A request for `h` steps must be a whole multiple of the block length;
/// longer requests concatenate independently drawn blocks.
pub fn bootstrap_sample(req: &SamplerRequest, corpus: &[Matrix]) -> Result<TrajectoryBatch, SamplerError> {
    let first = corpus
        .first()
        .ok_or_else(|| SamplerError::InvalidInput("bootstrap corpus is empty".into()))?;
    let (block_h, d) = (first.rows(), first.cols());
    if block_h == 0 || d == 0 {
        return Err(SamplerError::InvalidInput("bootstrap blocks must be non-empty".into()));
    }
    if let Some(bad) = corpus.iter().position(|b| b.rows() != block_h || b.cols() != d) {
        return Err(SamplerError::InvalidInput(format!(
            "corpus block {bad} has shape {}x{}, expected {block_h}x{d}",
            corpus[bad].rows(),
            corpus[bad].cols()
        )));
    }
    if !req.h.is_multiple_of(block_h) {
        return Err(SamplerError::InvalidInput(format!(
            "requested horizon {} is not a multiple of the block length {block_h}",
            req.h
        )));
    }
    req.validate(d, 0)?;
    let mut rng = rng_from_seed(req.seed);
    let blocks_per_sample = req.h / block_h;
    let mut data = Vec::with_capacity(req.m * req.h * d);
    for _ in 0..req.m * blocks_per_sample {
        let pick = rng.random_range(0..corpus.len());
        data.extend_from_slice(corpus[pick].as_slice());
    }
    Ok(TrajectoryBatch::from_vec(req.m, req.h, d, data))
}

#[derive(Clone, Debug)]
pub struct BootstrapSampler {
    corpus: Vec<Matrix>,
}

impl BootstrapSampler {
    pub fn new(corpus: Vec<Matrix>) -> Result<Self, SamplerError> {
        let probe = SamplerRequest::new(Matrix::default(), 1, corpus.first().map_or(1, Matrix::rows).max(1), 0);
        bootstrap_sample(&probe, &corpus)?;
        Ok(Self { corpus })
    }

    /// Splits a T×D series into consecutive non-overlapping `block` rows.
    /// A trailing partial block is dropped.
    pub fn from_series(series: &Matrix, block: usize) -> Result<Self, SamplerError> {
        if block == 0 {
            return Err(SamplerError::InvalidInput("block length must be positive".into()));
        }
        let corpus = (0..series.rows() / block)
            .map(|i| series.slice_rows(i * block, (i + 1) * block))
            .collect();
        Self::new(corpus)
    }

    pub fn corpus(&self) -> &[Matrix] {
        &self.corpus
    }
}

impl TrajectorySampler for BootstrapSampler {
    fn name(&self) -> &str {
        "bootstrap"
    }

    fn dim(&self) -> usize {
        self.corpus[0].cols()
    }

    fn min_context(&self) -> usize {
        0
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        bootstrap_sample(req, &self.corpus)
    }
}
