use super::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::matrix::Matrix;

/// Zero-variance sampler that returns the known continuation of a series.
///
/// A history of `T` rows is taken to be the first `T` rows of `series`; every
/// sample is `series[T..T+h]`. With such a sampler a scenario tree collapses to
/// a single chain that reproduces the realised prices.
#[derive(Clone, Debug)]
pub struct ReplaySampler {
    series: Matrix,
}

impl ReplaySampler {
    pub fn new(series: Matrix) -> Self {
        Self { series }
    }

    pub fn series(&self) -> &Matrix {
        &self.series
    }
}

impl TrajectorySampler for ReplaySampler {
    fn name(&self) -> &str {
        "replay"
    }

    fn dim(&self) -> usize {
        self.series.cols()
    }

    fn min_context(&self) -> usize {
        0
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        req.validate(self.dim(), 0)?;
        let start = req.history.rows();
        let end = start + req.h;
        if end > self.series.rows() {
            return Err(SamplerError::InvalidInput(format!(
                "replay series has {} rows, request needs rows {start}..{end}",
                self.series.rows()
            )));
        }
        let block = self.series.slice_rows(start, end);
        let mut data = Vec::with_capacity(req.m * block.as_slice().len());
        for _ in 0..req.m {
            data.extend_from_slice(block.as_slice());
        }
        Ok(TrajectoryBatch::from_vec(req.m, req.h, self.dim(), data))
    }
}
