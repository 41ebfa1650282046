use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::rng::rng_from_seed;

/// Multimodal test process: each sample picks regime `j` with probability
/// `weights[j]` and drifts linearly away from the last observed row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeMixtureParams {
    pub weights: Vec<f64>,
    /// Per-regime drift per step, one length-D vector each.
    pub drifts: Vec<Vec<f64>>,
    pub noise_scale: f64,
}

impl RegimeMixtureParams {
    pub fn dim(&self) -> usize {
        self.drifts.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |msg: String| Err(SamplerError::InvalidInput(msg));
        if self.weights.is_empty() || self.weights.len() != self.drifts.len() {
            return bad(format!(
                "need one drift per regime ({} weights, {} drifts)",
                self.weights.len(),
                self.drifts.len()
            ));
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return bad("regime weights must be positive".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("regime weights sum to {total}, expected 1"));
        }
        let d = self.dim();
        if d == 0
            || self
                .drifts
                .iter()
                .any(|v| v.len() != d || v.iter().any(|x| !x.is_finite()))
        {
            return bad("drifts must be finite vectors of a common positive length".into());
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return bad("noise scale must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Samples a batch and also returns the regime index drawn for every sample.
pub(crate) fn sample_labeled(
    req: &SamplerRequest,
    params: &RegimeMixtureParams,
) -> Result<(TrajectoryBatch, Vec<usize>), SamplerError> {
    params.validate()?;
    let d = params.dim();
    req.validate(d, 1)?;
    let last = req.history.last_row().expect("validated non-empty history");
    let mut rng = rng_from_seed(req.seed);
    let mut data = Vec::with_capacity(req.m * req.h * d);
    let mut labels = Vec::with_capacity(req.m);
    for _ in 0..req.m {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut regime = params.weights.len() - 1;
        for (j, &w) in params.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                regime = j;
                break;
            }
        }
        labels.push(regime);
        let drift = &params.drifts[regime];
        for step in 1..=req.h {
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(last[k] + drift[k] * step as f64 + params.noise_scale * z);
            }
        }
    }
    Ok((TrajectoryBatch::from_vec(req.m, req.h, d, data), labels))
}

pub fn regime_mixture_sample(
    req: &SamplerRequest,
    params: &RegimeMixtureParams,
) -> Result<TrajectoryBatch, SamplerError> {
    sample_labeled(req, params).map(|(batch, _)| batch)
}

#[derive(Clone, Debug)]
pub struct RegimeMixtureSampler {
    params: RegimeMixtureParams,
}

impl RegimeMixtureSampler {
    pub fn new(params: RegimeMixtureParams) -> Result<Self, SamplerError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &RegimeMixtureParams {
        &self.params
    }

    /// Like [`TrajectorySampler::sample`] but also reports which regime each
    /// sample was drawn from.
    pub fn sample_labeled(&self, req: &SamplerRequest) -> Result<(TrajectoryBatch, Vec<usize>), SamplerError> {
        sample_labeled(req, &self.params)
    }
}

impl TrajectorySampler for RegimeMixtureSampler {
    fn name(&self) -> &str {
        "regime_mixture"
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        regime_mixture_sample(req, &self.params)
    }
}
