use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

/// A periodic price process with a latent regime per cycle.
///
/// Time is cut into cycles of `profiles[r].rows()` hours. At the start of each
/// cycle a regime `r` is drawn with probability `weights[r]`; within the cycle
/// prices follow `profiles[r]` plus independent Gaussian noise. Regimes may
/// share a prefix, in which case the regime only becomes observable once the
/// profiles diverge.
///
/// The sampler is an exact conditional sampler for this process: the regime of
/// a partly observed cycle is drawn from its posterior given the history, and
/// hour `T` of the series (counted from `origin`) is identified with a history
/// of `T` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicRegimeParams {
    pub weights: Vec<f64>,
    /// One cycle-long mean path (L×D) per regime.
    pub profiles: Vec<Matrix>,
    pub noise_scale: f64,
    #[serde(default)]
    pub origin: usize,
}

impl CyclicRegimeParams {
    pub fn cycle_len(&self) -> usize {
        self.profiles.first().map_or(0, Matrix::rows)
    }

    pub fn dim(&self) -> usize {
        self.profiles.first().map_or(0, Matrix::cols)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |msg: &str| Err(SamplerError::InvalidInput(msg.to_string()));
        if self.weights.is_empty() || self.weights.len() != self.profiles.len() {
            return bad("need one profile per regime weight");
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("regime weights must be positive and sum to 1");
        }
        let (l, d) = (self.cycle_len(), self.dim());
        if l == 0 || d == 0 {
            return bad("profiles must be non-empty");
        }
        if self
            .profiles
            .iter()
            .any(|p| p.rows() != l || p.cols() != d || !p.is_finite())
        {
            return bad("profiles must be finite and share one shape");
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return bad("noise scale must be finite and non-negative");
        }
        Ok(())
    }

    /// Posterior regime probabilities for the cycle containing hour `t`, given
    /// the first `t` rows of `history`.
    pub fn regime_posterior(&self, history: &Matrix, t: usize) -> Vec<f64> {
        let l = self.cycle_len() as i64;
        let offset = (t as i64 - self.origin as i64).rem_euclid(l) as usize;
        let observed_from = t.saturating_sub(offset);
        let rows = observed_from..t.min(history.rows());
        if rows.is_empty() {
            return self.weights.clone();
        }
        let cycle_start = t as i64 - offset as i64;
        let loglik: Vec<f64> = self
            .profiles
            .iter()
            .map(|profile| {
                rows.clone()
                    .map(|p| {
                        let o = (p as i64 - cycle_start) as usize;
                        history
                            .row(p)
                            .iter()
                            .zip(profile.row(o))
                            .map(|(x, mu)| (x - mu).powi(2))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .collect();
        let mut post: Vec<f64> = if self.noise_scale > 0.0 {
            let ll: Vec<f64> = loglik
                .iter()
                .map(|ss| -ss / (2.0 * self.noise_scale * self.noise_scale))
                .collect();
            let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            self.weights.iter().zip(&ll).map(|(w, l)| w * (l - max).exp()).collect()
        } else {
            self.weights
                .iter()
                .zip(&loglik)
                .map(|(&w, &ss)| if ss <= 1e-18 { w } else { 0.0 })
                .collect()
        };
        let total: f64 = post.iter().sum();
        if !(total > 0.0) {
            return self.weights.clone();
        }
        post.iter_mut().for_each(|p| *p /= total);
        post
    }
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Clone, Debug)]
pub struct CyclicRegimeSampler {
    params: CyclicRegimeParams,
}

impl CyclicRegimeSampler {
    pub fn new(params: CyclicRegimeParams) -> Result<Self, SamplerError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &CyclicRegimeParams {
        &self.params
    }

    /// A realised series of `hours` rows starting at hour 0.
    pub fn generate(&self, hours: usize, seed: u64) -> Result<Matrix, SamplerError> {
        let req = SamplerRequest::new(Matrix::zeros(0, self.params.dim()), 1, hours, seed);
        Ok(self.sample(&req)?.sample_matrix(0))
    }
}

impl TrajectorySampler for CyclicRegimeSampler {
    fn name(&self) -> &str {
        "cyclic_regime"
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn min_context(&self) -> usize {
        0
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        let p = &self.params;
        let d = p.dim();
        req.validate(d, 0)?;
        let t0 = req.history.rows();
        let l = p.cycle_len() as i64;
        let posterior = p.regime_posterior(&req.history, t0);
        let cycle_of = |t: usize| (t as i64 - p.origin as i64).div_euclid(l);
        let offset_of = |t: usize| (t as i64 - p.origin as i64).rem_euclid(l) as usize;
        let mut rng = rng_from_seed(req.seed);
        let mut data = Vec::with_capacity(req.m * req.h * d);
        for _ in 0..req.m {
            let mut cycle = cycle_of(t0);
            let mut regime = draw(&posterior, &mut rng);
            for t in t0..t0 + req.h {
                if cycle_of(t) != cycle {
                    cycle = cycle_of(t);
                    regime = draw(&p.weights, &mut rng);
                }
                let mean = p.profiles[regime].row(offset_of(t));
                for &mu in mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    data.push(mu + p.noise_scale * z);
                }
            }
        }
        Ok(TrajectoryBatch::from_vec(req.m, req.h, d, data))
    }
}
