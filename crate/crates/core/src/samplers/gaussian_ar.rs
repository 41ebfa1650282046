use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SamplerError, SamplerRequest, TrajectoryBatch, TrajectorySampler};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

/// First-order vector autoregression `x_{t+1} = c + A x_t + ε_t`,
/// `ε_t ~ N(0, diag(σ²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianArParams {
    /// D×D transition matrix A.
    pub transition: Matrix,
    pub intercept: Vec<f64>,
    pub noise_scale: Vec<f64>,
}

impl GaussianArParams {
    pub fn new(transition: Matrix, intercept: Vec<f64>, noise_scale: Vec<f64>) -> Result<Self, SamplerError> {
        let params = Self {
            transition,
            intercept,
            noise_scale,
        };
        params.validate()?;
        Ok(params)
    }

    /// Scalar AR(1) with coefficient `a`.
    pub fn univariate(a: f64, intercept: f64, noise_scale: f64) -> Result<Self, SamplerError> {
        Self::new(Matrix::from_vec(1, 1, vec![a]), vec![intercept], vec![noise_scale])
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    /// Largest eigenvalue modulus of the transition matrix.
    pub fn spectral_radius(&self) -> f64 {
        let d = self.dim();
        let a = DMatrix::from_row_slice(d, d, self.transition.as_slice());
        a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Stationary mean `(I - A)^{-1} c`.
    pub fn stationary_mean(&self) -> Vec<f64> {
        let d = self.dim();
        let a = DMatrix::from_row_slice(d, d, self.transition.as_slice());
        let lhs = DMatrix::identity(d, d) - a;
        let c = DVector::from_column_slice(&self.intercept);
        lhs.lu()
            .solve(&c)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|| vec![f64::NAN; d])
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let d = self.dim();
        if d == 0 {
            return Err(SamplerError::InvalidInput("AR dimension must be positive".into()));
        }
        if self.transition.rows() != d || self.transition.cols() != d || self.noise_scale.len() != d {
            return Err(SamplerError::InvalidInput(format!(
                "AR parameter shapes disagree: transition {}x{}, intercept {d}, noise {}",
                self.transition.rows(),
                self.transition.cols(),
                self.noise_scale.len()
            )));
        }
        let finite = self.transition.is_finite()
            && self.intercept.iter().all(|v| v.is_finite())
            && self.noise_scale.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SamplerError::InvalidInput("AR parameters must be finite".into()));
        }
        if self.noise_scale.iter().any(|&s| s < 0.0) {
            return Err(SamplerError::InvalidInput("AR noise scale must be non-negative".into()));
        }
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return Err(SamplerError::InvalidInput(format!(
                "AR transition is not stationary (spectral radius {rho})"
            )));
        }
        Ok(())
    }

    /// Least-squares fit of a VAR(1) to a T×D series (T ≥ D + 2).
    pub fn fit(series: &Matrix) -> Result<Self, SamplerError> {
        let d = series.cols();
        let t = series.rows();
        if d == 0 || t < d + 2 {
            return Err(SamplerError::InvalidInput(format!(
                "need at least {} rows to fit a {d}-dimensional AR model, got {t}",
                d + 2
            )));
        }
        let n = t - 1;
        let mut x = DMatrix::zeros(n, d + 1);
        let mut y = DMatrix::zeros(n, d);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for k in 0..d {
                x[(i, k + 1)] = series.get(i, k);
                y[(i, k)] = series.get(i + 1, k);
            }
        }
        let beta = x
            .clone()
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| SamplerError::InvalidInput(format!("AR fit failed: {e}")))?;
        let resid = &y - &x * &beta;
        let mut transition = Matrix::zeros(d, d);
        let mut intercept = vec![0.0; d];
        let mut noise_scale = vec![0.0; d];
        for k in 0..d {
            intercept[k] = beta[(0, k)];
            for l in 0..d {
                transition.set(k, l, beta[(l + 1, k)]);
            }
            let ss: f64 = resid.column(k).iter().map(|r| r * r).sum();
            noise_scale[k] = (ss / (n.saturating_sub(d + 1).max(1)) as f64).sqrt();
        }
        Self::new(transition, intercept, noise_scale)
    }
}

/// Rolls the AR recursion forward from the last history row.
pub fn gaussian_ar_sample(req: &SamplerRequest, params: &GaussianArParams) -> Result<TrajectoryBatch, SamplerError> {
    params.validate()?;
    let d = params.dim();
    req.validate(d, 1)?;
    let start = req.history.last_row().expect("validated non-empty history");
    let mut rng = rng_from_seed(req.seed);
    let a = params.transition.as_slice();
    let mut data = Vec::with_capacity(req.m * req.h * d);
    let mut x = vec![0.0; d];
    let mut next = vec![0.0; d];
    for _ in 0..req.m {
        x.copy_from_slice(start);
        for _ in 0..req.h {
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                let ax: f64 = (0..d).map(|l| a[k * d + l] * x[l]).sum();
                next[k] = params.intercept[k] + ax + params.noise_scale[k] * z;
            }
            x.copy_from_slice(&next);
            data.extend_from_slice(&x);
        }
    }
    Ok(TrajectoryBatch::from_vec(req.m, req.h, d, data))
}

/// [`TrajectorySampler`] wrapper over [`gaussian_ar_sample`]. Parameters are
/// validated (including stationarity) at construction.
#[derive(Clone, Debug)]
pub struct GaussianArSampler {
    params: GaussianArParams,
}

impl GaussianArSampler {
    pub fn new(params: GaussianArParams) -> Result<Self, SamplerError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &GaussianArParams {
        &self.params
    }
}

impl TrajectorySampler for GaussianArSampler {
    fn name(&self) -> &str {
        "gaussian_ar"
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn sample(&self, req: &SamplerRequest) -> Result<TrajectoryBatch, SamplerError> {
        gaussian_ar_sample(req, &self.params)
    }
}
