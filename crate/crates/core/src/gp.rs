//! Exact GP regression over value (and optionally gradient) observations with
//! per-point prior means and signal scales.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::kernel::{joint_kernel_block, matern32, value_row, KernelParams};
use crate::linalg::{Cholesky, PackedSym};
use crate::Prediction;

/// Observations and prior terms at the training inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GpTraining {
    pub points: Vec<Vector3<f64>>,
    pub values: Vec<f64>,
    /// Gradient targets; `None` for a value-only GP.
    pub gradients: Option<Vec<Vector3<f64>>>,
    pub prior_means: Vec<f64>,
    pub prior_gradients: Vec<Vector3<f64>>,
    pub prior_scales: Vec<f64>,
}

impl GpTraining {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rows_per_point(&self) -> usize {
        if self.gradients.is_some() {
            4
        } else {
            1
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.points.len();
        let ok = self.values.len() == n
            && self.prior_means.len() == n
            && self.prior_scales.len() == n
            && self
                .gradients
                .as_ref()
                .map_or(true, |g| g.len() == n && self.prior_gradients.len() == n);
        if !ok {
            return Err(invalid("training arrays differ in length"));
        }
        if self.prior_scales.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("prior scales must be non-negative"));
        }
        Ok(())
    }

    /// Stacked residual `[y_i - m_i, g_i - ∇m_i]` in row order.
    pub fn residual(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.len() * self.rows_per_point());
        for i in 0..self.len() {
            r.push(self.values[i] - self.prior_means[i]);
            if let Some(g) = &self.gradients {
                let d = g[i] - self.prior_gradients[i];
                r.extend_from_slice(&[d.x, d.y, d.z]);
            }
        }
        r
    }

    /// Gram matrix of the joint prior plus the noise diagonal.
    pub fn gram(&self, params: &KernelParams) -> PackedSym {
        let n = self.len();
        let ell = params.length_scale;
        let value_noise = params.value_noise * params.value_noise;
        let grad_noise = params.gradient_noise * params.gradient_noise;
        if self.gradients.is_none() {
            let mut k = PackedSym::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    let v = matern32(
                        &self.points[i],
                        &self.points[j],
                        self.prior_scales[i],
                        self.prior_scales[j],
                        ell,
                    );
                    k.set(i, j, v + if i == j { value_noise } else { 0.0 });
                }
            }
            return k;
        }
        let mut k = PackedSym::zeros(4 * n);
        for i in 0..n {
            for j in 0..=i {
                let b = joint_kernel_block(
                    &self.points[i],
                    &self.points[j],
                    self.prior_scales[i],
                    self.prior_scales[j],
                    ell,
                );
                for a in 0..4 {
                    let col_end = if i == j { a + 1 } else { 4 };
                    for c in 0..col_end {
                        k.set(4 * i + a, 4 * j + c, b[(a, c)]);
                    }
                }
            }
            k.set(4 * i, 4 * i, k.get(4 * i, 4 * i) + value_noise);
            for a in 1..4 {
                k.set(4 * i + a, 4 * i + a, k.get(4 * i + a, 4 * i + a) + grad_noise);
            }
        }
        k
    }
}

/// A fitted GP: the factorized Gram matrix and the solved weights.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGp {
    pub training: GpTraining,
    pub params: KernelParams,
    pub chol: Cholesky,
    pub alpha: Vec<f64>,
}

impl JointGp {
    pub fn fit(training: GpTraining, params: KernelParams) -> Result<Self> {
        params.validate()?;
        training.validate()?;
        if training.is_empty() {
            return Err(crate::Error::EmptyInput("GP has no training points".into()));
        }
        let chol = Cholesky::with_jitter(&training.gram(&params))?;
        let alpha = chol.solve(&training.residual());
        Ok(Self {
            training,
            params,
            chol,
            alpha,
        })
    }

    /// Covariance between the value at `x` and every training row.
    pub fn cross_covariance(&self, x: &Vector3<f64>, scale: f64) -> Vec<f64> {
        let t = &self.training;
        let ell = self.params.length_scale;
        if t.gradients.is_some() {
            let mut k = Vec::with_capacity(4 * t.len());
            for (p, s) in t.points.iter().zip(&t.prior_scales) {
                k.extend_from_slice(value_row(x, p, scale, *s, ell).as_slice());
            }
            k
        } else {
            t.points
                .iter()
                .zip(&t.prior_scales)
                .map(|(p, s)| matern32(x, p, scale, *s, ell))
                .collect()
        }
    }

    /// Posterior mean only, given the prior mean and scale at `x`.
    pub fn predict_mean(&self, x: &Vector3<f64>, prior_mean: f64, prior_scale: f64) -> f64 {
        let k = self.cross_covariance(x, prior_scale);
        prior_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Posterior mean and noisy predictive variance
    /// `σ(x)² - k*ᵀ (K + N)⁻¹ k* + σ_η²`.
    pub fn predict(&self, x: &Vector3<f64>, prior_mean: f64, prior_scale: f64) -> Prediction {
        let k = self.cross_covariance(x, prior_scale);
        let mean = prior_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let explained = self.chol.inv_quad(&k);
        let latent = (prior_scale * prior_scale - explained).max(0.0);
        Prediction {
            mean,
            variance: latent + self.params.value_noise * self.params.value_noise,
        }
    }
}
