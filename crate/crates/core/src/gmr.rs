//! Gaussian mixture regression of signed distance from the HGMM leaves.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::hgmm::{Gaussian4, HgmmModel};
use crate::{DistanceField, Prediction};

pub const DEFAULT_ACTIVE: usize = 8;
pub const DEFAULT_GRADIENT_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmrPrediction {
    pub mean: f64,
    pub variance: f64,
    /// Set when every active component had a non-finite log density and the
    /// weights fell back to uniform.
    pub uniform_fallback: bool,
}

/// Distance mean and variance of one component conditioned on position.
pub fn conditional(component: &Gaussian4, x: &Vector3<f64>) -> Result<(f64, f64)> {
    let lyy = component.precision[(3, 3)];
    if !(lyy > 0.0) || !lyy.is_finite() {
        return Err(Error::ModelCorruption(alloc::format!(
            "distance precision {lyy} is not positive"
        )));
    }
    let d = x - component.spatial_mean();
    let lyx_d =
        component.precision[(3, 0)] * d.x + component.precision[(3, 1)] * d.y + component.precision[(3, 2)] * d.z;
    Ok((component.mean[3] - lyx_d / lyy, 1.0 / lyy))
}

/// Analytic spatial gradient of a single component's conditional mean.
pub fn conditional_gradient(component: &Gaussian4) -> Vector3<f64> {
    let lyy = component.precision[(3, 3)];
    -Vector3::new(
        component.precision[(3, 0)],
        component.precision[(3, 1)],
        component.precision[(3, 2)],
    ) / lyy
}

fn active_scores(model: &HgmmModel, x: &Vector3<f64>) -> Vec<f64> {
    model
        .leaves
        .iter()
        .map(|c| libm::log(c.weight) + c.spatial_log_density(x))
        .collect()
}

/// Indices of the `min(j, #leaves)` leaves with largest weighted spatial
/// density at `x`, ties broken by lower index.
pub fn select_active(model: &HgmmModel, x: &Vector3<f64>, j: usize) -> Vec<usize> {
    let scores = active_scores(model, x);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let take = j.max(1).min(order.len());
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if take < order.len() {
        order.select_nth_unstable_by(take - 1, cmp);
        order.truncate(take);
    }
    order.sort_unstable_by(cmp);
    order
}

/// Regression over a fixed set of active leaves.
pub fn regress_with_active(model: &HgmmModel, x: &Vector3<f64>, active: &[usize]) -> Result<GmrPrediction> {
    if active.is_empty() {
        return Err(Error::EmptyInput("no active components".into()));
    }
    let mut log_w = Vec::with_capacity(active.len());
    let mut max = f64::NEG_INFINITY;
    for &j in active {
        let c = &model.leaves[j];
        let s = libm::log(c.weight) + c.spatial_log_density(x);
        max = if s > max { s } else { max };
        log_w.push(s);
    }
    let uniform_fallback = !max.is_finite();
    let weights: Vec<f64> = if uniform_fallback {
        alloc::vec![1.0 / active.len() as f64; active.len()]
    } else {
        let raw: Vec<f64> = log_w.iter().map(|s| libm::exp(s - max)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    };

    let mut mean = 0.0;
    let mut second = 0.0;
    for (w, &j) in weights.iter().zip(active) {
        let (mu, var) = conditional(&model.leaves[j], x)?;
        mean += w * mu;
        second += w * (var + mu * mu);
    }
    let variance = second - mean * mean;
    debug_assert!(variance >= -1e-12 * second.abs().max(1.0));
    Ok(GmrPrediction {
        mean,
        variance: variance.max(0.0),
        uniform_fallback,
    })
}

/// Mixture-of-conditionals distance prediction from the `j` active leaves.
pub fn regress(model: &HgmmModel, x: &Vector3<f64>, j: usize) -> Result<GmrPrediction> {
    if model.leaves.is_empty() {
        return Err(Error::EmptyInput("model has no components".into()));
    }
    let active = select_active(model, x, j);
    regress_with_active(model, x, &active)
}

/// Central-difference gradient of the regression mean with the active set
/// frozen at `x`.
pub fn regress_gradient(model: &HgmmModel, x: &Vector3<f64>, j: usize, h: f64) -> Result<Vector3<f64>> {
    if !(h > 0.0) {
        return Err(crate::error::invalid("finite difference step must be positive"));
    }
    if model.leaves.is_empty() {
        return Err(Error::EmptyInput("model has no components".into()));
    }
    let active = select_active(model, x, j);
    gradient_with_active(model, x, &active, h)
}

pub(crate) fn gradient_with_active(
    model: &HgmmModel,
    x: &Vector3<f64>,
    active: &[usize],
    h: f64,
) -> Result<Vector3<f64>> {
    let mut g = Vector3::zeros();
    for axis in 0..3 {
        let mut e = Vector3::zeros();
        e[axis] = h;
        let up = regress_with_active(model, &(x + e), active)?.mean;
        let down = regress_with_active(model, &(x - e), active)?.mean;
        g[axis] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// Prior quantities the GP needs at one location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorSample {
    pub mean: f64,
    pub variance: f64,
    pub gradient: Vector3<f64>,
}

/// Mean, variance and frozen-active-set gradient in one pass.
pub fn prior_sample(model: &HgmmModel, x: &Vector3<f64>, j: usize, h: f64) -> Result<PriorSample> {
    let active = select_active(model, x, j);
    let p = regress_with_active(model, x, &active)?;
    Ok(PriorSample {
        mean: p.mean,
        variance: p.variance,
        gradient: gradient_with_active(model, x, &active, h)?,
    })
}

/// The mixture used on its own as a distance field.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmField {
    pub model: HgmmModel,
    pub active: usize,
}

impl DistanceField for GmmField {
    fn predict(&self, x: &Vector3<f64>) -> Result<Prediction> {
        let p = regress(&self.model, x, self.active)?;
        Ok(Prediction {
            mean: p.mean,
            variance: p.variance,
        })
    }
}
