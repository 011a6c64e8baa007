//! Stationary reference maps: GPIS with a fixed prior mean and unit prior
//! variance, and Log-GPIS, which regresses a heat value `v = exp(-d·√3/ℓ)`
//! and inverts it to an unsigned distance.

use alloc::vec;

use nalgebra::Vector3;

use crate::error::{invalid, Result};
use crate::geometry::OrientedPointCloud;
use crate::gp::{GpTraining, JointGp};
use crate::kernel::KernelParams;
use crate::{DistanceField, FieldType, Prediction};

const SQRT3: f64 = 1.7320508075688772;

pub const GPIS_PRIOR_MEAN: f64 = 0.2;
pub const GPIS_PRIOR_VARIANCE: f64 = 1.0;
pub const HEAT_FLOOR: f64 = 1e-12;
pub const DEFAULT_MAX_DISTANCE: f64 = 2.0;

pub fn default_gpis_params() -> KernelParams {
    KernelParams::default()
}

pub fn default_loggpis_params() -> KernelParams {
    KernelParams {
        length_scale: 0.1,
        ..KernelParams::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Gpis,
    LogGpis,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Gpis => "gpis",
            BaselineKind::LogGpis => "loggpis",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub gp: JointGp,
    /// Constant prior mean (0 for Log-GPIS).
    pub prior_mean: f64,
    /// Constant prior standard deviation.
    pub prior_scale: f64,
    /// Distance clamp for the log transform.
    pub max_distance: f64,
}

/// GPIS with the default prior (mean 0.2 m, variance 1).
pub fn gpis_fit(cloud: &OrientedPointCloud, params: &KernelParams) -> Result<BaselineModel> {
    gpis_fit_with_prior(cloud, params, GPIS_PRIOR_MEAN, GPIS_PRIOR_VARIANCE)
}

pub fn gpis_fit_with_prior(
    cloud: &OrientedPointCloud,
    params: &KernelParams,
    prior_mean: f64,
    prior_variance: f64,
) -> Result<BaselineModel> {
    if !(prior_variance > 0.0) {
        return Err(invalid("prior variance must be positive"));
    }
    let normals = cloud.unit_normals()?;
    let n = cloud.len();
    let scale = libm::sqrt(prior_variance);
    let training = GpTraining {
        points: cloud.points.clone(),
        values: vec![0.0; n],
        gradients: Some(normals),
        prior_means: vec![prior_mean; n],
        prior_gradients: vec![Vector3::zeros(); n],
        prior_scales: vec![scale; n],
    };
    Ok(BaselineModel {
        kind: BaselineKind::Gpis,
        gp: JointGp::fit(training, *params)?,
        prior_mean,
        prior_scale: scale,
        max_distance: f64::INFINITY,
    })
}

/// Log-GPIS: value-only GP with zero prior mean and heat targets of one at
/// every hit. Normals are not needed.
pub fn loggpis_fit(cloud: &OrientedPointCloud, params: &KernelParams, max_distance: f64) -> Result<BaselineModel> {
    if !(max_distance > 0.0) {
        return Err(invalid("maximum distance must be positive"));
    }
    let n = cloud.len();
    let training = GpTraining {
        points: cloud.points.clone(),
        values: vec![1.0; n],
        gradients: None,
        prior_means: vec![0.0; n],
        prior_gradients: vec![],
        prior_scales: vec![1.0; n],
    };
    Ok(BaselineModel {
        kind: BaselineKind::LogGpis,
        gp: JointGp::fit(training, *params)?,
        prior_mean: 0.0,
        prior_scale: 1.0,
        max_distance,
    })
}

/// `-(ℓ/√3) ln v` clamped to `[0, max_distance]`. Heat at or below the floor
/// means no surface evidence and maps straight to `max_distance`.
pub fn loggpis_distance(v: f64, length_scale: f64, max_distance: f64) -> f64 {
    if !(v > HEAT_FLOOR) {
        return max_distance;
    }
    (-(length_scale / SQRT3) * libm::log(v)).clamp(0.0, max_distance)
}

/// First-order propagation of the heat variance through the log transform.
pub fn loggpis_variance(heat_variance: f64, v: f64, length_scale: f64) -> f64 {
    let v = v.max(HEAT_FLOOR);
    let g = length_scale / (SQRT3 * v);
    g * g * heat_variance
}

impl BaselineModel {
    /// Raw GP output: the distance field for GPIS, the heat value for Log-GPIS.
    pub fn predict_latent(&self, x: &Vector3<f64>) -> Prediction {
        self.gp.predict(x, self.prior_mean, self.prior_scale)
    }
}

impl DistanceField for BaselineModel {
    fn predict_mean(&self, x: &Vector3<f64>) -> Result<f64> {
        let v = self.gp.predict_mean(x, self.prior_mean, self.prior_scale);
        Ok(match self.kind {
            BaselineKind::Gpis => v,
            BaselineKind::LogGpis => loggpis_distance(v, self.gp.params.length_scale, self.max_distance),
        })
    }

    fn predict(&self, x: &Vector3<f64>) -> Result<Prediction> {
        let latent = self.predict_latent(x);
        Ok(match self.kind {
            BaselineKind::Gpis => latent,
            BaselineKind::LogGpis => {
                let ell = self.gp.params.length_scale;
                Prediction {
                    mean: loggpis_distance(latent.mean, ell, self.max_distance),
                    variance: loggpis_variance(latent.variance, latent.mean, ell),
                }
            }
        })
    }

    fn field_type(&self) -> FieldType {
        match self.kind {
            BaselineKind::Gpis => FieldType::Sdf,
            BaselineKind::LogGpis => FieldType::Edf,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_transform_examples() {
        assert_eq!(loggpis_distance(1.0, 0.1, 2.0), 0.0);
        assert!((loggpis_distance(libm::exp(-SQRT3), 1.0, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(loggpis_distance(0.0, 0.1, 2.0), 2.0);
        assert_eq!(loggpis_distance(-3.0, 0.1, 2.0), 2.0);
        assert_eq!(loggpis_distance(1.5, 0.1, 2.0), 0.0);
        assert_eq!(loggpis_distance(f64::NAN, 0.1, 2.0), 2.0);
        assert_eq!(loggpis_distance(1e-6, 10.0, 2.0), 2.0);
    }

    #[test]
    fn delta_method_examples() {
        assert!((loggpis_variance(0.01, 1.0, SQRT3) - 0.01).abs() < 1e-15);
        assert_eq!(loggpis_variance(0.0, 0.3, 0.1), 0.0);
        assert!(loggpis_variance(0.01, 0.2, 0.1) > loggpis_variance(0.01, 0.4, 0.1));
    }

    fn square_cloud() -> OrientedPointCloud {
        let mut pts = alloc::vec::Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                pts.push(Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        let n = pts.len();
        OrientedPointCloud::with_normals(pts, vec![Vector3::z(); n]).unwrap()
    }

    #[test]
    fn gpis_far_field_returns_to_prior() {
        let params = default_gpis_params();
        let m = gpis_fit(&square_cloud(), &params).unwrap();
        let p = m.predict(&Vector3::new(0.0, 0.0, 30.0 * params.length_scale)).unwrap();
        assert!((p.mean - 0.2).abs() < 1e-9);
        assert!((p.variance - (1.0 + 1e-4)).abs() < 1e-9);
    }

    #[test]
    fn gpis_interpolates_surface() {
        let params = KernelParams {
            value_noise: 1e-4,
            ..default_gpis_params()
        };
        let m = gpis_fit(&square_cloud(), &params).unwrap();
        let p = m.predict(&Vector3::new(0.1, 0.2, 0.0)).unwrap();
        assert!(p.mean.abs() <= 1e-3, "{}", p.mean);
    }

    #[test]
    fn loggpis_near_and_far() {
        let params = KernelParams {
            value_noise: 1e-3,
            ..default_loggpis_params()
        };
        let m = loggpis_fit(&square_cloud(), &params, 2.0).unwrap();
        assert_eq!(m.field_type(), FieldType::Edf);
        let near = m.predict(&Vector3::new(0.1, 0.1, 0.0)).unwrap();
        assert!(near.mean < 0.01, "{}", near.mean);
        let far = m.predict(&Vector3::new(0.0, 0.0, 20.0)).unwrap();
        assert_eq!(far.mean, 2.0);
    }

    #[test]
    fn gpis_requires_normals() {
        let cloud = OrientedPointCloud::new(vec![Vector3::zeros()]);
        assert!(gpis_fit(&cloud, &default_gpis_params()).is_err());
        assert!(loggpis_fit(&cloud, &default_loggpis_params(), 2.0).is_ok());
    }
}
