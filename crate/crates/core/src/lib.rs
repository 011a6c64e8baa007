//! Continuous signed distance field mapping from surface point clouds.
//!
//! A 4D hierarchical Gaussian mixture over `(x, y, z, distance)` supplies a
//! prior distance field with per-query variance through Gaussian mixture
//! regression. A block-partitioned, non-stationary Gaussian process that also
//! observes surface normals as distance gradients then refines the prior where
//! the mixture does not explain the measurements.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, wall-clock
//! timing and the command-line tool live in the `gpgmm` companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod field;
pub mod geometry;
pub mod gmr;
pub mod gp;
pub mod hgmm;
pub mod kernel;
pub mod linalg;
pub mod normals;
pub mod pipeline;
pub mod spatial;
pub mod surface;

mod mc_tables;

pub use error::{Error, Result};
pub use geometry::{Aabb, OrientedPointCloud, ShapeSpec};
pub use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

/// Mean and variance of a distance query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Whether a model produces signed or unsigned (Euclidean) distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldType {
    Sdf,
    Edf,
}

impl FieldType {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldType::Sdf => "sdf",
            FieldType::Edf => "edf",
        }
    }
}

/// Anything that can be queried for a distance and its variance.
pub trait DistanceField {
    fn predict(&self, x: &Vector3<f64>) -> Result<Prediction>;

    /// The mean alone; models override this when it is cheaper than the
    /// full prediction.
    fn predict_mean(&self, x: &Vector3<f64>) -> Result<f64> {
        Ok(self.predict(x)?.mean)
    }

    fn field_type(&self) -> FieldType {
        FieldType::Sdf
    }
}

impl<T: DistanceField + ?Sized> DistanceField for &T {
    fn predict(&self, x: &Vector3<f64>) -> Result<Prediction> {
        (**self).predict(x)
    }

    fn predict_mean(&self, x: &Vector3<f64>) -> Result<f64> {
        (**self).predict_mean(x)
    }

    fn field_type(&self) -> FieldType {
        (**self).field_type()
    }
}
