//! Matérn-3/2 kernel with per-input signal scales, and its joint
//! value/gradient covariance block.

use nalgebra::{Matrix4, Vector3, Vector4};

use crate::error::{invalid, Result};

const SQRT3: f64 = 1.7320508075688772;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub length_scale: f64,
    pub value_noise: f64,
    pub gradient_noise: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_scale: 0.3,
            value_noise: 0.01,
            gradient_noise: 0.1,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_scale", self.length_scale),
            ("value_noise", self.value_noise),
            ("gradient_noise", self.gradient_noise),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(alloc::format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// `σ σ' (1 + √3 r/ℓ) exp(-√3 r/ℓ)` with `r = |x - x'|`.
pub fn matern32(x: &Vector3<f64>, xp: &Vector3<f64>, sigma: f64, sigma_p: f64, length_scale: f64) -> f64 {
    let a = SQRT3 * (x - xp).norm() / length_scale;
    sigma * sigma_p * (1.0 + a) * libm::exp(-a)
}

/// Covariance between `[f(x), ∇f(x)]` and `[f(x'), ∇f(x')]`.
///
/// Rows index `(value, ∂x, ∂y, ∂z)` at `x`, columns the same at `x'`. The
/// signal scales are treated as constants under differentiation.
pub fn joint_kernel_block(
    x: &Vector3<f64>,
    xp: &Vector3<f64>,
    sigma: f64,
    sigma_p: f64,
    length_scale: f64,
) -> Matrix4<f64> {
    let s = sigma * sigma_p;
    let delta = x - xp;
    let r = delta.norm();
    let a = SQRT3 / length_scale;
    let e = libm::exp(-a * r);
    let c = s * a * a * e;

    let mut out = Matrix4::zeros();
    out[(0, 0)] = s * (1.0 + a * r) * e;
    for d in 0..3 {
        // ∂k/∂x'_d and ∂k/∂x_d
        out[(0, d + 1)] = c * delta[d];
        out[(d + 1, 0)] = -c * delta[d];
    }
    if r > 0.0 {
        let ar = a / r;
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                out[(i + 1, j + 1)] = c * (id - ar * delta[i] * delta[j]);
            }
        }
    } else {
        for i in 1..4 {
            out[(i, i)] = c;
        }
    }
    out
}

/// First row of [`joint_kernel_block`]: covariance of `f(x)` with
/// `[f(x'), ∇f(x')]`.
pub fn value_row(x: &Vector3<f64>, xp: &Vector3<f64>, sigma: f64, sigma_p: f64, length_scale: f64) -> Vector4<f64> {
    let s = sigma * sigma_p;
    let delta = x - xp;
    let r = delta.norm();
    let a = SQRT3 / length_scale;
    let e = libm::exp(-a * r);
    let c = s * a * a * e;
    Vector4::new(s * (1.0 + a * r) * e, c * delta.x, c * delta.y, c * delta.z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_values() {
        let x = Vector3::new(0.3, -0.2, 1.0);
        assert!((matern32(&x, &x, 0.7, 0.7, 0.3) - 0.49).abs() < 1e-15);
        let y = x + Vector3::new(0.0, 0.3, 0.0);
        let expect = (1.0 + SQRT3) * libm::exp(-SQRT3);
        assert!((matern32(&x, &y, 1.0, 1.0, 0.3) - expect).abs() < 1e-12);
        assert!((expect - 0.48335).abs() < 1e-5);
        let far = x + Vector3::new(30.0, 0.0, 0.0);
        assert!(matern32(&x, &far, 1.0, 1.0, 0.3) < 1e-70);
    }

    #[test]
    fn block_at_coincident_points() {
        let x = Vector3::new(1.0, 2.0, 3.0);
        let (sigma, l) = (0.4, 0.25);
        let b = joint_kernel_block(&x, &x, sigma, sigma, l);
        let mut expect = Matrix4::zeros();
        expect[(0, 0)] = sigma * sigma;
        for i in 1..4 {
            expect[(i, i)] = 3.0 * sigma * sigma / (l * l);
        }
        assert!((b - expect).amax() < 1e-14);
    }

    #[test]
    fn swapping_points_transposes() {
        let x = Vector3::new(0.1, 0.2, 0.3);
        let y = Vector3::new(-0.2, 0.25, 0.1);
        let a = joint_kernel_block(&x, &y, 0.5, 0.8, 0.3);
        let b = joint_kernel_block(&y, &x, 0.8, 0.5, 0.3);
        assert!((a - b.transpose()).amax() < 1e-15);
        let row = value_row(&x, &y, 0.5, 0.8, 0.3);
        assert_eq!(row.transpose(), a.row(0).into_owned());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(KernelParams::default().validate().is_ok());
        let bad = KernelParams {
            length_scale: 0.0,
            ..KernelParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
