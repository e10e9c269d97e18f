//! Fundamental solution of the 3D Laplacian and its normal derivative.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::Point;

const FOUR_PI_INV: f64 = 1.0 / (4.0 * PI);

/// `G(x, y) = 1 / (4 pi |x - y|)`.
pub fn greens_kernel(x: &Point, y: &Point) -> Result<f64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(FOUR_PI_INV / r)
}

/// `d G(x, y) / d n_y = (x - y) . n_y / (4 pi |x - y|^3)`.
pub fn greens_normal_derivative(x: &Point, y: &Point, n_y: &Point) -> Result<f64> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(FOUR_PI_INV * d.dot(n_y) / (r * r * r))
}

/// Both kernels at once, no coincidence check.
#[inline]
pub(crate) fn kernels_unchecked(x: &Point, y: &Point, n_y: &Point) -> (f64, f64) {
    let d = x - y;
    let r2 = d.norm_squared();
    let inv_r = 1.0 / r2.sqrt();
    (FOUR_PI_INV * inv_r, FOUR_PI_INV * d.dot(n_y) * inv_r * inv_r * inv_r)
}
