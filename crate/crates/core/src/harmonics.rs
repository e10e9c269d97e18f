//! Real orthonormal spherical harmonics of degree 1..=4 written as homogeneous harmonic
//! polynomials, so that `Y_lm(w) = P_lm(w)` for unit `w`. Gradients come from forward-mode
//! dual numbers evaluated through the same polynomial code.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use nalgebra::Vector3;

/// Highest supported degree.
pub const MAX_DEGREE: usize = 4;

/// Number of harmonics with degree 1..=L.
pub const fn harmonic_count(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 1) - 1
}

/// `(l, m)` for each harmonic index, ordered by degree then order.
pub fn degree_order(index: usize) -> (usize, i32) {
    let mut l = 1;
    while (l + 1) * (l + 1) - 1 <= index {
        l += 1;
    }
    let m = index as i32 - (l * l - 1) as i32 - l as i32;
    (l, m)
}

/// Bound on `|Y_lm|` over the sphere from the addition theorem: `sqrt((2l+1)/(4 pi))`.
pub fn sup_bound(max_degree: usize) -> f64 {
    ((2 * max_degree + 1) as f64 / (4.0 * PI)).sqrt()
}

trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn c(v: f64) -> Self;
}

impl Scalar for f64 {
    fn c(v: f64) -> Self {
        v
    }
}

#[derive(Clone, Copy, Debug)]
struct Dual {
    v: f64,
    d: [f64; 3],
}

impl Scalar for Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: [0.0; 3] }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]] }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]] }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }
}

fn polynomials<T: Scalar>(x: T, y: T, z: T, max_degree: usize, out: &mut [T]) {
    let c = T::c;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let r2 = xx + yy + zz;

    let c1 = (3.0 / (4.0 * PI)).sqrt();
    out[0] = c(c1) * y;
    out[1] = c(c1) * z;
    out[2] = c(c1) * x;
    if max_degree < 2 {
        return;
    }

    let c2a = 0.5 * (15.0 / PI).sqrt();
    let c2b = 0.25 * (5.0 / PI).sqrt();
    let c2c = 0.25 * (15.0 / PI).sqrt();
    out[3] = c(c2a) * x * y;
    out[4] = c(c2a) * y * z;
    out[5] = c(c2b) * (c(2.0) * zz - xx - yy);
    out[6] = c(c2a) * x * z;
    out[7] = c(c2c) * (xx - yy);
    if max_degree < 3 {
        return;
    }

    let c3a = 0.25 * (35.0 / (2.0 * PI)).sqrt();
    let c3b = 0.5 * (105.0 / PI).sqrt();
    let c3c = 0.25 * (21.0 / (2.0 * PI)).sqrt();
    let c3d = 0.25 * (7.0 / PI).sqrt();
    let c3e = 0.25 * (105.0 / PI).sqrt();
    out[8] = c(c3a) * y * (c(3.0) * xx - yy);
    out[9] = c(c3b) * x * y * z;
    out[10] = c(c3c) * y * (c(4.0) * zz - xx - yy);
    out[11] = c(c3d) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy);
    out[12] = c(c3c) * x * (c(4.0) * zz - xx - yy);
    out[13] = c(c3e) * (xx - yy) * z;
    out[14] = c(c3a) * x * (xx - c(3.0) * yy);
    if max_degree < 4 {
        return;
    }

    let c4a = 0.75 * (35.0 / PI).sqrt();
    let c4b = 0.75 * (35.0 / (2.0 * PI)).sqrt();
    let c4c = 0.75 * (5.0 / PI).sqrt();
    let c4d = 0.75 * (5.0 / (2.0 * PI)).sqrt();
    let c4e = (3.0 / 16.0) * (1.0 / PI).sqrt();
    let c4f = (3.0 / 8.0) * (5.0 / PI).sqrt();
    let c4g = (3.0 / 16.0) * (35.0 / PI).sqrt();
    let seven_z2_minus_r2 = c(7.0) * zz - r2;
    let seven_z2_minus_3r2 = c(7.0) * zz - c(3.0) * r2;
    out[15] = c(c4a) * x * y * (xx - yy);
    out[16] = c(c4b) * y * z * (c(3.0) * xx - yy);
    out[17] = c(c4c) * x * y * seven_z2_minus_r2;
    out[18] = c(c4d) * y * z * seven_z2_minus_3r2;
    out[19] = c(c4e) * (c(35.0) * zz * zz - c(30.0) * zz * r2 + c(3.0) * r2 * r2);
    out[20] = c(c4d) * x * z * seven_z2_minus_3r2;
    out[21] = c(c4f) * (xx - yy) * seven_z2_minus_r2;
    out[22] = c(c4b) * x * z * (xx - c(3.0) * yy);
    out[23] = c(c4g) * (xx * (xx - c(3.0) * yy) - yy * (c(3.0) * xx - yy));
}

/// Values `Y_k(w)` for unit `w`, `k < harmonic_count(max_degree)`.
pub fn evaluate(w: &Vector3<f64>, max_degree: usize, out: &mut [f64]) {
    assert!((1..=MAX_DEGREE).contains(&max_degree));
    polynomials(w.x, w.y, w.z, max_degree, out);
}

/// Values `P_k(w)` and polynomial gradients `grad P_k(w)` at unit `w`.
///
/// For the direction map `w = p / |p|`, the gradient of `Y_k(p / |p|)` with respect to `p` is
/// `(grad P_k(w) - l P_k(w) w) / |p|`.
pub fn evaluate_with_gradient(
    w: &Vector3<f64>,
    max_degree: usize,
    values: &mut [f64],
    gradients: &mut [Vector3<f64>],
) {
    assert!((1..=MAX_DEGREE).contains(&max_degree));
    let n = harmonic_count(max_degree);
    let seed = |v: f64, axis: usize| {
        let mut d = [0.0; 3];
        d[axis] = 1.0;
        Dual { v, d }
    };
    let mut duals = [Dual::c(0.0); harmonic_count(MAX_DEGREE)];
    polynomials(seed(w.x, 0), seed(w.y, 1), seed(w.z, 2), max_degree, &mut duals[..n]);
    for (k, d) in duals[..n].iter().enumerate() {
        values[k] = d.v;
        gradients[k] = Vector3::new(d.d[0], d.d[1], d.d[2]);
    }
}
