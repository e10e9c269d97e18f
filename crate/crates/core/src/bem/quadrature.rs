//! Panel integration of the single- and double-layer kernels over flat triangles.
//!
//! Far pairs use a 3-point rule, near pairs an adaptive subdivision with a 7-point rule on the
//! leaves, and the self panel an exact formula for the single layer. The double layer of a
//! flat panel vanishes at its own centroid.

use std::f64::consts::PI;

use super::kernel::kernels_unchecked;
use crate::mesh::Point;

/// Symmetric triangle rule in barycentric coordinates. Weights sum to one.
#[derive(Clone, Copy, Debug)]
pub struct TriangleRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

pub const THREE_POINT: TriangleRule = TriangleRule {
    points: &[
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

const A1: f64 = 0.059_715_871_789_770;
const B1: f64 = 0.470_142_064_105_115;
const A2: f64 = 0.797_426_985_353_087;
const B2: f64 = 0.101_286_507_323_456;
const W1: f64 = 0.132_394_152_788_506;
const W2: f64 = 0.125_939_180_544_827;

/// Degree-5 Dunavant rule.
pub const SEVEN_POINT: TriangleRule = TriangleRule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, B1, B1],
        [B1, A1, B1],
        [B1, B1, A1],
        [A2, B2, B2],
        [B2, A2, B2],
        [B2, B2, A2],
    ],
    weights: &[0.225, W1, W1, W1, W2, W2, W2],
};

/// A pair is near when the target lies within this many source diameters of the centroid.
pub const NEAR_FACTOR: f64 = 2.0;
/// Maximum subdivision depth for near pairs.
pub const MAX_DEPTH: u32 = 4;

const FOUR_PI_INV: f64 = 1.0 / (4.0 * PI);

/// Single- and double-layer integrals of one source panel seen from one target.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayerIntegrals {
    pub single: f64,
    pub double: f64,
}

impl std::ops::AddAssign for LayerIntegrals {
    fn add_assign(&mut self, o: Self) {
        self.single += o.single;
        self.double += o.double;
    }
}

/// Apply `rule` on triangle `tri` with normal `normal` and area `area`.
pub fn integrate_rule(x: &Point, tri: &[Point; 3], normal: &Point, area: f64, rule: &TriangleRule) -> LayerIntegrals {
    let mut acc = LayerIntegrals::default();
    for (b, w) in rule.points.iter().zip(rule.weights) {
        let y = tri[0] * b[0] + tri[1] * b[1] + tri[2] * b[2];
        let (g, dg) = kernels_unchecked(x, &y, normal);
        acc.single += w * g;
        acc.double += w * dg;
    }
    acc.single *= area;
    acc.double *= area;
    acc
}

fn diameter(tri: &[Point; 3]) -> f64 {
    (tri[0] - tri[1]).norm().max((tri[1] - tri[2]).norm()).max((tri[2] - tri[0]).norm())
}

fn is_near(x: &Point, tri: &[Point; 3]) -> bool {
    let c = (tri[0] + tri[1] + tri[2]) / 3.0;
    (x - c).norm() < NEAR_FACTOR * diameter(tri)
}

fn subdivide(x: &Point, tri: &[Point; 3], normal: &Point, area: f64, depth: u32) -> LayerIntegrals {
    if depth >= MAX_DEPTH || !is_near(x, tri) {
        return integrate_rule(x, tri, normal, area, &SEVEN_POINT);
    }
    let m01 = (tri[0] + tri[1]) * 0.5;
    let m12 = (tri[1] + tri[2]) * 0.5;
    let m20 = (tri[2] + tri[0]) * 0.5;
    let quarter = area * 0.25;
    let mut acc = LayerIntegrals::default();
    for child in [[tri[0], m01, m20], [m01, tri[1], m12], [m20, m12, tri[2]], [m01, m12, m20]] {
        acc += subdivide(x, &child, normal, quarter, depth + 1);
    }
    acc
}

/// Integrals over a source panel from a target off the panel.
pub fn integrate_panel(x: &Point, tri: &[Point; 3], normal: &Point, area: f64) -> LayerIntegrals {
    if is_near(x, tri) {
        subdivide(x, tri, normal, area, 0)
    } else {
        integrate_rule(x, tri, normal, area, &THREE_POINT)
    }
}

/// `integral over tri of 1 / |x - y|` for `x` in the plane of the triangle and inside it.
pub fn flat_inverse_distance(x: &Point, tri: &[Point; 3]) -> f64 {
    let normal = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
    let mut total = 0.0;
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let edge = b - a;
        let len = edge.norm();
        let t = edge / len;
        // In-plane unit vector pointing from the edge towards the interior.
        let inward = normal.cross(&t);
        let d = (x - a).dot(&inward);
        let s1 = (a - x).dot(&t);
        let s2 = (b - x).dot(&t);
        if d.abs() < 1e-300 {
            continue;
        }
        total += d * ((s2 / d).asinh() - (s1 / d).asinh());
    }
    total
}

/// Self-panel integrals at the panel centroid.
pub fn self_integrals(tri: &[Point; 3]) -> LayerIntegrals {
    let c = (tri[0] + tri[1] + tri[2]) / 3.0;
    LayerIntegrals { single: FOUR_PI_INV * flat_inverse_distance(&c, tri), double: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_right_triangle() -> [Point; 3] {
        [Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)]
    }

    #[test]
    fn rules_integrate_polynomials() {
        for rule in [THREE_POINT, SEVEN_POINT] {
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let mean = |rule: &TriangleRule, f: &dyn Fn(f64, f64) -> f64| -> f64 {
            rule.points.iter().zip(rule.weights).map(|(b, w)| w * f(b[1], b[2])).sum()
        };
        // Averages over the reference triangle: E[x^a y^b] = 2 a! b! / (a+b+2)!.
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for (a, b) in [(1u32, 0u32), (2, 0), (1, 1), (3, 1), (2, 2), (4, 1), (0, 5)] {
            let exact = 2.0 * fact(a) * fact(b) / fact(a + b + 2);
            let approx = mean(&SEVEN_POINT, &|x, y| x.powi(a as i32) * y.powi(b as i32));
            assert!((approx - exact).abs() < 1e-9, "x^{a} y^{b}");
        }
        for (a, b) in [(1u32, 0u32), (2, 0), (1, 1)] {
            let exact = 2.0 * fact(a) * fact(b) / fact(a + b + 2);
            let approx = mean(&THREE_POINT, &|x, y| x.powi(a as i32) * y.powi(b as i32));
            assert!((approx - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn self_term_matches_refined_quadrature() {
        let tri = [Point::new(0.1, -0.2, 0.3), Point::new(0.9, 0.1, 0.2), Point::new(0.2, 0.7, 0.6)];
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let exact = flat_inverse_distance(&c, &tri);
        // Split about the centroid; over each piece the integral of 1/r is the integral of rho(theta).
        let mut approx = 0.0;
        for i in 0..3 {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            let n = 20000;
            for k in 0..n {
                let s = (k as f64 + 0.5) / n as f64;
                let p = a + (b - a) * s;
                let r = p - c;
                let dtheta_ds = r.cross(&(b - a)).norm() / r.norm_squared();
                approx += r.norm() * dtheta_ds / n as f64;
            }
        }
        assert!((approx - exact).abs() < 1e-6 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn self_term_of_equilateral() {
        // Closed form at the centroid: 6 r_in asinh(tan 60deg), r_in = s / (2 sqrt 3).
        let s = 1.0_f64;
        let tri = [Point::new(0.0, 0.0, 0.0), Point::new(s, 0.0, 0.0), Point::new(0.5 * s, 0.75_f64.sqrt() * s, 0.0)];
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let r_in = s / (2.0 * 3.0_f64.sqrt());
        let expected = 3.0 * r_in * 2.0 * (3.0_f64.sqrt()).asinh();
        assert!((flat_inverse_distance(&c, &tri) - expected).abs() < 1e-12);
    }

    #[test]
    fn near_integration_converges() {
        let tri = unit_right_triangle();
        let n = Point::new(0.0, 0.0, 1.0);
        let x = Point::new(0.3, 0.3, 0.05);
        let adaptive = integrate_panel(&x, &tri, &n, 0.5);
        // Reference by brute-force uniform refinement.
        fn refine(x: &Point, tri: &[Point; 3], n: &Point, area: f64, depth: u32) -> LayerIntegrals {
            if depth == 0 {
                return integrate_rule(x, tri, n, area, &SEVEN_POINT);
            }
            let m01 = (tri[0] + tri[1]) * 0.5;
            let m12 = (tri[1] + tri[2]) * 0.5;
            let m20 = (tri[2] + tri[0]) * 0.5;
            let mut acc = LayerIntegrals::default();
            for c in [[tri[0], m01, m20], [m01, tri[1], m12], [m20, m12, tri[2]], [m01, m12, m20]] {
                acc += refine(x, &c, n, area * 0.25, depth - 1);
            }
            acc
        }
        let reference = refine(&x, &tri, &n, 0.5, 7);
        assert!((adaptive.single - reference.single).abs() < 1e-3 * reference.single.abs());
        assert!((adaptive.double - reference.double).abs() < 2e-2 * reference.double.abs());
    }
}
