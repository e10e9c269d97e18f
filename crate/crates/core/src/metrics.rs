//! Shape comparison metrics and the multiplicative measurement-noise model.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::marching::{BoundingBox, Lattice};
use crate::mesh::{Point, TriangleMesh};
use crate::shape::{LatentCode, LatentShapeModel};

/// Default evaluation grid spacing.
pub const DEFAULT_SPACING: f64 = 0.06;

/// Regular grid of evaluation nodes.
#[derive(Clone, Debug)]
pub struct EvaluationGrid {
    lattice: Lattice,
}

impl EvaluationGrid {
    pub fn new(bbox: &BoundingBox, spacing: f64) -> Result<Self> {
        Ok(EvaluationGrid { lattice: Lattice::new(bbox, spacing)? })
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn len(&self) -> usize {
        self.lattice.node_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        self.lattice.positions()
    }
}

impl Default for EvaluationGrid {
    fn default() -> Self {
        EvaluationGrid::new(&BoundingBox::default(), DEFAULT_SPACING).expect("default grid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndicatorError {
    /// Number of nodes where the indicators differ.
    pub count: usize,
    /// `count * h^3`, the approximate mismatch volume.
    pub volume: f64,
}

/// Compare two inside/outside oracles on every grid node.
pub fn indicator_error(a: impl Fn(&Point) -> bool, b: impl Fn(&Point) -> bool, grid: &EvaluationGrid) -> IndicatorError {
    let count = grid.nodes().filter(|x| a(x) != b(x)).count();
    IndicatorError { count, volume: count as f64 * grid.spacing().powi(3) }
}

/// Inside test `f(z, x) < 0` for a latent shape.
pub fn code_indicator<'a>(model: &'a LatentShapeModel, z: &'a LatentCode) -> Result<impl Fn(&Point) -> bool + 'a> {
    let shape = model.bind(z)?;
    Ok(move |x: &Point| shape.value(x) < 0.0)
}

/// Inside test for a closed mesh by generalized winding number.
pub fn mesh_indicator(mesh: &TriangleMesh) -> Result<impl Fn(&Point) -> bool + '_> {
    mesh.check_watertight()?;
    let (lo, hi) = mesh_bounds(mesh);
    Ok(move |x: &Point| {
        if (0..3).any(|k| x[k] < lo[k] || x[k] > hi[k]) {
            return false;
        }
        let mut omega = 0.0;
        for t in 0..mesh.len() {
            let [a, b, c] = mesh.triangle_vertices(t);
            omega += solid_angle(&(a - x), &(b - x), &(c - x));
        }
        (omega / (4.0 * PI)).abs() > 0.5
    })
}

fn mesh_bounds(mesh: &TriangleMesh) -> (Point, Point) {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for v in mesh.vertices() {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (lo, hi)
}

/// Signed solid angle of a triangle seen from the origin (Van Oosterom and Strackee).
fn solid_angle(a: &Point, b: &Point, c: &Point) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    2.0 * num.atan2(den)
}

/// Closest distance from `p` to triangle `(a, b, c)`.
pub fn point_triangle_distance(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

struct Bounded {
    center: Point,
    radius: f64,
    verts: [Point; 3],
}

fn directed_hausdorff(from: &TriangleMesh, to: &TriangleMesh) -> f64 {
    let tris: Vec<Bounded> = (0..to.len())
        .map(|t| {
            let verts = to.triangle_vertices(t);
            let center = (verts[0] + verts[1] + verts[2]) / 3.0;
            let radius = verts.iter().map(|v| (v - center).norm()).fold(0.0, f64::max);
            Bounded { center, radius, verts }
        })
        .collect();
    let samples = from.vertices().iter().copied().chain(from.panels().iter().map(|p| p.centroid));
    let mut worst: f64 = 0.0;
    for p in samples {
        let mut best = f64::INFINITY;
        for t in &tris {
            if (p - t.center).norm() - t.radius >= best {
                continue;
            }
            best = best.min(point_triangle_distance(&p, &t.verts[0], &t.verts[1], &t.verts[2]));
            if best <= worst {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst
}

/// Symmetric Hausdorff distance between surfaces sampled at vertices and centroids.
pub fn hausdorff_distance(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    for m in [a, b] {
        if m.is_empty() || m.panels().iter().any(|p| !(p.area > 0.0)) {
            return Err(Error::DegenerateMesh("empty or zero-area mesh".into()));
        }
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// `|V_a - V_b|` for watertight meshes.
pub fn volume_difference(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    Ok((a.volume()? - b.volume()?).abs())
}

/// `f_i (1 + delta xi_i)` with independent standard normal `xi_i`.
pub fn add_noise(f: &[f64], delta: f64, seed: u64) -> Result<Vec<f64>> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(f.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(f.iter()
        .map(|v| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            v * (1.0 + delta * xi)
        })
        .collect())
}
