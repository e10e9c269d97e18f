//! Zero level-set extraction by marching cubes.
//!
//! Triangles are built per cell from the closed loops that the iso-contour traces on the cube
//! faces. Face segments are paired from the sign pattern walked counter-clockwise around the
//! outward face normal; ambiguous faces (alternating corner signs) are resolved with the
//! asymptotic decider, evaluated on the face's corner values in a fixed global order so both
//! cells sharing the face make the same choice. This keeps the surface closed and
//! consistently oriented. Each loop is fan-triangulated from its first vertex.
//!
//! A node is inside when `f < 0`. Triangle normals point toward increasing `f`, i.e. outward.

use crate::error::{Error, Result};
use crate::mesh::{Point, TriangleMesh};
use crate::shape::{LatentCode, LatentShapeModel};

/// Edge vertices are kept this far (as a fraction of the edge) from grid nodes so that
/// vertices on different edges never coincide.
const EDGE_PARAM_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn cube(half_width: f64) -> Self {
        BoundingBox { min: Point::repeat(-half_width), max: Point::repeat(half_width) }
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox::cube(1.2)
    }
}

/// Regular node lattice covering a box with a given spacing. The last node may lie slightly
/// beyond `max` when the extent is not a multiple of the spacing.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub origin: Point,
    pub spacing: f64,
    /// Number of nodes along each axis.
    pub nodes: [usize; 3],
}

impl Lattice {
    pub fn new(bbox: &BoundingBox, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidSpacing(spacing));
        }
        let mut nodes = [0; 3];
        for (i, n) in nodes.iter_mut().enumerate() {
            let extent = bbox.max[i] - bbox.min[i];
            if !(extent > 0.0) {
                return Err(Error::InvalidArgument("bounding box has non-positive extent".into()));
            }
            *n = ((extent / spacing) - 1e-9).ceil().max(1.0) as usize + 1;
        }
        Ok(Lattice { origin: bbox.min, spacing, nodes })
    }

    pub fn node_count(&self) -> usize {
        self.nodes[0] * self.nodes[1] * self.nodes[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.nodes[1] + j) * self.nodes[0] + i
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Point {
        self.origin + Point::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Node positions in storage order (x fastest).
    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        let [nx, ny, nz] = self.nodes;
        (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| self.position(i, j, k))))
    }

    fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0 || j == 0 || k == 0 || i + 1 == self.nodes[0] || j + 1 == self.nodes[1] || k + 1 == self.nodes[2]
    }
}

/// Cube corner `c` has offset bits `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Faces as (axis, side) with their four corners in counter-clockwise order about the
/// outward face normal, and the canonical (u, v) layout `[c00, c10, c01, c11]`.
struct Face {
    walk: [usize; 4],
    canonical: [usize; 4],
}

fn faces() -> [Face; 6] {
    let corner = |axis: usize, side: usize, a: usize, b: usize| -> usize {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut bits = [0usize; 3];
        bits[axis] = side;
        bits[u] = a;
        bits[v] = b;
        bits[0] | (bits[1] << 1) | (bits[2] << 2)
    };
    let mut out = Vec::with_capacity(6);
    for axis in 0..3 {
        for side in 0..2 {
            let c = |a, b| corner(axis, side, a, b);
            // e_u x e_v = e_axis, so (0,0)->(1,0)->(1,1)->(0,1) is CCW about +e_axis.
            let walk = if side == 1 {
                [c(0, 0), c(1, 0), c(1, 1), c(0, 1)]
            } else {
                [c(0, 0), c(0, 1), c(1, 1), c(1, 0)]
            };
            out.push(Face { walk, canonical: [c(0, 0), c(1, 0), c(0, 1), c(1, 1)] });
        }
    }
    out.try_into().unwrap_or_else(|_| unreachable!())
}

/// Extracts the zero level set of `f(z, .)` on the lattice of `bbox` with `spacing`.
pub fn extract_mesh(
    model: &LatentShapeModel,
    z: &LatentCode,
    spacing: f64,
    bbox: &BoundingBox,
) -> Result<TriangleMesh> {
    let shape = model.bind(z)?;
    let lattice = Lattice::new(bbox, spacing)?;
    let values: Vec<f64> = lattice.positions().map(|p| shape.value(&p)).collect();
    extract_from_values(&lattice, &values)
}

/// Marching cubes over precomputed node values in lattice storage order.
pub fn extract_from_values(lattice: &Lattice, values: &[f64]) -> Result<TriangleMesh> {
    assert_eq!(values.len(), lattice.node_count());
    let [nx, ny, nz] = lattice.nodes;
    let inside = |v: f64| v < 0.0;

    let mut any_inside = false;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = values[lattice.index(i, j, k)];
                if v.is_nan() {
                    return Err(Error::InvalidArgument("level-set function returned NaN".into()));
                }
                if inside(v) {
                    any_inside = true;
                    if lattice.is_boundary(i, j, k) {
                        return Err(Error::LevelSetTouchesBox);
                    }
                } else if v == 0.0 && lattice.is_boundary(i, j, k) {
                    return Err(Error::LevelSetTouchesBox);
                }
            }
        }
    }
    if !any_inside {
        return Err(Error::EmptyLevelSet);
    }

    let faces = faces();
    let mut edge_vertex = vec![u32::MAX; 3 * lattice.node_count()];
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let node = |c: usize| {
                    let o = corner_offset(c);
                    lattice.index(i + o[0], j + o[1], k + o[2])
                };
                let corner_values: [f64; 8] = std::array::from_fn(|c| values[node(c)]);
                let mask = corner_values.iter().enumerate().fold(0u8, |m, (c, &v)| m | ((inside(v) as u8) << c));
                if mask == 0 || mask == 0xff {
                    continue;
                }

                // Cell faces (bit 2 * axis + side) containing each vertex created or reused here.
                let mut cell_faces: Vec<(usize, u8)> = Vec::with_capacity(12);
                let mut vertex_on = |a: usize, b: usize| -> usize {
                    // Cube edge (a, b) differs in exactly one bit: the axis.
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    let axis = (hi ^ lo).trailing_zeros() as usize;
                    let o = corner_offset(lo);
                    let mask = (0..3).filter(|&q| q != axis).fold(0u8, |m, q| m | 1 << (2 * q + o[q]));
                    let key = 3 * node(lo) + axis;
                    if edge_vertex[key] == u32::MAX {
                        let (va, vb) = (corner_values[lo], corner_values[hi]);
                        let t = (va / (va - vb)).clamp(EDGE_PARAM_MARGIN, 1.0 - EDGE_PARAM_MARGIN);
                        let o = corner_offset(lo);
                        let pa = lattice.position(i + o[0], j + o[1], k + o[2]);
                        let mut p = pa;
                        p[axis] += t * lattice.spacing;
                        edge_vertex[key] = vertices.len() as u32;
                        vertices.push(p);
                    }
                    let id = edge_vertex[key] as usize;
                    if !cell_faces.iter().any(|f| f.0 == id) {
                        cell_faces.push((id, mask));
                    }
                    id
                };

                // Oriented segments (start, end): inside region on the right when viewed from
                // outside the cube.
                let mut segments: Vec<(usize, usize)> = Vec::with_capacity(12);
                for face in &faces {
                    let w = face.walk;
                    let mut starts = [(0usize, 0usize); 2];
                    let mut ends = [(0usize, 0usize); 2];
                    let (mut ns, mut ne) = (0, 0);
                    let mut order = [(false, 0usize); 4];
                    for e in 0..4 {
                        let (a, b) = (w[e], w[(e + 1) % 4]);
                        let (ia, ib) = (inside(corner_values[a]), inside(corner_values[b]));
                        if !ia && ib {
                            starts[ns] = (a, b);
                            order[e] = (true, ns);
                            ns += 1;
                        } else if ia && !ib {
                            ends[ne] = (a, b);
                            order[e] = (true, 2 + ne);
                            ne += 1;
                        }
                    }
                    match ns {
                        0 => {}
                        1 => {
                            let s = vertex_on(starts[0].0, starts[0].1);
                            let e = vertex_on(ends[0].0, ends[0].1);
                            segments.push((s, e));
                        }
                        _ => {
                            let [c00, c10, c01, c11] = face.canonical.map(|c| corner_values[c]);
                            let saddle = (c00 * c11 - c10 * c01) / (c00 + c11 - c10 - c01);
                            let outside_connected = !inside(saddle);
                            // Crossing labels in walk order; each start pairs with the next end
                            // (inside corners separated) or the previous end (inside connected).
                            let crossings: Vec<usize> = order.iter().filter(|o| o.0).map(|o| o.1).collect();
                            for (pos, &label) in crossings.iter().enumerate() {
                                if label >= 2 {
                                    continue;
                                }
                                let partner = if outside_connected {
                                    crossings[(pos + 1) % 4]
                                } else {
                                    crossings[(pos + 3) % 4]
                                };
                                debug_assert!(partner >= 2);
                                let (sa, sb) = starts[label];
                                let (ea, eb) = ends[partner - 2];
                                let s = vertex_on(sa, sb);
                                let e = vertex_on(ea, eb);
                                segments.push((s, e));
                            }
                        }
                    }
                }

                let mut used = vec![false; segments.len()];
                for first in 0..segments.len() {
                    if used[first] {
                        continue;
                    }
                    let mut polygon = vec![segments[first].0];
                    used[first] = true;
                    let mut current = segments[first].1;
                    while current != polygon[0] {
                        polygon.push(current);
                        let next = (0..segments.len())
                            .find(|&s| !used[s] && segments[s].0 == current)
                            .ok_or_else(|| Error::DegenerateMesh("open contour in marching cubes cell".into()))?;
                        used[next] = true;
                        current = segments[next].1;
                    }
                    let masks: Vec<u8> = polygon
                        .iter()
                        .map(|v| cell_faces.iter().find(|(id, _)| id == v).map_or(0, |f| f.1))
                        .collect();
                    triangulate(&polygon, &masks, &vertices, &mut triangles);
                }
            }
        }
    }

    TriangleMesh::new(vertices, triangles)
}

/// Minimum-weight triangulation of a cell polygon (smallest total perimeter), keeping its
/// orientation. Unlike a fan, the result does not depend on which vertex the contour walk
/// started from.
///
/// `faces[i]` is the bit set of cell faces containing vertex `i`. A diagonal between two
/// vertices on a common face could also be chosen by the neighboring cell, so such diagonals
/// are excluded; if that leaves no triangulation, a fan is used.
fn triangulate(polygon: &[usize], faces: &[u8], vertices: &[Point], out: &mut Vec<[usize; 3]>) {
    let n = polygon.len();
    if n == 3 {
        out.push([polygon[0], polygon[1], polygon[2]]);
        return;
    }
    let d = |a: usize, b: usize| {
        let diagonal = b - a > 1 && !(a == 0 && b == n - 1);
        if diagonal && faces[a] & faces[b] != 0 {
            f64::INFINITY
        } else {
            (vertices[polygon[a]] - vertices[polygon[b]]).norm()
        }
    };
    // cost[i][j]: best triangulation of the sub-polygon i..=j, split[i][j]: its apex.
    let mut cost = vec![vec![0.0; n]; n];
    let mut split = vec![vec![0; n]; n];
    for gap in 2..n {
        for i in 0..n - gap {
            let j = i + gap;
            let mut best = (f64::INFINITY, 0);
            for k in i + 1..j {
                let c = cost[i][k] + cost[k][j] + d(i, k) + d(k, j) + d(i, j);
                if c < best.0 {
                    best = (c, k);
                }
            }
            cost[i][j] = best.0;
            split[i][j] = best.1;
        }
    }
    if !cost[0][n - 1].is_finite() {
        for t in 1..n - 1 {
            out.push([polygon[0], polygon[t], polygon[t + 1]]);
        }
        return;
    }
    let mut stack = vec![(0, n - 1)];
    while let Some((i, j)) = stack.pop() {
        if j - i < 2 {
            continue;
        }
        let k = split[i][j];
        out.push([polygon[i], polygon[k], polygon[j]]);
        stack.push((i, k));
        stack.push((k, j));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn triangulation_ignores_the_starting_vertex() {
        // Planar hexagon, elongated so that a fan from vertex 0 is not optimal.
        let vertices: Vec<Point> = (0..6)
            .map(|k| {
                let a = k as f64 * PI / 3.0;
                Point::new(3.0 * a.cos(), a.sin(), 0.0)
            })
            .collect();
        let canonical = |tris: &[[usize; 3]]| {
            let mut v: Vec<[usize; 3]> = tris
                .iter()
                .map(|t| {
                    let r = (0..3).min_by_key(|&i| t[i]).unwrap();
                    [t[r], t[(r + 1) % 3], t[(r + 2) % 3]]
                })
                .collect();
            v.sort();
            v
        };
        let mut reference = Vec::new();
        triangulate(&[0, 1, 2, 3, 4, 5], &[0; 6], &vertices, &mut reference);
        assert_eq!(reference.len(), 4);
        for start in 1..6 {
            let rotated: Vec<usize> = (0..6).map(|k| (start + k) % 6).collect();
            let mut tris = Vec::new();
            triangulate(&rotated, &[0; 6], &vertices, &mut tris);
            assert_eq!(canonical(&tris), canonical(&reference));
        }
        let area: f64 = reference
            .iter()
            .map(|t| 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]])).z)
            .sum();
        assert!((area - 4.5 * 3f64.sqrt()).abs() < 1e-12, "orientation and coverage: {area}");
    }

    fn sphere_mesh(r0: f64, h: f64) -> TriangleMesh {
        let model = LatentShapeModel::default();
        let z = model.sphere(Point::zeros(), r0);
        extract_mesh(&model, &z, h, &BoundingBox::default()).unwrap()
    }

    #[test]
    fn sphere_volume_and_radii() {
        let mesh = sphere_mesh(0.5, 0.06);
        mesh.check_watertight().unwrap();
        assert_eq!(mesh.euler_characteristic(), 2);
        let exact = 4.0 / 3.0 * PI * 0.125;
        let vol = mesh.volume().unwrap();
        assert!(((vol - exact) / exact).abs() < 0.015, "volume {vol} vs {exact}");
        for v in mesh.vertices() {
            assert!((v.norm() - 0.5).abs() <= 0.06);
        }
    }

    #[test]
    fn normals_point_outward() {
        let mesh = sphere_mesh(0.45, 0.06);
        assert!(mesh.signed_volume() > 0.0);
        for p in mesh.panels() {
            assert!(p.normal.dot(&p.centroid.normalize()) > 0.0);
        }
    }

    #[test]
    fn touching_box_is_an_error() {
        let model = LatentShapeModel::default();
        let z = model.sphere(Point::zeros(), 0.5);
        let err = extract_mesh(&model, &z, 0.06, &BoundingBox::cube(0.4)).unwrap_err();
        assert!(matches!(err, Error::LevelSetTouchesBox));
    }

    #[test]
    fn empty_level_set_is_an_error() {
        let lattice = Lattice::new(&BoundingBox::cube(1.0), 0.5).unwrap();
        let values = vec![1.0; lattice.node_count()];
        assert!(matches!(extract_from_values(&lattice, &values), Err(Error::EmptyLevelSet)));
    }

    #[test]
    fn invalid_spacing() {
        assert!(matches!(Lattice::new(&BoundingBox::default(), 0.0), Err(Error::InvalidSpacing(_))));
        assert!(matches!(Lattice::new(&BoundingBox::default(), f64::NAN), Err(Error::InvalidSpacing(_))));
    }

    #[test]
    fn ambiguous_faces_stay_closed() {
        // Two inside nodes on a face diagonal, both readings of the saddle.
        for &diag in &[-0.2, -3.0] {
            let lattice = Lattice::new(&BoundingBox::cube(1.0), 0.5).unwrap();
            let mut values = vec![1.0; lattice.node_count()];
            values[lattice.index(2, 2, 2)] = -1.0;
            values[lattice.index(3, 3, 2)] = diag;
            let mesh = extract_from_values(&lattice, &values).unwrap();
            mesh.check_watertight().unwrap();
            assert!(mesh.signed_volume() > 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let a = sphere_mesh(0.37, 0.06);
        let b = sphere_mesh(0.37, 0.06);
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.triangles(), b.triangles());
    }
}
