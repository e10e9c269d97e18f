//! Triangle surface meshes: panel geometry, topology checks, icospheres and OBJ I/O.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Per-triangle data used by collocation and quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub centroid: Point,
    pub area: f64,
    /// Unit normal following the right-hand rule of the vertex order.
    pub normal: Point,
    /// Longest edge length.
    pub diameter: f64,
}

impl Panel {
    fn from_vertices(a: &Point, b: &Point, c: &Point) -> Option<Panel> {
        let cross = (b - a).cross(&(c - a));
        let twice_area = cross.norm();
        if !(twice_area > 0.0) || !twice_area.is_finite() {
            return None;
        }
        let diameter = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        Some(Panel {
            centroid: (a + b + c) / 3.0,
            area: 0.5 * twice_area,
            normal: cross / twice_area,
            diameter,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    panels: Vec<Panel>,
}

impl TriangleMesh {
    /// Builds a mesh and its panel data. Rejects out-of-range indices and zero-area triangles.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::DegenerateMesh("mesh has no triangles".into()));
        }
        let mut panels = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::DegenerateMesh(format!("triangle {t} references a missing vertex")));
            }
            let panel = Panel::from_vertices(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]])
                .ok_or_else(|| Error::DegenerateMesh(format!("triangle {t} has zero area")))?;
            panels.push(panel);
        }
        Ok(TriangleMesh { vertices, triangles, panels })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn panels(&self) -> &[Panel] {
        &self.panels
    }

    /// Number of panels (triangles).
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        let triangles = self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect();
        let panels = self
            .panels
            .iter()
            .map(|p| Panel { normal: -p.normal, ..p.clone() })
            .collect();
        TriangleMesh { vertices: self.vertices.clone(), triangles, panels }
    }

    pub fn translated(&self, offset: &Point) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|v| v + offset).collect();
        let panels = self
            .panels
            .iter()
            .map(|p| Panel { centroid: p.centroid + offset, ..p.clone() })
            .collect();
        TriangleMesh { vertices, triangles: self.triangles.clone(), panels }
    }

    pub fn total_area(&self) -> f64 {
        self.panels.iter().map(|p| p.area).sum()
    }

    pub fn max_panel_diameter(&self) -> f64 {
        self.panels.iter().map(|p| p.diameter).fold(0.0, f64::max)
    }

    /// Signed enclosed volume by the divergence theorem (tetrahedra to the origin).
    /// Positive when normals point outward. Only meaningful for closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
                a.dot(&b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Enclosed volume; requires a watertight mesh.
    pub fn volume(&self) -> Result<f64> {
        self.check_watertight()?;
        Ok(self.signed_volume().abs())
    }

    /// Every undirected edge must be used by exactly two triangles, once in each direction.
    pub fn check_watertight(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * self.len());
        for tri in &self.triangles {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::NotWatertight(format!(
                    "directed edge ({a}, {b}) used {count} times"
                )));
            }
            if !directed.contains_key(&(b, a)) {
                return Err(Error::NotWatertight(format!("edge ({a}, {b}) is a boundary edge")));
            }
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// V - E + F, counting only vertices referenced by some triangle.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_count() as i64 + self.len() as i64
    }

    /// ASCII OBJ with `v` and `f` records, 1-based indices.
    pub fn write_obj<W: Write>(&self, mut out: W) -> Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Reads `v` and triangular `f` records; other record types are ignored.
    /// Face entries of the form `i/j/k` use the vertex index only.
    pub fn read_obj<R: BufRead>(input: R) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("v") => {
                    let coords: Vec<f64> = fields
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                    if coords.len() != 3 {
                        return Err(Error::Parse(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                    }
                    vertices.push(Point::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = fields
                        .map(|s| s.split('/').next().unwrap_or("").parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(Error::Parse(format!(
                            "line {}: expected a triangle with 1-based indices",
                            lineno + 1
                        )));
                    }
                    triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }
}

/// Recursively subdivided icosahedron projected onto a sphere of `radius` about the
/// origin, outward oriented, with `20 * 4^level` triangles.
pub fn icosphere(radius: f64, level: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::new(x, y, z).normalize() * radius)
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize() * radius);
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    TriangleMesh::new(vertices, triangles).expect("icosphere triangles are non-degenerate")
}

/// Icosphere scaled about the origin so that its total area equals `4 pi radius^2`.
///
/// The inscribed polyhedron underestimates the sphere's area at second order in the panel
/// size; matching the area removes the leading geometric bias of the boundary traces.
pub fn area_matched_sphere(radius: f64, level: u32) -> TriangleMesh {
    let raw = icosphere(radius, level);
    let scale = (4.0 * std::f64::consts::PI * radius * radius / raw.total_area()).sqrt();
    icosphere(radius * scale, level)
}
