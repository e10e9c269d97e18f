use std::cell::Cell;

use faer::linalg::solvers::{DenseSolveCore, PartialPivLu, Solve};
use faer::{Col, Mat};

use super::quadrature::{integrate_panel, self_integrals, LayerIntegrals};
use crate::error::{Error, Result};
use crate::mesh::{Point, TriangleMesh};

/// Condition estimates above this are flagged in the solve diagnostics.
pub const CONDITION_WARNING: f64 = 1e12;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const CONSERVATION_TOLERANCE: f64 = 1e-10;
/// Minimum centroid separation in units of the largest inclusion panel diameter.
const SEPARATION_FACTOR: f64 = 2.0;
/// Allowed deviation of the solid-angle sums used to detect intersecting meshes.
const ENCLOSURE_TOLERANCE: f64 = 0.1;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of LU factorizations performed on the current thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(|c| c.get())
}

/// Neumann data on the outer boundary, one value per panel, with zero net current.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentPattern {
    values: Vec<f64>,
}

impl CurrentPattern {
    pub fn new(values: Vec<f64>, sigma: &TriangleMesh) -> Result<Self> {
        if values.len() != sigma.len() {
            return Err(Error::LengthMismatch { expected: sigma.len(), found: values.len() });
        }
        let (imbalance, scale) = values
            .iter()
            .zip(sigma.panels())
            .fold((0.0, 0.0), |(s, a), (g, p)| (s + g * p.area, a + g.abs() * p.area));
        if imbalance.abs() > CONSERVATION_TOLERANCE * scale {
            return Err(Error::NotConservative { imbalance, scale });
        }
        Ok(CurrentPattern { values })
    }

    /// Sample `f` at the panel centroids and remove the area-weighted mean.
    pub fn from_function(sigma: &TriangleMesh, f: impl Fn(&Point) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = sigma.panels().iter().map(|p| f(&p.centroid)).collect();
        let mean = values.iter().zip(sigma.panels()).map(|(g, p)| g * p.area).sum::<f64>() / sigma.total_area();
        for v in &mut values {
            *v -= mean;
        }
        CurrentPattern::new(values, sigma)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveDiagnostics {
    pub relative_residual: f64,
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

/// Flux on the inclusion and potential trace on the outer boundary.
#[derive(Clone, Debug)]
pub struct FieldSolution {
    pub flux_on_gamma: Vec<f64>,
    pub trace_on_sigma: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Assembled and factorized block system.
///
/// Only the outer-boundary columns of the right-hand operator are stored; the inclusion
/// columns always multiply zero data.
pub struct BieSystem {
    matrix: Mat<f64>,
    rhs_operator: Mat<f64>,
    lu: PartialPivLu<f64>,
    n_gamma: usize,
    n_sigma: usize,
    condition: f64,
}

impl std::fmt::Debug for BieSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BieSystem")
            .field("n_gamma", &self.n_gamma)
            .field("n_sigma", &self.n_sigma)
            .field("condition", &self.condition)
            .finish()
    }
}

fn panel_integrals(x: &Point, mesh: &TriangleMesh, j: usize, own: bool) -> LayerIntegrals {
    let tri = mesh.triangle_vertices(j);
    if own {
        return self_integrals(&tri);
    }
    let p = &mesh.panels()[j];
    integrate_panel(x, &tri, &p.normal, p.area)
}

/// Single- and double-layer matrices `S[i][j]`, `K[i][j]` from source panels of `sources` to
/// the centroids of `targets`. With `same`, diagonal entries use the self-panel formulas.
pub fn layer_potentials(targets: &TriangleMesh, sources: &TriangleMesh, same: bool) -> (Mat<f64>, Mat<f64>) {
    let (m, n) = (targets.len(), sources.len());
    let mut s = Mat::<f64>::zeros(m, n);
    let mut k = Mat::<f64>::zeros(m, n);
    for j in 0..n {
        for (i, t) in targets.panels().iter().enumerate() {
            let v = panel_integrals(&t.centroid, sources, j, same && i == j);
            s[(i, j)] = v.single;
            k[(i, j)] = v.double;
        }
    }
    (s, k)
}

fn check_geometry(gamma: &TriangleMesh, sigma: &TriangleMesh) -> Result<()> {
    gamma.check_watertight()?;
    sigma.check_watertight()?;
    if gamma.signed_volume() >= 0.0 {
        return Err(Error::Orientation("inclusion normals must point into the inclusion".into()));
    }
    if sigma.signed_volume() <= 0.0 {
        return Err(Error::Orientation("outer boundary normals must point outward".into()));
    }
    let required = SEPARATION_FACTOR * gamma.max_panel_diameter();
    let mut separation = f64::INFINITY;
    for a in gamma.panels() {
        for b in sigma.panels() {
            separation = separation.min((a.centroid - b.centroid).norm());
        }
    }
    if separation < required {
        return Err(Error::MeshesTooClose { separation, required });
    }
    Ok(())
}

/// Assemble the block system for inclusion surface `gamma` and outer boundary `sigma`, then
/// factorize it.
pub fn assemble(gamma: &TriangleMesh, sigma: &TriangleMesh) -> Result<BieSystem> {
    check_geometry(gamma, sigma)?;
    let (ng, ns) = (gamma.len(), sigma.len());
    let n = ng + ns;
    let mut a = Mat::<f64>::zeros(n, n);
    let mut b = Mat::<f64>::zeros(n, ns);
    let targets: Vec<Point> = gamma.panels().iter().chain(sigma.panels()).map(|p| p.centroid).collect();

    for j in 0..ng {
        for (i, x) in targets.iter().enumerate() {
            let v = panel_integrals(x, gamma, j, i == j);
            a[(i, j)] = if i < ng { v.single } else { -v.single };
        }
    }
    for j in 0..ns {
        for (i, x) in targets.iter().enumerate() {
            let own = i >= ng && i - ng == j;
            let v = panel_integrals(x, sigma, j, own);
            if i < ng {
                a[(i, ng + j)] = -v.double;
                b[(i, j)] = -v.single;
            } else {
                a[(i, ng + j)] = v.double + if own { 0.5 } else { 0.0 };
                b[(i, j)] = v.single;
            }
        }
    }

    // Each inclusion centroid must see the closed outer surface with solid angle 4 pi.
    for i in 0..ng {
        let sum: f64 = (0..ns).map(|j| a[(i, ng + j)]).sum();
        if (sum - 1.0).abs() > ENCLOSURE_TOLERANCE {
            return Err(Error::MeshesIntersect);
        }
    }

    let lu = a.partial_piv_lu();
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    let u = lu.U();
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let d = u[(k, k)];
        if !d.is_finite() {
            return Err(Error::SingularSystem);
        }
        min_pivot = min_pivot.min(d.abs());
    }
    if min_pivot == 0.0 {
        return Err(Error::SingularSystem);
    }
    let mut sys = BieSystem { matrix: a, rhs_operator: b, lu, n_gamma: ng, n_sigma: ns, condition: 0.0 };
    sys.condition = sys.estimate_condition();
    if sys.condition > CONDITION_WARNING {
        log::warn!("block system condition estimate {:e}", sys.condition);
    }
    Ok(sys)
}

impl BieSystem {
    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }

    pub fn n_sigma(&self) -> usize {
        self.n_sigma
    }

    pub fn dim(&self) -> usize {
        self.n_gamma + self.n_sigma
    }

    /// The left-hand block matrix.
    pub fn matrix(&self) -> faer::MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// Columns of the right-hand block matrix that act on outer-boundary data.
    pub fn rhs_operator(&self) -> faer::MatRef<'_, f64> {
        self.rhs_operator.as_ref()
    }

    /// `P^T L U` rebuilt from the stored factors.
    pub fn reconstruct(&self) -> Mat<f64> {
        self.lu.reconstruct()
    }

    /// 1-norm condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// Hager's estimate of `||A^-1||_1`, times `||A||_1`.
    fn estimate_condition(&self) -> f64 {
        let n = self.dim();
        let norm_a = (0..n)
            .map(|j| (0..n).map(|i| self.matrix[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
        let mut estimate = 0.0;
        for iteration in 0..5 {
            let mut y = x.clone();
            self.lu.solve_in_place(y.as_mut());
            let norm_y: f64 = (0..n).map(|i| y[(i, 0)].abs()).sum();
            if iteration > 0 && norm_y <= estimate {
                break;
            }
            estimate = norm_y;
            let mut z = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
            self.lu.solve_transpose_in_place(z.as_mut());
            let (mut jmax, mut zmax) = (0, 0.0);
            for i in 0..n {
                if z[(i, 0)].abs() > zmax {
                    zmax = z[(i, 0)].abs();
                    jmax = i;
                }
            }
            let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
            if iteration > 0 && zmax <= ztx {
                break;
            }
            x = Mat::<f64>::zeros(n, 1);
            x[(jmax, 0)] = 1.0;
        }
        norm_a * estimate
    }

    fn solve(&self, data: &[f64]) -> Result<FieldSolution> {
        if data.len() != self.n_sigma {
            return Err(Error::LengthMismatch { expected: self.n_sigma, found: data.len() });
        }
        let g = Col::<f64>::from_fn(self.n_sigma, |i| data[i]);
        let rhs: Col<f64> = &self.rhs_operator * &g;
        let mut x = rhs.clone();
        self.lu.solve_in_place(x.as_mat_mut());
        let rhs_norm = rhs.norm_l2();
        let relative_residual = if rhs_norm == 0.0 {
            x.norm_l2()
        } else {
            let r: Col<f64> = &self.matrix * &x - &rhs;
            r.norm_l2() / rhs_norm
        };
        if !relative_residual.is_finite() || relative_residual > RESIDUAL_TOLERANCE {
            return Err(Error::Residual(relative_residual));
        }
        let values: Vec<f64> = x.iter().copied().collect();
        Ok(FieldSolution {
            flux_on_gamma: values[..self.n_gamma].to_vec(),
            trace_on_sigma: values[self.n_gamma..].to_vec(),
            diagnostics: SolveDiagnostics {
                relative_residual,
                condition_estimate: self.condition,
                ill_conditioned: self.condition > CONDITION_WARNING,
            },
        })
    }
}

/// Potential for current pattern `g`. Reuses the stored factorization.
pub fn solve_forward(sys: &BieSystem, g: &CurrentPattern) -> Result<FieldSolution> {
    sys.solve(g.values())
}

/// Adjoint potential with Neumann data `residual = u - f` on the outer boundary.
pub fn solve_adjoint(sys: &BieSystem, residual: &[f64]) -> Result<FieldSolution> {
    sys.solve(residual)
}
