//! Latent implicit surface family.
//!
//! `f(z, x) = |x - c| - rho(w; z)` with `w = (x - c) / |x - c|` and
//! `rho(w; z) = r0 (1 + sum_lm z_lm Y_lm(w))`, real spherical harmonics up to degree 4.
//! The latent layout is `(c_x, c_y, c_z, r0, z_{1,-1}, ..., z_{4,4})`.
//!
//! `f` is negative inside, positive outside. It is not an exact distance function when the
//! harmonic coefficients are nonzero, but its radial derivative is exactly one, so the
//! spatial gradient never vanishes away from the center.

use rand::Rng;

use crate::error::{Error, Result};
use crate::harmonics::{self, harmonic_count};
use crate::mesh::Point;

const CENTER_EPS: f64 = 1e-12;

/// Index of the base radius inside the latent vector.
pub const RADIUS_INDEX: usize = 3;
/// Index of the first harmonic coefficient.
pub const HARMONICS_OFFSET: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLatent(i));
        }
        Ok(LatentCode(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn center(&self) -> Point {
        Point::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn radius(&self) -> f64 {
        self.0[RADIUS_INDEX]
    }

    pub fn harmonics(&self) -> &[f64] {
        &self.0[HARMONICS_OFFSET..]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Flat JSON array of length d.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("finite floats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let values: Vec<f64> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        LatentCode::new(values)
    }
}

/// Shape families the model can represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeFamily {
    StarShapedHarmonic,
}

/// Box constraints on the latent code.
#[derive(Clone, Debug, PartialEq)]
pub struct Admissibility {
    pub center_bound: f64,
    pub radius_bounds: (f64, f64),
    /// Bound on the l1 norm of the harmonic coefficients.
    pub harmonic_l1_bound: f64,
    /// Bound on `|c| + max rho`, keeping the surface inside the extraction box and away from
    /// the outer boundary.
    pub max_extent: f64,
}

impl Default for Admissibility {
    fn default() -> Self {
        Admissibility { center_bound: 0.3, radius_bounds: (0.1, 1.0), harmonic_l1_bound: 0.5, max_extent: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct LatentShapeModel {
    pub family: ShapeFamily,
    pub max_degree: usize,
    pub admissibility: Admissibility,
}

impl Default for LatentShapeModel {
    fn default() -> Self {
        LatentShapeModel {
            family: ShapeFamily::StarShapedHarmonic,
            max_degree: harmonics::MAX_DEGREE,
            admissibility: Admissibility::default(),
        }
    }
}

/// Value of `f` together with both gradients.
#[derive(Clone, Debug)]
pub struct SdfSample {
    pub value: f64,
    pub grad_x: Point,
    pub grad_z: Vec<f64>,
}

impl LatentShapeModel {
    pub fn latent_dim(&self) -> usize {
        HARMONICS_OFFSET + harmonic_count(self.max_degree)
    }

    pub fn validate(&self, z: &LatentCode) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(Error::LatentLength { expected: self.latent_dim(), found: z.len() });
        }
        Ok(())
    }

    pub fn code(&self, values: Vec<f64>) -> Result<LatentCode> {
        let z = LatentCode::new(values)?;
        self.validate(&z)?;
        Ok(z)
    }

    /// Zero-perturbation latent: a sphere of radius `r0` about `center`.
    pub fn sphere(&self, center: Point, r0: f64) -> LatentCode {
        let mut v = vec![0.0; self.latent_dim()];
        v[..3].copy_from_slice(center.as_slice());
        v[RADIUS_INDEX] = r0;
        LatentCode(v)
    }

    /// Upper bound on `rho / r0` for the given harmonic coefficients.
    fn radial_factor_bound(&self, harmonics: &[f64]) -> f64 {
        let l1: f64 = harmonics.iter().map(|v| v.abs()).sum();
        1.0 + harmonics::sup_bound(self.max_degree) * l1
    }

    pub fn is_admissible(&self, z: &LatentCode) -> bool {
        if self.validate(z).is_err() {
            return false;
        }
        let adm = &self.admissibility;
        let tol = 1e-12;
        let c = z.center().norm();
        let r0 = z.radius();
        let l1: f64 = z.harmonics().iter().map(|v| v.abs()).sum();
        c <= adm.center_bound + tol
            && r0 >= adm.radius_bounds.0 - tol
            && r0 <= adm.radius_bounds.1 + tol
            && l1 <= adm.harmonic_l1_bound + tol
            && c + r0 * self.radial_factor_bound(z.harmonics()) <= adm.max_extent + tol
    }

    /// Projects onto the admissible set: center onto its ball, radius onto its interval,
    /// harmonics onto the l1 ball (Euclidean projection), then shrinks `r0` if the extent bound
    /// is still violated. Admissible codes are returned unchanged.
    pub fn project(&self, z: &LatentCode) -> LatentCode {
        if self.is_admissible(z) {
            return z.clone();
        }
        let adm = &self.admissibility;
        let mut v = z.0.clone();
        let c = Point::new(v[0], v[1], v[2]);
        let cn = c.norm();
        if cn > adm.center_bound {
            let scaled = c * (adm.center_bound / cn);
            v[..3].copy_from_slice(scaled.as_slice());
        }
        v[RADIUS_INDEX] = v[RADIUS_INDEX].clamp(adm.radius_bounds.0, adm.radius_bounds.1);
        project_l1_ball(&mut v[HARMONICS_OFFSET..], adm.harmonic_l1_bound);
        let cn = Point::new(v[0], v[1], v[2]).norm();
        let factor = self.radial_factor_bound(&v[HARMONICS_OFFSET..]);
        let r_cap = (adm.max_extent - cn) / factor;
        if v[RADIUS_INDEX] > r_cap {
            v[RADIUS_INDEX] = r_cap;
        }
        LatentCode(v)
    }

    /// Random admissible code: center uniform in its ball, `r0` uniform in its interval,
    /// harmonics with uniformly distributed l1 norm and random signs, then projected.
    pub fn sample_admissible<R: Rng + ?Sized>(&self, rng: &mut R) -> LatentCode {
        let adm = &self.admissibility;
        let mut v = vec![0.0; self.latent_dim()];
        loop {
            let c = Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if c.norm() <= 1.0 {
                v[..3].copy_from_slice((c * adm.center_bound).as_slice());
                break;
            }
        }
        v[RADIUS_INDEX] = rng.random_range(adm.radius_bounds.0..=adm.radius_bounds.1);
        let raw: Vec<f64> = (0..harmonic_count(self.max_degree)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l1: f64 = raw.iter().map(|x: &f64| x.abs()).sum();
        let target = adm.harmonic_l1_bound * rng.random_range(0.0..=1.0);
        for (dst, x) in v[HARMONICS_OFFSET..].iter_mut().zip(&raw) {
            *dst = x * target / l1;
        }
        self.project(&LatentCode(v))
    }

    /// Borrows the model and a validated code for repeated evaluation.
    pub fn bind<'a>(&'a self, z: &'a LatentCode) -> Result<BoundShape<'a>> {
        self.validate(z)?;
        Ok(BoundShape { model: self, z, center: z.center() })
    }

    /// `f(z, x)`. At the shape center the direction is undefined and the limit `-r0 (1 + ...)`
    /// is not unique; `-r0` is returned (exact for the unperturbed sphere).
    pub fn eval_sdf(&self, z: &LatentCode, x: &Point) -> Result<f64> {
        Ok(self.bind(z)?.value(x))
    }

    pub fn grad_x_sdf(&self, z: &LatentCode, x: &Point) -> Result<Point> {
        self.bind(z)?.grad_x(x)
    }

    pub fn grad_z_sdf(&self, z: &LatentCode, x: &Point) -> Result<Vec<f64>> {
        Ok(self.bind(z)?.sample(x)?.grad_z)
    }
}

/// Euclidean projection of `v` onto `{ |v|_1 <= radius }`.
fn project_l1_ball(v: &mut [f64], radius: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumulative += m;
        let t = (cumulative - radius) / (j + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - theta).max(0.0);
    }
}

pub struct BoundShape<'a> {
    model: &'a LatentShapeModel,
    z: &'a LatentCode,
    center: Point,
}

impl BoundShape<'_> {
    pub fn is_center(&self, x: &Point) -> bool {
        (x - self.center).norm() < CENTER_EPS
    }

    pub fn value(&self, x: &Point) -> f64 {
        let p = x - self.center;
        let dist = p.norm();
        let r0 = self.z.radius();
        if dist < CENTER_EPS {
            log::trace!("f evaluated at the shape center; returning -r0");
            return -r0;
        }
        let w = p / dist;
        let n = harmonic_count(self.model.max_degree);
        let mut y = [0.0; harmonic_count(harmonics::MAX_DEGREE)];
        harmonics::evaluate(&w, self.model.max_degree, &mut y[..n]);
        let modulation: f64 = self.z.harmonics().iter().zip(&y[..n]).map(|(a, b)| a * b).sum();
        dist - r0 * (1.0 + modulation)
    }

    pub fn grad_x(&self, x: &Point) -> Result<Point> {
        Ok(self.sample(x)?.grad_x)
    }

    /// Value plus spatial and latent gradients. Errors at the center.
    pub fn sample(&self, x: &Point) -> Result<SdfSample> {
        let p = x - self.center;
        let dist = p.norm();
        if dist < CENTER_EPS {
            return Err(Error::AtShapeCenter);
        }
        let w = p / dist;
        let n = harmonic_count(self.model.max_degree);
        let mut y = [0.0; harmonic_count(harmonics::MAX_DEGREE)];
        let mut gy = [Point::zeros(); harmonic_count(harmonics::MAX_DEGREE)];
        harmonics::evaluate_with_gradient(&w, self.model.max_degree, &mut y[..n], &mut gy[..n]);

        let r0 = self.z.radius();
        let coeffs = self.z.harmonics();
        let mut modulation = 0.0;
        let mut tangential = Point::zeros();
        for k in 0..n {
            let (l, _) = harmonics::degree_order(k);
            modulation += coeffs[k] * y[k];
            tangential += coeffs[k] * (gy[k] - (l as f64) * y[k] * w);
        }
        let value = dist - r0 * (1.0 + modulation);
        let grad_x = w - tangential * (r0 / dist);

        let mut grad_z = vec![0.0; self.model.latent_dim()];
        grad_z[0] = -grad_x.x;
        grad_z[1] = -grad_x.y;
        grad_z[2] = -grad_x.z;
        grad_z[RADIUS_INDEX] = -(1.0 + modulation);
        for k in 0..n {
            grad_z[HARMONICS_OFFSET + k] = -r0 * y[k];
        }
        Ok(SdfSample { value, grad_x, grad_z })
    }
}
