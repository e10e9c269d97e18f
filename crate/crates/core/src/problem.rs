//! The discrete inverse problem: latent code in, loss and latent gradient out.

use crate::bem::{assemble, solve_adjoint, solve_forward, CurrentPattern, FieldSolution};
use crate::error::{Error, Result};
use crate::gradient::{total_loss, GradientEstimate, MeasurementSet, PanelTerms};
use crate::marching::{extract_mesh, BoundingBox};
use crate::mesh::TriangleMesh;
use crate::shape::{LatentCode, LatentShapeModel};

/// How the latent gradient is estimated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampling {
    Full,
    /// Uniform panel sampling with the given fraction of panels, at least one.
    Panels { fraction: f64, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: GradientEstimate,
    /// Extracted inclusion surface with outward normals.
    pub surface: TriangleMesh,
}

/// Potential traces on `sigma` for inclusion `z` and each pattern.
pub fn simulate(
    model: &LatentShapeModel,
    z: &LatentCode,
    sigma: &TriangleMesh,
    patterns: &[CurrentPattern],
    spacing: f64,
    bbox: &BoundingBox,
) -> Result<Vec<Vec<f64>>> {
    let gamma = extract_mesh(model, z, spacing, bbox)?.flipped();
    let sys = assemble(&gamma, sigma)?;
    patterns.iter().map(|g| Ok(solve_forward(&sys, g)?.trace_on_sigma)).collect()
}

/// For each panel of `to`, the value on the panel of `from` with the nearest centroid.
pub fn nearest_centroid_transfer(from: &TriangleMesh, values: &[f64], to: &TriangleMesh) -> Result<Vec<f64>> {
    if values.len() != from.len() {
        return Err(Error::LengthMismatch { expected: from.len(), found: values.len() });
    }
    Ok(to
        .panels()
        .iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0);
            for (j, p) in from.panels().iter().enumerate() {
                let d = (p.centroid - q.centroid).norm_squared();
                if d < best.0 {
                    best = (d, j);
                }
            }
            values[best.1]
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct InverseProblem {
    model: LatentShapeModel,
    sigma: TriangleMesh,
    measurements: MeasurementSet,
    spacing: f64,
    bbox: BoundingBox,
}

impl InverseProblem {
    pub fn new(
        model: LatentShapeModel,
        sigma: TriangleMesh,
        measurements: MeasurementSet,
        spacing: f64,
        bbox: BoundingBox,
    ) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidSpacing(spacing));
        }
        if let Some(p) = measurements.patterns().first() {
            if p.len() != sigma.len() {
                return Err(Error::LengthMismatch { expected: sigma.len(), found: p.len() });
            }
        }
        Ok(InverseProblem { model, sigma, measurements, spacing, bbox })
    }

    pub fn model(&self) -> &LatentShapeModel {
        &self.model
    }

    pub fn sigma(&self) -> &TriangleMesh {
        &self.sigma
    }

    pub fn measurements(&self) -> &MeasurementSet {
        &self.measurements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    /// Inclusion surface for `z`, outward normals.
    pub fn surface(&self, z: &LatentCode) -> Result<TriangleMesh> {
        extract_mesh(&self.model, z, self.spacing, &self.bbox)
    }

    fn forward(&self, gamma: &TriangleMesh) -> Result<(crate::bem::BieSystem, Vec<FieldSolution>)> {
        let sys = assemble(gamma, &self.sigma)?;
        let forward = self
            .measurements
            .patterns()
            .iter()
            .map(|g| solve_forward(&sys, g))
            .collect::<Result<Vec<_>>>()?;
        Ok((sys, forward))
    }

    pub fn loss(&self, z: &LatentCode) -> Result<f64> {
        let gamma = self.surface(z)?.flipped();
        let (_, forward) = self.forward(&gamma)?;
        total_loss(&forward, &self.measurements, &self.sigma)
    }

    /// Loss, surface and per-panel gradient terms from one factorization.
    pub fn panel_terms(&self, z: &LatentCode) -> Result<(f64, TriangleMesh, PanelTerms)> {
        let surface = self.surface(z)?;
        let gamma = surface.flipped();
        let (sys, forward) = self.forward(&gamma)?;
        let loss = total_loss(&forward, &self.measurements, &self.sigma)?;
        let adjoint = forward
            .iter()
            .zip(self.measurements.data())
            .map(|(u, f)| {
                let r: Vec<f64> = u.trace_on_sigma.iter().zip(f).map(|(a, b)| a - b).collect();
                solve_adjoint(&sys, &r)
            })
            .collect::<Result<Vec<_>>>()?;
        let terms = PanelTerms::new(&self.model, z, &gamma, &forward, &adjoint)?;
        Ok((loss, surface, terms))
    }

    pub fn evaluate(&self, z: &LatentCode, sampling: Sampling) -> Result<Evaluation> {
        let (loss, surface, terms) = self.panel_terms(z)?;
        let gradient = match sampling {
            Sampling::Full => terms.full(),
            Sampling::Panels { fraction, seed } => {
                let n = terms.panel_count();
                let size = ((fraction * n as f64).round() as usize).clamp(1, n);
                terms.sample(size, seed)?
            }
        };
        Ok(Evaluation { loss, gradient, surface })
    }
}
