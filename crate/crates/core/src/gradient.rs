//! Misfit functional and its latent gradient from forward and adjoint fluxes on the
//! inclusion surface.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bem::{CurrentPattern, FieldSolution};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::shape::{LatentCode, LatentShapeModel};

/// Smallest admissible `|grad_x f|` at a panel centroid.
pub const REGULARITY_THRESHOLD: f64 = 1e-10;

/// Current patterns with the voltages measured on the outer boundary for each.
#[derive(Clone, Debug)]
pub struct MeasurementSet {
    patterns: Vec<CurrentPattern>,
    data: Vec<Vec<f64>>,
    noise_level: f64,
}

impl MeasurementSet {
    pub fn new(patterns: Vec<CurrentPattern>, data: Vec<Vec<f64>>, noise_level: f64, sigma: &TriangleMesh) -> Result<Self> {
        if patterns.len() != data.len() {
            return Err(Error::LengthMismatch { expected: patterns.len(), found: data.len() });
        }
        for v in patterns.iter().map(|p| p.len()).chain(data.iter().map(Vec::len)) {
            if v != sigma.len() {
                return Err(Error::LengthMismatch { expected: sigma.len(), found: v });
            }
        }
        if !(noise_level >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {noise_level}")));
        }
        Ok(MeasurementSet { patterns, data, noise_level })
    }

    pub fn patterns(&self) -> &[CurrentPattern] {
        &self.patterns
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// `1/2 sum_i area_i (u_i - f_i)^2`.
pub fn loss(u: &[f64], f: &[f64], sigma: &TriangleMesh) -> Result<f64> {
    for n in [u.len(), f.len()] {
        if n != sigma.len() {
            return Err(Error::LengthMismatch { expected: sigma.len(), found: n });
        }
    }
    Ok(0.5 * u.iter().zip(f).zip(sigma.panels()).map(|((a, b), p)| p.area * (a - b) * (a - b)).sum::<f64>())
}

/// Sum of per-pattern losses.
pub fn total_loss(forward: &[FieldSolution], measurements: &MeasurementSet, sigma: &TriangleMesh) -> Result<f64> {
    if forward.len() != measurements.len() {
        return Err(Error::LengthMismatch { expected: measurements.len(), found: forward.len() });
    }
    forward.iter().zip(measurements.data()).map(|(s, f)| loss(&s.trace_on_sigma, f, sigma)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub panels_sampled: usize,
    pub full: bool,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Per-panel contributions `area * sum_k dn u_k dn w_k * grad_z f / |grad_x f|` at the
/// centroids of the inclusion mesh.
#[derive(Clone, Debug)]
pub struct PanelTerms {
    dim: usize,
    terms: Vec<f64>,
}

impl PanelTerms {
    pub fn new(
        model: &LatentShapeModel,
        z: &LatentCode,
        gamma: &TriangleMesh,
        forward: &[FieldSolution],
        adjoint: &[FieldSolution],
    ) -> Result<Self> {
        if forward.len() != adjoint.len() {
            return Err(Error::LengthMismatch { expected: forward.len(), found: adjoint.len() });
        }
        for s in forward.iter().chain(adjoint) {
            if s.flux_on_gamma.len() != gamma.len() {
                return Err(Error::LengthMismatch { expected: gamma.len(), found: s.flux_on_gamma.len() });
            }
        }
        let shape = model.bind(z)?;
        let dim = model.latent_dim();
        let mut terms = vec![0.0; dim * gamma.len()];
        for (i, panel) in gamma.panels().iter().enumerate() {
            let sample = shape.sample(&panel.centroid)?;
            let norm = sample.grad_x.norm();
            if norm < REGULARITY_THRESHOLD {
                let c = panel.centroid;
                return Err(Error::Regularity { norm, point: [c.x, c.y, c.z] });
            }
            let flux: f64 = forward.iter().zip(adjoint).map(|(u, w)| u.flux_on_gamma[i] * w.flux_on_gamma[i]).sum();
            let weight = panel.area * flux / norm;
            for (t, g) in terms[i * dim..(i + 1) * dim].iter_mut().zip(&sample.grad_z) {
                *t = weight * g;
            }
        }
        if terms.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(PanelTerms { dim, terms })
    }

    pub fn panel_count(&self) -> usize {
        self.terms.len() / self.dim
    }

    pub fn term(&self, panel: usize) -> &[f64] {
        &self.terms[panel * self.dim..(panel + 1) * self.dim]
    }

    /// Sum over all panels.
    pub fn full(&self) -> GradientEstimate {
        let mut vector = vec![0.0; self.dim];
        for p in 0..self.panel_count() {
            for (v, t) in vector.iter_mut().zip(self.term(p)) {
                *v += t;
            }
        }
        GradientEstimate { vector, panels_sampled: self.panel_count(), full: true }
    }

    /// Uniform sample of `size` panels without replacement, scaled by `panels / size`.
    pub fn sample(&self, size: usize, seed: u64) -> Result<GradientEstimate> {
        let n = self.panel_count();
        if size == 0 || size > n {
            return Err(Error::SampleSize { size, max: n });
        }
        if size == n {
            return Ok(self.full());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, n, size).into_vec();
        picked.sort_unstable();
        let scale = n as f64 / size as f64;
        let mut vector = vec![0.0; self.dim];
        for p in picked {
            for (v, t) in vector.iter_mut().zip(self.term(p)) {
                *v += t;
            }
        }
        for v in &mut vector {
            *v *= scale;
        }
        Ok(GradientEstimate { vector, panels_sampled: size, full: false })
    }
}

/// Centroid-rule latent gradient summed over patterns.
pub fn full_gradient(
    model: &LatentShapeModel,
    z: &LatentCode,
    gamma: &TriangleMesh,
    forward: &[FieldSolution],
    adjoint: &[FieldSolution],
) -> Result<GradientEstimate> {
    Ok(PanelTerms::new(model, z, gamma, forward, adjoint)?.full())
}

/// Unbiased estimate of [`full_gradient`] from `sample_size` uniformly drawn panels.
pub fn stochastic_gradient(
    model: &LatentShapeModel,
    z: &LatentCode,
    gamma: &TriangleMesh,
    forward: &[FieldSolution],
    adjoint: &[FieldSolution],
    sample_size: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    PanelTerms::new(model, z, gamma, forward, adjoint)?.sample(sample_size, seed)
}
