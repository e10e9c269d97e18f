//! Projected Adam (or plain SGD) over the latent code, with a convergence test on the loss
//! history and a step-size diagnostic on the gradient norms.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::problem::{InverseProblem, Sampling};
use crate::shape::{LatentCode, LatentShapeModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Method {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Adam => "adam",
            Method::Sgd => "sgd",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Method::Adam),
            "sgd" => Ok(Method::Sgd),
            other => Err(Error::Parse(format!("unknown optimizer method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Fraction of inclusion panels sampled per gradient; 1 means the full gradient.
    pub sample_fraction: f64,
    pub window: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Adam,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 400,
            sample_fraction: 1.0,
            window: 20,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("adam epsilon must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be at least 1");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad("sample fraction must lie in (0, 1]");
        }
        if self.window == 0 {
            return bad("convergence window must be at least 1");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be non-negative");
        }
        Ok(())
    }

    fn sampling(&self, iteration: usize) -> Sampling {
        if self.sample_fraction >= 1.0 {
            Sampling::Full
        } else {
            let seed = self.seed ^ (iteration as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            Sampling::Panels { fraction: self.sample_fraction, seed }
        }
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

/// One bias-corrected Adam update followed by projection onto the admissible set.
pub fn adam_step(
    model: &LatentShapeModel,
    z: &LatentCode,
    g: &[f64],
    state: &mut AdamState,
    cfg: &OptimizerConfig,
) -> Result<LatentCode> {
    check_gradient(z, g)?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut values = z.as_slice().to_vec();
    for i in 0..values.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(model.project(&LatentCode::new(values)?))
}

/// Projected gradient step `z - alpha g`.
pub fn sgd_step(model: &LatentShapeModel, z: &LatentCode, g: &[f64], cfg: &OptimizerConfig) -> Result<LatentCode> {
    check_gradient(z, g)?;
    let values = z.as_slice().iter().zip(g).map(|(a, b)| a - cfg.learning_rate * b).collect();
    Ok(model.project(&LatentCode::new(values)?))
}

fn check_gradient(z: &LatentCode, g: &[f64]) -> Result<()> {
    if g.len() != z.len() {
        return Err(Error::LengthMismatch { expected: z.len(), found: g.len() });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
    /// Iterate at which `loss` and the gradient were evaluated.
    pub z: LatentCode,
}

#[derive(Clone, Debug)]
pub struct ReconstructionTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Message of the error that stopped the loop early, if any.
    pub error: Option<String>,
    /// Surface of the last successfully evaluated iterate, outward normals.
    pub final_surface: Option<TriangleMesh>,
}

impl ReconstructionTrace {
    pub fn final_code(&self) -> Option<&LatentCode> {
        self.records.last().map(|r| &r.z)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// CSV with header `iteration,loss,grad_norm,wall_ms,z_0,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.records.first().map_or(0, |r| r.z.len());
        write!(out, "iteration,loss,grad_norm,wall_ms")?;
        for k in 0..dim {
            write!(out, ",z_{k}")?;
        }
        writeln!(out)?;
        for r in &self.records {
            write!(out, "{},{:e},{:e},{:.3}", r.iteration, r.loss, r.grad_norm, r.wall_ms)?;
            for v in r.z.as_slice() {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Mean relative loss change over the last `window` iterations is below `tolerance`.
pub fn has_converged(losses: &[f64], window: usize, tolerance: f64) -> bool {
    if losses.len() <= window {
        return false;
    }
    let tail = &losses[losses.len() - window - 1..];
    let mean: f64 = tail
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[0].abs().max(f64::MIN_POSITIVE))
        .sum::<f64>()
        / window as f64;
    mean < tolerance
}

/// Run the descent loop from `z0`. `observe` sees every record with the surface it was
/// evaluated on.
pub fn run_reconstruction_with(
    problem: &InverseProblem,
    z0: &LatentCode,
    cfg: &OptimizerConfig,
    mut observe: impl FnMut(&IterationRecord, &TriangleMesh),
) -> Result<ReconstructionTrace> {
    cfg.validate()?;
    let model = problem.model();
    model.validate(z0)?;
    if !model.is_admissible(z0) {
        return Err(Error::InvalidArgument("initial latent code is not admissible".into()));
    }
    let mut trace = ReconstructionTrace { records: Vec::new(), converged: false, error: None, final_surface: None };
    let mut state = AdamState::new(model.latent_dim());
    let mut z = z0.clone();
    let mut losses = Vec::new();
    for k in 0..cfg.max_iterations {
        let start = Instant::now();
        let eval = match problem.evaluate(&z, cfg.sampling(k)) {
            Ok(e) => e,
            Err(e) => {
                log::error!("iteration {k} failed: {e}");
                trace.error = Some(e.to_string());
                break;
            }
        };
        losses.push(eval.loss);
        let grad_norm = eval.gradient.norm();
        let next = match cfg.method {
            _ if k + 1 == cfg.max_iterations => Ok(z.clone()),
            Method::Adam => adam_step(model, &z, &eval.gradient.vector, &mut state, cfg),
            Method::Sgd => sgd_step(model, &z, &eval.gradient.vector, cfg),
        };
        let record = IterationRecord {
            iteration: k,
            loss: eval.loss,
            grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            z: z.clone(),
        };
        log::debug!("iteration {k}: loss {:e}, |g| {:e}, {:.0} ms", eval.loss, grad_norm, record.wall_ms);
        observe(&record, &eval.surface);
        trace.records.push(record);
        trace.final_surface = Some(eval.surface);
        if has_converged(&losses, cfg.window, cfg.tolerance) {
            trace.converged = true;
            break;
        }
        match next {
            Ok(n) => z = n,
            Err(e) => {
                trace.error = Some(e.to_string());
                break;
            }
        }
    }
    Ok(trace)
}

pub fn run_reconstruction(problem: &InverseProblem, z0: &LatentCode, cfg: &OptimizerConfig) -> Result<ReconstructionTrace> {
    run_reconstruction_with(problem, z0, cfg, |_, _| {})
}

/// Running average of squared gradient norms and its qualitative behavior.
#[derive(Clone, Debug, PartialEq)]
pub struct StepsizeReport {
    pub running_mean: Vec<f64>,
    /// First index from which the running mean never increases.
    pub monotone_after: usize,
    pub plateau: f64,
    pub diverging: bool,
}

/// Minimum trace length accepted by [`stepsize_diagnostic`].
pub const MIN_DIAGNOSTIC_ITERATIONS: usize = 10;
/// Growth of the running mean above its minimum that counts as divergence.
const DIVERGENCE_GROWTH: f64 = 2.0;

pub fn stepsize_diagnostic(grad_norms: &[f64]) -> Result<StepsizeReport> {
    if grad_norms.len() < MIN_DIAGNOSTIC_ITERATIONS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_DIAGNOSTIC_ITERATIONS} iterations, got {}",
            grad_norms.len()
        )));
    }
    let mut running_mean = Vec::with_capacity(grad_norms.len());
    let mut sum = 0.0;
    for (k, g) in grad_norms.iter().enumerate() {
        sum += g * g;
        running_mean.push(sum / (k + 1) as f64);
    }
    let mut monotone_after = running_mean.len() - 1;
    while monotone_after > 0 && running_mean[monotone_after - 1] >= running_mean[monotone_after] {
        monotone_after -= 1;
    }
    let plateau = *running_mean.last().unwrap();
    let min = running_mean.iter().copied().fold(f64::INFINITY, f64::min);
    let diverging = !plateau.is_finite() || plateau > DIVERGENCE_GROWTH * min;
    Ok(StepsizeReport { running_mean, monotone_after, plateau, diverging })
}

impl StepsizeReport {
    pub fn from_trace(trace: &ReconstructionTrace) -> Result<Self> {
        stepsize_diagnostic(&trace.records.iter().map(|r| r.grad_norm).collect::<Vec<_>>())
    }
}
