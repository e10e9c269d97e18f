//! Oracle suites with measured errors against fixed tolerances.

use std::fmt;
use std::time::Instant;

use eitshape::bem::{assemble, solve_forward, CurrentPattern};
use eitshape::gradient::MeasurementSet;
use eitshape::marching::BoundingBox;
use eitshape::metrics::{add_noise, code_indicator, hausdorff_distance, indicator_error, volume_difference, EvaluationGrid};
use eitshape::patterns::PatternSet;
use eitshape::problem::{simulate, InverseProblem, Sampling};
use eitshape::{area_matched_sphere, icosphere, LatentCode, LatentShapeModel, Point, TriangleMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::CliError;

pub const SUITES: &[&str] = &["bem", "gradient", "unbiased", "metrics"];

/// Inner and outer radii of the concentric-sphere oracle.
pub const ORACLE_RADII: (f64, f64) = (0.5, 1.5);
/// `u(R) / cos(theta)` for the grounded inner sphere and Neumann data `cos(theta)`.
pub const ORACLE_TRACE: f64 = 1.344828;
pub const BEM_TOLERANCE: f64 = 0.02;
pub const BEM_TIME_LIMIT_S: f64 = 60.0;
pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 5e-2;
pub const FD_DIRECTIONS: usize = 10;
pub const MC_SAMPLES: usize = 10_000;
pub const MC_FRACTION: f64 = 0.1;
pub const MC_STANDARD_ERRORS: f64 = 3.0;
pub const SLOPE_FRACTIONS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
pub const SLOPE_TARGET: f64 = -1.0;
pub const SLOPE_TOLERANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Human-readable acceptance condition.
    pub condition: String,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, measured: f64, condition: impl Into<String>, pass: bool) -> Self {
        Check { name: name.into(), measured, condition: condition.into(), pass }
    }

    fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Check::new(name, measured, format!("<= {limit:e}"), measured <= limit)
    }

    fn within(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Check::new(name, measured, format!("{target} +/- {tol}"), (measured - target).abs() <= tol)
    }

    fn failed(name: &str, err: impl fmt::Display) -> Self {
        Check::new(name, f64::NAN, format!("error: {err}"), false)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: measured {:.6e}, required {}", self.name, self.measured, self.condition)
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>, CliError> {
    match name {
        "bem" => Ok(bem_suite()),
        "gradient" => Ok(gradient_suite(seed)),
        "unbiased" => Ok(unbiased_suite(seed)),
        "metrics" => Ok(metrics_suite()),
        other => Err(CliError::Config(format!("unknown suite '{other}', expected one of {}", SUITES.join(", ")))),
    }
}

fn relative_l2(mesh: &TriangleMesh, computed: &[f64], exact: impl Fn(&Point) -> f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, c) in mesh.panels().iter().zip(computed) {
        let e = exact(&p.centroid);
        num += p.area * (c - e).powi(2);
        den += p.area * e * e;
    }
    (num / den).sqrt()
}

/// Relative L2 error of the Σ trace for the concentric-sphere oracle at the given Σ level.
pub fn concentric_sphere_error(sigma_level: u32) -> Result<f64, CliError> {
    let (a, r) = ORACLE_RADII;
    let gamma = icosphere(a, 3).flipped();
    let sigma = area_matched_sphere(r, sigma_level);
    let sys = assemble(&gamma, &sigma)?;
    let cos = |p: &Point| p.z / p.norm();
    let g = CurrentPattern::from_function(&sigma, cos)?;
    let sol = solve_forward(&sys, &g)?;
    Ok(relative_l2(&sigma, &sol.trace_on_sigma, |p| ORACLE_TRACE * cos(p)))
}

pub fn bem_suite() -> Vec<Check> {
    let start = Instant::now();
    let e3 = match concentric_sphere_error(3) {
        Ok(e) => e,
        Err(e) => return vec![Check::failed("bem level 3", e)],
    };
    let e4 = match concentric_sphere_error(4) {
        Ok(e) => e,
        Err(e) => return vec![Check::failed("bem level 4", e)],
    };
    let elapsed = start.elapsed().as_secs_f64();
    vec![
        Check::at_most("bem concentric-sphere L2 error, sigma level 3", e3, BEM_TOLERANCE),
        Check::new("bem error at level 4", e4, format!("< {e3:e} (level 3)"), e4 < e3),
        Check::at_most("bem runtime seconds", elapsed, BEM_TIME_LIMIT_S),
    ]
}

/// Solver-resolution problem against a centered sphere of radius 0.5 simulated at a finer
/// inclusion resolution.
pub fn sphere_problem(spacing: f64, data_spacing: f64, noise: f64, seed: u64) -> Result<InverseProblem, CliError> {
    let model = LatentShapeModel::default();
    let sigma = area_matched_sphere(ORACLE_RADII.1, 3);
    let bbox = BoundingBox::default();
    let patterns = PatternSet::Yl12.build(&sigma)?;
    let target = model.sphere(Point::zeros(), ORACLE_RADII.0);
    let data = simulate(&model, &target, &sigma, &patterns, data_spacing, &bbox)?;
    let data = data
        .iter()
        .enumerate()
        .map(|(k, d)| add_noise(d, noise, seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let ms = MeasurementSet::new(patterns, data, noise, &sigma)?;
    Ok(InverseProblem::new(model, sigma, ms, spacing, bbox)?)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn shifted(z: &LatentCode, v: &[f64], h: f64) -> LatentCode {
    LatentCode::new(z.as_slice().iter().zip(v).map(|(a, b)| a + h * b).collect()).expect("finite")
}

/// Directional derivatives of the loss: central differences against `<grad, v>`.
/// Returns `(fd, analytic)` pairs.
pub fn directional_derivatives(problem: &InverseProblem, z: &LatentCode, seed: u64) -> Result<Vec<(f64, f64)>, CliError> {
    let g = problem.evaluate(z, Sampling::Full)?.gradient.vector;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(FD_DIRECTIONS);
    for _ in 0..FD_DIRECTIONS {
        let v = random_unit(&mut rng, g.len());
        let plus = problem.loss(&shifted(z, &v, FD_STEP))?;
        let minus = problem.loss(&shifted(z, &v, -FD_STEP))?;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let analytic: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        out.push((fd, analytic));
    }
    Ok(out)
}

/// Random admissible code pulled slightly inside the admissible set, so that every shifted
/// code of the finite-difference stencil is still a valid shape.
pub fn fd_base_code(seed: u64) -> LatentCode {
    let model = LatentShapeModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = model.sample_admissible(&mut rng);
    let mut v: Vec<f64> = z.as_slice().iter().map(|x| 0.9 * x).collect();
    v[3] = z.radius().clamp(0.3, 0.6);
    model.project(&LatentCode::new(v).expect("finite"))
}

pub fn gradient_suite(seed: u64) -> Vec<Check> {
    let run = || -> Result<Vec<(f64, f64)>, CliError> {
        let problem = sphere_problem(0.06, 0.0424, 0.0, seed)?;
        directional_derivatives(&problem, &fd_base_code(seed), seed)
    };
    match run() {
        Ok(pairs) => {
            let worst = pairs.iter().map(|&(fd, an)| (fd - an).abs() / an.abs()).fold(0.0, f64::max);
            vec![Check::at_most("gradient max relative directional-derivative error", worst, FD_TOLERANCE)]
        }
        Err(e) => vec![Check::failed("gradient", e)],
    }
}

/// Per-component mean and standard error of `samples` draws of the panel-sampled estimator.
pub fn estimator_moments(problem: &InverseProblem, z: &LatentCode, fraction: f64, samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (_, _, terms) = problem.panel_terms(z)?;
    let size = ((fraction * terms.panel_count() as f64).round() as usize).max(1);
    let dim = terms.full().vector.len();
    let (mut sum, mut sq) = (vec![0.0; dim], vec![0.0; dim]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let g = terms.sample(size, rng.random())?.vector;
        for k in 0..dim {
            sum[k] += g[k];
            sq[k] += g[k] * g[k];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let var: Vec<f64> = sq.iter().zip(&mean).map(|(q, m)| ((q - n * m * m) / (n - 1.0)).max(0.0)).collect();
    Ok((mean, var))
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Non-spherical iterate used by the estimator checks.
pub fn estimator_code() -> LatentCode {
    let mut v = vec![0.0; 28];
    v[..4].copy_from_slice(&[0.05, -0.03, 0.02, 0.42]);
    v[5] = 0.08;
    v[9] = -0.05;
    v[20] = 0.03;
    LatentCode::new(v).expect("finite")
}

#[derive(Clone, Debug)]
pub struct UnbiasedReport {
    /// Largest |mean - full| in units of the standard error of the mean.
    pub worst_z: f64,
    /// Total variance of the estimator at each of `SLOPE_FRACTIONS`.
    pub variances: Vec<f64>,
    pub slope: f64,
}

pub fn unbiased_report(seed: u64) -> Result<UnbiasedReport, CliError> {
    let problem = sphere_problem(0.06, 0.0424, 0.0, seed)?;
    let z = estimator_code();
    let full = problem.evaluate(&z, Sampling::Full)?.gradient.vector;
    let (mean, var) = estimator_moments(&problem, &z, MC_FRACTION, MC_SAMPLES, seed)?;
    let scale = full.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let mut worst_z: f64 = 0.0;
    for k in 0..full.len() {
        let se = (var[k] / MC_SAMPLES as f64).sqrt();
        let dev = (mean[k] - full[k]).abs();
        // Components whose panel terms are all equal have zero spread; only rounding remains.
        worst_z = worst_z.max(if se > 1e-12 * scale { dev / se } else if dev <= 1e-9 * scale { 0.0 } else { f64::INFINITY });
    }
    let (_, _, terms) = problem.panel_terms(&z)?;
    let n = terms.panel_count() as f64;
    let mut xs = Vec::new();
    let mut variances = Vec::new();
    for (i, &f) in SLOPE_FRACTIONS.iter().enumerate() {
        let (_, var) = estimator_moments(&problem, &z, f, MC_SAMPLES, seed.wrapping_add(1 + i as u64))?;
        xs.push(((f * n).round()).ln());
        variances.push(var.iter().sum::<f64>());
    }
    let ys: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
    Ok(UnbiasedReport { worst_z, slope: fit_slope(&xs, &ys), variances })
}

pub fn unbiased_suite(seed: u64) -> Vec<Check> {
    match unbiased_report(seed) {
        Ok(r) => vec![
            Check::at_most("estimator bias in standard errors (worst component)", r.worst_z, MC_STANDARD_ERRORS),
            Check::within("estimator variance log-log slope", r.slope, SLOPE_TARGET, SLOPE_TOLERANCE),
        ],
        Err(e) => vec![Check::failed("unbiased", e)],
    }
}

pub fn metrics_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let (a3, b3) = (icosphere(0.5, 3), icosphere(0.6, 3));
    match hausdorff_distance(&a3, &b3) {
        Ok(h) => checks.push(Check::within("hausdorff concentric spheres 0.5/0.6", h, 0.1, 0.01)),
        Err(e) => checks.push(Check::failed("hausdorff", e)),
    }
    let (a4, b4) = (icosphere(0.5, 4), icosphere(0.6, 4));
    match volume_difference(&a4, &b4) {
        Ok(v) => checks.push(Check::new(
            "volume difference concentric spheres 0.5/0.6",
            v,
            "0.3812 +/- 2%",
            (v - 0.3812).abs() <= 0.02 * 0.3812,
        )),
        Err(e) => checks.push(Check::failed("volume difference", e)),
    }
    let model = LatentShapeModel::default();
    let z = estimator_code();
    let same = EvaluationGrid::new(&BoundingBox::default(), eitshape::metrics::DEFAULT_SPACING)
        .map_err(CliError::from)
        .and_then(|grid| Ok(indicator_error(code_indicator(&model, &z)?, code_indicator(&model, &z)?, &grid).count));
    match same {
        Ok(c) => checks.push(Check::new("indicator error of identical shapes", c as f64, "== 0", c == 0)),
        Err(e) => checks.push(Check::failed("indicator error", e)),
    }
    let f: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin() * 1e3_f64.powi(i % 5 - 2)).collect();
    match add_noise(&f, 0.0, 7) {
        Ok(g) => {
            let diff = f.iter().zip(&g).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
            checks.push(Check::new("zero noise is the identity (differing entries)", diff as f64, "== 0", diff == 0));
        }
        Err(e) => checks.push(Check::failed("zero noise", e)),
    }
    checks
}
