//! Reconstruction runs and their artifacts.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use eitshape::metrics::{code_indicator, hausdorff_distance, indicator_error, volume_difference, EvaluationGrid, DEFAULT_SPACING};
use eitshape::optim::{run_reconstruction_with, ReconstructionTrace, StepsizeReport};
use eitshape::problem::InverseProblem;
use eitshape::{LatentShapeModel, TriangleMesh};

use crate::data::{self, bounding_box, load_measurements, solver_sigma, target_surface, write};
use crate::{io_err, CliError, ExperimentConfig};

pub const TRACE: &str = "trace.csv";
pub const FINAL: &str = "final.obj";
pub const METRICS: &str = "metrics.txt";
pub const FAILED: &str = "FAILED";
pub const LOCK: &str = ".lock";
pub const MESHES: &str = "meshes";

/// Held while an experiment writes into a directory.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "{} is in use by another experiment (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_radius: f64,
    pub indicator_count: usize,
    pub indicator_volume: f64,
    pub hausdorff: f64,
    pub volume_difference: f64,
    /// Running mean of squared gradient norms stops increasing from this iteration on.
    pub grad_monotone_after: Option<usize>,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "initial_loss={:e}", self.initial_loss);
        let _ = writeln!(s, "final_loss={:e}", self.final_loss);
        let _ = writeln!(s, "loss_ratio={:e}", self.final_loss / self.initial_loss);
        let _ = writeln!(s, "final_r0={:e}", self.final_radius);
        let _ = writeln!(s, "indicator_error={}", self.indicator_count);
        let _ = writeln!(s, "indicator_volume={:e}", self.indicator_volume);
        let _ = writeln!(s, "hausdorff={:e}", self.hausdorff);
        let _ = writeln!(s, "volume_difference={:e}", self.volume_difference);
        if let Some(k) = self.grad_monotone_after {
            let _ = writeln!(s, "grad_mean_monotone_after={k}");
        }
        s
    }
}

/// Compares a reconstruction against the phantom with all three metrics.
pub fn summarize(
    cfg: &ExperimentConfig,
    trace: &ReconstructionTrace,
    surface: &TriangleMesh,
    target: &TriangleMesh,
) -> Result<RunSummary, CliError> {
    let model = LatentShapeModel::default();
    let z = trace.final_code().ok_or_else(|| CliError::Config("empty trace".into()))?;
    let grid = EvaluationGrid::new(&bounding_box(cfg), DEFAULT_SPACING)?;
    let ind = indicator_error(code_indicator(&model, z)?, code_indicator(&model, &cfg.phantom)?, &grid);
    let losses = trace.losses();
    Ok(RunSummary {
        iterations: trace.records.len(),
        converged: trace.converged,
        initial_loss: losses[0],
        final_loss: *losses.last().unwrap(),
        final_radius: z.radius(),
        indicator_count: ind.count,
        indicator_volume: ind.volume,
        hausdorff: hausdorff_distance(surface, target)?,
        volume_difference: volume_difference(surface, target)?,
        grad_monotone_after: StepsizeReport::from_trace(trace).ok().map(|r| r.monotone_after),
    })
}

/// Runs the reconstruction for `cfg` against the data stored in `out`.
///
/// On a pipeline failure the artifacts written so far are kept and a `FAILED` marker
/// holding the error message is added.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    // Cheap precondition checks come before any solver work.
    let measurements = load_measurements(cfg, out)?;
    let _lock = DirLock::acquire(out)?;
    let failed = out.join(FAILED);
    if failed.exists() {
        fs::remove_file(&failed).map_err(io_err(&failed))?;
    }
    let result = reconstruct(cfg, out, measurements);
    if let Err(e) = &result {
        write(&failed, &format!("{e}\n"))?;
    }
    result
}

fn reconstruct(cfg: &ExperimentConfig, out: &Path, measurements: eitshape::gradient::MeasurementSet) -> Result<RunSummary, CliError> {
    let model = LatentShapeModel::default();
    let problem = InverseProblem::new(model, solver_sigma(cfg), measurements, cfg.spacing, bounding_box(cfg))?;
    write(&out.join(data::CONFIG), &cfg.to_text())?;
    let target = target_surface(cfg)?;
    write_mesh(&out.join(data::TARGET), &target)?;

    let meshes = out.join(MESHES);
    if cfg.dump_every > 0 {
        fs::create_dir_all(&meshes).map_err(io_err(&meshes))?;
    }
    log::info!("reconstructing '{}' for at most {} iterations", cfg.name, cfg.optimizer.max_iterations);
    let mut dump_error = None;
    let mut trace = run_reconstruction_with(&problem, &cfg.init, &cfg.optimizer, |record, surface| {
        if cfg.dump_every > 0 && record.iteration % cfg.dump_every == 0 && dump_error.is_none() {
            let path = meshes.join(format!("iter_{:05}.obj", record.iteration));
            dump_error = write_mesh(&path, surface).err();
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    if !cfg.wall_time {
        for r in &mut trace.records {
            r.wall_ms = 0.0;
        }
    }
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    fs::write(out.join(TRACE), csv).map_err(io_err(out))?;
    if let Some(surface) = &trace.final_surface {
        write_mesh(&out.join(FINAL), surface)?;
    }
    if let Some(msg) = &trace.error {
        return Err(CliError::Pipeline(eitshape::Error::InvalidArgument(format!("reconstruction stopped early: {msg}"))));
    }
    let surface = trace.final_surface.as_ref().ok_or_else(|| CliError::Config("empty trace".into()))?;
    let summary = summarize(cfg, &trace, surface, &target)?;
    write(&out.join(METRICS), &summary.to_text())?;
    Ok(summary)
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), CliError> {
    let mut obj = Vec::new();
    mesh.write_obj(&mut obj)?;
    fs::write(path, obj).map_err(io_err(path))
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh, CliError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(TriangleMesh::read_obj(std::io::BufReader::new(file))?)
}

/// Hausdorff distance and volume difference between two OBJ meshes, as key=value text.
pub fn compare_meshes(a: &Path, b: &Path) -> Result<String, CliError> {
    let (ma, mb) = (read_mesh(a)?, read_mesh(b)?);
    Ok(format!(
        "hausdorff={:e}\nvolume_difference={:e}\n",
        hausdorff_distance(&ma, &mb)?,
        volume_difference(&ma, &mb)?
    ))
}
