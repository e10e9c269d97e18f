//! Synthetic measurement generation and the on-disk data format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eitshape::gradient::MeasurementSet;
use eitshape::marching::{extract_mesh, BoundingBox};
use eitshape::metrics::add_noise;
use eitshape::problem::{nearest_centroid_transfer, simulate};
use eitshape::{area_matched_sphere, LatentShapeModel, TriangleMesh};
use sha2::{Digest, Sha256};

use crate::{io_err, CliError, ExperimentConfig};

pub const MEASUREMENTS: &str = "measurements.csv";
pub const PROVENANCE: &str = "provenance.txt";
pub const CONFIG: &str = "config.txt";
pub const TARGET: &str = "target.obj";

pub fn bounding_box(cfg: &ExperimentConfig) -> BoundingBox {
    BoundingBox::cube(cfg.half_width)
}

pub fn solver_sigma(cfg: &ExperimentConfig) -> TriangleMesh {
    area_matched_sphere(cfg.sigma_radius, cfg.solver_level)
}

/// Phantom surface at the data resolution, outward normals.
pub fn target_surface(cfg: &ExperimentConfig) -> Result<TriangleMesh, CliError> {
    Ok(extract_mesh(&LatentShapeModel::default(), &cfg.phantom, cfg.data_spacing, &bounding_box(cfg))?)
}

/// Hash of the settings that determine the measurement files.
pub fn data_fingerprint(cfg: &ExperimentConfig) -> String {
    let text = format!(
        "{}\n{:?} {} {} {:?} {:?}\n{}\n{:?} {}\n",
        cfg.phantom.to_json(),
        cfg.sigma_radius,
        cfg.solver_level,
        cfg.data_level,
        cfg.data_spacing,
        cfg.half_width,
        cfg.patterns,
        cfg.noise_level,
        cfg.noise_seed
    );
    hex_digest(text.as_bytes())
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Forward traces on the fine meshes, moved to the solver's Σ panels, with noise applied.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<MeasurementSet, CliError> {
    let model = LatentShapeModel::default();
    let sigma = solver_sigma(cfg);
    let fine = area_matched_sphere(cfg.sigma_radius, cfg.data_level);
    let fine_patterns = cfg.patterns.build(&fine)?;
    log::info!("simulating {} patterns on {} sigma panels", fine_patterns.len(), fine.len());
    let traces = simulate(&model, &cfg.phantom, &fine, &fine_patterns, cfg.data_spacing, &bounding_box(cfg))?;
    let mut data = Vec::with_capacity(traces.len());
    for (k, trace) in traces.iter().enumerate() {
        let coarse = nearest_centroid_transfer(&fine, trace, &sigma)?;
        data.push(add_noise(&coarse, cfg.noise_level, pattern_seed(cfg.noise_seed, k))?);
    }
    Ok(MeasurementSet::new(cfg.patterns.build(&sigma)?, data, cfg.noise_level, &sigma)?)
}

fn pattern_seed(seed: u64, pattern: usize) -> u64 {
    seed.wrapping_add((pattern as u64).wrapping_mul(0x2545_F491_4F6C_DD1D))
}

/// One row per Σ panel, one column per pattern.
pub fn measurements_csv(data: &[Vec<f64>]) -> String {
    let mut out = String::from("panel");
    for k in 0..data.len() {
        let _ = write!(out, ",pattern_{k}");
    }
    out.push('\n');
    let n = data.first().map_or(0, Vec::len);
    for i in 0..n {
        let _ = write!(out, "{i}");
        for d in data {
            let _ = write!(out, ",{:e}", d[i]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_measurements(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |line: usize, msg: &str| CliError::Config(format!("{MEASUREMENTS} line {line}: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let patterns = header.split(',').count().saturating_sub(1);
    let mut data = vec![Vec::new(); patterns];
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != patterns + 1 {
            return Err(bad(n + 2, "wrong number of columns"));
        }
        for (k, f) in fields[1..].iter().enumerate() {
            data[k].push(f.parse::<f64>().map_err(|_| bad(n + 2, "not a number"))?);
        }
    }
    Ok(data)
}

/// Runs the phantom simulation and writes measurements, resolved config, provenance and
/// the target surface into `out`.
pub fn generate_data(cfg: &ExperimentConfig, out: &Path, force: bool) -> Result<MeasurementSet, CliError> {
    let path = out.join(MEASUREMENTS);
    if path.exists() && !force {
        return Err(CliError::Config(format!("{} exists; pass --force to overwrite", path.display())));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let measurements = synthesize(cfg)?;
    write(&path, &measurements_csv(measurements.data()))?;
    let config_text = cfg.to_text();
    write(&out.join(CONFIG), &config_text)?;
    let provenance = format!(
        "tool = eitshape {}\nconfig_sha256 = {}\ndata_sha256 = {}\nnoise_seed = {}\noptimizer_seed = {}\n",
        env!("CARGO_PKG_VERSION"),
        hex_digest(config_text.as_bytes()),
        data_fingerprint(cfg),
        cfg.noise_seed,
        cfg.optimizer.seed
    );
    write(&out.join(PROVENANCE), &provenance)?;
    let mut obj = Vec::new();
    target_surface(cfg)?.write_obj(&mut obj)?;
    fs::write(out.join(TARGET), obj).map_err(io_err(out))?;
    Ok(measurements)
}

/// Reads the measurements in `dir` and checks that they were generated for `cfg`.
pub fn load_measurements(cfg: &ExperimentConfig, dir: &Path) -> Result<MeasurementSet, CliError> {
    let path = dir.join(MEASUREMENTS);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read measurement data {}: {e}", path.display())))?;
    let provenance = fs::read_to_string(dir.join(PROVENANCE)).unwrap_or_default();
    let expected = format!("data_sha256 = {}", data_fingerprint(cfg));
    if !provenance.lines().any(|l| l == expected) {
        return Err(CliError::Config(format!(
            "measurement data in {} was generated with different phantom, mesh, pattern or noise settings",
            dir.display()
        )));
    }
    let data = parse_measurements(&text)?;
    let sigma = solver_sigma(cfg);
    let patterns = cfg.patterns.build(&sigma)?;
    if data.len() != patterns.len() {
        return Err(CliError::Config(format!("{MEASUREMENTS}: expected {} patterns", patterns.len())));
    }
    MeasurementSet::new(patterns, data, cfg.noise_level, &sigma).map_err(|e| CliError::Config(format!("{MEASUREMENTS}: {e}")))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}
