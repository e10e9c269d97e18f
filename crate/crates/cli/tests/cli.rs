use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eitshape::{icosphere, TriangleMesh};
use eitshape_cli::data::{generate_data, parse_measurements, solver_sigma, MEASUREMENTS};
use eitshape_cli::experiment::{run_experiment, write_mesh, LOCK};
use eitshape_cli::verify::ORACLE_TRACE;
use eitshape_cli::{CliError, ExperimentConfig};

fn eitshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eitshape")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_data_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "optimizer.max_iterations = 2\n");
    let out = tmp.path().join("run");
    fs::create_dir(&out).unwrap();
    let o = eitshape(&["reconstruct", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains(MEASUREMENTS));
    // Nothing was written: no solver work happened.
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn bad_configs_exit_with_status_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    for text in ["optimizer.learning_rate = -1\n", "sigma.level = 3\n", "sigma.data_level = 3\ngrid.data_spacing = 0.06\n"] {
        let cfg = write_config(tmp.path(), text);
        let o = eitshape(&["generate-data", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}");
    }
    let o = eitshape(&["generate-data", "--config", "/nonexistent.conf", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn metrics_verb_compares_meshes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.obj"), tmp.path().join("b.obj"));
    write_mesh(&a, &icosphere(0.5, 3)).unwrap();
    write_mesh(&b, &icosphere(0.6, 3)).unwrap();
    let o = eitshape(&["metrics", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let h: f64 = text.lines().find_map(|l| l.strip_prefix("hausdorff=")).unwrap().parse().unwrap();
    assert!((h - 0.1).abs() < 0.01);
    assert!(text.contains("volume_difference="));
    let o = eitshape(&["metrics", a.to_str().unwrap(), "/nonexistent.obj"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_metrics_suite_passes() {
    let o = eitshape(&["verify", "metrics"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
    assert_eq!(eitshape(&["verify", "nope"]).status.code(), Some(2));
}

/// Single cosine pattern on a centered sphere of radius 0.5: the stored trace is the
/// separation-of-variables profile.
#[test]
fn generated_data_match_concentric_sphere_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse("phantom.radius = 0.5\npatterns.set = single-cos\n").unwrap();
    generate_data(&cfg, tmp.path(), false).unwrap();
    let data = parse_measurements(&fs::read_to_string(tmp.path().join(MEASUREMENTS)).unwrap()).unwrap();
    let sigma = solver_sigma(&cfg);
    let (mut num, mut den) = (0.0, 0.0);
    for (p, u) in sigma.panels().iter().zip(&data[0]) {
        let exact = ORACLE_TRACE * p.centroid.z / p.centroid.norm();
        num += p.area * (u - exact).powi(2);
        den += p.area * exact * exact;
    }
    let err = (num / den).sqrt();
    assert!(err <= 0.02, "relative L2 error {err}");

    // Regenerating needs --force and reproduces the same bytes.
    let before = fs::read(tmp.path().join(MEASUREMENTS)).unwrap();
    assert!(matches!(generate_data(&cfg, tmp.path(), false), Err(CliError::Config(_))));
    generate_data(&cfg, tmp.path(), true).unwrap();
    assert_eq!(before, fs::read(tmp.path().join(MEASUREMENTS)).unwrap());
    let target = TriangleMesh::read_obj(std::io::BufReader::new(fs::File::open(tmp.path().join("target.obj")).unwrap())).unwrap();
    assert!(target.check_watertight().is_ok());
}

/// Multiplicative noise: per-entry ratios to the clean data follow N(1, 0.2^2).
#[test]
fn noisy_data_ratio_statistics() {
    let base = "phantom.radius = 0.5\nsigma.data_level = 3\nsigma.solver_level = 2\ngrid.spacing = 0.1\ngrid.data_spacing = 0.08\n";
    let clean_dir = tempfile::tempdir().unwrap();
    let noisy_dir = tempfile::tempdir().unwrap();
    let clean = generate_data(&ExperimentConfig::parse(base).unwrap(), clean_dir.path(), false).unwrap();
    let noisy_cfg = ExperimentConfig::parse(&format!("{base}noise.level = 0.2\nnoise.seed = 3\n")).unwrap();
    let noisy = generate_data(&noisy_cfg, noisy_dir.path(), false).unwrap();
    assert_ne!(fs::read(clean_dir.path().join(MEASUREMENTS)).unwrap(), fs::read(noisy_dir.path().join(MEASUREMENTS)).unwrap());
    let ratios: Vec<f64> = clean
        .data()
        .iter()
        .flatten()
        .zip(noisy.data().iter().flatten())
        .filter(|(c, _)| c.abs() > 1e-8)
        .map(|(c, n)| n / c)
        .collect();
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // 2560 ratios: standard errors are about 0.004 for the mean and 0.003 for the deviation.
    assert!(ratios.len() > 2000);
    assert!((mean - 1.0).abs() < 0.015, "mean {mean}");
    assert!((sd - 0.2).abs() < 0.012, "sd {sd}");
}

#[test]
fn busy_directory_is_refused_and_failures_leave_a_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "phantom.radius = 0.5\nsigma.data_level = 3\nsigma.solver_level = 2\ngrid.spacing = 0.1\ngrid.data_spacing = 0.08\noptimizer.max_iterations = 2\n";
    let cfg = ExperimentConfig::parse(base).unwrap();
    generate_data(&cfg, tmp.path(), false).unwrap();

    fs::write(tmp.path().join(LOCK), "").unwrap();
    assert!(matches!(run_experiment(&cfg, tmp.path()), Err(CliError::Config(_))));
    fs::remove_file(tmp.path().join(LOCK)).unwrap();

    let summary = run_experiment(&cfg, tmp.path()).unwrap();
    assert_eq!(summary.iterations, 2);
    for f in ["trace.csv", "final.obj", "target.obj", "metrics.txt", "config.txt", "provenance.txt"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    assert!(!tmp.path().join(LOCK).exists());
    let trace = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,loss,grad_norm,wall_ms,z_0,"));
    assert_eq!(trace.lines().count(), 3);

    // The initial shape pokes out of the sampling box, so the first mesh extraction fails.
    let dir = tempfile::tempdir().unwrap();
    let escaping = ExperimentConfig::parse(&format!("{base}grid.half_width = 0.55\ninit.radius = 0.3\ninit.center = 0.3,0,0\n")).unwrap();
    generate_data(&escaping, dir.path(), false).unwrap();
    let err = run_experiment(&escaping, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(fs::read_to_string(dir.path().join("FAILED")).unwrap().contains("box"));
    assert!(dir.path().join("config.txt").exists());
    assert!(!dir.path().join(LOCK).exists());
}

#[test]
fn changed_data_settings_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "phantom.radius = 0.5\nsigma.data_level = 3\nsigma.solver_level = 2\ngrid.spacing = 0.1\ngrid.data_spacing = 0.08\n";
    generate_data(&ExperimentConfig::parse(base).unwrap(), tmp.path(), false).unwrap();
    let other = ExperimentConfig::parse(&format!("{base}noise.level = 0.1\n")).unwrap();
    assert_eq!(run_experiment(&other, tmp.path()).unwrap_err().exit_code(), 2);
}
