//! Flat `section.key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. Unknown or repeated keys are errors. The resolved
//! form written by [`ExperimentConfig::to_text`] lists every key and parses back to the same
//! configuration.

use std::collections::BTreeMap;
use std::path::Path;

use eitshape::optim::{Method, OptimizerConfig};
use eitshape::patterns::PatternSet;
use eitshape::{LatentCode, LatentShapeModel, Point};

use crate::CliError;

const KEYS: &[&str] = &[
    "experiment.name",
    "phantom.preset",
    "phantom.radius",
    "phantom.center",
    "phantom.code",
    "sigma.radius",
    "sigma.solver_level",
    "sigma.data_level",
    "grid.spacing",
    "grid.data_spacing",
    "grid.half_width",
    "patterns.set",
    "noise.level",
    "noise.seed",
    "init.radius",
    "init.center",
    "init.code",
    "optimizer.method",
    "optimizer.learning_rate",
    "optimizer.beta1",
    "optimizer.beta2",
    "optimizer.epsilon",
    "optimizer.max_iterations",
    "optimizer.sample_fraction",
    "optimizer.window",
    "optimizer.tolerance",
    "optimizer.seed",
    "output.dump_every",
    "output.wall_time",
    "guard.allow_inverse_crime",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub phantom: LatentCode,
    pub sigma_radius: f64,
    pub solver_level: u32,
    pub data_level: u32,
    pub spacing: f64,
    pub data_spacing: f64,
    pub half_width: f64,
    pub patterns: PatternSet,
    pub noise_level: f64,
    pub noise_seed: u64,
    pub init: LatentCode,
    pub optimizer: OptimizerConfig,
    /// Write the iterate surface every this many iterations; 0 disables.
    pub dump_every: usize,
    /// Record measured iteration times in the trace. Off by default so that reruns are
    /// byte-identical; the column is then written as zero.
    pub wall_time: bool,
    pub allow_inverse_crime: bool,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| config_err(format!("{key}: cannot parse '{v}'")))
}

fn parse_point(key: &str, v: &str) -> Result<Point, CliError> {
    let parts: Vec<f64> = v.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(config_err(format!("{key}: expected three comma-separated numbers")));
    }
    Ok(Point::new(parts[0], parts[1], parts[2]))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got '{v}'"))),
    }
}

/// Named phantom shapes. Harmonic coefficients are indexed from the first harmonic.
pub fn phantom_preset(name: &str, center: Point, radius: f64) -> Result<LatentCode, CliError> {
    let model = LatentShapeModel::default();
    let mut v = model.sphere(center, radius).into_vec();
    match name {
        "sphere" => {}
        // Y_20 elongates along z.
        "ellipsoid" => v[4 + 5] = 0.25,
        "peanut" => {
            v[4 + 5] = 0.3;
            v[4 + 19] = 0.15;
        }
        "bumpy" => {
            v[4 + 5] = 0.12;
            v[4 + 7] = -0.1;
            v[4 + 11] = 0.08;
            v[4 + 16] = 0.06;
        }
        other => return Err(config_err(format!("phantom.preset: unknown preset '{other}'"))),
    }
    Ok(LatentCode::new(v)?)
}

fn parse_code(key: &str, v: &str) -> Result<LatentCode, CliError> {
    LatentCode::from_json(v).map_err(|e| config_err(format!("{key}: {e}")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected 'key = value'", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(config_err(format!("line {}: unknown key '{key}'", n + 1)));
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(config_err(format!("line {}: repeated key '{key}'", n + 1)));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let model = LatentShapeModel::default();

        let phantom = match get("phantom.code") {
            Some(v) => {
                if get("phantom.preset").is_some() {
                    return Err(config_err("phantom.code and phantom.preset are mutually exclusive"));
                }
                parse_code("phantom.code", v)?
            }
            None => {
                let center = get("phantom.center").map_or(Ok(Point::zeros()), |v| parse_point("phantom.center", v))?;
                let radius = get("phantom.radius").map_or(Ok(0.6), |v| parse_num("phantom.radius", v))?;
                phantom_preset(get("phantom.preset").unwrap_or("sphere"), center, radius)?
            }
        };
        let init = match get("init.code") {
            Some(v) => parse_code("init.code", v)?,
            None => {
                let center = get("init.center").map_or(Ok(Point::zeros()), |v| parse_point("init.center", v))?;
                let radius = get("init.radius").map_or(Ok(0.45), |v| parse_num("init.radius", v))?;
                model.sphere(center, radius)
            }
        };

        let spacing: f64 = get("grid.spacing").map_or(Ok(0.06), |v| parse_num("grid.spacing", v))?;
        let defaults = OptimizerConfig::default();
        let num = |k: &str, d: f64| get(k).map_or(Ok(d), |v| parse_num::<f64>(k, v));
        let int = |k: &str, d: u64| get(k).map_or(Ok(d), |v| parse_num::<u64>(k, v));
        let optimizer = OptimizerConfig {
            method: match get("optimizer.method") {
                Some(v) => v.parse::<Method>().map_err(|e| config_err(e.to_string()))?,
                None => defaults.method,
            },
            learning_rate: num("optimizer.learning_rate", defaults.learning_rate)?,
            beta1: num("optimizer.beta1", defaults.beta1)?,
            beta2: num("optimizer.beta2", defaults.beta2)?,
            epsilon: num("optimizer.epsilon", defaults.epsilon)?,
            max_iterations: int("optimizer.max_iterations", defaults.max_iterations as u64)? as usize,
            sample_fraction: num("optimizer.sample_fraction", defaults.sample_fraction)?,
            window: int("optimizer.window", defaults.window as u64)? as usize,
            tolerance: num("optimizer.tolerance", defaults.tolerance)?,
            seed: int("optimizer.seed", defaults.seed)?,
        };

        let cfg = ExperimentConfig {
            name: get("experiment.name").unwrap_or("experiment").to_string(),
            phantom,
            sigma_radius: num("sigma.radius", 1.5)?,
            solver_level: int("sigma.solver_level", 3)? as u32,
            data_level: int("sigma.data_level", 4)? as u32,
            spacing,
            data_spacing: num("grid.data_spacing", spacing / std::f64::consts::SQRT_2)?,
            half_width: num("grid.half_width", 1.2)?,
            patterns: match get("patterns.set") {
                Some(v) => v.parse().map_err(|e: eitshape::Error| config_err(e.to_string()))?,
                None => PatternSet::default(),
            },
            noise_level: num("noise.level", 0.0)?,
            noise_seed: int("noise.seed", 1)?,
            init,
            optimizer,
            dump_every: int("output.dump_every", 0)? as usize,
            wall_time: get("output.wall_time").map_or(Ok(false), |v| parse_bool("output.wall_time", v))?,
            allow_inverse_crime: get("guard.allow_inverse_crime").map_or(Ok(false), |v| parse_bool("guard.allow_inverse_crime", v))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let model = LatentShapeModel::default();
        model.validate(&self.phantom).map_err(|e| config_err(format!("phantom: {e}")))?;
        model.validate(&self.init).map_err(|e| config_err(format!("init: {e}")))?;
        if !model.is_admissible(&self.phantom) {
            return Err(config_err("phantom latent code is not admissible"));
        }
        if !model.is_admissible(&self.init) {
            return Err(config_err("initial latent code is not admissible"));
        }
        for (k, v) in [("grid.spacing", self.spacing), ("grid.data_spacing", self.data_spacing), ("sigma.radius", self.sigma_radius), ("grid.half_width", self.half_width)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{k} must be positive")));
            }
        }
        if self.half_width >= self.sigma_radius {
            return Err(config_err("grid.half_width must be smaller than sigma.radius"));
        }
        if !(self.noise_level >= 0.0) {
            return Err(config_err("noise.level must be non-negative"));
        }
        self.optimizer.validate().map_err(|e| config_err(e.to_string()))?;
        if !self.allow_inverse_crime && !(self.data_level > self.solver_level && self.data_spacing < self.spacing) {
            return Err(config_err(
                "data discretization must be strictly finer than the solver's (sigma.data_level > sigma.solver_level \
                 and grid.data_spacing < grid.spacing); set guard.allow_inverse_crime = true to override",
            ));
        }
        Ok(())
    }

    /// Override every random seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.noise_seed = seed;
        self.optimizer.seed = seed;
    }

    /// Fully resolved configuration text.
    pub fn to_text(&self) -> String {
        let o = &self.optimizer;
        let lines = [
            format!("experiment.name = {}", self.name),
            format!("phantom.code = {}", self.phantom.to_json()),
            format!("sigma.radius = {:?}", self.sigma_radius),
            format!("sigma.solver_level = {}", self.solver_level),
            format!("sigma.data_level = {}", self.data_level),
            format!("grid.spacing = {:?}", self.spacing),
            format!("grid.data_spacing = {:?}", self.data_spacing),
            format!("grid.half_width = {:?}", self.half_width),
            format!("patterns.set = {}", self.patterns),
            format!("noise.level = {:?}", self.noise_level),
            format!("noise.seed = {}", self.noise_seed),
            format!("init.code = {}", self.init.to_json()),
            format!("optimizer.method = {}", o.method),
            format!("optimizer.learning_rate = {:?}", o.learning_rate),
            format!("optimizer.beta1 = {:?}", o.beta1),
            format!("optimizer.beta2 = {:?}", o.beta2),
            format!("optimizer.epsilon = {:?}", o.epsilon),
            format!("optimizer.max_iterations = {}", o.max_iterations),
            format!("optimizer.sample_fraction = {:?}", o.sample_fraction),
            format!("optimizer.window = {}", o.window),
            format!("optimizer.tolerance = {:?}", o.tolerance),
            format!("optimizer.seed = {}", o.seed),
            format!("output.dump_every = {}", self.dump_every),
            format!("output.wall_time = {}", self.wall_time),
            format!("guard.allow_inverse_crime = {}", self.allow_inverse_crime),
        ];
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_roundtrip() {
        let cfg = ExperimentConfig::parse("# empty\n").unwrap();
        assert_eq!(cfg.solver_level, 3);
        assert_eq!(cfg.data_level, 4);
        assert_eq!(cfg.patterns, PatternSet::Yl12);
        assert_eq!(cfg.init.radius(), 0.45);
        assert_eq!(cfg.phantom.radius(), 0.6);
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn unknown_and_repeated_keys() {
        assert!(matches!(ExperimentConfig::parse("optimizer.lr = 0.1"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::parse("noise.level = 0.1\nnoise.level = 0.2"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::parse("noise.level"), Err(CliError::Config(_))));
    }

    #[test]
    fn inverse_crime_guard() {
        let same = "sigma.data_level = 3\ngrid.data_spacing = 0.06";
        assert!(ExperimentConfig::parse(same).is_err());
        assert!(ExperimentConfig::parse(&format!("{same}\nguard.allow_inverse_crime = true")).is_ok());
    }

    #[test]
    fn presets_are_admissible() {
        for name in ["sphere", "ellipsoid", "peanut", "bumpy"] {
            let cfg = ExperimentConfig::parse(&format!("phantom.preset = {name}\nphantom.radius = 0.5")).unwrap();
            assert!(LatentShapeModel::default().is_admissible(&cfg.phantom));
        }
        assert!(ExperimentConfig::parse("phantom.preset = cube").is_err());
    }
}
