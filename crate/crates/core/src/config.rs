//! Flat `key = value` run configuration.
//!
//! Model parameters are required; everything else has a default. Lines
//! starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::error::ParamError;
use crate::fbp::FbpOptions;
use crate::params::{ModelParams, PARAM_KEYS};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required config key `{0}`")]
    MissingKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Grid bounds default to the command's natural range when unset.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub count: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    fn log(count: usize) -> Self {
        Self {
            min: None,
            max: None,
            count,
            spacing: Spacing::Log,
        }
    }

    pub fn points(&self, default_min: f64, default_max: f64) -> Vec<f64> {
        let (lo, hi) = (self.min.unwrap_or(default_min), self.max.unwrap_or(default_max));
        let n = self.count;
        match self.spacing {
            Spacing::Log => crate::verify::log_grid(lo, hi, n),
            Spacing::Linear => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub fbp: FbpOptions,
    pub sim: Option<SimConfig>,
    /// Initial wealth for reconstructed paths.
    pub w0: f64,
    /// Every `path_stride`-th grid point goes into paths.csv.
    pub path_stride: usize,
    pub x_grid: GridSpec,
    pub y_grid: GridSpec,
    pub output_dir: Option<PathBuf>,
}

const SIM_KEYS: [&str; 5] = ["sim.dt", "sim.horizon_T", "sim.n_paths", "sim.seed", "sim.x0"];

impl RunConfig {
    pub fn reference() -> Self {
        Self {
            params: ModelParams::reference(),
            fbp: FbpOptions::default(),
            sim: None,
            w0: 1.0,
            path_stride: 10,
            x_grid: GridSpec::log(400),
            y_grid: GridSpec::log(400),
            output_dir: None,
        }
    }

    /// Parses config text, then applies `overrides` (as from `--set`).
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut map = parse_pairs(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_pairs(map)
    }

    pub fn load(path: &std::path::Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, overrides)
    }

    fn from_pairs(mut map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::reference();
        // A Sharpe ratio override is applied after mu is known.
        let sharpe = map.remove("sharpe_ratio").map(|v| num("sharpe_ratio", &v)).transpose()?;
        let mut values = BTreeMap::new();
        for key in PARAM_KEYS {
            let v = map.remove(key).ok_or_else(|| ConfigError::MissingKey(key.into()))?;
            values.insert(key.to_string(), num(key, &v)?);
        }
        cfg.params = ModelParams::from_map(&values)?;
        if let Some(sr) = sharpe {
            cfg.params.set("sharpe_ratio", sr)?;
        }

        let sim_given = SIM_KEYS.iter().filter(|k| map.contains_key(**k)).count();
        if sim_given > 0 {
            let mut get = |k: &str| map.remove(k).ok_or_else(|| ConfigError::MissingKey(k.into()));
            cfg.sim = Some(SimConfig {
                dt: num("sim.dt", &get("sim.dt")?)?,
                horizon_t: num("sim.horizon_T", &get("sim.horizon_T")?)?,
                n_paths: int("sim.n_paths", &get("sim.n_paths")?)?,
                seed: int("sim.seed", &get("sim.seed")?)? as u64,
                x0: num("sim.x0", &get("sim.x0")?)?,
            });
        }

        for (key, value) in map {
            let v = value.as_str();
            match key.as_str() {
                "ode.rel_tol" => cfg.fbp.controls.rel_tol = num(&key, v)?,
                "ode.abs_tol" => cfg.fbp.controls.abs_tol = num(&key, v)?,
                "ode.max_rel_step" => cfg.fbp.controls.max_rel_step = num(&key, v)?,
                "ode.max_steps" => cfg.fbp.controls.max_steps = int(&key, v)?,
                "fbp.eta_tol" => cfg.fbp.eta_tol = num(&key, v)?,
                "fbp.y_min_factor" => cfg.fbp.y_min_factor = num(&key, v)?,
                "sim.w0" => cfg.w0 = num(&key, v)?,
                "sim.path_stride" => cfg.path_stride = int(&key, v)?.max(1),
                "output_dir" => cfg.output_dir = Some(PathBuf::from(v)),
                k if k.starts_with("x_grid.") => grid_key(&mut cfg.x_grid, &key, v)?,
                k if k.starts_with("y_grid.") => grid_key(&mut cfg.y_grid, &key, v)?,
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }
        for g in [&cfg.x_grid, &cfg.y_grid] {
            if g.count < 2 {
                return Err(ConfigError::BadValue {
                    key: "grid count".into(),
                    value: g.count.to_string(),
                });
            }
        }
        Ok(cfg)
    }

    /// Flat text accepted by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in PARAM_KEYS {
            out += &format!("{key} = {}\n", self.params.get(key).unwrap());
        }
        let c = &self.fbp.controls;
        out += &format!("ode.rel_tol = {}\node.abs_tol = {}\n", c.rel_tol, c.abs_tol);
        out += &format!("fbp.eta_tol = {}\nfbp.y_min_factor = {}\n", self.fbp.eta_tol, self.fbp.y_min_factor);
        if let Some(s) = &self.sim {
            out += &format!(
                "sim.dt = {}\nsim.horizon_T = {}\nsim.n_paths = {}\nsim.seed = {}\nsim.x0 = {}\nsim.w0 = {}\n",
                s.dt, s.horizon_t, s.n_paths, s.seed, s.x0, self.w0
            );
        }
        out
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Splits `key=value` as given to `--set`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: s.to_string(),
        })
}

fn num(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
    })
}

fn int(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: v.into(),
    })
}

fn grid_key(g: &mut GridSpec, key: &str, v: &str) -> Result<(), ConfigError> {
    match key.split_once('.').map(|(_, f)| f) {
        Some("min") => g.min = Some(num(key, v)?),
        Some("max") => g.max = Some(num(key, v)?),
        Some("count") => g.count = int(key, v)?,
        Some("spacing") => {
            g.spacing = match v {
                "linear" => Spacing::Linear,
                "log" => Spacing::Log,
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: v.into(),
                    })
                }
            }
        }
        _ => return Err(ConfigError::UnknownKey(key.into())),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "r = 0.02\nmu = 0.12\nsigma = 0.2\nrho = 1\nalpha = 0.75\ndelta = 0.3\ngamma = 2\n";

    #[test]
    fn parses_reference() {
        let cfg = RunConfig::parse(&format!("# comment\n{BASE}"), &[]).unwrap();
        assert_eq!(cfg.params, ModelParams::reference());
        assert!(cfg.sim.is_none());
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = RunConfig::parse(BASE, &[]).unwrap();
        cfg.sim = Some(SimConfig {
            dt: 1e-3,
            horizon_t: 60.0,
            n_paths: 100,
            seed: 3,
            x0: 5.0,
        });
        let again = RunConfig::parse(&cfg.to_text(), &[]).unwrap();
        assert_eq!(again.params, cfg.params);
        assert_eq!(again.sim, cfg.sim);
    }

    #[test]
    fn overrides_and_sharpe() {
        let o = vec![parse_override("delta=0.5").unwrap(), parse_override("sharpe_ratio = 1").unwrap()];
        let cfg = RunConfig::parse(BASE, &o).unwrap();
        assert_eq!(cfg.params.delta, 0.5);
        assert!((cfg.params.mu - 0.22).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let missing = BASE.replace("gamma = 2\n", "");
        assert_eq!(RunConfig::parse(&missing, &[]).unwrap_err(), ConfigError::MissingKey("gamma".into()));
        assert!(matches!(
            RunConfig::parse(&format!("{BASE}bogus = 1\n"), &[]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(RunConfig::parse("r 0.02", &[]), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(
            RunConfig::parse(&format!("{BASE}sim.dt = 0.001\n"), &[]),
            Err(ConfigError::MissingKey(_))
        ));
        assert!(matches!(
            RunConfig::parse(&BASE.replace("0.2\n", "-0.2\n"), &[]),
            Err(ConfigError::Param(_))
        ));
        assert!(RunConfig::parse(&format!("{BASE}x_grid.count = 1\n"), &[]).is_err());
    }

    #[test]
    fn grid_spacing() {
        let g = GridSpec {
            min: None,
            max: Some(3.0),
            count: 3,
            spacing: Spacing::Linear,
        };
        assert_eq!(g.points(1.0, 100.0), vec![1.0, 2.0, 3.0]);
    }
}
