//! Flat `key = value` experiment configuration with canonical rendering.

use crate::error::{Error, Result};
use crate::geometry::{
    perturbed_profile, profile_from_csv, random_profile, round_profile, Grid, MetricProfile,
};
use serde::{Deserialize, Serialize};

/// Initial profile selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    Round,
    Perturbed { epsilon: f64, mode: u32 },
    Random { seed: u64, amplitude: f64 },
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Only cp1_profile is implemented; kept explicit so configs self-describe.
    pub geometry: String,
    /// Number of grid nodes (cells + 1); must be odd so the cell count is even.
    pub n_grid: usize,
    pub init: InitSpec,
    pub t_max: f64,
    pub tol_converge: f64,
    pub cfl_safety: f64,
    pub record_every: f64,
    pub entropy_every: f64,
    pub entropy_tol: f64,
    pub output_dir: String,
    pub multistart: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: "cp1_profile".into(),
            n_grid: 401,
            init: InitSpec::Round,
            t_max: 50.0,
            tol_converge: 1e-5,
            cfl_safety: 0.2,
            record_every: 0.05,
            entropy_every: 0.5,
            entropy_tol: 1e-8,
            output_dir: "runs".into(),
            multistart: 0,
        }
    }
}

fn validation(key: &str, msg: impl Into<String>) -> Error {
    Error::Validation { key: key.into(), msg: msg.into() }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_grid - 1)
    }

    /// Build the initial profile this config describes.
    pub fn initial_profile(&self) -> Result<MetricProfile> {
        let grid = self.grid()?;
        match &self.init {
            InitSpec::Round => Ok(round_profile(&grid)),
            InitSpec::Perturbed { epsilon, mode } => perturbed_profile(&grid, *epsilon, *mode),
            InitSpec::Random { seed, amplitude } => random_profile(&grid, *seed, *amplitude),
            InitSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                let p = profile_from_csv(&text)?;
                if p.grid().len() != self.n_grid {
                    return Err(validation(
                        "n_grid",
                        format!("profile file has {} nodes, config says {}", p.grid().len(), self.n_grid),
                    ));
                }
                Ok(p)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometry != "cp1_profile" {
            return Err(validation("geometry", "only cp1_profile is supported"));
        }
        if self.n_grid < 33 || self.n_grid % 2 == 0 {
            return Err(validation("n_grid", "need an odd node count >= 33"));
        }
        for (key, v) in [
            ("t_max", self.t_max),
            ("tol_converge", self.tol_converge),
            ("cfl_safety", self.cfl_safety),
            ("record_every", self.record_every),
            ("entropy_every", self.entropy_every),
            ("entropy_tol", self.entropy_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(validation(key, "must be a positive finite number"));
            }
        }
        if self.cfl_safety > 1.0 {
            return Err(validation("cfl_safety", "must be <= 1"));
        }
        if self.entropy_tol < 1e-10 {
            return Err(validation("entropy_tol", "below the solver roundoff floor 1e-10"));
        }
        match &self.init {
            InitSpec::Round => {}
            InitSpec::Perturbed { epsilon, mode } => {
                if !epsilon.is_finite() {
                    return Err(validation("epsilon", "must be finite"));
                }
                if *mode == 0 {
                    return Err(validation("mode", "must be >= 1"));
                }
            }
            InitSpec::Random { amplitude, .. } => {
                if !(*amplitude > 0.0) || !amplitude.is_finite() {
                    return Err(validation("amplitude", "must be a positive finite number"));
                }
            }
            InitSpec::File { path } => {
                if path.is_empty() {
                    return Err(validation("path", "init = file needs a path"));
                }
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("geometry = {}\n", self.geometry));
        out.push_str(&format!("n_grid = {}\n", self.n_grid));
        match &self.init {
            InitSpec::Round => out.push_str("init = round\n"),
            InitSpec::Perturbed { epsilon, mode } => {
                out.push_str("init = perturbed\n");
                out.push_str(&format!("epsilon = {epsilon}\n"));
                out.push_str(&format!("mode = {mode}\n"));
            }
            InitSpec::Random { seed, amplitude } => {
                out.push_str("init = random\n");
                out.push_str(&format!("seed = {seed}\n"));
                out.push_str(&format!("amplitude = {amplitude}\n"));
            }
            InitSpec::File { path } => {
                out.push_str("init = file\n");
                out.push_str(&format!("path = {path}\n"));
            }
        }
        out.push_str(&format!("t_max = {}\n", self.t_max));
        out.push_str(&format!("tol_converge = {}\n", self.tol_converge));
        out.push_str(&format!("cfl_safety = {}\n", self.cfl_safety));
        out.push_str(&format!("record_every = {}\n", self.record_every));
        out.push_str(&format!("entropy_every = {}\n", self.entropy_every));
        out.push_str(&format!("entropy_tol = {}\n", self.entropy_tol));
        out.push_str(&format!("output_dir = {}\n", self.output_dir));
        out.push_str(&format!("multistart = {}\n", self.multistart));
        out
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, val: &str, line: usize) -> Result<T> {
    val.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad value {val:?} for {key}"),
    })
}

/// Parse line-based `key = value` text; `#` starts a comment; unknown keys
/// are rejected. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    // init sub-parameters collected, then assembled once the kind is known
    let mut init_kind: Option<String> = None;
    let mut epsilon: Option<f64> = None;
    let mut mode: Option<u32> = None;
    let mut seed: Option<u64> = None;
    let mut amplitude: Option<f64> = None;
    let mut path: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let val = val.trim();
        match key {
            "geometry" => cfg.geometry = val.to_string(),
            "n_grid" => cfg.n_grid = parse_num(key, val, lineno)?,
            "init" => init_kind = Some(val.to_string()),
            "epsilon" => epsilon = Some(parse_num(key, val, lineno)?),
            "mode" => mode = Some(parse_num(key, val, lineno)?),
            "seed" => seed = Some(parse_num(key, val, lineno)?),
            "amplitude" => amplitude = Some(parse_num(key, val, lineno)?),
            "path" => path = Some(val.to_string()),
            "t_max" => cfg.t_max = parse_num(key, val, lineno)?,
            "tol_converge" => cfg.tol_converge = parse_num(key, val, lineno)?,
            "cfl_safety" => cfg.cfl_safety = parse_num(key, val, lineno)?,
            "record_every" => cfg.record_every = parse_num(key, val, lineno)?,
            "entropy_every" => cfg.entropy_every = parse_num(key, val, lineno)?,
            "entropy_tol" => cfg.entropy_tol = parse_num(key, val, lineno)?,
            "output_dir" => cfg.output_dir = val.to_string(),
            "multistart" => cfg.multistart = parse_num(key, val, lineno)?,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    cfg.init = match init_kind.as_deref() {
        None | Some("round") => InitSpec::Round,
        Some("perturbed") => InitSpec::Perturbed {
            epsilon: epsilon.ok_or_else(|| validation("epsilon", "required for init = perturbed"))?,
            mode: mode.ok_or_else(|| validation("mode", "required for init = perturbed"))?,
        },
        Some("random") => InitSpec::Random {
            seed: seed.ok_or_else(|| validation("seed", "required for init = random"))?,
            amplitude: amplitude
                .ok_or_else(|| validation("amplitude", "required for init = random"))?,
        },
        Some("file") => InitSpec::File {
            path: path.ok_or_else(|| validation("path", "required for init = file"))?,
        },
        Some(other) => return Err(validation("init", format!("unknown init kind {other:?}"))),
    };
    cfg.validate()?;
    Ok(cfg)
}
