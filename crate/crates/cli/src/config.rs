//! Run configuration: defaults per subcommand, a plain `key = value` file
//! format mirroring the command-line flags, and conversion to core types.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shearmix::{Model, ShearProfile};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Lyapunov,
    Hypotheses,
    Drift,
    Correlations,
    Steer,
    Mix,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Lyapunov => "lyapunov",
            Command::Hypotheses => "hypotheses",
            Command::Drift => "drift",
            Command::Correlations => "correlations",
            Command::Steer => "steer",
            Command::Mix => "mix",
        }
    }
}

/// A shear profile as written in a config: `identity` or
/// `cos=a0,a1,...;sin=b1,b2,...` (either part may be omitted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileConfig {
    Identity,
    Trig { cos: Vec<f64>, sin: Vec<f64> },
}

impl ProfileConfig {
    pub fn parse(field: &str, text: &str) -> Result<Self, CliError> {
        let text = text.trim();
        if text == "identity" {
            return Ok(ProfileConfig::Identity);
        }
        let (mut cos, mut sin) = (Vec::new(), Vec::new());
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, list) = part
                .split_once('=')
                .ok_or_else(|| CliError::config(field, format!("expected `cos=...` or `sin=...`, got `{part}`")))?;
            let values = parse_list(field, list)?;
            match key.trim() {
                "cos" => cos = values,
                "sin" => sin = values,
                other => return Err(CliError::config(field, format!("unknown coefficient list `{other}`"))),
            }
        }
        let profile = ProfileConfig::Trig { cos, sin };
        profile.build(field)?;
        Ok(profile)
    }

    pub fn build(&self, field: &str) -> Result<ShearProfile, CliError> {
        match self {
            ProfileConfig::Identity => Ok(ShearProfile::identity()),
            ProfileConfig::Trig { cos, sin } => {
                ShearProfile::trig(cos.clone(), sin.clone()).map_err(|e| CliError::config(field, e.to_string()))
            }
        }
    }

    fn render(&self) -> String {
        match self {
            ProfileConfig::Identity => "identity".into(),
            ProfileConfig::Trig { cos, sin } => format!("cos={};sin={}", render_list(cos), render_list(sin)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    Pierrehumbert,
    Chirikov,
    Custom { f1: ProfileConfig, f2: ProfileConfig },
}

impl ModelConfig {
    pub fn build(&self) -> Result<Model, CliError> {
        match self {
            ModelConfig::Pierrehumbert => Ok(Model::pierrehumbert()),
            ModelConfig::Chirikov => Ok(Model::chirikov()),
            ModelConfig::Custom { f1, f2 } => {
                Model::new("custom", f1.build("f1")?, f2.build("f2")?).map_err(|e| CliError::config("model", e.to_string()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelConfig,
    /// Duration bound `T`; the duration cap for `steer`.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Extra horizons for `lyapunov`; empty means just `T`.
    #[serde(rename = "T_grid")]
    pub horizon_grid: Vec<f64>,
    pub seed: u64,
    pub m: usize,
    pub samples: usize,
    pub grid: usize,
    pub beta: f64,
    pub h: f64,
    /// Mixing radii, strictly decreasing; empty selects the dyadic default.
    pub radii: Vec<f64>,
    pub start: Option<[f64; 2]>,
    pub target: Option<[f64; 2]>,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let (m, samples) = match command {
            Command::Simulate => (100, 1),
            Command::Lyapunov => (1000, 200),
            Command::Hypotheses => (0, 10_000),
            Command::Drift => (1, 10_000),
            Command::Correlations => (30, 100_000),
            Command::Steer => (0, 1),
            Command::Mix => (20, 1),
        };
        Self {
            command,
            model: ModelConfig::Pierrehumbert,
            horizon: if command == Command::Steer { 1.0 } else { 10.0 },
            horizon_grid: Vec::new(),
            seed: DEFAULT_SEED,
            m,
            samples,
            grid: 256,
            beta: 0.2,
            h: 0.25,
            radii: Vec::new(),
            start: None,
            target: None,
            out: PathBuf::from("runs"),
        }
    }

    /// Defaults, then the config file (if any), then `overrides` in order.
    pub fn resolve(command: Command, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self::defaults(command);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        let mut pending_profiles = Vec::new();
        for (k, v) in overrides {
            if k == "f1" || k == "f2" {
                pending_profiles.push((k.as_str(), v.as_str()));
            } else {
                cfg.set(k, v)?;
            }
        }
        for (k, v) in pending_profiles {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let mut profiles = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config("config", format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            // profiles are applied after `model` regardless of order
            if k == "f1" || k == "f2" {
                profiles.push((k, v));
            } else {
                self.set(k, v)?;
            }
        }
        for (k, v) in profiles {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "model" => {
                self.model = match value {
                    "pierrehumbert" => ModelConfig::Pierrehumbert,
                    "chirikov" => ModelConfig::Chirikov,
                    "custom" => ModelConfig::Custom {
                        f1: ProfileConfig::Identity,
                        f2: ProfileConfig::Identity,
                    },
                    other => return Err(CliError::config("model", format!("unknown model `{other}`"))),
                }
            }
            "f1" | "f2" => {
                let profile = ProfileConfig::parse(key, value)?;
                let ModelConfig::Custom { f1, f2 } = &mut self.model else {
                    return Err(CliError::config(key, "profiles can only be set with model = custom"));
                };
                *(if key == "f1" { f1 } else { f2 }) = profile;
            }
            "T" => self.horizon = parse_num(key, value)?,
            "T_grid" => self.horizon_grid = parse_list(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "samples" => self.samples = parse_num(key, value)?,
            "grid" => self.grid = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "h" => self.h = parse_num(key, value)?,
            "radii" => self.radii = parse_list(key, value)?,
            "start" => self.start = parse_point(key, value)?,
            "target" => self.target = parse_point(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(CliError::config(other, "unknown key")),
        }
        Ok(())
    }

    /// The config in the file format; parsing it back reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let model = match &self.model {
            ModelConfig::Pierrehumbert => "pierrehumbert",
            ModelConfig::Chirikov => "chirikov",
            ModelConfig::Custom { .. } => "custom",
        };
        let _ = writeln!(s, "model = {model}");
        if let ModelConfig::Custom { f1, f2 } = &self.model {
            let _ = writeln!(s, "f1 = {}", f1.render());
            let _ = writeln!(s, "f2 = {}", f2.render());
        }
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "T_grid = {}", render_list(&self.horizon_grid));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "grid = {}", self.grid);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "h = {}", self.h);
        let _ = writeln!(s, "radii = {}", render_list(&self.radii));
        let _ = writeln!(s, "start = {}", self.start.map_or(String::new(), |p| render_list(&p)));
        let _ = writeln!(s, "target = {}", self.target.map_or(String::new(), |p| render_list(&p)));
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }

    pub fn horizons(&self) -> Vec<f64> {
        if self.horizon_grid.is_empty() {
            vec![self.horizon]
        } else {
            self.horizon_grid.clone()
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, text: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    text.trim()
        .parse()
        .map_err(|e| CliError::config(field, format!("`{text}`: {e}")))
}

fn parse_list(field: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: f64 = parse_num(field, t)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::config(field, format!("`{t}` is not finite")))
            }
        })
        .collect()
}

fn parse_point(field: &str, text: &str) -> Result<Option<[f64; 2]>, CliError> {
    let v = parse_list(field, text)?;
    match v.as_slice() {
        [] => Ok(None),
        [q, p] => Ok(Some([*q, *p])),
        _ => Err(CliError::config(field, "expected `q,p`")),
    }
}

fn render_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::defaults(Command::Mix);
        cfg.apply_text(
            "f2 = cos=0.5,0.25;sin=1,-0.125  # order does not matter\nmodel = custom\nf1 = identity\nT = 2.5\nradii = 1.5,0.75\nstart = 0.1,0.2\n",
        )
        .unwrap();
        let mut back = RunConfig::defaults(Command::Mix);
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn float_text_is_exact() {
        let mut cfg = RunConfig::defaults(Command::Drift);
        cfg.horizon = 0.1 + 0.2;
        cfg.beta = 1.0 / 3.0;
        let mut back = RunConfig::defaults(Command::Drift);
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let mut cfg = RunConfig::defaults(Command::Mix);
        cfg.set("model", "custom").unwrap();
        let err = cfg.set("f1", "sin=1,x").unwrap_err().to_string();
        assert!(err.contains("f1"), "{err}");
        let err = cfg.set("f2", "cos=3").unwrap_err().to_string();
        assert!(err.contains("f2") && err.contains("constant"), "{err}");
        let err = cfg.set("samples", "-4").unwrap_err().to_string();
        assert!(err.contains("samples"), "{err}");
        assert!(cfg.set("colour", "red").unwrap_err().to_string().contains("colour"));
        let mut plain = RunConfig::defaults(Command::Mix);
        assert!(plain.set("f1", "identity").unwrap_err().to_string().contains("custom"));
    }
}
