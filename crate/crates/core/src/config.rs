//! Run configuration: a line-oriented `key = value` file plus
//! command-line overrides.
//!
//! ```text
//! # comments start with '#'
//! quad.regular_order = 8
//! solver.rel_tol = 1e-10
//! assembly.precision = f32
//! ```

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::assembly::{AssemblyConfig, Precision};
use crate::quadrature::QuadConfig;
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {message}")]
    InvalidValue { key: String, value: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Field-line tracing overrides. Unset values fall back to defaults
/// derived from the mesh.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TraceConfig {
    pub rel_tol: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub surface_tol: Option<f64>,
    pub e_floor: Option<f64>,
    pub max_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub quad: QuadConfig,
    pub solver: SolverConfig,
    pub precision: Precision,
    pub equilibrate: bool,
    pub trace: TraceConfig,
}

/// Every recognised key, in the order [`Config::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "quad.regular_order",
    "quad.duffy_points",
    "quad.near_duffy_points",
    "quad.eta",
    "quad.bisect_depth",
    "quad.bisect_trigger",
    "solver.restart",
    "solver.rel_tol",
    "solver.max_iters",
    "solver.verbose",
    "assembly.precision",
    "assembly.equilibrate",
    "trace.rel_tol",
    "trace.h_min",
    "trace.h_max",
    "trace.surface_tol",
    "trace.e_floor",
    "trace.max_length",
];

fn invalid(key: &str, value: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a number"))
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse_num(key, value)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(key, value, "must be positive"));
    }
    Ok(x)
}

fn at_least_one(key: &str, value: &str) -> Result<usize, ConfigError> {
    let n: usize = parse_num(key, value)?;
    if n == 0 {
        return Err(invalid(key, value, "must be at least 1"));
    }
    Ok(n)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

impl Default for Config {
    fn default() -> Self {
        let a = AssemblyConfig::default();
        Self {
            quad: a.quad,
            solver: SolverConfig::default(),
            precision: a.precision,
            equilibrate: a.equilibrate,
            trace: TraceConfig::default(),
        }
    }
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assembly(&self) -> AssemblyConfig {
        AssemblyConfig {
            quad: self.quad,
            precision: self.precision,
            equilibrate: self.equilibrate,
        }
    }

    /// Set one key. Values are validated immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "quad.regular_order" => {
                let order: usize = parse_num(key, v)?;
                crate::quadrature::regular_rule(order).map_err(|e| invalid(key, v, e.to_string()))?;
                self.quad.regular_order = order;
            }
            "quad.duffy_points" => self.quad.duffy_points = at_least_one(key, v)?,
            "quad.near_duffy_points" => self.quad.near_duffy_points = at_least_one(key, v)?,
            "quad.eta" => self.quad.eta = positive(key, v)?,
            "quad.bisect_depth" => self.quad.bisect_depth = parse_num(key, v)?,
            "quad.bisect_trigger" => self.quad.bisect_trigger = parse_num(key, v)?,
            "solver.restart" => self.solver.restart = at_least_one(key, v)?,
            "solver.rel_tol" => {
                let tol = positive(key, v)?;
                if tol >= 1.0 {
                    return Err(invalid(key, v, "must be below 1"));
                }
                self.solver.rel_tol = tol;
            }
            "solver.max_iters" => self.solver.max_iters = at_least_one(key, v)?,
            "solver.verbose" => self.solver.verbose = parse_bool(key, v)?,
            "assembly.precision" => {
                self.precision = match v {
                    "f64" | "double" => Precision::F64,
                    "f32" | "single" => Precision::F32,
                    _ => return Err(invalid(key, v, "expected f64 or f32")),
                }
            }
            "assembly.equilibrate" => self.equilibrate = parse_bool(key, v)?,
            "trace.rel_tol" => self.trace.rel_tol = Some(positive(key, v)?),
            "trace.h_min" => self.trace.h_min = Some(positive(key, v)?),
            "trace.h_max" => self.trace.h_max = Some(positive(key, v)?),
            "trace.surface_tol" => self.trace.surface_tol = Some(positive(key, v)?),
            "trace.e_floor" => self.trace.e_floor = Some(positive(key, v)?),
            "trace.max_length" => self.trace.max_length = Some(positive(key, v)?),
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            message: format!("expected key=value, got `{assignment}`"),
        })?;
        self.set(k, v)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            cfg.set(k, v).map_err(|e| ConfigError::Syntax {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Text form accepted by [`Config::parse`]. Unset trace values are
    /// written as comments.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let q = &self.quad;
        let sv = &self.solver;
        let precision = match self.precision {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        };
        let fixed = [
            q.regular_order.to_string(),
            q.duffy_points.to_string(),
            q.near_duffy_points.to_string(),
            format!("{:?}", q.eta),
            q.bisect_depth.to_string(),
            format!("{:?}", q.bisect_trigger),
            sv.restart.to_string(),
            format!("{:?}", sv.rel_tol),
            sv.max_iters.to_string(),
            sv.verbose.to_string(),
            precision.to_string(),
            self.equilibrate.to_string(),
        ];
        let t = &self.trace;
        let optional = [t.rel_tol, t.h_min, t.h_max, t.surface_tol, t.e_floor, t.max_length];
        let n_fixed = fixed.len();
        for (key, value) in KEYS.iter().zip(fixed) {
            let _ = writeln!(s, "{key} = {value}");
        }
        for (key, value) in KEYS[n_fixed..].iter().zip(optional) {
            match value {
                Some(x) => {
                    let _ = writeln!(s, "{key} = {x:?}");
                }
                None => {
                    let _ = writeln!(s, "# {key} = (mesh default)");
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::new();
        assert_eq!(c.quad, QuadConfig::default());
        assert_eq!(c.solver.restart, 100);
        assert_eq!(c.solver.rel_tol, 1e-8);
        assert_eq!(c.solver.max_iters, 2000);
        assert_eq!(c.precision, Precision::F64);
        assert!(c.equilibrate);
    }

    #[test]
    fn parse_and_override() {
        let mut c = Config::parse("# test\nquad.regular_order = 8\nsolver.rel_tol=1e-10 # tight\n\nassembly.precision = f32\ntrace.e_floor = 5\n").unwrap();
        assert_eq!(c.quad.regular_order, 8);
        assert_eq!(c.solver.rel_tol, 1e-10);
        assert_eq!(c.precision, Precision::F32);
        assert_eq!(c.trace.e_floor, Some(5.0));
        c.apply_override("solver.restart=30").unwrap();
        assert_eq!(c.solver.restart, 30);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Config::parse("quad.eta 2"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("\nfoo = 1"), Err(ConfigError::Syntax { line: 2, .. })));
        let mut c = Config::new();
        assert!(matches!(c.set("bogus", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(c.set("solver.rel_tol", "2").is_err());
        assert!(c.set("solver.rel_tol", "0").is_err());
        assert!(c.set("solver.restart", "0").is_err());
        assert!(c.set("quad.regular_order", "5").is_err());
        assert!(c.set("assembly.precision", "f16").is_err());
        assert!(c.apply_override("solver.restart").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::new();
        c.set("quad.eta", "1.5").unwrap();
        c.set("solver.verbose", "true").unwrap();
        c.set("assembly.equilibrate", "false").unwrap();
        c.set("trace.max_length", "3.25").unwrap();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(Config::parse(&Config::new().to_text()).unwrap(), Config::new());
        assert_eq!(c.to_text().lines().count(), KEYS.len());
    }
}
