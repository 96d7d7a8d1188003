//! TOML run configuration.
//!
//! ```toml
//! seed = 0
//!
//! [model]          # k1, k2, mu, nu, kappa, eps, delta, gamma, enforce_ideal_ratio
//! [grid]           # n = 128 or n = [64, 32]; length = 6.283185307179586 or [lx, ly]
//! [time]           # dt, t_end, cfl_safety, picard_tol, picard_max, theta_floor
//! [solver]         # solver_tol, max_iter
//! [output]         # snapshot_every (0 = initial and final only), dir
//!
//! [initial]
//! preset = "default"          # "default" | "equilibrium" | "cold-spot" | "fourier"
//! depth = 0.9                 # cold-spot temperature dip
//! width = 0.3                 # cold-spot radius
//! density = 0.0               # cold-spot density excess
//! [initial.rho]               # only with preset = "fourier"
//! offset = 1.0
//! modes = [{ k = [1], sin = 0.3 }]
//! [initial.theta]
//! offset = 1.0
//! modes = [{ k = [1], cos = 0.2 }]
//! ```
//!
//! Every key is optional. Unknown keys, type errors and physically inadmissible
//! values are all collected before parsing fails.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use brinkman_fourier::{Grid, ModelParams, TimeStepConfig};
use toml::{Table, Value};

use crate::initial::{FourierMode, FourierSeries, InitialSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Cells per axis; the length is the dimension.
    pub n: Vec<usize>,
    pub length: Vec<f64>,
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn build(&self) -> brinkman_fourier::Result<Grid> {
        match (self.n.as_slice(), self.length.as_slice()) {
            ([n], [l]) => Grid::new_1d(*n, *l),
            ([nx, ny], [lx, ly]) => Grid::new_2d(*nx, *ny, *lx, *ly),
            _ => Err(brinkman_fourier::Error::GridMismatch),
        }
    }

    /// Same domain with `n` cells along every axis scaled by `n / self.n[0]`.
    pub fn with_cells(&self, n0: usize) -> Self {
        let n = self.n.iter().map(|&k| k * n0 / self.n[0]).collect();
        Self { n, length: self.length.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputSpec {
    /// Write a snapshot every this many steps; 0 writes only the first and last state.
    pub snapshot_every: usize,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub time: TimeStepConfig,
    pub initial: InitialSpec,
    pub output: OutputSpec,
    pub seed: u64,
}

impl Default for RunConfig {
    /// Smooth mean-one data on `[0, 2 pi]` with 128 cells and a monatomic gas.
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            grid: GridSpec {
                n: vec![128],
                length: vec![std::f64::consts::TAU],
            },
            time: TimeStepConfig::default(),
            initial: InitialSpec::Default,
            output: OutputSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax { line: usize, column: usize, message: String },
    UnknownKey { path: String },
    Type { path: String, expected: &'static str },
    Invalid { path: String, value: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, column, message } => write!(f, "syntax error at {line}:{column}: {message}"),
            ConfigError::UnknownKey { path } => write!(f, "unknown key `{path}`"),
            ConfigError::Type { path, expected } => write!(f, "`{path}`: expected {expected}"),
            ConfigError::Invalid { path, value, reason } => write!(f, "`{path}` = {value}: {reason}"),
        }
    }
}

/// All problems found in one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Typed reader over one table that remembers which keys it consumed.
struct Section<'a> {
    table: Option<&'a Table>,
    path: String,
    seen: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(table: Option<&'a Table>, path: &str) -> Self {
        Self {
            table,
            path: path.to_string(),
            seen: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn get(&mut self, k: &str) -> Option<&'a Value> {
        self.seen.insert(k.to_string());
        self.table.and_then(|t| t.get(k))
    }

    fn f64(&mut self, k: &str, default: f64, errs: &mut Vec<ConfigError>) -> f64 {
        match self.get(k) {
            None => default,
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(_) => {
                errs.push(ConfigError::Type { path: self.key(k), expected: "a number" });
                default
            }
        }
    }

    fn usize(&mut self, k: &str, default: usize, errs: &mut Vec<ConfigError>) -> usize {
        match self.get(k) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(_) => {
                errs.push(ConfigError::Type {
                    path: self.key(k),
                    expected: "a non-negative integer",
                });
                default
            }
        }
    }

    fn bool(&mut self, k: &str, default: bool, errs: &mut Vec<ConfigError>) -> bool {
        match self.get(k) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                errs.push(ConfigError::Type { path: self.key(k), expected: "a boolean" });
                default
            }
        }
    }

    fn str(&mut self, k: &str, errs: &mut Vec<ConfigError>) -> Option<&'a str> {
        match self.get(k) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                errs.push(ConfigError::Type { path: self.key(k), expected: "a string" });
                None
            }
        }
    }

    fn table(&mut self, k: &str, errs: &mut Vec<ConfigError>) -> Option<&'a Table> {
        match self.get(k) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                errs.push(ConfigError::Type { path: self.key(k), expected: "a table" });
                None
            }
        }
    }

    /// A scalar or an array of scalars, each converted by `conv`.
    fn list<T>(&mut self, k: &str, expected: &'static str, conv: impl Fn(&Value) -> Option<T>, errs: &mut Vec<ConfigError>) -> Option<Vec<T>> {
        let v = self.get(k)?;
        let out = match v {
            Value::Array(items) => items.iter().map(&conv).collect::<Option<Vec<T>>>(),
            other => conv(other).map(|x| vec![x]),
        };
        if out.is_none() {
            errs.push(ConfigError::Type { path: self.key(k), expected });
        }
        out
    }

    fn finish(self, errs: &mut Vec<ConfigError>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.seen.contains(k) {
                    errs.push(ConfigError::UnknownKey { path: self.key(k) });
                }
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_usize(v: &Value) -> Option<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as usize),
        _ => None,
    }
}

fn invalid(errs: &mut Vec<ConfigError>, path: impl Into<String>, value: impl fmt::Display, reason: impl Into<String>) {
    errs.push(ConfigError::Invalid {
        path: path.into(),
        value: value.to_string(),
        reason: reason.into(),
    });
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let root: Table = text.parse::<Table>().map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigErrors(vec![ConfigError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }])
    })?;
    let mut errs = Vec::new();
    let d = RunConfig::default();
    let mut top = Section::new(Some(&root), "");

    let seed = match top.get("seed") {
        None => d.seed,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            errs.push(ConfigError::Type {
                path: "seed".into(),
                expected: "a non-negative integer",
            });
            d.seed
        }
    };

    let mut m = Section::new(top.table("model", &mut errs), "model");
    let dm = d.model;
    let model = ModelParams {
        k1: m.f64("k1", dm.k1, &mut errs),
        k2: m.f64("k2", dm.k2, &mut errs),
        mu: m.f64("mu", dm.mu, &mut errs),
        nu: m.f64("nu", dm.nu, &mut errs),
        kappa: m.f64("kappa", dm.kappa, &mut errs),
        eps: m.f64("eps", dm.eps, &mut errs),
        delta: m.f64("delta", dm.delta, &mut errs),
        gamma_exp: m.f64("gamma", dm.gamma_exp, &mut errs),
        enforce_ideal_ratio: m.bool("enforce_ideal_ratio", dm.enforce_ideal_ratio, &mut errs),
    };
    m.finish(&mut errs);
    if let Err(violations) = model.validate() {
        for v in violations {
            let key = if v.field == "gamma_exp" { "gamma" } else { v.field };
            invalid(&mut errs, format!("model.{key}"), v.value, v.reason);
        }
    }

    let mut g = Section::new(top.table("grid", &mut errs), "grid");
    let n = g
        .list("n", "a cell count or an array of cell counts", as_usize, &mut errs)
        .unwrap_or_else(|| d.grid.n.clone());
    let length = g.list("length", "a length or an array of lengths", as_f64, &mut errs);
    g.finish(&mut errs);
    let length = length.unwrap_or_else(|| vec![d.grid.length[0]; n.len()]);
    if !(1..=2).contains(&n.len()) {
        invalid(&mut errs, "grid.n", format!("{n:?}"), "only 1D and 2D grids are supported");
    } else if length.len() != n.len() {
        invalid(&mut errs, "grid.length", format!("{length:?}"), "needs one length per axis of grid.n");
    }
    for &k in &n {
        if k < 4 {
            invalid(&mut errs, "grid.n", k, "every axis needs at least 4 cells");
        }
    }
    for &l in &length {
        if !(l > 0.0 && l.is_finite()) {
            invalid(&mut errs, "grid.length", l, "domain length must be positive");
        }
    }
    let grid = GridSpec { n, length };

    let mut t = Section::new(top.table("time", &mut errs), "time");
    let dt = d.time;
    let mut time = TimeStepConfig {
        dt: t.f64("dt", dt.dt, &mut errs),
        t_end: t.f64("t_end", dt.t_end, &mut errs),
        cfl_safety: t.f64("cfl_safety", dt.cfl_safety, &mut errs),
        picard_tol: t.f64("picard_tol", dt.picard_tol, &mut errs),
        picard_max: t.usize("picard_max", dt.picard_max, &mut errs),
        theta_floor: t.f64("theta_floor", dt.theta_floor, &mut errs),
        ..dt
    };
    t.finish(&mut errs);
    let mut s = Section::new(top.table("solver", &mut errs), "solver");
    time.solver_tol = s.f64("solver_tol", dt.solver_tol, &mut errs);
    time.max_iter = s.usize("max_iter", dt.max_iter, &mut errs);
    s.finish(&mut errs);
    if let Err(brinkman_fourier::Error::InvalidArgument { name, value, reason }) = time.validate() {
        let section = if matches!(name, "solver_tol" | "max_iter") { "solver" } else { "time" };
        invalid(&mut errs, format!("{section}.{name}"), value, reason);
    }

    let mut o = Section::new(top.table("output", &mut errs), "output");
    let output = OutputSpec {
        snapshot_every: o.usize("snapshot_every", 0, &mut errs),
        dir: o.str("dir", &mut errs).map(PathBuf::from),
    };
    o.finish(&mut errs);

    let initial = parse_initial(top.table("initial", &mut errs), grid.dim(), &mut errs);
    top.finish(&mut errs);

    if errs.is_empty() {
        Ok(RunConfig {
            model,
            grid,
            time,
            initial,
            output,
            seed,
        })
    } else {
        Err(ConfigErrors(errs))
    }
}

fn parse_initial(table: Option<&Table>, dim: usize, errs: &mut Vec<ConfigError>) -> InitialSpec {
    let mut s = Section::new(table, "initial");
    let name = s.str("preset", errs).unwrap_or("default");
    let depth = s.f64("depth", 0.9, errs);
    let width = s.f64("width", 0.3, errs);
    let density = s.f64("density", 0.0, errs);
    let rho = s.table("rho", errs);
    let theta = s.table("theta", errs);
    s.finish(errs);
    let spec = match name {
        "default" => InitialSpec::Default,
        "equilibrium" => InitialSpec::Equilibrium,
        "cold-spot" => {
            if !(0.0..1.0).contains(&depth) {
                invalid(errs, "initial.depth", depth, "cold-spot depth must lie in [0, 1)");
            }
            if !(width > 0.0 && width.is_finite()) {
                invalid(errs, "initial.width", width, "cold-spot width must be positive");
            }
            if !(density > -1.0 && density.is_finite()) {
                invalid(errs, "initial.density", density, "cold-spot density excess must exceed -1");
            }
            InitialSpec::ColdSpot { depth, width, density }
        }
        "fourier" => {
            let rho = parse_series(rho, "initial.rho", dim, errs);
            let theta = parse_series(theta, "initial.theta", dim, errs);
            return InitialSpec::Fourier { rho, theta };
        }
        other => {
            invalid(errs, "initial.preset", other, "expected default, equilibrium, cold-spot or fourier");
            InitialSpec::Default
        }
    };
    for (key, present) in [("initial.rho", rho.is_some()), ("initial.theta", theta.is_some())] {
        if present {
            invalid(errs, key, "table", "Fourier coefficients need preset = \"fourier\"");
        }
    }
    spec
}

fn parse_series(table: Option<&Table>, path: &str, dim: usize, errs: &mut Vec<ConfigError>) -> FourierSeries {
    let mut s = Section::new(table, path);
    let offset = s.f64("offset", 1.0, errs);
    let mut modes = Vec::new();
    match s.get("modes") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let mpath = format!("{path}.modes[{i}]");
                let Value::Table(t) = item else {
                    errs.push(ConfigError::Type { path: mpath, expected: "a table" });
                    continue;
                };
                let mut ms = Section::new(Some(t), &mpath);
                let k = ms.list("k", "an array of wave numbers", as_usize, errs).unwrap_or_default();
                let cos = ms.f64("cos", 0.0, errs);
                let sin = ms.f64("sin", 0.0, errs);
                ms.finish(errs);
                if k.len() != dim {
                    invalid(errs, format!("{mpath}.k"), format!("{k:?}"), "needs one wave number per axis");
                    continue;
                }
                let mut kk = [0usize; 2];
                kk[..dim].copy_from_slice(&k);
                modes.push(FourierMode { k: kk, cos, sin });
            }
        }
        Some(_) => errs.push(ConfigError::Type {
            path: format!("{path}.modes"),
            expected: "an array of tables",
        }),
    }
    s.finish(errs);
    FourierSeries { offset, modes }
}
