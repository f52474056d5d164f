//! Command-line front end: a flat `key = value` configuration format,
//! resolution of per-check defaults, dispatch to the estimators and
//! deterministic CSV / JSON reports.
//!
//! ```text
//! # sphere, first-order gradient bound
//! manifold.name = sphere
//! manifold.dim = 2
//! bounds.K1 = 1
//! bounds.K2 = 1
//! check.id = T12-2a
//! sim.n_paths = 20000
//! ```

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::dynamics::{step_count, ExitMonitor};
use crate::error::{Error, Result};
use crate::estimators::{
    check_inequality, estimate_expectation, estimate_pt, grad_cylindrical, grad_fd, ricci_short_time, CheckId, CheckOutcome, EstimateReport,
    EstimatorConfig, Verdict,
};
use crate::functionals::{battery, Cutoff, CylindricalFunctional, BATTERY};
use crate::geometry::{BoundFn, BoundMode, CurvatureBoundSpec, ManifoldModel, Point, Preset};
use crate::linalg::Vector;
use crate::transport::MuConvention;

/// Documented configuration keys.
pub const KEYS: &[(&str, &str)] = &[
    ("manifold.name", "euclidean | ou | sphere | hyperbolic (default euclidean)"),
    ("manifold.dim", "dimension (default 2)"),
    ("manifold.radius", "radius of sphere / hyperbolic space (default 1)"),
    ("manifold.lambda", "drift rate of the ou preset (default 1)"),
    ("sim.T", "horizon (default 0.5)"),
    ("sim.dt", "time step; T/dt must be an integer (default 0.001)"),
    ("sim.n_paths", "outer paths (default 20000)"),
    ("sim.inner_paths", "inner paths per node for nested conditional expectations (default 64)"),
    ("sim.seed", "master seed (default 1)"),
    ("bounds.K1", "constant upper bound (default: Einstein constant of the preset)"),
    ("bounds.K2", "constant lower bound (default: Einstein constant; local infimum − 0.001 for T11 checks)"),
    ("bounds.mu_convention", "restart | global (default restart)"),
    ("bounds.preset", "einstein | pointwise (default einstein)"),
    ("functional.name", "battery entry (default depends on the check)"),
    ("functional.times", "comma-separated times (default depends on the functional)"),
    ("functional.params", "comma-separated functional parameters"),
    ("functional.cutoff_R", "radius of the path-space cutoff (default 0.8 for T11-2/3/5, none otherwise)"),
    ("functional.cutoff_m", "number of leading nodes in the discrete radius (default all)"),
    ("check.id", "check id, or estimator id for `estimate`"),
    ("check.p", "exponent p in [1, 2] (default 2)"),
    ("check.q", "exponent q in [1, 2] (default 2)"),
    ("check.t0", "start of the entropy increment (default 0)"),
    ("check.t1", "end of the entropy increment / Poincaré time (default T)"),
    ("check.T_list", "horizons of short-time limits, exit fits and sweeps"),
    ("check.x", "starting point, chart-0 coordinates (default: equator on the sphere, origin otherwise)"),
    ("check.sigma", "standard errors allowed below zero (default 3)"),
    ("check.tolerance", "explicit margin tolerance (default sigma · stderr)"),
    ("check.power_fraction", "inconclusive when stderr exceeds this fraction of |margin|"),
    ("check.fd_delta", "finite-difference step (default 0.001)"),
    ("check.nested", "allow nested simulation for the Poincaré left side (default true)"),
    ("check.nested_entropy", "allow nested simulation for the entropy left side (default false)"),
    ("check.exit_monitor", "bridge | discrete (default bridge)"),
    ("check.radius", "ball radius for EXIT and the local curvature infimum (default 0.8)"),
    ("check.allow_unsafe_bound", "accept a T11 lower bound above the sampled infimum (default false)"),
    ("check.normalize", "rescale f to unit gradient at x in gradient checks (default true)"),
    ("check.invariant_stride", "check transport identities on every n-th path (default 100)"),
    ("output.format", "csv | json (default csv)"),
    ("output.path", "report file; `-` or unset writes to stdout"),
];

/// Estimators reachable through `estimate`.
pub const ESTIMATES: &[&str] = &["pt", "expectation", "grad-bismut", "grad-fd", "ricci", "curvature-inf"];

/// CSV header of every report.
pub const CSV_HEADER: &str = "check_id,manifold,dim,params,T,dt,n_paths,seed,lhs,lhs_stderr,rhs,rhs_stderr,margin,verdict";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundPreset {
    Einstein,
    Pointwise,
}

/// Parsed configuration before per-check defaults are filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub manifold: String,
    pub dim: usize,
    pub radius: f64,
    pub lambda: f64,
    pub est: EstimatorConfig,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub bound_preset: BoundPreset,
    pub functional: Option<String>,
    pub times: Option<Vec<f64>>,
    pub params: Vec<f64>,
    pub cutoff_radius: Option<f64>,
    pub cutoff_nodes: Option<usize>,
    pub id: Option<String>,
    pub x: Option<Vec<f64>>,
    pub format: OutputFormat,
    pub path: Option<String>,
    /// Line on which each key was set.
    pub lines: BTreeMap<String, usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifold: "euclidean".into(),
            dim: 2,
            radius: 1.0,
            lambda: 1.0,
            est: EstimatorConfig::default(),
            k1: None,
            k2: None,
            bound_preset: BoundPreset::Einstein,
            functional: None,
            times: None,
            params: Vec::new(),
            cutoff_radius: None,
            cutoff_nodes: None,
            id: None,
            x: None,
            format: OutputFormat::Csv,
            path: None,
            lines: BTreeMap::new(),
        }
    }
}

fn config_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line, key: key.into(), message: message.into() }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| config_err(line, key, format!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(config_err(line, key, "value must be finite"));
    }
    Ok(x)
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| config_err(line, key, format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(line, key, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(line, key, s.trim())).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Parse the text format: one `key = value` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| config_err(line, content, "expected `key = value`"))?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Parse either the text format or a JSON report carrying a `config` echo.
    pub fn parse_any(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| config_err(e.line(), "config", format!("invalid JSON: {e}")))?;
            let echo = doc.get("config").and_then(|c| c.as_object()).ok_or_else(|| config_err(1, "config", "JSON input needs a `config` object"))?;
            let mut cfg = Self::default();
            for (k, v) in echo {
                let v = v.as_str().ok_or_else(|| config_err(1, k, "config values must be strings"))?;
                cfg.set(0, k, v)?;
            }
            return Ok(cfg);
        }
        Self::parse(text)
    }

    /// Set one key; `line` is used in diagnostics (0 for command-line overrides).
    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(config_err(line, key, "unknown key"));
        }
        if line > 0 {
            if let Some(prev) = self.lines.get(key).filter(|&&l| l > 0) {
                return Err(config_err(line, key, format!("duplicate key (first set on line {prev})")));
            }
        }
        let e = &mut self.est;
        match key {
            "manifold.name" => {
                if !["euclidean", "ou", "sphere", "hyperbolic"].contains(&v) {
                    return Err(config_err(line, key, format!("unknown manifold `{v}`")));
                }
                self.manifold = v.into();
            }
            "manifold.dim" => self.dim = parse_usize(line, key, v)?,
            "manifold.radius" => self.radius = parse_f64(line, key, v)?,
            "manifold.lambda" => self.lambda = parse_f64(line, key, v)?,
            "sim.T" => e.horizon = parse_f64(line, key, v)?,
            "sim.dt" => e.dt = parse_f64(line, key, v)?,
            "sim.n_paths" => e.n_paths = parse_usize(line, key, v)?,
            "sim.inner_paths" => e.inner_paths = parse_usize(line, key, v)?,
            "sim.seed" => e.seed = v.parse().map_err(|_| config_err(line, key, format!("expected an unsigned integer, got `{v}`")))?,
            "bounds.K1" => self.k1 = Some(parse_f64(line, key, v)?),
            "bounds.K2" => self.k2 = Some(parse_f64(line, key, v)?),
            "bounds.mu_convention" => e.mu_convention = MuConvention::parse(v).ok_or_else(|| config_err(line, key, "expected restart or global"))?,
            "bounds.preset" => {
                self.bound_preset = match v {
                    "einstein" => BoundPreset::Einstein,
                    "pointwise" => BoundPreset::Pointwise,
                    _ => return Err(config_err(line, key, "expected einstein or pointwise")),
                }
            }
            "functional.name" => {
                if !BATTERY.contains(&v) {
                    return Err(config_err(line, key, format!("unknown functional `{v}`; expected one of {}", BATTERY.join(", "))));
                }
                self.functional = Some(v.into());
            }
            "functional.times" => self.times = Some(parse_list(line, key, v)?),
            "functional.params" => self.params = parse_list(line, key, v)?,
            "functional.cutoff_R" => self.cutoff_radius = Some(parse_f64(line, key, v)?),
            "functional.cutoff_m" => self.cutoff_nodes = Some(parse_usize(line, key, v)?),
            "check.id" => self.id = Some(v.into()),
            "check.p" => e.p = parse_f64(line, key, v)?,
            "check.q" => e.q = parse_f64(line, key, v)?,
            "check.t0" => e.t0 = Some(parse_f64(line, key, v)?),
            "check.t1" => e.t1 = Some(parse_f64(line, key, v)?),
            "check.T_list" => e.t_list = Some(parse_list(line, key, v)?),
            "check.x" => self.x = Some(parse_list(line, key, v)?),
            "check.sigma" => e.sigma_level = parse_f64(line, key, v)?,
            "check.tolerance" => e.tolerance = Some(parse_f64(line, key, v)?),
            "check.power_fraction" => e.power_fraction = Some(parse_f64(line, key, v)?),
            "check.fd_delta" => e.fd_delta = parse_f64(line, key, v)?,
            "check.nested" => e.nested = parse_bool(line, key, v)?,
            "check.nested_entropy" => e.nested_entropy = parse_bool(line, key, v)?,
            "check.exit_monitor" => {
                e.exit_monitor = match v {
                    "bridge" => ExitMonitor::Bridge,
                    "discrete" => ExitMonitor::Discrete,
                    _ => return Err(config_err(line, key, "expected bridge or discrete")),
                }
            }
            "check.radius" => e.ball_radius = parse_f64(line, key, v)?,
            "check.allow_unsafe_bound" => e.allow_unsafe_local_bound = parse_bool(line, key, v)?,
            "check.normalize" => e.normalize_gradient = parse_bool(line, key, v)?,
            "check.invariant_stride" => e.invariant_stride = parse_usize(line, key, v)?,
            "output.format" => {
                self.format = match v {
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    _ => return Err(config_err(line, key, "expected csv or json")),
                }
            }
            "output.path" => self.path = if v == "-" || v.is_empty() { None } else { Some(v.into()) },
            _ => unreachable!("key table and parser disagree on `{key}`"),
        }
        self.lines.insert(key.into(), line);
        Ok(())
    }

    fn line_of(&self, key: &str) -> usize {
        self.lines.get(key).copied().unwrap_or(0)
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> Error {
        config_err(self.line_of(key), key, message)
    }

    pub fn model(&self) -> Result<ManifoldModel> {
        let preset = match self.manifold.as_str() {
            "euclidean" => Preset::Euclidean,
            "ou" => Preset::OrnsteinUhlenbeck { lambda: self.lambda },
            "sphere" => Preset::Sphere { radius: self.radius },
            _ => Preset::Hyperbolic { radius: self.radius },
        };
        ManifoldModel::build(preset, self.dim).map_err(|e| self.invalid("manifold.dim", e.to_string()))
    }
}

// -------------------------------------------------------------------------
// resolution

/// What a run computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Estimate,
    Sweep,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Estimate => "estimate",
            Command::Sweep => "sweep",
        }
    }
}

/// A configuration with every default filled in.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub command: Command,
    pub check: Option<CheckId>,
    pub estimate: Option<&'static str>,
    pub model: ManifoldModel,
    pub x: Point,
    pub bounds: CurvatureBoundSpec,
    pub functional: Option<CylindricalFunctional>,
    pub est: EstimatorConfig,
    pub config: RunConfig,
}

/// Default starting point: the equator on the sphere, the origin elsewhere.
pub fn reference_point(model: &ManifoldModel) -> Point {
    match model.preset {
        Preset::Sphere { .. } => Point::new(0, Vector::basis(model.dim, 0)),
        _ => model.origin(),
    }
}

fn default_functional(id: Option<CheckId>, estimate: Option<&str>) -> (&'static str, Vec<f64>) {
    match (id, estimate) {
        (Some(CheckId::T12PathGradient | CheckId::T11PathGradient | CheckId::T11PathGradientSquare | CheckId::T11Poincare), _) => ("two_time", vec![]),
        (Some(CheckId::T12LogSobolev | CheckId::T11LogSobolev), _) => ("eigenfunction", vec![1.0]),
        _ => ("eigenfunction", vec![]),
    }
}

/// Radius assumed for the localized checks when no cutoff is configured.
pub const DEFAULT_CUTOFF_RADIUS: f64 = 0.8;
/// Margin kept below the sampled curvature infimum for the default local bound.
pub const LOCAL_BOUND_SAFETY: f64 = 1e-3;
/// Sample points used for the local curvature infimum.
pub const LOCAL_INF_SAMPLES: usize = 256;

impl ResolvedRun {
    pub fn resolve(config: RunConfig, command: Command) -> Result<Self> {
        let model = config.model()?;
        let raw_id = config.id.clone().ok_or_else(|| config_err(0, "check.id", "missing check id"))?;
        let (check, estimate) = match command {
            Command::Estimate => {
                let e = ESTIMATES
                    .iter()
                    .copied()
                    .find(|e| e.eq_ignore_ascii_case(&raw_id))
                    .ok_or_else(|| config.invalid("check.id", format!("unknown estimator `{raw_id}`; expected one of {}", ESTIMATES.join(", "))))?;
                (None, Some(e))
            }
            _ => {
                let id = CheckId::parse(&raw_id).ok_or_else(|| config.invalid("check.id", format!("unknown check `{raw_id}`")))?;
                (Some(id), None)
            }
        };
        let mut est = config.est.clone();
        let ranges = [
            ("sim.T", est.horizon > 0.0, "must be positive"),
            ("sim.dt", est.dt > 0.0, "must be positive"),
            ("sim.n_paths", est.n_paths >= 2, "need at least two paths"),
            ("check.p", est.p >= 1.0, "must be at least 1"),
            ("check.q", est.q >= 1.0, "must be at least 1"),
            ("check.fd_delta", est.fd_delta > 0.0, "must be positive"),
            ("check.sigma", est.sigma_level > 0.0, "must be positive"),
            ("check.invariant_stride", est.invariant_stride > 0, "must be positive"),
        ];
        if let Some((key, _, msg)) = ranges.iter().find(|r| !r.1) {
            return Err(config.invalid(key, *msg));
        }
        est.validate().map_err(|e| config.invalid("sim.n_paths", e.to_string()))?;
        step_count(est.horizon, est.dt).map_err(|e| config.invalid("sim.dt", e.to_string()))?;
        if let Some(id) = check {
            if !matches!(id, CheckId::Ricci | CheckId::SlopeLower | CheckId::SlopeUpper | CheckId::Exit) {
                for (key, v) in [("check.p", est.p), ("check.q", est.q)] {
                    if !(1.0..=2.0).contains(&v) {
                        return Err(config.invalid(key, format!("must lie in [1, 2], got {v}")));
                    }
                }
            }
        }
        if let (Some(t0), Some(t1)) = (est.t0, est.t1) {
            if !(t1 > t0) {
                return Err(config.invalid("check.t1", format!("need t1 > t0 (t0 = {t0}, t1 = {t1})")));
            }
        }
        let x = match &config.x {
            None => reference_point(&model),
            Some(u) => {
                if u.len() != model.dim {
                    return Err(config.invalid("check.x", format!("expected {} coordinates", model.dim)));
                }
                let p = Point::new(0, Vector::from_slice(u));
                model.check_in_chart(&p).map_err(|e| config.invalid("check.x", e.to_string()))?;
                p
            }
        };

        let functional = if check == Some(CheckId::Exit) || estimate == Some("curvature-inf") {
            None
        } else {
            let (default_name, default_params) = default_functional(check, estimate);
            let name = config.functional.clone().unwrap_or_else(|| default_name.into());
            let params = if config.functional.is_none() && config.params.is_empty() { default_params } else { config.params.clone() };
            let mut f = battery(&name, &model, &x, est.horizon, config.times.as_deref(), &params).map_err(|e| config.invalid("functional.name", e.to_string()))?;
            let radius = config.cutoff_radius.or(match check {
                Some(CheckId::T11PathGradient | CheckId::T11PathGradientSquare | CheckId::T11Poincare) => Some(DEFAULT_CUTOFF_RADIUS),
                _ => None,
            });
            if let Some(r) = radius {
                let mut c = Cutoff::new(&x, r);
                c.nodes = config.cutoff_nodes;
                f = f.with_cutoff(c);
            }
            f.validate(&model).map_err(|e| config.invalid("functional.name", e.to_string()))?;
            if let Some(&t) = f.times.last() {
                if (t - est.horizon).abs() > 1e-12 {
                    return Err(config.invalid("functional.times", format!("last functional time {t} differs from sim.T = {}", est.horizon)));
                }
            }
            Some(f)
        };

        let c = model.einstein_constant();
        let bounds = match config.bound_preset {
            BoundPreset::Pointwise => {
                let k1 = config.k1.map(|v| BoundFn::Constant { value: v }).unwrap_or(BoundFn::PointwiseMax);
                let k2 = config.k2.map(|v| BoundFn::Constant { value: v }).unwrap_or(BoundFn::PointwiseMin);
                CurvatureBoundSpec { k1, k2, mode: BoundMode::TwoSided }
            }
            BoundPreset::Einstein => {
                let local = check.is_some_and(|id| id.is_local());
                let default_k2 = if local && config.k2.is_none() {
                    let r = functional.as_ref().and_then(|f| f.cutoff.as_ref()).map(|c| c.radius).unwrap_or(est.ball_radius);
                    let (inf, _) = model.local_curvature_inf(&x, r, LOCAL_INF_SAMPLES, est.seed).map_err(|e| config.invalid("functional.cutoff_R", e.to_string()))?;
                    inf - LOCAL_BOUND_SAFETY
                } else {
                    c
                };
                let mut k1 = config.k1.unwrap_or(c);
                let mut k2 = config.k2.unwrap_or(default_k2);
                if k1 < k2 {
                    match (config.k1, config.k2) {
                        (None, Some(_)) => k1 = k2,
                        (Some(_), None) => k2 = k1,
                        _ => return Err(config.invalid("bounds.K2", format!("need K1 >= K2 (K1 = {k1}, K2 = {k2})"))),
                    }
                }
                CurvatureBoundSpec::constant(k1, k2)
            }
        };
        // K1 >= K2 at the start and on the atlas origin
        for p in [x, model.origin()] {
            bounds.eval(&model, &p).map_err(|e| config.invalid("bounds.K2", e.to_string()))?;
        }
        if let Some(id) = check {
            if matches!(id, CheckId::ConstantGradient | CheckId::ConstantSecond) && bounds.constants().is_none() {
                return Err(config.invalid("bounds.preset", format!("{id} needs constant bounds")));
            }
        }
        est.workers = None;
        Ok(Self { command, check, estimate, model, x, bounds, functional, est, config })
    }

    /// The full resolved configuration in the text format's key space.
    /// `output.path` is left out so a replayed report can be written elsewhere.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let e = &self.est;
        put("manifold.name", self.model.name().into());
        put("manifold.dim", self.model.dim.to_string());
        put("manifold.radius", self.config.radius.to_string());
        put("manifold.lambda", self.config.lambda.to_string());
        put("sim.T", e.horizon.to_string());
        put("sim.dt", e.dt.to_string());
        put("sim.n_paths", e.n_paths.to_string());
        put("sim.inner_paths", e.inner_paths.to_string());
        put("sim.seed", e.seed.to_string());
        put("bounds.mu_convention", e.mu_convention.as_str().into());
        match self.config.bound_preset {
            BoundPreset::Einstein => put("bounds.preset", "einstein".into()),
            BoundPreset::Pointwise => put("bounds.preset", "pointwise".into()),
        }
        if let BoundFn::Constant { value } = self.bounds.k1 {
            put("bounds.K1", value.to_string());
        }
        if let BoundFn::Constant { value } = self.bounds.k2 {
            put("bounds.K2", value.to_string());
        }
        if let Some(f) = &self.functional {
            let name = self.config.functional.clone().unwrap_or_else(|| default_functional(self.check, self.estimate).0.into());
            put("functional.name", name);
            put("functional.times", fmt_list(&f.times));
            let params = if self.config.functional.is_none() && self.config.params.is_empty() {
                default_functional(self.check, self.estimate).1
            } else {
                self.config.params.clone()
            };
            put("functional.params", fmt_list(&params));
            if let Some(c) = &f.cutoff {
                put("functional.cutoff_R", c.radius.to_string());
                if let Some(n) = c.nodes {
                    put("functional.cutoff_m", n.to_string());
                }
            }
        }
        let id = match (self.check, self.estimate) {
            (Some(c), _) => c.as_str().to_string(),
            (_, Some(e)) => e.to_string(),
            _ => unreachable!(),
        };
        put("check.id", id);
        put("check.p", e.p.to_string());
        put("check.q", e.q.to_string());
        if let Some(t) = e.t0 {
            put("check.t0", t.to_string());
        }
        if let Some(t) = e.t1 {
            put("check.t1", t.to_string());
        }
        if let Some(ts) = &e.t_list {
            put("check.T_list", fmt_list(ts));
        }
        put("check.x", fmt_list(&self.x.u.as_slice()[..self.model.dim]));
        put("check.sigma", e.sigma_level.to_string());
        if let Some(t) = e.tolerance {
            put("check.tolerance", t.to_string());
        }
        if let Some(f) = e.power_fraction {
            put("check.power_fraction", f.to_string());
        }
        put("check.fd_delta", e.fd_delta.to_string());
        put("check.nested", e.nested.to_string());
        put("check.nested_entropy", e.nested_entropy.to_string());
        put(
            "check.exit_monitor",
            match e.exit_monitor {
                ExitMonitor::Bridge => "bridge".into(),
                ExitMonitor::Discrete => "discrete".into(),
            },
        );
        put("check.radius", e.ball_radius.to_string());
        put("check.allow_unsafe_bound", e.allow_unsafe_local_bound.to_string());
        put("check.normalize", e.normalize_gradient.to_string());
        put("check.invariant_stride", e.invariant_stride.to_string());
        put(
            "output.format",
            match self.config.format {
                OutputFormat::Csv => "csv".into(),
                OutputFormat::Json => "json".into(),
            },
        );
        m
    }
}

// -------------------------------------------------------------------------
// running

/// One CSV row; empty cells are `None`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub check_id: String,
    pub manifold: String,
    pub dim: usize,
    pub params: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub lhs: Option<f64>,
    pub lhs_stderr: Option<f64>,
    pub rhs: Option<f64>,
    pub rhs_stderr: Option<f64>,
    pub margin: Option<f64>,
    pub verdict: String,
}

/// Everything a run produces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub rows: Vec<Row>,
    pub outcomes: Vec<CheckOutcome>,
    pub estimates: Vec<EstimateReport>,
    #[serde(skip)]
    pub exit_code: i32,
}

fn exit_code_of(verdicts: impl IntoIterator<Item = Verdict>) -> i32 {
    let vs: Vec<Verdict> = verdicts.into_iter().collect();
    if vs.contains(&Verdict::Violated) {
        2
    } else if vs.contains(&Verdict::Inconclusive) {
        3
    } else {
        0
    }
}

impl ResolvedRun {
    fn row(&self, check_id: &str, horizon: f64) -> Row {
        Row {
            check_id: check_id.into(),
            manifold: self.model.name().into(),
            dim: self.model.dim,
            params: self.model.params_label(),
            horizon,
            dt: self.est.dt,
            n_paths: self.est.n_paths,
            seed: self.est.seed,
            lhs: None,
            lhs_stderr: None,
            rhs: None,
            rhs_stderr: None,
            margin: None,
            verdict: String::new(),
        }
    }

    fn outcome_row(&self, o: &CheckOutcome, horizon: f64) -> Row {
        Row {
            lhs: Some(o.lhs.value0()),
            lhs_stderr: Some(o.lhs.stderr0()),
            rhs: Some(o.rhs.value0()),
            rhs_stderr: Some(o.rhs.stderr0()),
            margin: Some(o.margin),
            verdict: o.verdict.as_str().into(),
            ..self.row(o.check_id.as_str(), horizon)
        }
    }

    /// Horizon reported for a check: 0 for the extrapolated short-time limits.
    fn report_horizon(&self, id: CheckId) -> f64 {
        match id {
            CheckId::Ricci | CheckId::SlopeLower | CheckId::SlopeUpper => 0.0,
            CheckId::Exit => *self.est.t_list.as_ref().and_then(|t| t.last()).unwrap_or(&0.2),
            _ => self.est.horizon,
        }
    }

    fn functional(&self) -> &CylindricalFunctional {
        self.functional.as_ref().expect("resolved functional")
    }

    fn run_check(&self) -> Result<RunReport> {
        let id = self.check.expect("check id");
        let f = self.functional.clone().unwrap_or_else(|| CylindricalFunctional::single("none", self.est.horizon, crate::functionals::coordinate_function(&self.model)));
        let o = check_inequality(&self.model, id, &self.bounds, &f, &self.x, &self.est)?;
        let rows = vec![self.outcome_row(&o, self.report_horizon(id))];
        Ok(RunReport { command: "check".into(), config: self.echo(), rows, exit_code: exit_code_of([o.verdict]), outcomes: vec![o], estimates: vec![] })
    }

    fn run_sweep(&self) -> Result<RunReport> {
        let id = self.check.expect("check id");
        match id {
            CheckId::Ricci | CheckId::SlopeLower | CheckId::SlopeUpper | CheckId::Exit => {
                let mut report = self.run_check()?;
                let o = report.outcomes[0].clone();
                let mut rows = Vec::new();
                if id == CheckId::Exit {
                    let mut k = 0;
                    while let Some(&t) = o.rhs.extras.get(&format!("horizon_{k}")) {
                        rows.push(Row {
                            lhs: Some(o.rhs.extras[&format!("probability_{k}")]),
                            lhs_stderr: Some(o.rhs.extras[&format!("probability_{k}_stderr")]),
                            verdict: "exit_probability".into(),
                            ..self.row(id.as_str(), t)
                        });
                        k += 1;
                    }
                } else {
                    // finite-T values carry an O(T) bias, so only the limit gets a verdict
                    let k1 = self.bounds.eval(&self.model, &self.x)?.0;
                    let mut k = 0;
                    while let Some(&t) = o.extras.get(&format!("T_{k}")) {
                        let v = o.extras[&format!("value_{k}")];
                        let se = o.extras[&format!("stderr_{k}")];
                        let mut row = self.row(id.as_str(), t);
                        if id == CheckId::Ricci {
                            row.lhs = Some(v);
                            row.lhs_stderr = Some(se);
                            row.rhs = Some(k1);
                        } else {
                            row.rhs = Some(v);
                            row.rhs_stderr = Some(se);
                        }
                        row.verdict = "series".into();
                        rows.push(row);
                        k += 1;
                    }
                }
                rows.extend(report.rows);
                report.rows = rows;
                report.command = "sweep".into();
                Ok(report)
            }
            _ => {
                let ts = self.est.t_list.clone().ok_or_else(|| config_err(self.config.line_of("check.T_list"), "check.T_list", "sweep needs check.T_list"))?;
                let mut outcomes = Vec::new();
                let mut rows = Vec::new();
                for &t in &ts {
                    let mut cfg = self.config.clone();
                    cfg.est.horizon = t;
                    cfg.times = None;
                    cfg.est.t1 = None;
                    let run = ResolvedRun::resolve(cfg, Command::Check)?;
                    let o = check_inequality(&run.model, id, &run.bounds, run.functional(), &run.x, &run.est)?;
                    rows.push(self.outcome_row(&o, t));
                    outcomes.push(o);
                }
                Ok(RunReport {
                    command: "sweep".into(),
                    config: self.echo(),
                    rows,
                    exit_code: exit_code_of(outcomes.iter().map(|o| o.verdict)),
                    outcomes,
                    estimates: vec![],
                })
            }
        }
    }

    fn run_estimate(&self) -> Result<RunReport> {
        let name = self.estimate.expect("estimator id");
        let est = &self.est;
        let report = match name {
            "pt" => {
                let g = self.functional().endpoint_function().ok_or_else(|| self.config.invalid("functional.name", "pt needs an endpoint functional"))?;
                estimate_pt(&self.model, &g, &self.x, est)?
            }
            "expectation" => estimate_expectation(&self.model, self.functional(), &self.x, est)?,
            "grad-bismut" => grad_cylindrical(&self.model, self.functional(), &self.x, est)?,
            "grad-fd" => grad_fd(&self.model, self.functional(), &self.x, est)?,
            "ricci" => {
                let g = self.functional().endpoint_function().ok_or_else(|| self.config.invalid("functional.name", "ricci needs an endpoint functional"))?;
                let r = ricci_short_time(&self.model, &g, &self.x, est)?;
                let mut rep = EstimateReport::scalar("Ric(grad f, grad f)(x), short-time limit", r.p_form.limit, r.p_form.limit_stderr, est.n_paths);
                rep.extras.insert("variance_form".into(), r.variance_form.limit);
                rep.extras.insert("variance_form_stderr".into(), r.variance_form.limit_stderr);
                rep.extras.insert("extrapolation_error".into(), r.p_form.extrapolation_error);
                if let Some(res) = r.p_form.linearity_residual {
                    rep.extras.insert("linearity_residual".into(), res);
                }
                rep
            }
            "curvature-inf" => {
                let (inf, at) = self.model.local_curvature_inf(&self.x, est.ball_radius, est.n_paths, est.seed)?;
                let mut rep = EstimateReport::scalar("inf of Ric_Z on the ball", inf, 0.0, est.n_paths + 1);
                rep.extras.insert("radius".into(), est.ball_radius);
                rep.extras.insert("argmin_chart".into(), at.chart as f64);
                for j in 0..self.model.dim {
                    rep.extras.insert(format!("argmin_u{j}"), at.u[j]);
                }
                rep
            }
            _ => unreachable!(),
        };
        let horizon = if name == "ricci" { 0.0 } else { est.horizon };
        let rows = report
            .value
            .iter()
            .zip(&report.stderr)
            .enumerate()
            .map(|(j, (v, se))| {
                let label = if report.value.len() > 1 { format!("{name}[{j}]") } else { name.to_string() };
                Row {
                    lhs: Some(*v),
                    lhs_stderr: Some(*se),
                    rhs: report.extras.get("closed_form").copied(),
                    verdict: "estimate".into(),
                    ..self.row(&label, horizon)
                }
            })
            .collect();
        Ok(RunReport { command: "estimate".into(), config: self.echo(), rows, outcomes: vec![], estimates: vec![report], exit_code: 0 })
    }

    pub fn run(&self) -> Result<RunReport> {
        match self.command {
            Command::Check => self.run_check(),
            Command::Sweep => self.run_sweep(),
            Command::Estimate => self.run_estimate(),
        }
    }
}

/// Resolve and run a configuration.
pub fn run_config(config: RunConfig, command: Command) -> Result<RunReport> {
    ResolvedRun::resolve(config, command)?.run()
}

// -------------------------------------------------------------------------
// output

fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn render(report: &RunReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in &report.rows {
                let cells = [
                    csv_cell(&r.check_id),
                    csv_cell(&r.manifold),
                    r.dim.to_string(),
                    csv_cell(&r.params),
                    r.horizon.to_string(),
                    r.dt.to_string(),
                    r.n_paths.to_string(),
                    r.seed.to_string(),
                    num(r.lhs),
                    num(r.lhs_stderr),
                    num(r.rhs),
                    num(r.rhs_stderr),
                    num(r.margin),
                    csv_cell(&r.verdict),
                ];
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Write the report to `path` (stdout when `None`).
pub fn emit_report(report: &RunReport, format: OutputFormat, path: Option<&str>) -> Result<()> {
    let text = render(report, format)?;
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        Some(p) => std::fs::write(p, text)?,
    }
    Ok(())
}

// -------------------------------------------------------------------------
// command line

#[derive(Parser, Debug)]
#[command(name = "curvpath", version, about = "Monte Carlo checks of curvature bounds through path-space inequalities")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Configuration file (text format, or a JSON report to replay).
    #[arg(short, long)]
    config: Option<std::path::PathBuf>,
    /// Overrides as `key=value`, applied after the file.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum CliCommand {
    /// Run one inequality check.
    Check(RunArgs),
    /// Run one estimator.
    Estimate(RunArgs),
    /// Run a check over `check.T_list`.
    Sweep(RunArgs),
    /// List presets, functionals, checks, estimators and configuration keys.
    ListPresets,
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            RunConfig::parse_any(&text)?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| config_err(0, o, "override must look like key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        cfg.lines.remove(k);
        cfg.set(0, k, v)?;
    }
    Ok(cfg)
}

fn list_presets() -> String {
    let mut s = String::new();
    s.push_str("presets (manifold.name, parameters, Ric_Z):\n");
    s.push_str("  euclidean   dim 1-4                          0\n");
    s.push_str("  ou          dim 1-4, lambda                  lambda\n");
    s.push_str("  sphere      dim 2-3, radius                  (dim - 1) / radius^2\n");
    s.push_str("  hyperbolic  dim 2-3, radius                  -(dim - 1) / radius^2\n");
    s.push_str(&format!("functionals: {}\n", BATTERY.join(", ")));
    s.push_str(&format!("checks: {}\n", CheckId::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")));
    s.push_str(&format!("estimators: {}\n", ESTIMATES.join(", ")));
    s.push_str("keys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<28} {d}\n"));
    }
    s
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (args, command) = match cli.command {
        CliCommand::ListPresets => {
            print!("{}", list_presets());
            return 0;
        }
        CliCommand::Check(a) => (a, Command::Check),
        CliCommand::Estimate(a) => (a, Command::Estimate),
        CliCommand::Sweep(a) => (a, Command::Sweep),
    };
    let result = load(&args).and_then(|cfg| {
        let format = cfg.format;
        let path = cfg.path.clone();
        let report = run_config(cfg, command)?;
        emit_report(&report, format, path.as_deref())?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for r in &report.rows {
                eprintln!("{} {} margin={} verdict={}", r.check_id, r.manifold, num(r.margin), r.verdict);
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
