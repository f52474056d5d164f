//! Monte Carlo estimators built on the path simulator: semigroup values,
//! gradient representations, conditional expectations, the inequality checks
//! and the short-time curvature limits.
//!
//! Every estimator draws path `i` from the stream keyed by `(seed, i)`, so two
//! estimators run with the same seed see the same paths.

mod conditional;
mod gradient;
mod inequality;
mod shorttime;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::ExitMonitor;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::stats;
use crate::transport::{MuConvention, TransportDefects};

pub use conditional::{conditional_backend, conditional_exp, ConditionalBackend};
pub use gradient::{estimate_expectation, estimate_pt, grad_bismut, grad_cylindrical, grad_fd, gradient_pairs, GradientPair};
pub use inequality::{check_inequality, INTEGRABILITY_EPSILON};
pub use shorttime::{ricci_short_time, richardson, slope_detector, RicciEstimate, ShortTimeLimit, SlopeSide};

/// Sampling and decision parameters shared by all estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Inner paths per outer node for nested conditional expectations.
    pub inner_paths: usize,
    pub seed: u64,
    pub mu_convention: MuConvention,
    pub p: f64,
    pub q: f64,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    /// Horizons for short-time limits and exit fits; `None` picks per check.
    pub t_list: Option<Vec<f64>>,
    pub fd_delta: f64,
    /// Number of standard errors a margin may fall below zero and still hold.
    pub sigma_level: f64,
    /// Explicit tolerance on the margin; the default is `sigma_level · stderr`.
    pub tolerance: Option<f64>,
    /// Report "inconclusive" when the margin stderr exceeds this fraction of `|margin|`.
    pub power_fraction: Option<f64>,
    /// Allow nested simulation for the Poincaré left-hand side.
    pub nested: bool,
    /// Allow nested simulation for the entropy left-hand side (biased by `log`).
    pub nested_entropy: bool,
    /// Rescale point functions to `|∇f|(x) = 1` in gradient-bound checks.
    pub normalize_gradient: bool,
    /// Ball radius for exit checks and for the local curvature infimum.
    pub ball_radius: f64,
    pub exit_monitor: ExitMonitor,
    /// Accept a local lower bound above the sampled curvature infimum.
    pub allow_unsafe_local_bound: bool,
    /// Check the transport identities on every `invariant_stride`-th path.
    pub invariant_stride: usize,
    /// Worker threads; `None` uses the shared pool.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            horizon: 0.5,
            dt: 1e-3,
            n_paths: 20_000,
            inner_paths: 64,
            seed: 1,
            mu_convention: MuConvention::Restart,
            p: 2.0,
            q: 2.0,
            t0: None,
            t1: None,
            t_list: None,
            fd_delta: 1e-3,
            sigma_level: 3.0,
            tolerance: None,
            power_fraction: None,
            nested: true,
            nested_entropy: false,
            normalize_gradient: true,
            ball_radius: 0.8,
            exit_monitor: ExitMonitor::Bridge,
            allow_unsafe_local_bound: false,
            invariant_stride: 100,
            workers: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return bad("need T > 0 and dt > 0");
        }
        if self.n_paths < 2 {
            return bad("need at least two paths");
        }
        if !(self.p >= 1.0) || !(self.q >= 1.0) {
            return bad("exponents p and q must be at least 1");
        }
        if !(self.fd_delta > 0.0) || !(self.sigma_level > 0.0) {
            return bad("fd step and sigma level must be positive");
        }
        if self.invariant_stride == 0 {
            return bad("invariant stride must be positive");
        }
        Ok(())
    }
}

// -------------------------------------------------------------------------
// reports

/// A (possibly vector) Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub label: String,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
    pub extras: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn scalar(label: &str, value: f64, stderr: f64, n: usize) -> Self {
        Self { label: label.into(), value: vec![value], stderr: vec![stderr], n, extras: BTreeMap::new() }
    }

    pub fn vector(label: &str, value: Vec<f64>, stderr: Vec<f64>, n: usize) -> Self {
        Self { label: label.into(), value, stderr, n, extras: BTreeMap::new() }
    }

    /// First component.
    pub fn value0(&self) -> f64 {
        self.value[0]
    }

    pub fn stderr0(&self) -> f64 {
        self.stderr[0]
    }

    pub fn with_extra(mut self, key: &str, v: f64) -> Self {
        self.extras.insert(key.into(), v);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Identifiers of the checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckId {
    #[serde(rename = "T12-2a")]
    T12GradientBound,
    #[serde(rename = "T12-2b")]
    T12SecondBound,
    #[serde(rename = "T12-3")]
    T12PathGradient,
    #[serde(rename = "T12-4")]
    T12LogSobolev,
    #[serde(rename = "T12-5")]
    T12Poincare,
    #[serde(rename = "T11-2")]
    T11PathGradient,
    #[serde(rename = "T11-3")]
    T11PathGradientSquare,
    #[serde(rename = "T11-4")]
    T11LogSobolev,
    #[serde(rename = "T11-5")]
    T11Poincare,
    #[serde(rename = "C22-grad")]
    ConstantGradient,
    #[serde(rename = "C22-second")]
    ConstantSecond,
    #[serde(rename = "RIC")]
    Ricci,
    #[serde(rename = "SLOPE-LOWER")]
    SlopeLower,
    #[serde(rename = "SLOPE-UPPER")]
    SlopeUpper,
    #[serde(rename = "EXIT")]
    Exit,
}

impl CheckId {
    pub const ALL: [CheckId; 15] = [
        CheckId::T12GradientBound,
        CheckId::T12SecondBound,
        CheckId::T12PathGradient,
        CheckId::T12LogSobolev,
        CheckId::T12Poincare,
        CheckId::T11PathGradient,
        CheckId::T11PathGradientSquare,
        CheckId::T11LogSobolev,
        CheckId::T11Poincare,
        CheckId::ConstantGradient,
        CheckId::ConstantSecond,
        CheckId::Ricci,
        CheckId::SlopeLower,
        CheckId::SlopeUpper,
        CheckId::Exit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::T12GradientBound => "T12-2a",
            CheckId::T12SecondBound => "T12-2b",
            CheckId::T12PathGradient => "T12-3",
            CheckId::T12LogSobolev => "T12-4",
            CheckId::T12Poincare => "T12-5",
            CheckId::T11PathGradient => "T11-2",
            CheckId::T11PathGradientSquare => "T11-3",
            CheckId::T11LogSobolev => "T11-4",
            CheckId::T11Poincare => "T11-5",
            CheckId::ConstantGradient => "C22-grad",
            CheckId::ConstantSecond => "C22-second",
            CheckId::Ricci => "RIC",
            CheckId::SlopeLower => "SLOPE-LOWER",
            CheckId::SlopeUpper => "SLOPE-UPPER",
            CheckId::Exit => "EXIT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }

    /// Checks of the localized family, whose lower bound must stay below the
    /// curvature infimum on a ball.
    pub fn is_local(&self) -> bool {
        matches!(self, CheckId::T11PathGradient | CheckId::T11PathGradientSquare | CheckId::T11LogSobolev | CheckId::T11Poincare)
    }
}

impl std::fmt::Display for CheckId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of one inequality check: `margin = rhs − lhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check_id: CheckId,
    pub lhs: EstimateReport,
    pub rhs: EstimateReport,
    pub margin: f64,
    /// Standard error of the margin from per-path influence values, which
    /// accounts for the correlation between both sides.
    pub margin_stderr: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub extras: BTreeMap<String, f64>,
}

impl CheckOutcome {
    /// Fail with [`Error::InconclusivePower`] when the margin is not resolved
    /// to within `fraction` of its size.
    pub fn require_power(&self, fraction: f64) -> Result<()> {
        if self.margin_stderr > fraction * self.margin.abs() {
            return Err(Error::InconclusivePower { stderr: self.margin_stderr, margin: self.margin, fraction });
        }
        Ok(())
    }
}

/// Verdict and tolerance for `margin ± stderr`.
///
/// A margin holds when it is no more than `sigma_level` standard errors (and
/// no more than the explicit tolerance, if any) below zero; it is violated
/// when it is more than `sigma_level` standard errors below zero; anything in
/// between is inconclusive.
pub fn decide(margin: f64, stderr: f64, scale: f64, cfg: &EstimatorConfig) -> (Verdict, f64) {
    let slack = 1e-9 * scale.abs().max(1.0);
    let band = cfg.sigma_level * stderr + slack;
    let tol = cfg.tolerance.map(|t| t.min(band)).unwrap_or(band);
    let mut verdict = if !margin.is_finite() || !stderr.is_finite() {
        Verdict::Inconclusive
    } else if margin >= -tol {
        Verdict::Holds
    } else if margin < -band {
        Verdict::Violated
    } else {
        Verdict::Inconclusive
    };
    if let Some(f) = cfg.power_fraction {
        if stderr > f * margin.abs() {
            verdict = Verdict::Inconclusive;
        }
    }
    (verdict, tol)
}

pub(crate) fn outcome(
    check_id: CheckId,
    lhs: EstimateReport,
    rhs: EstimateReport,
    margin: f64,
    margin_stderr: f64,
    cfg: &EstimatorConfig,
    extras: BTreeMap<String, f64>,
) -> CheckOutcome {
    let (verdict, tolerance) = decide(margin, margin_stderr, rhs.value0(), cfg);
    CheckOutcome { check_id, lhs, rhs, margin, margin_stderr, tolerance, verdict, extras }
}

// -------------------------------------------------------------------------
// shared helpers

pub(crate) fn run<T, F>(cfg: &EstimatorConfig, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match cfg.workers {
        Some(w) => crate::parallel::map_paths_with(w, n, f),
        None => crate::parallel::map_paths(n, f),
    }
}

/// Component-wise means and standard errors of vector samples.
pub(crate) fn vector_mean_stderr(vs: &[Vector], dim: usize) -> (Vec<f64>, Vec<f64>) {
    (0..dim)
        .map(|j| {
            let xs: Vec<f64> = vs.iter().map(|v| v[j]).collect();
            stats::mean_stderr(&xs)
        })
        .unzip()
}

/// Plug-in estimate of `|a + c·E V|^p` with the `O(1/n)` bias of the squared
/// norm removed, and its linearisation.
#[derive(Clone, Debug)]
pub(crate) struct PowerOfMean {
    pub value: f64,
    /// `∂/∂m |a + c m|^p` at the sample mean.
    pub grad: Vector,
    pub stderr: f64,
}

impl PowerOfMean {
    /// Per-path influence `grad · V_i` (up to a constant).
    pub fn influence(&self, v: &Vector) -> f64 {
        self.grad.dot(v)
    }
}

pub(crate) fn power_of_mean(vs: &[Vector], offset: &Vector, coeff: f64, p: f64) -> PowerOfMean {
    let n = vs.len();
    let dim = offset.dim();
    let mut mean = Vector::zeros(dim);
    let mut trace_cov = 0.0;
    for j in 0..dim {
        let xs: Vec<f64> = vs.iter().map(|v| v[j]).collect();
        mean[j] = stats::mean(&xs);
        trace_cov += stats::variance(&xs);
    }
    let b = *offset + mean.scale(coeff);
    let sq = (b.norm_sq() - coeff * coeff * trace_cov / n as f64).max(0.0);
    let value = sq.powf(0.5 * p);
    let grad = if sq > 0.0 { b.scale(p * sq.powf(0.5 * p - 1.0) * coeff) } else { Vector::zeros(dim) };
    let infl: Vec<f64> = vs.iter().map(|v| grad.dot(v)).collect();
    let (_, stderr) = stats::mean_stderr(&infl);
    PowerOfMean { value, grad, stderr }
}

/// Summary keys for the transport identities checked on a subsample.
pub(crate) fn defect_extras(defects: &[TransportDefects], extras: &mut BTreeMap<String, f64>) {
    if defects.is_empty() {
        return;
    }
    let merged = defects.iter().skip(1).fold(defects[0], |a, b| a.merge(b));
    extras.insert("transport_paths".into(), defects.len() as f64);
    extras.insert("transport_cocycle".into(), merged.cocycle);
    extras.insert("transport_shift_identity".into(), merged.shift_identity);
    extras.insert("transport_norm_excess".into(), merged.norm_excess);
    extras.insert("transport_bounds_hold".into(), if merged.bounds_hold { 1.0 } else { 0.0 });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_ids_round_trip() {
        for id in CheckId::ALL {
            assert_eq!(CheckId::parse(id.as_str()), Some(id));
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{}\"", id.as_str()));
        }
        assert_eq!(CheckId::parse("t12-2A"), Some(CheckId::T12GradientBound));
        assert_eq!(CheckId::parse("T13"), None);
    }

    #[test]
    fn verdict_bands() {
        let cfg = EstimatorConfig::default();
        assert_eq!(decide(0.1, 0.01, 1.0, &cfg).0, Verdict::Holds);
        assert_eq!(decide(-0.02, 0.01, 1.0, &cfg).0, Verdict::Holds);
        assert_eq!(decide(-0.05, 0.01, 1.0, &cfg).0, Verdict::Violated);
        assert_eq!(decide(0.0, 0.0, 1.0, &cfg).0, Verdict::Holds);
        let strict = EstimatorConfig { tolerance: Some(0.01), ..cfg.clone() };
        assert_eq!(decide(-0.02, 0.01, 1.0, &strict).0, Verdict::Inconclusive);
        let powered = EstimatorConfig { power_fraction: Some(0.5), ..cfg };
        assert_eq!(decide(0.01, 0.01, 1.0, &powered).0, Verdict::Inconclusive);
        assert_eq!(decide(0.1, 0.01, 1.0, &powered).0, Verdict::Holds);
    }

    #[test]
    fn power_of_mean_removes_noise_bias() {
        // V_i = ±1 with mean 0: the plug-in |m̂|² is biased by var/n
        let vs: Vec<Vector> = (0..1000).map(|i| Vector::from_slice(&[if i % 2 == 0 { 1.0 } else { -1.0 }])).collect();
        let pm = power_of_mean(&vs, &Vector::zeros(1), 1.0, 2.0);
        assert!(pm.value.abs() < 1e-12);
        let shifted: Vec<Vector> = vs.iter().map(|v| *v + Vector::from_slice(&[3.0])).collect();
        let pm = power_of_mean(&shifted, &Vector::zeros(1), 1.0, 2.0);
        assert!((pm.value - (9.0 - 1000.0 / 999.0 / 1000.0)).abs() < 1e-12);
        assert!((pm.grad[0] - 6.0).abs() < 1e-3);
    }
}
