use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_from, PathSample};
use crate::error::{Error, Result};
use crate::functionals::CylindricalFunctional;
use crate::geometry::ManifoldModel;
use crate::rng::NormalStream;
use crate::stats;

use super::EstimatorConfig;

/// How `E(F^k | F_t)` is obtained on a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalBackend {
    /// `t` is the end of the path, so the value is `F^k` itself.
    Terminal,
    /// Closed-form semigroup of an endpoint functional.
    Analytic,
    /// Average over inner paths branching off the outer path at `t`.
    Nested,
}

impl ConditionalBackend {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionalBackend::Terminal => "terminal",
            ConditionalBackend::Analytic => "analytic",
            ConditionalBackend::Nested => "nested",
        }
    }
}

fn analytic_value(model: &ManifoldModel, f: &CylindricalFunctional, path: &PathSample, t_idx: usize, power: u32) -> Option<f64> {
    let g = f.endpoint_function()?;
    let s = f.times[0] - path.time(t_idx);
    if s < -1e-12 {
        return None;
    }
    let p = path.point(t_idx);
    match power {
        1 => g.semigroup(model, s.max(0.0), &p),
        2 => g.semigroup_square(model, s.max(0.0), &p),
        _ => None,
    }
}

/// Backend that [`conditional_exp`] will use at grid index `t_idx` of a path
/// with `steps` steps.
pub fn conditional_backend(model: &ManifoldModel, f: &CylindricalFunctional, t_idx: usize, steps: usize, power: u32, allow_nested: bool) -> Result<ConditionalBackend> {
    if t_idx == steps {
        return Ok(ConditionalBackend::Terminal);
    }
    let probe = f.endpoint_function().and_then(|g| match power {
        1 => g.semigroup(model, 0.0, &model.origin()),
        2 => g.semigroup_square(model, 0.0, &model.origin()),
        _ => None,
    });
    if probe.is_some() {
        Ok(ConditionalBackend::Analytic)
    } else if allow_nested {
        Ok(ConditionalBackend::Nested)
    } else {
        Err(Error::NoBackend(f.name.clone()))
    }
}

/// The outer path up to `t_idx` followed by an inner continuation.
fn splice(outer: &PathSample, t_idx: usize, inner: PathSample) -> PathSample {
    let t0 = outer.time(t_idx);
    let mut states = outer.states[..=t_idx].to_vec();
    states.extend(inner.states.into_iter().skip(1).map(|mut s| {
        s.t += t0;
        s
    }));
    let mut dw = outer.dw[..t_idx].to_vec();
    dw.extend(inner.dw);
    PathSample { dt: outer.dt, states, dw, stopped: None }
}

/// Values of `F^power` on the inner continuations numbered by `range` of outer path
/// `path_index` at node `t_idx`.
#[allow(clippy::too_many_arguments)]
fn inner_values(
    model: &ManifoldModel,
    f: &CylindricalFunctional,
    path: &PathSample,
    path_index: usize,
    t_idx: usize,
    power: u32,
    cfg: &EstimatorConfig,
    range: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    let steps = path.n_steps() - t_idx;
    range
        .map(|j| {
            let mut stream = NormalStream::for_inner(cfg.seed, path_index as u64, t_idx as u64, j as u64);
            let mut start = path.states[t_idx];
            start.t = 0.0;
            let inner = simulate_from(model, start, steps, path.dt, &mut stream)?;
            let full = splice(path, t_idx, inner);
            Ok(f.evaluate(model, &full)?.powi(power as i32))
        })
        .collect()
}

/// `E(F^power | F_{s_t})` on outer path `path_index` (its stream index),
/// evaluated at grid node `t_idx`.
pub fn conditional_exp(
    model: &ManifoldModel,
    f: &CylindricalFunctional,
    path: &PathSample,
    path_index: usize,
    t_idx: usize,
    power: u32,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let steps = path.n_steps();
    if t_idx > steps {
        return Err(Error::InvalidArgument(format!("node {t_idx} beyond path of {steps} steps")));
    }
    match conditional_backend(model, f, t_idx, steps, power, true)? {
        ConditionalBackend::Terminal => Ok(f.evaluate(model, path)?.powi(power as i32)),
        ConditionalBackend::Analytic => analytic_value(model, f, path, t_idx, power).ok_or_else(|| Error::NoBackend(f.name.clone())),
        ConditionalBackend::Nested => {
            let xs = inner_values(model, f, path, path_index, t_idx, power, cfg, 0..cfg.inner_paths.max(1))?;
            Ok(stats::mean(&xs))
        }
    }
}

/// Two independent nested estimates of `E(F | F_{s_t})` from disjoint halves
/// of the inner paths; their product is unbiased for `E(F | F_t)²`.
pub(crate) fn split_conditional(
    model: &ManifoldModel,
    f: &CylindricalFunctional,
    path: &PathSample,
    path_index: usize,
    t_idx: usize,
    cfg: &EstimatorConfig,
) -> Result<(f64, f64)> {
    let half = (cfg.inner_paths / 2).max(1);
    let a = inner_values(model, f, path, path_index, t_idx, 1, cfg, 0..half)?;
    let b = inner_values(model, f, path, path_index, t_idx, 1, cfg, half..2 * half)?;
    Ok((stats::mean(&a), stats::mean(&b)))
}

pub(crate) fn analytic(model: &ManifoldModel, f: &CylindricalFunctional, path: &PathSample, t_idx: usize, power: u32) -> Result<f64> {
    analytic_value(model, f, path, t_idx, power).ok_or_else(|| Error::NoBackend(f.name.clone()))
}
