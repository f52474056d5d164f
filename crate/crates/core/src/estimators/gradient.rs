use crate::dynamics::{simulate_from, simulate_path, step_count, FrameState};
use crate::error::{Error, Result};
use crate::functionals::{CylindricalFunctional, PointFunction};
use crate::geometry::{CurvatureBoundSpec, ManifoldModel, Point};
use crate::linalg::Vector;
use crate::rng::NormalStream;
use crate::stats;
use crate::transport::{resolvent_q, CurvatureTrace};

use super::{run, vector_mean_stderr, EstimateReport, EstimatorConfig};

fn horizon_of(f: &CylindricalFunctional) -> Result<f64> {
    f.times.last().copied().ok_or_else(|| Error::InvalidArgument("functional has no times".into()))
}

/// `E F(X^x)` over `cfg.n_paths` paths.
pub fn estimate_expectation(model: &ManifoldModel, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    f.validate(model)?;
    let horizon = horizon_of(f)?;
    let values = run(cfg, cfg.n_paths, |i| {
        let path = simulate_path(model, x, horizon, cfg.dt, cfg.seed, i as u64)?;
        f.evaluate(model, &path)
    })?;
    let (m, se) = stats::mean_stderr(&values);
    Ok(EstimateReport::scalar("E F", m, se, values.len()))
}

/// `P_T f(x)` with `T = cfg.horizon`; the closed form, when known, is
/// attached as the extra `closed_form`.
pub fn estimate_pt(model: &ManifoldModel, f: &PointFunction, x: &Point, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let functional = CylindricalFunctional::single("pt", cfg.horizon, f.clone());
    let mut report = estimate_expectation(model, &functional, x, cfg)?;
    report.label = "P_T f".into();
    if let Some(exact) = f.semigroup(model, cfg.horizon, x) {
        report.extras.insert("closed_form".into(), exact);
    }
    Ok(report)
}

/// Path-wise integrand `Σ_i Q_{0,s_i} U_{s_i}^{-1} ∇_i F` of `∇ E F(X^x)`.
pub(crate) fn bismut_sample(model: &ManifoldModel, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig, horizon: f64, i: usize) -> Result<Vector> {
    let path = simulate_path(model, x, horizon, cfg.dt, cfg.seed, i as u64)?;
    let ev = f.summands(model, &path)?;
    let trace = CurvatureTrace::build(model, &path, &CurvatureBoundSpec::constant(0.0, 0.0))?;
    Ok(ev.bismut_vector(&resolvent_q(&trace, 0)))
}

/// `∇ E F(X^x)` in the frame components of the initial frame, from the
/// damped-gradient representation.
pub fn grad_cylindrical(model: &ManifoldModel, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    f.validate(model)?;
    let horizon = horizon_of(f)?;
    let vs = run(cfg, cfg.n_paths, |i| bismut_sample(model, f, x, cfg, horizon, i))?;
    let (m, se) = vector_mean_stderr(&vs, model.dim);
    Ok(EstimateReport::vector("grad E F (damped gradient)", m, se, vs.len()))
}

/// `∇ P_T f(x)` with `T = cfg.horizon`.
pub fn grad_bismut(model: &ManifoldModel, f: &PointFunction, x: &Point, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    let functional = CylindricalFunctional::single("pt", cfg.horizon, f.clone());
    let mut report = grad_cylindrical(model, &functional, x, cfg)?;
    report.label = "grad P_T f (damped gradient)".into();
    Ok(report)
}

/// Central finite differences of `E F(X^x)` in the chart coordinates of `x`
/// with common random numbers, converted to initial-frame components.
pub fn grad_fd(model: &ManifoldModel, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    f.validate(model)?;
    let n = model.dim;
    let horizon = horizon_of(f)?;
    let steps = step_count(horizon, cfg.dt)?;
    let delta = cfg.fd_delta;
    let frame0 = model.initial_frame(x)?;
    let vs = run(cfg, cfg.n_paths, |i| {
        let value_from = |u: Vector| -> Result<f64> {
            let start = FrameState::at(model, Point::new(x.chart, u))?;
            let mut stream = NormalStream::for_path(cfg.seed, i as u64);
            let path = simulate_from(model, start, steps, cfg.dt, &mut stream)?;
            f.evaluate(model, &path)
        };
        let mut d = Vector::zeros(n);
        for j in 0..n {
            let e = Vector::basis(n, j).scale(delta);
            d[j] = (value_from(x.u + e)? - value_from(x.u - e)?) / (2.0 * delta);
        }
        Ok(frame0.tr_vec(&d))
    })?;
    let (m, se) = vector_mean_stderr(&vs, n);
    Ok(EstimateReport::vector("grad E F (finite differences)", m, se, vs.len()).with_extra("fd_delta", delta))
}

/// Damped-gradient and finite-difference estimates of `∇ E F(X^x)` for
/// several functionals on the same paths.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair {
    pub bismut: EstimateReport,
    pub fd: EstimateReport,
    /// Per-component stderr of the path-wise difference of the two integrands.
    pub paired_stderr: Vec<f64>,
}

/// Both gradient estimators for every functional in `fs` (all ending at the
/// same time), sharing the base path and the `2·dim` perturbed paths.
pub fn gradient_pairs(model: &ManifoldModel, fs: &[CylindricalFunctional], x: &Point, cfg: &EstimatorConfig) -> Result<Vec<GradientPair>> {
    cfg.validate()?;
    let Some(first) = fs.first() else {
        return Ok(Vec::new());
    };
    let horizon = horizon_of(first)?;
    for f in fs {
        f.validate(model)?;
        if (horizon_of(f)? - horizon).abs() > 1e-12 {
            return Err(Error::InvalidArgument("functionals must share their final time".into()));
        }
    }
    let n = model.dim;
    let steps = step_count(horizon, cfg.dt)?;
    let delta = cfg.fd_delta;
    let frame0 = model.initial_frame(x)?;
    let samples = run(cfg, cfg.n_paths, |i| {
        let path_from = |u: Vector| -> Result<_> {
            let start = FrameState::at(model, Point::new(x.chart, u))?;
            let mut stream = NormalStream::for_path(cfg.seed, i as u64);
            simulate_from(model, start, steps, cfg.dt, &mut stream)
        };
        let base = simulate_path(model, x, horizon, cfg.dt, cfg.seed, i as u64)?;
        let trace = CurvatureTrace::build(model, &base, &CurvatureBoundSpec::constant(0.0, 0.0))?;
        let q = resolvent_q(&trace, 0);
        let mut bis = Vec::with_capacity(fs.len());
        for f in fs {
            bis.push(f.summands(model, &base)?.bismut_vector(&q));
        }
        let mut diffs = vec![Vector::zeros(n); fs.len()];
        for j in 0..n {
            let e = Vector::basis(n, j).scale(delta);
            let (plus, minus) = (path_from(x.u + e)?, path_from(x.u - e)?);
            for (d, f) in diffs.iter_mut().zip(fs) {
                d[j] = (f.evaluate(model, &plus)? - f.evaluate(model, &minus)?) / (2.0 * delta);
            }
        }
        let fd: Vec<Vector> = diffs.iter().map(|d| frame0.tr_vec(d)).collect();
        Ok((bis, fd))
    })?;
    let pairs = (0..fs.len())
        .map(|k| {
            let b: Vec<Vector> = samples.iter().map(|s| s.0[k]).collect();
            let d: Vec<Vector> = samples.iter().map(|s| s.1[k]).collect();
            let diff: Vec<Vector> = b.iter().zip(&d).map(|(u, v)| *u - *v).collect();
            let (bm, bs) = vector_mean_stderr(&b, n);
            let (dm, ds) = vector_mean_stderr(&d, n);
            GradientPair {
                bismut: EstimateReport::vector("grad E F (damped gradient)", bm, bs, b.len()),
                fd: EstimateReport::vector("grad E F (finite differences)", dm, ds, d.len()).with_extra("fd_delta", delta),
                paired_stderr: vector_mean_stderr(&diff, n).1,
            }
        })
        .collect();
    Ok(pairs)
}
