use std::collections::BTreeMap;

use crate::dynamics::{exit_profiles, grid_index, simulate_path, summarize_exits, PathSample};
use crate::error::{Error, Result};
use crate::functionals::{CylindricalFunctional, Evaluation, PointFunction};
use crate::geometry::{CurvatureBoundSpec, ManifoldModel, Point};
use crate::linalg::Vector;
use crate::stats;
use crate::transport::{mu_measure, resolvent_q, transport_defects, CurvatureTrace, TransportDefects};

use super::conditional::{analytic, conditional_backend, conditional_exp, split_conditional, ConditionalBackend};
use super::{defect_extras, outcome, power_of_mean, run, shorttime, CheckId, CheckOutcome, EstimateReport, EstimatorConfig};

/// Run check `id` for the functional `f` started at `x` under `bounds`.
///
/// Gradient-bound checks (`T12-2a/2b`, `C22-*`, `RIC`, `SLOPE-*`) use the
/// endpoint function of `f`; `EXIT` ignores `f` and `bounds`.
pub fn check_inequality(
    model: &ManifoldModel,
    id: CheckId,
    bounds: &CurvatureBoundSpec,
    f: &CylindricalFunctional,
    x: &Point,
    cfg: &EstimatorConfig,
) -> Result<CheckOutcome> {
    cfg.validate()?;
    model.check_in_chart(x)?;
    if id == CheckId::Exit {
        return exit_check(model, x, cfg);
    }
    f.validate(model)?;
    let mut extras = BTreeMap::new();
    if id.is_local() {
        local_bound_guard(model, id, bounds, f, x, cfg, &mut extras)?;
    }
    let mut out = match id {
        CheckId::T12GradientBound | CheckId::ConstantGradient => gradient_bound(model, id, bounds, f, x, cfg),
        CheckId::T12SecondBound | CheckId::ConstantSecond => second_bound(model, id, bounds, f, x, cfg),
        CheckId::T12PathGradient => path_gradient(model, id, bounds, f, x, cfg, cfg.q),
        CheckId::T11PathGradient => path_gradient(model, id, bounds, f, x, cfg, 1.0),
        CheckId::T11PathGradientSquare => path_gradient(model, id, bounds, f, x, cfg, 2.0),
        CheckId::T12LogSobolev | CheckId::T11LogSobolev => log_sobolev(model, id, bounds, f, x, cfg),
        CheckId::T12Poincare | CheckId::T11Poincare => poincare(model, id, bounds, f, x, cfg),
        CheckId::Ricci => shorttime::ricci_check(model, bounds, &endpoint(f)?, x, cfg),
        CheckId::SlopeLower | CheckId::SlopeUpper => shorttime::slope_check(model, id, bounds, &endpoint(f)?, x, cfg),
        CheckId::Exit => unreachable!(),
    }?;
    if matches!(id, CheckId::T12GradientBound | CheckId::T12SecondBound | CheckId::T12PathGradient | CheckId::T12LogSobolev | CheckId::T12Poincare) {
        integrability_extras(model, bounds, f, x, cfg, &mut extras)?;
    }
    out.extras.extend(extras);
    Ok(out)
}

/// `ε` in the spot check of `E exp((2+ε)∫_0^T |K1|+|K2|) < ∞`.
pub const INTEGRABILITY_EPSILON: f64 = 0.01;

/// Log of the empirical exponential moment on the transport-monitored paths.
/// Logged only; a finite sample cannot certify the moment.
fn integrability_extras(
    model: &ManifoldModel,
    bounds: &CurvatureBoundSpec,
    f: &CylindricalFunctional,
    x: &Point,
    cfg: &EstimatorConfig,
    extras: &mut BTreeMap<String, f64>,
) -> Result<()> {
    let horizon = *f.times.last().ok_or_else(|| Error::InvalidArgument("functional has no times".into()))?;
    let n = cfg.n_paths.div_ceil(cfg.invariant_stride);
    let exponents = run(cfg, n, |j| {
        let path = simulate_path(model, x, horizon, cfg.dt, cfg.seed, (j * cfg.invariant_stride) as u64)?;
        let trace = CurvatureTrace::build(model, &path, bounds)?;
        let a: Vec<f64> = trace.k1.iter().zip(&trace.k2).map(|(k1, k2)| k1.abs() + k2.abs()).collect();
        let integral: f64 = a.windows(2).map(|w| 0.5 * trace.dt * (w[0] + w[1])).sum();
        Ok((2.0 + INTEGRABILITY_EPSILON) * integral)
    })?;
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_mean = top + (exponents.iter().map(|e| (e - top).exp()).sum::<f64>() / n as f64).ln();
    extras.insert("integrability_log_moment".into(), log_mean);
    extras.insert("integrability_paths".into(), n as f64);
    Ok(())
}

fn endpoint(f: &CylindricalFunctional) -> Result<PointFunction> {
    f.endpoint_function()
        .ok_or_else(|| Error::InvalidArgument(format!("check needs a functional of the form f(X_T) without cutoff, got `{}`", f.name)))
}

/// The localized family requires the lower bound to sit below the curvature
/// infimum over the ball the functional lives on.
fn local_bound_guard(
    model: &ManifoldModel,
    id: CheckId,
    bounds: &CurvatureBoundSpec,
    f: &CylindricalFunctional,
    x: &Point,
    cfg: &EstimatorConfig,
    extras: &mut BTreeMap<String, f64>,
) -> Result<()> {
    let radius = match (&f.cutoff, id) {
        (Some(c), _) => c.radius,
        (None, CheckId::T11LogSobolev) => cfg.ball_radius,
        (None, _) => return Err(Error::InvalidArgument(format!("{id} needs a functional with a cutoff"))),
    };
    let (inf, _) = model.local_curvature_inf(x, radius, 256, cfg.seed)?;
    extras.insert("local_curvature_inf".into(), inf);
    if let Some(c) = bounds.k2.constant_value() {
        if c > inf + 1e-12 && !cfg.allow_unsafe_local_bound {
            return Err(Error::InvalidArgument(format!(
                "local lower bound C = {c} exceeds the sampled curvature infimum {inf} on the ball of radius {radius}"
            )));
        }
    }
    Ok(())
}

/// Scale `f` to unit gradient at `x` (if configured); returns the scaled
/// function, the original `|∇f|(x)` and the initial-frame gradient.
pub(crate) fn normalized(model: &ManifoldModel, f: &PointFunction, x: &Point, normalize: bool) -> Result<(PointFunction, f64, Vector)> {
    let frame = model.initial_frame(x)?;
    let a = frame.tr_vec(&f.differential(model, x));
    let norm = a.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("the point function has zero gradient at the starting point".into()));
    }
    if normalize {
        Ok((f.scaled(1.0 / norm), norm, a.scale(1.0 / norm)))
    } else {
        Ok((f.clone(), norm, a))
    }
}

/// Per-path terminal quantities for the gradient bounds.
pub(crate) struct EndpointSample {
    /// `Q_{0,T} U_T^{-1} ∇f(X_T)`
    pub v: Vector,
    /// `U_T^{-1} ∇f(X_T)`
    pub w: Vector,
    /// `∫_0^T K2(X_s) ds`
    pub int_k2: f64,
    /// `∫_0^T (K1 + K2)/2 (X_s) ds`
    pub int_mean: f64,
    /// `μ([0, T])`
    pub mu_total: f64,
    pub defects: Option<TransportDefects>,
}

fn endpoint_samples(
    model: &ManifoldModel,
    g: &PointFunction,
    bounds: &CurvatureBoundSpec,
    x: &Point,
    horizon: f64,
    cfg: &EstimatorConfig,
) -> Result<Vec<EndpointSample>> {
    run(cfg, cfg.n_paths, |i| {
        let path = simulate_path(model, x, horizon, cfg.dt, cfg.seed, i as u64)?;
        let trace = CurvatureTrace::build(model, &path, bounds)?;
        let m = path.n_steps();
        let st = path.terminal();
        let w = st.frame_components(&g.differential(model, &st.point()));
        let v = resolvent_q(&trace, 0)[m].mat_vec(&w);
        let int_mean = trace.mean_integral[m];
        let half_gap = trace.half_gap_integral[m];
        let defects = (i % cfg.invariant_stride == 0).then(|| transport_defects(&trace));
        Ok(EndpointSample { v, w, int_k2: int_mean - half_gap, int_mean, mu_total: half_gap.exp_m1(), defects })
    })
}

fn collect_defects<'a>(it: impl Iterator<Item = &'a Option<TransportDefects>>, extras: &mut BTreeMap<String, f64>) {
    let d: Vec<TransportDefects> = it.flatten().copied().collect();
    defect_extras(&d, extras);
}

fn constants_for(id: CheckId, bounds: &CurvatureBoundSpec) -> Result<(f64, f64)> {
    bounds.constants().ok_or_else(|| Error::InvalidArgument(format!("{id} needs constant bounds K1, K2")))
}

/// `|∇P_T f|^p ≤ E[e^{−p∫K2} |∇f|^p(X_T)]`
fn gradient_bound(model: &ManifoldModel, id: CheckId, bounds: &CurvatureBoundSpec, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let (g, grad_norm, a) = normalized(model, &endpoint(f)?, x, cfg.normalize_gradient)?;
    let horizon = f.times[0];
    let constants = if id == CheckId::ConstantGradient { Some(constants_for(id, bounds)?) } else { None };
    let p = cfg.p;
    let samples = endpoint_samples(model, &g, bounds, x, horizon, cfg)?;
    let vs: Vec<Vector> = samples.iter().map(|s| s.v).collect();
    let pm = power_of_mean(&vs, &Vector::zeros(a.dim()), 1.0, p);
    let rs: Vec<f64> = samples
        .iter()
        .map(|s| {
            let decay = match constants {
                Some((_, k2)) => -k2 * p * horizon,
                None => -p * s.int_k2,
            };
            decay.exp() * s.w.norm().powf(p)
        })
        .collect();
    let ds: Vec<f64> = rs.iter().zip(&vs).map(|(r, v)| r - pm.influence(v)).collect();
    let (rhs, rhs_se) = stats::mean_stderr(&rs);
    let (_, margin_se) = stats::mean_stderr(&ds);
    let n = samples.len();
    let lhs = EstimateReport::scalar("|grad P_T f|^p", pm.value, pm.stderr, n);
    let rhs = EstimateReport::scalar("E[exp(-p int K2) |grad f|^p(X_T)]", rhs, rhs_se, n);
    let mut extras = BTreeMap::from([("p".to_string(), p), ("grad_norm_x".to_string(), grad_norm), ("T".to_string(), horizon)]);
    collect_defects(samples.iter().map(|s| &s.defects), &mut extras);
    let margin = rhs.value0() - lhs.value0();
    Ok(outcome(id, lhs, rhs, margin, margin_se, cfg, extras))
}

/// `|∇f − ½∇P_T f|^q ≤ E[(1+μ)^{q−1}(|∇f − ½A U_0U_T^{-1}∇f(X_T)|^q + μ 2^{−q} A^q |∇f(X_T)|^q)]`
fn second_bound(model: &ManifoldModel, id: CheckId, bounds: &CurvatureBoundSpec, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let (g, grad_norm, a) = normalized(model, &endpoint(f)?, x, cfg.normalize_gradient)?;
    let horizon = f.times[0];
    let constants = if id == CheckId::ConstantSecond { Some(constants_for(id, bounds)?) } else { None };
    let q = cfg.q;
    let samples = endpoint_samples(model, &g, bounds, x, horizon, cfg)?;
    let vs: Vec<Vector> = samples.iter().map(|s| s.v).collect();
    let pm = power_of_mean(&vs, &a, -0.5, q);
    let rs: Vec<f64> = samples
        .iter()
        .map(|s| {
            let wn = s.w.norm();
            match constants {
                Some((k1, k2)) => {
                    let half_gap = 0.5 * (k1 - k2) * horizon;
                    let damp = (-0.5 * (k1 + k2) * horizon).exp();
                    ((q - 1.0) * half_gap).exp()
                        * ((a - s.w.scale(0.5 * damp)).norm().powf(q) + half_gap.exp_m1() / 2f64.powf(q) * damp.powf(q) * wn.powf(q))
                }
                None => {
                    let damp = (-s.int_mean).exp();
                    let mu = s.mu_total;
                    (1.0 + mu).powf(q - 1.0) * ((a - s.w.scale(0.5 * damp)).norm().powf(q) + mu / 2f64.powf(q) * damp.powf(q) * wn.powf(q))
                }
            }
        })
        .collect();
    let ds: Vec<f64> = rs.iter().zip(&vs).map(|(r, v)| r - pm.influence(v)).collect();
    let (rhs, rhs_se) = stats::mean_stderr(&rs);
    let (_, margin_se) = stats::mean_stderr(&ds);
    let n = samples.len();
    let lhs = EstimateReport::scalar("|grad f - grad P_T f / 2|^q", pm.value, pm.stderr, n);
    let rhs = EstimateReport::scalar("E[(1+mu)^(q-1) (...)]", rhs, rhs_se, n);
    let mut extras = BTreeMap::from([("q".to_string(), q), ("grad_norm_x".to_string(), grad_norm), ("T".to_string(), horizon)]);
    collect_defects(samples.iter().map(|s| &s.defects), &mut extras);
    let margin = rhs.value0() - lhs.value0();
    Ok(outcome(id, lhs, rhs, margin, margin_se, cfg, extras))
}

struct TracedPath {
    path: PathSample,
    eval: Evaluation,
    trace: CurvatureTrace,
}

fn traced_path(model: &ManifoldModel, f: &CylindricalFunctional, bounds: &CurvatureBoundSpec, x: &Point, cfg: &EstimatorConfig, i: usize) -> Result<TracedPath> {
    let horizon = *f.times.last().unwrap();
    let path = simulate_path(model, x, horizon, cfg.dt, cfg.seed, i as u64)?;
    let eval = f.summands(model, &path)?;
    let trace = CurvatureTrace::build(model, &path, bounds)?;
    Ok(TracedPath { path, eval, trace })
}

/// `|∇ E F|^q ≤ E[(1 + μ[0,T])^{q−1} (|Ḋ_0 F|^q + ∫ |Ḋ_s F|^q μ(ds))]`
#[allow(clippy::too_many_arguments)]
fn path_gradient(
    model: &ManifoldModel,
    id: CheckId,
    bounds: &CurvatureBoundSpec,
    f: &CylindricalFunctional,
    x: &Point,
    cfg: &EstimatorConfig,
    q: f64,
) -> Result<CheckOutcome> {
    let dim = model.dim;
    let samples = run(cfg, cfg.n_paths, |i| {
        let tp = traced_path(model, f, bounds, x, cfg, i)?;
        let v = tp.eval.bismut_vector(&resolvent_q(&tp.trace, 0));
        let dens = tp.eval.modified_density(&tp.trace, 0);
        let mu = mu_measure(&tp.trace, 0, cfg.mu_convention)?;
        let integral: f64 = mu.weights.iter().zip(&dens.values).map(|(w, d)| d.norm().powf(q) * w).sum();
        let r = (1.0 + mu.total).powf(q - 1.0) * (dens.values[0].norm().powf(q) + integral);
        let defects = (i % cfg.invariant_stride == 0).then(|| transport_defects(&tp.trace));
        Ok((v, r, defects))
    })?;
    let vs: Vec<Vector> = samples.iter().map(|s| s.0).collect();
    let rs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let pm = power_of_mean(&vs, &Vector::zeros(dim), 1.0, q);
    let ds: Vec<f64> = rs.iter().zip(&vs).map(|(r, v)| r - pm.influence(v)).collect();
    let (rhs, rhs_se) = stats::mean_stderr(&rs);
    let (_, margin_se) = stats::mean_stderr(&ds);
    let n = samples.len();
    let lhs = EstimateReport::scalar("|grad E F|^q", pm.value, pm.stderr, n);
    let rhs = EstimateReport::scalar("E[(1+mu)^(q-1) (|D_0 F|^q + int |D_s F|^q mu(ds))]", rhs, rhs_se, n);
    let mut extras = BTreeMap::from([("q".to_string(), q)]);
    collect_defects(samples.iter().map(|s| &s.2), &mut extras);
    let margin = rhs.value0() - lhs.value0();
    Ok(outcome(id, lhs, rhs, margin, margin_se, cfg, extras))
}

fn anchor_indices(cfg: &EstimatorConfig, horizon: f64, m: usize, default_t0: f64) -> Result<(usize, usize)> {
    let t0 = cfg.t0.unwrap_or(default_t0);
    let t1 = cfg.t1.unwrap_or(horizon);
    let i0 = grid_index(t0, cfg.dt, m)?;
    let i1 = grid_index(t1, cfg.dt, m)?;
    if i0 > i1 {
        return Err(Error::InvalidArgument(format!("need t0 <= t1 (t0 = {t0}, t1 = {t1})")));
    }
    Ok((i0, i1))
}

fn entropy(g: f64) -> f64 {
    if g > 0.0 {
        g * g.ln()
    } else {
        0.0
    }
}

/// `E[G_{t1} log G_{t1}] − E[G_{t0} log G_{t0}] ≤ 4 ∫_{t0}^{t1} E_{s,T} ds`
/// with `G_t = E(F² | F_t)`.
fn log_sobolev(model: &ManifoldModel, id: CheckId, bounds: &CurvatureBoundSpec, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let horizon = *f.times.last().unwrap();
    let m = crate::dynamics::step_count(horizon, cfg.dt)?;
    let (i0, i1) = anchor_indices(cfg, horizon, m, 0.0)?;
    let b0 = conditional_backend(model, f, i0, m, 2, cfg.nested_entropy)?;
    let b1 = conditional_backend(model, f, i1, m, 2, cfg.nested_entropy)?;
    let dt = cfg.dt;
    let samples = run(cfg, cfg.n_paths, |i| {
        let tp = traced_path(model, f, bounds, x, cfg, i)?;
        let g0 = conditional_exp(model, f, &tp.path, i, i0, 2, cfg)?;
        let g1 = conditional_exp(model, f, &tp.path, i, i1, 2, cfg)?;
        let energy = tp.eval.energy_samples(&tp.trace, cfg.mu_convention);
        let r = 4.0 * dt * stats::compensated_sum(energy[i0..i1].iter().copied());
        let defects = (i % cfg.invariant_stride == 0).then(|| transport_defects(&tp.trace));
        Ok((entropy(g1) - entropy(g0), r, defects))
    })?;
    let hs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let rs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let ds: Vec<f64> = samples.iter().map(|s| s.1 - s.0).collect();
    let (lhs, lhs_se) = stats::mean_stderr(&hs);
    let (rhs, rhs_se) = stats::mean_stderr(&rs);
    let (margin, margin_se) = stats::mean_stderr(&ds);
    let n = samples.len();
    let lhs = EstimateReport::scalar(&format!("E[G log G] increment [{}/{}]", b0.as_str(), b1.as_str()), lhs, lhs_se, n);
    let rhs = EstimateReport::scalar("4 int E_(s,T) ds", rhs, rhs_se, n);
    let mut extras = BTreeMap::from([("t0".to_string(), i0 as f64 * dt), ("t1".to_string(), i1 as f64 * dt)]);
    collect_defects(samples.iter().map(|s| &s.2), &mut extras);
    Ok(outcome(id, lhs, rhs, margin, margin_se, cfg, extras))
}

/// `E[E(F|F_t)²] − (E F)² ≤ 2 ∫_0^t E_{s,T} ds`
fn poincare(model: &ManifoldModel, id: CheckId, bounds: &CurvatureBoundSpec, f: &CylindricalFunctional, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let horizon = *f.times.last().unwrap();
    let m = crate::dynamics::step_count(horizon, cfg.dt)?;
    let t = cfg.t1.unwrap_or(horizon);
    let it = grid_index(t, cfg.dt, m)?;
    let backend = conditional_backend(model, f, it, m, 1, cfg.nested)?;
    let dt = cfg.dt;
    // (F, g1, g2, rhs integrand, defects): g1 = g2 = E(F|F_t) unless nested
    let samples = run(cfg, cfg.n_paths, |i| {
        let tp = traced_path(model, f, bounds, x, cfg, i)?;
        let value = tp.eval.value;
        let (g1, g2) = match backend {
            ConditionalBackend::Terminal => (value, value),
            ConditionalBackend::Analytic => {
                let g = analytic(model, f, &tp.path, it, 1)?;
                (g, g)
            }
            ConditionalBackend::Nested => split_conditional(model, f, &tp.path, i, it, cfg)?,
        };
        let energy = tp.eval.energy_samples(&tp.trace, cfg.mu_convention);
        let r = 2.0 * dt * stats::compensated_sum(energy[..it].iter().copied());
        let defects = (i % cfg.invariant_stride == 0).then(|| transport_defects(&tp.trace));
        Ok((value, g1, g2, r, defects))
    })?;
    let n = samples.len();
    let nf = n as f64;
    let rs: Vec<f64> = samples.iter().map(|s| s.3).collect();
    let (lhs, hs): (f64, Vec<f64>) = match backend {
        ConditionalBackend::Nested => {
            let fs: Vec<f64> = samples.iter().map(|s| s.0).collect();
            let sum = stats::compensated_sum(fs.iter().copied());
            let sum_sq = stats::compensated_sum(fs.iter().map(|v| v * v));
            let mean_sq = (sum * sum - sum_sq) / (nf * (nf - 1.0));
            let fbar = sum / nf;
            let prods: Vec<f64> = samples.iter().map(|s| s.1 * s.2).collect();
            let hs = samples.iter().map(|s| s.1 * s.2 - 2.0 * fbar * s.0).collect();
            (stats::mean(&prods) - mean_sq, hs)
        }
        _ => {
            let gs: Vec<f64> = samples.iter().map(|s| s.1).collect();
            let gbar = stats::mean(&gs);
            let hs = gs.iter().map(|g| (g - gbar) * (g - gbar) * nf / (nf - 1.0)).collect();
            (stats::variance(&gs), hs)
        }
    };
    let (_, lhs_se) = stats::mean_stderr(&hs);
    let (rhs, rhs_se) = stats::mean_stderr(&rs);
    let ds: Vec<f64> = rs.iter().zip(&hs).map(|(r, h)| r - h).collect();
    let (_, margin_se) = stats::mean_stderr(&ds);
    let lhs = EstimateReport::scalar(&format!("Var E(F|F_t) [{}]", backend.as_str()), lhs, lhs_se, n);
    let rhs = EstimateReport::scalar("2 int_0^t E_(s,T) ds", rhs, rhs_se, n);
    let mut extras = BTreeMap::from([("t".to_string(), it as f64 * dt)]);
    collect_defects(samples.iter().map(|s| &s.4), &mut extras);
    let margin = rhs.value0() - lhs.value0();
    Ok(outcome(id, lhs, rhs, margin, margin_se, cfg, extras))
}

/// Default horizons of the exit fit.
pub const EXIT_HORIZONS: [f64; 3] = [0.05, 0.1, 0.2];

/// Fit `−log P(τ_R ≤ T) ≈ a + c/T` and report `c` with a batch-means error.
fn exit_check(model: &ManifoldModel, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let horizons = cfg.t_list.clone().unwrap_or_else(|| EXIT_HORIZONS.to_vec());
    let profiles = exit_profiles(model, x, cfg.ball_radius, &horizons, cfg.n_paths, cfg.dt, cfg.seed, cfg.exit_monitor)?;
    let summary = summarize_exits(&horizons, &profiles)?;
    let c = summary.fitted_c.ok_or_else(|| Error::InvalidArgument("exit fit needs exits at two or more horizons".into()))?;
    let batch_c: Vec<f64> = stats::batch_ranges(profiles.len(), 10)
        .into_iter()
        .filter_map(|r| summarize_exits(&horizons, &profiles[r]).ok().and_then(|s| s.fitted_c))
        .collect();
    let se = stats::batch_stderr(&batch_c);
    let n = profiles.len();
    let mut rhs = EstimateReport::scalar("c in -log P = a + c/T", c, se, n);
    for (k, e) in summary.estimates.iter().enumerate() {
        rhs.extras.insert(format!("probability_{k}"), e.probability);
        rhs.extras.insert(format!("probability_{k}_stderr"), e.stderr);
        rhs.extras.insert(format!("horizon_{k}"), e.horizon);
    }
    let mut extras = BTreeMap::from([("radius".to_string(), cfg.ball_radius)]);
    if let (Some(a), Some(r2)) = (summary.intercept, summary.r_squared) {
        extras.insert("intercept".into(), a);
        extras.insert("r_squared".into(), r2);
    }
    let lhs = EstimateReport::scalar("0", 0.0, 0.0, n);
    Ok(outcome(CheckId::Exit, lhs, rhs, c, se, cfg, extras))
}
