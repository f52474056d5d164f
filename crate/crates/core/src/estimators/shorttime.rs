use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{grid_index, simulate_path, step_count};
use crate::error::{Error, Result};
use crate::functionals::PointFunction;
use crate::geometry::{CurvatureBoundSpec, ManifoldModel, Point};
use crate::linalg::Vector;
use crate::stats;
use crate::transport::{resolvent_q, CurvatureTrace};

use super::inequality::normalized;
use super::{outcome, power_of_mean, run, CheckId, CheckOutcome, EstimateReport, EstimatorConfig};

/// Default horizons of the short-time extrapolations.
pub const SHORT_TIMES: [f64; 3] = [0.02, 0.04, 0.08];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeSide {
    /// `(RHS − LHS)/(pT)` of the first-order gradient bound; tends to `Ric − K2`.
    Lower,
    /// `(RHS − LHS)/T` of the second-order bound with `q = 2`; tends to `(K1 − Ric)/2`.
    Upper,
}

/// A quantity `v(T)` observed at a few small horizons and extrapolated to
/// `T → 0` by eliminating the linear term.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShortTimeLimit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub limit: f64,
    pub limit_stderr: f64,
    /// `v(T3)` minus the line through the first two horizons.
    pub linearity_residual: Option<f64>,
    pub linearity_stderr: Option<f64>,
    /// Size of the quadratic term left in `limit`, inferred from the residual.
    pub extrapolation_error: f64,
}

impl ShortTimeLimit {
    /// Statistical and extrapolation errors combined.
    pub fn total_stderr(&self) -> f64 {
        self.limit_stderr.hypot(self.extrapolation_error)
    }

    fn extras_into(&self, prefix: &str, extras: &mut BTreeMap<String, f64>) {
        for (k, ((t, v), s)) in self.times.iter().zip(&self.values).zip(&self.stderrs).enumerate() {
            extras.insert(format!("{prefix}T_{k}"), *t);
            extras.insert(format!("{prefix}value_{k}"), *v);
            extras.insert(format!("{prefix}stderr_{k}"), *s);
        }
        extras.insert(format!("{prefix}limit"), self.limit);
        extras.insert(format!("{prefix}limit_stderr"), self.limit_stderr);
        extras.insert(format!("{prefix}extrapolation_error"), self.extrapolation_error);
        if let (Some(r), Some(s)) = (self.linearity_residual, self.linearity_stderr) {
            extras.insert(format!("{prefix}linearity_residual"), r);
            extras.insert(format!("{prefix}linearity_stderr"), s);
        }
    }
}

/// Richardson extrapolation `(T2 v1 − T1 v2)/(T2 − T1)` from the first two
/// horizons. `influence[j][i]` is the per-path linearisation of `values[j]`;
/// since all horizons are observed on the same paths, errors of the
/// combination come from combining these per path.
pub fn richardson(times: &[f64], values: &[f64], influence: &[Vec<f64>]) -> Result<ShortTimeLimit> {
    if times.len() < 2 || times.len() != values.len() || times.len() != influence.len() {
        return Err(Error::InvalidArgument("extrapolation needs at least two horizons".into()));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) || !(times[0] > 0.0) {
        return Err(Error::InvalidArgument("horizons must be positive and increasing".into()));
    }
    let se = |xs: &[f64]| stats::mean_stderr(xs).1;
    let combine = |c: &[f64]| -> Vec<f64> {
        (0..influence[0].len()).map(|i| c.iter().zip(influence).map(|(c, psi)| c * psi[i]).sum()).collect()
    };
    let (t1, t2) = (times[0], times[1]);
    let c = [t2 / (t2 - t1), -t1 / (t2 - t1)];
    let limit = c[0] * values[0] + c[1] * values[1];
    let limit_stderr = se(&combine(&c));
    let (mut linearity_residual, mut linearity_stderr, mut extrapolation_error) = (None, None, 0.0);
    if times.len() >= 3 {
        let t3 = times[2];
        let lam = (t3 - t1) / (t2 - t1);
        let resid = values[2] - (1.0 - lam) * values[0] - lam * values[1];
        linearity_residual = Some(resid);
        linearity_stderr = Some(se(&combine(&[-(1.0 - lam), -lam, 1.0])));
        extrapolation_error = resid.abs() * t1 * t2 / ((t3 - t1) * (t3 - t2));
    }
    Ok(ShortTimeLimit {
        times: times.to_vec(),
        values: values.to_vec(),
        stderrs: influence.iter().map(|psi| se(psi)).collect(),
        limit,
        limit_stderr,
        linearity_residual,
        linearity_stderr,
        extrapolation_error,
    })
}

/// Observation of one path at one horizon.
struct Obs {
    /// `Q_{0,T} U_T^{-1} ∇f(X_T)`
    v: Vector,
    /// `U_T^{-1} ∇f(X_T)`
    w: Vector,
    value: f64,
    /// `⟨∇f(x), U_0 W_T⟩`
    linear: f64,
    int_k2: f64,
    int_mean: f64,
    mu_total: f64,
}

fn horizons(cfg: &EstimatorConfig) -> Vec<f64> {
    cfg.t_list.clone().unwrap_or_else(|| SHORT_TIMES.to_vec())
}

/// All horizons observed on each path (common random numbers across `T`).
fn observe(model: &ManifoldModel, g: &PointFunction, a: &Vector, bounds: &CurvatureBoundSpec, x: &Point, times: &[f64], cfg: &EstimatorConfig) -> Result<Vec<Vec<Obs>>> {
    let t_max = *times.last().ok_or_else(|| Error::InvalidArgument("no horizons".into()))?;
    let m = step_count(t_max, cfg.dt)?;
    let idx: Vec<usize> = times.iter().map(|&t| grid_index(t, cfg.dt, m)).collect::<Result<_>>()?;
    run(cfg, cfg.n_paths, |i| {
        let path = simulate_path(model, x, t_max, cfg.dt, cfg.seed, i as u64)?;
        let trace = CurvatureTrace::build(model, &path, bounds)?;
        let q = resolvent_q(&trace, 0);
        let mut w_sum = Vector::zeros(model.dim);
        let mut out = Vec::with_capacity(idx.len());
        let mut next = 0;
        for k in 0..=m {
            if k > 0 {
                w_sum += path.dw[k - 1];
            }
            while next < idx.len() && idx[next] == k {
                let st = &path.states[k];
                let p = st.point();
                let w = st.frame_components(&g.differential(model, &p));
                let half_gap = trace.half_gap_integral[k];
                out.push(Obs {
                    v: q[k].mat_vec(&w),
                    w,
                    value: g.value(model, &p),
                    linear: a.dot(&w_sum),
                    int_k2: trace.mean_integral[k] - half_gap,
                    int_mean: trace.mean_integral[k],
                    mu_total: half_gap.exp_m1(),
                });
                next += 1;
            }
        }
        Ok(out)
    })
}

/// Short-time estimates of `Ric_Z(∇f, ∇f)(x)` for `f` rescaled to
/// `|∇f|(x) = 1`, which should have vanishing Hessian at `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RicciEstimate {
    /// `(P_T|∇f|^p − |∇P_T f|^p)/(pT)`
    pub p_form: ShortTimeLimit,
    /// `((P_T f² − (P_T f)²)/(2T) − |∇P_T f|²)/T` with the Itô term as control variate.
    pub variance_form: ShortTimeLimit,
    pub p: f64,
}

pub fn ricci_short_time(model: &ManifoldModel, f: &PointFunction, x: &Point, cfg: &EstimatorConfig) -> Result<RicciEstimate> {
    cfg.validate()?;
    let (g, _, a) = normalized(model, f, x, true)?;
    let times = horizons(cfg);
    let obs = observe(model, &g, &a, &CurvatureBoundSpec::constant(0.0, 0.0), x, &times, cfg)?;
    let n = obs.len();
    let nf = n as f64;
    let p = cfg.p;
    let zero = Vector::zeros(model.dim);
    let (mut pv, mut pi, mut vv, mut vi) = (vec![], vec![], vec![], vec![]);
    for (j, &t) in times.iter().enumerate() {
        let vs: Vec<Vector> = obs.iter().map(|o| o[j].v).collect();
        let pm = power_of_mean(&vs, &zero, 1.0, p);
        let rs: Vec<f64> = obs.iter().map(|o| o[j].w.norm().powf(p)).collect();
        pv.push((stats::mean(&rs) - pm.value) / (p * t));
        pi.push(rs.iter().zip(&vs).map(|(r, v)| (r - pm.influence(v)) / (p * t)).collect::<Vec<f64>>());

        let fs: Vec<f64> = obs.iter().map(|o| o[j].value).collect();
        let fbar = stats::mean(&fs);
        let ys: Vec<f64> = obs.iter().map(|o| (o[j].value - fbar).powi(2) * nf / (nf - 1.0) - 2.0 * o[j].linear * o[j].linear).collect();
        let var = stats::mean(&ys) + 2.0 * t * a.norm_sq();
        let pm2 = power_of_mean(&vs, &zero, 1.0, 2.0);
        vv.push((var / (2.0 * t) - pm2.value) / t);
        vi.push(ys.iter().zip(&vs).map(|(y, v)| (y / (2.0 * t) - pm2.influence(v)) / t).collect::<Vec<f64>>());
    }
    Ok(RicciEstimate { p_form: richardson(&times, &pv, &pi)?, variance_form: richardson(&times, &vv, &vi)?, p })
}

/// Short-time slope of a gradient bound; a negative limit means the bound
/// `K2` (lower side) or `K1` (upper side) is wrong at `x`.
pub fn slope_detector(
    model: &ManifoldModel,
    bounds: &CurvatureBoundSpec,
    f: &PointFunction,
    x: &Point,
    side: SlopeSide,
    cfg: &EstimatorConfig,
) -> Result<ShortTimeLimit> {
    cfg.validate()?;
    let (g, _, a) = normalized(model, f, x, true)?;
    let times = horizons(cfg);
    let obs = observe(model, &g, &a, bounds, x, &times, cfg)?;
    let (mut values, mut infl) = (vec![], vec![]);
    for (j, &t) in times.iter().enumerate() {
        let vs: Vec<Vector> = obs.iter().map(|o| o[j].v).collect();
        let (pm, rs, scale) = match side {
            SlopeSide::Lower => {
                let p = cfg.p;
                let pm = power_of_mean(&vs, &Vector::zeros(model.dim), 1.0, p);
                let rs: Vec<f64> = obs.iter().map(|o| (-p * o[j].int_k2).exp() * o[j].w.norm().powf(p)).collect();
                (pm, rs, p * t)
            }
            SlopeSide::Upper => {
                let pm = power_of_mean(&vs, &a, -0.5, 2.0);
                let rs: Vec<f64> = obs
                    .iter()
                    .map(|o| {
                        let o = &o[j];
                        let damp = (-o.int_mean).exp();
                        (1.0 + o.mu_total) * ((a - o.w.scale(0.5 * damp)).norm_sq() + 0.25 * o.mu_total * damp * damp * o.w.norm_sq())
                    })
                    .collect();
                (pm, rs, t)
            }
        };
        values.push((stats::mean(&rs) - pm.value) / scale);
        infl.push(rs.iter().zip(&vs).map(|(r, v)| (r - pm.influence(v)) / scale).collect::<Vec<f64>>());
    }
    richardson(&times, &values, &infl)
}

/// `K2 ≤ Ric_Z(∇f, ∇f)(x) ≤ K1` from the short-time limit.
pub(crate) fn ricci_check(model: &ManifoldModel, bounds: &CurvatureBoundSpec, f: &PointFunction, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let est = ricci_short_time(model, f, x, cfg)?;
    let (k1, k2) = bounds.eval(model, x)?;
    let lim = &est.p_form;
    let n = cfg.n_paths;
    let lhs = EstimateReport::scalar("Ric(grad f, grad f)(x), short-time limit", lim.limit, lim.limit_stderr, n);
    let rhs = EstimateReport::scalar("K1(x)", k1, 0.0, n).with_extra("K2", k2);
    let margin = (k1 - lim.limit).min(lim.limit - k2);
    let mut extras = BTreeMap::from([("p".to_string(), est.p)]);
    lim.extras_into("", &mut extras);
    est.variance_form.extras_into("variance_form_", &mut extras);
    Ok(outcome(CheckId::Ricci, lhs, rhs, margin, lim.total_stderr(), cfg, extras))
}

/// Sign test on the short-time slope.
pub(crate) fn slope_check(model: &ManifoldModel, id: CheckId, bounds: &CurvatureBoundSpec, f: &PointFunction, x: &Point, cfg: &EstimatorConfig) -> Result<CheckOutcome> {
    let side = if id == CheckId::SlopeLower { SlopeSide::Lower } else { SlopeSide::Upper };
    let lim = slope_detector(model, bounds, f, x, side, cfg)?;
    let n = cfg.n_paths;
    let lhs = EstimateReport::scalar("0", 0.0, 0.0, n);
    let rhs = EstimateReport::scalar("short-time slope of the gradient bound", lim.limit, lim.limit_stderr, n);
    let mut extras = BTreeMap::new();
    if side == SlopeSide::Lower {
        extras.insert("p".to_string(), cfg.p);
    }
    lim.extras_into("", &mut extras);
    Ok(outcome(id, lhs, rhs, lim.limit, lim.total_stderr(), cfg, extras))
}
