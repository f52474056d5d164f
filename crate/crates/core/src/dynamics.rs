//! Horizontal diffusion on the frame bundle, discretised with a
//! Stratonovich–Heun scheme in local charts.
//!
//! The SDE integrated is `du = √2 U dW − Z(u) dt` for the base point and
//! `dU^k_a = −Γ^k_{ij}(u) du^i U^j_a` for the frame, so the projected process
//! has generator `Δ − Z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point, Preset};
use crate::linalg::{Matrix, Vector};
use crate::rng::NormalStream;
use crate::stats;

/// Largest coordinate increment accepted in one step on curved presets.
pub const CURVED_STEP_BOUND: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameState {
    pub chart: usize,
    pub u: Vector,
    /// Columns are the frame vectors in the chart basis.
    pub frame: Matrix,
    pub t: f64,
}

impl FrameState {
    /// State at `p` with the Gram–Schmidt frame of the chart basis, `t = 0`.
    pub fn at(model: &ManifoldModel, p: Point) -> Result<Self> {
        let frame = model.initial_frame(&p)?;
        Ok(Self { chart: p.chart, u: p.u, frame, t: 0.0 })
    }

    /// State at `p` with a caller-supplied orthonormal frame.
    pub fn with_frame(model: &ManifoldModel, p: Point, frame: Matrix) -> Result<Self> {
        model.check_in_chart(&p)?;
        let frame = model.orthonormalize(&p.u, &frame)?;
        Ok(Self { chart: p.chart, u: p.u, frame, t: 0.0 })
    }

    pub fn point(&self) -> Point {
        Point::new(self.chart, self.u)
    }

    /// Frame components `U⁻¹ v` of a tangent vector given by its differential
    /// `df` (a covector): since `Uᵀ g U = I`, `U⁻¹ g⁻¹ df = Uᵀ df`.
    #[inline]
    pub fn frame_components(&self, df: &Vector) -> Vector {
        self.frame.tr_vec(df)
    }

    /// Chart components `U v` of a frame vector.
    #[inline]
    pub fn to_tangent(&self, v: &Vector) -> Vector {
        self.frame.mat_vec(v)
    }
}

/// First grid index at which the path was found outside a ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub radius: f64,
    pub step: Option<usize>,
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub dt: f64,
    /// `states[k].t == k as f64 * dt`
    pub states: Vec<FrameState>,
    /// `dw[k]` drives the step from node `k` to node `k + 1`.
    pub dw: Vec<Vector>,
    pub stopped: Option<ExitRecord>,
}

impl PathSample {
    pub fn n_steps(&self) -> usize {
        self.dw.len()
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn point(&self, k: usize) -> Point {
        self.states[k].point()
    }

    pub fn terminal(&self) -> &FrameState {
        self.states.last().expect("paths have at least one node")
    }

    /// Grid index of time `t`, rejecting times off the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        grid_index(t, self.dt, self.n_steps())
    }

    /// Largest `max_k |Uᵀ g U − I|` over the nodes.
    pub fn max_frame_defect(&self, model: &ManifoldModel) -> f64 {
        self.states.iter().map(|s| model.frame_defect(&s.u, &s.frame)).fold(0.0, f64::max)
    }
}

/// Grid index of `t` for step `dt`, with at most `max_index` steps.
pub fn grid_index(t: f64, dt: f64, max_index: usize) -> Result<usize> {
    let k = (t / dt).round();
    if !(k >= 0.0) || (k * dt - t).abs() > 1e-9 * dt.max(t.abs()) || k as usize > max_index {
        return Err(Error::TimesNotOnGrid { time: t, dt });
    }
    Ok(k as usize)
}

/// Number of steps `T / dt`, which must be an integer.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and T >= 0 (T = {horizon}, dt = {dt})")));
    }
    grid_index(horizon, dt, usize::MAX).map_err(|_| Error::InvalidArgument(format!("T = {horizon} is not a multiple of dt = {dt}")))
}

fn step_bound(model: &ManifoldModel) -> f64 {
    match model.preset {
        Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => f64::INFINITY,
        Preset::Sphere { .. } | Preset::Hyperbolic { .. } => CURVED_STEP_BOUND,
    }
}

#[inline]
fn increments(model: &ManifoldModel, u: &Vector, frame: &Matrix, dw: &Vector, dt: f64) -> (Vector, Matrix) {
    let du = frame.mat_vec(dw).scale(std::f64::consts::SQRT_2) - model.drift_at(u).scale(dt);
    let dframe = model.connection_columns(u, &du, frame).scale(-1.0);
    (du, dframe)
}

/// One predictor–corrector step followed by re-orthonormalisation and chart
/// normalisation.
pub fn horizontal_step(model: &ManifoldModel, state: &FrameState, dw: &Vector, dt: f64) -> Result<FrameState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if model.is_flat() {
        let noise = state.frame.mat_vec(dw).scale(std::f64::consts::SQRT_2);
        let du0 = noise - model.drift_at(&state.u).scale(dt);
        let up = state.u + du0;
        let du1 = noise - model.drift_at(&up).scale(dt);
        let u1 = state.u + (du0 + du1).scale(0.5);
        if !u1.as_slice().iter().all(|x| x.is_finite()) {
            return Err(Error::OutOfChart { chart: state.chart, norm: u1.norm(), radius: f64::INFINITY });
        }
        return Ok(FrameState { chart: state.chart, u: u1, frame: state.frame, t: state.t + dt });
    }
    let (du0, dframe0) = increments(model, &state.u, &state.frame, dw, dt);
    let bound = step_bound(model);
    let norm = du0.norm();
    if norm > bound {
        return Err(Error::StepRejected { norm, bound });
    }
    let up = state.u + du0;
    model.check_in_chart(&Point::new(state.chart, up))?;
    let fp = state.frame + dframe0;
    let (du1, dframe1) = increments(model, &up, &fp, dw, dt);
    let u1 = state.u + (du0 + du1).scale(0.5);
    model.check_in_chart(&Point::new(state.chart, u1))?;
    let f1 = state.frame + (dframe0 + dframe1).scale(0.5);
    let frame = model.orthonormalize(&u1, &f1)?;
    model.chart_normalize(&FrameState { chart: state.chart, u: u1, frame, t: state.t + dt })
}

/// Integrate from `initial` over the given increments.
pub fn simulate_with_increments(model: &ManifoldModel, initial: FrameState, dt: f64, dw: Vec<Vector>) -> Result<PathSample> {
    let mut states = Vec::with_capacity(dw.len() + 1);
    let mut state = initial;
    state.t = 0.0;
    states.push(state);
    for (k, inc) in dw.iter().enumerate() {
        state = horizontal_step(model, &state, inc, dt)?;
        state.t = (k + 1) as f64 * dt;
        states.push(state);
    }
    Ok(PathSample { dt, states, dw, stopped: None })
}

/// Integrate from `initial` for `steps` steps drawing increments from `stream`.
pub fn simulate_from(model: &ManifoldModel, initial: FrameState, steps: usize, dt: f64, stream: &mut NormalStream) -> Result<PathSample> {
    let n = model.dim;
    let dw: Vec<Vector> = (0..steps).map(|_| stream.increment(n, dt)).collect();
    simulate_with_increments(model, initial, dt, dw)
}

/// Path number `path_index` of the experiment keyed by `seed`, started at `x0`
/// with the Gram–Schmidt frame of the chart basis.
pub fn simulate_path(model: &ManifoldModel, x0: &Point, horizon: f64, dt: f64, seed: u64, path_index: u64) -> Result<PathSample> {
    let initial = FrameState::at(model, *x0)?;
    simulate_path_with_frame(model, initial, horizon, dt, seed, path_index)
}

/// As [`simulate_path`] with an explicit initial frame.
pub fn simulate_path_with_frame(model: &ManifoldModel, initial: FrameState, horizon: f64, dt: f64, seed: u64, path_index: u64) -> Result<PathSample> {
    let steps = step_count(horizon, dt)?;
    let mut stream = NormalStream::for_path(seed, path_index);
    simulate_from(model, initial, steps, dt, &mut stream)
}

// -------------------------------------------------------------------------
// exit times

/// How a path is declared to have left the ball between grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMonitor {
    /// Exit iff some grid node lies at distance `≥ R`.
    Discrete,
    /// Per-path conditional exit probability given the skeleton, using the
    /// Brownian-bridge crossing probability `exp(−d_k d_{k+1} / dt)` of the
    /// radial gap `d = R − ρ` on each step (radial diffusivity 2).
    Bridge,
}

/// Exit estimate at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitEstimate {
    pub horizon: f64,
    pub probability: f64,
    pub stderr: f64,
    /// One-sided 95% upper confidence bound (rule of three when no exits).
    pub upper_bound: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub estimates: Vec<ExitEstimate>,
    /// Fit `−log P̂ ≈ a + c/T` over the horizons with `P̂ > 0`.
    pub fitted_c: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
}

/// Per-path exit indicators (or bridge probabilities) at each horizon.
fn exit_profile(model: &ManifoldModel, x0: &Point, radius: f64, path: &PathSample, horizon_steps: &[usize], monitor: ExitMonitor) -> Vec<f64> {
    let dt = path.dt;
    let mut survive = 1.0;
    let mut out = Vec::with_capacity(horizon_steps.len());
    let mut next = 0;
    let mut gap_prev = radius - model.distance(x0, &path.point(0));
    if gap_prev <= 0.0 {
        survive = 0.0;
    }
    for k in 1..path.states.len() {
        if survive > 0.0 {
            let gap = radius - model.distance(x0, &path.point(k));
            if gap <= 0.0 {
                survive = 0.0;
            } else if monitor == ExitMonitor::Bridge {
                let cross = (-gap_prev * gap / dt).exp();
                survive *= 1.0 - cross;
            }
            gap_prev = gap;
        }
        while next < horizon_steps.len() && horizon_steps[next] == k {
            out.push(1.0 - survive);
            next += 1;
        }
    }
    out
}

fn check_horizons(radius: f64, horizons: &[f64], n: usize) -> Result<()> {
    if !(radius > 0.0) || horizons.is_empty() || n == 0 || !(horizons[0] > 0.0) {
        return Err(Error::InvalidArgument("exit statistics need R > 0, positive horizons and paths".into()));
    }
    if horizons.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("horizons must be strictly increasing".into()));
    }
    Ok(())
}

/// Per-path exit indicators (bridge-corrected probabilities under
/// [`ExitMonitor::Bridge`]) at each horizon, in path order.
#[allow(clippy::too_many_arguments)]
pub fn exit_profiles(
    model: &ManifoldModel,
    x0: &Point,
    radius: f64,
    horizons: &[f64],
    n: usize,
    dt: f64,
    seed: u64,
    monitor: ExitMonitor,
) -> Result<Vec<Vec<f64>>> {
    check_horizons(radius, horizons, n)?;
    let steps: Vec<usize> = horizons.iter().map(|&t| step_count(t, dt)).collect::<Result<_>>()?;
    let t_max = *horizons.last().unwrap();
    crate::parallel::map_paths(n, |i| {
        let path = simulate_path(model, x0, t_max, dt, seed, i as u64)?;
        Ok(exit_profile(model, x0, radius, &path, &steps, monitor))
    })
}

/// Reduce per-path profiles to probabilities and the `−log P̂ ≈ a + c/T` fit.
pub fn summarize_exits(horizons: &[f64], profiles: &[Vec<f64>]) -> Result<ExitStats> {
    let n = profiles.len();
    let mut estimates = Vec::with_capacity(horizons.len());
    for (j, &horizon) in horizons.iter().enumerate() {
        let xs: Vec<f64> = profiles.iter().map(|p| p[j]).collect();
        let (p, se) = stats::mean_stderr(&xs);
        let upper = if p == 0.0 { 3.0 / n as f64 } else { p + 1.645 * se };
        estimates.push(ExitEstimate { horizon, probability: p, stderr: se, upper_bound: upper, n });
    }
    if estimates.iter().all(|e| e.probability == 0.0) {
        return Err(Error::AllZeroExits { upper_bounds: estimates.iter().map(|e| e.upper_bound).collect() });
    }
    let positive: Vec<&ExitEstimate> = estimates.iter().filter(|e| e.probability > 0.0).collect();
    let (fitted_c, intercept, r_squared) = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|e| 1.0 / e.horizon).collect();
        let ys: Vec<f64> = positive.iter().map(|e| -e.probability.ln()).collect();
        let (a, b, r2) = stats::linear_fit(&xs, &ys);
        (Some(b), Some(a), Some(r2))
    } else {
        (None, None, None)
    };
    Ok(ExitStats { estimates, fitted_c, intercept, r_squared })
}

/// Exit probabilities `P(τ_R ≤ T)` for each horizon in `horizons` (sorted
/// ascending), from `n` paths of step `dt`.
#[allow(clippy::too_many_arguments)]
pub fn exit_stats(model: &ManifoldModel, x0: &Point, radius: f64, horizons: &[f64], n: usize, dt: f64, seed: u64, monitor: ExitMonitor) -> Result<ExitStats> {
    let profiles = exit_profiles(model, x0, radius, horizons, n, dt, seed, monitor)?;
    summarize_exits(horizons, &profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_step_is_exact() {
        let e = ManifoldModel::euclidean(2).unwrap();
        let s = FrameState::at(&e, Point::new(0, Vector::from_slice(&[0.5, -0.5]))).unwrap();
        let dw = Vector::from_slice(&[0.01, 0.02]);
        let s1 = horizontal_step(&e, &s, &dw, 1e-3).unwrap();
        let expect = s.u + dw.scale(2f64.sqrt());
        assert!((s1.u - expect).max_abs() < 1e-15);
        assert_eq!(s1.frame, s.frame);
    }

    #[test]
    fn ou_step_is_contracting() {
        let ou = ManifoldModel::ornstein_uhlenbeck(1, 1.0).unwrap();
        let s = FrameState::at(&ou, Point::new(0, Vector::from_slice(&[1.0]))).unwrap();
        let dt = 1e-3;
        let s1 = horizontal_step(&ou, &s, &Vector::zeros(1), dt).unwrap();
        // Heun on u' = −u: 1 − dt + dt²/2
        assert!((s1.u[0] - (1.0 - dt + dt * dt / 2.0)).abs() < 1e-15);
        assert_eq!(s1.frame, s.frame);
    }

    #[test]
    fn sphere_frames_stay_orthonormal() {
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        let path = simulate_path(&s, &s.origin(), 1.0, 1e-3, 11, 0).unwrap();
        assert_eq!(path.states.len(), 1001);
        assert!(path.max_frame_defect(&s) < 1e-10);
        for st in &path.states {
            assert!(st.u.norm() <= crate::geometry::SPHERE_SWITCH_RADIUS);
        }
        for (k, st) in path.states.iter().enumerate() {
            assert_eq!(st.t, k as f64 * 1e-3);
        }
    }

    #[test]
    fn zero_horizon_is_single_node() {
        let h = ManifoldModel::hyperbolic(2, 1.0).unwrap();
        let p = simulate_path(&h, &h.origin(), 0.0, 1e-3, 1, 0).unwrap();
        assert_eq!(p.states.len(), 1);
        assert_eq!(p.states[0], FrameState::at(&h, h.origin()).unwrap());
    }

    #[test]
    fn off_grid_horizon_is_rejected() {
        let e = ManifoldModel::euclidean(1).unwrap();
        assert!(simulate_path(&e, &e.origin(), 0.0105, 1e-3, 1, 0).is_err());
        let p = simulate_path(&e, &e.origin(), 0.01, 1e-3, 1, 0).unwrap();
        assert!(matches!(p.index_of(0.0025), Err(Error::TimesNotOnGrid { .. })));
        assert_eq!(p.index_of(0.005).unwrap(), 5);
    }

    #[test]
    fn large_steps_are_rejected() {
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        let st = FrameState::at(&s, s.origin()).unwrap();
        let err = horizontal_step(&s, &st, &Vector::from_slice(&[2.0, 0.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::StepRejected { .. }));
    }

    #[test]
    fn hyperbolic_chart_exit_is_reported() {
        let h = ManifoldModel::hyperbolic(2, 1.0).unwrap();
        let st = FrameState::at(&h, Point::new(0, Vector::from_slice(&[0.99, 0.0]))).unwrap();
        // at |u| = 0.99 the frame vectors have chart length ≈ 0.01, so push hard
        let err = horizontal_step(&h, &st, &Vector::from_slice(&[30.0, 0.0]), 1e-3).unwrap_err();
        assert!(matches!(err, Error::OutOfChart { .. }));
    }

    #[test]
    fn replay_is_bit_identical() {
        let s = ManifoldModel::sphere(3, 1.3).unwrap();
        let a = simulate_path(&s, &s.origin(), 0.2, 1e-3, 5, 17).unwrap();
        let b = simulate_path(&s, &s.origin(), 0.2, 1e-3, 5, 17).unwrap();
        assert_eq!(a, b);
        let c = simulate_with_increments(&s, a.states[0], a.dt, a.dw.clone()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn exit_profile_matches_discrete_definition() {
        let e = ManifoldModel::euclidean(1).unwrap();
        let path = simulate_path(&e, &e.origin(), 0.2, 1e-3, 3, 0).unwrap();
        let prof = exit_profile(&e, &e.origin(), 0.3, &path, &[50, 100, 200], ExitMonitor::Discrete);
        for (j, &k) in [50usize, 100, 200].iter().enumerate() {
            let hit = (0..=k).any(|i| path.states[i].u[0].abs() >= 0.3);
            assert_eq!(prof[j], if hit { 1.0 } else { 0.0 });
        }
        let bridge = exit_profile(&e, &e.origin(), 0.3, &path, &[50, 100, 200], ExitMonitor::Bridge);
        for j in 0..3 {
            assert!(bridge[j] >= prof[j] && bridge[j] <= 1.0);
            if j > 0 {
                assert!(bridge[j] >= bridge[j - 1]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn steps_preserve_orthonormality(u0 in -0.6f64..0.6, u1 in -0.6f64..0.6, w0 in -0.1f64..0.1, w1 in -0.1f64..0.1) {
            for model in [ManifoldModel::sphere(2, 1.0).unwrap(), ManifoldModel::hyperbolic(2, 1.0).unwrap()] {
                let st = FrameState::at(&model, Point::new(0, Vector::from_slice(&[u0, u1]))).unwrap();
                let next = horizontal_step(&model, &st, &Vector::from_slice(&[w0, w1]), 1e-2).unwrap();
                prop_assert!(model.frame_defect(&next.u, &next.frame) < 1e-12);
                let again = model.chart_normalize(&next).unwrap();
                prop_assert_eq!(again, next);
            }
        }
    }
}
