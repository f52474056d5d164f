//! Path-wise curvature transport: the resolvent `Q_{s,t}` of
//! `dQ/dt = −Q Ric_Z(U_t)`, its shifted version `Q̃` for `Ric_Z − (K1+K2)/2`,
//! the damping factor `A_{s,t} = exp(−∫ (K1+K2)/2)` and the random measure
//! with density `exp(∫ (K1−K2)/2) (K1−K2)/2`.

use serde::{Deserialize, Serialize};

use crate::dynamics::PathSample;
use crate::error::{Error, Result};
use crate::geometry::{CurvatureBoundSpec, ManifoldModel};
use crate::linalg::Matrix;

/// Base point of the exponent in the random measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuConvention {
    /// Exponent integrated from the anchor `s`.
    #[default]
    Restart,
    /// Exponent integrated from time 0.
    Global,
}

impl MuConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "restart" => Some(Self::Restart),
            "global" => Some(Self::Global),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Restart => "restart",
            Self::Global => "global",
        }
    }
}

/// Curvature data sampled at the nodes of one path.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureTrace {
    pub dt: f64,
    /// `Ric_Z` in the frame basis at each node.
    pub ric: Vec<Matrix>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    /// Trapezoidal `∫_0^{s_k} (K1+K2)/2`.
    pub mean_integral: Vec<f64>,
    /// Trapezoidal `∫_0^{s_k} (K1−K2)/2`.
    pub half_gap_integral: Vec<f64>,
}

impl CurvatureTrace {
    pub fn build(model: &ManifoldModel, path: &PathSample, bounds: &CurvatureBoundSpec) -> Result<Self> {
        let m = path.states.len();
        let mut ric = Vec::with_capacity(m);
        let mut k1 = Vec::with_capacity(m);
        let mut k2 = Vec::with_capacity(m);
        let constants = bounds.constants();
        for (k, st) in path.states.iter().enumerate() {
            ric.push(model.bakry_emery_frame(st)?);
            let (a, b) = match constants {
                Some(c) => c,
                None => bounds.eval(model, &st.point())?,
            };
            if a < b {
                return Err(Error::NegativeMass { index: k });
            }
            k1.push(a);
            k2.push(b);
        }
        let dt = path.dt;
        let mut mean_integral = vec![0.0; m];
        let mut half_gap_integral = vec![0.0; m];
        for k in 1..m {
            mean_integral[k] = mean_integral[k - 1] + 0.25 * dt * (k1[k - 1] + k2[k - 1] + k1[k] + k2[k]);
            half_gap_integral[k] = half_gap_integral[k - 1] + 0.25 * dt * (k1[k - 1] - k2[k - 1] + k1[k] - k2[k]);
        }
        Ok(Self { dt, ric, k1, k2, mean_integral, half_gap_integral })
    }

    pub fn len(&self) -> usize {
        self.ric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ric.is_empty()
    }

    /// `A_{s,t}` for node indices `s ≤ t`.
    #[inline]
    pub fn damping(&self, s: usize, t: usize) -> f64 {
        (-(self.mean_integral[t] - self.mean_integral[s])).exp()
    }

    /// `exp(∫_s^t (K1−K2)/2)`
    #[inline]
    pub fn growth(&self, s: usize, t: usize) -> f64 {
        (self.half_gap_integral[t] - self.half_gap_integral[s]).exp()
    }

    fn shifted(&self, k: usize) -> Matrix {
        let n = self.ric[k].dim();
        self.ric[k] - Matrix::scaled_identity(n, 0.5 * (self.k1[k] + self.k2[k]))
    }
}

/// One classical RK4 step of `dQ/dt = −Q R(t)` with `R` linear on the step.
/// The step acts by right multiplication with a matrix depending on `R` only,
/// so products of steps compose exactly.
#[inline]
fn rk4_propagator(r0: &Matrix, r1: &Matrix, dt: f64) -> Matrix {
    let n = r0.dim();
    let rm = (*r0 + *r1).scale(0.5);
    let id = Matrix::identity(n);
    // stages applied to Q = I; the general step is Q · P
    let s1 = r0.scale(-1.0);
    let s2 = (id + s1.scale(0.5 * dt)).mat_mul(&rm).scale(-1.0);
    let s3 = (id + s2.scale(0.5 * dt)).mat_mul(&rm).scale(-1.0);
    let s4 = (id + s3.scale(dt)).mat_mul(r1).scale(-1.0);
    id + (s1 + s2.scale(2.0) + s3.scale(2.0) + s4).scale(dt / 6.0)
}

fn integrate<F>(trace: &CurvatureTrace, s: usize, coeff: F) -> Vec<Matrix>
where
    F: Fn(usize) -> Matrix,
{
    let m = trace.len();
    let n = trace.ric[0].dim();
    let mut out = Vec::with_capacity(m - s);
    let mut q = Matrix::identity(n);
    out.push(q);
    let mut prev = coeff(s);
    for k in s + 1..m {
        let next = coeff(k);
        q = q.mat_mul(&rk4_propagator(&prev, &next, trace.dt));
        out.push(q);
        prev = next;
    }
    out
}

/// `Q_{s,t}` for `t = s, s+1, …, m` (node indices); entry `j` is `Q_{s,s+j}`.
pub fn resolvent_q(trace: &CurvatureTrace, s: usize) -> Vec<Matrix> {
    integrate(trace, s, |k| trace.ric[k])
}

/// `Q̃_{s,t}` for the shifted curvature `Ric_Z − (K1+K2)/2`.
pub fn resolvent_q_sym(trace: &CurvatureTrace, s: usize) -> Vec<Matrix> {
    integrate(trace, s, |k| trace.shifted(k))
}

/// Per-step propagators `P_k` with `Q_{k,k+1} = P_k`.
pub fn step_propagators(trace: &CurvatureTrace) -> Vec<Matrix> {
    (0..trace.len().saturating_sub(1)).map(|k| rk4_propagator(&trace.ric[k], &trace.ric[k + 1], trace.dt)).collect()
}

/// `A_{s,t}` from node indices.
pub fn damping_a(trace: &CurvatureTrace, s: usize, t: usize) -> f64 {
    trace.damping(s, t)
}

/// Discrete random measure restricted to `[s, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MuMeasure {
    pub anchor: usize,
    /// `weights[j]` is the mass of step `[s_{anchor+j}, s_{anchor+j+1})`.
    pub weights: Vec<f64>,
    pub total: f64,
    pub convention: MuConvention,
}

/// Weights `w_k = e^{E(s_{k+1})} − e^{E(s_k)}` with `E` the trapezoidal
/// exponent `∫ (K1−K2)/2` from the base point; they telescope to the exact
/// total `e^{E(T)} − e^{E(s)}` and agree with `e^{E}(K1−K2)/2 dt` to `O(dt²)`.
pub fn mu_measure(trace: &CurvatureTrace, s: usize, convention: MuConvention) -> Result<MuMeasure> {
    let m = trace.len();
    if s >= m {
        return Err(Error::InvalidArgument(format!("anchor {s} beyond path of {m} nodes")));
    }
    for k in s..m {
        if trace.k1[k] < trace.k2[k] {
            return Err(Error::NegativeMass { index: k });
        }
    }
    let base = match convention {
        MuConvention::Restart => trace.half_gap_integral[s],
        MuConvention::Global => 0.0,
    };
    let e = |k: usize| (trace.half_gap_integral[k] - base).exp();
    let weights: Vec<f64> = (s..m - 1).map(|k| e(k + 1) - e(k)).collect();
    let total = e(m - 1) - e(s);
    Ok(MuMeasure { anchor: s, weights, total, convention })
}

/// Transport data for one anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPack {
    pub anchor: usize,
    pub q: Vec<Matrix>,
    pub qtilde: Vec<Matrix>,
    /// `a[j] = A_{s, s+j}`
    pub a: Vec<f64>,
    pub mu: MuMeasure,
}

impl TransportPack {
    pub fn build(trace: &CurvatureTrace, s: usize, convention: MuConvention) -> Result<Self> {
        let mu = mu_measure(trace, s, convention)?;
        let a = (s..trace.len()).map(|t| trace.damping(s, t)).collect();
        Ok(Self { anchor: s, q: resolvent_q(trace, s), qtilde: resolvent_q_sym(trace, s), a, mu })
    }
}

/// Worst deviations of the transport identities on one path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransportDefects {
    /// `max |Q_{s,u} − Q_{s,t} Q_{t,u}|`
    pub cocycle: f64,
    /// `max |Q̃_{s,t} − e^{∫(K1+K2)/2} Q_{s,t}|`, relative to `max(1, |Q̃|)`
    pub shift_identity: f64,
    /// `max (‖Q̃_{s,t}‖ − e^{∫(K1−K2)/2})`, only where the bounds hold along the path.
    pub norm_excess: f64,
    /// Whether `K2 ≤ Ric_Z ≤ K1` held at every node.
    pub bounds_hold: bool,
}

impl TransportDefects {
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            cocycle: self.cocycle.max(other.cocycle),
            shift_identity: self.shift_identity.max(other.shift_identity),
            norm_excess: self.norm_excess.max(other.norm_excess),
            bounds_hold: self.bounds_hold && other.bounds_hold,
        }
    }
}

/// Check the cocycle, shift and norm identities on one path, anchoring at
/// `s = 0` and the middle node.
pub fn transport_defects(trace: &CurvatureTrace) -> TransportDefects {
    let m = trace.len();
    let mid = (m - 1) / 2;
    let q0 = resolvent_q(trace, 0);
    let qm = resolvent_q(trace, mid);
    let mut cocycle: f64 = 0.0;
    for u in mid..m {
        let composed = q0[mid].mat_mul(&qm[u - mid]);
        cocycle = cocycle.max(q0[u].max_abs_diff(&composed));
    }
    let mut bounds_hold = true;
    for k in 0..m {
        let ev = trace.ric[k].symmetric_eigenvalues();
        let n = trace.ric[k].dim();
        let slack = 1e-9 * (1.0 + trace.k1[k].abs().max(trace.k2[k].abs()));
        if ev[0] < trace.k2[k] - slack || ev[n - 1] > trace.k1[k] + slack {
            bounds_hold = false;
        }
    }
    let mut shift_identity: f64 = 0.0;
    let mut norm_excess = f64::NEG_INFINITY;
    for s in [0, mid] {
        let q = if s == 0 { &q0 } else { &qm };
        let qt = resolvent_q_sym(trace, s);
        for t in s..m {
            let factor = (trace.mean_integral[t] - trace.mean_integral[s]).exp();
            let scale = qt[t - s].max_abs().max(1.0);
            shift_identity = shift_identity.max(qt[t - s].max_abs_diff(&q[t - s].scale(factor)) / scale);
            if bounds_hold {
                norm_excess = norm_excess.max(qt[t - s].operator_norm() - trace.growth(s, t));
            }
        }
    }
    if !bounds_hold {
        norm_excess = 0.0;
    }
    TransportDefects { cocycle, shift_identity, norm_excess, bounds_hold }
}
