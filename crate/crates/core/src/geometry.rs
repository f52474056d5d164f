//! Model manifolds in local charts: metric, Levi-Civita connection,
//! curvature, drift and the Bakry–Émery tensor `Ric + ∇Z`.
//!
//! Every preset carries closed forms for its connection and curvature; a
//! finite-difference backend computed from the chart metric alone is kept
//! next to them and used to cross-check the closed forms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::FrameState;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Tensor3, Vector, MAX_DIM};
use crate::rng::NormalStream;

/// Stereographic coordinates are re-expressed in the antipodal chart once
/// `|u|` exceeds this radius.
pub const SPHERE_SWITCH_RADIUS: f64 = 1.5;
/// Largest `|u|` accepted in a stereographic chart.
pub const SPHERE_VALIDITY_RADIUS: f64 = 3.0;
/// Largest `|u|` accepted in the Poincaré-ball chart.
pub const HYPERBOLIC_VALIDITY_RADIUS: f64 = 0.995;

/// Metric derivative step, relative to `max(1, |u|)`.
pub const FD_METRIC_STEP: f64 = 1e-4;
/// Step for differentiating Christoffel symbols when building the Riemann tensor.
pub const FD_CONNECTION_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preset {
    Euclidean,
    /// Flat space with the linear drift `Z(x) = λx`.
    OrnsteinUhlenbeck { lambda: f64 },
    Sphere { radius: f64 },
    Hyperbolic { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureBackend {
    Analytic,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartDescriptor {
    pub id: usize,
    /// `|u|` must stay strictly below this value.
    pub validity_radius: f64,
    /// Above this radius the state is moved to another chart.
    pub switch_radius: Option<f64>,
}

/// A point of the manifold in a specific chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub chart: usize,
    pub u: Vector,
}

impl Point {
    pub fn new(chart: usize, u: Vector) -> Self {
        Self { chart, u }
    }
}

/// `Γ(a, b) = a (b·∇φ) + b (a·∇φ) − (a·b) ∇φ` for `g = e^{2φ} δ`.
#[inline(always)]
fn conformal_contract(dphi: &Vector, a: &Vector, b: &Vector) -> Vector {
    b.scale(a.dot(dphi)) + a.scale(b.dot(dphi)) - dphi.scale(a.dot(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldModel {
    pub preset: Preset,
    pub dim: usize,
    pub charts: Vec<ChartDescriptor>,
    pub backend: CurvatureBackend,
}

impl ManifoldModel {
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::build(Preset::Euclidean, dim)
    }

    pub fn ornstein_uhlenbeck(dim: usize, lambda: f64) -> Result<Self> {
        Self::build(Preset::OrnsteinUhlenbeck { lambda }, dim)
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        Self::build(Preset::Sphere { radius }, dim)
    }

    pub fn hyperbolic(dim: usize, radius: f64) -> Result<Self> {
        Self::build(Preset::Hyperbolic { radius }, dim)
    }

    pub fn build(preset: Preset, dim: usize) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if dim == 0 || dim > MAX_DIM {
            return bad(format!("dimension must be in 1..={MAX_DIM}, got {dim}"));
        }
        let charts = match preset {
            Preset::Euclidean => vec![ChartDescriptor { id: 0, validity_radius: f64::INFINITY, switch_radius: None }],
            Preset::OrnsteinUhlenbeck { lambda } => {
                if !lambda.is_finite() {
                    return bad("lambda must be finite".into());
                }
                vec![ChartDescriptor { id: 0, validity_radius: f64::INFINITY, switch_radius: None }]
            }
            Preset::Sphere { radius } => {
                if !(2..=3).contains(&dim) {
                    return bad(format!("sphere preset supports dim 2 or 3, got {dim}"));
                }
                if !(radius > 0.0) {
                    return bad("sphere radius must be positive".into());
                }
                (0..2)
                    .map(|id| ChartDescriptor {
                        id,
                        validity_radius: SPHERE_VALIDITY_RADIUS,
                        switch_radius: Some(SPHERE_SWITCH_RADIUS),
                    })
                    .collect()
            }
            Preset::Hyperbolic { radius } => {
                if !(2..=3).contains(&dim) {
                    return bad(format!("hyperbolic preset supports dim 2 or 3, got {dim}"));
                }
                if !(radius > 0.0) {
                    return bad("hyperbolic radius must be positive".into());
                }
                vec![ChartDescriptor { id: 0, validity_radius: HYPERBOLIC_VALIDITY_RADIUS, switch_radius: None }]
            }
        };
        Ok(Self { preset, dim, charts, backend: CurvatureBackend::Analytic })
    }

    pub fn with_backend(mut self, backend: CurvatureBackend) -> Self {
        self.backend = backend;
        self
    }

    /// Flat metric with the analytic backend: zero connection, constant frames.
    #[inline]
    pub fn is_flat(&self) -> bool {
        self.backend == CurvatureBackend::Analytic && matches!(self.preset, Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.preset {
            Preset::Euclidean => "euclidean",
            Preset::OrnsteinUhlenbeck { .. } => "ou",
            Preset::Sphere { .. } => "sphere",
            Preset::Hyperbolic { .. } => "hyperbolic",
        }
    }

    /// Compact parameter string used in reports.
    pub fn params_label(&self) -> String {
        match self.preset {
            Preset::Euclidean => String::new(),
            Preset::OrnsteinUhlenbeck { lambda } => format!("lambda={lambda}"),
            Preset::Sphere { radius } | Preset::Hyperbolic { radius } => format!("radius={radius}"),
        }
    }

    /// Sectional curvature of the constant-curvature presets, 0 for flat ones.
    pub fn sectional_curvature(&self) -> f64 {
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => 0.0,
            Preset::Sphere { radius } => 1.0 / (radius * radius),
            Preset::Hyperbolic { radius } => -1.0 / (radius * radius),
        }
    }

    /// Ricci curvature plus the drift contribution, `Ric_Z = κ(n−1) + λ`,
    /// for these presets (all are Einstein with constant `∇Z`).
    pub fn einstein_constant(&self) -> f64 {
        let drift = match self.preset {
            Preset::OrnsteinUhlenbeck { lambda } => lambda,
            _ => 0.0,
        };
        self.sectional_curvature() * (self.dim as f64 - 1.0) + drift
    }

    pub fn chart(&self, chart: usize) -> Result<&ChartDescriptor> {
        self.charts.get(chart).ok_or(Error::NoCoveringChart)
    }

    pub fn check_in_chart(&self, p: &Point) -> Result<()> {
        let c = self.chart(p.chart)?;
        let norm = p.u.norm();
        if !(norm < c.validity_radius) {
            return Err(Error::OutOfChart { chart: p.chart, norm, radius: c.validity_radius });
        }
        Ok(())
    }

    /// The reference point `o` of the atlas (chart 0, `u = 0`).
    pub fn origin(&self) -> Point {
        Point::new(0, Vector::zeros(self.dim))
    }

    // ---------------------------------------------------------------------
    // metric

    /// Connection contractions `Γ(a, b_j)` for several `b_j` at once.
    #[inline]
    pub fn connection_columns(&self, u: &Vector, a: &Vector, frame: &Matrix) -> Matrix {
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        if self.backend == CurvatureBackend::Analytic {
            if self.is_flat() {
                return out;
            }
            let dphi = self.conformal_gradient(u);
            for j in 0..n {
                out.set_column(j, &conformal_contract(&dphi, a, &frame.column(j)));
            }
            return out;
        }
        for j in 0..n {
            out.set_column(j, &self.connection(u, a, &frame.column(j)));
        }
        out
    }

    /// Gradient of the log conformal factor `φ` for conformally flat presets
    /// (`g = e^{2φ} δ`).
    #[inline]
    fn conformal_gradient(&self, u: &Vector) -> Vector {
        let s = u.norm_sq();
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => Vector::zeros(self.dim),
            Preset::Sphere { .. } => u.scale(-2.0 / (1.0 + s)),
            Preset::Hyperbolic { .. } => u.scale(2.0 / (1.0 - s)),
        }
    }

    fn conformal_factor(&self, u: &Vector) -> f64 {
        let s = u.norm_sq();
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => 1.0,
            Preset::Sphere { radius } => {
                let e = 2.0 * radius / (1.0 + s);
                e * e
            }
            Preset::Hyperbolic { radius } => {
                let e = 2.0 * radius / (1.0 - s);
                e * e
            }
        }
    }

    pub fn metric_at(&self, chart: usize, u: &Vector) -> Result<Matrix> {
        self.check_in_chart(&Point::new(chart, *u))?;
        Ok(self.metric_unchecked(u))
    }

    #[inline]
    fn metric_unchecked(&self, u: &Vector) -> Matrix {
        Matrix::scaled_identity(self.dim, self.conformal_factor(u))
    }

    /// Inner product of two tangent vectors at `u`.
    #[inline]
    pub fn inner(&self, u: &Vector, a: &Vector, b: &Vector) -> f64 {
        self.conformal_factor(u) * a.dot(b)
    }

    // ---------------------------------------------------------------------
    // connection and curvature

    pub fn christoffel_at(&self, chart: usize, u: &Vector) -> Result<Tensor3> {
        self.check_in_chart(&Point::new(chart, *u))?;
        match self.backend {
            CurvatureBackend::Analytic => Ok(self.christoffel_analytic(u)),
            CurvatureBackend::FiniteDifference => self.christoffel_fd(chart, u, FD_METRIC_STEP),
        }
    }

    /// `Γ^k_{ij} a^i b^j` without materialising the tensor on the analytic
    /// backend. The caller guarantees `u` lies in the chart.
    #[inline]
    pub fn connection(&self, u: &Vector, a: &Vector, b: &Vector) -> Vector {
        if self.backend == CurvatureBackend::Analytic {
            return match self.preset {
                Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => Vector::zeros(self.dim),
                _ => conformal_contract(&self.conformal_gradient(u), a, b),
            };
        }
        match (self.backend, self.preset) {
            (CurvatureBackend::Analytic, Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. }) => Vector::zeros(self.dim),
            (CurvatureBackend::Analytic, _) => conformal_contract(&self.conformal_gradient(u), a, b),
            (CurvatureBackend::FiniteDifference, _) => match self.christoffel_fd(0, u, FD_METRIC_STEP) {
                Ok(gamma) => gamma.contract(a, b),
                Err(_) => Vector::zeros(self.dim) * f64::NAN,
            },
        }
    }

    /// `Γ^k_{ij} = δ^k_i ∂_jφ + δ^k_j ∂_iφ − δ_{ij} ∂_kφ` for `g = e^{2φ}δ`.
    #[inline]
    pub(crate) fn christoffel_analytic(&self, u: &Vector) -> Tensor3 {
        let n = self.dim;
        let mut gamma = Tensor3::zeros(n);
        if matches!(self.preset, Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. }) {
            return gamma;
        }
        let dphi = self.conformal_gradient(u);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 0.0;
                    if k == i {
                        v += dphi[j];
                    }
                    if k == j {
                        v += dphi[i];
                    }
                    if i == j {
                        v -= dphi[k];
                    }
                    gamma.set(k, i, j, v);
                }
            }
        }
        gamma
    }

    /// Christoffel symbols from central differences of the chart metric with
    /// step `rel_step · max(1, |u|)`.
    pub fn christoffel_fd(&self, chart: usize, u: &Vector, rel_step: f64) -> Result<Tensor3> {
        self.check_in_chart(&Point::new(chart, *u))?;
        let n = self.dim;
        let h = rel_step * u.norm().max(1.0);
        let g = self.metric_unchecked(u);
        let ginv = g.spd_inverse().ok_or(Error::SingularMetric)?;
        // dg[l] = ∂_l g
        let mut dg = [Matrix::zeros(n); MAX_DIM];
        for l in 0..n {
            let mut up = *u;
            let mut um = *u;
            up[l] += h;
            um[l] -= h;
            dg[l] = (self.metric_unchecked(&up) - self.metric_unchecked(&um)).scale(0.5 / h);
        }
        let mut gamma = Tensor3::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    gamma.set(k, i, j, 0.5 * s);
                }
            }
        }
        Ok(gamma)
    }

    pub fn ricci_at(&self, chart: usize, u: &Vector) -> Result<Matrix> {
        self.check_in_chart(&Point::new(chart, *u))?;
        match self.backend {
            CurvatureBackend::Analytic => Ok(self.ricci_analytic(u)),
            CurvatureBackend::FiniteDifference => self.ricci_fd(chart, u, FD_CONNECTION_STEP),
        }
    }

    /// Constant-curvature presets: `Ric = κ(n−1) g`.
    fn ricci_analytic(&self, u: &Vector) -> Matrix {
        let kappa = self.sectional_curvature();
        self.metric_unchecked(u).scale(kappa * (self.dim as f64 - 1.0))
    }

    /// Ricci tensor from the Riemann tensor, differentiating finite-difference
    /// Christoffel symbols with step `rel_step · max(1, |u|)`:
    /// `Ric_{σν} = ∂_ρΓ^ρ_{νσ} − ∂_νΓ^ρ_{ρσ} + Γ^ρ_{ρλ}Γ^λ_{νσ} − Γ^ρ_{νλ}Γ^λ_{ρσ}`.
    pub fn ricci_fd(&self, chart: usize, u: &Vector, rel_step: f64) -> Result<Matrix> {
        self.ricci_fd_with(chart, u, rel_step, |m, c, x| m.christoffel_fd(c, x, FD_METRIC_STEP))
    }

    /// Same contraction as [`Self::ricci_fd`] but differentiating a caller
    /// supplied connection.
    pub fn ricci_fd_with<F>(&self, chart: usize, u: &Vector, rel_step: f64, connection: F) -> Result<Matrix>
    where
        F: Fn(&Self, usize, &Vector) -> Result<Tensor3>,
    {
        let n = self.dim;
        let h = rel_step * u.norm().max(1.0);
        let gamma = connection(self, chart, u)?;
        let mut dgamma = [Tensor3::zeros(n); MAX_DIM];
        for m in 0..n {
            let mut up = *u;
            let mut um = *u;
            up[m] += h;
            um[m] -= h;
            let gp = connection(self, chart, &up)?;
            let gm = connection(self, chart, &um)?;
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        dgamma[m].set(k, i, j, (gp.get(k, i, j) - gm.get(k, i, j)) / (2.0 * h));
                    }
                }
            }
        }
        let mut ric = Matrix::zeros(n);
        for s in 0..n {
            for v in 0..n {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += dgamma[r].get(r, v, s) - dgamma[v].get(r, r, s);
                    for l in 0..n {
                        acc += gamma.get(r, r, l) * gamma.get(l, v, s) - gamma.get(r, v, l) * gamma.get(l, r, s);
                    }
                }
                ric[(s, v)] = acc;
            }
        }
        Ok(ric.symmetric_part())
    }

    // ---------------------------------------------------------------------
    // drift

    /// Coordinate components of the drift field `Z`.
    #[inline]
    pub fn drift_at(&self, u: &Vector) -> Vector {
        match self.preset {
            Preset::OrnsteinUhlenbeck { lambda } => u.scale(lambda),
            _ => Vector::zeros(self.dim),
        }
    }

    /// `∂_j Z^i`
    fn drift_jacobian(&self, _u: &Vector) -> Matrix {
        match self.preset {
            Preset::OrnsteinUhlenbeck { lambda } => Matrix::scaled_identity(self.dim, lambda),
            _ => Matrix::zeros(self.dim),
        }
    }

    /// Symmetrised covariant derivative of `Z` as a bilinear form in
    /// coordinates: `½(B + Bᵀ)` with `B_{ij} = g_{ik}(∂_j Z^k + Γ^k_{jl} Z^l)`.
    pub fn covariant_drift_at(&self, chart: usize, u: &Vector) -> Result<Matrix> {
        let n = self.dim;
        let g = self.metric_at(chart, u)?;
        let gamma = self.christoffel_at(chart, u)?;
        let z = self.drift_at(u);
        let dz = self.drift_jacobian(u);
        let mut nabla = dz;
        for k in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += gamma.get(k, j, l) * z[l];
                }
                nabla[(k, j)] += s;
            }
        }
        Ok(g.mat_mul(&nabla).symmetric_part())
    }

    /// Coordinate Bakry–Émery tensor `Ric + ½(∇Z + ∇Zᵀ)`.
    pub fn bakry_emery_at(&self, chart: usize, u: &Vector) -> Result<Matrix> {
        if self.backend == CurvatureBackend::Analytic && !matches!(self.preset, Preset::OrnsteinUhlenbeck { .. }) {
            self.check_in_chart(&Point::new(chart, *u))?;
            return Ok(self.ricci_analytic(u));
        }
        Ok(self.ricci_at(chart, u)? + self.covariant_drift_at(chart, u)?)
    }

    /// Bakry–Émery tensor in the frame basis: `M_{ab} = Ric_Z(U e_a, U e_b)`.
    pub fn bakry_emery_frame(&self, state: &FrameState) -> Result<Matrix> {
        if self.backend == CurvatureBackend::Analytic {
            // Ric_Z = c g on every preset, so the frame form is c UᵀgU
            self.check_in_chart(&state.point())?;
            let c = self.einstein_constant() * self.conformal_factor(&state.u);
            return Ok(state.frame.transpose().mat_mul(&state.frame).scale(c).symmetric_part());
        }
        let b = self.bakry_emery_at(state.chart, &state.u)?;
        Ok(state.frame.transpose().mat_mul(&b).mat_mul(&state.frame).symmetric_part())
    }

    // ---------------------------------------------------------------------
    // charts and embeddings

    /// Re-express a state in the antipodal stereographic chart when it has
    /// moved past the switch radius; identity otherwise.
    pub fn chart_normalize(&self, state: &FrameState) -> Result<FrameState> {
        let chart = self.chart(state.chart)?;
        let norm = state.u.norm();
        match chart.switch_radius {
            Some(r) if norm > r => {
                let (u2, jac) = self.stereographic_transition(&state.u);
                let frame = jac.mat_mul(&state.frame);
                let out = FrameState { chart: 1 - state.chart, u: u2, frame, t: state.t };
                self.check_in_chart(&Point::new(out.chart, out.u)).map_err(|_| Error::NoCoveringChart)?;
                Ok(out)
            }
            _ => {
                if !(norm < chart.validity_radius) {
                    return Err(Error::OutOfChart { chart: state.chart, norm, radius: chart.validity_radius });
                }
                Ok(*state)
            }
        }
    }

    /// Inversion `u ↦ u/|u|²` between the two stereographic charts, with its
    /// Jacobian `(I − 2ûûᵀ)/|u|²`.
    fn stereographic_transition(&self, u: &Vector) -> (Vector, Matrix) {
        let n = self.dim;
        let s = u.norm_sq();
        let u2 = u.scale(1.0 / s);
        let mut jac = Matrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] -= 2.0 * u[i] * u[j] / s;
            }
        }
        (u2, jac.scale(1.0 / s))
    }

    /// Coordinates of `p` in `chart` (identity when already there).
    pub fn to_chart(&self, p: &Point, chart: usize) -> Result<Point> {
        if p.chart == chart {
            return Ok(*p);
        }
        match self.preset {
            Preset::Sphere { .. } => {
                let (u2, _) = self.stereographic_transition(&p.u);
                let q = Point::new(chart, u2);
                self.check_in_chart(&q)?;
                Ok(q)
            }
            _ => Err(Error::NoCoveringChart),
        }
    }

    /// Dimension of the ambient space used by [`Self::embed`].
    pub fn ambient_dim(&self) -> usize {
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => self.dim,
            Preset::Sphere { .. } | Preset::Hyperbolic { .. } => self.dim + 1,
        }
    }

    /// Ambient realisation: identity for flat presets, the round sphere
    /// `|p| = r` in `ℝ^{n+1}`, or the hyperboloid `−y₀² + |y|² = −r²` with the
    /// time-like coordinate stored last.
    pub fn embed(&self, p: &Point) -> Vector {
        let u = &p.u;
        let n = self.dim;
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => *u,
            Preset::Sphere { radius } => {
                let s = u.norm_sq();
                let mut out = Vector::zeros(n + 1);
                for i in 0..n {
                    out[i] = radius * 2.0 * u[i] / (1.0 + s);
                }
                let h = radius * (1.0 - s) / (1.0 + s);
                out[n] = if p.chart == 0 { h } else { -h };
                out
            }
            Preset::Hyperbolic { radius } => {
                let s = u.norm_sq();
                let mut out = Vector::zeros(n + 1);
                for i in 0..n {
                    out[i] = radius * 2.0 * u[i] / (1.0 - s);
                }
                out[n] = radius * (1.0 + s) / (1.0 - s);
                out
            }
        }
    }

    /// Columns `∂P/∂u_j` of the embedding Jacobian.
    pub fn embed_jacobian(&self, p: &Point) -> [Vector; MAX_DIM] {
        let u = &p.u;
        let n = self.dim;
        let na = self.ambient_dim();
        let mut cols = [Vector::zeros(na); MAX_DIM];
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => {
                for j in 0..n {
                    cols[j][j] = 1.0;
                }
            }
            Preset::Sphere { radius } => {
                let s = 1.0 + u.norm_sq();
                let sign = if p.chart == 0 { 1.0 } else { -1.0 };
                for j in 0..n {
                    for i in 0..n {
                        let d = if i == j { 2.0 / s } else { 0.0 };
                        cols[j][i] = radius * (d - 4.0 * u[i] * u[j] / (s * s));
                    }
                    cols[j][n] = -sign * radius * 4.0 * u[j] / (s * s);
                }
            }
            Preset::Hyperbolic { radius } => {
                let s = 1.0 - u.norm_sq();
                for j in 0..n {
                    for i in 0..n {
                        let d = if i == j { 2.0 / s } else { 0.0 };
                        cols[j][i] = radius * (d + 4.0 * u[i] * u[j] / (s * s));
                    }
                    cols[j][n] = radius * 4.0 * u[j] / (s * s);
                }
            }
        }
        cols
    }

    /// Inverse of [`Self::embed`], choosing the chart with the smaller `|u|`.
    pub fn from_ambient(&self, y: &Vector) -> Result<Point> {
        let n = self.dim;
        let p = match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => Point::new(0, *y),
            Preset::Sphere { radius } => {
                let last = y[n];
                let (chart, denom) = if last >= 0.0 { (0, radius + last) } else { (1, radius - last) };
                let mut u = Vector::zeros(n);
                for i in 0..n {
                    u[i] = y[i] / denom;
                }
                Point::new(chart, u)
            }
            Preset::Hyperbolic { radius } => {
                let mut u = Vector::zeros(n);
                for i in 0..n {
                    u[i] = y[i] / (radius + y[n]);
                }
                Point::new(0, u)
            }
        };
        self.check_in_chart(&p)?;
        Ok(p)
    }

    /// Riemannian distance, closed form per preset.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => (a.u - b.u).norm(),
            Preset::Sphere { radius } => {
                let chord = (self.embed(a) - self.embed(b)).norm();
                2.0 * radius * (chord / (2.0 * radius)).min(1.0).asin()
            }
            Preset::Hyperbolic { radius } => {
                let x = 2.0 * (a.u - b.u).norm_sq() / ((1.0 - a.u.norm_sq()) * (1.0 - b.u.norm_sq()));
                radius * (x + (x * (x + 2.0)).sqrt()).ln_1p()
            }
        }
    }

    /// Differential (covector) of `y ↦ d(y, x)` at `y`, by central differences
    /// of the closed-form distance in the chart of `y`.
    pub fn distance_differential(&self, y: &Point, x: &Point) -> Vector {
        let n = self.dim;
        let h = 1e-6 * y.u.norm().max(1.0);
        let mut out = Vector::zeros(n);
        for j in 0..n {
            let mut up = *y;
            let mut um = *y;
            up.u[j] += h;
            um.u[j] -= h;
            out[j] = (self.distance(&up, x) - self.distance(&um, x)) / (2.0 * h);
        }
        out
    }

    /// Injectivity radius of the presets (`π r` on the sphere, `∞` otherwise).
    pub fn injectivity_radius(&self) -> f64 {
        match self.preset {
            Preset::Sphere { radius } => PI * radius,
            _ => f64::INFINITY,
        }
    }

    /// Exponential map at `p` applied to the chart tangent vector `v`.
    pub fn exp_map(&self, p: &Point, v: &Vector) -> Result<Point> {
        let n = self.dim;
        match self.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => Ok(Point::new(0, p.u + *v)),
            Preset::Sphere { radius } | Preset::Hyperbolic { radius } => {
                let len = self.inner(&p.u, v, v).sqrt();
                if len == 0.0 {
                    return Ok(*p);
                }
                let base = self.embed(p);
                let jac = self.embed_jacobian(p);
                let mut dir = Vector::zeros(n + 1);
                for j in 0..n {
                    dir += jac[j].scale(v[j] / len);
                }
                let a = len / radius;
                let y = if matches!(self.preset, Preset::Sphere { .. }) {
                    base.scale(a.cos()) + dir.scale(radius * a.sin())
                } else {
                    base.scale(a.cosh()) + dir.scale(radius * a.sinh())
                };
                self.from_ambient(&y)
            }
        }
    }

    /// Orthonormal frame at `p`: Gram–Schmidt of the chart basis.
    pub fn initial_frame(&self, p: &Point) -> Result<Matrix> {
        self.check_in_chart(p)?;
        let cols: Vec<Vector> = (0..self.dim).map(|i| Vector::basis(self.dim, i)).collect();
        self.orthonormalize(&p.u, &Matrix::from_columns(&cols))
    }

    /// Modified Gram–Schmidt of the columns of `frame` with respect to `g(u)`.
    #[inline]
    pub fn orthonormalize(&self, u: &Vector, frame: &Matrix) -> Result<Matrix> {
        let n = self.dim;
        let c = self.conformal_factor(u);
        let mut out = *frame;
        for a in 0..n {
            let mut col = out.column(a);
            for b in 0..a {
                let prev = out.column(b);
                let proj = c * col.dot(&prev);
                col -= prev.scale(proj);
            }
            let len = (c * col.norm_sq()).sqrt();
            if !(len > 0.0) || !len.is_finite() {
                return Err(Error::SingularMetric);
            }
            out.set_column(a, &col.scale(1.0 / len));
        }
        Ok(out)
    }

    /// `max |Uᵀ g U − I|` for a frame at `u`.
    pub fn frame_defect(&self, u: &Vector, frame: &Matrix) -> f64 {
        let g = self.metric_unchecked(u);
        frame.transpose().mat_mul(&g).mat_mul(frame).max_abs_diff(&Matrix::identity(self.dim))
    }

    /// Estimate of `C_R^x = inf { Ric_Z(X,X) : |X| = 1, y ∈ B_R(x) }` from
    /// `n_samples` seeded points of the metric ball (plus its centre). Returns
    /// the infimum and the minimising point.
    pub fn local_curvature_inf(&self, x: &Point, radius: f64, n_samples: usize, seed: u64) -> Result<(f64, Point)> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("ball radius must be positive".into()));
        }
        self.check_in_chart(x)?;
        if let Preset::Hyperbolic { .. } = self.preset {
            // distance from x to the validity sphere along the ray through x
            let boundary = {
                let dir = if x.u.norm() > 0.0 { x.u.scale(1.0 / x.u.norm()) } else { Vector::basis(self.dim, 0) };
                self.distance(x, &Point::new(0, dir.scale(HYPERBOLIC_VALIDITY_RADIUS)))
            };
            if radius >= boundary {
                return Err(Error::OutOfChart { chart: 0, norm: HYPERBOLIC_VALIDITY_RADIUS, radius: HYPERBOLIC_VALIDITY_RADIUS });
            }
        }
        if radius >= self.injectivity_radius() {
            return Err(Error::InvalidArgument("ball radius exceeds the injectivity radius".into()));
        }
        let n = self.dim;
        let frame = self.initial_frame(x)?;
        let mut stream = NormalStream::new(&[seed, 0xba11]);
        let mut best = (f64::INFINITY, *x);
        for k in 0..=n_samples {
            let y = if k == 0 {
                *x
            } else {
                let mut dir = Vector::zeros(n);
                for i in 0..n {
                    dir[i] = stream.normal();
                }
                let dir = dir.scale(1.0 / dir.norm());
                let r = radius * stream.uniform().powf(1.0 / n as f64);
                self.exp_map(x, &frame.mat_vec(&dir.scale(r)))?
            };
            let yf = self.initial_frame(&y)?;
            let state = FrameState { chart: y.chart, u: y.u, frame: yf, t: 0.0 };
            let ev = self.bakry_emery_frame(&state)?.symmetric_eigenvalues();
            if ev[0] < best.0 {
                best = (ev[0], y);
            }
        }
        Ok(best)
    }
}

// -------------------------------------------------------------------------
// curvature bounds

/// A function on the manifold used as a curvature bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundFn {
    Constant { value: f64 },
    /// `base + min(d(o, y)², cap)` with `o` the atlas origin.
    RadialQuadratic { base: f64, cap: f64 },
    /// Largest eigenvalue of `Ric_Z` at the point.
    PointwiseMax,
    /// Smallest eigenvalue of `Ric_Z` at the point.
    PointwiseMin,
}

impl BoundFn {
    pub fn eval(&self, model: &ManifoldModel, p: &Point) -> Result<f64> {
        match *self {
            BoundFn::Constant { value } => Ok(value),
            BoundFn::RadialQuadratic { base, cap } => {
                let d = model.distance(&model.origin(), p);
                Ok(base + (d * d).min(cap))
            }
            BoundFn::PointwiseMax | BoundFn::PointwiseMin => {
                let frame = model.initial_frame(p)?;
                let state = FrameState { chart: p.chart, u: p.u, frame, t: 0.0 };
                let ev = model.bakry_emery_frame(&state)?.symmetric_eigenvalues();
                Ok(if matches!(self, BoundFn::PointwiseMax) { ev[model.dim - 1] } else { ev[0] })
            }
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            BoundFn::Constant { value } => Some(value),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    TwoSided,
    LowerOnly,
    UpperLocal,
}

/// Pair of bound functions `K1 ≥ K2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBoundSpec {
    pub k1: BoundFn,
    pub k2: BoundFn,
    pub mode: BoundMode,
}

impl CurvatureBoundSpec {
    pub fn constant(k1: f64, k2: f64) -> Self {
        Self { k1: BoundFn::Constant { value: k1 }, k2: BoundFn::Constant { value: k2 }, mode: BoundMode::TwoSided }
    }

    /// `(K1(p), K2(p))`, rejecting points where `K1 < K2`.
    pub fn eval(&self, model: &ManifoldModel, p: &Point) -> Result<(f64, f64)> {
        let k1 = self.k1.eval(model, p)?;
        let k2 = self.k2.eval(model, p)?;
        if k1 < k2 {
            return Err(Error::InvalidBounds { k1, k2 });
        }
        Ok((k1, k2))
    }

    pub fn constants(&self) -> Option<(f64, f64)> {
        Some((self.k1.constant_value()?, self.k2.constant_value()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn metric_examples() {
        let e = ManifoldModel::euclidean(2).unwrap();
        assert_eq!(e.metric_at(0, &Vector::from_slice(&[0.3, -1.0])).unwrap(), Matrix::identity(2));
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        assert_eq!(s.metric_at(0, &Vector::zeros(2)).unwrap(), Matrix::scaled_identity(2, 4.0));
        let h = ManifoldModel::hyperbolic(2, 1.0).unwrap();
        // 4 / (1 - 0.25)^2 = 64/9, computed by hand
        let g = h.metric_at(0, &Vector::from_slice(&[0.5, 0.0])).unwrap();
        assert!(g.max_abs_diff(&Matrix::scaled_identity(2, 64.0 / 9.0)) < 1e-14);
        let gt = g.transpose();
        assert!(g.max_abs_diff(&gt) < 1e-14);
    }

    #[test]
    fn out_of_chart_is_reported() {
        let h = ManifoldModel::hyperbolic(2, 1.0).unwrap();
        let err = h.metric_at(0, &Vector::from_slice(&[0.999, 0.0])).unwrap_err();
        assert!(matches!(err, Error::OutOfChart { .. }));
        assert!(matches!(h.christoffel_at(3, &Vector::zeros(2)), Err(Error::NoCoveringChart)));
    }

    #[test]
    fn christoffel_examples() {
        let e = ManifoldModel::euclidean(3).unwrap();
        assert_eq!(e.christoffel_at(0, &Vector::from_slice(&[1.0, 2.0, 3.0])).unwrap().max_abs(), 0.0);
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        assert_eq!(s.christoffel_at(0, &Vector::zeros(2)).unwrap().max_abs(), 0.0);
        let u = Vector::from_slice(&[0.4, 0.1]);
        let analytic = s.christoffel_at(0, &u).unwrap();
        let fd = s.christoffel_fd(0, &u, FD_METRIC_STEP).unwrap();
        assert!(analytic.max_abs_diff(&fd) < 1e-6);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(analytic.get(k, i, j), analytic.get(k, j, i));
                }
            }
        }
    }

    #[test]
    fn ricci_examples() {
        let e = ManifoldModel::euclidean(2).unwrap().with_backend(CurvatureBackend::FiniteDifference);
        assert!(e.ricci_at(0, &Vector::from_slice(&[0.2, 0.3])).unwrap().max_abs() < 1e-12);
        for (model, sign) in [(ManifoldModel::sphere(2, 1.0).unwrap(), 1.0), (ManifoldModel::hyperbolic(2, 1.0).unwrap(), -1.0)] {
            for u in [[0.0, 0.0], [0.3, -0.2], [0.5, 0.4]] {
                let u = Vector::from_slice(&u);
                let ric = model.ricci_fd(0, &u, FD_CONNECTION_STEP).unwrap();
                let g = model.metric_at(0, &u).unwrap();
                let rel = ric.max_abs_diff(&g.scale(sign)) / g.max_abs();
                assert!(rel < 1e-5, "{:?} {rel}", model.preset);
            }
        }
    }

    #[test]
    fn bakry_emery_examples() {
        let e = ManifoldModel::euclidean(2).unwrap();
        let st = FrameState::at(&e, Point::new(0, Vector::from_slice(&[1.0, 1.0]))).unwrap();
        assert_eq!(e.bakry_emery_frame(&st).unwrap().max_abs(), 0.0);
        let ou = ManifoldModel::ornstein_uhlenbeck(1, 1.0).unwrap();
        let st = FrameState::at(&ou, Point::new(0, Vector::from_slice(&[0.7]))).unwrap();
        assert!(approx(ou.bakry_emery_frame(&st).unwrap()[(0, 0)], 1.0, 1e-15));
        let s = ManifoldModel::sphere(2, 1.0).unwrap().with_backend(CurvatureBackend::FiniteDifference);
        let st = FrameState::at(&s, Point::new(0, Vector::from_slice(&[0.3, 0.6]))).unwrap();
        let m = s.bakry_emery_frame(&st).unwrap();
        assert!(m.max_abs_diff(&Matrix::identity(2)) < 1e-5);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn local_curvature_examples() {
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        let x = Point::new(0, Vector::from_slice(&[0.2, 0.1]));
        let (c, _) = s.local_curvature_inf(&x, 0.5, 64, 3).unwrap();
        assert!(approx(c, 1.0, 1e-6));
        let ou = ManifoldModel::ornstein_uhlenbeck(1, 2.0).unwrap();
        let (c, _) = ou.local_curvature_inf(&ou.origin(), 1.0, 32, 3).unwrap();
        assert!(approx(c, 2.0, 1e-12));
        let h = ManifoldModel::hyperbolic(2, 1.0).unwrap();
        let (c, _) = h.local_curvature_inf(&Point::new(0, Vector::from_slice(&[0.1, 0.0])), 0.5, 64, 3).unwrap();
        assert!(approx(c, -1.0, 1e-6));
        assert!(h.local_curvature_inf(&h.origin(), 10.0, 4, 1).is_err());
    }

    #[test]
    fn chart_switch_examples() {
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        let inside = FrameState::at(&s, Point::new(0, Vector::from_slice(&[0.1, 0.1]))).unwrap();
        assert_eq!(s.chart_normalize(&inside).unwrap(), inside);
        let far = FrameState::at(&s, Point::new(0, Vector::from_slice(&[2.0, 0.0]))).unwrap();
        let moved = s.chart_normalize(&far).unwrap();
        assert_eq!(moved.chart, 1);
        assert!((moved.u - Vector::from_slice(&[0.5, 0.0])).max_abs() < 1e-15);
        assert!(s.frame_defect(&moved.u, &moved.frame) < 1e-12);
        assert_eq!(s.chart_normalize(&moved).unwrap(), moved);
        // same point on the sphere
        let a = s.embed(&Point::new(far.chart, far.u));
        let b = s.embed(&Point::new(moved.chart, moved.u));
        assert!((a - b).max_abs() < 1e-15);
        let e = ManifoldModel::euclidean(2).unwrap();
        let st = FrameState::at(&e, Point::new(0, Vector::from_slice(&[50.0, 0.0]))).unwrap();
        assert_eq!(e.chart_normalize(&st).unwrap(), st);
    }

    #[test]
    fn distances_and_exp() {
        let s = ManifoldModel::sphere(2, 1.0).unwrap();
        let north = s.origin();
        let equator = Point::new(0, Vector::from_slice(&[1.0, 0.0]));
        assert!(approx(s.distance(&north, &equator), PI / 2.0, 1e-14));
        let v = Vector::from_slice(&[0.3, 0.0]); // |v|_g = 0.6 at the origin
        let q = s.exp_map(&north, &v).unwrap();
        assert!(approx(s.distance(&north, &q), 0.6, 1e-13));
        let h = ManifoldModel::hyperbolic(2, 1.0).unwrap();
        let q = h.exp_map(&h.origin(), &Vector::from_slice(&[0.0, 0.5])).unwrap();
        assert!(approx(h.distance(&h.origin(), &q), 1.0, 1e-13));
        // closed form for the Poincaré ball: d(0, u) = 2 atanh |u|
        assert!(approx(q.u.norm(), (0.5f64).tanh(), 1e-13));
        let dd = h.distance_differential(&q, &h.origin());
        let ginv = 1.0 / h.metric_at(0, &q.u).unwrap()[(0, 0)];
        assert!(approx((ginv * dd.norm_sq()).sqrt(), 1.0, 1e-7));
    }

    #[test]
    fn embedding_is_isometric() {
        for model in [ManifoldModel::sphere(3, 2.0).unwrap(), ManifoldModel::hyperbolic(2, 1.5).unwrap()] {
            let p = Point::new(0, Vector::from_slice(&vec![0.3; model.dim]));
            let jac = model.embed_jacobian(&p);
            let g = model.metric_at(0, &p.u).unwrap();
            let na = model.ambient_dim();
            let minkowski = matches!(model.preset, Preset::Hyperbolic { .. });
            for i in 0..model.dim {
                for j in 0..model.dim {
                    let mut s = 0.0;
                    for a in 0..na {
                        let w = if minkowski && a == na - 1 { -1.0 } else { 1.0 };
                        s += w * jac[i][a] * jac[j][a];
                    }
                    assert!(approx(s, g[(i, j)], 1e-12 * g.max_abs()));
                }
            }
            let y = model.embed(&p);
            let back = model.from_ambient(&y).unwrap();
            assert!((back.u - p.u).max_abs() < 1e-13);
        }
    }

    #[test]
    fn bounds_reject_inverted_pair() {
        let e = ManifoldModel::euclidean(1).unwrap();
        let b = CurvatureBoundSpec::constant(0.0, 1.0);
        assert!(matches!(b.eval(&e, &e.origin()), Err(Error::InvalidBounds { .. })));
        let q = CurvatureBoundSpec {
            k1: BoundFn::RadialQuadratic { base: 1.0, cap: 4.0 },
            k2: BoundFn::Constant { value: 0.0 },
            mode: BoundMode::TwoSided,
        };
        let (k1, _) = q.eval(&e, &Point::new(0, Vector::from_slice(&[1.5]))).unwrap();
        assert!(approx(k1, 3.25, 1e-15));
        let (k1, _) = q.eval(&e, &Point::new(0, Vector::from_slice(&[5.0]))).unwrap();
        assert!(approx(k1, 5.0, 1e-15));
    }
}
