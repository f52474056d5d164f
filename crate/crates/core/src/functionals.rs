//! Cylindrical functionals `F(γ) = f(γ_{t_1}, …, γ_{t_N})`, their localised
//! versions `F · l(ρ_x^m(γ))`, and the gradient densities built from them.
//!
//! Every density is assembled from a list of *summands*: a grid index `k`
//! together with the frame components `U_{s_k}^{-1} ∇_k F`. The Malliavin,
//! modified and damped gradients only differ in how summands are weighted.

use serde::{Deserialize, Serialize};

use crate::dynamics::PathSample;
use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point, Preset};
use crate::linalg::{Matrix, Vector};
use crate::transport::{resolvent_q, CurvatureTrace, MuConvention};

/// Smooth scalar functions on the model manifolds, mostly written through
/// the ambient embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointFunction {
    /// `scale · (y_index + offset)` in ambient coordinates.
    Ambient { index: usize, scale: f64, offset: f64 },
    /// `scale · u_index` in chart 0 (flat and hyperbolic presets).
    Chart { index: usize, scale: f64 },
    /// `scale · sin(y_index)`
    Sine { index: usize, scale: f64 },
    /// `scale · exp(−|y − c|² / (2 w²))`
    Gaussian { center: Vec<f64>, width: f64, scale: f64 },
}

impl PointFunction {
    /// Ambient coordinate with the closed-form semigroup used as the
    /// eigenfunction of each preset: `x_n` on flat presets, the height on the
    /// sphere, the first spatial hyperboloid coordinate on hyperbolic space.
    pub fn eigen(model: &ManifoldModel) -> Self {
        let index = match model.preset {
            Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. } => model.dim - 1,
            Preset::Sphere { .. } => model.dim,
            Preset::Hyperbolic { .. } => 0,
        };
        PointFunction::Ambient { index, scale: 1.0, offset: 0.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            PointFunction::Ambient { scale, .. }
            | PointFunction::Chart { scale, .. }
            | PointFunction::Sine { scale, .. }
            | PointFunction::Gaussian { scale, .. } => *scale *= c,
        }
        out
    }

    fn check(&self, model: &ManifoldModel) -> Result<()> {
        let na = model.ambient_dim();
        let ok = match self {
            PointFunction::Ambient { index, .. } | PointFunction::Sine { index, .. } => *index < na,
            PointFunction::Chart { index, .. } => *index < model.dim && !matches!(model.preset, Preset::Sphere { .. }),
            PointFunction::Gaussian { center, width, .. } => center.len() == na && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("function {self:?} does not fit the {} preset", model.name())))
        }
    }

    pub fn value(&self, model: &ManifoldModel, p: &Point) -> f64 {
        match self {
            PointFunction::Chart { index, scale } => scale * p.u[*index],
            _ => {
                let y = model.embed(p);
                match self {
                    PointFunction::Ambient { index, scale, offset } => scale * (y[*index] + offset),
                    PointFunction::Sine { index, scale } => scale * y[*index].sin(),
                    PointFunction::Gaussian { center, width, scale } => {
                        let d2: f64 = (0..y.dim()).map(|i| (y[i] - center[i]).powi(2)).sum();
                        scale * (-d2 / (2.0 * width * width)).exp()
                    }
                    PointFunction::Chart { .. } => unreachable!(),
                }
            }
        }
    }

    /// Ambient gradient of the extension of `f` (not tangential).
    fn ambient_gradient(&self, y: &Vector) -> Vector {
        let mut g = Vector::zeros(y.dim());
        match self {
            PointFunction::Ambient { index, scale, .. } => g[*index] = *scale,
            PointFunction::Sine { index, scale } => g[*index] = scale * y[*index].cos(),
            PointFunction::Gaussian { center, width, scale } => {
                let w2 = width * width;
                let d2: f64 = (0..y.dim()).map(|i| (y[i] - center[i]).powi(2)).sum();
                let e = scale * (-d2 / (2.0 * w2)).exp();
                for i in 0..y.dim() {
                    g[i] = -e * (y[i] - center[i]) / w2;
                }
            }
            PointFunction::Chart { .. } => unreachable!(),
        }
        g
    }

    /// Differential `∂f/∂u_j` in the chart of `p`.
    pub fn differential(&self, model: &ManifoldModel, p: &Point) -> Vector {
        let n = model.dim;
        if let PointFunction::Chart { index, scale } = self {
            let mut d = Vector::zeros(n);
            d[*index] = *scale;
            return d;
        }
        let y = model.embed(p);
        let grad = self.ambient_gradient(&y);
        let jac = model.embed_jacobian(p);
        let mut d = Vector::zeros(n);
        for j in 0..n {
            d[j] = jac[j].dot(&grad);
        }
        d
    }

    /// Riemannian norm `|∇f|(p)`.
    pub fn gradient_norm(&self, model: &ManifoldModel, p: &Point) -> f64 {
        let d = self.differential(model, p);
        let g = model.metric_at(p.chart, &p.u).map(|g| g[(0, 0)]).unwrap_or(f64::NAN);
        (d.norm_sq() / g).sqrt()
    }

    /// Eigenvalue `λ` with `L f = λ (f − offset·scale)` for ambient coordinates.
    fn ambient_eigenvalue(model: &ManifoldModel, index: usize) -> f64 {
        let n = model.dim as f64;
        match model.preset {
            Preset::Euclidean => 0.0,
            Preset::OrnsteinUhlenbeck { lambda } => -lambda,
            Preset::Sphere { radius } => -n / (radius * radius),
            Preset::Hyperbolic { radius } => {
                let _ = index;
                n / (radius * radius)
            }
        }
    }

    /// Closed form of `P_s f(p)` when available.
    pub fn semigroup(&self, model: &ManifoldModel, s: f64, p: &Point) -> Option<f64> {
        match self {
            PointFunction::Ambient { index, scale, offset } => {
                let y = model.embed(p)[*index];
                Some(scale * ((Self::ambient_eigenvalue(model, *index) * s).exp() * y + offset))
            }
            PointFunction::Chart { index, scale } if matches!(model.preset, Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. }) => {
                PointFunction::Ambient { index: *index, scale: *scale, offset: 0.0 }.semigroup(model, s, p)
            }
            _ => None,
        }
    }

    /// Closed form of `P_s f²(p)` when available.
    pub fn semigroup_square(&self, model: &ManifoldModel, s: f64, p: &Point) -> Option<f64> {
        let (index, scale, offset) = match self {
            PointFunction::Ambient { index, scale, offset } => (*index, *scale, *offset),
            PointFunction::Chart { index, scale } if matches!(model.preset, Preset::Euclidean | Preset::OrnsteinUhlenbeck { .. }) => (*index, *scale, 0.0),
            _ => return None,
        };
        let y = model.embed(p)[index];
        let n = model.dim as f64;
        let sq = match model.preset {
            Preset::Euclidean => y * y + 2.0 * s,
            Preset::OrnsteinUhlenbeck { lambda } => {
                if lambda == 0.0 {
                    y * y + 2.0 * s
                } else {
                    (-2.0 * lambda * s).exp() * y * y - (-2.0 * lambda * s).exp_m1() / lambda
                }
            }
            Preset::Sphere { radius } => {
                let c = radius * radius / (n + 1.0);
                (-2.0 * (n + 1.0) * s / (radius * radius)).exp() * (y * y - c) + c
            }
            Preset::Hyperbolic { radius } => {
                // spatial coordinates: |∇y|² = 1 + y²/r²; time coordinate: y²/r² − 1
                let c = if index < model.dim { radius * radius / (n + 1.0) } else { -radius * radius / (n + 1.0) };
                (2.0 * (n + 1.0) * s / (radius * radius)).exp() * (y * y + c) - c
            }
        };
        let mean = (Self::ambient_eigenvalue(model, index) * s).exp() * y;
        Some(scale * scale * (sq + 2.0 * offset * mean + offset * offset))
    }
}

// -------------------------------------------------------------------------
// cutoff

/// Smooth plateau `l(r)`: 1 on `[0, R/2]`, 0 on `[R, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub radius: f64,
}

impl Bump {
    fn ratio(&self, r: f64) -> Option<f64> {
        let a = (self.radius - r) / (0.5 * self.radius);
        if a >= 1.0 || a <= 0.0 {
            None
        } else {
            Some(a)
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= 0.5 * self.radius {
            return 1.0;
        }
        if r >= self.radius {
            return 0.0;
        }
        let a = self.ratio(r).unwrap();
        1.0 / (1.0 + (1.0 / a - 1.0 / (1.0 - a)).exp())
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self.ratio(r) {
            None => 0.0,
            Some(a) => {
                let s = 1.0 / (1.0 + (1.0 / a - 1.0 / (1.0 - a)).exp());
                let ds = s * (1.0 - s) * (1.0 / (a * a) + 1.0 / ((1.0 - a) * (1.0 - a)));
                -2.0 * ds / self.radius
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center_chart: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Number of leading grid nodes entering the discrete radius (all when `None`).
    pub nodes: Option<usize>,
    /// Fail on argmax ties instead of taking the smallest index.
    pub strict_ties: bool,
}

impl Cutoff {
    pub fn new(center: &Point, radius: f64) -> Self {
        Self { center_chart: center.chart, center: center.u.as_slice().to_vec(), radius, nodes: None, strict_ties: false }
    }

    pub fn center(&self) -> Point {
        Point::new(self.center_chart, Vector::from_slice(&self.center))
    }

    pub fn bump(&self) -> Bump {
        Bump { radius: self.radius }
    }
}

/// `max_{k < m} d(X_{s_k}, x)` with its (smallest) argmax and, when another
/// node attains the maximum within `1e−12`, the second index.
pub fn discrete_radius(model: &ManifoldModel, path: &PathSample, center: &Point, nodes: Option<usize>) -> (f64, usize, Option<usize>) {
    let m = nodes.unwrap_or(path.states.len()).min(path.states.len()).max(1);
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    let dists: Vec<f64> = (0..m).map(|k| model.distance(&path.point(k), center)).collect();
    for (k, &d) in dists.iter().enumerate() {
        if d > best {
            best = d;
            arg = k;
        }
    }
    let tie = dists.iter().enumerate().find(|&(k, &d)| k != arg && (best - d).abs() <= 1e-12).map(|(k, _)| k);
    (best, arg, tie)
}

// -------------------------------------------------------------------------
// cylindrical functionals

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    /// Index into the functional's time list.
    pub slot: usize,
    pub f: PointFunction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

/// `F(γ) = Σ_terms coeff · Π f(γ_{t_slot})`, optionally multiplied by a cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylindricalFunctional {
    pub name: String,
    pub times: Vec<f64>,
    pub terms: Vec<Term>,
    pub cutoff: Option<Cutoff>,
}

/// A path-wise contribution `U_{s_index}^{-1} ∇F` in frame components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summand {
    pub index: usize,
    pub v: Vector,
}

/// Value of a functional on one path and its gradient summands.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub summands: Vec<Summand>,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Malliavin,
    Modified,
    Damped,
}

/// Piecewise-constant density: `values[k]` holds on `[s_k, s_{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientDensity {
    pub kind: DensityKind,
    /// First step where the density is defined (the anchor `t` for modified densities).
    pub start: usize,
    pub values: Vec<Vector>,
}

impl GradientDensity {
    /// Cameron–Martin pairing `∫ ⟨Ḋ_s, h'_s⟩ ds` against a step-wise `h'`.
    pub fn pair(&self, h_dot: &[Vector], dt: f64) -> f64 {
        self.values.iter().zip(h_dot).skip(self.start).map(|(a, b)| a.dot(b) * dt).sum()
    }
}

impl CylindricalFunctional {
    pub fn single(name: &str, time: f64, f: PointFunction) -> Self {
        Self { name: name.into(), times: vec![time], terms: vec![Term { coeff: 1.0, factors: vec![Factor { slot: 0, f }] }], cutoff: None }
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= c;
        }
        out
    }

    /// The point function `f` when `F = f(γ_T)` with no cutoff.
    pub fn endpoint_function(&self) -> Option<PointFunction> {
        if self.cutoff.is_some() || self.times.len() != 1 || self.terms.len() != 1 || self.terms[0].factors.len() != 1 {
            return None;
        }
        Some(self.terms[0].factors[0].f.scaled(self.terms[0].coeff))
    }

    pub fn validate(&self, model: &ManifoldModel) -> Result<()> {
        if self.times.is_empty() || self.times.windows(2).any(|w| !(w[0] < w[1])) || self.times[0] < 0.0 {
            return Err(Error::InvalidArgument("functional times must be increasing and nonnegative".into()));
        }
        for t in &self.terms {
            for fac in &t.factors {
                if fac.slot >= self.times.len() {
                    return Err(Error::InvalidArgument("factor refers to a missing time".into()));
                }
                fac.f.check(model)?;
            }
        }
        if let Some(c) = &self.cutoff {
            if !(c.radius > 0.0) {
                return Err(Error::InvalidArgument("cutoff radius must be positive".into()));
            }
            if let Preset::Sphere { radius } = model.preset {
                if c.radius >= std::f64::consts::FRAC_PI_2 * radius {
                    return Err(Error::InvalidArgument("cutoff radius must stay below π r / 2 on the sphere".into()));
                }
            }
            model.check_in_chart(&c.center())?;
        }
        Ok(())
    }

    /// Grid indices of the functional's times on `path`.
    pub fn slots_on_grid(&self, path: &PathSample) -> Result<Vec<usize>> {
        self.times.iter().map(|&t| path.index_of(t)).collect()
    }

    /// `f(x_1, …, x_N)` without the cutoff.
    pub fn raw_value(&self, model: &ManifoldModel, points: &[Point]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.factors.iter().map(|fac| fac.f.value(model, &points[fac.slot])).product::<f64>())
            .sum()
    }

    /// Differentials `∂_i f` (chart covectors) for each time slot.
    pub fn raw_differentials(&self, model: &ManifoldModel, points: &[Point]) -> Vec<Vector> {
        let mut out = vec![Vector::zeros(model.dim); self.times.len()];
        for t in &self.terms {
            let values: Vec<f64> = t.factors.iter().map(|fac| fac.f.value(model, &points[fac.slot])).collect();
            for (i, fac) in t.factors.iter().enumerate() {
                let others: f64 = values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).product();
                out[fac.slot] += fac.f.differential(model, &points[fac.slot]).scale(t.coeff * others);
            }
        }
        out
    }

    pub fn evaluate(&self, model: &ManifoldModel, path: &PathSample) -> Result<f64> {
        let slots = self.slots_on_grid(path)?;
        let points: Vec<Point> = slots.iter().map(|&k| path.point(k)).collect();
        let raw = self.raw_value(model, &points);
        Ok(match &self.cutoff {
            None => raw,
            Some(c) => {
                let (rho, _, _) = discrete_radius(model, path, &c.center(), c.nodes);
                raw * c.bump().value(rho)
            }
        })
    }

    /// Value and gradient summands on one path.
    pub fn summands(&self, model: &ManifoldModel, path: &PathSample) -> Result<Evaluation> {
        let slots = self.slots_on_grid(path)?;
        let points: Vec<Point> = slots.iter().map(|&k| path.point(k)).collect();
        let raw = self.raw_value(model, &points);
        let diffs = self.raw_differentials(model, &points);
        let (weight, extra) = match &self.cutoff {
            None => (1.0, None),
            Some(c) => {
                let center = c.center();
                let (rho, arg, tie) = discrete_radius(model, path, &center, c.nodes);
                let bump = c.bump();
                let dl = bump.derivative(rho);
                let extra = if dl != 0.0 {
                    if let (true, Some(second)) = (c.strict_ties, tie) {
                        return Err(Error::NonDifferentiableRadius { first: arg, second });
                    }
                    let dd = model.distance_differential(&path.point(arg), &center);
                    Some(Summand { index: arg, v: path.states[arg].frame_components(&dd).scale(raw * dl) })
                } else {
                    None
                };
                (bump.value(rho), extra)
            }
        };
        let mut summands: Vec<Summand> = slots
            .iter()
            .zip(&diffs)
            .map(|(&k, d)| Summand { index: k, v: path.states[k].frame_components(d).scale(weight) })
            .collect();
        summands.extend(extra);
        Ok(Evaluation { value: raw * weight, summands, steps: path.n_steps() })
    }
}

impl Evaluation {
    /// `Ḋ_s F = Σ_{s_i > s} U_{s_i}^{-1} ∇_i F`
    pub fn malliavin_density(&self) -> GradientDensity {
        let mut values = vec![Vector::zeros(self.dim()); self.steps];
        for sm in &self.summands {
            for v in values.iter_mut().take(sm.index) {
                *v += sm.v;
            }
        }
        GradientDensity { kind: DensityKind::Malliavin, start: 0, values }
    }

    /// `Ḋ^{K1,K2}_{t,s} F = Σ_{s_i > s} A_{t,s_i} U_{s_i}^{-1} ∇_i F` for `s ≥ t`.
    pub fn modified_density(&self, trace: &CurvatureTrace, t: usize) -> GradientDensity {
        let mut values = vec![Vector::zeros(self.dim()); self.steps];
        for sm in &self.summands {
            if sm.index <= t {
                continue;
            }
            let w = sm.v.scale(trace.damping(t, sm.index));
            for v in values.iter_mut().take(sm.index).skip(t) {
                *v += w;
            }
        }
        GradientDensity { kind: DensityKind::Modified, start: t, values }
    }

    /// `D̃_t F = Σ_{s_i > t} Q_{t,s_i} U_{s_i}^{-1} ∇_i F`
    pub fn damped_gradient(&self, trace: &CurvatureTrace, t: usize) -> Vector {
        let q = resolvent_q(trace, t);
        let mut out = Vector::zeros(self.dim());
        for sm in self.summands.iter().filter(|sm| sm.index > t) {
            out += q[sm.index - t].mat_vec(&sm.v);
        }
        out
    }

    /// `Σ_i Q_{0,s_i} U_{s_i}^{-1} ∇_i F`, the path-wise integrand of the
    /// gradient of `x ↦ E F(X^x)` in `U_0` frame components.
    pub fn bismut_vector(&self, q0: &[Matrix]) -> Vector {
        let mut out = Vector::zeros(self.dim());
        for sm in &self.summands {
            out += q0[sm.index].mat_vec(&sm.v);
        }
        out
    }

    fn dim(&self) -> usize {
        self.summands.first().map(|s| s.v.dim()).unwrap_or(0).max(1)
    }

    /// Energy-form integrand at every anchor `j = 0..=m`:
    /// `(1 + μ([s_j,T])) (|Ḋ_{j,j}|² + Σ_{k ≥ j} |Ḋ_{j,k}|² μ_j(step k))`.
    ///
    /// With `S_k = Σ_{i > k} e^{−E₊(i)} v_i` one has `Ḋ_{j,k} = e^{E₊(j)} S_k`,
    /// and the measure weights factor as `e^{−E₋(j)} ω_k` (restart) or `ω_k`
    /// (global), so all anchors cost `O(m)` together.
    pub fn energy_samples(&self, trace: &CurvatureTrace, convention: MuConvention) -> Vec<f64> {
        let m = self.steps;
        let n = self.dim();
        let e_plus = &trace.mean_integral;
        let e_minus = &trace.half_gap_integral;
        // suffix sums S_k over summands with index > k
        let mut add = vec![Vector::zeros(n); m + 1];
        for sm in &self.summands {
            add[sm.index] += sm.v.scale((-e_plus[sm.index]).exp());
        }
        let mut s = vec![Vector::zeros(n); m + 1];
        for k in (0..m).rev() {
            s[k] = s[k + 1] + add[k + 1];
        }
        let omega: Vec<f64> = (0..m).map(|k| e_minus[k + 1].exp() - e_minus[k].exp()).collect();
        let mut c = vec![0.0; m + 1];
        for k in (0..m).rev() {
            c[k] = c[k + 1] + s[k].norm_sq() * omega[k];
        }
        (0..=m)
            .map(|j| {
                let lead = (2.0 * e_plus[j]).exp() * s[j].norm_sq();
                let (mass, integral) = match convention {
                    MuConvention::Restart => ((e_minus[m] - e_minus[j]).exp() - 1.0, (2.0 * e_plus[j] - e_minus[j]).exp() * c[j]),
                    MuConvention::Global => (e_minus[m].exp() - e_minus[j].exp(), (2.0 * e_plus[j]).exp() * c[j]),
                };
                (1.0 + mass) * (lead + integral)
            })
            .collect()
    }

    /// Energy-form integrand at anchor `t` by direct summation.
    pub fn energy_sample(&self, trace: &CurvatureTrace, t: usize, convention: MuConvention) -> Result<f64> {
        let mu = crate::transport::mu_measure(trace, t, convention)?;
        let dens = self.modified_density(trace, t);
        let at_t = if t < self.steps { dens.values[t].norm_sq() } else { 0.0 };
        let integral: f64 = mu.weights.iter().enumerate().map(|(j, w)| dens.values[t + j].norm_sq() * w).sum();
        Ok((1.0 + mu.total) * (at_t + integral))
    }
}

// -------------------------------------------------------------------------
// battery

/// Names accepted by [`battery`].
pub const BATTERY: &[&str] = &["coordinate", "eigenfunction", "gaussian_bump", "sine", "two_time", "early_minus_half"];

/// Ambient or chart coordinate used by the `coordinate` battery entry.
pub fn coordinate_function(model: &ManifoldModel) -> PointFunction {
    match model.preset {
        Preset::Hyperbolic { .. } => PointFunction::Chart { index: 0, scale: 1.0 },
        _ => PointFunction::Ambient { index: 0, scale: 1.0, offset: 0.0 },
    }
}

/// Gaussian bump centred near (not at) `x`.
pub fn gaussian_function(model: &ManifoldModel, x: &Point, width: f64) -> PointFunction {
    let y = model.embed(x);
    let na = model.ambient_dim();
    let shift = 0.4 / (na as f64).sqrt();
    let center = (0..na).map(|i| y[i] + shift * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    PointFunction::Gaussian { center, width, scale: 1.0 }
}

/// Build a named functional of the battery for paths started at `x`.
///
/// * `coordinate`, `eigenfunction`, `gaussian_bump`, `sine`: `f(γ_T)`; the
///   eigenfunction takes an optional additive offset, the bump its width
/// * `two_time`: `(1 + e(γ_{t_1}))(1 + e(γ_{t_2}))` with `e` the eigenfunction
/// * `early_minus_half`: `e(γ_ε) − ½ e(γ_T)`
///
/// `times` overrides the default times (`[T]`, `[T/2, T]`, `[T/10, T]`).
pub fn battery(name: &str, model: &ManifoldModel, x: &Point, horizon: f64, times: Option<&[f64]>, params: &[f64]) -> Result<CylindricalFunctional> {
    let single_time = |default: f64| -> Result<f64> {
        match times {
            None => Ok(default),
            Some([t]) => Ok(*t),
            Some(_) => Err(Error::InvalidArgument(format!("`{name}` takes one time"))),
        }
    };
    let two_times = |a: f64, b: f64| -> Result<Vec<f64>> {
        match times {
            None => Ok(vec![a, b]),
            Some([s, t]) => Ok(vec![*s, *t]),
            Some(_) => Err(Error::InvalidArgument(format!("`{name}` takes two times"))),
        }
    };
    let e = PointFunction::eigen(model);
    let f = match name {
        "coordinate" => CylindricalFunctional::single(name, single_time(horizon)?, coordinate_function(model)),
        "eigenfunction" => {
            let f = match (&e, params.first()) {
                (PointFunction::Ambient { index, scale, .. }, Some(&offset)) => PointFunction::Ambient { index: *index, scale: *scale, offset },
                _ => e.clone(),
            };
            CylindricalFunctional::single(name, single_time(horizon)?, f)
        }
        "gaussian_bump" => {
            let width = params.first().copied().unwrap_or(0.7);
            CylindricalFunctional::single(name, single_time(horizon)?, gaussian_function(model, x, width))
        }
        "sine" => CylindricalFunctional::single(name, single_time(horizon)?, PointFunction::Sine { index: 0, scale: 1.0 }),
        "two_time" => {
            let ts = two_times(0.5 * horizon, horizon)?;
            let shifted = match e {
                PointFunction::Ambient { index, scale, .. } => PointFunction::Ambient { index, scale, offset: 1.0 },
                other => other,
            };
            CylindricalFunctional {
                name: name.into(),
                times: ts,
                terms: vec![Term { coeff: 1.0, factors: vec![Factor { slot: 0, f: shifted.clone() }, Factor { slot: 1, f: shifted }] }],
                cutoff: None,
            }
        }
        "early_minus_half" => {
            let ts = two_times(0.1 * horizon, horizon)?;
            CylindricalFunctional {
                name: name.into(),
                times: ts,
                terms: vec![
                    Term { coeff: 1.0, factors: vec![Factor { slot: 0, f: e.clone() }] },
                    Term { coeff: -0.5, factors: vec![Factor { slot: 1, f: e }] },
                ],
                cutoff: None,
            }
        }
        other => return Err(Error::InvalidArgument(format!("unknown functional `{other}` (known: {})", BATTERY.join(", ")))),
    };
    f.validate(model)?;
    Ok(f)
}
