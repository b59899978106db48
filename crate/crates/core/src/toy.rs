//! The two-dimensional toy model
//!
//! ```text
//! ρ' = 3/2 · (1 − ρ²)/r · ( −1 + √(1 − ρ²)(β r² g(r²) + ρ)/r ),
//! r' = ρ,
//! ```
//!
//! its desingularized form in `(η, w) = (√(1 − ρ²)/r, r²)`, and the
//! construction of tip solutions along the unstable manifold of the
//! equilibrium `q₀ = (1/3, 0)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{
    integrate, Direction, EventSpec, IntegrateError, IntegratorConfig, Quadrature, Termination,
    Trajectory,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToyError {
    #[error("state ({0}, {1}) lies outside the phase space")]
    OutOfPhaseSpace(f64, f64),
    #[error("seed point ({eta}, {w}) is not in N₀")]
    SeedEscapedPhaseSpace { eta: f64, w: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("r = {r} lies outside the monotone span [{lo}, {hi}]")]
    OutOfSpan { r: f64, lo: f64, hi: f64 },
    #[error("tip leg ended before reaching the coordinate switch")]
    TipLegIncomplete,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// The function `g` in the toy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GFunction {
    Constant {
        value: f64,
    },
    /// `g(v) = Σ cₖ vᵏ`
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// `g(v) = a·exp(b v)`
    Exponential {
        a: f64,
        b: f64,
    },
}

impl GFunction {
    pub fn one() -> Self {
        GFunction::Constant { value: 1.0 }
    }

    /// `g(v) = 1 + v`
    pub fn one_plus_v() -> Self {
        GFunction::Polynomial {
            coefficients: vec![1.0, 1.0],
        }
    }

    pub fn g(&self, v: f64) -> f64 {
        match self {
            GFunction::Constant { value } => *value,
            GFunction::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * v + c)
            }
            GFunction::Exponential { a, b } => a * (b * v).exp(),
        }
    }

    pub fn dg(&self, v: f64) -> f64 {
        match self {
            GFunction::Constant { .. } => 0.0,
            GFunction::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * v + k as f64 * c),
            GFunction::Exponential { a, b } => a * b * (b * v).exp(),
        }
    }

    pub fn d2g(&self, v: f64) -> f64 {
        match self {
            GFunction::Constant { .. } => 0.0,
            GFunction::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * v + (k * (k - 1)) as f64 * c),
            GFunction::Exponential { a, b } => a * b * b * (b * v).exp(),
        }
    }

    /// `v² g(v²)`
    pub fn profile(&self, v: f64) -> f64 {
        v * v * self.g(v * v)
    }

    /// `d/dv [v² g(v²)] = 2v g + 2v³ g'`
    pub fn profile_d1(&self, v: f64) -> f64 {
        let u = v * v;
        2.0 * v * self.g(u) + 2.0 * v * u * self.dg(u)
    }

    /// `d²/dv² [v² g(v²)] = 2g + 10v² g' + 4v⁴ g''`
    pub fn profile_d2(&self, v: f64) -> f64 {
        let u = v * v;
        2.0 * self.g(u) + 10.0 * u * self.dg(u) + 4.0 * u * u * self.d2g(u)
    }
}

/// Outcome of checking the admissibility conditions on `g` over a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCheckReport {
    pub positive: bool,
    pub nondecreasing: bool,
    pub convex_profile: bool,
    pub divergent: bool,
    pub failures: Vec<String>,
}

impl GCheckReport {
    pub fn passed(&self) -> bool {
        self.positive && self.nondecreasing && self.convex_profile && self.divergent
    }
}

pub const G_DIVERGENCE_THRESHOLD: f64 = 1e3;

/// 200 log-spaced points on `[1e-3, 1e6]`.
pub fn default_g_grid() -> Vec<f64> {
    log_grid(1e-3, 1e6, 200)
}

pub(crate) fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn g_check(g: &GFunction, grid: &[f64]) -> GCheckReport {
    let mut failures = Vec::new();
    if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0)) {
        failures.push("grid must be nonempty with positive points".to_string());
        return GCheckReport {
            positive: false,
            nondecreasing: false,
            convex_profile: false,
            divergent: false,
            failures,
        };
    }
    let first_bad = |pred: &dyn Fn(f64) -> bool| grid.iter().copied().find(|v| !pred(*v));

    let positive = match first_bad(&|v| g.g(v) > 0.0) {
        None => true,
        Some(v) => {
            failures.push(format!("g({v:e}) = {:e} is not positive", g.g(v)));
            false
        }
    };
    let nondecreasing = match first_bad(&|v| g.dg(v) >= 0.0) {
        None => true,
        Some(v) => {
            failures.push(format!("g'({v:e}) = {:e} is negative", g.dg(v)));
            false
        }
    };
    let convex_profile = match first_bad(&|v| g.profile_d2(v) > 0.0) {
        None => true,
        Some(v) => {
            failures.push(format!(
                "second derivative of v²g(v²) at {v:e} is {:e}",
                g.profile_d2(v)
            ));
            false
        }
    };
    let vals: Vec<f64> = grid.iter().map(|&v| v * g.g(v * v)).collect();
    let increasing = vals.windows(2).all(|p| p[1] >= p[0]);
    let end = vals[vals.len() - 1];
    let divergent = increasing && end > G_DIVERGENCE_THRESHOLD;
    if !divergent {
        failures.push(format!(
            "v·g(v²) is not increasing past {G_DIVERGENCE_THRESHOLD:e} on the grid (end value {end:e})"
        ));
    }
    GCheckReport {
        positive,
        nondecreasing,
        convex_profile,
        divergent,
        failures,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyState {
    pub rho: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaWState {
    pub eta: f64,
    pub w: f64,
}

pub(crate) fn toy_field(rho: f64, r: f64, beta: f64, g: &GFunction) -> [f64; 2] {
    let c2 = 1.0 - rho * rho;
    if !(c2 > 0.0 && r > 0.0) {
        return [f64::NAN, f64::NAN];
    }
    let c = c2.sqrt();
    let drho = 1.5 * c2 / r * (-1.0 + c * (beta * r * r * g.g(r * r) + rho) / r);
    [drho, rho]
}

// Body-leg field in the angle chart ρ = cos θ, θ ∈ (0, π).
pub(crate) fn toy_angle_field(theta: f64, r: f64, beta: f64, g: &GFunction) -> [f64; 2] {
    if !(theta > 0.0 && theta < std::f64::consts::PI && r > 0.0) {
        return [f64::NAN, f64::NAN];
    }
    let (sn, cs) = theta.sin_cos();
    let dtheta = -1.5 * sn / r * (-1.0 + sn * (beta * r * r * g.g(r * r) + cs) / r);
    [dtheta, cs]
}

pub(crate) fn etaw_field(eta: f64, w: f64, beta: f64, g: &GFunction) -> [f64; 2] {
    let c2 = 1.0 - eta * eta * w;
    if !(c2 > 0.0 && eta > 0.0) {
        return [f64::NAN, f64::NAN];
    }
    let deta = 0.5 * eta * (1.0 - 3.0 * eta * c2.sqrt()) - 1.5 * beta * eta * eta * w * g.g(w);
    [deta, 2.0 * w]
}

/// `(dρ/ds, dr/ds)`
pub fn toy_rhs(state: ToyState, beta: f64, g: &GFunction) -> Result<[f64; 2], ToyError> {
    let ToyState { rho, r } = state;
    if !(rho > -1.0 && rho < 1.0 && r > 0.0) {
        return Err(ToyError::OutOfPhaseSpace(rho, r));
    }
    Ok(toy_field(rho, r, beta, g))
}

/// `(dη/dt, dw/dt)`
pub fn etaw_rhs(state: EtaWState, beta: f64, g: &GFunction) -> Result<[f64; 2], ToyError> {
    let EtaWState { eta, w } = state;
    if !(eta > 0.0 && eta * eta * w < 1.0) {
        return Err(ToyError::OutOfPhaseSpace(eta, w));
    }
    Ok(etaw_field(eta, w, beta, g))
}

pub fn phi(state: ToyState) -> Result<EtaWState, ToyError> {
    let ToyState { rho, r } = state;
    if !(rho > 0.0 && rho < 1.0 && r > 0.0) {
        return Err(ToyError::OutOfPhaseSpace(rho, r));
    }
    Ok(EtaWState {
        eta: (1.0 - rho * rho).sqrt() / r,
        w: r * r,
    })
}

pub fn phi_inv(state: EtaWState) -> Result<ToyState, ToyError> {
    let EtaWState { eta, w } = state;
    if !(eta > 0.0 && w > 0.0 && eta * eta * w < 1.0) {
        return Err(ToyError::OutOfPhaseSpace(eta, w));
    }
    Ok(ToyState {
        rho: (1.0 - eta * eta * w).sqrt(),
        r: w.sqrt(),
    })
}

pub const Q0: EtaWState = EtaWState {
    eta: 1.0 / 3.0,
    w: 0.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumAnalysis {
    pub lambda_stable: f64,
    pub lambda_unstable: f64,
    /// Unit vector spanning the unstable subspace, with positive `w` component.
    pub unstable_direction: [f64; 2],
    /// Central-difference Jacobian of the `(η, w)` field at `q₀`, row major.
    pub fd_jacobian: [[f64; 2]; 2],
    pub fd_eigenvalues: [f64; 2],
    pub fd_unstable_direction: [f64; 2],
}

pub fn equilibrium_analysis(beta: f64, g: &GFunction) -> EquilibriumAnalysis {
    let v = [1.0 / 18.0 - beta * g.g(0.0), 15.0];
    let n = v[0].hypot(v[1]);
    let dir = [v[0] / n, v[1] / n];

    let h = 1e-6;
    let f = |eta: f64, w: f64| etaw_field(eta, w, beta, g);
    let (a, b) = (f(Q0.eta + h, Q0.w), f(Q0.eta - h, Q0.w));
    let (c, d) = (f(Q0.eta, Q0.w + h), f(Q0.eta, Q0.w - h));
    let jac = [
        [(a[0] - b[0]) / (2.0 * h), (c[0] - d[0]) / (2.0 * h)],
        [(a[1] - b[1]) / (2.0 * h), (c[1] - d[1]) / (2.0 * h)],
    ];
    let (eig, vec_u) = eigen2(&jac);

    EquilibriumAnalysis {
        lambda_stable: -0.5,
        lambda_unstable: 2.0,
        unstable_direction: dir,
        fd_jacobian: jac,
        fd_eigenvalues: eig,
        fd_unstable_direction: vec_u,
    }
}

// Real eigenvalues (ascending) of a 2×2 matrix and the unit eigenvector of
// the larger one, oriented with non-negative second component.
fn eigen2(m: &[[f64; 2]; 2]) -> ([f64; 2], [f64; 2]) {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (l1, l2) = (0.5 * tr - disc, 0.5 * tr + disc);
    let cand_a = [m[0][1], l2 - m[0][0]];
    let cand_b = [l2 - m[1][1], m[1][0]];
    let na = cand_a[0].hypot(cand_a[1]);
    let nb = cand_b[0].hypot(cand_b[1]);
    let (v, n) = if na >= nb { (cand_a, na) } else { (cand_b, nb) };
    let s = if v[1] < 0.0 { -1.0 } else { 1.0 };
    ([l1, l2], [s * v[0] / n, s * v[1] / n])
}

/// Seed data for shooting along the unstable manifold of `q₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipSeed {
    pub beta: f64,
    pub delta: f64,
    /// Integration moves from the `(η, w)` chart to the `(ρ, r)` chart once `ρ ≤ rho_switch`.
    pub rho_switch: f64,
    pub lambda_stable: f64,
    pub lambda_unstable: f64,
    pub direction: [f64; 2],
}

pub const DEFAULT_DELTA: f64 = 1e-8;
pub const DEFAULT_RHO_SWITCH: f64 = 0.99999;

impl TipSeed {
    pub fn new(beta: f64, g: &GFunction) -> Self {
        Self::with(beta, g, DEFAULT_DELTA, DEFAULT_RHO_SWITCH)
    }

    pub fn with(beta: f64, g: &GFunction, delta: f64, rho_switch: f64) -> Self {
        let eq = equilibrium_analysis(beta, g);
        Self {
            beta,
            delta,
            rho_switch,
            lambda_stable: eq.lambda_stable,
            lambda_unstable: eq.lambda_unstable,
            direction: eq.unstable_direction,
        }
    }

    pub fn start(&self) -> EtaWState {
        EtaWState {
            eta: Q0.eta + self.delta * self.direction[0],
            w: Q0.w + self.delta * self.direction[1],
        }
    }
}

type ToyEventFn<'a> = dyn Fn(f64, ToyState, [f64; 2]) -> f64 + 'a;

/// A scalar event `g(s, (ρ, r), (ρ', r'))` on the body leg.
pub struct ToyEvent<'a> {
    pub name: String,
    pub direction: Direction,
    pub terminal: bool,
    func: Box<ToyEventFn<'a>>,
}

impl<'a> ToyEvent<'a> {
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        terminal: bool,
        func: impl Fn(f64, ToyState, [f64; 2]) -> f64 + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            direction,
            terminal,
            func: Box::new(func),
        }
    }

    fn into_angle_chart(self) -> EventSpec<'a> {
        let f = self.func;
        EventSpec::new(self.name, self.direction, self.terminal, move |s, y, dy| {
            let (sn, cs) = y[0].sin_cos();
            f(s, ToyState { rho: cs, r: y[1] }, [-sn * dy[0], dy[1]])
        })
    }
}

/// Integration of the `(ρ, r)` leg: arclength bound and caller-supplied events.
pub struct BodyLeg<'a> {
    pub s_max: f64,
    pub events: Vec<ToyEvent<'a>>,
}

impl BodyLeg<'_> {
    pub fn until(s_max: f64) -> Self {
        Self {
            s_max,
            events: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipLegEnd {
    /// Reached `ρ = rho_switch`.
    Switched,
    /// `ρ'` vanished before the switch.
    SlopeExtremum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub t: f64,
    pub eta: f64,
    pub w: f64,
    pub rho: f64,
    pub r: f64,
}

/// A toy tip solution assembled from an `(η, w; t)` leg and a body leg in `s`.
///
/// Arclength is measured from the end of the first leg. The first leg carries
/// `σ(t) = ∫ ds/dt dt` as a quadrature channel. The body leg stores `(θ, r)`
/// with `ρ = cos θ`, which keeps `1 − ρ²` accurate close to the tip, and
/// carries `τ(s) = t_switch + ∫ ρ/r ds`.
#[derive(Debug, Clone)]
pub struct TipSolution {
    pub beta: f64,
    pub seed: TipSeed,
    pub tip_leg: Trajectory,
    pub tip_leg_end: TipLegEnd,
    pub switch: SwitchPoint,
    pub body: Option<Trajectory>,
    g: GFunction,
}

impl TipSolution {
    pub fn g(&self) -> &GFunction {
        &self.g
    }

    fn sigma_end(&self) -> f64 {
        self.tip_leg.quads(self.tip_leg.len() - 1)[0]
    }

    /// Arclength of a `t`-chart sample relative to the origin.
    pub fn s_of_t(&self, t: f64) -> Result<f64, ToyError> {
        Ok(self.tip_leg.dense_quads(t)?[0] - self.sigma_end())
    }

    /// Approximate arclength of the exact tip (negative).
    pub fn tip_s(&self) -> f64 {
        -(self.sigma_end() + self.tip_leg.state(0)[1].sqrt())
    }

    /// Largest `s` covered by the solution.
    pub fn s_end(&self) -> f64 {
        self.body.as_ref().map_or(0.0, |b| b.span().1)
    }

    pub fn s_start(&self) -> f64 {
        -self.sigma_end()
    }

    /// `(ρ, r, z', dρ/ds)` at arclength `s`, with `z' = √(1 − ρ²)` computed without cancellation.
    pub fn point_at_s(&self, s: f64) -> Result<[f64; 4], ToyError> {
        if s > 0.0 {
            let body = self.body.as_ref().ok_or(ToyError::OutOfSpan {
                r: s,
                lo: self.s_start(),
                hi: 0.0,
            })?;
            let y = body.dense_eval(s)?;
            return Ok(self.angle_point(y[0], y[1]));
        }
        let t = self.t_of_s(s)?;
        let y = self.tip_leg.dense_eval(t)?;
        Ok(self.etaw_point(y[0], y[1]))
    }

    fn angle_point(&self, theta: f64, r: f64) -> [f64; 4] {
        let d = toy_angle_field(theta, r, self.beta, &self.g);
        let (sn, cs) = theta.sin_cos();
        [cs, r, sn, -sn * d[0]]
    }

    /// `(ρ, r)` at body-leg sample `i`.
    pub fn body_state(&self, i: usize) -> Option<ToyState> {
        let y = self.body.as_ref()?.state(i);
        Some(ToyState {
            rho: y[0].cos(),
            r: y[1],
        })
    }

    fn etaw_point(&self, eta: f64, w: f64) -> [f64; 4] {
        let d = etaw_field(eta, w, self.beta, &self.g);
        let r = w.sqrt();
        [
            (1.0 - eta * eta * w).sqrt(),
            r,
            eta * r,
            -eta * r * (d[0] + eta),
        ]
    }

    fn t_of_s(&self, s: f64) -> Result<f64, ToyError> {
        let target = s + self.sigma_end();
        let (mut a, mut b) = self.tip_leg.span();
        let sa = self.tip_leg.quads(0)[0];
        if target < sa || target > self.sigma_end() {
            return Err(ToyError::OutOfSpan {
                r: s,
                lo: self.s_start(),
                hi: 0.0,
            });
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.tip_leg.dense_quads(m)?[0] < target {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `(s, ρ, r, z', dρ/ds)` at every stored sample of both legs.
    pub fn samples(&self) -> Vec<[f64; 5]> {
        let sig = self.sigma_end();
        let mut out: Vec<[f64; 5]> = (0..self.tip_leg.len())
            .map(|i| {
                let y = self.tip_leg.state(i);
                let p = self.etaw_point(y[0], y[1]);
                [self.tip_leg.quads(i)[0] - sig, p[0], p[1], p[2], p[3]]
            })
            .collect();
        if let Some(body) = &self.body {
            for i in 1..body.len() {
                let y = body.state(i);
                let p = self.angle_point(y[0], y[1]);
                out.push([body.x(i), p[0], p[1], p[2], p[3]]);
            }
        }
        out
    }

    /// Radius range on which `r ↦ ρ` is defined: from the seed to the last
    /// sample before `ρ` first becomes non-positive.
    pub fn r_span(&self) -> (f64, f64) {
        let lo = self.tip_leg.state(0)[1].sqrt();
        let mut hi = self.switch.r;
        if let Some(body) = &self.body {
            for i in 0..body.len() {
                let y = body.state(i);
                if y[0].cos() <= 0.0 {
                    break;
                }
                hi = y[1];
            }
        }
        (lo, hi)
    }

    /// `ϱ(r)`: slope as a function of radius on the monotone part of the solution.
    pub fn rho_at_r(&self, r: f64) -> Result<f64, ToyError> {
        let (lo, hi) = self.r_span();
        if !(r >= lo && r <= hi) {
            return Err(ToyError::OutOfSpan { r, lo, hi });
        }
        if r <= self.switch.r {
            // w grows as e^{2t} exactly, which inverts in closed form.
            let (t0, _) = self.tip_leg.span();
            let w0 = self.tip_leg.state(0)[1];
            let (ta, tb) = self.tip_leg.span();
            let t = (t0 + 0.5 * (r * r / w0).ln()).clamp(ta, tb);
            let eta = self.tip_leg.dense_eval(t)?[0];
            return Ok((1.0 - eta * eta * r * r).sqrt());
        }
        let body = self
            .body
            .as_ref()
            .expect("r beyond switch implies a body leg");
        let mut idx = 1;
        while idx < body.len() && body.state(idx)[1] < r {
            idx += 1;
        }
        let idx = idx.min(body.len() - 1);
        let (mut a, mut b) = (body.x(idx - 1), body.x(idx));
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if body.dense_eval(m)?[1] < r {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(body.dense_eval(0.5 * (a + b))?[0].cos())
    }
}

/// Event `ρ = 0` crossed from above.
pub fn event_rho_zero<'a>(terminal: bool) -> ToyEvent<'a> {
    ToyEvent::new("rho_zero", Direction::Falling, terminal, |_s, y, _dy| y.rho)
}

/// Event `ρ' = 0` crossed from below.
pub fn event_slope_min<'a>(terminal: bool) -> ToyEvent<'a> {
    ToyEvent::new("slope_min", Direction::Rising, terminal, |_s, _y, dy| dy[0])
}

/// Builds a tip solution for `seed.beta` and continues it in the `(ρ, r)` chart.
///
/// The first leg starts at `q₀ + δ·v` on the unstable subspace and runs in
/// `t` until `ρ ≤ rho_switch`, or until `ρ'` vanishes (then no body leg is built).
pub fn construct_tip_solution(
    seed: &TipSeed,
    g: &GFunction,
    cfg: &IntegratorConfig,
    body: BodyLeg<'_>,
) -> Result<TipSolution, ToyError> {
    if !(seed.delta > 0.0) {
        return Err(ToyError::InvalidParameter("delta must be positive".into()));
    }
    if !(seed.rho_switch > 0.0 && seed.rho_switch < 1.0) {
        return Err(ToyError::InvalidParameter(
            "rho_switch must lie in (0, 1)".into(),
        ));
    }
    if !(seed.beta >= 0.0) {
        return Err(ToyError::InvalidParameter(
            "beta must be non-negative".into(),
        ));
    }
    let start = seed.start();
    if !(start.eta > 0.0 && start.w > 0.0 && start.eta * start.eta * start.w < 1.0) {
        return Err(ToyError::SeedEscapedPhaseSpace {
            eta: start.eta,
            w: start.w,
        });
    }
    let beta = seed.beta;

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let d = etaw_field(y[0], y[1], beta, g);
        dy[0] = d[0];
        dy[1] = d[1];
    };
    let sigma = Quadrature::new(0.0, |_t, y: &[f64]| {
        (y[1] / (1.0 - y[0] * y[0] * y[1])).sqrt()
    });
    let gap = 1.0 - seed.rho_switch * seed.rho_switch;
    let events = [
        EventSpec::new("switch", Direction::Rising, true, move |_t, y, _dy| {
            y[0] * y[0] * y[1] - gap
        }),
        // sign(dρ/ds) = −sign(dη/dt + η)
        EventSpec::new("slope_min", Direction::Rising, true, |_t, y, dy| {
            -(dy[0] + y[0])
        }),
    ];
    let w_cap = (body.s_max * body.s_max).max(1e4);
    let t_end = 0.5 * (w_cap / start.w).ln() + 1.0;
    // w and σ start at O(δ).
    let tip_cfg = IntegratorConfig {
        atol: cfg.atol * start.w,
        ..*cfg
    };
    let tip_leg = integrate(
        &rhs,
        &[start.eta, start.w],
        0.0,
        t_end,
        &events,
        &[sigma],
        &tip_cfg,
    )?;
    let tip_leg_end = match tip_leg.termination() {
        Termination::TerminalEvent { event: 0 } => TipLegEnd::Switched,
        Termination::TerminalEvent { .. } => TipLegEnd::SlopeExtremum,
        Termination::ReachedEnd => return Err(ToyError::TipLegIncomplete),
    };

    let t_sw = tip_leg.span().1;
    let y_sw = tip_leg.last_state();
    let (eta, w) = (y_sw[0], y_sw[1]);
    let switch = SwitchPoint {
        t: t_sw,
        eta,
        w,
        rho: (1.0 - eta * eta * w).sqrt(),
        r: w.sqrt(),
    };

    let body_traj = if tip_leg_end == TipLegEnd::Switched && body.s_max > 0.0 {
        let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
            let d = toy_angle_field(y[0], y[1], beta, g);
            dy[0] = d[0];
            dy[1] = d[1];
        };
        let tau = Quadrature::new(t_sw, |_s, y: &[f64]| y[0].cos() / y[1]);
        let events: Vec<EventSpec<'_>> = body
            .events
            .into_iter()
            .map(ToyEvent::into_angle_chart)
            .collect();
        let theta = (eta * w.sqrt()).atan2(switch.rho);
        Some(integrate(
            &rhs,
            &[theta, switch.r],
            0.0,
            body.s_max,
            &events,
            &[tau],
            cfg,
        )?)
    } else {
        None
    };

    Ok(TipSolution {
        beta,
        seed: *seed,
        tip_leg,
        tip_leg_end,
        switch,
        body: body_traj,
        g: g.clone(),
    })
}
