//! The five-dimensional BATS model in arclength `s`:
//!
//! ```text
//! ρ' = 3/2 · (1 − ρ²)/r · ( −1 + μ(Ψ) Γ ρ √(1 − ρ²) / r³ ),
//! r' = ρ,
//! h' = ( rγ/Γ − ρ/(2r) − r²/(2 μ(Ψ) Γ √(1 − ρ²)) ) h,
//! Ψ' = r h/Γ − rγ Ψ/Γ,
//! z' = √(1 − ρ²),
//! ```
//!
//! with `γ = (r√(1 − ρ²) − zρ)/(z² + r²)^{3/2}` and `Γ = 1 + z/√(r² + z²)`.
//!
//! Trajectories are integrated in the chart `(θ, r, ln h, Ψ, z)` with
//! `ρ = cos θ`. Near the tip `ρ` is within `10⁻⁸` of one, where an absolute
//! error on `ρ` becomes a large relative error on `1 − ρ²`; the angle chart
//! keeps that quantity accurate, and `ln h` keeps `h` positive.

use std::cell::Cell;
use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Classification, ClassifyTolerances, Diagnostics, Tag};
use crate::integrate::{
    integrate, Direction, EventSpec, IntegrateError, Quadrature, Termination, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BatsError {
    #[error("γ and Γ are singular at r = z = 0")]
    OriginSingularity,
    #[error("state lies outside the phase space: {0}")]
    OutOfPhaseSpace(String),
    #[error("Γ vanishes at r = {r}, z = {z}")]
    GammaVanishes { r: f64, z: f64 },
    #[error("tip series invalid at r_init = {r_init}: ρ = {rho} ≤ 0.999")]
    RInitTooLarge { r_init: f64, rho: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

pub const GAMMA_FLOOR: f64 = 1e-300;

/// Viscosity `μ(Ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViscosityFn {
    /// `a + bΨ`
    Affine { a: f64, b: f64 },
    /// `a·exp(kΨ)`
    Exponential { a: f64, k: f64 },
    /// `a(1 + Ψ)^p`
    PowerShifted { a: f64, p: f64 },
}

impl ViscosityFn {
    pub fn exp() -> Self {
        ViscosityFn::Exponential { a: 1.0, k: 1.0 }
    }

    pub fn mu(&self, psi: f64) -> f64 {
        match *self {
            ViscosityFn::Affine { a, b } => a + b * psi,
            ViscosityFn::Exponential { a, k } => a * (k * psi).exp(),
            ViscosityFn::PowerShifted { a, p } => a * (1.0 + psi).powf(p),
        }
    }

    pub fn dmu(&self, psi: f64) -> f64 {
        match *self {
            ViscosityFn::Affine { b, .. } => b,
            ViscosityFn::Exponential { a, k } => a * k * (k * psi).exp(),
            ViscosityFn::PowerShifted { a, p } => a * p * (1.0 + psi).powf(p - 1.0),
        }
    }

    /// Checks `μ > 0`, `μ' > 0` and growth by a factor `10³` on `Ψ = 10⁻³ … 10⁸`.
    pub fn check(&self) -> ViscosityReport {
        let grid: Vec<f64> = (-3..=8).map(|k| 10f64.powi(k)).collect();
        let mut failures = Vec::new();
        let positive = grid.iter().all(|&p| self.mu(p) > 0.0);
        if !positive {
            failures.push("μ is not positive on the grid".to_string());
        }
        let increasing = grid.iter().all(|&p| self.dmu(p) > 0.0);
        if !increasing {
            failures.push("μ' is not positive on the grid".to_string());
        }
        let ratio = self.mu(grid[grid.len() - 1]) / self.mu(grid[0]);
        let divergent = ratio > 1e3;
        if !divergent {
            failures.push(format!("μ grows only by a factor {ratio:e} on the grid"));
        }
        ViscosityReport {
            positive,
            increasing,
            divergent,
            failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    pub positive: bool,
    pub increasing: bool,
    pub divergent: bool,
    pub failures: Vec<String>,
}

impl ViscosityReport {
    pub fn passed(&self) -> bool {
        self.positive && self.increasing && self.divergent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatsState {
    pub rho: f64,
    pub r: f64,
    pub h: f64,
    pub psi: f64,
    pub z: f64,
}

/// Tip data `α = (h₀, z₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaParam {
    pub h0: f64,
    pub z0: f64,
}

impl AlphaParam {
    pub fn validate(&self) -> Result<(), BatsError> {
        if !(self.h0 > 0.0 && self.h0.is_finite() && self.z0 < 0.0 && self.z0.is_finite()) {
            return Err(BatsError::InvalidParameter(format!(
                "α = ({}, {}) must lie in ℝ>0 × ℝ<0",
                self.h0, self.z0
            )));
        }
        Ok(())
    }
}

/// `Γ = 1 + z/d` with `d = √(r² + z²)`, evaluated as `r²/(d(d − z))` for `z < 0`.
fn big_gamma(r: f64, z: f64) -> f64 {
    let d = r.hypot(z);
    if z < 0.0 {
        r * r / (d * (d - z))
    } else {
        1.0 + z / d
    }
}

/// `(γ, Γ)` at `(ρ, r, z)`.
pub fn gamma_gamma(rho: f64, r: f64, z: f64) -> Result<(f64, f64), BatsError> {
    if r == 0.0 && z == 0.0 {
        return Err(BatsError::OriginSingularity);
    }
    let d = r.hypot(z);
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    Ok(((r * c - z * rho) / (d * d * d), big_gamma(r, z)))
}

fn check_state(x: &BatsState) -> Result<(), BatsError> {
    let ok = x.rho > -1.0
        && x.rho < 1.0
        && x.r > 0.0
        && x.h >= 0.0
        && x.psi > 0.0
        && x.z.is_finite()
        && x.h.is_finite()
        && x.psi.is_finite();
    if ok {
        Ok(())
    } else {
        Err(BatsError::OutOfPhaseSpace(format!("{x:?}")))
    }
}

/// `(ρ', r', h', Ψ', z')`. The boundary `h = 0` is accepted; it is invariant.
pub fn bats_rhs(x: &BatsState, mu: &ViscosityFn) -> Result<[f64; 5], BatsError> {
    check_state(x)?;
    let (gm, big) = gamma_gamma(x.rho, x.r, x.z)?;
    if big < GAMMA_FLOOR {
        return Err(BatsError::GammaVanishes { r: x.r, z: x.z });
    }
    let m = mu.mu(x.psi);
    let c2 = 1.0 - x.rho * x.rho;
    let c = c2.sqrt();
    let r = x.r;
    let drho = 1.5 * c2 / r * (-1.0 + m * big * x.rho * c / (r * r * r));
    let dh = (r * gm / big - x.rho / (2.0 * r) - r * r / (2.0 * m * big * c)) * x.h;
    let dpsi = r * x.h / big - r * gm / big * x.psi;
    Ok([drho, x.rho, dh, dpsi, c])
}

// Angle-chart field on (θ, r, ℓ = ln h, Ψ, z). Returns false on a domain or Γ failure.
fn angle_field(y: &[f64], mu: &ViscosityFn, dy: &mut [f64]) -> bool {
    let (theta, r, ell, psi, z) = (y[0], y[1], y[2], y[3], y[4]);
    if !(theta > 0.0 && theta < std::f64::consts::PI && r > 0.0) {
        return false;
    }
    let (sn, cs) = theta.sin_cos();
    let d = r.hypot(z);
    let big = big_gamma(r, z);
    if !(big >= GAMMA_FLOOR) {
        return false;
    }
    let gm = (r * sn - z * cs) / (d * d * d);
    let m = mu.mu(psi);
    let h = ell.exp();
    dy[0] = -1.5 * sn / r * (-1.0 + m * big * cs * sn / (r * r * r));
    dy[1] = cs;
    dy[2] = r * gm / big - cs / (2.0 * r) - r * r / (2.0 * m * big * sn);
    dy[3] = r * h / big - r * gm / big * psi;
    dy[4] = sn;
    true
}

/// Curvature at the tip, `η₀ = 2z₀²/(3μ(h₀z₀²))`.
pub fn tip_eta0(alpha: AlphaParam, mu: &ViscosityFn) -> f64 {
    2.0 * alpha.z0 * alpha.z0 / (3.0 * mu.mu(alpha.h0 * alpha.z0 * alpha.z0))
}

pub fn default_r_init(alpha: AlphaParam) -> f64 {
    1e-4 * alpha.z0.abs()
}

/// Leading-order tip series evaluated at `r = r_init`.
pub fn bats_tip_init(
    alpha: AlphaParam,
    mu: &ViscosityFn,
    r_init: f64,
) -> Result<BatsState, BatsError> {
    alpha.validate()?;
    if !(r_init > 0.0) {
        return Err(BatsError::InvalidParameter(
            "r_init must be positive".into(),
        ));
    }
    let eta0 = tip_eta0(alpha, mu);
    let q = eta0 * r_init;
    let rho = if q < 1.0 { (1.0 - q * q).sqrt() } else { 0.0 };
    if !(rho > 0.999) {
        return Err(BatsError::RInitTooLarge { r_init, rho });
    }
    Ok(BatsState {
        rho,
        r: r_init,
        h: alpha.h0,
        psi: alpha.h0 * alpha.z0 * alpha.z0,
        z: alpha.z0 + 0.5 * eta0 * r_init * r_init,
    })
}

/// A BATS trajectory started from the tip series.
///
/// Internally the state is `(θ, r, ln h, Ψ, z)` with the quadrature
/// `∫ r h ds` seeded with its tip value `h₀ r_init²/2`.
#[derive(Debug, Clone)]
pub struct BatsTrajectory {
    pub alpha: AlphaParam,
    pub mu: ViscosityFn,
    pub r_init: f64,
    pub eta0: f64,
    pub traj: Trajectory,
}

impl BatsTrajectory {
    fn convert(y: &[f64]) -> BatsState {
        BatsState {
            rho: y[0].cos(),
            r: y[1],
            h: y[2].exp(),
            psi: y[3],
            z: y[4],
        }
    }

    pub fn len(&self) -> usize {
        self.traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.is_empty()
    }

    pub fn s(&self, i: usize) -> f64 {
        self.traj.x(i)
    }

    pub fn state(&self, i: usize) -> BatsState {
        Self::convert(self.traj.state(i))
    }

    /// `∫₀ˢ r h dσ` at sample `i`.
    pub fn rh_integral(&self, i: usize) -> f64 {
        self.traj.quads(i)[0]
    }

    pub fn state_at(&self, s: f64) -> Result<BatsState, BatsError> {
        Ok(Self::convert(&self.traj.dense_eval(s)?))
    }

    /// `(ρ, r, z', ρ')` at arclength `s`, with `z' = sin θ`.
    pub fn point_at(&self, s: f64) -> Result<[f64; 4], BatsError> {
        let y = self.traj.dense_eval(s)?;
        Ok(self.point_of(&y))
    }

    pub fn point(&self, i: usize) -> [f64; 4] {
        self.point_of(self.traj.state(i))
    }

    fn point_of(&self, y: &[f64]) -> [f64; 4] {
        let mut dy = [0.0; 5];
        angle_field(y, &self.mu, &mut dy);
        let (sn, cs) = y[0].sin_cos();
        [cs, y[1], sn, -sn * dy[0]]
    }

    /// First arclength at which `r` reaches `target`, or `None` if the stored
    /// samples never do. Requires `r` to be increasing up to that point.
    pub fn s_at_r(&self, target: f64) -> Option<f64> {
        let i = (0..self.len()).find(|&i| self.traj.state(i)[1] >= target)?;
        if i == 0 {
            return Some(self.s(0));
        }
        let (mut lo, mut hi) = (self.s(i - 1), self.s(i));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match self.traj.dense_eval(mid) {
                Ok(y) if y[1] < target => lo = mid,
                _ => hi = mid,
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Full derivative `(ρ', r', h', Ψ', z')` at sample `i`.
    pub fn derivative(&self, i: usize) -> [f64; 5] {
        let y = self.traj.state(i);
        let mut dy = [0.0; 5];
        angle_field(y, &self.mu, &mut dy);
        let sn = y[0].sin();
        let h = y[2].exp();
        [-sn * dy[0], dy[1], h * dy[2], dy[3], dy[4]]
    }
}

/// Integrates from the tip series up to `s_max` with optional A/B stopping events.
pub fn bats_trajectory(
    alpha: AlphaParam,
    mu: &ViscosityFn,
    r_init: f64,
    s_max: f64,
    stop_at_events: bool,
    tol: &ClassifyTolerances,
) -> Result<BatsTrajectory, BatsError> {
    let x0 = bats_tip_init(alpha, mu, r_init)?;
    let eta0 = tip_eta0(alpha, mu);
    let theta0 = (eta0 * r_init).asin();
    let y0 = [theta0, x0.r, x0.h.ln(), x0.psi, x0.z];

    let gamma_failure = Cell::new(None);
    let mu_c = *mu;
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| {
        if !angle_field(y, &mu_c, dy) {
            if y[1] > 0.0 && big_gamma(y[1], y[4]) < GAMMA_FLOOR {
                gamma_failure.set(Some((y[1], y[4])));
            }
            dy.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let quad = Quadrature::new(0.5 * alpha.h0 * r_init * r_init, |_s, y: &[f64]| {
        y[1] * y[2].exp()
    });
    let events = if stop_at_events {
        vec![
            // ρ = 0 falling ⇔ θ = π/2 rising
            EventSpec::new("rho_zero", Direction::Rising, true, |_s, y, _dy| {
                y[0] - FRAC_PI_2
            }),
            // ρ' = −θ' sin θ rising through zero ⇔ θ' falling through zero
            EventSpec::new("slope_min", Direction::Falling, true, |_s, _y, dy| dy[0]),
        ]
    } else {
        Vec::new()
    };
    let traj =
        integrate(&rhs, &y0, 0.0, s_max, &events, &[quad], &tol.integrator).map_err(|e| {
            match gamma_failure.get() {
                Some((r, z)) => BatsError::GammaVanishes { r, z },
                None => BatsError::Integrate(e),
            }
        })?;
    Ok(BatsTrajectory {
        alpha,
        mu: *mu,
        r_init,
        eta0,
        traj,
    })
}

/// Trajectory with the default `r_init` and stopping events, as used by [`bats_classify`].
pub fn bats_classified_trajectory(
    alpha: AlphaParam,
    mu: &ViscosityFn,
    tol: &ClassifyTolerances,
) -> Result<BatsTrajectory, BatsError> {
    alpha.validate()?;
    let r_init = tol.r_init_factor * alpha.z0.abs();
    bats_trajectory(alpha, mu, r_init, tol.s_max, true, tol)
}

pub fn bats_classify(
    alpha: AlphaParam,
    mu: &ViscosityFn,
    tol: &ClassifyTolerances,
) -> Result<Classification, BatsError> {
    let run = match bats_classified_trajectory(alpha, mu, tol) {
        Ok(run) => run,
        Err(BatsError::Integrate(e @ IntegrateError::BudgetExhausted { .. })) => {
            return Ok(Classification::undetermined(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    Ok(classify_run(&run, tol))
}

fn classify_run(run: &BatsTrajectory, tol: &ClassifyTolerances) -> Classification {
    let traj = &run.traj;
    let n = traj.len();
    let min_rho = (0..n)
        .map(|i| traj.state(i)[0].cos())
        .fold(f64::INFINITY, f64::min);
    let last = run.state(n - 1);
    let s_end = traj.span().1;
    let mut diagnostics = Diagnostics {
        min_rho: Some(min_rho),
        max_s: Some(s_end),
        ambiguous: traj.is_ambiguous(),
        ..Default::default()
    };
    let terminal_state = vec![last.rho, last.r, last.h, last.psi, last.z];
    if diagnostics.ambiguous {
        diagnostics.note = Some("coincident terminal events".into());
        return Classification {
            tag: Tag::Undetermined,
            s0: None,
            terminal_state,
            diagnostics,
        };
    }
    let d = run.derivative(n - 1);
    let (tag, s0) = match traj.termination() {
        Termination::TerminalEvent { event: 0 } if d[0] < 0.0 => (Tag::A, Some(s_end)),
        Termination::TerminalEvent { event: 1 } if last.rho > 0.0 => {
            let (i0, i1) = (n.saturating_sub(2), n - 1);
            let ds = traj.x(i1) - traj.x(i0);
            if ds > 0.0 {
                diagnostics.rho_second = Some((d[0] - run.derivative(i0)[0]) / ds);
            }
            (Tag::B, Some(s_end))
        }
        Termination::TerminalEvent { .. } => {
            diagnostics.note = Some("event with inconsistent sign data".into());
            (Tag::Undetermined, None)
        }
        Termination::ReachedEnd => {
            if plateau(run, tol) {
                (Tag::XLike, None)
            } else {
                diagnostics.note = Some("arclength cap reached without plateau".into());
                (Tag::Undetermined, None)
            }
        }
    };
    Classification {
        tag,
        s0,
        terminal_state,
        diagnostics,
    }
}

// ρ ∈ (0, ρ_flat) with ρ' < 0 and |h'| < ρ_flat at the end, and r, h flat over the last decade of s.
fn plateau(run: &BatsTrajectory, tol: &ClassifyTolerances) -> bool {
    let n = run.len();
    let end = run.state(n - 1);
    let d = run.derivative(n - 1);
    if !(end.rho > 0.0 && end.rho < tol.rho_flat && d[0] < 0.0 && d[2].abs() < tol.rho_flat) {
        return false;
    }
    let s_end = run.s(n - 1);
    let Ok(early) = run.state_at(0.1 * s_end) else {
        return false;
    };
    let span = 0.9 * s_end;
    (end.r - early.r).abs() / span < tol.plateau_slope
        && (end.h - early.h).abs() / span < tol.plateau_slope
}

/// `max |ΨΓ − ∫r h| / max(|ΨΓ|, floor)` over the samples of a trajectory.
pub fn psi_residual(run: &BatsTrajectory) -> f64 {
    if run.len() < 2 {
        return 0.0;
    }
    (0..run.len())
        .map(|i| {
            let x = run.state(i);
            let pg = x.psi * big_gamma(x.r, x.z);
            (pg - run.rh_integral(i)).abs() / pg.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub h0: f64,
    pub z0: f64,
    pub tag: Tag,
    pub s0: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub z0: f64,
    /// End of the refined bracket classified A.
    pub h0_a: f64,
    /// End of the refined bracket classified B.
    pub h0_b: f64,
    pub tag_a: Tag,
    pub tag_b: Tag,
}

impl BoundaryPoint {
    pub fn h0_mid(&self) -> f64 {
        (self.h0_a * self.h0_b).sqrt()
    }
}

/// Which of the sets A and B appear in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepCase {
    /// Case 1: A only.
    OnlyA,
    /// Case 2: B only.
    OnlyB,
    /// Case 3: both present.
    Both,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub h0_grid: Vec<f64>,
    pub z0_grid: Vec<f64>,
    /// Row-major cells, one row per `z₀`.
    pub cells: Vec<SweepCell>,
    /// One point per row containing an A/B transition, ordered by row.
    pub boundary: Vec<BoundaryPoint>,
    pub case: SweepCase,
}

impl AlphaSweep {
    pub fn cell(&self, row: usize, col: usize) -> &SweepCell {
        &self.cells[row * self.h0_grid.len() + col]
    }
}

fn classify_cell(alpha: AlphaParam, mu: &ViscosityFn, tol: &ClassifyTolerances) -> SweepCell {
    let (tag, s0, error) = match bats_classify(alpha, mu, tol) {
        Ok(c) => (c.tag, c.s0, None),
        Err(e) => (Tag::Undetermined, None, Some(e.to_string())),
    };
    SweepCell {
        h0: alpha.h0,
        z0: alpha.z0,
        tag,
        s0,
        error,
    }
}

/// Classifies every `(h₀, z₀)` grid point and refines each row's first A/B
/// transition by geometric bisection in `h₀` to relative width `h0_rel_tol`.
pub fn alpha_sweep(
    h0_grid: &[f64],
    z0_grid: &[f64],
    mu: &ViscosityFn,
    tol: &ClassifyTolerances,
    h0_rel_tol: f64,
) -> Result<AlphaSweep, BatsError> {
    if h0_grid.iter().any(|h| !(*h > 0.0)) || z0_grid.iter().any(|z| !(*z < 0.0)) {
        return Err(BatsError::InvalidParameter(
            "grid must lie in ℝ>0 × ℝ<0".into(),
        ));
    }
    if h0_grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(BatsError::InvalidParameter(
            "h0 grid must be strictly ascending".into(),
        ));
    }
    let nh = h0_grid.len();
    let points: Vec<AlphaParam> = z0_grid
        .iter()
        .flat_map(|&z0| h0_grid.iter().map(move |&h0| AlphaParam { h0, z0 }))
        .collect();
    let cells: Vec<SweepCell> = points
        .par_iter()
        .map(|&a| classify_cell(a, mu, tol))
        .collect();

    let transitions: Vec<(usize, usize)> = (0..z0_grid.len())
        .filter_map(|row| {
            let tags: Vec<Tag> = (0..nh).map(|c| cells[row * nh + c].tag).collect();
            (0..nh.saturating_sub(1))
                .find(|&c| matches!((tags[c], tags[c + 1]), (Tag::A, Tag::B) | (Tag::B, Tag::A)))
                .map(|c| (row, c))
        })
        .collect();
    let boundary: Vec<BoundaryPoint> = transitions
        .par_iter()
        .map(|&(row, c)| {
            let z0 = z0_grid[row];
            let (left, right) = (&cells[row * nh + c], &cells[row * nh + c + 1]);
            let (mut ha, mut hb) = if left.tag == Tag::A {
                (left.h0, right.h0)
            } else {
                (right.h0, left.h0)
            };
            let (mut tag_a, mut tag_b) = (Tag::A, Tag::B);
            while (ha - hb).abs() > h0_rel_tol * ha.min(hb) {
                let mid = (ha * hb).sqrt();
                let t = classify_cell(AlphaParam { h0: mid, z0 }, mu, tol).tag;
                match t {
                    Tag::A => {
                        ha = mid;
                        tag_a = t;
                    }
                    Tag::B => {
                        hb = mid;
                        tag_b = t;
                    }
                    _ => break,
                }
            }
            BoundaryPoint {
                z0,
                h0_a: ha,
                h0_b: hb,
                tag_a,
                tag_b,
            }
        })
        .collect();

    let has_a = cells.iter().any(|c| c.tag == Tag::A);
    let has_b = cells.iter().any(|c| c.tag == Tag::B);
    let case = match (has_a, has_b) {
        (true, true) => SweepCase::Both,
        (true, false) => SweepCase::OnlyA,
        (false, true) => SweepCase::OnlyB,
        (false, false) => SweepCase::Neither,
    };
    Ok(AlphaSweep {
        h0_grid: h0_grid.to_vec(),
        z0_grid: z0_grid.to_vec(),
        cells,
        boundary,
        case,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flux_factors_on_the_equator() {
        let (g, big) = gamma_gamma(0.0, 1.0, 0.0).unwrap();
        assert_eq!(g, 1.0);
        assert_eq!(big, 1.0);
        assert_eq!(
            gamma_gamma(0.3, 0.0, 0.0),
            Err(BatsError::OriginSingularity)
        );
    }

    #[test]
    fn big_gamma_vanishes_downstream() {
        let (_, big) = gamma_gamma(0.5, 1.0, -1e6).unwrap();
        assert!(big < 1e-12 && big > 0.0);
    }

    #[test]
    fn tip_regime_gamma_over_r_squared() {
        let (_, big) = gamma_gamma(1.0 - 5e-9, 1e-4, -1.0).unwrap();
        assert_relative_eq!(big / 1e-8, 0.5, max_relative = 1e-4);
    }

    #[test]
    fn z_component_is_arclength() {
        let x = BatsState {
            rho: 0.0,
            r: 1.0,
            h: 1.0,
            psi: 1.0,
            z: 0.3,
        };
        assert_eq!(bats_rhs(&x, &ViscosityFn::exp()).unwrap()[4], 1.0);
    }

    #[test]
    fn zero_thickness_is_invariant() {
        let x = BatsState {
            rho: 0.4,
            r: 0.8,
            h: 0.0,
            psi: 2.0,
            z: -0.5,
        };
        let d = bats_rhs(&x, &ViscosityFn::exp()).unwrap();
        assert_eq!(d[2], 0.0);
        let (gm, big) = gamma_gamma(0.4, 0.8, -0.5).unwrap();
        assert_relative_eq!(d[3], -0.8 * gm / big * 2.0, max_relative = 1e-14);
    }

    #[test]
    fn phase_space_guard() {
        let x = BatsState {
            rho: 1.0,
            r: 1.0,
            h: 1.0,
            psi: 1.0,
            z: 0.0,
        };
        assert!(matches!(
            bats_rhs(&x, &ViscosityFn::exp()),
            Err(BatsError::OutOfPhaseSpace(_))
        ));
    }

    #[test]
    fn tip_init_series() {
        let mu = ViscosityFn::exp();
        let alpha = AlphaParam { h0: 1.0, z0: -1.0 };
        let x = bats_tip_init(alpha, &mu, 1e-4).unwrap();
        assert_eq!(x.psi, 1.0);
        assert_eq!(x.h, 1.0);
        assert_relative_eq!(
            tip_eta0(alpha, &mu),
            2.0 / (3.0 * 1f64.exp()),
            max_relative = 1e-15
        );
        assert!(matches!(
            bats_tip_init(alpha, &mu, 0.5),
            Err(BatsError::RInitTooLarge { .. })
        ));
        assert!(bats_tip_init(AlphaParam { h0: 1.0, z0: 1.0 }, &mu, 1e-4).is_err());
    }

    #[test]
    fn viscosity_catalog_checks() {
        assert!(ViscosityFn::exp().check().passed());
        assert!(ViscosityFn::Affine { a: 1.0, b: 1.0 }.check().passed());
        assert!(ViscosityFn::PowerShifted { a: 1.0, p: 2.0 }
            .check()
            .passed());
        assert!(!ViscosityFn::Affine { a: 1.0, b: -1.0 }.check().passed());
    }
}
