//! Adaptive explicit Runge–Kutta integration.
//!
//! The scheme is the Dormand–Prince 5(4) pair with its fourth-order continuous
//! extension. Every accepted step keeps its interpolation coefficients, so a
//! [`Trajectory`] can be evaluated anywhere inside its span. Events are scalar
//! functions of `(x, y, y')`; a sign change across an accepted step is located
//! by bisection on the dense output. Quadrature channels are carried as extra
//! components of the state vector, which gives them the same error control and
//! the same dense output as the state itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("right-hand side is not finite at x = {x}")]
    NonFiniteRhs { x: f64 },
    #[error("step size underflow at x = {x} (h = {h:e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("step budget of {max_steps} exhausted at x = {x}")]
    BudgetExhausted { x: f64, max_steps: usize },
    #[error("x = {x} lies outside the trajectory span [{lo}, {hi}]")]
    OutOfSpan { x: f64, lo: f64, hi: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
}

/// Tolerances and budgets for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude. `None` selects one from the local scale of the problem.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    /// Width of the final bracket around an event location.
    pub event_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            event_tol: 1e-12,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrateError> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(IntegrateError::InvalidConfig(
                "rtol and atol must be strictly positive".into(),
            ));
        }
        if !positive(self.event_tol) {
            return Err(IntegrateError::InvalidConfig(
                "event_tol must be strictly positive".into(),
            ));
        }
        if !positive(self.h_max) {
            return Err(IntegrateError::InvalidConfig(
                "h_max must be strictly positive".into(),
            ));
        }
        if let Some(h) = self.h_init {
            if !positive(h) {
                return Err(IntegrateError::InvalidConfig(
                    "h_init must be strictly positive".into(),
                ));
            }
        }
        if self.max_steps == 0 {
            return Err(IntegrateError::InvalidConfig(
                "max_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Same configuration with `rtol`, `atol` and `event_tol` divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rtol: self.rtol / factor,
            atol: self.atol / factor,
            event_tol: self.event_tol / factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Negative to non-negative.
    Rising,
    /// Positive to non-positive.
    Falling,
    Any,
}

impl Direction {
    fn crossed(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
            Direction::Any => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }
}

type EventFn<'a> = dyn Fn(f64, &[f64], &[f64]) -> f64 + 'a;
type IntegrandFn<'a> = dyn Fn(f64, &[f64]) -> f64 + 'a;

/// Right-hand side `f(x, y, dy)` writing `dy/dx` into `dy`.
pub type RhsFn<'a> = dyn Fn(f64, &[f64], &mut [f64]) + 'a;

/// A scalar event `g(x, y, y')` watched for sign changes.
pub struct EventSpec<'a> {
    pub name: String,
    pub direction: Direction,
    pub terminal: bool,
    func: Box<EventFn<'a>>,
}

impl<'a> EventSpec<'a> {
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        terminal: bool,
        func: impl Fn(f64, &[f64], &[f64]) -> f64 + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            direction,
            terminal,
            func: Box::new(func),
        }
    }

    pub fn eval(&self, x: f64, y: &[f64], dy: &[f64]) -> f64 {
        (self.func)(x, y, dy)
    }
}

impl std::fmt::Debug for EventSpec<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventSpec")
            .field("name", &self.name)
            .field("direction", &self.direction)
            .field("terminal", &self.terminal)
            .finish_non_exhaustive()
    }
}

/// An auxiliary channel `q(x) = initial + ∫ integrand(ξ, y(ξ)) dξ`.
pub struct Quadrature<'a> {
    pub initial: f64,
    integrand: Box<IntegrandFn<'a>>,
}

impl<'a> Quadrature<'a> {
    pub fn new(initial: f64, integrand: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Self {
            initial,
            integrand: Box::new(integrand),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Index into the event list passed to [`integrate`].
    pub event: usize,
    pub name: String,
    pub x: f64,
    pub state: Vec<f64>,
    pub quads: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedEnd,
    TerminalEvent { event: usize },
}

#[derive(Debug, Clone)]
struct Segment {
    x0: f64,
    h: f64,
    // Five blocks of `width` coefficients of the continuous extension.
    coeffs: Vec<f64>,
}

impl Segment {
    fn eval_into(&self, x: f64, out: &mut [f64]) {
        let w = out.len();
        let theta = (x - self.x0) / self.h;
        let theta1 = 1.0 - theta;
        let c = &self.coeffs;
        for i in 0..w {
            out[i] = c[i]
                + theta
                    * (c[w + i]
                        + theta1 * (c[2 * w + i] + theta * (c[3 * w + i] + theta1 * c[4 * w + i])));
        }
    }
}

/// Sampled solution of an initial value problem with dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    nquad: usize,
    xs: Vec<f64>,
    values: Vec<f64>,
    segments: Vec<Segment>,
    events: Vec<EventRecord>,
    termination: Termination,
    ambiguous: bool,
    rhs_evals: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn quad_count(&self) -> usize {
        self.nquad
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xs[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let w = self.dim + self.nquad;
        &self.values[i * w..i * w + self.dim]
    }

    pub fn quads(&self, i: usize) -> &[f64] {
        let w = self.dim + self.nquad;
        &self.values[i * w + self.dim..(i + 1) * w]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// `(first, last)` value of the independent variable.
    pub fn span(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    /// Set when two terminal events were located within `10 · event_tol` of each other.
    pub fn is_ambiguous(&self) -> bool {
        self.ambiguous
    }

    pub fn rhs_evals(&self) -> usize {
        self.rhs_evals
    }

    fn forward(&self) -> bool {
        self.xs.len() < 2 || self.xs[1] > self.xs[0]
    }

    fn locate(&self, x: f64) -> Result<Result<usize, usize>, IntegrateError> {
        let (a, b) = self.span();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if !(x >= lo && x <= hi) {
            return Err(IntegrateError::OutOfSpan { x, lo, hi });
        }
        let fwd = self.forward();
        let found = self.xs.binary_search_by(|probe| {
            let ord = probe.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less);
            if fwd {
                ord
            } else {
                ord.reverse()
            }
        });
        Ok(found)
    }

    /// State and quadrature values at `x`, concatenated.
    pub fn dense_eval_full(&self, x: f64) -> Result<Vec<f64>, IntegrateError> {
        let w = self.dim + self.nquad;
        let mut out = vec![0.0; w];
        match self.locate(x)? {
            Ok(i) => out.copy_from_slice(&self.values[i * w..(i + 1) * w]),
            Err(i) => self.segments[i - 1].eval_into(x, &mut out),
        }
        Ok(out)
    }

    /// Interpolated state at `x`. Knots return the stored sample exactly.
    pub fn dense_eval(&self, x: f64) -> Result<Vec<f64>, IntegrateError> {
        let mut full = self.dense_eval_full(x)?;
        full.truncate(self.dim);
        Ok(full)
    }

    /// Interpolated quadrature channels at `x`.
    pub fn dense_quads(&self, x: f64) -> Result<Vec<f64>, IntegrateError> {
        let full = self.dense_eval_full(x)?;
        Ok(full[self.dim..].to_vec())
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct System<'r, 'q, 'a> {
    rhs: &'r RhsFn<'r>,
    quads: &'q [Quadrature<'a>],
    dim: usize,
    evals: usize,
}

impl System<'_, '_, '_> {
    fn eval(&mut self, x: f64, y: &[f64], dy: &mut [f64]) -> bool {
        self.evals += 1;
        let (state, _) = y.split_at(self.dim);
        let (dstate, dquad) = dy.split_at_mut(self.dim);
        (self.rhs)(x, state, dstate);
        for (q, d) in self.quads.iter().zip(dquad.iter_mut()) {
            *d = (q.integrand)(x, state);
        }
        dy.iter().all(|v| v.is_finite())
    }
}

fn error_norm(scale_a: &[f64], scale_b: &[f64], err: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(scale_a.iter().zip(scale_b))
        .map(|(e, (a, b))| {
            let sc = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step(
    sys: &mut System<'_, '_, '_>,
    x0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    cfg: &IntegratorConfig,
) -> f64 {
    let d0 = error_norm(y0, y0, y0, cfg);
    let d1 = error_norm(y0, y0, f0, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if !sys.eval(x0 + dir * h0, &y1, &mut f1) {
        return h0 * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = error_norm(y0, y0, &diff, cfg) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates `y' = rhs(x, y)` from `x0` towards `x_end`.
///
/// Stops at `x_end`, at the first terminal event, or with an error. Every
/// accepted step is stored as a sample together with its interpolant.
pub fn integrate(
    rhs: &RhsFn<'_>,
    y0: &[f64],
    x0: f64,
    x_end: f64,
    events: &[EventSpec<'_>],
    quads: &[Quadrature<'_>],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    if x_end == x0 || x_end.is_nan() || !x0.is_finite() {
        return Err(IntegrateError::InvalidConfig(
            "x_end must differ from x0".into(),
        ));
    }
    let dim = y0.len();
    let nq = quads.len();
    let w = dim + nq;
    let dir = (x_end - x0).signum();
    let mut sys = System {
        rhs,
        quads,
        dim,
        evals: 0,
    };

    let mut y: Vec<f64> = y0
        .iter()
        .copied()
        .chain(quads.iter().map(|q| q.initial))
        .collect();
    let mut k1 = vec![0.0; w];
    if !sys.eval(x0, &y, &mut k1) || y.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteRhs { x: x0 });
    }

    let mut traj = Trajectory {
        dim,
        nquad: nq,
        xs: vec![x0],
        values: y.clone(),
        segments: Vec::new(),
        events: Vec::new(),
        termination: Termination::ReachedEnd,
        ambiguous: false,
        rhs_evals: 0,
    };

    let mut g_prev: Vec<f64> = events
        .iter()
        .map(|e| e.eval(x0, &y[..dim], &k1[..dim]))
        .collect();

    let span = (x_end - x0).abs();
    let mut h = match cfg.h_init {
        Some(h) => h,
        None => initial_step(&mut sys, x0, &y, &k1, dir, cfg),
    }
    .min(cfg.h_max)
    .min(span);

    let mut x = x0;
    let mut steps = 0usize;
    let mut reject_growth = false;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; w],
        vec![0.0; w],
        vec![0.0; w],
        vec![0.0; w],
        vec![0.0; w],
        vec![0.0; w],
    );
    let mut ytmp = vec![0.0; w];
    let mut ynew = vec![0.0; w];
    let mut err = vec![0.0; w];

    loop {
        if steps >= cfg.max_steps {
            traj.rhs_evals = sys.evals;
            return Err(IntegrateError::BudgetExhausted {
                x,
                max_steps: cfg.max_steps,
            });
        }
        steps += 1;

        let remaining = (x_end - x).abs();
        let last = h >= remaining * (1.0 - 1e-13);
        if last {
            h = remaining;
        }
        if h <= 8.0 * f64::EPSILON * x.abs().max(1e-300) || h < 1e-300 {
            return Err(IntegrateError::StepUnderflow { x, h });
        }
        let hs = dir * h;

        macro_rules! stage {
            ($out:expr, $c:expr, $($a:expr, $k:expr),+) => {{
                for i in 0..w {
                    ytmp[i] = y[i] + hs * (0.0 $(+ $a * $k[i])+);
                }
                sys.eval(x + $c * hs, &ytmp, &mut $out)
            }};
        }

        let mut finite = stage!(k2, C2, A21, k1);
        finite = finite && stage!(k3, C3, A31, k1, A32, k2);
        finite = finite && stage!(k4, C4, A41, k1, A42, k2, A43, k3);
        finite = finite && stage!(k5, C5, A51, k1, A52, k2, A53, k3, A54, k4);
        finite = finite && stage!(k6, 1.0, A61, k1, A62, k2, A63, k3, A64, k4, A65, k5);
        if finite {
            for i in 0..w {
                ynew[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            finite = ynew.iter().all(|v| v.is_finite()) && sys.eval(x + hs, &ynew, &mut k7);
        }
        if !finite {
            // Trial stages left the domain of the vector field; retry with a shorter step.
            h *= 0.25;
            reject_growth = true;
            if h <= 8.0 * f64::EPSILON * x.abs().max(1e-300) || h < 1e-300 {
                traj.rhs_evals = sys.evals;
                return Err(IntegrateError::NonFiniteRhs { x });
            }
            continue;
        }

        for i in 0..w {
            err[i] =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&y, &ynew, &err, cfg);

        if en > 1.0 {
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            reject_growth = true;
            continue;
        }

        let x_new = if last { x_end } else { x + hs };
        let mut coeffs = vec![0.0; 5 * w];
        for i in 0..w {
            let dy = ynew[i] - y[i];
            let bspl = hs * k1[i] - dy;
            coeffs[i] = y[i];
            coeffs[w + i] = dy;
            coeffs[2 * w + i] = bspl;
            coeffs[3 * w + i] = dy - hs * k7[i] - bspl;
            coeffs[4 * w + i] =
                hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let seg = Segment {
            x0: x,
            h: hs,
            coeffs,
        };

        // Event detection over [x, x_new].
        let mut hits: Vec<(f64, usize)> = Vec::new();
        let mut g_new = Vec::with_capacity(events.len());
        for (idx, ev) in events.iter().enumerate() {
            let gn = ev.eval(x_new, &ynew[..dim], &k7[..dim]);
            g_new.push(gn);
            if ev.direction.crossed(g_prev[idx], gn) {
                let root = locate_event(ev, &seg, &mut sys, x, x_new, g_prev[idx], dim, w, cfg);
                hits.push((root, idx));
            }
        }
        hits.sort_by(|a, b| (dir * a.0).partial_cmp(&(dir * b.0)).unwrap());

        let first_terminal = hits
            .iter()
            .find(|(_, idx)| events[*idx].terminal)
            .map(|(r, _)| *r);

        let mut stop_at = None;
        for &(root, idx) in &hits {
            if let Some(t) = first_terminal {
                if dir * (root - t) > 10.0 * cfg.event_tol {
                    continue;
                }
                if events[idx].terminal {
                    if stop_at.is_some() {
                        traj.ambiguous = true;
                    } else {
                        stop_at = Some((root, idx));
                    }
                }
            }
            let mut full = vec![0.0; w];
            seg.eval_into(root, &mut full);
            traj.events.push(EventRecord {
                event: idx,
                name: events[idx].name.clone(),
                x: root,
                state: full[..dim].to_vec(),
                quads: full[dim..].to_vec(),
            });
        }

        if let Some((root, idx)) = stop_at {
            let mut full = vec![0.0; w];
            seg.eval_into(root, &mut full);
            traj.xs.push(root);
            traj.values.extend_from_slice(&full);
            traj.segments.push(seg);
            traj.termination = Termination::TerminalEvent { event: idx };
            break;
        }

        traj.xs.push(x_new);
        traj.values.extend_from_slice(&ynew);
        traj.segments.push(seg);
        g_prev = g_new;

        if last {
            traj.termination = Termination::ReachedEnd;
            break;
        }

        x = x_new;
        std::mem::swap(&mut y, &mut ynew);
        std::mem::swap(&mut k1, &mut k7);

        let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
        fac = fac.clamp(0.2, 10.0);
        if reject_growth {
            fac = fac.min(1.0);
            reject_growth = false;
        }
        h = (h * fac).min(cfg.h_max);
    }

    traj.rhs_evals = sys.evals;
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
fn locate_event(
    ev: &EventSpec<'_>,
    seg: &Segment,
    sys: &mut System<'_, '_, '_>,
    a0: f64,
    b0: f64,
    g_a: f64,
    dim: usize,
    w: usize,
    cfg: &IntegratorConfig,
) -> f64 {
    let (mut a, mut b) = (a0, b0);
    let mut ya = vec![0.0; w];
    let mut dy = vec![0.0; w];
    let side = g_a.signum();
    for _ in 0..200 {
        if (b - a).abs() <= cfg.event_tol {
            break;
        }
        let mid = 0.5 * (a + b);
        seg.eval_into(mid, &mut ya);
        sys.eval(mid, &ya, &mut dy);
        let gm = ev.eval(mid, &ya[..dim], &dy[..dim]);
        if gm.is_finite() && gm.signum() == side && gm != 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp_growth(_x: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[0];
    }

    #[test]
    fn exponential_growth_reaches_e() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&exp_growth, &[1.0], 0.0, 1.0, &[], &[], &cfg).unwrap();
        assert_eq!(traj.termination(), Termination::ReachedEnd);
        assert_eq!(traj.span().1, 1.0);
        assert_relative_eq!(
            traj.last_state()[0],
            std::f64::consts::E,
            max_relative = 1e-9
        );
    }

    #[test]
    fn linear_decay_event_at_one() {
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, _y: &[f64], dy: &mut [f64]| dy[0] = -1.0;
        let ev = EventSpec::new("zero", Direction::Falling, true, |_x, y, _dy| y[0]);
        let traj = integrate(&rhs, &[1.0], 0.0, 5.0, &[ev], &[], &cfg).unwrap();
        assert_eq!(traj.termination(), Termination::TerminalEvent { event: 0 });
        assert!((traj.span().1 - 1.0).abs() <= cfg.event_tol);
        assert_eq!(traj.events().len(), 1);
        assert!((traj.events()[0].x - 1.0).abs() <= cfg.event_tol);

        let mid = traj.dense_eval(0.5).unwrap();
        assert_relative_eq!(mid[0], 0.5, max_relative = 1e-10);
    }

    #[test]
    fn doubling_rate_matches_closed_form() {
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| dy[0] = 2.0 * y[0];
        let traj = integrate(&rhs, &[0.01], 0.0, 2.0, &[], &[], &cfg).unwrap();
        // Global error, accumulated over all steps.
        assert_relative_eq!(traj.last_state()[0], 0.01 * 4f64.exp(), max_relative = 1e-8);
        let at_one = traj.dense_eval(1.0).unwrap();
        assert_relative_eq!(at_one[0], 0.01 * 2f64.exp(), max_relative = 1e-8);
    }

    #[test]
    fn knots_are_returned_exactly() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&exp_growth, &[1.0], 0.0, 3.0, &[], &[], &cfg).unwrap();
        for i in [0, traj.len() / 2, traj.len() - 1] {
            assert_eq!(traj.dense_eval(traj.x(i)).unwrap(), traj.state(i));
        }
    }

    #[test]
    fn out_of_span_is_rejected() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&exp_growth, &[1.0], 0.0, 1.0, &[], &[], &cfg).unwrap();
        assert!(matches!(
            traj.dense_eval(1.5),
            Err(IntegrateError::OutOfSpan { .. })
        ));
        assert!(matches!(
            traj.dense_eval(-0.1),
            Err(IntegrateError::OutOfSpan { .. })
        ));
    }

    #[test]
    fn backward_integration() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&exp_growth, &[1.0], 0.0, -1.0, &[], &[], &cfg).unwrap();
        assert_relative_eq!(traj.last_state()[0], (-1f64).exp(), max_relative = 1e-9);
        let mid = traj.dense_eval(-0.5).unwrap();
        assert_relative_eq!(mid[0], (-0.5f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn constant_quadrature_is_linear() {
        let cfg = IntegratorConfig::default();
        let q = Quadrature::new(0.0, |_x, _y| 3.5);
        let traj = integrate(&exp_growth, &[1.0], 0.0, 2.0, &[], &[q], &cfg).unwrap();
        for i in 0..traj.len() {
            assert_relative_eq!(
                traj.quads(i)[0],
                3.5 * traj.x(i),
                max_relative = 1e-10,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(
            traj.dense_quads(1.3).unwrap()[0],
            3.5 * 1.3,
            max_relative = 1e-10
        );
    }

    #[test]
    fn quadrature_of_state() {
        // ∫₀¹ eˣ dx = e − 1
        let cfg = IntegratorConfig::default();
        let q = Quadrature::new(0.0, |_x, y: &[f64]| y[0]);
        let traj = integrate(&exp_growth, &[1.0], 0.0, 1.0, &[], &[q], &cfg).unwrap();
        assert_relative_eq!(
            traj.quads(traj.len() - 1)[0],
            std::f64::consts::E - 1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn non_finite_rhs_at_start() {
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, _y: &[f64], dy: &mut [f64]| dy[0] = f64::NAN;
        let err = integrate(&rhs, &[1.0], 0.0, 1.0, &[], &[], &cfg).unwrap_err();
        assert_eq!(err, IntegrateError::NonFiniteRhs { x: 0.0 });
    }

    #[test]
    fn finite_time_blowup_underflows() {
        // y' = y², y(0) = 1 blows up at x = 1.
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let err = integrate(&rhs, &[1.0], 0.0, 2.0, &[], &[], &cfg).unwrap_err();
        assert!(matches!(
            err,
            IntegrateError::StepUnderflow { .. } | IntegrateError::NonFiniteRhs { .. }
        ));
    }

    #[test]
    fn budget_exhaustion() {
        let cfg = IntegratorConfig {
            max_steps: 5,
            h_init: Some(1e-3),
            h_max: 1e-3,
            ..Default::default()
        };
        let err = integrate(&exp_growth, &[1.0], 0.0, 1.0, &[], &[], &cfg).unwrap_err();
        assert!(matches!(
            err,
            IntegrateError::BudgetExhausted { max_steps: 5, .. }
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IntegratorConfig {
            rtol: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = IntegratorConfig {
            max_steps: 0,
            ..Default::default()
        };
        assert!(integrate(&exp_growth, &[1.0], 0.0, 1.0, &[], &[], &cfg).is_err());
        let cfg = IntegratorConfig::default();
        assert!(integrate(&exp_growth, &[1.0], 1.0, 1.0, &[], &[], &cfg).is_err());
    }

    #[test]
    fn non_terminal_events_are_logged() {
        // y = sin x has zeros at kπ.
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let ev = EventSpec::new("zero", Direction::Any, false, |_x, y, _dy| y[0]);
        let traj = integrate(&rhs, &[0.0, 1.0], 0.0, 10.0, &[ev], &[], &cfg).unwrap();
        let xs: Vec<f64> = traj.events().iter().map(|e| e.x).collect();
        assert_eq!(xs.len(), 3);
        for (k, x) in xs.iter().enumerate() {
            assert!((x - (k as f64 + 1.0) * std::f64::consts::PI).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_events_see_the_vector_field() {
        // Maximum of sin x at π/2: y' falls through zero.
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let ev = EventSpec::new("max", Direction::Falling, true, |_x, _y, dy: &[f64]| dy[0]);
        let traj = integrate(&rhs, &[0.0, 1.0], 0.0, 10.0, &[ev], &[], &cfg).unwrap();
        assert!((traj.span().1 - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn coincident_terminal_events_are_ambiguous() {
        let cfg = IntegratorConfig::default();
        let rhs = |_x: f64, _y: &[f64], dy: &mut [f64]| dy[0] = -1.0;
        let a = EventSpec::new("a", Direction::Falling, true, |_x, y, _dy| y[0]);
        let b = EventSpec::new("b", Direction::Falling, true, |_x, y, _dy| 2.0 * y[0]);
        let traj = integrate(&rhs, &[1.0], 0.0, 5.0, &[a, b], &[], &cfg).unwrap();
        assert!(traj.is_ambiguous());
        assert_eq!(traj.events().len(), 2);
    }

    #[test]
    fn separated_events_in_one_step_are_ordered() {
        let cfg = IntegratorConfig {
            h_init: Some(4.0),
            ..Default::default()
        };
        let rhs = |_x: f64, _y: &[f64], dy: &mut [f64]| dy[0] = -1.0;
        let a = EventSpec::new("late", Direction::Falling, true, |_x, y, _dy| y[0] + 0.5);
        let b = EventSpec::new("early", Direction::Falling, true, |_x, y, _dy| y[0]);
        let traj = integrate(&rhs, &[1.0], 0.0, 5.0, &[a, b], &[], &cfg).unwrap();
        assert!(!traj.is_ambiguous());
        assert_eq!(traj.termination(), Termination::TerminalEvent { event: 1 });
        assert!((traj.span().1 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn samples_are_strictly_monotone() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(&exp_growth, &[1.0], 0.0, 4.0, &[], &[], &cfg).unwrap();
        assert!(traj.xs().windows(2).all(|p| p[1] > p[0]));
    }
}
