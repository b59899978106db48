//! Classification of toy-model parameters into the sets A, B and X.
//!
//! A tip solution is followed in the `(ρ, r)` chart until one of three
//! terminal events fires: `ρ = 0` (A), a minimum of `ρ` with `ρ > 0` (B), or
//! entry into a small ball around the base equilibrium `(0, R(β))` (X-like).
//! The X set has empty interior, so the ball only serves as a diagnostic; the
//! authoritative output of [`find_bifurcation`] is the A/B bracket.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{Direction, IntegrateError, IntegratorConfig, Termination};
use crate::toy::{
    construct_tip_solution, event_rho_zero, event_slope_min, toy_field, BodyLeg, GFunction,
    TipLegEnd, TipSeed, TipSolution, ToyError, ToyEvent, DEFAULT_DELTA, DEFAULT_RHO_SWITCH,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no sign change of β·r·g(r²) − 1 found for β = {beta}")]
    BracketFailure { beta: f64 },
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
    #[error("ordering violation: {0}")]
    OrderingViolation(String),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyTolerances {
    pub integrator: IntegratorConfig,
    /// Radius of the terminal ball around the base equilibrium.
    pub eps_base: f64,
    pub s_max: f64,
    pub delta: f64,
    pub rho_switch: f64,
    /// Enables the base-ball event in toy classifications.
    pub base_ball: bool,
    /// BATS tip series starts at `r = r_init_factor · |z₀|`.
    pub r_init_factor: f64,
    /// BATS plateau test: `ρ` and `|h'|` thresholds.
    pub rho_flat: f64,
    /// BATS plateau test: slope threshold for `r` and `h` over the last decade of `s`.
    pub plateau_slope: f64,
}

impl Default for ClassifyTolerances {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            eps_base: 1e-6,
            s_max: 1e4,
            delta: DEFAULT_DELTA,
            rho_switch: DEFAULT_RHO_SWITCH,
            base_ball: true,
            r_init_factor: 1e-4,
            rho_flat: 1e-5,
            plateau_slope: 1e-6,
        }
    }
}

impl ClassifyTolerances {
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            integrator: self.integrator.tightened(factor),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    A,
    B,
    XLike,
    Undetermined,
}

impl std::fmt::Display for Tag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Tag::A => "A",
            Tag::B => "B",
            Tag::XLike => "XLike",
            Tag::Undetermined => "Undetermined",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_rho: Option<f64>,
    pub max_s: Option<f64>,
    /// Distance of the terminal state to `(0, R(β))`, toy model only.
    pub base_distance: Option<f64>,
    /// `ρ''` at a B event.
    pub rho_second: Option<f64>,
    /// Two terminal events were located within the event tolerance.
    pub ambiguous: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tag: Tag,
    /// Arclength of the A or B event.
    pub s0: Option<f64>,
    pub terminal_state: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Classification {
    pub(crate) fn undetermined(note: impl Into<String>) -> Self {
        Self {
            tag: Tag::Undetermined,
            s0: None,
            terminal_state: Vec::new(),
            diagnostics: Diagnostics {
                min_rho: None,
                max_s: None,
                note: Some(note.into()),
                ..Default::default()
            },
        }
    }
}

/// Unique root `R(β)` of `β·r·g(r²) = 1`.
pub fn base_radius(beta: f64, g: &GFunction) -> Result<f64, ClassifyError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ClassifyError::InvalidParameter(format!(
            "base radius needs β > 0, got {beta}"
        )));
    }
    let f = |r: f64| beta * r * g.g(r * r) - 1.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut expansions = 0;
    while !(f(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 1100 || !hi.is_finite() {
            return Err(ClassifyError::BracketFailure { beta });
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if -f(lo) <= f(hi) { lo } else { hi })
}

/// `ρ''` at a point where `ρ' = 0`.
pub fn rho_second_at_critical(rho: f64, r: f64, beta: f64, g: &GFunction) -> f64 {
    let c2 = 1.0 - rho * rho;
    1.5 * c2 * rho / (r * r) * (-1.0 + beta * c2.sqrt() * g.profile_d1(r))
}

/// `ρ'''` at a point where `ρ' = ρ'' = 0`.
pub fn rho_third_at_degenerate(rho: f64, r: f64, beta: f64, g: &GFunction) -> f64 {
    let c2 = 1.0 - rho * rho;
    1.5 * beta * c2.powf(1.5) * rho * rho / (r * r) * g.profile_d2(r)
}

fn seed_for(beta: f64, g: &GFunction, tol: &ClassifyTolerances) -> TipSeed {
    TipSeed::with(beta, g, tol.delta, tol.rho_switch)
}

/// Tip solution followed until its first A or B event.
pub fn tip_solution(
    beta: f64,
    g: &GFunction,
    tol: &ClassifyTolerances,
) -> Result<TipSolution, ClassifyError> {
    let seed = seed_for(beta, g, tol);
    let body = BodyLeg {
        s_max: tol.s_max,
        events: vec![event_rho_zero(true), event_slope_min(true)],
    };
    Ok(construct_tip_solution(&seed, g, &tol.integrator, body)?)
}

pub fn classify_beta(
    beta: f64,
    g: &GFunction,
    tol: &ClassifyTolerances,
) -> Result<Classification, ClassifyError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(ClassifyError::InvalidParameter(format!(
            "β must be finite and non-negative, got {beta}"
        )));
    }
    let radius = if beta > 0.0 {
        Some(base_radius(beta, g)?)
    } else {
        None
    };
    let mut events = vec![event_rho_zero(true), event_slope_min(true)];
    if let (Some(rb), true) = (radius, tol.base_ball) {
        let eps = tol.eps_base;
        events.push(ToyEvent::new(
            "base_ball",
            Direction::Falling,
            true,
            move |_s, y, _dy| y.rho.hypot(y.r - rb) - eps,
        ));
    }
    let seed = seed_for(beta, g, tol);
    let body = BodyLeg {
        s_max: tol.s_max,
        events,
    };
    let sol = match construct_tip_solution(&seed, g, &tol.integrator, body) {
        Ok(sol) => sol,
        Err(ToyError::Integrate(e @ IntegrateError::BudgetExhausted { .. })) => {
            return Ok(Classification::undetermined(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(classify_solution(&sol, radius))
}

fn classify_solution(sol: &TipSolution, radius: Option<f64>) -> Classification {
    let samples = sol.samples();
    let min_rho = samples.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_s = samples.last().map_or(0.0, |p| p[0]);

    if sol.tip_leg_end == TipLegEnd::SlopeExtremum {
        let p = sol.point_at_s(0.0).unwrap_or([f64::NAN; 4]);
        return Classification {
            tag: Tag::B,
            s0: Some(0.0),
            terminal_state: vec![p[0], p[1]],
            diagnostics: Diagnostics {
                min_rho: Some(min_rho),
                max_s: Some(max_s),
                base_distance: radius.map(|rb| p[0].hypot(p[1] - rb)),
                rho_second: Some(rho_second_at_critical(p[0], p[1], sol.beta, sol.g())),
                ambiguous: sol.tip_leg.is_ambiguous(),
                note: Some("slope extremum reached in the tip chart".into()),
            },
        };
    }

    let body = sol.body.as_ref().expect("switched tip leg has a body leg");
    let last_state = sol.body_state(body.len() - 1).expect("non-empty body leg");
    let last = vec![last_state.rho, last_state.r];
    let mut diagnostics = Diagnostics {
        min_rho: Some(min_rho),
        max_s: Some(max_s),
        base_distance: radius.map(|rb| last[0].hypot(last[1] - rb)),
        rho_second: None,
        ambiguous: body.is_ambiguous() || sol.tip_leg.is_ambiguous(),
        note: None,
    };
    if diagnostics.ambiguous {
        diagnostics.note = Some("coincident terminal events".into());
        return Classification {
            tag: Tag::Undetermined,
            s0: None,
            terminal_state: last,
            diagnostics,
        };
    }
    let s_end = body.span().1;
    let (tag, s0) = match body.termination() {
        Termination::TerminalEvent { event: 0 } => {
            let d = toy_field(last[0], last[1], sol.beta, sol.g());
            if d[0] < 0.0 {
                (Tag::A, Some(s_end))
            } else {
                diagnostics.note = Some("ρ reached zero with ρ' ≥ 0".into());
                (Tag::Undetermined, None)
            }
        }
        Termination::TerminalEvent { event: 1 } => {
            if last[0] > 0.0 {
                diagnostics.rho_second =
                    Some(rho_second_at_critical(last[0], last[1], sol.beta, sol.g()));
                (Tag::B, Some(s_end))
            } else {
                diagnostics.note = Some("slope minimum with ρ ≤ 0".into());
                (Tag::Undetermined, None)
            }
        }
        Termination::TerminalEvent { .. } => (Tag::XLike, None),
        Termination::ReachedEnd => {
            diagnostics.note = Some("arclength cap reached without an event".into());
            (Tag::Undetermined, None)
        }
    };
    Classification {
        tag,
        s0,
        terminal_state: last,
        diagnostics,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationResult {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_star: f64,
    pub iterations: usize,
    pub witness_lo: Classification,
    pub witness_hi: Classification,
    /// Every classified β with its tag, in evaluation order.
    pub log: Vec<(f64, Tag)>,
    pub audit: Vec<String>,
}

/// Bisects the A/B bracket `[beta_lo, beta_hi]` down to width `beta_tol`.
///
/// The base ball is disabled so every midpoint resolves to A or B. A
/// midpoint that stays Undetermined after one tenfold tolerance tightening
/// replaces the upper end, and the replacement is recorded in `audit`.
pub fn find_bifurcation(
    beta_lo: f64,
    beta_hi: f64,
    g: &GFunction,
    beta_tol: f64,
    tol: &ClassifyTolerances,
) -> Result<BifurcationResult, ClassifyError> {
    if !(beta_tol > 0.0) {
        return Err(ClassifyError::InvalidParameter(
            "beta_tol must be positive".into(),
        ));
    }
    if !(beta_lo < beta_hi) {
        return Err(ClassifyError::InvalidBracket(format!(
            "need beta_lo < beta_hi, got [{beta_lo}, {beta_hi}]"
        )));
    }
    let tol = ClassifyTolerances {
        base_ball: false,
        ..*tol
    };
    let mut log = Vec::new();
    let classify = |beta: f64, log: &mut Vec<(f64, Tag)>| {
        let c = classify_beta(beta, g, &tol)
            .unwrap_or_else(|e| Classification::undetermined(e.to_string()));
        log.push((beta, c.tag));
        c
    };

    let mut w_lo = classify(beta_lo, &mut log);
    let mut w_hi = classify(beta_hi, &mut log);
    if w_lo.tag != Tag::A || w_hi.tag != Tag::B {
        return Err(ClassifyError::InvalidBracket(format!(
            "endpoints classify as {} at {beta_lo} and {} at {beta_hi}; need A and B",
            w_lo.tag, w_hi.tag
        )));
    }

    let (mut lo, mut hi) = (beta_lo, beta_hi);
    let mut iterations = 0;
    let mut audit = Vec::new();
    while hi - lo > beta_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            audit.push(format!(
                "bracket reached floating-point resolution at {mid}"
            ));
            break;
        }
        iterations += 1;
        let mut c = classify(mid, &mut log);
        if c.tag == Tag::Undetermined {
            let tight = tol.tightened(10.0);
            c = classify_beta(mid, g, &tight)
                .unwrap_or_else(|e| Classification::undetermined(e.to_string()));
            log.push((mid, c.tag));
        }
        match c.tag {
            Tag::A => {
                lo = mid;
                w_lo = c;
            }
            Tag::B => {
                hi = mid;
                w_hi = c;
            }
            _ => {
                audit.push(format!(
                    "β = {mid} undetermined after tightening ({}); treated as upper end",
                    c.diagnostics.note.as_deref().unwrap_or("no note")
                ));
                hi = mid;
            }
        }
    }

    let max_a = log
        .iter()
        .filter(|(_, t)| *t == Tag::A)
        .map(|(b, _)| *b)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_b = log
        .iter()
        .filter(|(_, t)| *t == Tag::B)
        .map(|(b, _)| *b)
        .fold(f64::INFINITY, f64::min);
    if max_a >= min_b {
        return Err(ClassifyError::OrderingViolation(format!(
            "A at β = {max_a} lies above B at β = {min_b}"
        )));
    }
    audit.push(format!(
        "interval hypothesis consistent on {} classified points",
        log.len()
    ));

    Ok(BifurcationResult {
        beta_lo: lo,
        beta_hi: hi,
        beta_star: 0.5 * (lo + hi),
        iterations,
        witness_lo: w_lo,
        witness_hi: w_hi,
        log,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub beta: f64,
    pub classification: Result<Classification, String>,
}

impl ScanEntry {
    pub fn tag(&self) -> Tag {
        self.classification
            .as_ref()
            .map_or(Tag::Undetermined, |c| c.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    /// Length of the maximal run of A at the start of the grid.
    pub a_prefix: usize,
    /// Length of the maximal run of B at the end of the grid.
    pub b_suffix: usize,
    /// Grid indices outside the A prefix and the B suffix.
    pub violations: Vec<usize>,
}

impl ScanReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn partition_structure(tags: &[Tag]) -> (usize, usize, Vec<usize>) {
    let n = tags.len();
    let a_prefix = tags.iter().take_while(|t| **t == Tag::A).count();
    let b_suffix = tags[a_prefix..]
        .iter()
        .rev()
        .take_while(|t| **t == Tag::B)
        .count();
    let violations = (a_prefix..n - b_suffix).collect();
    (a_prefix, b_suffix, violations)
}

/// Classifies every β of an ascending grid in parallel.
pub fn scan_beta(
    grid: &[f64],
    g: &GFunction,
    tol: &ClassifyTolerances,
) -> Result<ScanReport, ClassifyError> {
    if grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(ClassifyError::InvalidParameter(
            "β grid must be strictly ascending".into(),
        ));
    }
    let entries: Vec<ScanEntry> = grid
        .par_iter()
        .map(|&beta| ScanEntry {
            beta,
            classification: classify_beta(beta, g, tol).map_err(|e| e.to_string()),
        })
        .collect();
    let tags: Vec<Tag> = entries.iter().map(ScanEntry::tag).collect();
    let (a_prefix, b_suffix, violations) = partition_structure(&tags);
    Ok(ScanReport {
        entries,
        a_prefix,
        b_suffix,
        violations,
    })
}

/// `ϱ(r, β)` on `r_grid`.
pub fn varrho_sample(
    beta: f64,
    g: &GFunction,
    r_grid: &[f64],
    tol: &ClassifyTolerances,
) -> Result<Vec<f64>, ClassifyError> {
    let sol = tip_solution(beta, g, tol)?;
    r_grid
        .iter()
        .map(|&r| sol.rho_at_r(r).map_err(ClassifyError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOrdering {
    pub beta1: f64,
    pub beta2: f64,
    /// Grid points inside the shared monotone span.
    pub compared: usize,
    pub rho_violations: Vec<f64>,
    /// Smallest `ϱ(r, β₂) − ϱ(r, β₁)` over the compared points.
    pub min_gap: f64,
    pub radius1: f64,
    pub radius2: f64,
    pub radius_ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub pairs: Vec<PairOrdering>,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.pairs
            .iter()
            .all(|p| p.compared > 0 && p.rho_violations.is_empty() && p.radius_ordered)
    }
}

/// Checks `ϱ(r, β₁) < ϱ(r, β₂)` on the shared span and `R(β₁) > R(β₂)` for each pair.
///
/// If both held for two X-like parameters, the trajectory with the smaller
/// β would have to cross the other one to reach its larger base radius.
pub fn ordering_check(
    pairs: &[(f64, f64)],
    g: &GFunction,
    r_grid: &[f64],
    tol: &ClassifyTolerances,
) -> Result<OrderingReport, ClassifyError> {
    let mut out = Vec::with_capacity(pairs.len());
    for &(b1, b2) in pairs {
        if !(b1 < b2 && b1 > 0.0) {
            return Err(ClassifyError::InvalidParameter(format!(
                "pair ({b1}, {b2}) must satisfy 0 < β₁ < β₂"
            )));
        }
        let s1 = tip_solution(b1, g, tol)?;
        let s2 = tip_solution(b2, g, tol)?;
        let (lo1, hi1) = s1.r_span();
        let (lo2, hi2) = s2.r_span();
        let (lo, hi) = (lo1.max(lo2), hi1.min(hi2));
        let mut compared = 0;
        let mut rho_violations = Vec::new();
        let mut min_gap = f64::INFINITY;
        for &r in r_grid.iter().filter(|&&r| r >= lo && r <= hi) {
            let gap = s2.rho_at_r(r)? - s1.rho_at_r(r)?;
            compared += 1;
            min_gap = min_gap.min(gap);
            if !(gap > 0.0) {
                rho_violations.push(r);
            }
        }
        let radius1 = base_radius(b1, g)?;
        let radius2 = base_radius(b2, g)?;
        out.push(PairOrdering {
            beta1: b1,
            beta2: b2,
            compared,
            rho_violations,
            min_gap,
            radius1,
            radius2,
            radius_ordered: radius1 > radius2,
        });
    }
    Ok(OrderingReport { pairs: out })
}

/// Central difference of `ϱ(r, ·)` at `beta` with step `h`.
pub fn drho_dbeta(
    r: f64,
    beta: f64,
    h: f64,
    g: &GFunction,
    tol: &ClassifyTolerances,
) -> Result<f64, ClassifyError> {
    let up = tip_solution(beta + h, g, tol)?.rho_at_r(r)?;
    let down = tip_solution(beta - h, g, tol)?.rho_at_r(r)?;
    Ok((up - down) / (2.0 * h))
}

/// Central difference of `R(·)` at `beta` with step `h`.
pub fn dradius_dbeta(beta: f64, h: f64, g: &GFunction) -> Result<f64, ClassifyError> {
    Ok((base_radius(beta + h, g)? - base_radius(beta - h, g)?) / (2.0 * h))
}
