//! Cell profiles `(r(s), z(s))` and principal curvatures.
//!
//! The meridional curvature is `κ_s = −ρ'/√(1 − ρ²)` and the azimuthal one
//! is `κ_φ = √(1 − ρ²)/r`. Both are evaluated from the `z' = √(1 − ρ²)` value
//! supplied by the trajectory, which the angle charts deliver without
//! cancellation near the tip.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bats::BatsTrajectory;
use crate::toy::TipSolution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("phase space violation at s = {s}: ρ = {rho}, r = {r}")]
    PhaseSpaceViolation { s: f64, rho: f64, r: f64 },
    #[error("curve evaluation failed at s = {s}: {msg}")]
    Evaluation { s: f64, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeridianPoint {
    pub s: f64,
    pub rho: f64,
    pub r: f64,
    /// `√(1 − ρ²)`
    pub z_prime: f64,
    /// `dρ/ds`
    pub rho_s: f64,
}

/// A meridian curve parameterized by arclength.
pub trait MeridianCurve {
    /// Increasing arclength values of the stored samples.
    fn knots(&self) -> Vec<f64>;
    fn point(&self, s: f64) -> Result<MeridianPoint, ShapeError>;
    fn default_z_start(&self) -> f64 {
        0.0
    }
}

impl MeridianCurve for TipSolution {
    fn knots(&self) -> Vec<f64> {
        self.samples().iter().map(|p| p[0]).collect()
    }

    fn point(&self, s: f64) -> Result<MeridianPoint, ShapeError> {
        let p = self.point_at_s(s).map_err(|e| ShapeError::Evaluation {
            s,
            msg: e.to_string(),
        })?;
        Ok(MeridianPoint {
            s,
            rho: p[0],
            r: p[1],
            z_prime: p[2],
            rho_s: p[3],
        })
    }
}

impl MeridianCurve for BatsTrajectory {
    fn knots(&self) -> Vec<f64> {
        self.traj.xs().to_vec()
    }

    fn point(&self, s: f64) -> Result<MeridianPoint, ShapeError> {
        let p = self.point_at(s).map_err(|e| ShapeError::Evaluation {
            s,
            msg: e.to_string(),
        })?;
        Ok(MeridianPoint {
            s,
            rho: p[0],
            r: p[1],
            z_prime: p[2],
            rho_s: p[3],
        })
    }

    fn default_z_start(&self) -> f64 {
        self.state(0).z
    }
}

/// A curve given by a closure `s ↦ (ρ, r, ρ')` on fixed knots.
pub struct FnCurve<F> {
    pub knots: Vec<f64>,
    pub f: F,
}

impl<F: Fn(f64) -> (f64, f64, f64)> MeridianCurve for FnCurve<F> {
    fn knots(&self) -> Vec<f64> {
        self.knots.clone()
    }

    fn point(&self, s: f64) -> Result<MeridianPoint, ShapeError> {
        let (rho, r, rho_s) = (self.f)(s);
        Ok(MeridianPoint {
            s,
            rho,
            r,
            z_prime: (1.0 - rho * rho).max(0.0).sqrt(),
            rho_s,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub s: f64,
    pub r: f64,
    pub z: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub samples: Vec<ProfileSample>,
    /// Extrapolated tip curvature, when tip data is available.
    pub eta0_estimate: Option<f64>,
    /// `κ_s/κ_φ` at the smallest sampled `s`.
    pub umbilical_ratio_at_min_s: Option<f64>,
}

// 5-point Gauss–Legendre nodes and weights on [−1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn checked(p: MeridianPoint) -> Result<MeridianPoint, ShapeError> {
    if p.rho > -1.0 && p.rho < 1.0 && p.r > 0.0 && p.z_prime.is_finite() {
        Ok(p)
    } else {
        Err(ShapeError::PhaseSpaceViolation {
            s: p.s,
            rho: p.rho,
            r: p.r,
        })
    }
}

/// `z(s) = z_start + ∫ √(1 − ρ²) ds`, integrated between knots by Gauss–Legendre quadrature.
pub fn reconstruct_profile(
    curve: &dyn MeridianCurve,
    z_start: Option<f64>,
) -> Result<Profile, ShapeError> {
    let knots = curve.knots();
    let mut z = z_start.unwrap_or_else(|| curve.default_z_start());
    let mut samples = Vec::with_capacity(knots.len());
    for (i, &s) in knots.iter().enumerate() {
        if i > 0 {
            let a = knots[i - 1];
            let (mid, half) = (0.5 * (a + s), 0.5 * (s - a));
            let mut acc = 0.0;
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                acc += w * checked(curve.point(mid + half * x)?)?.z_prime;
            }
            z += half * acc;
        }
        let p = checked(curve.point(s)?)?;
        samples.push(ProfileSample {
            s,
            r: p.r,
            z,
            rho: p.rho,
        });
    }
    let tip = umbilical_check(curve);
    Ok(Profile {
        samples,
        eta0_estimate: tip.eta0_limit,
        umbilical_ratio_at_min_s: tip.samples.first().map(|t| t.ratio),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePair {
    pub kappa_s: f64,
    pub kappa_phi: f64,
}

pub fn curvatures(rho: f64, r: f64, rho_prime: f64) -> Result<CurvaturePair, ShapeError> {
    if !(rho > -1.0 && rho < 1.0 && r > 0.0) {
        return Err(ShapeError::PhaseSpaceViolation {
            s: f64::NAN,
            rho,
            r,
        });
    }
    let c = (1.0 - rho * rho).sqrt();
    Ok(CurvaturePair {
        kappa_s: -rho_prime / c,
        kappa_phi: c / r,
    })
}

/// Curvatures from a curve point, using its `z'` directly.
pub fn point_curvatures(p: &MeridianPoint) -> Result<CurvaturePair, ShapeError> {
    let p = checked(*p)?;
    Ok(CurvaturePair {
        kappa_s: -p.rho_s / p.z_prime,
        kappa_phi: p.z_prime / p.r,
    })
}

/// Samples with `z' ≤ TIP_ZP` count as tip data.
pub const TIP_ZP: f64 = 0.05;
/// Number of tip samples, closest to the tip, used for extrapolation.
pub const TIP_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipSample {
    pub s: f64,
    pub z_prime: f64,
    pub kappa_s: f64,
    pub kappa_phi: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmbilicalReport {
    /// Tip samples in order of increasing `s`.
    pub samples: Vec<TipSample>,
    /// Intercept of a linear fit of `κ_s/κ_φ` against `z'²` over the first tip samples.
    pub ratio_limit: Option<f64>,
    /// Intercept of a linear fit of `κ_φ` against `z'²`.
    pub eta0_limit: Option<f64>,
    pub passed: bool,
    pub message: String,
}

fn intercept(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    my - sxy / sxx * mx
}

/// Extrapolates `κ_s/κ_φ` to the tip; passes when the limit is within `1e-3` of one.
pub fn umbilical_check(curve: &dyn MeridianCurve) -> UmbilicalReport {
    let mut samples = Vec::new();
    for s in curve.knots() {
        let Ok(p) = curve.point(s) else { continue };
        if !(p.z_prime > 0.0 && p.z_prime <= TIP_ZP) {
            continue;
        }
        if let Ok(k) = point_curvatures(&p) {
            samples.push(TipSample {
                s,
                z_prime: p.z_prime,
                kappa_s: k.kappa_s,
                kappa_phi: k.kappa_phi,
                ratio: k.kappa_s / k.kappa_phi,
            });
        }
    }
    if samples.len() < 3 {
        return UmbilicalReport {
            samples,
            ratio_limit: None,
            eta0_limit: None,
            passed: false,
            message: "insufficient tip data".into(),
        };
    }
    let fit = &samples[..samples.len().min(TIP_FIT_SAMPLES)];
    let xs: Vec<f64> = fit.iter().map(|t| t.z_prime * t.z_prime).collect();
    let ratios: Vec<f64> = fit.iter().map(|t| t.ratio).collect();
    let kphi: Vec<f64> = fit.iter().map(|t| t.kappa_phi).collect();
    let limit = intercept(&xs, &ratios);
    let eta0 = intercept(&xs, &kphi);
    let passed = (limit - 1.0).abs() <= 1e-3;
    UmbilicalReport {
        samples,
        ratio_limit: Some(limit),
        eta0_limit: Some(eta0),
        passed,
        message: format!("κ_s/κ_φ → {limit:.9}, κ_φ → {eta0:.9}"),
    }
}
