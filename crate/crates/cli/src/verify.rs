//! Invariant suites run by `verify`.

use serde::{Deserialize, Serialize};
use tipshoot_core::bats::{
    bats_classified_trajectory, bats_trajectory, psi_residual, tip_eta0, BatsTrajectory,
    ViscosityFn,
};
use tipshoot_core::classify::{
    dradius_dbeta, drho_dbeta, ordering_check, tip_solution, ClassifyTolerances,
};
use tipshoot_core::integrate::{integrate, IntegratorConfig};
use tipshoot_core::shape::umbilical_check;
use tipshoot_core::toy::{
    default_g_grid, equilibrium_analysis, etaw_rhs, g_check, phi, phi_inv, toy_rhs, EtaWState,
    GFunction, TipSeed, ToyState,
};

use crate::config::VerifySection;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity compared against `threshold`.
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value < threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: detail.into(),
        }
    }

    fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value: None,
            threshold: None,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self::flag(name, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub checks: Vec<Check>,
    /// The suite stopped after a failed precondition.
    pub aborted: bool,
}

impl Suite {
    pub fn passed(&self) -> bool {
        !self.aborted && self.checks.iter().all(|c| c.passed)
    }
}

fn run(name: &str, f: impl FnOnce() -> Result<Check, String>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, e))
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(
        0.0,
        |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) },
    )
}

pub fn toy_suite(g: &GFunction, sec: &VerifySection, tol: &ClassifyTolerances) -> Suite {
    let rep = g_check(g, &default_g_grid());
    let mut checks = vec![Check::flag(
        "g_check",
        rep.passed(),
        if rep.passed() {
            "g is positive, nondecreasing and divergent".to_string()
        } else {
            rep.failures.join("; ")
        },
    )];
    if !rep.passed() {
        return Suite {
            checks,
            aborted: true,
        };
    }
    let betas = &sec.betas;

    let err = max_abs(betas.iter().flat_map(|&b| {
        let a = equilibrium_analysis(b, g);
        [a.fd_eigenvalues[0] + 0.5, a.fd_eigenvalues[1] - 2.0]
    }));
    checks.push(Check::below(
        "equilibrium_eigenvalues",
        err,
        1e-8,
        "finite-difference eigenvalues at q0 against (-1/2, 2)",
    ));

    let cross = max_abs(betas.iter().map(|&b| {
        let a = equilibrium_analysis(b, g);
        let v = [1.0 / 18.0 - b * g.g(0.0), 15.0];
        let n = v[0].hypot(v[1]);
        let u = a.fd_unstable_direction;
        v[0] / n * u[1] - v[1] / n * u[0]
    }));
    checks.push(Check::below(
        "unstable_direction",
        cross,
        1e-8,
        "cross product with (1/18 - beta g(0), 15)",
    ));

    checks.push(run("transform_round_trip", || {
        let mut worst: f64 = 0.0;
        for i in 1..20 {
            for j in 1..20 {
                let x = ToyState {
                    rho: i as f64 / 20.0,
                    r: 0.25 * j as f64,
                };
                let y = phi_inv(phi(x).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
                worst = worst
                    .max((y.rho - x.rho).abs())
                    .max((y.r - x.r).abs() / x.r);
            }
        }
        Ok(Check::below(
            "transform_round_trip",
            worst,
            1e-12,
            "phi_inv(phi(x)) on a 19x19 grid",
        ))
    }));

    checks.push(run("transform_consistency", || {
        let mut worst: f64 = 0.0;
        for &b in betas {
            for i in 1..10 {
                for j in 1..10 {
                    let (rho, r) = (i as f64 / 10.0, 0.5 * j as f64);
                    let d = toy_rhs(ToyState { rho, r }, b, g).map_err(|e| e.to_string())?;
                    let c = (1.0 - rho * rho).sqrt();
                    let deta = -rho * d[0] / (c * r) - c * d[1] / (r * r);
                    let q = phi(ToyState { rho, r }).map_err(|e| e.to_string())?;
                    let e = etaw_rhs(q, b, g).map_err(|e| e.to_string())?;
                    let rel = (e[0] * rho / r - deta).abs() / deta.abs().max(1.0);
                    worst = worst.max(rel);
                }
            }
        }
        Ok(Check::below(
            "transform_consistency",
            worst,
            1e-10,
            "(eta, w) field against the chain rule applied to the (rho, r) field",
        ))
    }));

    checks.push(run("w_exponential_growth", || {
        let b = betas.iter().copied().fold(0.0, f64::max);
        let st = TipSeed::new(b, g).start();
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| match etaw_rhs(
            EtaWState { eta: y[0], w: y[1] },
            b,
            g,
        ) {
            Ok(d) => dy.copy_from_slice(&d),
            Err(_) => dy.fill(f64::NAN),
        };
        let cfg = IntegratorConfig {
            atol: 1e-20,
            ..tol.integrator
        };
        let tr = integrate(&rhs, &[st.eta, st.w], 0.0, 5.0, &[], &[], &cfg)
            .map_err(|e| e.to_string())?;
        let worst =
            max_abs((0..tr.len()).map(|i| tr.state(i)[1] / (st.w * (2.0 * tr.x(i)).exp()) - 1.0));
        Ok(Check::below(
            "w_exponential_growth",
            worst,
            1e-8,
            format!("relative error of w against c e^(2t) over t in [0, 5], beta = {b}"),
        ))
    }));

    let sols: Vec<_> = betas
        .iter()
        .map(|&b| (b, tip_solution(b, g, tol)))
        .collect();
    checks.push(run("tip_curvature_at_switch", || {
        let mut worst: f64 = 0.0;
        for (b, s) in &sols {
            let s = s.as_ref().map_err(|e| format!("beta = {b}: {e}"))?;
            let sw = s.switch;
            worst = worst.max(((1.0 - sw.rho * sw.rho).sqrt() / sw.r - 1.0 / 3.0).abs());
        }
        Ok(Check::below(
            "tip_curvature_at_switch",
            worst,
            1e-3,
            "|sqrt(1 - rho^2)/r - 1/3| at the coordinate switch",
        ))
    }));

    checks.push(run("toy_umbilical", || {
        let mut worst: f64 = 0.0;
        for (b, s) in &sols {
            let s = s.as_ref().map_err(|e| format!("beta = {b}: {e}"))?;
            let u = umbilical_check(s);
            let lim = u.ratio_limit.ok_or(format!("beta = {b}: {}", u.message))?;
            worst = worst.max((lim - 1.0).abs());
        }
        Ok(Check::below(
            "toy_umbilical",
            worst,
            1e-3,
            "kappa_s/kappa_phi extrapolated to the tip",
        ))
    }));

    for &[b1, b2] in &sec.pairs {
        let name = format!("varrho_ordering({b1}, {b2})");
        checks.push(run(&name, || {
            let hi = [b1, b2]
                .iter()
                .map(|&b| tip_solution(b, g, tol).map(|s| s.r_span().1))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let n = sec.r_samples.max(1);
            let grid: Vec<f64> = (1..=n).map(|k| 0.99 * hi * k as f64 / n as f64).collect();
            let rep = ordering_check(&[(b1, b2)], g, &grid, tol).map_err(|e| e.to_string())?;
            let p = &rep.pairs[0];
            let mut c = Check::flag(
                &name,
                rep.passed() && p.compared == n,
                format!(
                    "{} of {n} shared r samples compared, {} violations, R({b1}) = {}, R({b2}) = {}",
                    p.compared,
                    p.rho_violations.len(),
                    p.radius1,
                    p.radius2
                ),
            );
            c.value = Some(p.min_gap);
            Ok(c)
        }));
        let name = format!("derivative_signs({b1}, {b2})");
        checks.push(run(&name, || {
            let h = 1e-4 * b1;
            let hi = tip_solution(b1 + h, g, tol)
                .and_then(|a| Ok(a.r_span().1.min(tip_solution(b1 - h, g, tol)?.r_span().1)))
                .map_err(|e| e.to_string())?;
            let mut min_drho = f64::INFINITY;
            for k in 1..=4 {
                let r = 0.2 * k as f64 * hi;
                min_drho = min_drho.min(drho_dbeta(r, b1, h, g, tol).map_err(|e| e.to_string())?);
            }
            let dr = dradius_dbeta(b1, h, g).map_err(|e| e.to_string())?;
            let mut c = Check::flag(
                &name,
                min_drho > 0.0 && dr < 0.0,
                format!("min d(varrho)/d(beta) = {min_drho:e}, dR/d(beta) = {dr:e} at beta = {b1}"),
            );
            c.value = Some(min_drho);
            Ok(c)
        }));
    }

    Suite {
        checks,
        aborted: false,
    }
}

pub fn bats_suite(mu: &ViscosityFn, sec: &VerifySection, tol: &ClassifyTolerances) -> Suite {
    let rep = mu.check();
    let mut checks = vec![Check::flag(
        "viscosity_check",
        rep.passed(),
        if rep.passed() {
            "mu is positive, increasing and divergent".to_string()
        } else {
            rep.failures.join("; ")
        },
    )];
    if !rep.passed() {
        return Suite {
            checks,
            aborted: true,
        };
    }
    let runs: Vec<_> = sec
        .alphas
        .iter()
        .map(|&a| (a, bats_classified_trajectory(a, mu, tol)))
        .collect();
    let each = |name: &str,
                threshold: f64,
                detail: &str,
                f: &dyn Fn(&BatsTrajectory) -> Result<f64, String>| {
        run(name, || {
            let mut worst: f64 = 0.0;
            for (a, r) in &runs {
                let r = r.as_ref().map_err(|e| format!("{a:?}: {e}"))?;
                worst = worst.max(f(r).map_err(|e| format!("{a:?}: {e}"))?);
            }
            Ok(Check::below(name, worst, threshold, detail))
        })
    };

    checks.push(each(
        "psi_residual",
        1e-6,
        "max relative residual of Psi Gamma against the integral of r h",
        &|r| Ok(psi_residual(r)),
    ));
    checks.push(each(
        "tip_h_prime",
        1e-3,
        "|h' r| / h0 over the first five steps",
        &|r| {
            Ok((0..5.min(r.len()))
                .map(|i| (r.derivative(i)[2] * r.state(i).r).abs() / r.alpha.h0)
                .fold(0.0, f64::max))
        },
    ));
    checks.push(each(
        "bats_umbilical",
        1e-3,
        "kappa_s/kappa_phi extrapolated to the tip",
        &|r| {
            let u = umbilical_check(r);
            u.ratio_limit.map(|l| (l - 1.0).abs()).ok_or(u.message)
        },
    ));
    checks.push(each(
        "tip_eta0",
        1e-3,
        "relative gap between extrapolated kappa_phi and 2 z0^2 / (3 mu(h0 z0^2))",
        &|r| {
            let u = umbilical_check(r);
            let e = u.eta0_limit.ok_or(u.message)?;
            Ok((e / tip_eta0(r.alpha, mu) - 1.0).abs())
        },
    ));
    checks.push(each(
        "r_init_halving",
        1e-5,
        "shift of r-matched (rho, z) samples when r_init is halved",
        &|r| {
            let half = bats_trajectory(r.alpha, mu, r.r_init / 2.0, tol.s_max, true, tol)
                .map_err(|e| e.to_string())?;
            let top = r.state(r.len() - 1).r.min(half.state(half.len() - 1).r);
            let mut worst: f64 = 0.0;
            for k in 1..10 {
                let target = top * k as f64 / 10.0;
                let (Some(sa), Some(sb)) = (r.s_at_r(target), half.s_at_r(target)) else {
                    return Err(format!("r = {target} not reached"));
                };
                let p = r.state_at(sa).map_err(|e| e.to_string())?;
                let q = half.state_at(sb).map_err(|e| e.to_string())?;
                worst = worst.max((p.rho - q.rho).abs()).max((p.z - q.z).abs());
            }
            Ok(worst)
        },
    ));
    Suite {
        checks,
        aborted: false,
    }
}

pub fn validate(sec: &VerifySection) -> Result<(), CliError> {
    if sec.betas.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(CliError::ConfigInvalid(
            "verify betas must be finite and non-negative".into(),
        ));
    }
    if sec.pairs.iter().any(|[a, b]| !(*a > 0.0 && a < b)) {
        return Err(CliError::ConfigInvalid(
            "verify pairs need 0 < beta1 < beta2".into(),
        ));
    }
    if sec.betas.is_empty() && sec.alphas.is_empty() {
        return Err(CliError::ConfigInvalid(
            "verify has nothing to check".into(),
        ));
    }
    Ok(())
}
