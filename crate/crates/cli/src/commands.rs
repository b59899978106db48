//! classify, bisect, sweep and profile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tipshoot_core::bats::{
    alpha_sweep, bats_classified_trajectory, bats_classify, AlphaParam, AlphaSweep, ViscosityFn,
};
use tipshoot_core::classify::{
    classify_beta, find_bifurcation, scan_beta, tip_solution, BifurcationResult, Classification,
    ClassifyError, ScanReport, Tag,
};
use tipshoot_core::shape::{reconstruct_profile, MeridianCurve, Profile};
use tipshoot_core::toy::{default_g_grid, g_check, GFunction};

use crate::config::{Format, GridSpec, Model, RunConfig};
use crate::output::{num, opt_num, Ctx, ResultRecord};
use crate::{svg, CliError, ExitStatus};

/// Echo of the parameters a record answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Input {
    Beta {
        beta: f64,
    },
    Alpha {
        h0: f64,
        z0: f64,
    },
    Bracket {
        lo: f64,
        hi: f64,
        beta_tol: f64,
        auto: bool,
    },
    BetaGrid {
        beta: Vec<f64>,
    },
    AlphaGrid {
        h0: Vec<f64>,
        z0: Vec<f64>,
        h0_rel_tol: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    pub classification: Option<Classification>,
    pub error: Option<String>,
}

pub type ClassifyRecord = ResultRecord<Input, ClassifyOutcome>;

fn checked_g(cfg: &RunConfig) -> Result<&GFunction, CliError> {
    let g = cfg.g()?;
    let rep = g_check(g, &default_g_grid());
    if !rep.passed() {
        return Err(CliError::ConfigInvalid(format!(
            "g fails its conditions: {}",
            rep.failures.join("; ")
        )));
    }
    Ok(g)
}

fn checked_mu(cfg: &RunConfig) -> Result<&ViscosityFn, CliError> {
    let mu = cfg.mu()?;
    let rep = mu.check();
    if !rep.passed() {
        return Err(CliError::ConfigInvalid(format!(
            "μ fails its conditions: {}",
            rep.failures.join("; ")
        )));
    }
    Ok(mu)
}

const CLASSIFY_COLUMNS: [&str; 8] = [
    "tag",
    "s0",
    "min_rho",
    "max_s",
    "base_distance",
    "rho_second",
    "ambiguous",
    "note",
];

fn classify_columns(o: &ClassifyOutcome) -> Vec<String> {
    match (&o.classification, &o.error) {
        (Some(c), _) => vec![
            c.tag.to_string(),
            opt_num(c.s0),
            opt_num(c.diagnostics.min_rho),
            opt_num(c.diagnostics.max_s),
            opt_num(c.diagnostics.base_distance),
            opt_num(c.diagnostics.rho_second),
            c.diagnostics.ambiguous.to_string(),
            c.diagnostics.note.clone().unwrap_or_default(),
        ],
        (None, e) => {
            let mut v = vec!["error".to_string()];
            v.extend(std::iter::repeat_n(String::new(), 6));
            v.push(e.clone().unwrap_or_default());
            v
        }
    }
}

fn status_of(tags: impl Iterator<Item = Option<Tag>>) -> ExitStatus {
    let mut status = ExitStatus::Clean;
    for t in tags {
        match t {
            None => return ExitStatus::Failed,
            Some(Tag::Undetermined) => status = ExitStatus::Undetermined,
            _ => {}
        }
    }
    status
}

pub fn classify(cfg: &RunConfig, ctx: &Ctx, format: Format) -> Result<ExitStatus, CliError> {
    let sec = cfg.classify.clone().unwrap_or_default();
    let tol = cfg.tolerances;
    let records: Vec<ClassifyRecord> = match cfg.model {
        Model::Toy => {
            let g = checked_g(cfg)?;
            let betas = sec.beta.filter(|b| !b.is_empty()).ok_or_else(|| {
                CliError::ConfigInvalid("[classify] needs a non-empty `beta` list".into())
            })?;
            betas
                .par_iter()
                .map(|&beta| {
                    let r = classify_beta(beta, g, &tol);
                    ResultRecord::new(ctx, Input::Beta { beta }, outcome(r))
                })
                .collect()
        }
        Model::Bats => {
            let mu = checked_mu(cfg)?;
            let alphas = sec.alpha.filter(|a| !a.is_empty()).ok_or_else(|| {
                CliError::ConfigInvalid("[classify] needs a non-empty `alpha` list".into())
            })?;
            alphas
                .par_iter()
                .map(|&a| {
                    let r = bats_classify(a, mu, &tol);
                    ResultRecord::new(ctx, Input::Alpha { h0: a.h0, z0: a.z0 }, outcome(r))
                })
                .collect()
        }
    };
    for r in &records {
        let tag = r.payload.classification.as_ref().map(|c| c.tag);
        log::info!("{:?} -> {:?}", r.input, tag);
    }

    if format.csv() {
        let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match cfg.model {
            Model::Toy => (
                std::iter::once("beta").chain(CLASSIFY_COLUMNS).collect(),
                records
                    .iter()
                    .map(|r| {
                        let Input::Beta { beta } = r.input else {
                            unreachable!()
                        };
                        let mut row = vec![num(beta)];
                        row.extend(classify_columns(&r.payload));
                        row
                    })
                    .collect(),
            ),
            Model::Bats => (
                ["h0", "z0"].into_iter().chain(CLASSIFY_COLUMNS).collect(),
                records
                    .iter()
                    .map(|r| {
                        let Input::Alpha { h0, z0 } = r.input else {
                            unreachable!()
                        };
                        let mut row = vec![num(h0), num(z0)];
                        row.extend(classify_columns(&r.payload));
                        row
                    })
                    .collect(),
            ),
        };
        ctx.write_csv("results.csv", &header, &rows)?;
    }
    if format.json() {
        ctx.write_json("results.json", &records)?;
    }
    Ok(status_of(
        records
            .iter()
            .map(|r| r.payload.classification.as_ref().map(|c| c.tag)),
    ))
}

fn outcome<E: std::fmt::Display>(r: Result<Classification, E>) -> ClassifyOutcome {
    match r {
        Ok(c) => ClassifyOutcome {
            classification: Some(c),
            error: None,
        },
        Err(e) => ClassifyOutcome {
            classification: None,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectOutcome {
    pub bifurcation: BifurcationResult,
    /// Probe scan used to find the bracket, when auto-bracketing.
    pub probe: Option<Vec<(f64, Tag)>>,
}

/// First adjacent A→B pair of a probe scan.
pub fn auto_bracket(report: &ScanReport) -> Option<(f64, f64)> {
    report.entries.windows(2).find_map(|w| {
        (w[0].tag() == Tag::A && w[1].tag() == Tag::B).then_some((w[0].beta, w[1].beta))
    })
}

pub fn bisect(cfg: &RunConfig, ctx: &Ctx, format: Format) -> Result<ExitStatus, CliError> {
    let sec = cfg
        .bisect
        .clone()
        .ok_or_else(|| CliError::ConfigInvalid("missing [bisect] section".into()))?;
    if !(sec.beta_tol > 0.0 && sec.beta_tol.is_finite()) {
        return Err(CliError::ConfigInvalid(format!(
            "beta_tol must be positive, got {}",
            sec.beta_tol
        )));
    }
    let g = checked_g(cfg)?;
    let tol = cfg.tolerances;
    let (lo, hi, probe) = match (sec.bracket, sec.auto_bracket) {
        (Some([lo, hi]), false) => (lo, hi, None),
        (None, true) => {
            let grid = sec.probe.points()?;
            let rep = scan_beta(&grid, g, &tol)?;
            let tags: Vec<(f64, Tag)> = rep.entries.iter().map(|e| (e.beta, e.tag())).collect();
            let (lo, hi) = auto_bracket(&rep).ok_or_else(|| {
                CliError::InvalidBracket(format!("probe scan found no adjacent A/B pair: {tags:?}"))
            })?;
            log::info!("auto bracket [{lo:e}, {hi:e}]");
            (lo, hi, Some(tags))
        }
        (Some(_), true) => {
            return Err(CliError::ConfigInvalid(
                "give either `bracket` or `auto_bracket`, not both".into(),
            ))
        }
        (None, false) => {
            return Err(CliError::ConfigInvalid(
                "[bisect] needs `bracket` or `auto_bracket = true`".into(),
            ))
        }
    };
    let res = match find_bifurcation(lo, hi, g, sec.beta_tol, &tol) {
        Ok(r) => r,
        Err(ClassifyError::InvalidBracket(msg)) => return Err(CliError::InvalidBracket(msg)),
        Err(e) => return Err(e.into()),
    };
    log::info!(
        "β* = {:e} in [{:e}, {:e}] after {} steps",
        res.beta_star,
        res.beta_lo,
        res.beta_hi,
        res.iterations
    );
    let beta_star = res.beta_star;
    let rec = ResultRecord::new(
        ctx,
        Input::Bracket {
            lo,
            hi,
            beta_tol: sec.beta_tol,
            auto: sec.auto_bracket,
        },
        BisectOutcome {
            bifurcation: res,
            probe,
        },
    );
    ctx.write_json("results.json", &rec)?;
    if format.csv() {
        let rows: Vec<Vec<String>> = rec
            .payload
            .bifurcation
            .log
            .iter()
            .map(|(b, t)| vec![num(*b), t.to_string()])
            .collect();
        ctx.write_csv("results.csv", &["beta", "tag"], &rows)?;
    }
    let sol = tip_solution(beta_star, g, &tol)?;
    let prof = reconstruct_profile(&sol, None)?;
    ctx.write_text(
        "profile.svg",
        &profile_svg(
            ctx,
            &format!("near-critical toy profile, β = {beta_star:.10}"),
            &prof,
        ),
    )?;
    Ok(ExitStatus::Clean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SweepOutcome {
    Toy(ScanReport),
    Bats(AlphaSweep),
}

pub fn sweep(cfg: &RunConfig, ctx: &Ctx, format: Format) -> Result<ExitStatus, CliError> {
    let sec = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::ConfigInvalid("missing [sweep] section".into()))?;
    let tol = cfg.tolerances;
    let need = |g: Option<GridSpec>, name: &str| {
        g.ok_or_else(|| CliError::ConfigInvalid(format!("[sweep] needs a `{name}` grid")))?
            .points()
    };
    match cfg.model {
        Model::Toy => {
            let g = checked_g(cfg)?;
            let grid = need(sec.beta, "beta")?;
            let rep = scan_beta(&grid, g, &tol)?;
            log::info!(
                "A prefix {}, B suffix {}, violations {:?}",
                rep.a_prefix,
                rep.b_suffix,
                rep.violations
            );
            let tags: Vec<Tag> = rep.entries.iter().map(|e| e.tag()).collect();
            if format.csv() {
                let rows: Vec<Vec<String>> = rep
                    .entries
                    .iter()
                    .map(|e| match &e.classification {
                        Ok(c) => vec![
                            num(e.beta),
                            c.tag.to_string(),
                            opt_num(c.s0),
                            c.diagnostics.note.clone().unwrap_or_default(),
                        ],
                        Err(msg) => vec![num(e.beta), "error".into(), String::new(), msg.clone()],
                    })
                    .collect();
                ctx.write_csv("results.csv", &["beta", "tag", "s0", "note"], &rows)?;
            }
            ctx.write_text(
                "region.svg",
                &svg::strip(&ctx.hash, "toy β classification", &grid, &tags),
            )?;
            let failed = rep.entries.iter().any(|e| e.classification.is_err());
            let rec =
                ResultRecord::new(ctx, Input::BetaGrid { beta: grid }, SweepOutcome::Toy(rep));
            if format.json() {
                ctx.write_json("results.json", &rec)?;
            }
            Ok(if failed {
                ExitStatus::Failed
            } else {
                status_of(tags.into_iter().map(Some))
            })
        }
        Model::Bats => {
            let mu = checked_mu(cfg)?;
            let h0 = need(sec.h0, "h0")?;
            let z0 = need(sec.z0, "z0")?;
            if !(sec.h0_rel_tol > 0.0) {
                return Err(CliError::ConfigInvalid(
                    "h0_rel_tol must be positive".into(),
                ));
            }
            let sw = alpha_sweep(&h0, &z0, mu, &tol, sec.h0_rel_tol)?;
            log::info!("case {:?}, {} boundary points", sw.case, sw.boundary.len());
            if format.csv() {
                let rows: Vec<Vec<String>> = sw
                    .cells
                    .iter()
                    .map(|c| {
                        vec![
                            num(c.h0),
                            num(c.z0),
                            c.tag.to_string(),
                            opt_num(c.s0),
                            c.error.clone().unwrap_or_default(),
                        ]
                    })
                    .collect();
                ctx.write_csv("results.csv", &["h0", "z0", "tag", "s0", "error"], &rows)?;
            }
            let tags: Vec<Tag> = sw.cells.iter().map(|c| c.tag).collect();
            let line: Vec<(f64, f64)> = sw.boundary.iter().map(|b| (b.h0_mid(), b.z0)).collect();
            ctx.write_text(
                "region.svg",
                &svg::region(
                    &ctx.hash,
                    "BATS α-plane classification",
                    &h0,
                    &z0,
                    &tags,
                    &line,
                ),
            )?;
            let failed = sw.cells.iter().any(|c| c.error.is_some());
            let rec = ResultRecord::new(
                ctx,
                Input::AlphaGrid {
                    h0,
                    z0,
                    h0_rel_tol: sec.h0_rel_tol,
                },
                SweepOutcome::Bats(sw),
            );
            if format.json() {
                ctx.write_json("results.json", &rec)?;
            }
            Ok(if failed {
                ExitStatus::Failed
            } else {
                status_of(tags.into_iter().map(Some))
            })
        }
    }
}

fn profile_svg(ctx: &Ctx, title: &str, p: &Profile) -> String {
    let rz: Vec<(f64, f64)> = p.samples.iter().map(|s| (s.r, s.z)).collect();
    let r_rho: Vec<(f64, f64)> = p.samples.iter().map(|s| (s.r, s.rho)).collect();
    svg::profile(&ctx.hash, title, &rz, &r_rho)
}

pub fn profile(cfg: &RunConfig, ctx: &Ctx, format: Format) -> Result<ExitStatus, CliError> {
    let sec = cfg.profile.clone().unwrap_or_default();
    let tol = cfg.tolerances;
    let (input, title, prof) = match cfg.model {
        Model::Toy => {
            let g = checked_g(cfg)?;
            let beta = sec
                .beta
                .ok_or_else(|| CliError::ConfigInvalid("[profile] needs `beta`".into()))?;
            let sol = tip_solution(beta, g, &tol)?;
            (
                Input::Beta { beta },
                format!("toy profile, β = {beta}"),
                reconstruct_profile(&sol as &dyn MeridianCurve, None)?,
            )
        }
        Model::Bats => {
            let mu = checked_mu(cfg)?;
            let AlphaParam { h0, z0 } = sec
                .alpha
                .ok_or_else(|| CliError::ConfigInvalid("[profile] needs `alpha`".into()))?;
            let run = bats_classified_trajectory(AlphaParam { h0, z0 }, mu, &tol)?;
            (
                Input::Alpha { h0, z0 },
                format!("BATS profile, h₀ = {h0}, z₀ = {z0}"),
                reconstruct_profile(&run, None)?,
            )
        }
    };
    if format.csv() {
        let rows: Vec<Vec<String>> = prof
            .samples
            .iter()
            .map(|s| vec![num(s.s), num(s.r), num(s.z), num(s.rho)])
            .collect();
        ctx.write_csv("results.csv", &["s", "r", "z", "rho"], &rows)?;
    }
    ctx.write_text("profile.svg", &profile_svg(ctx, &title, &prof))?;
    if format.json() {
        ctx.write_json("results.json", &ResultRecord::new(ctx, input, prof))?;
    }
    Ok(ExitStatus::Clean)
}
