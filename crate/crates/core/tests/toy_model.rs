use approx::assert_relative_eq;
use nalgebra::Matrix2;
use proptest::prelude::*;
use tipshoot_core::integrate::{integrate, IntegratorConfig};
use tipshoot_core::toy::*;

fn gs() -> [GFunction; 2] {
    [GFunction::one(), GFunction::one_plus_v()]
}

#[test]
fn toy_rhs_reference_value() {
    let d = toy_rhs(ToyState { rho: 0.5, r: 1.0 }, 1.0, &GFunction::one()).unwrap();
    assert_relative_eq!(d[0], 0.336_417_868_886_240_2, max_relative = 1e-14);
    assert_eq!(d[1], 0.5);
}

#[test]
fn etaw_rhs_reference_value() {
    let d = etaw_rhs(
        EtaWState {
            eta: 1.0 / 3.0,
            w: 9.0 / 16.0,
        },
        1.0,
        &GFunction::one(),
    )
    .unwrap();
    assert_relative_eq!(d[0], -0.088_457_639_425_309_04, max_relative = 1e-13);
    assert_eq!(d[1], 1.125);
}

#[test]
fn rejects_states_outside_phase_space() {
    let g = GFunction::one();
    assert!(toy_rhs(ToyState { rho: 1.0, r: 1.0 }, 1.0, &g).is_err());
    assert!(toy_rhs(ToyState { rho: 0.5, r: 0.0 }, 1.0, &g).is_err());
    assert!(etaw_rhs(EtaWState { eta: 1.0, w: 1.0 }, 1.0, &g).is_err());
    assert!(phi(ToyState { rho: -0.2, r: 1.0 }).is_err());
}

#[test]
fn equilibrium_eigenvalues_match_independent_solver() {
    for g in gs() {
        for beta in [0.0, 1.0 / 18.0, 1.0, 10.0] {
            let h = 1e-6;
            let f = |e: f64, w: f64| etaw_rhs(EtaWState { eta: e, w }, beta, &g).unwrap();
            let (a, b) = (f(Q0.eta + h, 0.0), f(Q0.eta - h, 0.0));
            let (c, d) = (f(Q0.eta, h), f(Q0.eta, -h));
            let m = Matrix2::new(
                (a[0] - b[0]) / (2.0 * h),
                (c[0] - d[0]) / (2.0 * h),
                (a[1] - b[1]) / (2.0 * h),
                (c[1] - d[1]) / (2.0 * h),
            );
            let mut ev: Vec<f64> = m
                .complex_eigenvalues()
                .iter()
                .map(|z| {
                    assert!(z.im.abs() < 1e-9);
                    z.re
                })
                .collect();
            ev.sort_by(f64::total_cmp);
            assert!((ev[0] + 0.5).abs() < 1e-8, "β = {beta}: {ev:?}");
            assert!((ev[1] - 2.0).abs() < 1e-8, "β = {beta}: {ev:?}");

            let an = equilibrium_analysis(beta, &g);
            assert_eq!((an.lambda_stable, an.lambda_unstable), (-0.5, 2.0));
            assert!((an.fd_eigenvalues[0] + 0.5).abs() < 1e-8);
            assert!((an.fd_eigenvalues[1] - 2.0).abs() < 1e-8);
        }
    }
}

#[test]
fn unstable_direction_is_parallel_to_closed_form() {
    for g in gs() {
        for beta in [0.0, 1.0 / 18.0, 1.0, 10.0] {
            let an = equilibrium_analysis(beta, &g);
            let v = [1.0 / 18.0 - beta * g.g(0.0), 15.0];
            let n = v[0].hypot(v[1]);
            let u = an.fd_unstable_direction;
            let cross = (v[0] / n) * u[1] - (v[1] / n) * u[0];
            assert!(cross.abs() < 1e-8, "β = {beta}: cross = {cross:e}");
        }
    }
}

#[test]
fn w_grows_exponentially() {
    let g = GFunction::one();
    let seed = TipSeed::new(1.0, &g);
    let st = seed.start();
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let d = etaw_rhs(EtaWState { eta: y[0], w: y[1] }, 1.0, &g).unwrap();
        dy.copy_from_slice(&d);
    };
    let cfg = IntegratorConfig {
        atol: 1e-20,
        ..Default::default()
    };
    let tr = integrate(&rhs, &[st.eta, st.w], 0.0, 5.0, &[], &[], &cfg).unwrap();
    for i in 0..tr.len() {
        let exact = st.w * (2.0 * tr.x(i)).exp();
        assert!((tr.state(i)[1] / exact - 1.0).abs() < 1e-8);
    }
}

#[test]
fn nullcline_at_zero_beta() {
    let g = GFunction::one();
    for k in 1..20 {
        let rho = k as f64 / 20.0;
        let r_null = rho * (1.0 - rho * rho).sqrt();
        let on = toy_rhs(ToyState { rho, r: r_null }, 0.0, &g).unwrap()[0];
        assert!(on.abs() < 1e-12);
        let above = toy_rhs(
            ToyState {
                rho,
                r: 1.1 * r_null,
            },
            0.0,
            &g,
        )
        .unwrap()[0];
        let below = toy_rhs(
            ToyState {
                rho,
                r: 0.9 * r_null,
            },
            0.0,
            &g,
        )
        .unwrap()[0];
        assert!(above < 0.0 && below > 0.0);
    }
}

#[test]
fn g_check_accepts_catalog_and_rejects_negative() {
    let grid = default_g_grid();
    assert!(g_check(&GFunction::one(), &grid).passed());
    assert!(g_check(&GFunction::one_plus_v(), &grid).passed());
    let bad = GFunction::Constant { value: -1.0 };
    assert!(!g_check(&bad, &grid).passed());
}

#[test]
fn tip_curvature_at_switch() {
    let g = GFunction::one();
    let tol = tipshoot_core::classify::ClassifyTolerances::default();
    for beta in [0.0, 0.1, 1.0, 10.0] {
        let sol = tipshoot_core::classify::tip_solution(beta, &g, &tol).unwrap();
        let sw = sol.switch;
        let eta = (1.0 - sw.rho * sw.rho).sqrt() / sw.r;
        assert!((eta - 1.0 / 3.0).abs() < 1e-3, "β = {beta}: η = {eta}");
    }
}

proptest! {
    #[test]
    fn phi_round_trip(rho in 0.01f64..0.99, r in 0.01f64..10.0) {
        let q = phi(ToyState { rho, r }).unwrap();
        let back = phi_inv(q).unwrap();
        prop_assert!((back.rho - rho).abs() < 1e-12);
        prop_assert!((back.r - r).abs() < 1e-12 * r.max(1.0));
    }

    #[test]
    fn etaw_field_is_toy_field_in_new_chart(
        rho in 0.05f64..0.95,
        r in 0.05f64..5.0,
        beta in 0.0f64..5.0,
    ) {
        let g = GFunction::one_plus_v();
        let [drho, dr] = toy_rhs(ToyState { rho, r }, beta, &g).unwrap();
        let c = (1.0 - rho * rho).sqrt();
        let deta_ds = -rho * drho / (c * r) - c * dr / (r * r);
        let dw_ds = 2.0 * r * dr;
        let dt_ds = rho / r;
        let q = phi(ToyState { rho, r }).unwrap();
        let d = etaw_rhs(q, beta, &g).unwrap();
        let scale = deta_ds.abs().max(1.0);
        prop_assert!((d[0] * dt_ds - deta_ds).abs() < 1e-10 * scale);
        prop_assert!((d[1] * dt_ds - dw_ds).abs() < 1e-10 * dw_ds.abs().max(1.0));
    }
}
