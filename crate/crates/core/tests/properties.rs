use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use subsidy_core::diagnostics::{
    common_support, cooks_trim, fwl_hump, manski_sensitivity, oster_from_inputs, HumpOptions, OsterInputs,
};
use subsidy_core::estimators::{
    dml_plr_with_folds, twfe_first_difference, twfe_fit, DmlData, DmlSpec, NuisanceLearner, TreatmentMode, TwfeSpec,
};
use subsidy_core::mechanism::{
    consortium_from_markets, consortium_optimum, solve_ad_valorem, solve_monopoly_price, solve_price_cap,
    ConsortiumParams, DemandSpec, MarketParams,
};
use subsidy_core::panel::{Outcome, PanelRow, Program};
use subsidy_core::sim::{
    ground_truth_from_records, simulate_consortium_rows, simulate_panel, HumpConfig, HumpDgp, ScenarioConfig,
};
use subsidy_core::stats::{min_eigenvalue, ols_fit, Covariance, DesignMatrix, OlsOptions};

fn config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

/// Admissible linear market: `a > b c`, cap strictly below `p^no`.
fn market() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64, f64)> {
    (50.0..200.0f64, 0.5..2.0f64, 0.05..0.6f64, 0.05..0.95f64, 0.1..0.9f64, 0.01..1.0f64, 0.05..2.0f64).prop_map(
        |(a, b, c_frac, cap_frac, tau, alpha, gamma)| {
            let c = c_frac * a / b;
            let p_no = 0.5 * (a / b + c);
            let pbar = c + cap_frac * (p_no - c);
            (a, b, c, pbar, tau, alpha, gamma)
        },
    )
}

/// Balanced two-period panel with stayers, full and partial switchers.
fn panel() -> impl Strategy<Value = Vec<PanelRow>> {
    prop::collection::vec(
        (0u8..4, 0.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.5..3.0f64, 1u32..5, 1u32..5, 0u8..3, -0.5..0.5f64),
        8..40,
    )
    .prop_map(|draws| {
        let mut rows = Vec::new();
        for (j, (kind, frac, y0, dy, sp, r0, r1, st, e)) in draws.into_iter().enumerate() {
            // The first three HCPs guarantee a stayer and both margins.
            let kind = if j < 3 { j as u8 } else { kind };
            let (s2, s2c) = match kind {
                0 => (0.0, 0.0),
                1 => (1.0, 0.0),
                2 => (0.0, 1.0),
                _ => (frac, 1.0 - frac),
            };
            let base = PanelRow {
                hcp_id: format!("H{j:03}"),
                period: 0,
                ln_price: 4.0 + y0,
                ln_subsidy: 3.0 + y0,
                ln_netcost: 2.0 + 0.5 * y0,
                s2: 0.0,
                s2c: 0.0,
                ln_speed: sp,
                hcp_type: format!("t{}", j % 3),
                service_type: "fiber".into(),
                state: format!("S{st}"),
                n_requests: r0,
                speed_mbps: sp.exp(),
                level_sums: None,
            };
            let next = PanelRow {
                period: 1,
                ln_price: base.ln_price + 0.1 + dy - 0.4 * s2 - 0.3 * s2c + e,
                ln_subsidy: base.ln_subsidy + 0.2 * dy + 0.5 * s2 - e * e,
                ln_netcost: base.ln_netcost - dy + 0.2 * s2c + e.sin(),
                s2,
                s2c,
                ln_speed: sp + 0.1 * dy,
                n_requests: r1,
                speed_mbps: (sp + 0.1 * dy).exp(),
                ..base.clone()
            };
            rows.push(base);
            rows.push(next);
        }
        rows
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn linear_closed_forms_match_general_path((a, b, c, pbar, tau, alpha, gamma) in market()) {
        let lin = DemandSpec::linear(a, b).unwrap();
        let gen = lin.as_general();
        let p = MarketParams::new(c, pbar, tau, alpha, gamma).unwrap();
        let rel = 1e-8;
        let m = (solve_monopoly_price(&lin, c).unwrap(), solve_monopoly_price(&gen, c).unwrap());
        assert_relative_eq!(m.0.billed_price, m.1.billed_price, max_relative = rel);
        let cap = (solve_price_cap(&lin, &p).unwrap(), solve_price_cap(&gen, &p).unwrap());
        assert_relative_eq!(cap.0.billed_price, cap.1.billed_price, max_relative = rel);
        let adv = (solve_ad_valorem(&lin, &p).unwrap(), solve_ad_valorem(&gen, &p).unwrap());
        assert_relative_eq!(adv.0.consumer_price, adv.1.consumer_price, max_relative = rel);
    }

    #[test]
    fn cap_price_satisfies_first_order_condition((a, b, c, pbar, tau, alpha, gamma) in market()) {
        let d = DemandSpec::linear(a, b).unwrap();
        let eq = solve_price_cap(&d, &MarketParams::new(c, pbar, tau, alpha, gamma).unwrap()).unwrap();
        let foc = d.quantity(pbar) - alpha * gamma * (eq.billed_price - pbar);
        prop_assert!(foc.abs() <= 1e-9 * d.quantity(pbar).max(1.0), "{foc}");
    }

    #[test]
    fn ad_valorem_is_monopoly_at_effective_cost((a, b, c, pbar, tau, alpha, gamma) in market()) {
        let d = DemandSpec::linear(a, b).unwrap();
        let adv = solve_ad_valorem(&d, &MarketParams::new(c, pbar, tau, alpha, gamma).unwrap()).unwrap();
        let mono = solve_monopoly_price(&d, c * (1.0 - tau)).unwrap();
        assert_relative_eq!(adv.consumer_price, mono.billed_price, max_relative = 1e-12);
    }

    #[test]
    fn kappa_hump(agb in 0.05..20.0f64, r1 in 0.01..50.0f64, r2 in 0.01..50.0f64) {
        let k = |r: f64| consortium_optimum(&ConsortiumParams::new(agb, r, 1.0, 1.0).unwrap()).kappa_star;
        let r_star = 1.0 / agb.sqrt();
        let (lo, hi) = (r1.min(r2), r1.max(r2));
        if hi <= r_star {
            prop_assert!(k(lo) <= k(hi) + 1e-12);
        }
        if lo >= r_star {
            prop_assert!(k(lo) + 1e-12 >= k(hi));
        }
        assert_relative_eq!(k(r_star), 1.0 + r_star, max_relative = 1e-12);
    }

    #[test]
    fn consortium_transfer_is_zero_sum(
        (a, b, c, _pbar, tau, alpha, gamma) in market(),
        volume in 0.05..3.0f64,
    ) {
        let e = DemandSpec::linear(a, b).unwrap();
        let i = e.volume_scaled(volume);
        let out = consortium_from_markets(&e, &i, c, tau, alpha, gamma).unwrap();
        prop_assert_eq!(out.delta_c, out.delta_g);
    }

    #[test]
    fn ols_residuals_orthogonal(seed in 0u64..1000, n in 12usize..60) {
        let x = DMatrix::from_fn(n, 3, |i, j| (((i * 31 + j * 17) as u64 ^ seed) % 97) as f64 / 10.0);
        let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 7 + seed) % 13) as f64).collect();
        let design = DesignMatrix::new(x, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let opts = OlsOptions { drop_collinear: true, ..Default::default() };
        let fit = ols_fit(&design, &y, opts).unwrap();
        let xe = fit.x.transpose() * &fit.residuals;
        let scale = fit.x.amax() * y.iter().fold(0.0f64, |m, v| m.max(v.abs())) * n as f64;
        prop_assert!(xe.amax() < 1e-8 * scale.max(1.0));
    }

    #[test]
    fn singleton_clusters_equal_hc1(seed in 0u64..1000) {
        let n = 30;
        let x = DMatrix::from_fn(n, 2, |i, j| (((i * 13 + j * 5) as u64 + seed) % 23) as f64);
        let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 11 + seed) % 17) as f64).collect();
        let ids: Vec<usize> = (0..n).collect();
        let d = DesignMatrix::new(x, vec!["a".into(), "b".into()]).unwrap().with_clusters(&ids).unwrap();
        let hc1 = ols_fit(&d, &y, OlsOptions { covariance: Covariance::Robust, drop_collinear: true, ..Default::default() }).unwrap();
        let cl = ols_fit(&d, &y, OlsOptions { covariance: Covariance::Cluster, drop_collinear: true, ..Default::default() }).unwrap();
        for (r1, r2) in hc1.result.covariance.iter().zip(&cl.result.covariance) {
            for (a, b) in r1.iter().zip(r2) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn twfe_equals_first_differences(p in panel()) {
        for mode in [TreatmentMode::ContinuousShares, TreatmentMode::Binary] {
            for outcome in Outcome::ALL {
                let spec = TwfeSpec::default().with_outcome(outcome).with_mode(mode);
                let (w, f) = (twfe_fit(&p, &spec), twfe_first_difference(&p, &spec));
                let (w, f) = match (w, f) {
                    (Ok(w), Ok(f)) => (w, f),
                    (Err(a), Err(b)) => { prop_assert_eq!(a, b); continue; }
                    (a, b) => panic!("within {a:?} vs fd {b:?}"),
                };
                for name in &w.estimate.names {
                    let (a, b) = (w.estimate.coef(name).unwrap(), f.estimate.coef(name).unwrap());
                    prop_assert!((a - b).abs() < 1e-10, "{name}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn binary_equals_continuous_on_pure_shares(p in panel()) {
        let pure: Vec<PanelRow> = p.into_iter().filter(|r| r.s2 == 0.0 || r.s2 == 1.0).filter(|r| r.s2c == 0.0 || r.s2c == 1.0).collect();
        let pure: Vec<PanelRow> = pure.iter().filter(|r| pure.iter().filter(|q| q.hcp_id == r.hcp_id).count() == 2).cloned().collect();
        let c = twfe_fit(&pure, &TwfeSpec::default()).unwrap();
        let b = twfe_fit(&pure, &TwfeSpec::default().with_mode(TreatmentMode::Binary)).unwrap();
        prop_assert_eq!(b.n_dropped_mixed, 0);
        prop_assert_eq!(c.estimate.coefficients, b.estimate.coefficients);
    }

    #[test]
    fn covariances_symmetric_psd(p in panel()) {
        let r = twfe_fit(&p, &TwfeSpec::default()).unwrap().estimate;
        let v = r.covariance_matrix();
        prop_assert!((&v - v.transpose()).amax() <= 1e-10 * v.amax().max(1.0));
        prop_assert!(min_eigenvalue(&v) >= -1e-10 * v.amax().max(1.0));
    }

    #[test]
    fn dml_ignores_fold_labels(seed in 0u64..500, shift in 1usize..4) {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 37 + seed) % 29) as f64 / 7.0).collect();
        let s: Vec<f64> = (0..n).map(|i| x[i] + ((i as u64 * 11 + seed) % 5) as f64 / 5.0).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * s[i] + x[i].sin() + ((i * 3) % 7) as f64 / 10.0).collect();
        let data = DmlData {
            y,
            s: DMatrix::from_column_slice(n, 1, &s),
            x: DMatrix::from_column_slice(n, 1, &x),
            treatment_names: vec!["S".into()],
        };
        let spec = DmlSpec { k_folds: 4, learner: NuisanceLearner::Forest(Default::default()), seed };
        let folds: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % 4).collect();
        let relabeled: Vec<usize> = folds.iter().map(|f| (f + shift) % 4).collect();
        let a = dml_plr_with_folds(&data, &spec, &folds).unwrap();
        let b = dml_plr_with_folds(&data, &spec, &relabeled).unwrap();
        prop_assert_eq!(a.estimate.coefficients, b.estimate.coefficients);
    }

    #[test]
    fn manski_curve_is_affine(p in panel(), g in prop::collection::vec(0.0..2.0f64, 2..10)) {
        let c = manski_sensitivity(&p, Program::P2, Outcome::Price, &g).unwrap();
        for pt in &c.points {
            let expect = c.beta_did + (1.0 - pt.g) * c.beta0;
            prop_assert!((pt.beta - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
        let at_one = manski_sensitivity(&p, Program::P2, Outcome::Price, &[1.0]).unwrap();
        prop_assert_eq!(at_one.points[0].beta, at_one.beta_did);
    }

    #[test]
    fn oster_identity(
        bt in -3.0..3.0f64, bh in -3.0..3.0f64, r2t in 0.0..0.5f64, gap in 0.01..0.4f64, extra in 0.01..0.5f64,
    ) {
        let r2h = r2t + gap;
        let r2m = (r2h + extra).min(1.0);
        prop_assume!((bt - bh).abs() > 1e-6 && r2m > r2h);
        let r = oster_from_inputs(OsterInputs { beta_tilde: bt, beta_hat: bh, r2_tilde: r2t, r2_hat: r2h, r2_max: Some(r2m) }).unwrap();
        // Independent re-derivation: bias-adjusted beta and the delta that
        // sends it to zero.
        let star = bh - (bt - bh) * (r2m - r2h) / (r2h - r2t);
        let delta = bh * (r2h - r2t) / ((bt - bh) * (r2m - r2h));
        prop_assert!((r.beta_star - star).abs() <= 1e-12 * star.abs().max(1.0));
        prop_assert!((r.delta - delta).abs() <= 1e-12 * delta.abs().max(1.0));
    }

    #[test]
    fn cook_flags_ignore_row_order(p in panel(), rot in 0usize..40) {
        let spec = TwfeSpec::default();
        let a = cooks_trim(&p, &spec).unwrap();
        let mut q = p.clone();
        let k = rot % q.len();
        q.rotate_left(k);
        let b = cooks_trim(&q, &spec).unwrap();
        prop_assert_eq!(a.dropped_hcps, b.dropped_hcps);
    }

    #[test]
    fn full_range_support_is_identity(p in panel()) {
        let r = common_support(&p, Program::P2c, &TwfeSpec::default(), Some((0.0, f64::INFINITY))).unwrap();
        prop_assert_eq!(r.restricted, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn fwl_slope_matches_joint_regression(seed in 0u64..10_000, slope in -1.0..1.0f64) {
        let rows = simulate_consortium_rows(&HumpConfig { seed, dgp: HumpDgp::Linear { slope }, ..Default::default() }).unwrap();
        let r = fwl_hump(&rows, HumpOptions::default()).unwrap();
        prop_assert!(r.fwl_gap() < 1e-8);
    }

    #[test]
    fn ground_truth_recomputes_from_records(seed in 0u64..10_000, g in 0.8..1.5f64) {
        let cfg = ScenarioConfig { seed, n_hcps: 60, trend_violation: g, ..Default::default() };
        let sim = simulate_panel(&cfg).unwrap();
        let again = ground_truth_from_records(&sim.records, cfg.trend, cfg.trend_violation);
        prop_assert_eq!(again.ln_price, sim.truth.ln_price);
        prop_assert_eq!(again.ln_subsidy, sim.truth.ln_subsidy);
        prop_assert_eq!(again.ln_netcost, sim.truth.ln_netcost);
        for rec in &sim.records {
            if rec.assignment.program == Program::P2c {
                prop_assert!(rec.kappa.unwrap() >= 1.0);
            }
        }
        for row in sim.panel.iter().filter(|r| r.period == 0) {
            prop_assert!(row.s2 == 0.0 && row.s2c == 0.0);
        }
    }
}
