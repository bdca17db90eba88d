use frontier::did::{
    att_gt, att_gt_all, doubly_robust, BasePeriod, CellStatus, ControlGroup, Design, Estimation,
};
use frontier::panel::{Outcome, OutcomePanel};
use frontier::rng::{substream, Purpose};
use frontier::sim::{simulate_outcome_panel, SimPanelConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const Y: Outcome = Outcome::NLanguages;

fn normal(rng: &mut impl Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Two-month panel, cohort 2 versus never treated, with one covariate `x`.
/// Treatment odds rise with `x`; the outcome change is `f(x) + τ·D + noise`.
fn two_period(n: usize, seed: u64, tau: f64, noise: f64, f: impl Fn(f64) -> f64) -> OutcomePanel {
    let mut rng = substream(seed, Purpose::Init, 0, 0);
    let mut ft = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let x = normal(&mut rng);
        let d = rng.random::<f64>() < logistic(-0.2 + 0.8 * x);
        let y0 = normal(&mut rng);
        let dy = f(x) + if d { tau } else { 0.0 } + noise * normal(&mut rng);
        ft.push(if d { 2 } else { 0 });
        xs.push(x);
        y.extend([y0, y0 + dy]);
    }
    let mut panel = OutcomePanel::new((1..=n as u64).collect(), ft, 2).unwrap();
    panel.set_outcome(Y, y).unwrap();
    panel.set_covariate("x", xs).unwrap();
    panel
}

fn no_anticipation(estimation: Estimation, covariates: &[&str]) -> Design {
    Design {
        anticipation: 0,
        control_group: ControlGroup::NeverTreated,
        estimation,
        covariates: covariates.iter().map(|s| s.to_string()).collect(),
        ..Design::default()
    }
}

/// Noise-free staggered panel `y = a_i + b_t + τ·1[t ≥ g]`.
fn additive_panel(tau: f64, seed: u64) -> OutcomePanel {
    let t = 10u32;
    let cohorts = [0u32, 0, 4, 5, 7, 9, 10];
    let n = 140;
    let mut rng = substream(seed, Purpose::Init, 1, 0);
    let b: Vec<f64> = (0..t).map(|_| normal(&mut rng)).collect();
    let ft: Vec<u32> = (0..n).map(|i| cohorts[i % cohorts.len()]).collect();
    let mut y = Vec::with_capacity(n * t as usize);
    for &g in &ft {
        let a = 3.0 * normal(&mut rng);
        for m in 1..=t {
            let post = g > 0 && m >= g;
            y.push(a + b[m as usize - 1] + if post { tau } else { 0.0 });
        }
    }
    let mut panel = OutcomePanel::new((1..=n as u64).collect(), ft, t).unwrap();
    panel.set_outcome(Y, y).unwrap();
    panel
}

#[test]
fn dr_exact_when_outcome_model_is_right() {
    let panel = two_period(400, 1, 0.7, 0.0, |x| 1.0 + 2.0 * x);
    let dr = att_gt(
        &panel,
        Y,
        2,
        2,
        &no_anticipation(Estimation::DoublyRobust, &["x"]),
    )
    .unwrap();
    assert!(
        (dr.cell.estimate - 0.7).abs() < 1e-10,
        "{}",
        dr.cell.estimate
    );
    let naive = att_gt(
        &panel,
        Y,
        2,
        2,
        &no_anticipation(Estimation::Unconditional, &[]),
    )
    .unwrap();
    assert!(
        (naive.cell.estimate - 0.7).abs() > 0.3,
        "selection should bias the naive estimate"
    );
}

#[test]
fn dr_consistent_when_only_propensity_is_right() {
    let panel = two_period(20_000, 2, 0.5, 1.0, |x| x * x + x.sin());
    let fit = att_gt(
        &panel,
        Y,
        2,
        2,
        &no_anticipation(Estimation::DoublyRobust, &["x"]),
    )
    .unwrap();
    let z = (fit.cell.estimate - 0.5) / fit.cell.se;
    assert!(
        z.abs() < 4.0,
        "estimate {} se {}",
        fit.cell.estimate,
        fit.cell.se
    );
}

#[test]
fn influence_has_mean_zero() {
    let panel = two_period(600, 3, 0.4, 1.0, |x| 0.5 * x);
    for design in [
        no_anticipation(Estimation::DoublyRobust, &["x"]),
        no_anticipation(Estimation::DoublyRobust, &[]),
        no_anticipation(Estimation::Unconditional, &[]),
    ] {
        let fit = att_gt(&panel, Y, 2, 2, &design).unwrap();
        let mean = fit.influence.iter().sum::<f64>() / fit.influence.len() as f64;
        assert!(mean.abs() < 1e-10, "{mean}");
    }
}

#[test]
fn unconditional_se_matches_two_sample_formula() {
    let panel = two_period(500, 4, 0.0, 1.0, |x| x);
    let fit = att_gt(
        &panel,
        Y,
        2,
        2,
        &no_anticipation(Estimation::Unconditional, &[]),
    )
    .unwrap();
    let y = panel.outcome_values(Y).unwrap();
    let (mut t, mut c) = (Vec::new(), Vec::new());
    for (i, &g) in panel.first_treat().iter().enumerate() {
        let dy = y[2 * i + 1] - y[2 * i];
        if g > 0 {
            t.push(dy)
        } else {
            c.push(dy)
        }
    }
    let ss = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64).powi(2)
    };
    let se = (ss(&t) + ss(&c)).sqrt();
    assert!(
        (fit.cell.se - se).abs() < 1e-10 * se,
        "{} vs {se}",
        fit.cell.se
    );
}

#[test]
fn dr_analytic_se_matches_resampling() {
    let n = 500;
    let mut rng = substream(5, Purpose::Init, 2, 0);
    let mut x = DMatrix::zeros(n, 2);
    let mut d = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for i in 0..n {
        let (x1, x2) = (normal(&mut rng), normal(&mut rng));
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        let treated = rng.random::<f64>() < logistic(0.3 * x1 - 0.4 * x2);
        d.push(treated);
        dy.push(1.0 + x1 - 0.5 * x2 + if treated { 0.8 } else { 0.0 } + normal(&mut rng));
    }
    let names = vec!["x1".to_string(), "x2".to_string()];
    let (_, psi, _) = doubly_robust(&x, &names, &d, &dy).unwrap();
    let analytic = psi.iter().map(|v| v * v).sum::<f64>().sqrt() / n as f64;

    let reps = 1000;
    let mut draws = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut rr = substream(6, Purpose::Bootstrap, r as u64, 0);
        let idx: Vec<usize> = (0..n).map(|_| rr.random_range(0..n)).collect();
        let xb = DMatrix::from_fn(n, 2, |i, j| x[(idx[i], j)]);
        let db: Vec<bool> = idx.iter().map(|&i| d[i]).collect();
        let yb: Vec<f64> = idx.iter().map(|&i| dy[i]).collect();
        draws.push(doubly_robust(&xb, &names, &db, &yb).unwrap().0);
    }
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!(
        (sd / analytic - 1.0).abs() < 0.10,
        "bootstrap {sd} analytic {analytic}"
    );
}

#[test]
fn additive_panel_recovers_effect_exactly() {
    let panel = additive_panel(1.5, 9);
    for base_period in [BasePeriod::Varying, BasePeriod::Universal] {
        for anticipation in [0, 1] {
            let design = Design {
                anticipation,
                base_period,
                ..Design::default()
            };
            let res = att_gt_all(&panel, Y, &design).unwrap();
            for cell in res.cells.iter().filter(|c| c.status.is_identified()) {
                let want = if cell.is_post() { 1.5 } else { 0.0 };
                assert!((cell.estimate - want).abs() < 1e-10, "{cell:?}");
            }
            assert!(res
                .cells
                .iter()
                .any(|c| c.is_post() && c.status.is_identified()));
        }
    }
}

#[test]
fn unit_shifts_leave_estimates_unchanged() {
    let config = SimPanelConfig::sized(300, 12);
    let panel = simulate_outcome_panel(&config).unwrap();
    let mut shifted = panel.clone();
    let t = panel.n_periods() as usize;
    let y: Vec<f64> = panel
        .outcome_values(Y)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(k, v)| v + 10.0 * ((k / t) as f64).sin())
        .collect();
    shifted.set_outcome(Y, y).unwrap();
    for base_period in [BasePeriod::Varying, BasePeriod::Universal] {
        let design = Design {
            base_period,
            ..Design::default()
        };
        let a = att_gt_all(&panel, Y, &design).unwrap();
        let b = att_gt_all(&shifted, Y, &design).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.status, cb.status);
            if ca.status.is_identified() {
                assert!((ca.estimate - cb.estimate).abs() < 1e-10);
                assert!((ca.se - cb.se).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn pre_cells_centre_on_zero_without_ai() {
    let mut config = SimPanelConfig::sized(1500, 20);
    config.model.ai_signal_count = 0.0;
    let panel = simulate_outcome_panel(&config).unwrap();
    let res = att_gt_all(&panel, Y, &Design::default()).unwrap();
    let pre: Vec<f64> = res
        .cells
        .iter()
        .filter(|c| c.status.is_identified() && c.event_time() <= -2)
        .map(|c| c.estimate / c.se)
        .collect();
    assert!(pre.len() > 20);
    let rejections = pre.iter().filter(|z| z.abs() > 1.96).count();
    assert!(
        (rejections as f64) < 0.15 * pre.len() as f64,
        "{rejections} of {}",
        pre.len()
    );
    let mean_z = pre.iter().sum::<f64>() / pre.len() as f64;
    assert!(mean_z.abs() < 1.0, "{mean_z}");
}

#[test]
fn missing_comparison_group_is_flagged() {
    let panel = additive_panel(1.0, 3).retain_units(|i| i % 7 >= 2);
    assert!(panel.first_treat().iter().all(|&g| g > 0));
    let design = Design {
        anticipation: 0,
        control_group: ControlGroup::NeverTreated,
        ..Design::default()
    };
    let res = att_gt_all(&panel, Y, &design).unwrap();
    assert!(res
        .cells
        .iter()
        .all(|c| matches!(c.status, CellStatus::NotIdentified { .. })));
    assert!(!res.warnings.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dr_without_covariates_equals_unconditional(seed in any::<u64>(), anticipation in 0u32..2) {
        let mut config = SimPanelConfig::sized(120, 10);
        config.seed = seed;
        let panel = simulate_outcome_panel(&config).unwrap();
        let base = Design { anticipation, ..Design::default() };
        let dr = att_gt_all(&panel, Y, &base).unwrap();
        let un = att_gt_all(&panel, Y, &Design { estimation: Estimation::Unconditional, ..base }).unwrap();
        for (a, b) in dr.cells.iter().zip(&un.cells) {
            prop_assert_eq!(&a.status, &b.status);
            if a.status.is_identified() {
                prop_assert!((a.estimate - b.estimate).abs() < 1e-10);
                prop_assert!((a.se - b.se).abs() < 1e-10);
            }
        }
    }
}
