//! Oracles for the crossed random-intercepts REML fitter.
//!
//! The fitter works with sufficient statistics and a Schur complement. The
//! checks here rebuild the full n x n marginal covariance densely, compare
//! with ordinary least squares where the model reduces to it, and grid-search
//! the criterion directly.

use nalgebra::{DMatrix, DVector};
use powersim_core::dataset::{Condition, Dataset};
use powersim_core::design::{simulate_dataset, DesignSpec, GenerativeParams};
use powersim_core::lmm::{fit_crossed_intercepts, reml_criterion, CrossedModel};
use powersim_core::rng::RandomStream;
use proptest::prelude::*;

struct Columns {
    y: Vec<f64>,
    subject: Vec<usize>,
    item: Vec<usize>,
    x: Vec<f64>,
}

fn columns(data: &Dataset) -> Columns {
    Columns {
        y: data.trials.iter().map(|t| t.rt.ln()).collect(),
        subject: data.trials.iter().map(|t| t.subject).collect(),
        item: data.trials.iter().map(|t| t.item).collect(),
        x: data.trials.iter().map(|t| t.condition.contrast()).collect(),
    }
}

/// Restricted log-likelihood from the explicit marginal covariance.
fn dense_reml(c: &Columns, vs: f64, vi: f64, ve: f64) -> f64 {
    let n = c.y.len();
    let v = DMatrix::from_fn(n, n, |r, s| {
        let mut val = 0.0;
        if r == s {
            val += ve;
        }
        if c.subject[r] == c.subject[s] {
            val += vs;
        }
        if c.item[r] == c.item[s] {
            val += vi;
        }
        val
    });
    let x = DMatrix::from_fn(n, 2, |r, k| if k == 0 { 1.0 } else { c.x[r] });
    let y = DVector::from_column_slice(&c.y);
    let chol = v.cholesky().unwrap();
    let logdet_v = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let vinv_x = chol.solve(&x);
    let vinv_y = chol.solve(&y);
    let xtvx = x.transpose() * &vinv_x;
    let beta = xtvx.clone().try_inverse().unwrap() * (x.transpose() * &vinv_y);
    let r = &y - &x * &beta;
    let quad = r.dot(&chol.solve(&r));
    let p = 2.0;
    -0.5 * ((n as f64 - p) * (2.0 * std::f64::consts::PI).ln()
        + logdet_v
        + xtvx.determinant().ln()
        + quad)
}

fn ols(c: &Columns) -> (f64, f64, f64) {
    let n = c.y.len() as f64;
    let (sx, sy) = (c.x.iter().sum::<f64>(), c.y.iter().sum::<f64>());
    let sxx: f64 = c.x.iter().map(|v| v * v).sum();
    let sxy: f64 = c.x.iter().zip(&c.y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let b1 = (n * sxy - sx * sy) / det;
    let b0 = (sy - b1 * sx) / n;
    let rss: f64 = c
        .x
        .iter()
        .zip(&c.y)
        .map(|(x, y)| (y - b0 - b1 * x).powi(2))
        .sum();
    (b0, b1, rss)
}

fn condition_mean_difference(data: &Dataset) -> f64 {
    let mean = |cond| {
        let v: Vec<f64> = data
            .trials
            .iter()
            .filter(|t| t.condition == cond)
            .map(|t| t.rt.ln())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    mean(Condition::B) - mean(Condition::A)
}

#[test]
fn criterion_matches_dense_likelihood() {
    for (k, design) in [(6, 4), (5, 6), (3, 8)].into_iter().enumerate() {
        let data = simulate_dataset(
            &DesignSpec::new(design.0, design.1).unwrap(),
            &GenerativeParams::reading_time_defaults(0.1),
            &RandomStream::new(31, k as u64),
        )
        .unwrap();
        let c = columns(&data);
        for &(vs, vi, ve) in &[(0.05, 0.01, 0.2), (0.0, 0.3, 0.05), (1.2, 0.0, 0.4), (0.0, 0.0, 1.0)] {
            let fast = reml_criterion(&data, vs, vi, ve).unwrap();
            let slow = dense_reml(&c, vs, vi, ve);
            assert!((fast - slow).abs() < 1e-9, "{design:?} {vs} {vi} {ve}: {fast} vs {slow}");
        }
    }
}

#[test]
fn zero_variances_reduce_to_ols_restricted_likelihood() {
    let data = simulate_dataset(
        &DesignSpec::new(7, 6).unwrap(),
        &GenerativeParams::reading_time_defaults(0.2),
        &RandomStream::new(2, 0),
    )
    .unwrap();
    let c = columns(&data);
    let (_, _, rss) = ols(&c);
    let n = c.y.len() as f64;
    let sxx: f64 = c.x.iter().map(|v| v * v).sum();
    let sx: f64 = c.x.iter().sum();
    let det_xtx = n * sxx - sx * sx;
    for ve in [0.03f64, 0.2, 1.7] {
        let oracle = -0.5
            * ((n - 2.0) * (2.0 * std::f64::consts::PI).ln()
                + (n - 2.0) * ve.ln()
                + det_xtx.ln()
                + rss / ve);
        let got = reml_criterion(&data, 0.0, 0.0, ve).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }
}

#[test]
fn scaling_shifts_criterion_by_jacobian() {
    // 2 subjects x 2 items, raw scale.
    let y = [1.3, 0.4, -0.8, 2.1];
    let subject = [0, 0, 1, 1];
    let item = [0, 1, 0, 1];
    let x = [-0.5, 0.5, 0.5, -0.5];
    let base = CrossedModel::new(&y, &subject, &item, &x).unwrap();
    for c in [0.5, 3.0, 10.0] {
        let scaled_y: Vec<f64> = y.iter().map(|v| v * c).collect();
        let scaled = CrossedModel::new(&scaled_y, &subject, &item, &x).unwrap();
        for &(vs, vi, ve) in &[(0.2, 0.1, 0.5), (0.0, 1.0, 0.1)] {
            let l0 = base.reml(vs, vi, ve).unwrap();
            let l1 = scaled.reml(c * c * vs, c * c * vi, c * c * ve).unwrap();
            // n - p = 2 fixed-effect-free dimensions.
            let jacobian = -2.0 * f64::ln(c);
            assert!((l1 - l0 - jacobian).abs() < 1e-10);
        }
    }
}

#[test]
fn balanced_design_estimate_is_mean_difference() {
    for k in 0..20 {
        let design = DesignSpec::new(2 * (1 + k % 7), 2 * (1 + k % 5)).unwrap();
        let data = simulate_dataset(
            &design,
            &GenerativeParams::reading_time_defaults(0.05 * k as f64),
            &RandomStream::new(90, k as u64),
        )
        .unwrap();
        let fit = fit_crossed_intercepts(&data, true).unwrap();
        let direct = condition_mean_difference(&data);
        assert!((fit.beta_hat - direct).abs() < 1e-8, "{design}: {} vs {direct}", fit.beta_hat);
    }
}

#[test]
fn no_random_effects_matches_ols() {
    let params = GenerativeParams {
        sd_subject: 0.0,
        sd_item: 0.0,
        ..GenerativeParams::reading_time_defaults(0.04)
    };
    for k in 0..10 {
        let data = simulate_dataset(&DesignSpec::new(40, 16).unwrap(), &params, &RandomStream::new(5, k)).unwrap();
        let (b0, b1, _) = ols(&columns(&data));
        let fit = fit_crossed_intercepts(&data, true).unwrap();
        assert!((fit.beta_hat - b1).abs() < 1e-6);
        assert!((fit.intercept_hat - b0).abs() < 1e-6);
    }
}

#[test]
fn optimum_beats_grid_search() {
    let data = simulate_dataset(
        &DesignSpec::new(8, 4).unwrap(),
        &GenerativeParams::reading_time_defaults(0.1),
        &RandomStream::new(8, 4),
    )
    .unwrap();
    let fit = fit_crossed_intercepts(&data, true).unwrap();
    assert!(fit.converged);
    let logs: Vec<f64> = data.trials.iter().map(|t| t.rt.ln()).collect();
    let m = logs.iter().sum::<f64>() / logs.len() as f64;
    let total = logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;

    let steps = 50;
    let mut grid_best = f64::NEG_INFINITY;
    for a in 0..steps {
        let vs = 2.0 * total * a as f64 / (steps - 1) as f64;
        for b in 0..steps {
            let vi = 2.0 * total * b as f64 / (steps - 1) as f64;
            for c in 1..=steps {
                let ve = 2.0 * total * c as f64 / steps as f64;
                let l = reml_criterion(&data, vs, vi, ve).unwrap();
                grid_best = grid_best.max(l);
            }
        }
    }
    let at_fit = reml_criterion(&data, fit.var_subject, fit.var_item, fit.var_resid).unwrap();
    assert!(at_fit >= grid_best - 1e-6, "fit {at_fit} grid {grid_best}");
}

#[test]
fn null_calibration_of_t_rule() {
    // Intercept-only generation, intercept-only fit: the |t| > 2 rule rejects
    // at P(|Z| > 2) = 0.0455 up to the t-versus-normal correction.
    let design = DesignSpec::new(40, 16).unwrap();
    let params = GenerativeParams::reading_time_defaults(0.0);
    let reps = 1000;
    let hits = (0..reps)
        .filter(|&k| {
            let data = simulate_dataset(&design, &params, &RandomStream::new(1000, k)).unwrap();
            let fit = fit_crossed_intercepts(&data, true).unwrap();
            assert!(fit.converged);
            fit.t_value.abs() > 2.0
        })
        .count();
    let rate = hits as f64 / reps as f64;
    let p = 0.0455;
    let band = 3.0 * (p * (1.0 - p) / reps as f64).sqrt();
    assert!((rate - p).abs() <= band, "rate {rate}");
}

#[test]
fn subject_noise_does_not_shrink_standard_errors() {
    let design = DesignSpec::new(9, 8).unwrap();
    let median_se = |sd_subject: f64| {
        let params = GenerativeParams {
            sd_subject,
            ..GenerativeParams::reading_time_defaults(0.05)
        };
        let mut se: Vec<f64> = (0..200)
            .map(|k| {
                let data = simulate_dataset(&design, &params, &RandomStream::new(44, k)).unwrap();
                fit_crossed_intercepts(&data, true).unwrap().se_beta
            })
            .collect();
        se.sort_by(f64::total_cmp);
        0.5 * (se[99] + se[100])
    };
    let low = median_se(0.05);
    let high = median_se(0.6);
    assert!(high >= low * (1.0 - 1e-9), "{high} < {low}");
}

#[test]
fn large_design_fits_quickly() {
    let data = simulate_dataset(
        &DesignSpec::new(80, 40).unwrap(),
        &GenerativeParams::reading_time_defaults(0.05),
        &RandomStream::new(3, 3),
    )
    .unwrap();
    let start = std::time::Instant::now();
    let fit = fit_crossed_intercepts(&data, true).unwrap();
    let elapsed = start.elapsed();
    assert!(fit.converged);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn balanced_closed_form(
        half_subjects in 1usize..12,
        half_items in 1usize..10,
        effect in -0.5..0.5f64,
        sd_subject in 0.0..0.6f64,
        sd_item in 0.0..0.6f64,
        sd_resid in 0.05..0.8f64,
        seed in 0u64..1000,
    ) {
        let design = DesignSpec::new(2 * half_subjects, 2 * half_items).unwrap();
        let params = GenerativeParams { grand_mean_log: 6.0, effect_log: effect, sd_subject, sd_item, sd_resid };
        let data = simulate_dataset(&design, &params, &RandomStream::new(seed, 0)).unwrap();
        let fit = fit_crossed_intercepts(&data, true).unwrap();
        prop_assert!((fit.beta_hat - condition_mean_difference(&data)).abs() < 1e-8);
        prop_assert!(fit.var_subject >= 0.0 && fit.var_item >= 0.0 && fit.var_resid > 0.0);
    }
}
