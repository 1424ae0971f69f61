use powersim_core::analysis::{
    analytic_power, design_analysis, estimate_distribution_experiment, power_curve, stopping_simulation,
    type12_regions, Conditioning, CurveAxis, PowerQuery, StoppingRule,
};
use powersim_core::design::{DesignSpec, GenerativeParams};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Standard normal CDF by Simpson's rule on the density from -12.
fn simpson_normal_cdf(x: f64) -> f64 {
    let lo = -12.0;
    let m = 200_000;
    let h = (x - lo) / m as f64;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(lo) + phi(x);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * phi(lo + k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn type_two_region_matches_normal_oracle() {
    let r = type12_regions(2.0, 1.0, 0.05).unwrap();
    assert!((r.upper - 1.959963984540054).abs() < 1e-9);
    assert!((r.lower + r.upper).abs() < 1e-15);
    let oracle = simpson_normal_cdf(r.upper - 2.0) - simpson_normal_cdf(r.lower - 2.0);
    assert!((r.type2 - oracle).abs() < 1e-9);
    assert!((r.type2 - 0.4840).abs() < 0.0005);
    assert!((r.power + r.type2 - 1.0).abs() < 1e-15);
}

#[test]
fn analytic_power_matches_simulated_t_tests() {
    let (effect, sd, n) = (10.0, 40.0, 10usize);
    // Two-sided 0.05 critical value of t with 9 df.
    let critical = 2.262157162740992;
    let mut rng = StdRng::seed_from_u64(20240607);
    let reps = 1_000_000;
    let mut hits = 0usize;
    let mut x = vec![0.0; n];
    for _ in 0..reps {
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = effect + sd * z;
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = mean / (var / n as f64).sqrt();
        if t.abs() > critical {
            hits += 1;
        }
    }
    let mc = hits as f64 / reps as f64;
    let analytic = analytic_power(&PowerQuery::new(effect, sd, n as u64).unwrap()).unwrap();
    assert!((analytic - mc).abs() < 0.002, "analytic {analytic} mc {mc}");
}

#[test]
fn power_is_strictly_monotone() {
    let effects: Vec<f64> = (2..=20).map(f64::from).collect();
    let base = PowerQuery::new(10.0, 40.0, 10).unwrap();
    let by_effect = power_curve(&CurveAxis::Effect(effects), &base).unwrap();
    assert!(by_effect.windows(2).all(|w| w[1].power > w[0].power));
    let by_n = power_curve(&CurveAxis::N((4..=100).collect()), &base).unwrap();
    assert!(by_n.windows(2).all(|w| w[1].power > w[0].power));

    let wide = power_curve(&CurveAxis::Effect(vec![0.0, 40.0, 80.0]), &base).unwrap();
    assert!((wide[0].power - 0.05).abs() < 1e-12);
    // ncp = sqrt(10) at effect 40; about 0.80, and saturated by effect 80.
    assert!((wide[1].power - 0.80).abs() < 0.01, "{}", wide[1].power);
    assert!(wide[2].power > 0.99);
}

#[test]
fn huge_effect_has_no_selection_bias() {
    let design = DesignSpec::new(20, 8).unwrap();
    let params = GenerativeParams::reading_time_defaults(1.0);
    let r = design_analysis(&design, &params, 200, 5, Conditioning::Significant).unwrap();
    assert!(r.power > 0.99);
    assert_eq!(r.type_s, Some(0.0));
    assert!((r.type_m.unwrap() - 1.0).abs() < 0.05);
    assert_eq!(r.n_converged, 200);
}

#[test]
fn exaggeration_grows_as_power_falls() {
    let design = DesignSpec::new(40, 16).unwrap();
    let small = design_analysis(
        &design,
        &GenerativeParams::reading_time_defaults(0.01),
        300,
        9,
        Conditioning::Significant,
    )
    .unwrap();
    let large = design_analysis(
        &design,
        &GenerativeParams::reading_time_defaults(0.1),
        300,
        9,
        Conditioning::Significant,
    )
    .unwrap();
    assert!(small.type_m.unwrap() > large.type_m.unwrap());
    assert!(small.power < large.power);
}

#[test]
fn nonsignificant_conditioning_shrinks_estimates() {
    let design = DesignSpec::new(40, 16).unwrap();
    let params = GenerativeParams::reading_time_defaults(0.05);
    let sig = design_analysis(&design, &params, 200, 4, Conditioning::Significant).unwrap();
    let non = design_analysis(&design, &params, 200, 4, Conditioning::NonSignificant).unwrap();
    assert_eq!(sig.power, non.power);
    assert!(non.type_m.unwrap() < sig.type_m.unwrap());
    assert!(non.type_s.unwrap() >= sig.type_s.unwrap());
}

#[test]
fn report_is_independent_of_thread_count() {
    let design = DesignSpec::new(12, 8).unwrap();
    let params = GenerativeParams::reading_time_defaults(0.05);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| design_analysis(&design, &params, 150, 77, Conditioning::Significant).unwrap())
    };
    assert_eq!(run(1), run(6));
    let stop = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| stopping_simulation(&StoppingRule::default(), 2000, 3).unwrap())
    };
    assert_eq!(stop(1), stop(5));
}

#[test]
fn estimate_experiment_cells() {
    let designs = [DesignSpec::new(30, 16).unwrap(), DesignSpec::new(80, 40).unwrap()];
    let effects = [0.01, 0.05, 0.1];
    let exp = estimate_distribution_experiment(
        &effects,
        &designs,
        &GenerativeParams::reading_time_defaults(0.0),
        200,
        2016,
    )
    .unwrap();
    assert_eq!(exp.cells.len(), 6);
    assert_eq!(exp.rows.len(), 6 * 200);
    for e in 0..3 {
        let (small, medium) = (exp.cells[e].power, exp.cells[3 + e].power);
        // Strict unless the small design is already saturated.
        assert!(medium > small || (small == 1.0 && medium == 1.0), "{small} {medium}");
    }
    let big = &exp.cells[5];
    assert_eq!(big.type_s, Some(0.0));

    // Wrong-sign significant fits occur at roughly 0.35% here (power ~0.08,
    // ncp ~0.7), so this cell needs more replicates than the grid above.
    let low = estimate_distribution_experiment(
        &[0.01],
        &designs[..1],
        &GenerativeParams::reading_time_defaults(0.0),
        1000,
        2016,
    )
    .unwrap();
    let wrong_small = low.rows.iter().filter(|r| r.significant && r.beta_hat < 0.0).count();
    assert!(wrong_small > 0);
}

#[test]
fn stopping_rule_inflates_type_one_error() {
    let fixed = stopping_simulation(&StoppingRule { max_looks: 1, ..Default::default() }, 10_000, 1).unwrap();
    assert!((fixed.type1_rate - 0.05).abs() <= 0.007, "{}", fixed.type1_rate);
    let default = stopping_simulation(&StoppingRule::default(), 10_000, 1).unwrap();
    assert!((default.type1_rate - 0.15).abs() <= 0.02, "{}", default.type1_rate);

    let rates: Vec<f64> = [1, 2, 4, 8]
        .into_iter()
        .map(|max_looks| {
            stopping_simulation(&StoppingRule { max_looks, ..Default::default() }, 10_000, 1)
                .unwrap()
                .type1_rate
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");

    // Excess tail mass at the fixed-n critical value.
    let critical = 2.1447866879169273; // t(0.975, 14)
    let tail = |r: &powersim_core::analysis::StoppingReport| {
        r.final_t_values.iter().filter(|t| t.abs() > critical).count() as f64 / r.n_sims as f64
    };
    assert!(tail(&default) >= 2.0 * tail(&fixed), "{} vs {}", tail(&default), tail(&fixed));
}
