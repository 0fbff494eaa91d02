//! Property tests for the invariants the library leans on: envelope and
//! step-function domination, pseudometric axioms of the parameter
//! distance, projection soundness, constraint-set nesting, band-draw
//! consequences, EM monotonicity, and interval bookkeeping.

use proptest::prelude::*;

use ratio_mle::verify::draw_in_band;
use ratio_mle::{
    em_step, logaddexp, meets_ratio_floor, meets_scale_floor, param_distance, project_scales,
    Component, Family, IntervalSet, MixtureParams, ALL_FAMILIES,
};

fn family_strategy() -> impl Strategy<Value = Family> {
    prop::sample::select(ALL_FAMILIES.to_vec())
}

fn fittable_family_strategy() -> impl Strategy<Value = Family> {
    prop::sample::select(vec![Family::Normal, Family::Laplace, Family::Logistic])
}

/// Random valid mixture with `m` components, moderate locations, and
/// log-spread scales.
fn mixture_strategy(m: usize) -> impl Strategy<Value = MixtureParams> {
    (
        prop::collection::vec(0.05f64..1.0, m),
        prop::collection::vec(-10.0f64..10.0, m),
        prop::collection::vec(-3.0f64..2.0, m),
        prop::collection::vec(family_strategy(), m),
    )
        .prop_map(|(raw_weights, mus, sigma_logs, families)| {
            let total: f64 = raw_weights.iter().sum();
            let components = raw_weights
                .into_iter()
                .zip(mus)
                .zip(sigma_logs)
                .zip(families)
                .map(|(((w, mu), ls), family)| Component {
                    family,
                    weight: w / total,
                    mu,
                    sigma: 10f64.powf(ls),
                })
                .collect();
            MixtureParams::new(components).expect("strategy builds valid parameters")
        })
}

proptest! {
    #[test]
    fn envelope_dominates_all_families(
        family in family_strategy(),
        z in -1e6f64..1e6,
    ) {
        let bound = family.envelope().bound(z);
        let pdf = family.standard_pdf(z);
        prop_assert!(pdf <= bound + 1e-12, "pdf {pdf} > bound {bound} at z = {z}");
    }

    #[test]
    fn step_bound_dominates_scaled_density(
        family in family_strategy(),
        mu in -50.0f64..50.0,
        sigma_log in -6.0f64..3.0,
        x in -100.0f64..100.0,
    ) {
        let sigma = 10f64.powf(sigma_log);
        let density = family.standard_pdf((x - mu) / sigma) / sigma;
        let bound = family.step_bound(x, mu, sigma).unwrap();
        prop_assert!(density <= bound + 1e-12 * bound.max(1.0));
    }

    #[test]
    fn logaddexp_agrees_with_direct_sum(a in -200.0f64..200.0, b in -200.0f64..200.0) {
        // at these magnitudes the direct computation in shifted space is
        // exact enough to compare against
        let expected = (a.exp() + b.exp()).ln();
        let got = logaddexp(a, b);
        if expected.is_finite() {
            prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
        prop_assert!(got >= a.max(b));
        prop_assert_eq!(logaddexp(a, b), logaddexp(b, a));
    }

    #[test]
    fn distance_is_a_pseudometric(
        a in mixture_strategy(2),
        b in mixture_strategy(2),
        c in mixture_strategy(2),
    ) {
        let dab = param_distance(&a, &b).unwrap();
        let dba = param_distance(&b, &a).unwrap();
        prop_assert!((dab - dba).abs() <= 1e-12 * dab.max(1.0), "symmetry: {dab} vs {dba}");
        prop_assert_eq!(param_distance(&a, &a).unwrap(), 0.0);
        let dac = param_distance(&a, &c).unwrap();
        let dcb = param_distance(&c, &b).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-9, "triangle: {dab} > {dac} + {dcb}");
    }

    #[test]
    fn projection_is_sound_and_idempotent(
        theta in mixture_strategy(3),
        b in 1e-6f64..0.999,
    ) {
        let guard = 1e-30;
        let (projected, effect) = project_scales(&theta, b, guard).unwrap();
        prop_assert!(meets_ratio_floor(&projected, b));
        // projection may only raise scales, never lower them
        for (before, after) in theta.components().iter().zip(projected.components()) {
            prop_assert!(after.sigma >= before.sigma);
            prop_assert_eq!(before.mu, after.mu);
            prop_assert_eq!(before.weight, after.weight);
        }
        let (again, second_effect) = project_scales(&projected, b, guard).unwrap();
        prop_assert_eq!(&again, &projected);
        prop_assert_eq!(second_effect.raised, 0);
        // raised counts are consistent with an actual change
        if effect.raised == 0 {
            prop_assert_eq!(&projected, &theta);
        }
    }

    #[test]
    fn constraint_sets_are_nested(
        theta in mixture_strategy(3),
        b_lo in 1e-6f64..0.5,
        b_hi in 0.5f64..0.999,
    ) {
        // a point feasible at the tighter floor is feasible at the looser
        if meets_ratio_floor(&theta, b_hi) {
            prop_assert!(meets_ratio_floor(&theta, b_lo));
        }
        if meets_scale_floor(&theta, b_hi) {
            prop_assert!(meets_scale_floor(&theta, b_lo));
        }
    }

    #[test]
    fn band_draws_obey_the_scale_ceiling(
        seed in 0u64..1_000,
        log_b in -60.0f64..-0.1,
        gap in 0.1f64..60.0,
        m in 1usize..4,
    ) {
        // scale floor sits below the ratio floor band by `gap` in log space
        let log_c = log_b - gap;
        let families = vec![Family::Normal; m];
        let mut rng = ratio_mle::derive_rng(seed, &[]);
        let theta = draw_in_band(&families, log_b, log_c, (-1.0, 1.0), &mut rng).unwrap();
        prop_assert!(meets_ratio_floor(&theta, log_b.exp()));
        prop_assert!(!meets_scale_floor(&theta, log_c.exp()));
        // every scale of a band point is capped by scale_floor / ratio_floor
        let ceiling = (log_c - log_b).exp();
        prop_assert!(
            theta.sigma_max() <= ceiling * (1.0 + 1e-12),
            "sigma_max {} > ceiling {ceiling}",
            theta.sigma_max()
        );
    }

    #[test]
    fn interval_counting_matches_naive_scan(
        raw in prop::collection::vec((-50.0f64..50.0, 0.0f64..10.0), 1..6),
        points in prop::collection::vec(-60.0f64..60.0, 0..40),
    ) {
        let intervals: Vec<(f64, f64)> = raw.iter().map(|&(lo, len)| (lo, lo + len)).collect();
        let set = IntervalSet::new(intervals.clone());
        let naive = points
            .iter()
            .filter(|&&x| intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi))
            .count();
        prop_assert_eq!(set.count_within(&points), naive);
        for &x in &points {
            let hit = intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi);
            prop_assert_eq!(set.contains(x), hit);
        }
    }

    #[test]
    fn mixture_json_round_trips(theta in mixture_strategy(3)) {
        let json = serde_json::to_string(&theta).unwrap();
        let back: MixtureParams = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, theta);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn em_never_decreases_normal_likelihood(
        data in prop::collection::vec(-5.0f64..5.0, 20..50),
        mu1 in -4.0f64..0.0,
        mu2 in 0.0f64..4.0,
        sigma_log in -0.5f64..0.5,
        w in 0.2f64..0.8,
    ) {
        let mut theta = MixtureParams::new(vec![
            Component {
                family: Family::Normal,
                weight: w,
                mu: mu1,
                sigma: 10f64.powf(sigma_log),
            },
            Component {
                family: Family::Normal,
                weight: 1.0 - w,
                mu: mu2,
                sigma: 1.0,
            },
        ])
        .unwrap();
        let mut prev = theta.loglik(&data).unwrap();
        for _ in 0..5 {
            theta = em_step(&theta, &data).unwrap();
            let ll = theta.loglik(&data).unwrap();
            prop_assert!(ll >= prev - 1e-7 * prev.abs().max(1.0), "{prev} -> {ll}");
            prev = ll;
        }
    }

    #[test]
    fn fitted_parameters_respect_the_floor(
        seed in 0u64..500,
        b_log in -20.0f64..-0.01,
        family in fittable_family_strategy(),
    ) {
        let model = MixtureParams::new(vec![
            Component { family, weight: 0.5, mu: -2.0, sigma: 1.0 },
            Component { family, weight: 0.5, mu: 2.0, sigma: 1.0 },
        ])
        .unwrap();
        let data = model.sample(60, &mut ratio_mle::derive_rng(seed, &[1])).unwrap();
        let b = b_log.exp();
        let mut config = ratio_mle::FitConfig {
            num_components: 2,
            families: vec![family; 2],
            ratio_floor: b,
            ..ratio_mle::FitConfig::normal(2, b, seed)
        };
        config.restarts = 2;
        config.max_iters = 40;
        let result = ratio_mle::fit_constrained(&data, &config).unwrap();
        prop_assert!(meets_ratio_floor(&result.theta_hat, b));
        prop_assert!(result.loglik.is_finite());
        let direct = result.theta_hat.loglik(&data).unwrap();
        prop_assert!((result.loglik - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }
}
