use proptest::prelude::*;

use emv_alm::closed_form::{optimal_policy, policy_coefficients, ProblemSpec};
use emv_alm::data_ingest::{block_sampler, exp_average_update, label_regimes};
use emv_alm::eval::mean_variance;
use emv_alm::filter::{filter_closed_form, filter_path, filtered_moments, Flavor, MomentSchedule, MomentSet};
use emv_alm::market::step_surplus;
use emv_alm::rng::stream;

fn moment_set() -> impl Strategy<Value = MomentSet> {
    (0.98..1.05f64, 0.0..1e-3f64, 0.95..1.15f64, 5e-3..0.08f64, 0.97..1.06f64, 0.0..0.03f64)
        .prop_map(|(m0, v0, m1, v1, m2, v2)| MomentSet::from_mean_var(m0, v0, m1, v1, m2, v2))
}

fn spec(horizon: usize, d: f64, w: f64, lambda: f64) -> ProblemSpec {
    ProblemSpec { horizon, d, w, lambda, x0: 1.0, l0: 0.1 }
}

proptest! {
    #[test]
    fn filter_stays_a_probability(p12 in 0.0..1.0f64, p21 in 0.0..1.0f64, p0 in 0.0..1.0f64) {
        let p = [[1.0 - p12, p12], [p21, 1.0 - p21]];
        for (t, v) in filter_path(p0, &p, 300).into_iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - filter_closed_form(p0, &p, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn filtered_moments_interpolate(r1 in moment_set(), r2 in moment_set(), s in 0.0..1.0f64) {
        let m = filtered_moments(s, &r1, &r2).unwrap();
        let lo = r1.a0.min(r2.a0);
        let hi = r1.a0.max(r2.a0);
        prop_assert!(m.a0 >= lo - 1e-15 && m.a0 <= hi + 1e-15);
        let e = filtered_moments(1.0, &r1, &r2).unwrap();
        prop_assert!((e.a0 - r1.a0).abs() < 1e-15 && (e.a2 - r1.a2).abs() < 1e-15);
    }

    #[test]
    fn policy_variance_ignores_state(
        m in moment_set(),
        horizon in 2usize..8,
        x in -3.0..3.0f64, l in 0.0..2.0f64,
        x2 in -3.0..3.0f64, l2 in 0.0..2.0f64,
        lambda in 0.1..4.0f64,
    ) {
        let sched = MomentSchedule::constant(m, horizon, Flavor::RegimeConditioned).unwrap();
        let sp = spec(horizon, 2.0, 2.5, lambda);
        for t in 0..horizon {
            let (_, v1) = optimal_policy(t, x, l, &sched, &sp).unwrap();
            let (_, v2) = optimal_policy(t, x2, l2, &sched, &sp).unwrap();
            prop_assert!((v1 - v2).abs() <= 1e-12 * v1.abs());
        }
    }

    #[test]
    fn policy_mean_is_affine(m in moment_set(), horizon in 2usize..8, x in -3.0..3.0f64, l in 0.0..2.0f64, w in 0.5..4.0f64) {
        let sched = MomentSchedule::constant(m, horizon, Flavor::RegimeConditioned).unwrap();
        let sp = spec(horizon, 2.0, w, 1.0);
        let k = policy_coefficients(0, &sched, &sp).unwrap();
        let mid = k.mean(x, l, w);
        let ends = 0.5 * (k.mean(x - 1.0, l - 0.5, w) + k.mean(x + 1.0, l + 0.5, w));
        prop_assert!((mid - ends).abs() <= 1e-10 * (1.0 + mid.abs()));
    }

    #[test]
    fn surplus_step_is_consistent(x in -5.0..5.0f64, l in 0.0..3.0f64, u in -5.0..5.0f64,
                                  e0 in 0.9..1.1f64, e1 in 0.8..1.3f64, q in 0.9..1.1f64) {
        let (xn, ln, sn) = step_surplus(x, l, u, e0, e1, q).unwrap();
        prop_assert_eq!(sn, xn - ln);
        prop_assert!((xn - (e0 * x + (e1 - e0) * u)).abs() < 1e-12);
        prop_assert!((ln - q * l).abs() < 1e-15);
    }

    #[test]
    fn labels_ignore_price_scale(steps in prop::collection::vec(-0.05..0.05f64, 20..400), scale in 0.01..100.0f64) {
        let mut closes = vec![100.0];
        for r in &steps {
            let last = *closes.last().unwrap();
            closes.push(last * (1.0 + r));
        }
        let scaled: Vec<f64> = closes.iter().map(|c| c * scale).collect();
        let a = label_regimes(&closes, 0.24, 0.19).unwrap();
        let b = label_regimes(&scaled, 0.24, 0.19).unwrap();
        prop_assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn exp_average_is_convex(old in -10.0..10.0f64, new in -10.0..10.0f64, n in 2usize..50) {
        let v = exp_average_update(old, new, n).unwrap();
        prop_assert!(v >= old.min(new) - 1e-12 && v <= old.max(new) + 1e-12);
    }

    #[test]
    fn blocks_fit_their_series(lengths in prop::collection::vec(50usize..300, 1..6), seed in 0u64..1000) {
        let mut rng = stream(seed, 0);
        let block = block_sampler(&lengths, 40, &mut rng).unwrap();
        prop_assert!(block.start + block.len <= lengths[block.series]);
    }

    #[test]
    fn variance_ignores_shift(v in prop::collection::vec(-100.0..100.0f64, 2..200), c in -1e3..1e3f64) {
        let (m1, s1) = mean_variance(&v);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let (m2, s2) = mean_variance(&shifted);
        prop_assert!((m2 - m1 - c).abs() < 1e-9);
        prop_assert!((s2 - s1).abs() < 1e-7 * (1.0 + s1));
    }
}
