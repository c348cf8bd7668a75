use proptest::prelude::*;

use slvlab::config::RunConfig;
use slvlab::experiments::wilson;
use slvlab::generator::{apply_generator, QuadratureConfig};
use slvlab::model::{condition_table, ModelParams, Verdict};
use slvlab::sde_engine::{simulate_path, SimConfig};
use slvlab::stable_measure::StableMeasure;
use slvlab::test_functions::TestFunction;

fn coef() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.1f64..3.0]
}

fn expo() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), Just(2.0), 0.0f64..3.0]
}

fn theta() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..2.5]
}

prop_compose! {
    fn params()(
        a in prop::array::uniform3(coef()),
        p in prop::array::uniform3(expo()),
        b in prop::array::uniform3(coef()),
        q in prop::array::uniform3(expo()),
        t1 in theta(),
        t2 in theta(),
        k1 in prop_oneof![Just(1.0), 0.2f64..2.0],
        k2 in prop_oneof![Just(1.0), Just(2.0), 0.2f64..2.5],
        e1 in prop_oneof![Just(1.0), 0.1f64..10.0],
        e2 in prop_oneof![Just(1.0), 0.1f64..10.0],
        al in (1.05f64..1.95, 1.05f64..1.95),
    ) -> ModelParams {
        ModelParams {
            a1: a[0], a2: a[1], a3: if a[1] + a[2] == 0.0 { 1.0 } else { a[2] },
            p1: p[0], p2: p[1], p3: p[2],
            b1: b[0], b2: b[1], b3: if b[1] + b[2] == 0.0 { 1.0 } else { b[2] },
            q1: q[0], q2: q[1], q3: q[2],
            theta1: t1, theta2: t2, kappa1: k1, kappa2: k2, eta1: e1, eta2: e2,
            alpha1: al.0, alpha2: al.1,
            ..ModelParams::default()
        }
    }
}

/// Smallest exponent over active terms and the coefficient sum there.
fn effective(c: [f64; 3], e: [f64; 3]) -> (f64, f64) {
    let m = (0..3).filter(|&i| c[i] > 0.0).map(|i| e[i]).fold(f64::INFINITY, f64::min);
    (m, (0..3).filter(|&i| c[i] > 0.0 && e[i] == m).map(|i| c[i]).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn theta2_at_least_one_rules_out_extinction(p in params(), t2 in 1.0f64..3.0) {
        let p = ModelParams { theta2: t2, ..p }.validate(true).unwrap();
        let v = p.classify().verdict;
        prop_assert!(matches!(v, Verdict::NoExtinctionEither | Verdict::NoExtinctionY), "{v:?}");
    }

    #[test]
    fn inactive_pairs_do_not_matter(p in params(), j in 0usize..3, e in 0.0f64..5.0, x_side in any::<bool>()) {
        let mut zeroed = p;
        let (c, ex) = match (x_side, j) {
            (true, 0) => (&mut zeroed.a1, "p1"),
            (true, 1) => (&mut zeroed.a2, "p2"),
            (true, _) => (&mut zeroed.a3, "p3"),
            (false, 0) => (&mut zeroed.b1, "q1"),
            (false, 1) => (&mut zeroed.b2, "q2"),
            (false, _) => (&mut zeroed.b3, "q3"),
        };
        *c = 0.0;
        let mut moved = zeroed;
        moved.set(ex, e).unwrap();
        prop_assert_eq!(zeroed.classify().verdict, moved.classify().verdict);
        prop_assert_eq!(zeroed.derived_exponents(), moved.derived_exponents());
    }

    #[test]
    fn verdict_agrees_with_independent_evaluation(p in params()) {
        let p = p.validate(true).unwrap();
        let r = p.classify();
        let (pp, _) = effective([p.a1, p.a2, p.a3], [p.p1, p.p2, p.p3]);
        let (qq, _) = effective([p.b1, p.b2, p.b3], [p.q1, p.q2, p.q3]);
        let den = qq + 1.0 - p.theta2;
        let gap = 1e-6;
        // Clear-cut instances of the first two theorem cases.
        if p.theta1 >= 1.0 && p.theta2 < 1.0 - gap && pp < p.kappa2 * qq / den - gap {
            prop_assert_eq!(r.verdict, Verdict::PartialExtinctionY);
        }
        let third = p.theta1 - 1.0 - p.kappa2 * (qq - p.kappa1) / den;
        if p.theta1 >= 1.0 && p.theta2 < 1.0 - gap && third > gap && pp > p.kappa2 * qq / den + gap {
            prop_assert_eq!(r.verdict, Verdict::SureExtinctionY);
        }
        let t = condition_table(&p, 1e-12);
        let used = ["theta2>=1", "iia", "iib", "iic", "iid", "iiia", "iiib",
            "C1.4(i)", "C1.4(ii)", "C1.4(iii)", "C1.5(i)", "C1.5(ii)"];
        let any = used.iter().any(|f| t.flag(f));
        prop_assert_eq!(r.verdict == Verdict::Unsettled, !any);
        prop_assert_eq!(r.fired_conditions.is_empty(), r.verdict == Verdict::Unsettled);
    }

    #[test]
    fn wilson_interval_contains_estimate(n in 1u64..5000, f in 0.0f64..=1.0) {
        let k = (f * n as f64).round() as u64;
        let (lo, hi) = wilson(k, n);
        let est = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= est && est <= hi && hi <= 1.0);
    }

    #[test]
    fn config_text_round_trip(p in params(), seed in any::<u64>(), dt in 1e-5f64..0.1) {
        let mut c = RunConfig::default();
        c.params = p;
        c.sim.master_seed = seed;
        c.sim.dt = dt;
        prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn paths_are_reproducible_and_nonnegative(p in params(), seed in any::<u64>(), path in 0u64..1000) {
        let p = p.validate(true).unwrap();
        let cfg = SimConfig {
            horizon: 0.2,
            dt: 1e-2,
            master_seed: seed,
            record_checkpoints: true,
            ..SimConfig::default()
        }
        .with_uniform_checkpoints(4);
        let a = simulate_path(&p, &cfg, path).unwrap();
        let b = simulate_path(&p, &cfg, path).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.terminal.0 >= 0.0 && a.terminal.1 >= 0.0);
        for (_, x, y) in a.checkpoints.unwrap() {
            prop_assert!(x >= 0.0 && y >= 0.0);
        }
    }

    #[test]
    fn generator_is_linear(p in params(), x in 0.1f64..2.0, y in 0.1f64..2.0, c in -3.0f64..3.0) {
        let q = QuadratureConfig::default();
        let g1 = TestFunction::power_ratio(2.0, 0.25, 0.5).unwrap();
        let g2 = TestFunction::log_sum(3.0, 0.5).unwrap();
        let sum = TestFunction::Combination(vec![(1.0, g1.clone()), (c, g2.clone())]);
        let (t1, t2, ts) = (
            apply_generator(&p, &g1, x, y, &q).unwrap(),
            apply_generator(&p, &g2, x, y, &q).unwrap(),
            apply_generator(&p, &sum, x, y, &q).unwrap(),
        );
        for ((a, b), s) in t1.parts().iter().zip(t2.parts()).zip(ts.parts()) {
            let want = a + c * b;
            prop_assert!((s - want).abs() <= 1e-10 * (1.0 + a.abs() + (c * b).abs()), "{s} vs {want}");
        }
    }

    #[test]
    fn tail_mass_is_additive(alpha in 1.05f64..1.95, d1 in 0.01f64..1.0, r in 1.01f64..100.0) {
        let m = StableMeasure::new(alpha).unwrap();
        let d2 = d1 * r;
        let diff = m.tail_mass(d1).unwrap() - m.tail_mass(d2).unwrap();
        let want = m.c_alpha() * (d1.powf(-alpha) - d2.powf(-alpha)) / alpha;
        prop_assert!((diff - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}
