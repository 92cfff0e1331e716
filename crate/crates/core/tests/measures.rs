use proptest::prelude::*;

use spinlab::cone::{contains_bar_uk, scaled_norm, Coords};
use spinlab::harness::instances::permutation_samples;
use spinlab::measures::*;

fn measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.0..1.0f64, 0.1..1.0f64), 1..5).prop_map(|raw| {
        let total: f64 = raw.iter().map(|a| a.1).sum();
        let atoms: Vec<(f64, f64)> = raw.iter().map(|&(x, w)| (x, w / total)).collect();
        DiscreteMeasure::new(&atoms).unwrap()
    })
}

fn ladder(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, k).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

proptest! {
    #[test]
    fn w1_is_a_metric(a in measure(), b in measure(), c in measure()) {
        let d = |x: &DiscreteMeasure, y: &DiscreteMeasure| wasserstein_p(x, y, 1).unwrap();
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!(d(&a, &a).abs() < 1e-15);
    }

    #[test]
    fn w1_below_w2(a in measure(), b in measure()) {
        prop_assert!(wasserstein_p(&a, &b, 1).unwrap() <= wasserstein_p(&a, &b, 2).unwrap() + 1e-12);
    }

    #[test]
    fn inverse_cdf_monotone_right_continuous(a in measure()) {
        let mut r_prev = a.inverse_cdf(0.0).unwrap();
        for (r, v) in a.quantile_steps() {
            for s in [r - 1e-9, r, (r + 1e-9).min(1.0)] {
                let x = a.inverse_cdf(s.max(0.0)).unwrap();
                prop_assert!(x >= r_prev - 1e-15);
                r_prev = x;
            }
            prop_assert_eq!(a.inverse_cdf((r - 1e-9).max(0.0)).unwrap(), v);
        }
    }

    #[test]
    fn discretization_lands_in_cone(a in measure(), b in measure(), k in 1usize..6) {
        let x = discretize_to_cone(&MeasurePair::new(a, b), k).unwrap();
        prop_assert!(contains_bar_uk(&*x, 1e-12));
    }

    // equal-weight sorted measures: W1 is exactly the averaged ℓ¹ distance
    #[test]
    fn cone_round_trip_is_isometric(x in ladder(3), y in ladder(3), u in ladder(3), v in ladder(3)) {
        let interleave = |p: &[f64], q: &[f64]| Coords::new(3, 2, p.iter().zip(q).flat_map(|(a, b)| [*a, *b]).collect()).unwrap();
        let (cx, cy) = (interleave(&x, &u), interleave(&y, &v));
        let (mx, my) = (cone_to_measure_pair(&cx).unwrap(), cone_to_measure_pair(&cy).unwrap());
        let l1 = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0;
        prop_assert!((wasserstein_p(mx.get(0), my.get(0), 1).unwrap() - l1(&x, &y)).abs() < 1e-12);
        prop_assert!((wasserstein_p(mx.get(1), my.get(1), 1).unwrap() - l1(&u, &v)).abs() < 1e-12);
        let diff = Coords::new(3, 2, cx.data().iter().zip(cy.data()).map(|(a, b)| a - b).collect()).unwrap();
        let total = wasserstein_p(mx.get(0), my.get(0), 1).unwrap() + wasserstein_p(mx.get(1), my.get(1), 1).unwrap();
        prop_assert!(total <= 2f64.sqrt() * scaled_norm(&diff, 1.0, false).unwrap() + 1e-12);
        // and back: block means of the equal-weight measure recover the ladder
        let back = discretize_to_cone(&mx, 3).unwrap();
        for (p, q) in back.data().iter().zip(cx.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_construction_is_monotone(a in measure(), b in measure(), seed in any::<u64>()) {
        let s = monotone_coupling_law(&a, &b, 30, &mut spinlab::rng::seeded(seed)).unwrap();
        prop_assert!(monotone_coupling_check(&s, 1e-12).is_monotone());
    }

    #[test]
    fn json_round_trip(a in measure(), b in measure()) {
        let mu = MeasurePair::new(a, b);
        let back: MeasurePair = serde_json::from_str(&serde_json::to_string(&mu).unwrap()).unwrap();
        prop_assert_eq!(back, mu);
    }
}

#[test]
fn coupling_conditions_agree_exhaustively() {
    for n in 1..=6 {
        for s in permutation_samples(n) {
            let r = monotone_coupling_check(&s, 1e-12);
            assert_eq!(r.no_crossing, r.cdf_min_identity, "{:?}", s.pairs());
        }
    }
}
