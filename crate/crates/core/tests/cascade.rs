use proptest::prelude::*;

use spinlab::cascade::*;
use spinlab::free_energy::{quenched_free_energy_with, CascadeTruncation, ModelSpec};
use spinlab::measures::DiscreteMeasure;
use spinlab::rng::seeded;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_normalised_and_decorations_decreasing(z1 in 0.05..0.6f64, dz in 0.0..0.35f64, m in 2usize..12, seed in any::<u64>()) {
        let spec = CascadeSpec::new(vec![z1, z1 + dz], vec![0.0, 0.1, 0.2], vec![0.0, 0.1, 0.2]).unwrap();
        let c = sample_cascade(&spec, m, &mut seeded(seed)).unwrap();
        prop_assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((c.pair_law().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for level in 1..=2 {
            for parent in 0..c.n_vertices(level - 1) {
                for i in 1..m {
                    let (a, b) = (c.log_decoration(level, parent * m + i - 1), c.log_decoration(level, parent * m + i));
                    prop_assert!(a >= b);
                }
            }
        }
    }

    // Jensen: each level's log-exp smoothing is nondecreasing in ζ
    #[test]
    fn recursion_nondecreasing_in_zeta(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, z in 0.1..0.8f64, bump in 0.01..0.15f64) {
        let gh = LevelRule::GaussHermite { order: 24 };
        let terminal = |w: &[Vec<f64>]| {
            let xs = [a * w[1][0] + c * w[2][0], b * w[2][0] - a, c * w[1][0] * w[2][0] * 0.3];
            spinlab::stats::log_sum_exp(&xs)
        };
        let lo = recursive_integrate(terminal, &CascadeSpec::new(vec![z * 0.5, z], vec![0.0; 3], vec![0.0; 3]).unwrap(), &[gh; 3], &mut seeded(0)).unwrap();
        let hi = recursive_integrate(terminal, &CascadeSpec::new(vec![z * 0.5, z + bump], vec![0.0; 3], vec![0.0; 3]).unwrap(), &[gh; 3], &mut seeded(0)).unwrap();
        prop_assert!(hi >= lo - 1e-10, "{lo} {hi}");
    }
}

#[test]
fn truncation_stability() {
    let pm = DiscreteMeasure::rademacher(0.5).unwrap();
    for zeta in [0.5, 0.8] {
        let spec = CascadeSpec::new(vec![zeta], vec![0.1, 0.5], vec![0.2, 0.6]).unwrap();
        let m = ModelSpec::new(2, pm.clone(), pm.clone(), 0.5, spec).unwrap();
        let run = |branching| {
            quenched_free_energy_with(&m, 2000, &CascadeTruncation { branching, leaf_tail: true }, 17).unwrap()
        };
        let (a, b) = (run(200), run(400));
        let (ea, eb) = (a.estimate(), b.estimate());
        assert!((ea.mean - eb.mean).abs() < ea.stderr, "ζ={zeta}: {ea:?} vs {eb:?}");
    }
}

#[test]
fn overlap_law_matches_zeta_gaps() {
    let spec = CascadeSpec::new(vec![0.25, 0.6], vec![0.0; 3], vec![0.0; 3]).unwrap();
    let law = cascade_overlap_law(&spec, 200, 1000, 5).unwrap();
    for (e, p) in law.probabilities.iter().zip([0.25, 0.35, 0.4]) {
        assert!((e.mean - p).abs() < 3.0 * (p * (1.0 - p) / 1000.0f64).sqrt(), "{e:?} vs {p}");
    }
}
