use proptest::prelude::*;

use spinlab::cascade::CascadeSpec;
use spinlab::cone::{tilted_check, GridSample};
use spinlab::free_energy::*;
use spinlab::harness::instances::*;
use spinlab::measures::{DiscreteMeasure, MeasurePair};
use spinlab::rng::seeded;

fn pm() -> DiscreteMeasure {
    DiscreteMeasure::rademacher(0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn covariance_gram_matches_embedding(seed in any::<u64>(), p in 1u32..=4, l1 in 0.0..2.0f64, l2 in 0.0..2.0f64) {
        let mut rng = seeded(seed);
        let pts = random_spin_leaf_points(&mut rng, 8, 3, 2, 3);
        let c = perturbation_covariance_embed(&pts, l1, l2, p).unwrap();
        prop_assert!(c.agrees(1e-10), "{}", c.max_abs_diff);
        prop_assert!(c.is_psd(), "{}", c.min_eigenvalue);
    }

    #[test]
    fn enriched_free_energy_is_finite_and_normalised(seed in any::<u64>(), t in 0.0..1.0f64, q in 0.0..1.0f64) {
        let spec = CascadeSpec::new(vec![0.5], vec![0.0, q], vec![0.0, q * 0.5]).unwrap();
        let m = ModelSpec::new(2, pm(), DiscreteMeasure::rademacher(0.3).unwrap(), t, spec).unwrap();
        let d = DisorderSample::draw(&m, &CascadeTruncation::plain(8), &mut seeded(seed)).unwrap();
        let s1 = SpinSpace::enumerate(m.pi(0), 2).unwrap();
        let s2 = SpinSpace::enumerate(m.pi(1), 2).unwrap();
        let ens = GibbsEnsemble::new(&m, [&s1, &s2], &d).unwrap();
        prop_assert!(ens.free_energy().is_finite());
        let masses = ens.term_masses();
        prop_assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let law: f64 = ens.replica_moments().iter().map(|r| r[0]).sum();
        prop_assert!((law - 1.0).abs() < 1e-10);
    }
}

#[test]
fn initial_value_independent_of_n() {
    let mu = MeasurePair::new(DiscreteMeasure::new(&[(0.2, 0.4), (0.7, 0.6)]).unwrap(), DiscreteMeasure::dirac(0.5).unwrap());
    let psi = initial_condition_psi(&mu, &pm(), &pm(), 40).unwrap();
    let spec = CascadeSpec::from_measure_pair(&mu).unwrap();
    for n in [1, 2, 4] {
        let m = ModelSpec::new(n, pm(), pm(), 0.0, spec.clone()).unwrap();
        let e = quenched_free_energy(&m, 400, &CascadeTruncation { branching: 50, leaf_tail: true }, 30 + n as u64).unwrap();
        assert!((e.mean - psi).abs() <= 3.0 * e.stderr, "N={n}: {e:?} vs {psi}");
    }
}

// with common disorder across the grid, q ↦ F̄_N is nondecreasing in each
// coordinate, which is tiltedness for K = 1
#[test]
fn free_energy_is_tilted_in_q() {
    let h = 0.25;
    let mut values = vec![];
    for i in 0..3 {
        for j in 0..3 {
            let spec = CascadeSpec::flat(i as f64 * h, j as f64 * h).unwrap();
            let m = ModelSpec::new(2, pm(), pm(), 0.5, spec).unwrap();
            values.push(quenched_free_energy(&m, 2000, &CascadeTruncation::default(), 8).unwrap().mean);
        }
    }
    let g = GridSample { k: 1, d: 2, origin: vec![0.0, 0.0], h, counts: vec![3, 3], values };
    assert!(tilted_check(&g, 1e-4).unwrap(), "{:?}", g.values);
}

#[test]
fn integration_by_parts_on_random_instances() {
    let mut rng = seeded(77);
    for i in 0..3 {
        let c = random_psd(&mut rng, 6);
        let p = random_probability(&mut rng, 3);
        let r = gibp_check(&c, &p, 200_000, 700 + i).unwrap();
        assert!(r.passes(3.5), "{r:?}");
    }
}

#[test]
fn residual_bound_and_conditional_variance() {
    let spec = CascadeSpec::new(vec![0.5], vec![0.0, 0.3], vec![0.0, 0.2]).unwrap();
    let m = ModelSpec::new(3, pm(), pm(), 0.4, spec).unwrap();
    let stats = gibbs_overlap_stats(&m, 300, 4, &CascadeTruncation { branching: 50, leaf_tail: true }, 9).unwrap();
    assert!(hj_residual_estimate(&m, &stats).unwrap().holds(3.0));
    for cv in conditional_variance_estimate(&stats) {
        assert!(cv.conditional.mean >= -1e-12);
        assert!(cv.conditional.mean <= cv.unconditional.mean + 3.0 * cv.unconditional.stderr);
    }
    let total: u64 = stats.histogram_entries().iter().map(|e| e.1).sum();
    assert_eq!(total, 300 * 4);
}
