use proptest::prelude::*;

use spinlab::cone::Coords;
use spinlab::free_energy::chi_profile;
use spinlab::hj::*;
use spinlab::measures::DiscreteMeasure;

fn convex_poly() -> impl Strategy<Value = Polynomial> {
    (0.0..1.0f64, 0.0..1.0f64, 0.1..2.0f64, 0.0..1.0f64).prop_map(|(a, b, c, d)| Polynomial::new(vec![a, b, c, d]).unwrap())
}

proptest! {
    #[test]
    fn fenchel_young_and_bidual(xi in convex_poly(), r in 0.0..2.0f64, s in -2.0..6.0f64) {
        prop_assert!(xi.eval(r) + xi.conjugate(s) >= r * s - 1e-9);
        // equality at s = ξ′(r), so ξ** = ξ on ℝ₊
        let s_star = xi.derivative(r);
        prop_assert!((xi.eval(r) + xi.conjugate(s_star) - r * s_star).abs() < 1e-8);
    }

    #[test]
    // kinks sit on nodes: a kink inside a cell makes the initial discrete seminorm undershoot
    fn comparison_principle(a in 0.5..4.0f64, b in 0.0..1.0f64, node in 0usize..=12, w in 0.0..0.4f64) {
        let c = node as f64 / 12.0;
        let u0 = move |x: &Coords| 0.3 * (a * x.get(0, 0)).sin() + b * x.get(0, 1);
        let v0 = move |x: &Coords| u0(x) + w * (x.get(0, 1) - c).abs();
        let r = comparison_check(&HamiltonianSpec::Bipartite, &u0, &v0, &GridSpec::new(1, 1.0, 12, 0.4)).unwrap();
        prop_assert!(r.comparison_holds() && r.max_excess <= 1e-10);
        prop_assert!(r.lipschitz_preserved(0.05), "{}", r.lipschitz_growth);
    }

    #[test]
    fn binary_and_csv_round_trip(k in 1usize..=2, n in 2usize..6, t in 0.0..0.3f64, a in -1.0..1.0f64) {
        let init = move |x: &Coords| a * x.get(0, 0) + x.get(x.k() - 1, 1).powi(2);
        let f = solve_hj(&HamiltonianSpec::Bipartite, &init, &GridSpec::new(k, 1.0, n, t)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        f.write_binary(&dir.path().join("f.bin")).unwrap();
        let g = SolutionField::read_binary(&dir.path().join("f.bin")).unwrap();
        prop_assert!(g.values.iter().zip(&f.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        f.write_csv(&dir.path().join("f.csv")).unwrap();
        let rows = csv::Reader::from_path(dir.path().join("f.csv")).unwrap().records().count();
        prop_assert_eq!(rows, f.points().count());
    }
}

#[test]
fn single_type_affine_data() {
    let xi = Polynomial::new(vec![0.0, 0.0, 1.0]).unwrap();
    let ham = HamiltonianSpec::SingleType { xi };
    let t = 0.5;
    for k in [1, 2] {
        let init = |x: &Coords| 0.4 * x.data().iter().sum::<f64>();
        let g = GridSpec::new(k, 1.0, 16, t);
        let f = solve_hj(&ham, &init, &g).unwrap();
        let growth = t * ham.eval(k, &vec![0.4; k]);
        let err = f.points().map(|(x, v)| (v - init(&x) - growth).abs()).fold(0.0, f64::max);
        assert!(err <= 2.0 * g.h() * (1.0 + t), "k={k}: {err}");
    }
}

// the grid solver against the Hopf–Lax formula for a convex ξ at K = 1
#[test]
fn grid_solution_matches_hopf_lax() {
    let xi = Polynomial::new(vec![0.0, 0.0, 1.0]).unwrap();
    let pi = DiscreteMeasure::rademacher(0.5).unwrap();
    let chi = |q: f64| chi_profile(&pi, q, 40).unwrap().chi;
    let t = 0.2;
    let g = GridSpec::new(1, 2.0, 64, t);
    let f = solve_hj(&HamiltonianSpec::SingleType { xi: xi.clone() }, &|x: &Coords| chi(x.get(0, 0)), &g).unwrap();
    let psi1 = |nu: &[f64]| nu.iter().map(|&q| chi(q)).sum::<f64>() / nu.len() as f64;
    for q in [0.1, 0.4, 0.8] {
        let hl = hopf_lax_single_type(&xi, &psi1, t, &DiscreteMeasure::dirac(q).unwrap(), 1, 8, 3).unwrap();
        let grid = f.value_at(&Coords::new(1, 1, vec![q]).unwrap()).unwrap();
        assert!((grid - hl.value).abs() <= 2.0 * g.h(), "q={q}: grid {grid} vs Hopf–Lax {}", hl.value);
    }
}

#[test]
fn saddle_value_shrinks_to_origin() {
    let pi = DiscreteMeasure::rademacher(0.5).unwrap();
    let chi = |q: f64| chi_profile(&pi, q, 30).unwrap().chi;
    let psi = |a: &[f64], b: &[f64]| (a.iter().map(|&q| chi(q)).sum::<f64>() + b.iter().map(|&q| chi(q)).sum::<f64>()) / a.len() as f64;
    let r = pierro_saddle_value(&psi, 1e-3, 2, 4, 1).unwrap();
    assert!(r.value.abs() < 5e-3);
    assert_eq!(r.restart_values.len(), 4);
}
