use proptest::prelude::*;

use spinlab::cone::*;
use spinlab::hj::HamiltonianSpec;

const K: usize = 3;
const D: usize = 2;

fn cone_point() -> impl Strategy<Value = Coords> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, K), D).prop_map(|cols| {
        let mut x = Coords::zeros(K, D);
        for (d, mut c) in cols.into_iter().enumerate() {
            c.sort_by(f64::total_cmp);
            for (k, v) in c.into_iter().enumerate() {
                x.set(k, d, v);
            }
        }
        x
    })
}

fn any_point() -> impl Strategy<Value = Coords> {
    prop::collection::vec(-1.0..1.0f64, K * D).prop_map(|v| Coords::new(K, D, v).unwrap())
}

fn dual_point() -> impl Strategy<Value = Coords> {
    // tail sums of nonnegative weights give the generic dual-cone member
    prop::collection::vec(0.0..1.0f64, K * D).prop_map(|w| {
        let mut v = Coords::zeros(K, D);
        for d in 0..D {
            for k in 0..K {
                let next = if k + 1 < K { w[(k + 1) * D + d] } else { 0.0 };
                v.set(k, d, w[k * D + d] - next);
            }
        }
        v
    })
}

/// Extreme rays of Ū_K: the indicator of levels j..K in one species.
fn rays() -> Vec<Coords> {
    let mut out = vec![];
    for d in 0..D {
        for j in 0..K {
            let mut r = Coords::zeros(K, D);
            for k in j..K {
                r.set(k, d, 1.0);
            }
            out.push(r);
        }
    }
    out
}

/// Generators of the dual: e_{1,d} and e_{k+1,d} − e_{k,d}.
fn dual_generators() -> Vec<Coords> {
    let mut out = vec![];
    for d in 0..D {
        let mut g = Coords::zeros(K, D);
        g.set(0, d, 1.0);
        out.push(g);
        for k in 0..K - 1 {
            let mut g = Coords::zeros(K, D);
            g.set(k + 1, d, 1.0);
            g.set(k, d, -1.0);
            out.push(g);
        }
    }
    out
}

fn combine(a: &Coords, b: &Coords, s: f64, t: f64) -> Coords {
    Coords::new(K, D, a.data().iter().zip(b.data()).map(|(x, y)| s * x + t * y).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn conic_combinations_stay(x in cone_point(), y in cone_point(), v in dual_point(), w in dual_point(), s in 0.0..3.0f64, t in 0.0..3.0f64) {
        prop_assert!(contains_bar_uk(&combine(&x, &y, s, t), 1e-10));
        prop_assert!(contains_dual_cone(&combine(&v, &w, s, t), 1e-10));
    }

    #[test]
    fn duality_pairing(x in cone_point(), v in dual_point()) {
        prop_assert!(contains_dual_cone(&v, 1e-12));
        prop_assert!(x.dot(&v) >= -1e-10);
        // summation by parts: x·v = Σ_k (x_k − x_{k−1})·(tail sum of v from k)
        let tails = v.tail_sums();
        let mut sbp = 0.0;
        for k in 0..K {
            for d in 0..D {
                let prev = if k > 0 { x.get(k - 1, d) } else { 0.0 };
                sbp += (x.get(k, d) - prev) * tails.get(k, d);
            }
        }
        prop_assert!((sbp - x.dot(&v)).abs() < 1e-12);
    }

    #[test]
    fn bidual_characterisations(p in any_point()) {
        let in_cone = dual_generators().iter().all(|g| g.dot(&p) >= -1e-12);
        prop_assert_eq!(contains_bar_uk(&p, 1e-12), in_cone);
        let in_dual = rays().iter().all(|r| r.dot(&p) >= -1e-12);
        prop_assert_eq!(contains_dual_cone(&p, 1e-12), in_dual);
    }

    #[test]
    fn normal_generators_are_outward(x in cone_point(), snap in prop::collection::vec(any::<bool>(), K * D)) {
        // put some coordinates on facets
        let mut y = x.clone();
        for d in 0..D {
            for k in 0..K {
                if snap[k * D + d] {
                    let v = if k == 0 { 0.0 } else { y.get(k - 1, d) };
                    y.set(k, d, v);
                }
            }
        }
        for g in normal_cone_generators(&y, 1e-12).unwrap() {
            let neg = combine(&g, &g, -1.0, 0.0);
            prop_assert!(contains_dual_cone(&neg, 1e-12));
            prop_assert_eq!(g.dot(&y), 0.0);
        }
    }

    #[test]
    fn holder_inequality(x in any_point(), p in any_point(), rho in prop::sample::select(vec![1.0, 1.5, 2.0, 4.0, f64::INFINITY])) {
        let bound = scaled_norm(&x, rho, false).unwrap() * scaled_norm(&p, rho, true).unwrap();
        prop_assert!(x.dot(&p).abs() <= bound * (1.0 + 1e-12) + 1e-12);
    }

    // ∇H swaps the species (times K), which preserves Ū_K
    #[test]
    fn hamiltonian_gradient_preserves_cone(x in cone_point()) {
        let h = 1e-6;
        let mut g = Coords::zeros(K, D);
        for k in 0..K {
            for d in 0..D {
                let mut up = x.data().to_vec();
                let mut dn = x.data().to_vec();
                up[k * D + d] += h;
                dn[k * D + d] -= h;
                let ham = HamiltonianSpec::Bipartite;
                g.set(k, d, (ham.eval(K, &up) - ham.eval(K, &dn)) / (2.0 * h));
            }
        }
        prop_assert!(contains_bar_uk(&g, 1e-6));
    }
}
