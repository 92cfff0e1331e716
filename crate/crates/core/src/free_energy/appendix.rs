use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::linalg::{eigh, psd_sqrt, SymMatrix};
use crate::rng::task_rng;
use crate::stats::{Estimate, Welford};

const PSD_TOL: f64 = 1e-9;
const CHUNK: usize = 1 << 14;

/// Both sides of the first- and second-moment integration by parts
/// identities, and their per-sample difference.
#[derive(Clone, Copy, Debug)]
pub struct GibpReport {
    pub lhs1: Estimate,
    pub rhs1: Estimate,
    pub diff1: Estimate,
    pub lhs2: Estimate,
    pub rhs2: Estimate,
    pub diff2: Estimate,
}

impl GibpReport {
    pub fn passes(&self, k_sigma: f64) -> bool {
        let ok = |d: &Estimate| d.mean.abs() <= k_sigma * d.stderr + 1e-12;
        ok(&self.diff1) && ok(&self.diff2)
    }
}

/// `c` is the 2S×2S covariance of (x_1(σ))_σ followed by (x_2(σ))_σ, the
/// Gibbs measure is built from x_2 with prior weights `p`.
pub fn gibp_check(c: &SymMatrix, p: &[f64], n_mc: usize, seed: u64) -> Result<GibpReport> {
    let s = p.len();
    if s == 0 || s > 8 {
        return domain(format!("|Σ| = {s} outside 1..=8"));
    }
    if c.dim() != 2 * s {
        return domain(format!("covariance of size {} for |Σ| = {s}", c.dim()));
    }
    if p.iter().any(|&w| !(w > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return domain("P must be a probability vector with positive weights");
    }
    if n_mc < 2 {
        return domain("need at least two Monte Carlo samples");
    }
    let l = psd_sqrt(c, PSD_TOL)?;
    let d = 2 * s;
    let c11 = |i: usize, j: usize| c.get(i, j);
    let c12 = |i: usize, j: usize| c.get(i, s + j);
    let n_chunks = n_mc.div_ceil(CHUNK);
    let acc = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = task_rng(seed, chunk as u64);
            let mut w = vec![Welford::new(); 6];
            let mut xi = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut g = vec![0.0; s];
            for _ in 0..CHUNK.min(n_mc - chunk * CHUNK) {
                xi.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                for r in 0..d {
                    x[r] = (0..d).map(|k| l[r * d + k] * xi[k]).sum();
                }
                let mx = x[s..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for i in 0..s {
                    g[i] = p[i] * (x[s + i] - mx).exp();
                }
                let z: f64 = g.iter().sum();
                g.iter_mut().for_each(|v| *v /= z);

                let lhs1: f64 = (0..s).map(|i| g[i] * x[i]).sum();
                let lhs2: f64 = (0..s).map(|i| g[i] * x[i] * x[i]).sum();
                // c̄(σ) = ⟨C12(σ, σ″)⟩
                let cbar: Vec<f64> = (0..s).map(|i| (0..s).map(|j| g[j] * c12(i, j)).sum()).collect();
                let mut rhs1 = 0.0;
                let mut rhs2 = 0.0;
                for i in 0..s {
                    let a = c12(i, i);
                    rhs1 += g[i] * (a - cbar[i]);
                    rhs2 += g[i] * c11(i, i);
                    for j in 0..s {
                        let b = c12(i, j);
                        rhs2 += g[i] * g[j] * (a - b) * (a + b - 2.0 * cbar[i]);
                    }
                }
                for (acc, v) in w.iter_mut().zip([lhs1, rhs1, lhs1 - rhs1, lhs2, rhs2, lhs2 - rhs2]) {
                    acc.push(v);
                }
            }
            w
        })
        .reduce(
            || vec![Welford::new(); 6],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y));
                a
            },
        );
    let e: Vec<Estimate> = acc.iter().map(|w| w.estimate()).collect();
    Ok(GibpReport { lhs1: e[0], rhs1: e[1], diff1: e[2], lhs2: e[3], rhs2: e[4], diff2: e[5] })
}

/// Gram matrix of (λ1 σ·σ′ + λ2 α∧α′)^p computed from the formula and from
/// explicit p-fold tensor powers of (√λ1 σ, √λ2 g_α), g_α the sum of
/// orthonormal vectors attached to the vertices above α.
#[derive(Clone, Debug)]
pub struct CovarianceCertificate {
    pub size: usize,
    pub formula: Vec<f64>,
    pub tensor: Vec<f64>,
    pub max_abs_diff: f64,
    pub min_eigenvalue: f64,
}

impl CovarianceCertificate {
    pub fn agrees(&self, tol: f64) -> bool {
        self.max_abs_diff <= tol
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
    }
}

pub fn perturbation_covariance_embed(
    points: &[(Vec<f64>, Vec<usize>)],
    lambda1: f64,
    lambda2: f64,
    p: u32,
) -> Result<CovarianceCertificate> {
    if p == 0 {
        return domain("p must be at least 1");
    }
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return domain("λ1 and λ2 must be nonnegative");
    }
    let size = points.len();
    if size == 0 || size > 64 {
        return domain(format!("{size} points outside 1..=64"));
    }
    let n = points[0].0.len();
    let k = points[0].1.len();
    if points.iter().any(|(s, a)| s.len() != n || a.len() != k) {
        return domain("points must share N and the cascade depth");
    }
    // one basis vector per distinct vertex α|ℓ, ℓ = 1..k
    let mut vertex: HashMap<&[usize], usize> = HashMap::new();
    for (_, a) in points {
        for l in 1..=k {
            let next = vertex.len();
            vertex.entry(&a[..l]).or_insert(next);
        }
    }
    let dim = n + vertex.len();
    let full = (dim as u128).pow(p);
    if full > 1 << 22 {
        return Err(Error::Resource(format!("tensor dimension {dim}^{p}")));
    }
    let base: Vec<Vec<f64>> = points
        .iter()
        .map(|(s, a)| {
            let mut v: Vec<f64> = s.iter().map(|x| lambda1.sqrt() * x).collect();
            v.resize(dim, 0.0);
            for l in 1..=k {
                v[n + vertex[&a[..l]]] += lambda2.sqrt();
            }
            v
        })
        .collect();
    let tensors: Vec<Vec<f64>> = base
        .iter()
        .map(|v| {
            let mut t = vec![1.0];
            for _ in 0..p {
                t = t.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
            }
            t
        })
        .collect();
    let wedge = |a: &[usize], b: &[usize]| a.iter().zip(b).take_while(|(x, y)| x == y).count() as f64;
    let mut formula = vec![0.0; size * size];
    let mut tensor = vec![0.0; size * size];
    let mut max_abs_diff: f64 = 0.0;
    for i in 0..size {
        for j in 0..size {
            let dot: f64 = points[i].0.iter().zip(&points[j].0).map(|(a, b)| a * b).sum();
            let f = (lambda1 * dot + lambda2 * wedge(&points[i].1, &points[j].1)).powi(p as i32);
            let t: f64 = tensors[i].iter().zip(&tensors[j]).map(|(a, b)| a * b).sum();
            formula[i * size + j] = f;
            tensor[i * size + j] = t;
            max_abs_diff = max_abs_diff.max((f - t).abs());
        }
    }
    let min_eigenvalue = eigh(&SymMatrix::new(size, formula.clone())?).values[0];
    Ok(CovarianceCertificate { size, formula, tensor, max_abs_diff, min_eigenvalue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_psd(d: usize, rng: &mut crate::rng::Rng) -> SymMatrix {
        let a: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum();
            }
        }
        SymMatrix::new(d, c).unwrap()
    }

    #[test]
    fn single_point_is_trivial() {
        let c = SymMatrix::new(2, vec![1.0, 0.4, 0.4, 2.0]).unwrap();
        let r = gibp_check(&c, &[1.0], 20_000, 1).unwrap();
        assert_eq!(r.rhs1.mean, 0.0);
        assert!(r.lhs1.mean.abs() < 3.0 * r.lhs1.stderr);
        assert!(r.passes(3.0));
    }

    #[test]
    fn independent_fields() {
        let mut rng = seeded(3);
        let c1 = random_psd(3, &mut rng);
        let c2 = random_psd(3, &mut rng);
        let mut c = vec![0.0; 36];
        for i in 0..3 {
            for j in 0..3 {
                c[i * 6 + j] = c1.get(i, j);
                c[(i + 3) * 6 + j + 3] = c2.get(i, j);
            }
        }
        let r = gibp_check(&SymMatrix::new(6, c).unwrap(), &[0.2, 0.3, 0.5], 100_000, 2).unwrap();
        assert_eq!(r.rhs1.mean, 0.0);
        assert!(r.passes(3.5), "{r:?}");
    }

    #[test]
    fn random_instance() {
        let mut rng = seeded(8);
        let c = random_psd(8, &mut rng);
        let r = gibp_check(&c, &[0.1, 0.2, 0.3, 0.4], 200_000, 5).unwrap();
        assert!(r.passes(3.5), "{r:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let c = SymMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(gibp_check(&c, &[1.0], 100, 0).is_err());
        assert!(gibp_check(&SymMatrix::identity(4), &[1.0], 100, 0).is_err());
        assert!(perturbation_covariance_embed(&[(vec![1.0], vec![0])], 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn embedding_examples() {
        let pts = vec![
            (vec![1.0, -1.0], vec![0, 0]),
            (vec![1.0, 1.0], vec![0, 1]),
            (vec![-1.0, 1.0], vec![1, 0]),
            (vec![0.5, 0.5], vec![0, 0]),
        ];
        let c = perturbation_covariance_embed(&pts, 0.0, 1.0, 1).unwrap();
        assert_eq!(c.formula[1], 1.0);
        assert_eq!(c.formula[2], 0.0);
        assert_eq!(c.formula[3], 2.0);
        assert!(c.agrees(1e-12) && c.is_psd());
        let c = perturbation_covariance_embed(&pts, 2.0, 0.0, 1).unwrap();
        assert_eq!(c.formula[1], 0.0);
        assert!(c.agrees(1e-12) && c.is_psd());

        let mut rng = seeded(1);
        let pts: Vec<(Vec<f64>, Vec<usize>)> = (0..16)
            .map(|_| {
                ((0..3).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect(), vec![rng.gen_range(0..2), rng.gen_range(0..2)])
            })
            .collect();
        let c = perturbation_covariance_embed(&pts, 1.0, 1.0, 3).unwrap();
        assert!(c.agrees(1e-10), "{}", c.max_abs_diff);
        assert!(c.is_psd());
    }
}
