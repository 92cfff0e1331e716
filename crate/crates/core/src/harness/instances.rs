//! Random instance generators shared by the validation suite and tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::linalg::SymMatrix;
use crate::measures::{DiscreteMeasure, JointSample, MeasurePair};

/// Up to `max_atoms` atoms on [0, q_max] with random positive weights.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize, q_max: f64) -> DiscreteMeasure {
    let n = rng.gen_range(1..=max_atoms.max(1));
    let raw: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..=q_max), rng.gen_range(0.1..1.0))).collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let atoms: Vec<(f64, f64)> = raw.iter().map(|&(x, w)| (x, w / total)).collect();
    DiscreteMeasure::with_bound(&atoms, q_max).expect("atoms inside the bound")
}

pub fn random_measure_pair<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize, q_max: f64) -> MeasurePair {
    MeasurePair::new(random_measure(rng, max_atoms, q_max), random_measure(rng, max_atoms, q_max))
}

/// A Aᵀ with A uniform on [−1, 1]^{d×d}.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, d: usize) -> SymMatrix {
    let a: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut c = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            c[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum();
        }
    }
    SymMatrix::new(d, c).expect("square")
}

pub fn random_probability<R: Rng + ?Sized>(rng: &mut R, s: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..s).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// (σ ∈ {−1,1}^n, α ∈ {0..branching}^depth) pairs.
pub fn random_spin_leaf_points<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    n: usize,
    depth: usize,
    branching: usize,
) -> Vec<(Vec<f64>, Vec<usize>)> {
    (0..count)
        .map(|_| {
            let sigma = (0..n).map(|_| if rng.gen() { 1.0 } else { -1.0 }).collect();
            let alpha = (0..depth).map(|_| rng.gen_range(0..branching)).collect();
            (sigma, alpha)
        })
        .collect()
}

/// Every joint sample {(i, π(i))} of size `n` with distinct coordinates,
/// up to relabelling: one per permutation π.
pub fn permutation_samples(n: usize) -> Vec<JointSample> {
    let mut out = vec![];
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut out);
    out
}

fn permute(p: &mut Vec<usize>, i: usize, out: &mut Vec<JointSample>) {
    if i == p.len() {
        let pairs = p.iter().enumerate().map(|(x, &y)| (x as f64, y as f64)).collect();
        out.push(JointSample::new(pairs).expect("n ≥ 1"));
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, out);
        p.swap(i, j);
    }
}

/// Random joint sample of size n with distinct coordinates.
pub fn random_distinct_sample<R: Rng + ?Sized>(rng: &mut R, n: usize) -> JointSample {
    let mut ys: Vec<usize> = (0..n).collect();
    ys.shuffle(rng);
    JointSample::new(ys.iter().enumerate().map(|(x, &y)| (x as f64, y as f64)).collect()).expect("n ≥ 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn permutations_are_complete() {
        assert_eq!(permutation_samples(4).len(), 24);
        assert_eq!(permutation_samples(1).len(), 1);
    }

    #[test]
    fn generated_objects_are_valid() {
        let mut rng = seeded(2);
        for _ in 0..50 {
            let m = random_measure(&mut rng, 3, 1.0);
            assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(random_psd(&mut rng, 4).min_eigenvalue() > -1e-12);
        }
    }
}
