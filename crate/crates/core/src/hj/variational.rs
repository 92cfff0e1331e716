use rand::Rng;
use rayon::prelude::*;

use super::Polynomial;
use crate::error::{domain, Result};
use crate::measures::{merge_steps, DiscreteMeasure};
use crate::rng::task_rng;

pub const DEFAULT_RESTARTS: usize = 16;
const GOLDEN_ITERS: usize = 40;
const MAX_SWEEPS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// best value reached by each restart
    pub restart_values: Vec<f64>,
}

/// Sorted blocks of coordinates, each confined to [lo, hi].
struct Blocks {
    sizes: Vec<usize>,
    lo: f64,
    hi: f64,
}

impl Blocks {
    fn bounds(&self, x: &[f64], i: usize) -> (f64, f64) {
        let mut start = 0;
        for &s in &self.sizes {
            if i < start + s {
                let lo = if i > start { x[i - 1] } else { self.lo };
                let hi = if i + 1 < start + s { x[i + 1] } else { self.hi };
                return (lo, hi);
            }
            start += s;
        }
        unreachable!("coordinate inside some block")
    }

    fn random<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.sizes
            .iter()
            .flat_map(|&s| {
                let mut v: Vec<f64> = (0..s).map(|_| rng.gen_range(self.lo..=self.hi)).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect()
    }
}

fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Projected coordinate ascent over sorted blocks with multi-start.
fn maximise<F>(obj: &F, blocks: &Blocks, start: Vec<f64>, restarts: usize, seed: u64) -> Optimum
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let runs: Vec<(f64, Vec<f64>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut x = if r == 0 { start.clone() } else { blocks.random(&mut task_rng(seed, r as u64)) };
            let mut best = obj(&x);
            for _ in 0..MAX_SWEEPS {
                let before = best;
                for i in 0..x.len() {
                    let (lo, hi) = blocks.bounds(&x, i);
                    if hi <= lo {
                        continue;
                    }
                    let mut y = x.clone();
                    let (arg, val) = golden_max(
                        |c| {
                            y[i] = c;
                            obj(&y)
                        },
                        lo,
                        hi,
                    );
                    if val > best {
                        x[i] = arg;
                        best = val;
                    }
                }
                if best - before < 1e-10 {
                    break;
                }
            }
            (best, x)
        })
        .collect();
    let restart_values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (value, argmax) = runs.into_iter().fold((f64::NEG_INFINITY, vec![]), |acc, r| if r.0 > acc.0 { r } else { acc });
    Optimum { value, argmax, restart_values }
}

fn block_steps(nu: &[f64]) -> Vec<(f64, f64)> {
    let k = nu.len() as f64;
    nu.iter().enumerate().map(|(i, &v)| ((i + 1) as f64 / k, v)).collect()
}

/// sup over ν with K_opt equal quantile blocks of
/// ψ₁(ν) − t E[ξ*((X_ν − X_μ)/t)], the coupling being the quantile one.
pub fn hopf_lax_single_type(
    xi: &Polynomial,
    psi1: &(dyn Fn(&[f64]) -> f64 + Sync),
    t: f64,
    mu: &DiscreteMeasure,
    k_opt: usize,
    restarts: usize,
    seed: u64,
) -> Result<Optimum> {
    if !(t > 0.0) {
        return domain("Hopf–Lax needs t > 0");
    }
    if k_opt == 0 {
        return domain("K_opt must be at least 1");
    }
    if mu.is_signed() {
        return domain("μ must live on ℝ₊");
    }
    let mu_steps = mu.quantile_steps();
    let penalty = |nu: &[f64]| -> f64 {
        merge_steps(&[block_steps(nu), mu_steps.clone()])
            .iter()
            .map(|s| s.len() * xi.conjugate((s.values[0] - s.values[1]) / t))
            .sum::<f64>()
    };
    let obj = |nu: &[f64]| psi1(nu) - t * penalty(nu);
    let hi = mu.max_location() + 2.0 * t * xi.derivative(1.0) + 1e-3;
    let blocks = Blocks { sizes: vec![k_opt], lo: 0.0, hi };
    let start = crate::measures::block_means(mu, k_opt)?;
    Ok(maximise(&obj, &blocks, start, restarts, seed))
}

/// sup over ν ∈ P([0, 2t])², each species K_opt quantile blocks, of
/// ψ(ν) − t^{-1} E[X_{ν₁} X_{ν₂}]; the argmax lists ν₁ then ν₂.
pub fn pierro_saddle_value(
    psi: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync),
    t: f64,
    k_opt: usize,
    restarts: usize,
    seed: u64,
) -> Result<Optimum> {
    if !(t > 0.0) {
        return domain("the saddle formula needs t > 0");
    }
    if k_opt == 0 {
        return domain("K_opt must be at least 1");
    }
    let obj = |x: &[f64]| {
        let (a, b) = x.split_at(k_opt);
        psi(a, b) - a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / (k_opt as f64 * t)
    };
    let blocks = Blocks { sizes: vec![k_opt, k_opt], lo: 0.0, hi: 2.0 * t };
    Ok(maximise(&obj, &blocks, vec![0.0; 2 * k_opt], restarts, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_energy::chi_profile;

    fn chi(q: f64) -> f64 {
        chi_profile(&DiscreteMeasure::rademacher(0.5).unwrap(), q, 30).unwrap().chi
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3f64).powi(2), 0.0, 1.0);
        assert!((x - 0.3).abs() < 1e-6 && v.abs() < 1e-12);
    }

    #[test]
    fn hopf_lax_small_time() {
        let xi = Polynomial::new(vec![0.0, 0.0, 1.0]).unwrap();
        let mu = DiscreteMeasure::dirac(0.4).unwrap();
        let psi1 = |nu: &[f64]| nu.iter().map(|&q| chi(q)).sum::<f64>() / nu.len() as f64;
        let r = hopf_lax_single_type(&xi, &psi1, 1e-3, &mu, 2, 4, 1).unwrap();
        assert!((r.value - chi(0.4)).abs() < 1e-3, "{r:?}");
        assert!(hopf_lax_single_type(&xi, &psi1, 0.0, &mu, 2, 4, 1).is_err());
    }

    #[test]
    fn pierro_small_time() {
        let psi = |a: &[f64], b: &[f64]| (chi(a[0]) + chi(b[0])) / 1.0;
        let r = pierro_saddle_value(&psi, 1e-3, 1, 4, 2).unwrap();
        assert!(r.value.abs() < 5e-3, "{r:?}");
        assert!(r.argmax.iter().all(|&x| x <= 2e-3));
    }
}
