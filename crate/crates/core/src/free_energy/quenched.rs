use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ensemble::GibbsEnsemble;
use super::model::{CascadeTruncation, DisorderSample, ModelSpec, SpinSpace};
use crate::cascade::{recursive_integrate, LevelRule};
use crate::error::{domain, Result};
use crate::rng::{derive_seed, task_rng};
use crate::stats::{log_sum_exp, Estimate, Welford};

/// F_N for one disorder draw, by exact enumeration.
pub fn free_energy_sample(model: &ModelSpec, disorder: &DisorderSample) -> Result<f64> {
    let s1 = SpinSpace::enumerate(model.pi(0), model.n())?;
    let s2 = SpinSpace::enumerate(model.pi(1), model.n())?;
    Ok(GibbsEnsemble::new(model, [&s1, &s2], disorder)?.free_energy())
}

/// Per-draw free energies. Draw i uses stream i of `seed`, and the draw
/// order inside DisorderSample does not depend on t or q, so two models
/// that differ only in those share their disorder.
#[derive(Clone, Debug)]
pub struct QuenchedSamples {
    pub values: Vec<f64>,
}

impl QuenchedSamples {
    pub fn estimate(&self) -> Estimate {
        self.values.iter().cloned().collect::<Welford>().estimate()
    }

    /// Paired difference (self − other) / scale.
    pub fn paired_difference(&self, other: &QuenchedSamples, scale: f64) -> Result<Estimate> {
        if self.values.len() != other.values.len() {
            return domain("paired samples of different sizes");
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) / scale).collect::<Welford>().estimate())
    }
}

pub fn quenched_free_energy_with(
    model: &ModelSpec,
    n_disorder: usize,
    trunc: &CascadeTruncation,
    seed: u64,
) -> Result<QuenchedSamples> {
    if n_disorder == 0 {
        return domain("need at least one disorder sample");
    }
    let s1 = SpinSpace::enumerate(model.pi(0), model.n())?;
    let s2 = SpinSpace::enumerate(model.pi(1), model.n())?;
    let values = (0..n_disorder)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let d = DisorderSample::draw(model, trunc, &mut rng)?;
            Ok(GibbsEnsemble::new(model, [&s1, &s2], &d)?.free_energy())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(QuenchedSamples { values })
}

/// Mean and standard error of F_N over i.i.d. disorder.
pub fn quenched_free_energy(model: &ModelSpec, n_disorder: usize, trunc: &CascadeTruncation, seed: u64) -> Result<Estimate> {
    Ok(quenched_free_energy_with(model, n_disorder, trunc, seed)?.estimate())
}

/// Second route: for each J, the cascade average is done by the level
/// recursion with `samples` Gaussian vectors per level instead of by
/// sampling the cascade; the result is averaged over J only.
pub fn quenched_free_energy_recursive(model: &ModelSpec, n_j: usize, samples: usize, seed: u64) -> Result<Estimate> {
    if n_j == 0 {
        return domain("need at least one coupling sample");
    }
    let n = model.n();
    let spec = model.cascade();
    let k = spec.depth();
    let s = [SpinSpace::enumerate(model.pi(0), n)?, SpinSpace::enumerate(model.pi(1), n)?];
    let t = model.t();
    let levels = vec![LevelRule::MonteCarlo { samples, dim: 2 * n }; k + 1];
    let vals = (0..n_j)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let j: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (n1, n2) = (s[0].count, s[1].count);
            let coupling = (2.0 * t).sqrt() / (n as f64).sqrt();
            let mut log_b = vec![0.0; n1 * n2];
            for i1 in 0..n1 {
                let x1 = s[0].config(i1);
                let proj: Vec<f64> = (0..n).map(|c| (0..n).map(|r| x1[r] * j[r * n + c]).sum()).collect();
                for i2 in 0..n2 {
                    let h: f64 = proj.iter().zip(s[1].config(i2)).map(|(a, b)| a * b).sum();
                    log_b[i1 * n2 + i2] = s[0].log_prob[i1] + s[1].log_prob[i2] + coupling * h
                        - t * s[0].sq_norm[i1] * s[1].sq_norm[i2] / n as f64;
                }
            }
            let species_field = |a: usize, omegas: &[Vec<f64>]| -> Vec<f64> {
                let qk = spec.q(a, k);
                (0..s[a].count)
                    .map(|c| {
                        let x = s[a].config(c);
                        let mut e = -qk * s[a].sq_norm[c];
                        for (l, w) in omegas.iter().enumerate() {
                            let sc = spec.field_scale(a, l);
                            e += sc * x.iter().zip(&w[a * n..(a + 1) * n]).map(|(p, q)| p * q).sum::<f64>();
                        }
                        e
                    })
                    .collect()
            };
            let terminal = |omegas: &[Vec<f64>]| -> f64 {
                let l1 = species_field(0, omegas);
                let l2 = species_field(1, omegas);
                let terms: Vec<f64> =
                    (0..n1 * n2).map(|idx| log_b[idx] + l1[idx / n2] + l2[idx % n2]).collect();
                log_sum_exp(&terms)
            };
            let mut inner = task_rng(derive_seed(seed, 1), i as u64);
            Ok(-recursive_integrate(terminal, spec, &levels, &mut inner)? / n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().collect::<Welford>().estimate())
}
