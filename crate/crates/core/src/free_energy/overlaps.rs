use std::collections::BTreeMap;

use rayon::prelude::*;

use super::ensemble::GibbsEnsemble;
use super::model::{CascadeTruncation, DisorderSample, ModelSpec, SpinSpace};
use crate::error::{domain, Result};
use crate::rng::{derive_seed, task_rng};
use crate::stats::{jackknife, Estimate, Welford};

const P: usize = 0;
const M1: usize = 1;
const V1: usize = 3;
const C12: usize = 5;
const WIDTH: usize = 6;
/// levels whose pair probability falls below this are left out
const EMPTY_CELL: f64 = 1e-12;
const KEY_SCALE: f64 = 1e9;

/// Disorder-averaged replica statistics. Each row holds, for one disorder
/// draw and every ℓ = 0..k, the exact Gibbs averages
/// ⟨1⟩, ⟨R1⟩, ⟨R2⟩, ⟨R1²⟩, ⟨R2²⟩, ⟨R1 R2⟩ restricted to α∧α′ = ℓ.
#[derive(Clone, Debug)]
pub struct OverlapStats {
    pub n: usize,
    pub zetas: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    /// sampled replica pairs keyed by (R1, R2, α∧α′), overlaps scaled by 1e9
    pub histogram: BTreeMap<(i64, i64, usize), u64>,
}

impl OverlapStats {
    pub fn depth(&self) -> usize {
        self.zetas.len()
    }

    fn zeta(&self, l: usize) -> f64 {
        match l {
            0 => 0.0,
            l if l > self.zetas.len() => 1.0,
            l => self.zetas[l - 1],
        }
    }

    fn column(&self, l: usize, c: usize) -> Estimate {
        self.rows.iter().map(|r| r[l * WIDTH + c]).collect::<Welford>().estimate()
    }

    /// E⟨1{α∧α′ = ℓ}⟩
    pub fn pair_law(&self) -> Vec<Estimate> {
        (0..=self.depth()).map(|l| self.column(l, P)).collect()
    }

    /// E⟨R1 R2⟩, the t-derivative of the quenched free energy.
    pub fn d_t(&self) -> Estimate {
        self.rows
            .iter()
            .map(|r| (0..=self.depth()).map(|l| r[l * WIDTH + C12]).sum::<f64>())
            .collect::<Welford>()
            .estimate()
    }

    /// E⟨R_a 1{α∧α′ = ℓ}⟩, the q_{a,ℓ}-derivative.
    pub fn d_q(&self, a: usize, l: usize) -> Estimate {
        self.column(l, M1 + a)
    }

    /// Joint histogram as ((R1, R2, α∧α′), count).
    pub fn histogram_entries(&self) -> Vec<((f64, f64, usize), u64)> {
        self.histogram
            .iter()
            .map(|(&(a, b, l), &c)| ((a as f64 / KEY_SCALE, b as f64 / KEY_SCALE, l), c))
            .collect()
    }

    fn live_levels(&self) -> (Vec<usize>, Vec<usize>) {
        let law = self.pair_law();
        (0..=self.depth()).partition(|&l| law[l].mean > EMPTY_CELL)
    }
}

pub fn gibbs_overlap_stats(
    model: &ModelSpec,
    n_disorder: usize,
    n_replica_pairs: usize,
    trunc: &CascadeTruncation,
    seed: u64,
) -> Result<OverlapStats> {
    if n_disorder == 0 {
        return domain("need at least one disorder sample");
    }
    let n = model.n();
    let s1 = SpinSpace::enumerate(model.pi(0), n)?;
    let s2 = SpinSpace::enumerate(model.pi(1), n)?;
    let per_draw = (0..n_disorder)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let d = DisorderSample::draw(model, trunc, &mut rng)?;
            let ens = GibbsEnsemble::new(model, [&s1, &s2], &d)?;
            let row: Vec<f64> = ens.replica_moments().into_iter().flatten().collect();
            let mut hist = BTreeMap::new();
            if n_replica_pairs > 0 {
                let masses = ens.term_masses();
                let mut rr = task_rng(derive_seed(seed, 2), i as u64);
                for _ in 0..n_replica_pairs {
                    let a = ens.sample_replica(&masses, &mut rr);
                    let b = ens.sample_replica(&masses, &mut rr);
                    let (r1, r2) = ens.overlaps(&a, &b);
                    let key = ((r1 * KEY_SCALE).round() as i64, (r2 * KEY_SCALE).round() as i64, ens.wedge(&a, &b));
                    *hist.entry(key).or_insert(0u64) += 1;
                }
            }
            Ok((row, hist))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(n_disorder);
    let mut histogram = BTreeMap::new();
    for (row, hist) in per_draw {
        rows.push(row);
        for (key, c) in hist {
            *histogram.entry(key).or_insert(0) += c;
        }
    }
    Ok(OverlapStats { n, zetas: model.cascade().zetas().to_vec(), rows, histogram })
}

#[derive(Clone, Debug)]
pub struct ResidualEstimate {
    /// |∂_t F̄ − Σ_ℓ (ζ_{ℓ+1} − ζ_ℓ)^{-1} ∂_{q_{1,ℓ}} F̄ ∂_{q_{2,ℓ}} F̄|
    pub residual: Estimate,
    /// Σ_a E⟨(R_a − E⟨R_a | α∧α′⟩)²⟩
    pub bound: Estimate,
    /// bound − residual, with its own (paired) error
    pub slack: Estimate,
    pub excluded_levels: Vec<usize>,
}

impl ResidualEstimate {
    /// residual ≤ bound up to `k_sigma` standard errors of the slack.
    pub fn holds(&self, k_sigma: f64) -> bool {
        self.slack.mean >= -k_sigma * self.slack.stderr
    }
}

pub fn hj_residual_estimate(model: &ModelSpec, stats: &OverlapStats) -> Result<ResidualEstimate> {
    let k = stats.depth();
    if model.cascade().depth() != k {
        return domain("model and statistics disagree on the cascade depth");
    }
    let (live, excluded) = stats.live_levels();
    if !excluded.is_empty() {
        log::warn!("levels {excluded:?} have no replica mass and are left out of the residual");
    }
    let gaps: Vec<f64> = (0..=k).map(|l| stats.zeta(l + 1) - stats.zeta(l)).collect();
    let residual_of = |m: &[f64]| -> f64 {
        let dt: f64 = (0..=k).map(|l| m[l * WIDTH + C12]).sum();
        let hj: f64 = live.iter().map(|&l| m[l * WIDTH + M1] * m[l * WIDTH + M1 + 1] / gaps[l]).sum();
        (dt - hj).abs()
    };
    let bound_of = |m: &[f64]| -> f64 {
        live.iter()
            .map(|&l| {
                let p = m[l * WIDTH + P];
                (0..2).map(|a| m[l * WIDTH + V1 + a] - m[l * WIDTH + M1 + a].powi(2) / p).sum::<f64>()
            })
            .sum()
    };
    Ok(ResidualEstimate {
        residual: jackknife(&stats.rows, residual_of),
        bound: jackknife(&stats.rows, bound_of),
        slack: jackknife(&stats.rows, |m| bound_of(m) - residual_of(m)),
        excluded_levels: excluded,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ConditionalVariance {
    /// E⟨(R_a − E⟨R_a | α∧α′⟩)²⟩
    pub conditional: Estimate,
    /// E⟨(R_a − E⟨R_a⟩)²⟩
    pub unconditional: Estimate,
}

/// Per species, the variance of the overlap left after conditioning on α∧α′.
pub fn conditional_variance_estimate(stats: &OverlapStats) -> [ConditionalVariance; 2] {
    let (live, _) = stats.live_levels();
    let k = stats.depth();
    [0, 1].map(|a| {
        let conditional = jackknife(&stats.rows, |m| {
            live.iter()
                .map(|&l| m[l * WIDTH + V1 + a] - m[l * WIDTH + M1 + a].powi(2) / m[l * WIDTH + P])
                .sum()
        });
        let unconditional = jackknife(&stats.rows, |m| {
            let v: f64 = (0..=k).map(|l| m[l * WIDTH + V1 + a]).sum();
            let r: f64 = (0..=k).map(|l| m[l * WIDTH + M1 + a]).sum();
            v - r * r
        });
        ConditionalVariance { conditional, unconditional }
    })
}
