//! Poisson-Dirichlet cascades: the (ζ, q) ladder, truncated weight trees and
//! the recursive integration identity.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::measures::{merge_steps, DiscreteMeasure, MeasurePair, DEFAULT_Q_MAX};
use crate::quadrature::GaussHermite;
use crate::rng::task_rng;
use crate::stats::{log_sum_exp, Estimate, Welford};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct CascadeSpec {
    zetas: Vec<f64>,
    q: [Vec<f64>; 2],
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    zetas: Vec<f64>,
    q1: Vec<f64>,
    q2: Vec<f64>,
}

impl TryFrom<SpecRepr> for CascadeSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        CascadeSpec::new(r.zetas, r.q1, r.q2)
    }
}

impl From<CascadeSpec> for SpecRepr {
    fn from(s: CascadeSpec) -> Self {
        let [q1, q2] = s.q;
        SpecRepr { zetas: s.zetas, q1, q2 }
    }
}

impl CascadeSpec {
    pub fn new(zetas: Vec<f64>, q1: Vec<f64>, q2: Vec<f64>) -> Result<Self> {
        let k = zetas.len();
        if zetas.iter().any(|z| !z.is_finite()) {
            return domain("non-finite ζ");
        }
        if k > 0 && (zetas[0] <= 0.0 || zetas[k - 1] >= 1.0) {
            return domain("need 0 < ζ_1 and ζ_k < 1");
        }
        if zetas.windows(2).any(|w| w[1] < w[0]) {
            return domain("ζ must be nondecreasing");
        }
        for q in [&q1, &q2] {
            if q.len() != k + 1 {
                return domain(format!("q ladder needs {} entries, got {}", k + 1, q.len()));
            }
            if q.iter().any(|x| !x.is_finite()) || q[0] < 0.0 || q.windows(2).any(|w| w[1] < w[0]) {
                return domain("q ladder must be nonnegative and nondecreasing");
            }
        }
        Ok(CascadeSpec { zetas, q: [q1, q2] })
    }

    /// Depth-0 spec with a single level (q1, q2).
    pub fn flat(q1: f64, q2: f64) -> Result<Self> {
        Self::new(vec![], vec![q1], vec![q2])
    }

    /// Common ladder of a measure pair: ζ are the merged cumulative
    /// breakpoints, q_{a,ℓ} the quantile of μ_a on (ζ_ℓ, ζ_{ℓ+1}].
    pub fn from_measure_pair(mu: &MeasurePair) -> Result<Self> {
        let segs = merge_steps(&[mu.first.quantile_steps(), mu.second.quantile_steps()]);
        let zetas = segs[..segs.len() - 1].iter().map(|s| s.upper).collect();
        let q1 = segs.iter().map(|s| s.values[0]).collect();
        let q2 = segs.iter().map(|s| s.values[1]).collect();
        Self::new(zetas, q1, q2)
    }

    pub fn depth(&self) -> usize {
        self.zetas.len()
    }

    pub fn zetas(&self) -> &[f64] {
        &self.zetas
    }

    /// ζ_ℓ with ζ_0 = 0 and ζ_{k+1} = 1.
    pub fn zeta(&self, l: usize) -> f64 {
        match l {
            0 => 0.0,
            l if l > self.depth() => 1.0,
            l => self.zetas[l - 1],
        }
    }

    pub fn q_ladder(&self, a: usize) -> &[f64] {
        &self.q[a]
    }

    pub fn q(&self, a: usize, l: usize) -> f64 {
        self.q[a][l]
    }

    /// √(2q_{a,ℓ} − 2q_{a,ℓ−1}), with q_{a,−1} = 0.
    pub fn field_scale(&self, a: usize, l: usize) -> f64 {
        let prev = if l == 0 { 0.0 } else { self.q[a][l - 1] };
        (2.0 * (self.q[a][l] - prev)).max(0.0).sqrt()
    }

    pub fn measure(&self, a: usize) -> Result<DiscreteMeasure> {
        let k = self.depth();
        let atoms: Vec<(f64, f64)> = (0..=k).map(|l| (self.q[a][l], self.zeta(l + 1) - self.zeta(l))).collect();
        DiscreteMeasure::with_bound(&atoms, self.q[a][k].max(DEFAULT_Q_MAX))
    }

    pub fn measure_pair(&self) -> Result<MeasurePair> {
        Ok(MeasurePair::new(self.measure(0)?, self.measure(1)?))
    }

    /// Same measures with empty levels and repeated atoms merged.
    pub fn canonical(&self) -> Result<Self> {
        Self::from_measure_pair(&self.measure_pair()?)
    }

    /// Copy with one ladder entry replaced; fails if ordering breaks.
    pub fn with_q(&self, a: usize, l: usize, value: f64) -> Result<Self> {
        let mut q = self.q.clone();
        q[a][l] = value;
        let [q1, q2] = q;
        Self::new(self.zetas.clone(), q1, q2)
    }
}

/// Leaf weights of a truncated cascade with branching M. Leaves are indexed
/// row-major in their path digits, so the leaves below a level-ℓ vertex v
/// occupy the block [v·M^{k−ℓ}, (v+1)·M^{k−ℓ}).
#[derive(Clone, Debug)]
pub struct TruncatedCascade {
    depth: usize,
    branching: usize,
    /// log decorations per level ℓ = 1..k, M^ℓ entries each
    log_decorations: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
}

impl TruncatedCascade {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn n_leaves(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// log u_v of vertex v at level ℓ ≥ 1.
    pub fn log_decoration(&self, level: usize, v: usize) -> f64 {
        self.log_decorations[level - 1][v]
    }

    pub fn n_vertices(&self, level: usize) -> usize {
        self.branching.pow(level as u32)
    }

    pub fn leaf_path(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![0; self.depth];
        let mut x = leaf;
        for l in (0..self.depth).rev() {
            path[l] = x % self.branching;
            x /= self.branching;
        }
        path
    }

    /// Index of the level-ℓ ancestor of a leaf.
    pub fn ancestor(&self, leaf: usize, level: usize) -> usize {
        leaf / self.branching.pow((self.depth - level) as u32)
    }

    /// Total weight W_v below each vertex of a level.
    pub fn level_masses(&self, level: usize) -> Vec<f64> {
        let block = self.branching.pow((self.depth - level) as u32);
        self.weights.chunks(block).map(|c| c.iter().sum()).collect()
    }

    /// Exact law of α∧α′ for two independent draws from the weights.
    pub fn pair_law(&self) -> Vec<f64> {
        let at_least: Vec<f64> =
            (0..=self.depth).map(|l| self.level_masses(l).iter().map(|w| w * w).sum()).collect();
        (0..=self.depth)
            .map(|l| at_least[l] - if l < self.depth { at_least[l + 1] } else { 0.0 })
            .collect()
    }

    pub fn sample_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

pub fn alpha_wedge(a: &[usize], b: &[usize]) -> Result<usize> {
    if a.len() != b.len() {
        return domain(format!("paths of depth {} and {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).take_while(|(x, y)| x == y).count())
}

/// Decreasing PPP(ζ x^{−1−ζ}dx) atoms in log form: log u_i = −log(Γ_i)/ζ.
pub(crate) fn ppp_log_atoms<R: Rng + ?Sized>(zeta: f64, m: usize, rng: &mut R) -> (Vec<f64>, f64) {
    let mut gamma = 0.0;
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let e: f64 = Exp1.sample(rng);
        gamma += e;
        out.push(-gamma.ln() / zeta);
    }
    (out, gamma)
}

pub fn sample_cascade<R: Rng + ?Sized>(spec: &CascadeSpec, m: usize, rng: &mut R) -> Result<TruncatedCascade> {
    if m == 0 {
        return domain("truncation M must be positive");
    }
    let k = spec.depth();
    let mut log_decorations = Vec::with_capacity(k);
    let mut log_weights = vec![0.0];
    for l in 1..=k {
        let zeta = spec.zeta(l);
        let mut dec = Vec::with_capacity(log_weights.len() * m);
        let mut next = Vec::with_capacity(log_weights.len() * m);
        for &parent in &log_weights {
            let (atoms, _) = ppp_log_atoms(zeta, m, rng);
            for a in atoms {
                dec.push(a);
                next.push(parent + a);
            }
        }
        log_decorations.push(dec);
        log_weights = next;
    }
    let z = log_sum_exp(&log_weights);
    let log_weights: Vec<f64> = log_weights.iter().map(|x| x - z).collect();
    let weights = log_weights.iter().map(|x| x.exp()).collect();
    Ok(TruncatedCascade { depth: k, branching: if k == 0 { 1 } else { m }, log_decorations, log_weights, weights })
}

#[derive(Clone, Debug, Serialize)]
pub struct OverlapLaw {
    /// estimated P(α∧α′ = ℓ), ℓ = 0..k
    pub probabilities: Vec<Estimate>,
}

/// Average over independent cascades of the exact pair law of each cascade.
pub fn cascade_overlap_law(spec: &CascadeSpec, m: usize, n_cascades: usize, seed: u64) -> Result<OverlapLaw> {
    if n_cascades == 0 {
        return domain("need at least one cascade");
    }
    let laws: Vec<Vec<f64>> = (0..n_cascades)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            sample_cascade(spec, m, &mut rng).map(|c| c.pair_law())
        })
        .collect::<Result<_>>()?;
    let probabilities = (0..=spec.depth())
        .map(|l| laws.iter().map(|law| law[l]).collect::<Welford>().estimate())
        .collect();
    Ok(OverlapLaw { probabilities })
}

/// How ω_ℓ is integrated at one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LevelRule {
    /// scalar standard Gaussian, Gauss–Hermite nodes
    GaussHermite { order: usize },
    /// standard Gaussian vector, fresh Monte Carlo draws at every node
    MonteCarlo { samples: usize, dim: usize },
    /// ω_ℓ ≡ 0 of the given dimension (zero-variance level)
    Fixed { dim: usize },
}

impl LevelRule {
    fn points<R: Rng + ?Sized>(&self, gh: Option<&GaussHermite>, rng: &mut R) -> Vec<(Vec<f64>, f64)> {
        match *self {
            LevelRule::GaussHermite { .. } => {
                let gh = gh.expect("rule table built");
                gh.nodes.iter().zip(&gh.weights).map(|(&x, &w)| (vec![x], w)).collect()
            }
            LevelRule::MonteCarlo { samples, dim } => (0..samples)
                .map(|_| ((0..dim).map(|_| StandardNormal.sample(rng)).collect(), 1.0 / samples as f64))
                .collect(),
            LevelRule::Fixed { dim } => vec![(vec![0.0; dim], 1.0)],
        }
    }
}

/// X_k = terminal(ω_0..ω_k), X_{ℓ−1} = ζ_ℓ^{−1} log E_{ω_ℓ} exp(ζ_ℓ X_ℓ);
/// returns E_{ω_0} X_0.
pub fn recursive_integrate<F, R>(terminal: F, spec: &CascadeSpec, levels: &[LevelRule], rng: &mut R) -> Result<f64>
where
    F: Fn(&[Vec<f64>]) -> f64,
    R: Rng + ?Sized,
{
    let k = spec.depth();
    if levels.len() != k + 1 {
        return domain(format!("need {} level rules, got {}", k + 1, levels.len()));
    }
    for l in 1..=k {
        if spec.zeta(l) <= 0.0 {
            return domain(format!("ζ_{l} = 0; average linearly instead"));
        }
    }
    let mut tables = Vec::with_capacity(k + 1);
    for r in levels {
        match *r {
            LevelRule::GaussHermite { order: 0 } => return domain("quadrature order 0"),
            LevelRule::MonteCarlo { samples: 0, .. } => return domain("zero Monte Carlo samples"),
            LevelRule::GaussHermite { order } => tables.push(Some(GaussHermite::shared(order))),
            _ => tables.push(None),
        }
    }
    let mut omegas: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    let mut total = 0.0;
    for (w0, wt) in levels[0].points(tables[0].as_deref(), rng) {
        omegas.push(w0);
        total += wt * level_value(0, &terminal, spec, levels, &tables, &mut omegas, rng);
        omegas.pop();
    }
    if !total.is_finite() {
        return Err(Error::Domain("recursion produced a non-finite value".into()));
    }
    Ok(total)
}

/// X_ℓ given ω_0..ω_ℓ (already pushed).
fn level_value<F, R>(
    l: usize,
    terminal: &F,
    spec: &CascadeSpec,
    levels: &[LevelRule],
    tables: &[Option<Arc<GaussHermite>>],
    omegas: &mut Vec<Vec<f64>>,
    rng: &mut R,
) -> f64
where
    F: Fn(&[Vec<f64>]) -> f64,
    R: Rng + ?Sized,
{
    if l == spec.depth() {
        return terminal(omegas);
    }
    let zeta = spec.zeta(l + 1);
    let pts = levels[l + 1].points(tables[l + 1].as_deref(), rng);
    let mut vals = Vec::with_capacity(pts.len());
    for (w, wt) in pts {
        omegas.push(w);
        let x = level_value(l + 1, terminal, spec, levels, tables, omegas, rng);
        omegas.pop();
        vals.push(zeta * x + wt.ln());
    }
    log_sum_exp(&vals) / zeta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spec(z: &[f64]) -> CascadeSpec {
        let k = z.len();
        let q: Vec<f64> = (0..=k).map(|l| l as f64 / (k + 1) as f64).collect();
        CascadeSpec::new(z.to_vec(), q.clone(), q).unwrap()
    }

    #[test]
    fn wedge_examples() {
        assert_eq!(alpha_wedge(&[3, 1], &[3, 1]).unwrap(), 2);
        assert_eq!(alpha_wedge(&[1, 4], &[1, 7]).unwrap(), 1);
        assert_eq!(alpha_wedge(&[2, 0], &[3, 0]).unwrap(), 0);
        assert!(alpha_wedge(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(CascadeSpec::new(vec![0.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(CascadeSpec::new(vec![1.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(CascadeSpec::new(vec![0.6, 0.4], vec![0.0; 3], vec![0.0; 3]).is_err());
        assert!(CascadeSpec::new(vec![0.5], vec![0.5, 0.2], vec![0.0; 2]).is_err());
        assert!(CascadeSpec::new(vec![0.5], vec![0.0], vec![0.0; 2]).is_err());
        let s: CascadeSpec = serde_json::from_str(r#"{"zetas":[0.4],"q1":[0.1,0.3],"q2":[0.0,0.2]}"#).unwrap();
        assert_eq!(s.depth(), 1);
        let back: CascadeSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn measure_pair_ladder() {
        let m1 = DiscreteMeasure::new(&[(0.1, 0.3), (0.6, 0.7)]).unwrap();
        let m2 = DiscreteMeasure::new(&[(0.2, 0.5), (0.4, 0.5)]).unwrap();
        let s = CascadeSpec::from_measure_pair(&MeasurePair::new(m1.clone(), m2.clone())).unwrap();
        assert_eq!(s.zetas(), &[0.3, 0.5]);
        assert_eq!(s.q_ladder(0), &[0.1, 0.6, 0.6]);
        assert_eq!(s.q_ladder(1), &[0.2, 0.2, 0.4]);
        let back = s.measure_pair().unwrap();
        assert_eq!(back.first.locations(), m1.locations());
        assert!((back.first.weights()[0] - 0.3).abs() < 1e-15);
        assert_eq!(back.second.locations(), m2.locations());
        let d = CascadeSpec::from_measure_pair(&MeasurePair::dirac(0.2, 0.0).unwrap()).unwrap();
        assert_eq!(d.depth(), 0);
        let degenerate = CascadeSpec::new(vec![0.4, 0.4], vec![0.0, 0.1, 0.3], vec![0.0, 0.0, 0.2]).unwrap();
        let c = degenerate.canonical().unwrap();
        assert_eq!(c.zetas(), &[0.4]);
        assert_eq!(c.q_ladder(0), &[0.0, 0.3]);
    }

    #[test]
    fn depth_zero_cascade() {
        let c = sample_cascade(&CascadeSpec::flat(0.1, 0.2).unwrap(), 50, &mut seeded(0)).unwrap();
        assert_eq!(c.weights(), &[1.0]);
        assert!(sample_cascade(&spec(&[0.5]), 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn depth_one_weights_decrease() {
        let c = sample_cascade(&spec(&[0.5]), 100, &mut seeded(3)).unwrap();
        assert!(c.weights().iter().all(|&w| w > 0.0));
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.weights().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tree_indexing() {
        let c = sample_cascade(&spec(&[0.3, 0.7]), 5, &mut seeded(3)).unwrap();
        assert_eq!(c.n_leaves(), 25);
        assert_eq!(c.leaf_path(13), vec![2, 3]);
        assert_eq!(c.ancestor(13, 1), 2);
        let law = c.pair_law();
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((c.level_masses(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_law_single_level() {
        let law = cascade_overlap_law(&spec(&[0.5]), 200, 2000, 11).unwrap();
        for (p, target) in law.probabilities.iter().zip([0.5, 0.5]) {
            assert!((p.mean - target).abs() <= 3.0 * p.stderr + 0.02, "{p:?}");
        }
    }

    #[test]
    fn overlap_law_near_one() {
        // truncation at M = 200 leaves a visible bias here (≈0.84 instead of 0.99)
        let law = cascade_overlap_law(&spec(&[0.99]), 200, 200, 5).unwrap();
        let p = &law.probabilities;
        assert!(p[0].mean > 0.75 && p[0].mean > 4.0 * p[1].mean, "{p:?}");
    }

    #[test]
    fn recursion_constant_and_gaussian() {
        let mut rng = seeded(1);
        let s = spec(&[0.5]);
        let gh = LevelRule::GaussHermite { order: 40 };
        let c = recursive_integrate(|_| 1.7, &s, &[gh, gh], &mut rng).unwrap();
        assert!((c - 1.7).abs() < 1e-13);
        let a = 1.3;
        let v = recursive_integrate(|w| a * w[1][0], &s, &[gh, gh], &mut rng).unwrap();
        assert!((v - a * a / 4.0).abs() < 1e-12);
        let s0 = CascadeSpec::flat(0.0, 0.0).unwrap();
        let e = recursive_integrate(|w| w[0][0] * w[0][0], &s0, &[gh], &mut rng).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        assert!(recursive_integrate(|_| 0.0, &s, &[gh], &mut rng).is_err());
    }

    #[test]
    fn recursion_monotone_in_zeta() {
        let gh = LevelRule::GaussHermite { order: 30 };
        let terminal = |w: &[Vec<f64>]| (0.8 * w[1][0] - 0.3 * w[2][0]).sin() + 0.5 * w[2][0];
        let mut prev = f64::NEG_INFINITY;
        for z in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let v = recursive_integrate(terminal, &spec(&[z * 0.5, z]), &[gh; 3], &mut seeded(0)).unwrap();
            assert!(v >= prev - 1e-10);
            prev = v;
        }
    }
}
