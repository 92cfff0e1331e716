use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cascade::{sample_cascade, CascadeSpec, TruncatedCascade};
use crate::error::{domain, Error, Result};
use crate::measures::DiscreteMeasure;
use crate::rng::task_rng;

pub const DEFAULT_ENUMERATION_BUDGET: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct ModelSpec {
    n: usize,
    pi: [DiscreteMeasure; 2],
    t: f64,
    cascade: CascadeSpec,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    n: usize,
    pi1: DiscreteMeasure,
    pi2: DiscreteMeasure,
    t: f64,
    cascade: CascadeSpec,
}

impl TryFrom<ModelRepr> for ModelSpec {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        ModelSpec::new(r.n, r.pi1, r.pi2, r.t, r.cascade)
    }
}

impl From<ModelSpec> for ModelRepr {
    fn from(m: ModelSpec) -> Self {
        let [pi1, pi2] = m.pi;
        ModelRepr { n: m.n, pi1, pi2, t: m.t, cascade: m.cascade }
    }
}

impl ModelSpec {
    pub fn new(n: usize, pi1: DiscreteMeasure, pi2: DiscreteMeasure, t: f64, cascade: CascadeSpec) -> Result<Self> {
        if n == 0 {
            return domain("N must be positive");
        }
        if !(t.is_finite() && t >= 0.0) {
            return domain(format!("t = {t} must be a nonnegative number"));
        }
        for pi in [&pi1, &pi2] {
            if pi.locations().iter().any(|x| x.abs() > 1.0) {
                return domain("spin measures must live on [-1, 1]");
            }
        }
        Ok(ModelSpec { n, pi: [pi1, pi2], t, cascade })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pi(&self, a: usize) -> &DiscreteMeasure {
        &self.pi[a]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn cascade(&self) -> &CascadeSpec {
        &self.cascade
    }

    pub fn with_t(&self, t: f64) -> Result<Self> {
        Self::new(self.n, self.pi[0].clone(), self.pi[1].clone(), t, self.cascade.clone())
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.pi[0].clone(), self.pi[1].clone(), self.t, self.cascade.clone())
    }

    pub fn with_cascade(&self, cascade: CascadeSpec) -> Result<Self> {
        Self::new(self.n, self.pi[0].clone(), self.pi[1].clone(), self.t, cascade)
    }
}

/// Every spin configuration of one species, with log-probability and |σ|².
#[derive(Clone, Debug)]
pub struct SpinSpace {
    pub n: usize,
    pub count: usize,
    /// count × n, row-major
    pub configs: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub sq_norm: Vec<f64>,
}

impl SpinSpace {
    pub fn enumerate(pi: &DiscreteMeasure, n: usize) -> Result<Self> {
        let s = pi.len();
        let count = s
            .checked_pow(n as u32)
            .filter(|&c| c <= DEFAULT_ENUMERATION_BUDGET)
            .ok_or_else(|| Error::Resource(format!("{s}^{n} spin configurations")))?;
        let locs = pi.locations();
        let lw: Vec<f64> = pi.weights().iter().map(|w| w.ln()).collect();
        let mut configs = Vec::with_capacity(count * n);
        let mut log_prob = Vec::with_capacity(count);
        let mut sq_norm = Vec::with_capacity(count);
        for c in 0..count {
            let mut x = c;
            let mut lp = 0.0;
            let mut sq = 0.0;
            for _ in 0..n {
                let d = x % s;
                x /= s;
                configs.push(locs[d]);
                lp += lw[d];
                sq += locs[d] * locs[d];
            }
            log_prob.push(lp);
            sq_norm.push(sq);
        }
        Ok(SpinSpace { n, count, configs, log_prob, sq_norm })
    }

    pub fn config(&self, i: usize) -> &[f64] {
        &self.configs[i * self.n..(i + 1) * self.n]
    }
}

/// Cascade truncation used when sampling disorder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeTruncation {
    pub branching: usize,
    /// Replace the discarded leaf-level atoms below each parent by their
    /// conditional mean mass, carrying the leaf field in expectation.
    pub leaf_tail: bool,
}

impl Default for CascadeTruncation {
    fn default() -> Self {
        CascadeTruncation { branching: 200, leaf_tail: true }
    }
}

impl CascadeTruncation {
    pub fn plain(branching: usize) -> Self {
        CascadeTruncation { branching, leaf_tail: false }
    }
}

/// Couplings J, vertex fields z and the cascade for one disorder draw.
#[derive(Clone, Debug)]
pub struct DisorderSample {
    pub n: usize,
    /// N×N, row i couples σ_{1,i}
    pub j: Vec<f64>,
    /// per level ℓ = 0..k: M^ℓ vertices × 2N (species 1 then species 2)
    pub fields: Vec<Vec<f64>>,
    pub cascade: TruncatedCascade,
    /// log of the expected discarded leaf mass below each level-(k−1) vertex
    pub log_tail: Option<Vec<f64>>,
}

impl DisorderSample {
    pub fn draw<R: Rng + ?Sized>(model: &ModelSpec, trunc: &CascadeTruncation, rng: &mut R) -> Result<Self> {
        let n = model.n;
        let spec = &model.cascade;
        let j = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        // separate streams, so that changing M keeps the top atoms and the
        // fields of the first vertices at each level
        let sub = rng.next_u64();
        let cascade = sample_cascade(spec, trunc.branching, &mut task_rng(sub, 1))?;
        let k = spec.depth();
        let mut field_rng = task_rng(sub, 2);
        let fields = (0..=k)
            .map(|l| (0..cascade.n_vertices(l) * 2 * n).map(|_| StandardNormal.sample(&mut field_rng)).collect())
            .collect();
        let log_tail = if trunc.leaf_tail && k >= 1 {
            let zeta = spec.zeta(k);
            let m = cascade.branching();
            let parents = cascade.n_vertices(k - 1);
            Some(
                (0..parents)
                    .map(|p| {
                        // last child decoration gives Γ_M
                        let log_gamma_m = -zeta * cascade.log_decoration(k, p * m + m - 1);
                        (zeta / (1.0 - zeta)).ln() + (1.0 - 1.0 / zeta) * log_gamma_m
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(DisorderSample { n, j, fields, cascade, log_tail })
    }

    /// z at vertex v of level ℓ, both species (length 2N).
    pub fn field(&self, level: usize, v: usize) -> &[f64] {
        &self.fields[level][v * 2 * self.n..(v + 1) * 2 * self.n]
    }

    /// z along the path of a leaf, root first.
    pub fn path_fields(&self, leaf: usize) -> Vec<&[f64]> {
        (0..=self.cascade.depth()).map(|l| self.field(l, self.cascade.ancestor(leaf, l))).collect()
    }
}

/// N^{−1/2} Σ J_ij σ_{1,i} σ_{2,j}; σ is (σ_1, σ_2) of length 2N.
pub fn interaction_energy(sigma: &[f64], j: &[f64]) -> Result<f64> {
    let n = sigma.len() / 2;
    if sigma.len() != 2 * n || j.len() != n * n {
        return domain(format!("spin length {} does not match J of size {}", sigma.len(), j.len()));
    }
    let (s1, s2) = sigma.split_at(n);
    let mut e = 0.0;
    for i in 0..n {
        let row = &j[i * n..(i + 1) * n];
        e += s1[i] * row.iter().zip(s2).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(e / (n as f64).sqrt())
}

/// √(2t)·H_N(σ) − t|σ_1|²|σ_2|²/N.
pub fn compensated_energy(sigma: &[f64], t: f64, j: &[f64]) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("t = {t} < 0"));
    }
    let h = interaction_energy(sigma, j)?;
    let n = sigma.len() / 2;
    let (s1, s2) = sigma.split_at(n);
    let n1: f64 = s1.iter().map(|x| x * x).sum();
    let n2: f64 = s2.iter().map(|x| x * x).sum();
    Ok((2.0 * t).sqrt() * h - t * n1 * n2 / n as f64)
}

/// Σ_a [Σ_ℓ √(2q_{a,ℓ} − 2q_{a,ℓ−1}) z_{α|ℓ,a}·σ_a − q_{a,k}|σ_a|²], with
/// `path[ℓ]` the 2N-vector z at the level-ℓ ancestor of α.
pub fn external_field_energy(sigma: &[f64], spec: &CascadeSpec, path: &[&[f64]]) -> Result<f64> {
    let n = sigma.len() / 2;
    let k = spec.depth();
    if sigma.len() != 2 * n || path.len() != k + 1 || path.iter().any(|z| z.len() != 2 * n) {
        return domain("field path does not match spin length or cascade depth");
    }
    let mut e = 0.0;
    for a in 0..2 {
        let s = &sigma[a * n..(a + 1) * n];
        for (l, z) in path.iter().enumerate() {
            let c = spec.field_scale(a, l);
            e += c * z[a * n..(a + 1) * n].iter().zip(s).map(|(x, y)| x * y).sum::<f64>();
        }
        e -= spec.q(a, k) * s.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn energy_examples() {
        assert_eq!(interaction_energy(&[1.0, 1.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(interaction_energy(&[1.0, -1.0, 1.0, 1.0], &[0.0; 4]).unwrap(), 0.0);
        assert!(interaction_energy(&[1.0, 1.0, 1.0], &[1.0]).is_err());
        assert_eq!(compensated_energy(&[1.0, 1.0], 0.0, &[0.7]).unwrap(), 0.0);
        assert_eq!(compensated_energy(&[0.0, 0.0], 0.4, &[0.7]).unwrap(), 0.0);
        assert!(compensated_energy(&[1.0, 1.0], -0.1, &[0.7]).is_err());
    }

    #[test]
    fn field_examples() {
        let z = [0.3, -1.2, 0.5, 2.0];
        let zero = CascadeSpec::flat(0.0, 0.0).unwrap();
        assert_eq!(external_field_energy(&[1.0, -1.0, 1.0, 1.0], &zero, &[&z]).unwrap(), 0.0);
        let (p1, p2) = (0.3, 0.7);
        let flat = CascadeSpec::flat(p1, p2).unwrap();
        let s = [1.0, -1.0, 0.5, 1.0];
        let expect = (2.0 * p1).sqrt() * (0.3 + 1.2) - p1 * 2.0 + (2.0 * p2).sqrt() * (0.25 + 2.0) - p2 * 1.25;
        assert!((external_field_energy(&s, &flat, &[&z]).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn spin_space_enumeration() {
        let pi = DiscreteMeasure::rademacher(0.25).unwrap();
        let sp = SpinSpace::enumerate(&pi, 3).unwrap();
        assert_eq!(sp.count, 8);
        let total: f64 = sp.log_prob.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(sp.sq_norm.iter().all(|&s| s == 3.0));
    }

    #[test]
    fn disorder_shapes() {
        let pi = DiscreteMeasure::rademacher(0.5).unwrap();
        let spec = CascadeSpec::new(vec![0.4], vec![0.1, 0.3], vec![0.0, 0.2]).unwrap();
        let m = ModelSpec::new(3, pi.clone(), pi, 0.5, spec).unwrap();
        let d = DisorderSample::draw(&m, &CascadeTruncation { branching: 7, leaf_tail: true }, &mut seeded(0)).unwrap();
        assert_eq!(d.j.len(), 9);
        assert_eq!(d.fields[0].len(), 6);
        assert_eq!(d.fields[1].len(), 42);
        assert_eq!(d.log_tail.as_ref().unwrap().len(), 1);
        assert_eq!(d.path_fields(5)[1], d.field(1, 5));
    }
}
