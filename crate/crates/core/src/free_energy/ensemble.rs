//! Exact enumeration of the Gibbs measure over (σ, α) for one disorder draw.
//!
//! The weight of (σ_1, σ_2, α) factors as w_α · e_1^α(σ_1) · B(σ_1, σ_2) ·
//! e_2^α(σ_2), where B carries P_N and the coupling energy and e_a^α the
//! cascade field of species a along the path of α. Every sum below is
//! organised around that factorisation.

use rand::Rng;

use super::model::{DisorderSample, ModelSpec, SpinSpace, DEFAULT_ENUMERATION_BUDGET};
use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

/// One summand over α: an explicit leaf, or the expected discarded tail
/// below a level-(k−1) vertex.
#[derive(Clone, Debug)]
struct Term {
    level: usize,
    vertex: usize,
    log_scale: f64,
    e1: Vec<f64>,
    e2: Vec<f64>,
    /// B̂ e2
    r: Vec<f64>,
    /// e1 · B̂ e2
    inner: f64,
}

impl Term {
    fn log_mass(&self) -> f64 {
        self.log_scale + self.inner.ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicaDraw {
    pub term: usize,
    pub sigma1: usize,
    pub sigma2: usize,
}

pub struct GibbsEnsemble<'a> {
    spins: [&'a SpinSpace; 2],
    n: usize,
    depth: usize,
    branching: usize,
    b_hat: Vec<f64>,
    terms: Vec<Term>,
    /// log Σ of unnormalised masses (cascade weights not normalised)
    log_mass_total: f64,
    /// log of the total cascade weight, explicit leaves plus tails
    log_cascade_total: f64,
}

impl<'a> GibbsEnsemble<'a> {
    pub fn new(model: &ModelSpec, spins: [&'a SpinSpace; 2], disorder: &DisorderSample) -> Result<Self> {
        let n = model.n();
        let spec = model.cascade();
        let k = spec.depth();
        let cascade = &disorder.cascade;
        let (n1, n2) = (spins[0].count, spins[1].count);
        let n_terms = cascade.n_leaves() + disorder.log_tail.as_ref().map_or(0, |t| t.len());
        if n1.saturating_mul(n2).saturating_mul(n_terms) > DEFAULT_ENUMERATION_BUDGET {
            return Err(Error::Resource(format!("{n1}×{n2} spin pairs × {n_terms} leaves exceeds enumeration budget")));
        }
        if disorder.n != n || spins[0].n != n || spins[1].n != n {
            return Err(Error::Domain("disorder, spin spaces and model disagree on N".into()));
        }

        // B(σ1,σ2) = P(σ1)P(σ2) exp(H^t)
        let t = model.t();
        let coupling = (2.0 * t).sqrt() / (n as f64).sqrt();
        let mut log_b = vec![0.0; n1 * n2];
        let mut proj = vec![0.0; n];
        for i1 in 0..n1 {
            let s1 = spins[0].config(i1);
            for (jcol, p) in proj.iter_mut().enumerate() {
                *p = (0..n).map(|i| s1[i] * disorder.j[i * n + jcol]).sum();
            }
            for i2 in 0..n2 {
                let s2 = spins[1].config(i2);
                let h: f64 = proj.iter().zip(s2).map(|(a, b)| a * b).sum();
                log_b[i1 * n2 + i2] = spins[0].log_prob[i1] + spins[1].log_prob[i2] + coupling * h
                    - t * spins[0].sq_norm[i1] * spins[1].sq_norm[i2] / n as f64;
            }
        }
        let b_max = log_b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let b_hat: Vec<f64> = log_b.iter().map(|x| (x - b_max).exp()).collect();

        // cascade fields accumulated level by level
        let field_vec = |a: usize, level: usize, v: usize| -> Vec<f64> {
            let c = spec.field_scale(a, level);
            let z = &disorder.field(level, v)[a * n..(a + 1) * n];
            let sp = spins[a];
            (0..sp.count).map(|i| c * sp.config(i).iter().zip(z).map(|(x, y)| x * y).sum::<f64>()).collect()
        };
        let mut fields: [Vec<Vec<f64>>; 2] = [vec![], vec![]];
        for a in 0..2 {
            let mut root = field_vec(a, 0, 0);
            let qk = spec.q(a, k);
            for (x, sq) in root.iter_mut().zip(&spins[a].sq_norm) {
                *x -= qk * sq;
            }
            fields[a] = vec![root];
        }
        let mut log_w = vec![0.0];
        let mut parent_fields: [Vec<Vec<f64>>; 2] = [vec![], vec![]];
        let mut parent_log_w = vec![];
        let m = cascade.branching();
        for level in 1..=k {
            if level == k {
                parent_fields = fields.clone();
                parent_log_w = log_w.clone();
            }
            let count = cascade.n_vertices(level);
            let mut next: [Vec<Vec<f64>>; 2] = [Vec::with_capacity(count), Vec::with_capacity(count)];
            let mut next_w = Vec::with_capacity(count);
            for v in 0..count {
                let p = v / m;
                for a in 0..2 {
                    let add = field_vec(a, level, v);
                    next[a].push(fields[a][p].iter().zip(&add).map(|(x, y)| x + y).collect());
                }
                next_w.push(log_w[p] + cascade.log_decoration(level, v));
            }
            fields = next;
            log_w = next_w;
        }

        let make_term = |level: usize, vertex: usize, lw: f64, l1: &[f64], l2: &[f64]| -> Term {
            let m1 = l1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let m2 = l2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e1: Vec<f64> = l1.iter().map(|x| (x - m1).exp()).collect();
            let e2: Vec<f64> = l2.iter().map(|x| (x - m2).exp()).collect();
            let r: Vec<f64> =
                (0..n1).map(|i| b_hat[i * n2..(i + 1) * n2].iter().zip(&e2).map(|(b, e)| b * e).sum()).collect();
            let inner = e1.iter().zip(&r).map(|(a, b)| a * b).sum();
            Term { level, vertex, log_scale: lw + m1 + m2 + b_max, e1, e2, r, inner }
        };

        let mut terms = Vec::with_capacity(n_terms);
        let mut cascade_logs = Vec::with_capacity(n_terms);
        for (v, lw) in log_w.iter().enumerate() {
            terms.push(make_term(k, v, *lw, &fields[0][v], &fields[1][v]));
            cascade_logs.push(*lw);
        }
        if let Some(tails) = &disorder.log_tail {
            let dq: Vec<f64> = (0..2).map(|a| spec.q(a, k) - spec.q(a, k - 1)).collect();
            for (p, lt) in tails.iter().enumerate() {
                let l: Vec<Vec<f64>> = (0..2)
                    .map(|a| {
                        parent_fields[a][p].iter().zip(&spins[a].sq_norm).map(|(x, sq)| x + dq[a] * sq).collect()
                    })
                    .collect();
                let lw = parent_log_w[p] + lt;
                terms.push(make_term(k - 1, p, lw, &l[0], &l[1]));
                cascade_logs.push(lw);
            }
        }
        let masses: Vec<f64> = terms.iter().map(|t| t.log_mass()).collect();
        let log_mass_total = log_sum_exp(&masses);
        let log_cascade_total = log_sum_exp(&cascade_logs);
        if !log_mass_total.is_finite() {
            return Err(Error::Domain("log-partition is not finite".into()));
        }
        Ok(GibbsEnsemble {
            spins,
            n,
            depth: k,
            branching: m,
            b_hat,
            terms,
            log_mass_total,
            log_cascade_total,
        })
    }

    /// log Σ_α Σ_σ exp(H^t + H^μ) v_α P_N(σ).
    pub fn log_partition(&self) -> f64 {
        self.log_mass_total - self.log_cascade_total
    }

    pub fn free_energy(&self) -> f64 {
        -self.log_partition() / self.n as f64
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Gibbs mass of each summand (explicit leaves first, then tails).
    pub fn term_masses(&self) -> Vec<f64> {
        self.terms.iter().map(|t| (t.log_mass() - self.log_mass_total).exp()).collect()
    }

    /// Gibbs probability of (σ1, σ2) in a given summand.
    pub fn gibbs_weight(&self, term: usize, sigma1: usize, sigma2: usize) -> f64 {
        let t = &self.terms[term];
        let n2 = self.spins[1].count;
        (t.log_scale - self.log_mass_total).exp() * t.e1[sigma1] * self.b_hat[sigma1 * n2 + sigma2] * t.e2[sigma2]
    }

    /// Per-summand sufficient statistics [W, s1, s2, S11, S22, S12].
    fn term_stats(&self, t: &Term) -> Vec<f64> {
        let n = self.n;
        let (sp1, sp2) = (self.spins[0], self.spins[1]);
        let (n1, n2) = (sp1.count, sp2.count);
        let s = (t.log_scale - self.log_mass_total).exp();
        let mut out = vec![0.0; 1 + 2 * n + 3 * n * n];
        out[0] = s * t.inner;
        let (s1_off, s2_off, s11_off, s22_off, s12_off) = (1, 1 + n, 1 + 2 * n, 1 + 2 * n + n * n, 1 + 2 * n + 2 * n * n);
        // species 1 marginal
        for i1 in 0..n1 {
            let g = s * t.e1[i1] * t.r[i1];
            if g == 0.0 {
                continue;
            }
            let x = sp1.config(i1);
            for i in 0..n {
                out[s1_off + i] += g * x[i];
                for j in 0..n {
                    out[s11_off + i * n + j] += g * x[i] * x[j];
                }
            }
        }
        // species 2 marginal: (B̂ᵀ e1)
        let mut c = vec![0.0; n2];
        for i1 in 0..n1 {
            let e = t.e1[i1];
            for (cv, b) in c.iter_mut().zip(&self.b_hat[i1 * n2..(i1 + 1) * n2]) {
                *cv += e * b;
            }
        }
        for i2 in 0..n2 {
            let g = s * t.e2[i2] * c[i2];
            if g == 0.0 {
                continue;
            }
            let x = sp2.config(i2);
            for i in 0..n {
                out[s2_off + i] += g * x[i];
                for j in 0..n {
                    out[s22_off + i * n + j] += g * x[i] * x[j];
                }
            }
        }
        // cross moment: Y[σ1] = Σ_σ2 B̂ e2 σ2
        let mut y = vec![0.0; n];
        for i1 in 0..n1 {
            y.iter_mut().for_each(|v| *v = 0.0);
            for i2 in 0..n2 {
                let w = self.b_hat[i1 * n2 + i2] * t.e2[i2];
                for (yv, x) in y.iter_mut().zip(sp2.config(i2)) {
                    *yv += w * x;
                }
            }
            let g = s * t.e1[i1];
            let x = sp1.config(i1);
            for i in 0..n {
                for j in 0..n {
                    out[s12_off + i * n + j] += g * x[i] * y[j];
                }
            }
        }
        out
    }

    /// Replica moments restricted to α∧α′ = ℓ, ℓ = 0..k, each row
    /// [⟨1⟩, ⟨R1 1⟩, ⟨R2 1⟩, ⟨R1² 1⟩, ⟨R2² 1⟩, ⟨R1 R2 1⟩] with R_a = σ_a·σ_a′/N.
    pub fn replica_moments(&self) -> Vec<[f64; 6]> {
        let n = self.n;
        let k = self.depth;
        let m = self.branching;
        let squares = |st: &[f64]| -> [f64; 6] {
            let sq = |r: std::ops::Range<usize>| st[r].iter().map(|x| x * x).sum::<f64>();
            let b1 = sq(1..1 + n);
            let b2 = sq(1 + n..1 + 2 * n);
            let c1 = sq(1 + 2 * n..1 + 2 * n + n * n);
            let c2 = sq(1 + 2 * n + n * n..1 + 2 * n + 2 * n * n);
            let d = sq(1 + 2 * n + 2 * n * n..1 + 2 * n + 3 * n * n);
            [st[0] * st[0], b1, b2, c1, c2, d]
        };
        let add = |acc: &mut [f64; 6], v: [f64; 6]| acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        let mut at_least = vec![[0.0; 6]; k + 1];
        let stats: Vec<Vec<f64>> = self.terms.iter().map(|t| self.term_stats(t)).collect();
        let explicit: Vec<&Vec<f64>> = stats.iter().zip(&self.terms).filter(|(_, t)| t.level == k).map(|(s, _)| s).collect();
        let mut cur: Vec<Vec<f64>> = explicit.iter().map(|s| (*s).clone()).collect();
        for s in &cur {
            add(&mut at_least[k], squares(s));
        }
        for level in (0..k).rev() {
            let count = self.branching.pow(level as u32);
            let mut next = vec![vec![0.0; stats[0].len()]; count];
            for (v, s) in cur.iter().enumerate() {
                next[v / m].iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
            if level + 1 == k {
                for (s, t) in stats.iter().zip(&self.terms) {
                    if t.level == level {
                        next[t.vertex].iter_mut().zip(s).for_each(|(a, b)| *a += b);
                    }
                }
            }
            for s in &next {
                add(&mut at_least[level], squares(s));
            }
            cur = next;
        }
        let nf = n as f64;
        let scale = [1.0, 1.0 / nf, 1.0 / nf, 1.0 / (nf * nf), 1.0 / (nf * nf), 1.0 / (nf * nf)];
        (0..=k)
            .map(|l| {
                let mut row = [0.0; 6];
                for c in 0..6 {
                    let upper = if l < k { at_least[l + 1][c] } else { 0.0 };
                    row[c] = (at_least[l][c] - upper) * scale[c];
                }
                row
            })
            .collect()
    }

    pub fn sample_replica<R: Rng + ?Sized>(&self, masses: &[f64], rng: &mut R) -> ReplicaDraw {
        let pick = |w: &mut dyn Iterator<Item = f64>, total: f64, u: f64| -> usize {
            let mut acc = 0.0;
            let mut last = 0;
            for (i, x) in w.enumerate() {
                acc += x;
                last = i;
                if u * total < acc {
                    return i;
                }
            }
            last
        };
        let term = pick(&mut masses.iter().cloned(), masses.iter().sum(), rng.gen());
        let t = &self.terms[term];
        let g1: Vec<f64> = t.e1.iter().zip(&t.r).map(|(a, b)| a * b).collect();
        let sigma1 = pick(&mut g1.iter().cloned(), t.inner, rng.gen());
        let n2 = self.spins[1].count;
        let row = &self.b_hat[sigma1 * n2..(sigma1 + 1) * n2];
        let sigma2 = pick(&mut row.iter().zip(&t.e2).map(|(b, e)| b * e), t.r[sigma1], rng.gen());
        ReplicaDraw { term, sigma1, sigma2 }
    }

    /// α∧α′ for two draws; two draws from the same tail summand sit in
    /// distinct (infinitesimal) leaves.
    pub fn wedge(&self, a: &ReplicaDraw, b: &ReplicaDraw) -> usize {
        let (ta, tb) = (&self.terms[a.term], &self.terms[b.term]);
        let top = ta.level.min(tb.level);
        let up = |v: usize, from: usize, to: usize| v / self.branching.pow((from - to) as u32);
        (0..=top).rev().find(|&l| up(ta.vertex, ta.level, l) == up(tb.vertex, tb.level, l)).unwrap_or(0)
    }

    /// (R1, R2) between two draws.
    pub fn overlaps(&self, a: &ReplicaDraw, b: &ReplicaDraw) -> (f64, f64) {
        let dot = |sp: &SpinSpace, i: usize, j: usize| sp.config(i).iter().zip(sp.config(j)).map(|(x, y)| x * y).sum::<f64>();
        let nf = self.n as f64;
        (dot(self.spins[0], a.sigma1, b.sigma1) / nf, dot(self.spins[1], a.sigma2, b.sigma2) / nf)
    }
}
