//! Finitely supported probability measures, quantile couplings and the
//! measure ↔ cone-point maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{contains_bar_uk, ConePoint, Coords, DEFAULT_TOL};
use crate::error::{domain, Error, Result};

pub const DEFAULT_Q_MAX: f64 = 1.0;

/// Cumulative breakpoints closer than this are treated as equal.
const SNAP: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Support {
    /// [0, q_max]
    NonNegative(f64),
    /// [-bound, bound], for spin reference measures
    Signed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct DiscreteMeasure {
    locations: Vec<f64>,
    weights: Vec<f64>,
    /// cumulative weights, last entry exactly 1
    cumulative: Vec<f64>,
    support: Support,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    atoms: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signed_bound: Option<f64>,
}

impl TryFrom<MeasureRepr> for DiscreteMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        match (r.q_max, r.signed_bound) {
            (_, Some(b)) => DiscreteMeasure::signed(&r.atoms, b),
            (Some(q), None) => DiscreteMeasure::with_bound(&r.atoms, q),
            (None, None) => {
                let top = r.atoms.iter().map(|a| a.0).fold(DEFAULT_Q_MAX, f64::max);
                DiscreteMeasure::with_bound(&r.atoms, top)
            }
        }
    }
}

impl From<DiscreteMeasure> for MeasureRepr {
    fn from(m: DiscreteMeasure) -> Self {
        let atoms = m.atoms().collect();
        match m.support {
            Support::NonNegative(q) if q == DEFAULT_Q_MAX => MeasureRepr { atoms, q_max: None, signed_bound: None },
            Support::NonNegative(q) => MeasureRepr { atoms, q_max: Some(q), signed_bound: None },
            Support::Signed(b) => MeasureRepr { atoms, q_max: None, signed_bound: Some(b) },
        }
    }
}

impl DiscreteMeasure {
    /// Measure on [0, 1].
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::with_bound(atoms, DEFAULT_Q_MAX)
    }

    pub fn with_bound(atoms: &[(f64, f64)], q_max: f64) -> Result<Self> {
        if !(q_max.is_finite() && q_max >= 0.0) {
            return domain(format!("invalid support bound {q_max}"));
        }
        Self::build(atoms, Support::NonNegative(q_max))
    }

    /// Measure on [−bound, bound]; used for the spin reference measures.
    pub fn signed(atoms: &[(f64, f64)], bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return domain(format!("invalid support bound {bound}"));
        }
        Self::build(atoms, Support::Signed(bound))
    }

    pub fn dirac(q: f64) -> Result<Self> {
        Self::with_bound(&[(q, 1.0)], q.max(DEFAULT_Q_MAX))
    }

    /// Equal weights on the given locations (repeats allowed).
    pub fn uniform(locations: &[f64], q_max: f64) -> Result<Self> {
        if locations.is_empty() {
            return domain("empty measure");
        }
        let w = 1.0 / locations.len() as f64;
        let atoms: Vec<(f64, f64)> = locations.iter().map(|&x| (x, w)).collect();
        Self::with_bound(&atoms, q_max)
    }

    /// Uniform ±1 spins with P[+1] = p.
    pub fn rademacher(p: f64) -> Result<Self> {
        Self::signed(&[(-1.0, 1.0 - p), (1.0, p)], 1.0)
    }

    fn build(atoms: &[(f64, f64)], support: Support) -> Result<Self> {
        let (lo, hi) = match support {
            Support::NonNegative(q) => (0.0, q),
            Support::Signed(b) => (-b, b),
        };
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for &(x, w) in atoms {
            if !x.is_finite() || !w.is_finite() {
                return domain("non-finite atom");
            }
            if w < 0.0 {
                return domain(format!("negative weight {w}"));
            }
            if x < lo || x > hi {
                return domain(format!("atom {x} outside support [{lo}, {hi}]"));
            }
            if w > 0.0 {
                pts.push((x, w));
            }
        }
        if pts.is_empty() {
            return domain("measure has no mass");
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut locations: Vec<f64> = Vec::with_capacity(pts.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pts.len());
        for (x, w) in pts {
            if locations.last() == Some(&x) {
                *weights.last_mut().unwrap() += w;
            } else {
                locations.push(x);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("weights sum to {total}, not 1"));
        }
        // skip rounding-level renormalisation so that serialisation round-trips
        if (total - 1.0).abs() > 1e-12 {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut c = 0.0;
        for w in &weights {
            c += w;
            cumulative.push(c);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(DiscreteMeasure { locations, weights, cumulative, support })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().cloned().zip(self.weights.iter().cloned())
    }

    pub fn support_bound(&self) -> f64 {
        match self.support {
            Support::NonNegative(q) | Support::Signed(q) => q,
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self.support, Support::Signed(_))
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, w)| x * w).sum()
    }

    pub fn moment(&self, p: i32) -> f64 {
        self.atoms().map(|(x, w)| x.powi(p) * w).sum()
    }

    pub fn max_location(&self) -> f64 {
        *self.locations.last().unwrap()
    }

    /// ν((−∞, x]).
    pub fn cdf(&self, x: f64) -> f64 {
        match self.locations.iter().rposition(|&l| l <= x) {
            Some(i) => self.cumulative[i],
            None => 0.0,
        }
    }

    pub fn inverse_cdf(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return domain(format!("quantile level {r} outside [0,1]"));
        }
        if r == 0.0 {
            return Ok(match self.support {
                Support::NonNegative(_) => 0.0,
                Support::Signed(_) => self.locations[0],
            });
        }
        let i = self.cumulative.iter().position(|&c| c >= r - SNAP).unwrap_or(self.len() - 1);
        Ok(self.locations[i])
    }

    /// Quantile function as steps (upper cumulative level, value).
    pub fn quantile_steps(&self) -> Vec<(f64, f64)> {
        self.cumulative.iter().cloned().zip(self.locations.iter().cloned()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        self.inverse_cdf(u).expect("uniform draw in [0,1)")
    }

    /// Same measure with a different support bound on ℝ₊.
    pub fn rebound(&self, q_max: f64) -> Result<Self> {
        Self::with_bound(&self.atoms().collect::<Vec<_>>(), q_max)
    }
}

/// One piece of the common refinement of several quantile step functions.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub lower: f64,
    pub upper: f64,
    pub values: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Common refinement of step functions on [0,1], each given as
/// (upper level, value) with last upper level 1.
pub fn merge_steps(steps: &[Vec<(f64, f64)>]) -> Vec<Segment> {
    let mut idx = vec![0usize; steps.len()];
    let mut lower = 0.0;
    let mut out = Vec::new();
    loop {
        if idx.iter().zip(steps).any(|(&i, s)| i >= s.len()) {
            break;
        }
        let upper = idx.iter().zip(steps).map(|(&i, s)| s[i].0).fold(f64::INFINITY, f64::min);
        let values = idx.iter().zip(steps).map(|(&i, s)| s[i].1).collect();
        if upper > lower {
            out.push(Segment { lower, upper, values });
        }
        lower = upper.max(lower);
        for (i, s) in idx.iter_mut().zip(steps) {
            if s[*i].0 <= upper + SNAP {
                *i += 1;
            }
        }
    }
    if let Some(last) = out.last_mut() {
        last.upper = 1.0;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurePair {
    pub first: DiscreteMeasure,
    pub second: DiscreteMeasure,
}

impl MeasurePair {
    pub fn new(first: DiscreteMeasure, second: DiscreteMeasure) -> Self {
        MeasurePair { first, second }
    }

    pub fn dirac(q1: f64, q2: f64) -> Result<Self> {
        Ok(MeasurePair { first: DiscreteMeasure::dirac(q1)?, second: DiscreteMeasure::dirac(q2)? })
    }

    pub fn get(&self, a: usize) -> &DiscreteMeasure {
        match a {
            0 => &self.first,
            1 => &self.second,
            _ => panic!("species index {a} out of range"),
        }
    }
}

pub fn quantile_coupling(mu: &MeasurePair, u: f64) -> Result<(f64, f64)> {
    Ok((mu.first.inverse_cdf(u)?, mu.second.inverse_cdf(u)?))
}

pub fn wasserstein_p(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: u32) -> Result<f64> {
    if p != 1 && p != 2 {
        return domain(format!("Wasserstein order {p} not supported (use 1 or 2)"));
    }
    let segs = merge_steps(&[mu.quantile_steps(), nu.quantile_steps()]);
    let s: f64 = segs.iter().map(|s| s.len() * (s.values[0] - s.values[1]).abs().powi(p as i32)).sum();
    Ok(s.powf(1.0 / p as f64))
}

/// K block averages of the quantile function, computed exactly.
pub fn block_means(mu: &DiscreteMeasure, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return domain("K must be positive");
    }
    let blocks: Vec<(f64, f64)> = (1..=k).map(|j| (j as f64 / k as f64, (j - 1) as f64)).collect();
    let mut out = vec![0.0; k];
    for s in merge_steps(&[mu.quantile_steps(), blocks]) {
        out[s.values[1] as usize] += s.len() * s.values[0];
    }
    let mut running = 0.0f64;
    for v in out.iter_mut() {
        *v = (*v * k as f64).max(running).max(0.0);
        running = *v;
    }
    Ok(out)
}

pub fn discretize_to_cone(mu: &MeasurePair, k: usize) -> Result<ConePoint> {
    let a = block_means(&mu.first, k)?;
    let b = block_means(&mu.second, k)?;
    let data = a.iter().zip(&b).flat_map(|(x, y)| [*x, *y]).collect();
    ConePoint::new(Coords::new(k, 2, data)?)
}

/// Species d of a cone point as an equal-weight measure.
pub fn cone_species_measure(x: &Coords, d: usize) -> Result<DiscreteMeasure> {
    let k = x.k();
    let locs: Vec<f64> = (0..k).map(|i| x.get(i, d)).collect();
    let top = locs.iter().cloned().fold(DEFAULT_Q_MAX, f64::max);
    DiscreteMeasure::uniform(&locs, top)
}

pub fn cone_to_measure_pair(x: &Coords) -> Result<MeasurePair> {
    if x.d() != 2 {
        return domain("measure pairs need D = 2");
    }
    if !contains_bar_uk(x, DEFAULT_TOL) {
        return domain("point is not in the closed ordered cone");
    }
    Ok(MeasurePair { first: cone_species_measure(x, 0)?, second: cone_species_measure(x, 1)? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSample {
    pairs: Vec<(f64, f64)>,
}

impl JointSample {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return domain("joint sample must be nonempty");
        }
        Ok(JointSample { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

pub fn monotone_coupling_law<R: Rng + ?Sized>(
    law_x: &DiscreteMeasure,
    law_y: &DiscreteMeasure,
    n: usize,
    rng: &mut R,
) -> Result<JointSample> {
    if n == 0 {
        return domain("sample count must be positive");
    }
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        pairs.push((law_x.inverse_cdf(u)?, law_y.inverse_cdf(u)?));
    }
    JointSample::new(pairs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    /// no pair with x < x′ and y′ < y
    pub no_crossing: bool,
    pub crossing_witness: Option<((f64, f64), (f64, f64))>,
    /// max over atom pairs of |P[X≤x, Y≤y] − min(P[X≤x], P[Y≤y])|
    pub max_cdf_gap: f64,
    pub cdf_min_identity: bool,
}

impl CouplingReport {
    pub fn is_monotone(&self) -> bool {
        self.no_crossing && self.cdf_min_identity
    }
}

pub fn monotone_coupling_check(s: &JointSample, tol: f64) -> CouplingReport {
    let mut pts = s.pairs.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // condition (1): scan x-groups, compare with the largest y seen at smaller x
    let mut witness = None;
    let mut best_prev: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < pts.len() && witness.is_none() {
        let mut j = i;
        while j < pts.len() && pts[j].0 == pts[i].0 {
            j += 1;
        }
        if let Some(prev) = best_prev {
            // smallest y of the group sits first after sorting
            if pts[i].1 < prev.1 {
                witness = Some((prev, pts[i]));
            }
        }
        let group_max = pts[j - 1];
        if best_prev.is_none_or(|p| group_max.1 > p.1) {
            best_prev = Some(group_max);
        }
        i = j;
    }

    // condition (2) at all atom pairs
    let n = pts.len();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let y_rank = |y: f64| ys.partition_point(|&v| v < y);
    let mut y_counts = vec![0usize; ys.len()];
    for p in &pts {
        y_counts[y_rank(p.1)] += 1;
    }
    let mut marg_y = vec![0usize; ys.len()];
    let mut acc = 0;
    for (m, c) in marg_y.iter_mut().zip(&y_counts) {
        acc += c;
        *m = acc;
    }
    let mut joint_counts = vec![0usize; ys.len()];
    let mut gap = 0usize;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && pts[j].0 == pts[i].0 {
            joint_counts[y_rank(pts[j].1)] += 1;
            j += 1;
        }
        let fx = j;
        let mut joint = 0usize;
        for (c, my) in joint_counts.iter().zip(&marg_y) {
            joint += c;
            gap = gap.max(joint.abs_diff(fx.min(*my)));
        }
        i = j;
    }
    let max_cdf_gap = gap as f64 / n as f64;
    CouplingReport {
        no_crossing: witness.is_none(),
        crossing_witness: witness,
        max_cdf_gap,
        cdf_min_identity: max_cdf_gap <= tol,
    }
}
