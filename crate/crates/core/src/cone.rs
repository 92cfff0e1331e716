//! The closed ordered cone Ū_K = {0 ≤ x_1 ≤ … ≤ x_K} over (0,∞)^D or the
//! PSD matrices, its dual, boundary normals and scaled norms.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::SymMatrix;

pub const DEFAULT_TOL: f64 = 1e-9;

/// K×D array, row k holding the vector x_k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coords {
    k: usize,
    d: usize,
    data: Vec<f64>,
}

impl Coords {
    pub fn new(k: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 {
            return domain("cone coordinates need K ≥ 1 and D ≥ 1");
        }
        if data.len() != k * d {
            return domain(format!("expected {}×{} entries, got {}", k, d, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return domain("non-finite coordinate");
        }
        Ok(Coords { k, d, data })
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        Coords { k, d, data: vec![0.0; k * d] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return domain("ragged rows");
        }
        Coords::new(k, d, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, k: usize, d: usize) -> f64 {
        self.data[k * self.d + d]
    }

    pub fn set(&mut self, k: usize, d: usize, v: f64) {
        self.data[k * self.d + d] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn dot(&self, other: &Coords) -> f64 {
        assert_eq!((self.k, self.d), (other.k, other.d), "shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Σ_{ℓ≥k} x_ℓ for every k.
    pub fn tail_sums(&self) -> Coords {
        let mut out = self.clone();
        for k in (0..self.k.saturating_sub(1)).rev() {
            for d in 0..self.d {
                let v = out.get(k, d) + out.get(k + 1, d);
                out.set(k, d, v);
            }
        }
        out
    }

    fn same_shape(&self, other: &Coords) -> Result<()> {
        if (self.k, self.d) != (other.k, other.d) {
            return domain("shape mismatch");
        }
        Ok(())
    }
}

/// A point of Ū_K (validated at construction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConePoint(Coords);

impl ConePoint {
    pub fn new(c: Coords) -> Result<Self> {
        if !contains_bar_uk(&c, DEFAULT_TOL) {
            return domain("point is not in the closed ordered cone");
        }
        Ok(ConePoint(c))
    }

    pub fn into_inner(self) -> Coords {
        self.0
    }
}

impl Deref for ConePoint {
    type Target = Coords;
    fn deref(&self) -> &Coords {
        &self.0
    }
}

/// Element of the dual space, no sign constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualVector(pub Coords);

impl Deref for DualVector {
    type Target = Coords;
    fn deref(&self) -> &Coords {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrixPoint {
    pub mats: Vec<SymMatrix>,
}

impl SymmetricMatrixPoint {
    pub fn new(mats: Vec<SymMatrix>) -> Result<Self> {
        let d = mats.first().map(|m| m.dim());
        if d.is_none() || mats.iter().any(|m| Some(m.dim()) != d) {
            return domain("need K ≥ 1 matrices of equal size");
        }
        Ok(SymmetricMatrixPoint { mats })
    }

    pub fn dot(&self, other: &SymmetricMatrixPoint) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }
}

pub trait OrderedCone {
    fn in_bar_uk(&self, tol: f64) -> bool;
    fn in_dual_cone(&self, tol: f64) -> bool;
}

impl OrderedCone for Coords {
    fn in_bar_uk(&self, tol: f64) -> bool {
        for d in 0..self.d {
            if self.get(0, d) < -tol {
                return false;
            }
            for k in 1..self.k {
                if self.get(k, d) < self.get(k - 1, d) - tol {
                    return false;
                }
            }
        }
        true
    }

    fn in_dual_cone(&self, tol: f64) -> bool {
        self.tail_sums().data.iter().all(|&v| v >= -tol)
    }
}

impl OrderedCone for SymmetricMatrixPoint {
    fn in_bar_uk(&self, tol: f64) -> bool {
        if self.mats[0].min_eigenvalue() < -tol {
            return false;
        }
        self.mats.windows(2).all(|w| w[1].sub(&w[0]).min_eigenvalue() >= -tol)
    }

    fn in_dual_cone(&self, tol: f64) -> bool {
        let mut tail = self.mats.last().unwrap().clone();
        if tail.min_eigenvalue() < -tol {
            return false;
        }
        for m in self.mats.iter().rev().skip(1) {
            tail = tail.add(m);
            if tail.min_eigenvalue() < -tol {
                return false;
            }
        }
        true
    }
}

pub fn contains_bar_uk<T: OrderedCone + ?Sized>(x: &T, tol: f64) -> bool {
    x.in_bar_uk(tol)
}

pub fn contains_dual_cone<T: OrderedCone + ?Sized>(v: &T, tol: f64) -> bool {
    v.in_dual_cone(tol)
}

/// Generators of the normal cone at x: −e_{d,1} on the facets x_{1,d} = 0
/// and 2^{−1/2}(e_{d,k} − e_{d,k+1}) on the facets x_{k,d} = x_{k+1,d}.
pub fn normal_cone_generators(x: &Coords, tol: f64) -> Result<Vec<DualVector>> {
    if !contains_bar_uk(x, tol) {
        return domain("point is not in the closed ordered cone");
    }
    let mut out = Vec::new();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for d in 0..x.d {
        if x.get(0, d) <= tol {
            let mut g = Coords::zeros(x.k, x.d);
            g.set(0, d, -1.0);
            out.push(DualVector(g));
        }
        for k in 0..x.k - 1 {
            if x.get(k + 1, d) - x.get(k, d) <= tol {
                let mut g = Coords::zeros(x.k, x.d);
                g.set(k, d, r);
                g.set(k + 1, d, -r);
                out.push(DualVector(g));
            }
        }
    }
    Ok(out)
}

/// max over normal generators g of g·p; ≤ 0 iff p·ν ≤ 0 on all of n(x).
pub fn boundary_pairing(x: &Coords, p: &Coords, tol: f64) -> Result<f64> {
    x.same_shape(p)?;
    let gens = normal_cone_generators(x, tol)?;
    if gens.is_empty() {
        return domain("point is interior; no active facet");
    }
    Ok(gens.iter().map(|g| g.dot(p)).fold(f64::NEG_INFINITY, f64::max))
}

/// ((1/K)Σ|x_k|^ρ)^{1/ρ}, or the dual ((1/K)Σ(K|x_k|)^τ)^{1/τ}, with |·| the
/// Euclidean norm on ℝ^D and ρ = ∞ allowed.
pub fn scaled_norm(x: &Coords, rho: f64, dual: bool) -> Result<f64> {
    if rho.is_nan() || rho < 1.0 {
        return domain(format!("norm exponent {rho} < 1"));
    }
    let kf = x.k as f64;
    let (exp, scale) = if dual {
        let tau = if rho == 1.0 {
            f64::INFINITY
        } else if rho.is_infinite() {
            1.0
        } else {
            rho / (rho - 1.0)
        };
        (tau, kf)
    } else {
        (rho, 1.0)
    };
    let norms = (0..x.k).map(|k| scale * x.row(k).iter().map(|v| v * v).sum::<f64>().sqrt());
    if exp.is_infinite() {
        return Ok(norms.fold(0.0, f64::max));
    }
    Ok((norms.map(|v| v.powf(exp)).sum::<f64>() / kf).powf(1.0 / exp))
}

/// Scalar field sampled on a regular box grid in coordinate space (axes
/// ordered like `Coords::data`). Points outside the region of interest carry NaN.
#[derive(Clone, Debug)]
pub struct GridSample {
    pub k: usize,
    pub d: usize,
    pub origin: Vec<f64>,
    pub h: f64,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridSample {
    /// Samples `f` at every grid point lying in Ū_K; NaN elsewhere.
    pub fn from_fn<F: Fn(&Coords) -> f64>(k: usize, d: usize, origin: Vec<f64>, h: f64, counts: Vec<usize>, f: F) -> Result<Self> {
        let total: usize = counts.iter().product();
        let mut values = vec![f64::NAN; total];
        let dims = k * d;
        if origin.len() != dims || counts.len() != dims {
            return domain("grid shape does not match K×D");
        }
        for (flat, v) in values.iter_mut().enumerate() {
            let c = Self::point(&origin, h, &counts, flat);
            let x = Coords::new(k, d, c)?;
            if contains_bar_uk(&x, 1e-12) {
                *v = f(&x);
            }
        }
        Ok(GridSample { k, d, origin, h, counts, values })
    }

    fn point(origin: &[f64], h: f64, counts: &[usize], mut flat: usize) -> Vec<f64> {
        let mut c = vec![0.0; counts.len()];
        for j in (0..counts.len()).rev() {
            c[j] = origin[j] + h * (flat % counts[j]) as f64;
            flat /= counts[j];
        }
        c
    }
}

/// Every forward-difference gradient lies in Ū_K up to tol·(1+1/h).
pub fn tilted_check(f: &GridSample, tol: f64) -> Result<bool> {
    let dims = f.k * f.d;
    if !(f.h > 0.0) || f.counts.len() != dims || f.counts.iter().any(|&c| c < 2) {
        return domain("degenerate grid");
    }
    if f.values.len() != f.counts.iter().product::<usize>() {
        return domain("value count does not match grid");
    }
    let mut strides = vec![1usize; dims];
    for j in (0..dims - 1).rev() {
        strides[j] = strides[j + 1] * f.counts[j + 1];
    }
    let eff_tol = tol * (1.0 + 1.0 / f.h);
    let mut checked = 0usize;
    'points: for flat in 0..f.values.len() {
        let v = f.values[flat];
        if !v.is_finite() {
            continue;
        }
        let mut g = vec![0.0; dims];
        for j in 0..dims {
            let idx = (flat / strides[j]) % f.counts[j];
            if idx + 1 >= f.counts[j] {
                continue 'points;
            }
            let w = f.values[flat + strides[j]];
            if !w.is_finite() {
                continue 'points;
            }
            g[j] = (w - v) / f.h;
        }
        checked += 1;
        if !contains_bar_uk(&Coords::new(f.k, f.d, g)?, eff_tol) {
            return Ok(false);
        }
    }
    if checked == 0 {
        return domain("no grid point has a full forward stencil");
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c1(v: &[f64]) -> Coords {
        Coords::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn membership_examples() {
        assert!(contains_bar_uk(&c1(&[1.0, 3.0]), 0.0));
        assert!(!contains_bar_uk(&c1(&[3.0, 1.0]), 0.0));
        let x = SymmetricMatrixPoint::new(vec![SymMatrix::identity(2), SymMatrix::identity(2).scaled(2.0)]).unwrap();
        assert!(contains_bar_uk(&x, 1e-12));
        let y = SymmetricMatrixPoint::new(vec![SymMatrix::identity(2).scaled(2.0), SymMatrix::identity(2)]).unwrap();
        assert!(!contains_bar_uk(&y, 1e-12));
    }

    #[test]
    fn dual_examples() {
        assert!(contains_dual_cone(&c1(&[-1.0, 2.0]), 0.0));
        assert!(!contains_dual_cone(&c1(&[1.0, -0.5]), 0.0));
    }

    #[test]
    fn generator_examples() {
        assert!(normal_cone_generators(&c1(&[1.0, 3.0]), 1e-9).unwrap().is_empty());
        let g = normal_cone_generators(&c1(&[0.0, 3.0]), 1e-9).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].data(), &[-1.0, 0.0]);
        let g = normal_cone_generators(&c1(&[2.0, 2.0]), 1e-9).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].data(), &[r, -r]);
        assert!(normal_cone_generators(&c1(&[3.0, 1.0]), 1e-9).is_err());
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(boundary_pairing(&c1(&[0.0, 3.0]), &c1(&[5.0, 1.0]), 1e-9).unwrap(), -5.0);
        let v = boundary_pairing(&c1(&[2.0, 2.0]), &c1(&[1.0, 4.0]), 1e-9).unwrap();
        assert!((v + 3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(boundary_pairing(&c1(&[1.0, 3.0]), &c1(&[1.0, 4.0]), 1e-9).is_err());
    }

    #[test]
    fn norm_examples() {
        let x = c1(&[1.0, 3.0]);
        assert!((scaled_norm(&x, 2.0, false).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        assert!((scaled_norm(&x, 2.0, true).unwrap() - 20f64.sqrt()).abs() < 1e-13);
        assert!(scaled_norm(&x, 0.5, false).is_err());
    }

    #[test]
    fn tilted_examples() {
        let lin = GridSample::from_fn(2, 1, vec![0.0, 0.0], 0.25, vec![5, 5], |x| 0.7 * (x.get(0, 0) + x.get(1, 0))).unwrap();
        assert!(tilted_check(&lin, 1e-12).unwrap());
        let neg = GridSample::from_fn(2, 1, vec![0.0, 0.0], 0.25, vec![5, 5], |x| -x.get(0, 0)).unwrap();
        assert!(!tilted_check(&neg, 1e-12).unwrap());
        let flat = GridSample { k: 1, d: 1, origin: vec![0.0], h: 0.0, counts: vec![3], values: vec![0.0; 3] };
        assert!(tilted_check(&flat, 1e-9).is_err());
    }
}
