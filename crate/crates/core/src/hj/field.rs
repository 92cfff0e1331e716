use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cone::{Coords, GridSample};
use crate::error::{domain, Error, Result};

/// Index arithmetic on the box grid; axis j = ℓ·D + a, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Geometry {
    pub k: usize,
    pub d: usize,
    pub n_cells: usize,
    pub q_max: f64,
    pub strides: Vec<usize>,
    pub total: usize,
}

impl Geometry {
    pub fn new(k: usize, d: usize, n_cells: usize, q_max: f64) -> Self {
        let dims = k * d;
        let side = n_cells + 1;
        let mut strides = vec![1usize; dims];
        for j in (0..dims.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * side;
        }
        Geometry { k, d, n_cells, q_max, strides, total: side.pow(dims as u32) }
    }

    pub fn dims(&self) -> usize {
        self.k * self.d
    }

    pub fn h(&self) -> f64 {
        self.q_max / self.n_cells as f64
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<i64> {
        let side = self.n_cells + 1;
        let mut idx = vec![0i64; self.dims()];
        for j in (0..self.dims()).rev() {
            idx[j] = (flat % side) as i64;
            flat /= side;
        }
        idx
    }

    pub fn flatten(&self, idx: &[i64]) -> usize {
        idx.iter().zip(&self.strides).map(|(&i, s)| i as usize * s).sum()
    }

    pub fn in_sector(&self, idx: &[i64]) -> bool {
        (0..self.d).all(|a| (1..self.k).all(|l| idx[(l - 1) * self.d + a] <= idx[l * self.d + a]))
    }

    /// Image under the reflections across the facets q_{a,1} = 0 and
    /// q_{a,ℓ} = q_{a,ℓ+1}: absolute values, then sort each species.
    pub fn reflect(&self, idx: &mut [i64]) {
        let mut buf = vec![0i64; self.k];
        for a in 0..self.d {
            for l in 0..self.k {
                buf[l] = idx[l * self.d + a].abs();
            }
            buf.sort_unstable();
            for l in 0..self.k {
                idx[l * self.d + a] = buf[l];
            }
        }
    }

    pub fn coords(&self, idx: &[i64]) -> Coords {
        let h = self.h();
        Coords::new(self.k, self.d, idx.iter().map(|&i| i as f64 * h).collect()).expect("finite grid point")
    }
}

/// Grid values at one time; points outside the ordered sector hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionField {
    pub(crate) geom: Geometry,
    pub time: f64,
    pub values: Vec<f64>,
    /// discrete Lipschitz seminorm after each step, starting with the data
    pub lipschitz: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"HJF1";

impl SolutionField {
    pub fn k(&self) -> usize {
        self.geom.k
    }

    pub fn species(&self) -> usize {
        self.geom.d
    }

    pub fn n_cells(&self) -> usize {
        self.geom.n_cells
    }

    pub fn q_max(&self) -> f64 {
        self.geom.q_max
    }

    pub fn h(&self) -> f64 {
        self.geom.h()
    }

    /// Value at a grid point given by per-axis indices inside the sector.
    pub fn at_index(&self, idx: &[usize]) -> f64 {
        let i: Vec<i64> = idx.iter().map(|&x| x as i64).collect();
        self.values[self.geom.flatten(&i)]
    }

    /// (coordinates, value) for every sector point.
    pub fn points(&self) -> impl Iterator<Item = (Coords, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(flat, &v)| (self.geom.coords(&self.geom.unflatten(flat)), v))
    }

    /// Multilinear interpolation; stencil corners outside the sector are
    /// read through the boundary reflections.
    pub fn value_at(&self, x: &Coords) -> Result<f64> {
        let g = &self.geom;
        if x.k() != g.k || x.d() != g.d {
            return domain(format!("point of shape {}×{} on a {}×{} grid", x.k(), x.d(), g.k, g.d));
        }
        let h = g.h();
        let dims = g.dims();
        let mut base = vec![0i64; dims];
        let mut frac = vec![0.0; dims];
        for (j, &c) in x.data().iter().enumerate() {
            let u = c / h;
            if u < -1e-9 || u > g.n_cells as f64 + 1e-9 {
                return Err(Error::Extrapolation(format!("coordinate {c} outside [0, {}]", g.q_max)));
            }
            let i = (u.floor() as i64).clamp(0, g.n_cells as i64 - 1);
            base[j] = i;
            frac[j] = (u - i as f64).clamp(0.0, 1.0);
        }
        let mut total = 0.0;
        let mut corner = vec![0i64; dims];
        for mask in 0..(1usize << dims) {
            let mut w = 1.0;
            for j in 0..dims {
                let up = (mask >> j) & 1 == 1;
                corner[j] = base[j] + up as i64;
                w *= if up { frac[j] } else { 1.0 - frac[j] };
            }
            if w == 0.0 {
                continue;
            }
            g.reflect(&mut corner);
            total += w * self.values[g.flatten(&corner)];
        }
        Ok(total)
    }

    pub fn grid_sample(&self) -> GridSample {
        let g = &self.geom;
        GridSample {
            k: g.k,
            d: g.d,
            origin: vec![0.0; g.dims()],
            h: g.h(),
            counts: vec![g.n_cells + 1; g.dims()],
            values: self.values.clone(),
        }
    }

    pub fn max_abs_diff(&self, other: &SolutionField) -> Result<f64> {
        if self.geom != other.geom {
            return domain("fields live on different grids");
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, _)| !a.is_nan())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Long format: one row per sector point, columns q{ℓ}_{a} then value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = vec!["time".into()];
        for l in 1..=self.geom.k {
            for a in 1..=self.geom.d {
                header.push(format!("q{l}_{a}"));
            }
        }
        header.push("value".into());
        w.write_record(&header)?;
        for (x, v) in self.points() {
            let mut row = vec![self.time.to_string()];
            row.extend(x.data().iter().map(|c| c.to_string()));
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Header (magic, u32 K, u32 D, u32 cells, f64 q_max, f64 time, u64
    /// count) followed by the full grid as little-endian f64.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        for v in [self.geom.k, self.geom.d, self.geom.n_cells] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.geom.q_max.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return domain("not a solution-field dump");
        }
        let mut u32s = [0usize; 3];
        for v in u32s.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b) as usize;
        }
        let mut f = [0u8; 8];
        r.read_exact(&mut f)?;
        let q_max = f64::from_le_bytes(f);
        r.read_exact(&mut f)?;
        let time = f64::from_le_bytes(f);
        r.read_exact(&mut f)?;
        let count = u64::from_le_bytes(f) as usize;
        let geom = Geometry::new(u32s[0], u32s[1], u32s[2], q_max);
        if count != geom.total {
            return domain(format!("dump holds {count} values, grid needs {}", geom.total));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut f)?;
            values.push(f64::from_le_bytes(f));
        }
        Ok(SolutionField { geom, time, values, lipschitz: vec![] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_maps_into_sector() {
        let g = Geometry::new(2, 2, 4, 1.0);
        let mut idx = vec![-1, 2, 0, 1];
        g.reflect(&mut idx);
        assert_eq!(idx, vec![0, 1, 1, 2]);
        assert!(g.in_sector(&idx));
        assert_eq!(g.unflatten(g.flatten(&idx)), idx);
    }
}
