use rayon::prelude::*;

use super::field::{Geometry, SolutionField};
use super::{GridSpec, HamiltonianSpec};
use crate::cone::Coords;
use crate::error::{domain, Error, Result};
use crate::measures::{discretize_to_cone, MeasurePair};

pub type InitFn<'a> = &'a (dyn Fn(&Coords) -> f64 + Sync);

const LIPSCHITZ_WARN: f64 = 10.0;

/// For every sector point and axis, the backward and forward neighbours as
/// (grid index, offset): the neighbour value is f[index] + offset. Offsets
/// are nonzero only past the outer edge, where the ghost keeps the slope of
/// the initial data.
struct Stencil {
    geom: Geometry,
    sector: Vec<usize>,
    nbr: Vec<(usize, f64)>,
}

impl Stencil {
    fn build(geom: Geometry, init: InitFn) -> (Stencil, Vec<f64>) {
        let sector: Vec<usize> = (0..geom.total).filter(|&f| geom.in_sector(&geom.unflatten(f))).collect();
        let init_vals: Vec<f64> = sector.par_iter().map(|&f| init(&geom.coords(&geom.unflatten(f)))).collect();
        let mut values = vec![f64::NAN; geom.total];
        for (&f, &v) in sector.iter().zip(&init_vals) {
            values[f] = v;
        }
        let n = geom.n_cells as i64;
        let dims = geom.dims();
        let nbr: Vec<(usize, f64)> = sector
            .par_iter()
            .zip(&init_vals)
            .flat_map_iter(|(&f, &v)| {
                let idx = geom.unflatten(f);
                let mut out = Vec::with_capacity(2 * dims);
                for j in 0..dims {
                    for s in [-1i64, 1] {
                        let mut q = idx.clone();
                        q[j] += s;
                        geom.reflect(&mut q);
                        if q.iter().any(|&i| i > n) {
                            out.push((f, init(&geom.coords(&q)) - v));
                        } else {
                            out.push((geom.flatten(&q), 0.0));
                        }
                    }
                }
                out
            })
            .collect();
        (Stencil { geom, sector, nbr }, values)
    }

    fn neighbour(&self, values: &[f64], s: usize, j: usize, forward: bool) -> f64 {
        let (i, off) = self.nbr[s * 2 * self.geom.dims() + 2 * j + forward as usize];
        values[i] + off
    }

    /// Largest |difference| / h over all stencil links, ghosts included.
    fn max_slope(&self, values: &[f64]) -> f64 {
        let h = self.geom.h();
        let dims = self.geom.dims();
        self.sector
            .iter()
            .enumerate()
            .flat_map(|(s, &f)| {
                (0..2 * dims).map(move |e| {
                    let (i, off) = self.nbr[s * 2 * dims + e];
                    ((values[i] + off - values[f]) / h).abs()
                })
            })
            .fold(0.0, f64::max)
    }

    /// Discrete Lipschitz seminorm: max forward difference / h inside the grid.
    fn seminorm(&self, values: &[f64]) -> f64 {
        let h = self.geom.h();
        let dims = self.geom.dims();
        let mut m: f64 = 0.0;
        for (s, &f) in self.sector.iter().enumerate() {
            for j in 0..dims {
                let (i, off) = self.nbr[s * 2 * dims + 2 * j + 1];
                if off == 0.0 && i != f {
                    m = m.max(((values[i] - values[f]) / h).abs());
                }
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scheme {
    LaxFriedrichs { theta: f64 },
    Viscous { eps: f64 },
}

/// Explicit solver; each step is a pure function of the previous field.
pub struct HjSolver {
    ham: HamiltonianSpec,
    stencil: Stencil,
    values: Vec<f64>,
    scheme: Scheme,
    dt: f64,
    t_final: f64,
    time: f64,
    lipschitz: Vec<f64>,
    initial_slope: f64,
}

impl HjSolver {
    /// Monotone Lax–Friedrichs scheme
    /// f ← f + dt·[H(p̄) + Σ_i θ (p⁺_i − p⁻_i)/2], stable for dt ≤ h/(2·dim·θ).
    pub fn new(ham: &HamiltonianSpec, init: InitFn, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let geom = Geometry::new(grid.k, ham.species(), grid.n_cells, grid.q_max);
        let (stencil, values) = Stencil::build(geom, init);
        let lip = stencil.max_slope(&values);
        if lip > LIPSCHITZ_WARN {
            log::warn!("initial data has Lipschitz constant {lip:.2} on the grid");
        }
        let theta = grid.theta.unwrap_or_else(|| ham.theta(grid.k, lip));
        let mut s = HjSolver {
            ham: ham.clone(),
            lipschitz: vec![stencil.seminorm(&values)],
            initial_slope: stencil.max_slope(&values),
            stencil,
            values,
            scheme: Scheme::LaxFriedrichs { theta },
            dt: 0.0,
            t_final: grid.t_final,
            time: 0.0,
        };
        s.dt = s.choose_dt(grid.dt)?;
        Ok(s)
    }

    /// Centred scheme for ∂_t f − H(∇f) = εΔf with the same boundary
    /// treatment; K = 1 only.
    pub fn viscous(ham: &HamiltonianSpec, init: InitFn, grid: &GridSpec, eps: f64) -> Result<Self> {
        grid.validate()?;
        if grid.k != 1 {
            return Err(Error::Unsupported("viscous reference beyond K = 1".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return domain(format!("viscosity {eps} must be positive"));
        }
        let geom = Geometry::new(1, ham.species(), grid.n_cells, grid.q_max);
        let (stencil, values) = Stencil::build(geom, init);
        let mut s = HjSolver {
            ham: ham.clone(),
            lipschitz: vec![stencil.seminorm(&values)],
            initial_slope: stencil.max_slope(&values),
            stencil,
            values,
            scheme: Scheme::Viscous { eps },
            dt: 0.0,
            t_final: grid.t_final,
            time: 0.0,
        };
        s.dt = s.choose_dt(grid.dt)?;
        Ok(s)
    }

    fn stability_bound(&self) -> f64 {
        let h = self.stencil.geom.h();
        let dims = self.stencil.geom.dims() as f64;
        match self.scheme {
            Scheme::LaxFriedrichs { theta } => h / (2.0 * dims * theta),
            Scheme::Viscous { eps } => h * h / (4.0 * eps * dims),
        }
    }

    fn choose_dt(&self, requested: Option<f64>) -> Result<f64> {
        let bound = self.stability_bound();
        match requested {
            Some(dt) if dt > bound * (1.0 + 1e-12) => {
                Err(Error::Config(format!("dt = {dt:e} exceeds the stability bound {bound:e}")))
            }
            Some(dt) => Ok(dt),
            None if self.t_final > 0.0 => {
                let steps = (self.t_final / (0.9 * bound)).ceil().max(1.0);
                Ok(self.t_final / steps)
            }
            None => Ok(0.9 * bound),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn theta(&self) -> Option<f64> {
        match self.scheme {
            Scheme::LaxFriedrichs { theta } => Some(theta),
            Scheme::Viscous { .. } => None,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    /// Resets dissipation and step; only before the first step.
    fn set_theta(&mut self, theta: f64, dt: Option<f64>) -> Result<()> {
        if self.time > 0.0 {
            return Err(Error::Config("cannot change θ after stepping".into()));
        }
        self.scheme = Scheme::LaxFriedrichs { theta };
        self.dt = self.choose_dt(dt)?;
        Ok(())
    }

    fn step_by(&mut self, dt: f64) {
        let st = &self.stencil;
        let k = st.geom.k;
        let dims = st.geom.dims();
        let h = st.geom.h();
        let values = &self.values;
        let ham = &self.ham;
        let scheme = self.scheme;
        let new: Vec<f64> = st
            .sector
            .par_iter()
            .enumerate()
            .map_init(
                || vec![0.0; dims],
                |pbar, (s, &f)| {
                    let v = values[f];
                    let mut extra = 0.0;
                    for j in 0..dims {
                        let lo = st.neighbour(values, s, j, false);
                        let hi = st.neighbour(values, s, j, true);
                        pbar[j] = (hi - lo) / (2.0 * h);
                        extra += match scheme {
                            Scheme::LaxFriedrichs { theta } => theta * (hi - 2.0 * v + lo) / (2.0 * h),
                            Scheme::Viscous { eps } => eps * (hi - 2.0 * v + lo) / (h * h),
                        };
                    }
                    v + dt * (ham.eval(k, pbar) + extra)
                },
            )
            .collect();
        for (&f, v) in st.sector.iter().zip(new) {
            self.values[f] = v;
        }
        self.time += dt;
        self.lipschitz.push(self.stencil.seminorm(&self.values));
    }

    pub fn step(&mut self) {
        self.step_by(self.dt);
    }

    /// Steps until `t`, shortening the last step to land on it.
    pub fn advance_to(&mut self, t: f64) {
        while self.time < t - 1e-12 {
            let s = self.dt.min(t - self.time);
            self.step_by(s);
        }
    }

    pub fn field(&self) -> SolutionField {
        SolutionField {
            geom: self.stencil.geom.clone(),
            time: self.time,
            values: self.values.clone(),
            lipschitz: self.lipschitz.clone(),
        }
    }

    pub fn run(mut self) -> SolutionField {
        self.advance_to(self.t_final);
        self.field()
    }
}

pub fn solve_hj(ham: &HamiltonianSpec, init: InitFn, grid: &GridSpec) -> Result<SolutionField> {
    Ok(HjSolver::new(ham, init, grid)?.run())
}

pub fn solve_viscous_reference(ham: &HamiltonianSpec, init: InitFn, grid: &GridSpec, eps: f64) -> Result<SolutionField> {
    Ok(HjSolver::viscous(ham, init, grid, eps)?.run())
}

#[derive(Clone, Copy, Debug)]
pub struct ComparisonReport {
    /// max over steps and grid of u − v
    pub max_excess: f64,
    pub initial_excess: f64,
    /// max over steps of the seminorm, over the initial slope with ghost
    /// links counted (data past the edge flows in); worst of the two runs
    pub lipschitz_growth: f64,
    pub steps: usize,
}

impl ComparisonReport {
    pub fn comparison_holds(&self) -> bool {
        self.initial_excess > 1e-10 || self.max_excess <= 1e-10
    }

    pub fn lipschitz_preserved(&self, slack: f64) -> bool {
        self.lipschitz_growth <= 1.0 + slack
    }
}

/// Evolves u0 and v0 with the same θ and steps, tracking u − v.
pub fn comparison_check(ham: &HamiltonianSpec, u0: InitFn, v0: InitFn, grid: &GridSpec) -> Result<ComparisonReport> {
    let mut u = HjSolver::new(ham, u0, grid)?;
    let mut v = HjSolver::new(ham, v0, grid)?;
    let theta = u.theta().unwrap_or(0.0).max(v.theta().unwrap_or(0.0));
    u.set_theta(theta, grid.dt)?;
    v.set_theta(theta, grid.dt)?;
    let excess = |u: &HjSolver, v: &HjSolver| {
        u.stencil.sector.iter().map(|&f| u.values[f] - v.values[f]).fold(f64::NEG_INFINITY, f64::max)
    };
    let initial_excess = excess(&u, &v);
    let mut max_excess = initial_excess;
    let mut steps = 0;
    while u.time < grid.t_final - 1e-12 {
        let s = u.dt.min(grid.t_final - u.time);
        u.step_by(s);
        v.step_by(s);
        max_excess = max_excess.max(excess(&u, &v));
        steps += 1;
    }
    let growth = |s: &HjSolver| {
        let l0 = s.initial_slope;
        let lmax = s.lipschitz.iter().cloned().fold(0.0, f64::max);
        if l0 > 0.0 {
            lmax / l0
        } else if lmax > 1e-12 {
            f64::INFINITY
        } else {
            1.0
        }
    };
    Ok(ComparisonReport { max_excess, initial_excess, lipschitz_growth: growth(&u).max(growth(&v)), steps })
}

/// f^{(K)}(t, x^{(K)}(μ)) with K the depth of the field.
pub fn evaluate_at_measure(field: &SolutionField, mu: &MeasurePair) -> Result<f64> {
    if field.species() != 2 {
        return domain("measure pairs need a two-species field");
    }
    let x = discretize_to_cone(mu, field.k())?;
    field.value_at(&x)
}

/// sup over the given points x ∈ Ū_2 of |f^{(1)}(x̄) − f^{(2)}(x)|, with x̄ the
/// per-species mean of x.
pub fn lift_and_compare(f1: &SolutionField, f2: &SolutionField, points: &[Coords]) -> Result<f64> {
    if f1.k() != 1 || f2.k() != 2 || f1.species() != f2.species() {
        return domain("lifting compares a K = 1 field with a K = 2 field");
    }
    let d = f1.species();
    let mut worst: f64 = 0.0;
    for x in points {
        let mean: Vec<f64> = (0..d).map(|a| (x.get(0, a) + x.get(1, a)) / 2.0).collect();
        let lifted = f1.value_at(&Coords::new(1, d, mean)?)?;
        worst = worst.max((lifted - f2.value_at(x)?).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::tilted_check;

    fn affine(p: &[f64]) -> impl Fn(&Coords) -> f64 + Sync + '_ {
        move |x: &Coords| x.data().iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + 0.3
    }

    #[test]
    fn constant_data_is_exact() {
        for k in [1, 2] {
            let g = GridSpec::new(k, 1.0, 8, 0.5);
            let f = solve_hj(&HamiltonianSpec::Bipartite, &|_: &Coords| 1.25, &g).unwrap();
            assert!(f.points().all(|(_, v)| v == 1.25));
            assert_eq!(f.time, 0.5);
        }
    }

    #[test]
    fn affine_data_k1() {
        let p = [0.6, 0.9];
        let t = 0.5;
        let mut errs = vec![];
        for n in [16, 32] {
            let g = GridSpec::new(1, 1.0, n, t);
            let f = solve_hj(&HamiltonianSpec::Bipartite, &affine(&p), &g).unwrap();
            let err = f.points().map(|(x, v)| (v - affine(&p)(&x) - t * p[0] * p[1]).abs()).fold(0.0, f64::max);
            assert!(err <= 2.0 * g.h() * (1.0 + t), "n={n}: {err}");
            errs.push(err);
        }
        assert!(errs[1] <= errs[0] + 1e-12);
    }

    #[test]
    fn affine_data_k2() {
        // equal slopes across levels keep the data symmetric under swaps
        let p = [0.5, 0.8, 0.5, 0.8];
        let t = 0.25;
        let g = GridSpec::new(2, 1.0, 12, t);
        let f = solve_hj(&HamiltonianSpec::Bipartite, &affine(&p), &g).unwrap();
        let exact = |x: &Coords| affine(&p)(x) + t * 2.0 * (p[0] * p[1] + p[2] * p[3]);
        let err = f.points().map(|(x, v)| (v - exact(&x)).abs()).fold(0.0, f64::max);
        assert!(err <= 2.0 * g.h() * (1.0 + t), "{err}");
    }

    #[test]
    fn cfl_violation_is_config_error() {
        let mut g = GridSpec::new(1, 1.0, 8, 0.5);
        g.dt = Some(1.0);
        assert!(matches!(solve_hj(&HamiltonianSpec::Bipartite, &|_: &Coords| 0.0, &g), Err(Error::Config(_))));
        assert!(matches!(
            solve_viscous_reference(&HamiltonianSpec::Bipartite, &|_: &Coords| 0.0, &g, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn comparison_and_lipschitz() {
        let u0 = |x: &Coords| (3.0 * x.get(0, 0)).sin() * 0.3 + 0.5 * x.get(0, 1);
        let v0 = |x: &Coords| u0(x) + 0.1 * (x.get(0, 0) - 0.4).abs();
        let g = GridSpec::new(1, 1.0, 24, 0.5);
        let r = comparison_check(&HamiltonianSpec::Bipartite, &u0, &v0, &g).unwrap();
        assert!(r.initial_excess <= 0.0);
        assert!(r.comparison_holds());
        assert!(r.lipschitz_preserved(0.05), "{}", r.lipschitz_growth);
    }

    #[test]
    fn tilted_data_stays_tilted() {
        // convex increasing per coordinate: slopes grow with the level
        let init = |x: &Coords| x.data().iter().enumerate().map(|(j, v)| (0.3 + 0.1 * j as f64) * (v + 0.5 * v * v)).sum::<f64>();
        let g = GridSpec::new(2, 1.0, 8, 0.3);
        let mut s = HjSolver::new(&HamiltonianSpec::Bipartite, &init, &g).unwrap();
        assert!(tilted_check(&s.field().grid_sample(), 1e-9).unwrap());
        for t in [0.1, 0.2, 0.3] {
            s.advance_to(t);
            assert!(tilted_check(&s.field().grid_sample(), 1e-9).unwrap(), "t={t}");
        }
    }

    #[test]
    fn viscous_reference_converges() {
        let init = |x: &Coords| 0.5 * (2.0 * x.get(0, 0)).sin().abs() + 0.3 * x.get(0, 1);
        let g = GridSpec::new(1, 1.0, 32, 0.3);
        let f = solve_hj(&HamiltonianSpec::Bipartite, &init, &g).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let v = solve_viscous_reference(&HamiltonianSpec::Bipartite, &init, &g, eps).unwrap();
            let d = f.max_abs_diff(&v).unwrap();
            assert!(d < prev, "eps={eps}: {d} vs {prev}");
            prev = d;
        }
        let c = solve_viscous_reference(&HamiltonianSpec::Bipartite, &|_: &Coords| 2.0, &g, 0.1).unwrap();
        assert!(c.points().all(|(_, v)| v == 2.0));
    }

    #[test]
    fn interpolation_and_lifting() {
        let init = |x: &Coords| x.data().iter().sum::<f64>() / x.k() as f64;
        let f1 = solve_hj(&HamiltonianSpec::Bipartite, &init, &GridSpec::new(1, 1.0, 8, 0.0)).unwrap();
        let f2 = solve_hj(&HamiltonianSpec::Bipartite, &init, &GridSpec::new(2, 1.0, 8, 0.0)).unwrap();
        let mu = MeasurePair::dirac(0.0, 0.0).unwrap();
        assert_eq!(evaluate_at_measure(&f1, &mu).unwrap(), 0.0);
        let x = Coords::new(1, 2, vec![0.33, 0.71]).unwrap();
        assert!((f1.value_at(&x).unwrap() - 1.04).abs() < 1e-12);
        assert!(matches!(f1.value_at(&Coords::new(1, 2, vec![1.5, 0.0]).unwrap()), Err(Error::Extrapolation(_))));
        let pts = vec![
            Coords::new(2, 2, vec![0.2, 0.1, 0.2, 0.1]).unwrap(),
            Coords::new(2, 2, vec![0.1, 0.3, 0.6, 0.35]).unwrap(),
        ];
        assert!(lift_and_compare(&f1, &f2, &pts).unwrap() < 1e-12);
    }

    #[test]
    fn binary_round_trip() {
        let init = |x: &Coords| x.get(0, 0) * 0.5 + x.get(1, 1);
        let f = solve_hj(&HamiltonianSpec::Bipartite, &init, &GridSpec::new(2, 1.0, 4, 0.1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        f.write_binary(&p).unwrap();
        let g = SolutionField::read_binary(&p).unwrap();
        assert_eq!(g.time, f.time);
        assert!(g.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        f.write_csv(&dir.path().join("f.csv")).unwrap();
    }
}
