use std::time::Instant;

use super::{Criterion, ExperimentConfig, ResultRecord};
use crate::cascade::CascadeSpec;
use crate::cone::Coords;
use crate::error::{Error, Result};
use crate::free_energy::{initial_condition_psi, quenched_free_energy_with, species_psi, ModelSpec};
use crate::hj::{evaluate_at_measure, GridSpec, HamiltonianSpec, HjSolver, SolutionField};
use crate::measures::{cone_species_measure, cone_to_measure_pair, DiscreteMeasure, MeasurePair};
use crate::rng::derive_seed;
use crate::stats::Estimate;

/// x ↦ ψ(x) on Ū_K, reading each species of x as an equal-weight measure.
/// One species uses π₁ only. NaN where ψ cannot be evaluated.
pub fn psi_initial_data<'a>(
    species: usize,
    pi1: &'a DiscreteMeasure,
    pi2: &'a DiscreteMeasure,
    order: usize,
) -> impl Fn(&Coords) -> f64 + Sync + 'a {
    move |x: &Coords| {
        let v = if species == 2 {
            cone_to_measure_pair(x).and_then(|mu| initial_condition_psi(&mu, pi1, pi2, order))
        } else {
            cone_species_measure(x, 0)
                .and_then(|m| CascadeSpec::from_measure_pair(&MeasurePair::new(m.clone(), m)))
                .and_then(|spec| species_psi(&spec, 0, pi1, order))
        };
        v.unwrap_or(f64::NAN)
    }
}

fn check_finite(f: &SolutionField) -> Result<()> {
    if f.points().any(|(_, v)| !v.is_finite()) {
        return Err(Error::Domain("ψ could not be evaluated on the whole grid".into()));
    }
    Ok(())
}

/// f^{(K)} at grid.t_final started from ψ.
pub fn solve_psi_field(
    ham: &HamiltonianSpec,
    pi1: &DiscreteMeasure,
    pi2: &DiscreteMeasure,
    grid: &GridSpec,
    order: usize,
) -> Result<SolutionField> {
    let init = psi_initial_data(ham.species(), pi1, pi2, order);
    let f = HjSolver::new(ham, &init, grid)?.run();
    check_finite(&f)?;
    Ok(f)
}

/// Compares F̄_N(t, μ) with f^{(K)}(t, x^{(K)}(μ)) on the (t, N) grid of the
/// config. Each cell passes when F̄_N ≥ f − scheme error − 3·stderr, the
/// scheme error being |f_h − f_{2h}| at the evaluation point. One more
/// record per t checks the running minimum over increasing N.
pub fn run_lower_bound(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    if config.hamiltonian != HamiltonianSpec::Bipartite {
        return Err(Error::Config("the lower bound concerns the bipartite Hamiltonian".into()));
    }
    if config.t_values.is_empty() || config.n_values.is_empty() {
        return Err(Error::Config("lower bound needs t_values and n_values".into()));
    }
    let mut times = config.t_values.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let t_max = *times.last().expect("nonempty");
    let mut grid = config.grid.clone().unwrap_or_else(|| GridSpec::new(1, crate::hj::DEFAULT_Q_MAX, 128, t_max));
    grid.t_final = t_max;
    if grid.n_cells < 4 {
        return Err(Error::Config("the error estimate needs at least four cells".into()));
    }
    let mut coarse_grid = grid.clone();
    coarse_grid.n_cells = grid.n_cells / 2;
    coarse_grid.dt = grid.dt.map(|dt| 2.0 * dt);

    let start = Instant::now();
    let init = psi_initial_data(2, &config.pi1, &config.pi2, config.quadrature_order);
    let mut fine = HjSolver::new(&HamiltonianSpec::Bipartite, &init, &grid)?;
    let mut coarse = HjSolver::new(&HamiltonianSpec::Bipartite, &init, &coarse_grid)?;
    check_finite(&fine.field())?;
    let mut hj_values = Vec::with_capacity(times.len());
    for &t in &times {
        fine.advance_to(t);
        coarse.advance_to(t);
        let f = evaluate_at_measure(&fine.field(), &config.mu)?;
        let g = evaluate_at_measure(&coarse.field(), &config.mu)?;
        hj_values.push((f, (f - g).abs()));
    }
    let hj_time = start.elapsed().as_secs_f64();
    log::info!("HJ solves done in {hj_time:.1}s");

    let cascade = CascadeSpec::from_measure_pair(&config.mu)?;
    let mut ns = config.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut records = vec![];
    for (&t, &(f, err)) in times.iter().zip(&hj_values) {
        let mut running: Option<(Estimate, usize)> = None;
        for &n in &ns {
            let cell = Instant::now();
            let model = ModelSpec::new(n, config.pi1.clone(), config.pi2.clone(), t, cascade.clone())?;
            let est = quenched_free_energy_with(&model, config.n_disorder, &config.truncation, derive_seed(config.seed, n as u64))?
                .estimate();
            let params = [("t", t), ("N", n as f64), ("f", f), ("scheme_error", err), ("h", grid.h())];
            records.push(ResultRecord::assess("lower_bound", &params, Criterion::AtLeast(f), est, err, 3.0).timed(cell));
            if running.is_none_or(|(r, _)| est.mean < r.mean) {
                running = Some((est, n));
            }
            let (r, arg) = running.expect("set above");
            let params = [("t", t), ("N", n as f64), ("argmin_N", arg as f64), ("f", f), ("scheme_error", err)];
            records.push(ResultRecord::assess("lower_bound_running_min", &params, Criterion::AtLeast(f), r, err, 3.0).timed(cell));
        }
    }
    Ok(records)
}
