use crate::cascade::{recursive_integrate, CascadeSpec, LevelRule};
use crate::error::{domain, Result};
use crate::measures::{DiscreteMeasure, MeasurePair};
use crate::quadrature::GaussHermite;
use crate::rng::seeded;
use crate::stats::log_sum_exp;

/// ψ_a for the ladder of species a: minus the recursion applied to
/// log E_π exp(Σ_ℓ c_ℓ ω_ℓ x − q_k x²), with scalar Gaussian ω_ℓ.
pub fn species_psi(spec: &CascadeSpec, a: usize, pi: &DiscreteMeasure, order: usize) -> Result<f64> {
    if order < 10 {
        log::warn!("quadrature order {order} is low for ψ");
    }
    if order == 0 {
        return domain("quadrature order 0");
    }
    let k = spec.depth();
    let scales: Vec<f64> = (0..=k).map(|l| spec.field_scale(a, l)).collect();
    let live = scales.iter().filter(|&&c| c > 0.0).count() as i32;
    // nested rule: order^live terminal calls; field grid: about cells·order per level
    let tensor_cost = (order as f64).powi(live);
    let grid_cost = field_cells(&scales, order, FIELD_STEP) as f64 * order as f64 * live.max(1) as f64;
    if tensor_cost <= grid_cost {
        tensor_psi(spec, a, &scales, pi, order)
    } else {
        field_grid_psi(spec, a, &scales, pi, order, FIELD_STEP)
    }
}

const FIELD_STEP: f64 = 0.05;

/// Half-width of the field grid and its number of cells.
fn field_range(scales: &[f64], order: usize, step: f64) -> (f64, usize) {
    let z_max = GaussHermite::shared(order).nodes.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let r = scales.iter().sum::<f64>() * z_max + 1.0;
    (r, (2.0 * r / step).ceil() as usize)
}

fn field_cells(scales: &[f64], order: usize, step: f64) -> usize {
    field_range(scales, order, step).1
}

fn terminal_fn<'a>(spec: &CascadeSpec, a: usize, pi: &'a DiscreteMeasure) -> impl Fn(f64) -> f64 + 'a {
    let qk = spec.q(a, spec.depth());
    let log_w: Vec<f64> = pi.weights().iter().map(|w| w.ln()).collect();
    move |h: f64| {
        let terms: Vec<f64> = pi.locations().iter().zip(&log_w).map(|(x, lw)| lw + h * x - qk * x * x).collect();
        log_sum_exp(&terms)
    }
}

fn tensor_psi(spec: &CascadeSpec, a: usize, scales: &[f64], pi: &DiscreteMeasure, order: usize) -> Result<f64> {
    let g = terminal_fn(spec, a, pi);
    let terminal = |omegas: &[Vec<f64>]| g(omegas.iter().zip(scales).map(|(w, c)| c * w[0]).sum());
    let levels: Vec<LevelRule> = scales
        .iter()
        .map(|&c| if c > 0.0 { LevelRule::GaussHermite { order } } else { LevelRule::Fixed { dim: 1 } })
        .collect();
    // every rule is deterministic; the generator is never drawn from
    Ok(-recursive_integrate(terminal, spec, &levels, &mut seeded(0))?)
}

/// The same recursion with X_ℓ tabulated on a uniform grid in h = Σ c_ℓ ω_ℓ,
/// read back by 4-point Lagrange interpolation and linear extrapolation
/// (X_ℓ is asymptotically affine in h).
fn field_grid_psi(spec: &CascadeSpec, a: usize, scales: &[f64], pi: &DiscreteMeasure, order: usize, step: f64) -> Result<f64> {
    let k = spec.depth();
    let gh = GaussHermite::shared(order);
    let (r, cells) = field_range(scales, order, step);
    let dx = 2.0 * r / cells as f64;
    let grid: Vec<f64> = (0..=cells).map(|j| -r + j as f64 * dx).collect();
    let g = terminal_fn(spec, a, pi);
    let mut x: Vec<f64> = grid.iter().map(|&h| g(h)).collect();
    for l in (0..k).rev() {
        let c = scales[l + 1];
        if c == 0.0 {
            continue;
        }
        let zeta = spec.zeta(l + 1);
        if zeta <= 0.0 {
            return domain(format!("ζ_{} = 0; average linearly instead", l + 1));
        }
        x = grid
            .iter()
            .map(|&h| {
                let terms: Vec<f64> =
                    gh.nodes.iter().zip(&gh.weights).map(|(z, w)| zeta * interpolate(&x, r, dx, h + c * z) + w.ln()).collect();
                log_sum_exp(&terms) / zeta
            })
            .collect();
    }
    let total: f64 = if scales[0] > 0.0 {
        gh.nodes.iter().zip(&gh.weights).map(|(z, w)| w * interpolate(&x, r, dx, scales[0] * z)).sum()
    } else {
        interpolate(&x, r, dx, 0.0)
    };
    if !total.is_finite() {
        return domain("recursion produced a non-finite value");
    }
    Ok(-total)
}

fn interpolate(v: &[f64], r: f64, dx: f64, y: f64) -> f64 {
    let n = v.len() - 1;
    let s = (y + r) / dx;
    if s <= 0.0 {
        return v[0] + s * (v[1] - v[0]);
    }
    if s >= n as f64 {
        return v[n] + (s - n as f64) * (v[n] - v[n - 1]);
    }
    let j = (s.floor() as usize).clamp(1, n - 2) - 1;
    let u = s - j as f64;
    let (p0, p1, p2, p3) = (v[j], v[j + 1], v[j + 2], v[j + 3]);
    // Lagrange through the nodes at u = 0, 1, 2, 3
    -p0 * (u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0 + p1 * u * (u - 2.0) * (u - 3.0) / 2.0
        - p2 * u * (u - 1.0) * (u - 3.0) / 2.0
        + p3 * u * (u - 1.0) * (u - 2.0) / 6.0
}

/// ψ(μ) = ψ_1(μ_1) + ψ_2(μ_2), the enriched free energy at t = 0.
pub fn initial_condition_psi(mu: &MeasurePair, pi1: &DiscreteMeasure, pi2: &DiscreteMeasure, order: usize) -> Result<f64> {
    let spec = CascadeSpec::from_measure_pair(mu)?;
    Ok(species_psi(&spec, 0, pi1, order)? + species_psi(&spec, 1, pi2, order)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiProfile {
    pub chi: f64,
    pub d1: f64,
    pub d2: f64,
}

/// χ(h) = −E log⟨exp(√(2h) z σ − h σ²)⟩_π and its first two h-derivatives,
/// for π on {−1, 1}.
pub fn chi_profile(pi: &DiscreteMeasure, h: f64, order: usize) -> Result<ChiProfile> {
    if pi.locations().iter().any(|x| (x.abs() - 1.0).abs() > 1e-12) {
        return domain("χ needs a measure on {-1, 1}");
    }
    if !(h.is_finite() && h >= 0.0) {
        return domain(format!("h = {h} must be nonnegative"));
    }
    if order == 0 {
        return domain("quadrature order 0");
    }
    let gh = GaussHermite::shared(order);
    let c = (2.0 * h).sqrt();
    let (mut chi, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (&z, &w) in gh.nodes.iter().zip(&gh.weights) {
        let logs: Vec<f64> = pi.atoms().map(|(x, p)| p.ln() + c * z * x - h * x * x).collect();
        let lz = log_sum_exp(&logs);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for ((x, _), l) in pi.atoms().zip(&logs) {
            let g = (l - lz).exp();
            m1 += g * x;
            m2 += g * x * x;
        }
        chi -= w * lz;
        d1 += w * m1 * m1;
        d2 += w * 2.0 * (m2 - m1 * m1) * (m2 - 3.0 * m1 * m1);
    }
    Ok(ChiProfile { chi, d1, d2 })
}
