//! Viscosity solutions of ∂_t f − H(∇f) = 0 on Ū_K with Neumann boundary
//! conditions, for K ∈ {1, 2}, plus the variational formulas of the
//! single-type and saddle-point kind.

mod field;
mod solver;
mod variational;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub use field::SolutionField;
pub use solver::{
    comparison_check, lift_and_compare, evaluate_at_measure, solve_hj, solve_viscous_reference, ComparisonReport,
    HjSolver, InitFn,
};
pub use variational::{hopf_lax_single_type, pierro_saddle_value, Optimum, DEFAULT_RESTARTS};

pub const DEFAULT_Q_MAX: f64 = 2.0;
/// added to every dissipation coefficient
const THETA_MARGIN: f64 = 0.1;

/// ξ(r) = Σ c_i r^i with c_i ≥ 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Polynomial {
    type Error = Error;
    fn try_from(c: Vec<f64>) -> Result<Self> {
        Polynomial::new(c)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return domain("ξ needs finite nonnegative coefficients (convexity on ℝ₊)");
        }
        Ok(Polynomial { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, c)| acc * r + i as f64 * c)
    }

    /// ξ*(s) = sup_{r ≥ 0} (r s − ξ(r)); +∞ when ξ grows at most linearly
    /// with slope below s.
    pub fn conjugate(&self, s: f64) -> f64 {
        let c0 = self.coeffs.first().copied().unwrap_or(0.0);
        if s <= self.derivative(0.0) {
            return -c0;
        }
        if self.coeffs.iter().skip(2).all(|&c| c == 0.0) {
            return f64::INFINITY;
        }
        let mut hi = 1.0;
        while self.derivative(hi) < s {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.derivative(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        r * s - self.eval(r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// H(p) = K Σ_ℓ p_{ℓ,1} p_{ℓ,2} on Ū_K over (0,∞)²
    Bipartite,
    /// H(p) = K^{-1} Σ_ℓ ξ(K p_ℓ) on Ū_K over (0,∞)
    SingleType { xi: Polynomial },
}

impl HamiltonianSpec {
    pub fn species(&self) -> usize {
        match self {
            HamiltonianSpec::Bipartite => 2,
            HamiltonianSpec::SingleType { .. } => 1,
        }
    }

    /// H at a gradient laid out level-major (p_{ℓ,a} at ℓ·D + a).
    pub fn eval(&self, k: usize, p: &[f64]) -> f64 {
        let kf = k as f64;
        match self {
            HamiltonianSpec::Bipartite => kf * p.chunks(2).map(|c| c[0] * c[1]).sum::<f64>(),
            HamiltonianSpec::SingleType { xi } => p.iter().map(|&x| xi.eval(kf * x)).sum::<f64>() / kf,
        }
    }

    /// Dissipation dominating |∂H/∂p_i| whenever every |p_j| ≤ lip.
    pub fn theta(&self, k: usize, lip: f64) -> f64 {
        let kf = k as f64;
        match self {
            HamiltonianSpec::Bipartite => kf * lip + THETA_MARGIN,
            HamiltonianSpec::SingleType { xi } => xi.derivative(kf * lip) + THETA_MARGIN,
        }
    }
}

fn default_q_max() -> f64 {
    DEFAULT_Q_MAX
}

/// Box [0, q_max]^{K·D} cut into n_cells per axis, integrated to t_final.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: usize,
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_final: f64,
    /// dissipation; derived from the initial Lipschitz constant when absent
    #[serde(default)]
    pub theta: Option<f64>,
}

impl GridSpec {
    pub fn new(k: usize, q_max: f64, n_cells: usize, t_final: f64) -> Self {
        GridSpec { k, q_max, n_cells, dt: None, t_final, theta: None }
    }

    pub fn h(&self) -> f64 {
        self.q_max / self.n_cells as f64
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return domain("K must be at least 1");
        }
        if self.k > 2 {
            return Err(Error::Unsupported(format!("K = {} grids (only K ≤ 2)", self.k)));
        }
        if !(self.q_max > 0.0 && self.q_max.is_finite()) || self.n_cells < 2 {
            return Err(Error::Config("grid needs q_max > 0 and at least two cells".into()));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("final time {} must be nonnegative", self.t_final)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config("dt must be positive".into()));
            }
        }
        if let Some(th) = self.theta {
            if !(th > 0.0 && th.is_finite()) {
                return Err(Error::Config("θ must be positive".into()));
            }
        }
        Ok(())
    }
}
