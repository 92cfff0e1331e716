//! Experiment orchestration: JSON configs, result records with a criterion
//! fixed before the estimate is computed, the lower-bound pipeline, the
//! validation suite and CSV/JSON report emission.

pub mod instances;
mod lower_bound;
mod report;
mod suite;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_energy::{CascadeTruncation, ModelSpec};
use crate::hj::{GridSpec, HamiltonianSpec};
use crate::measures::{DiscreteMeasure, MeasurePair};
use crate::stats::Estimate;

pub use lower_bound::{psi_initial_data, run_lower_bound, solve_psi_field};
pub use report::{emit_report, ReportFormat, RECORD_COLUMNS};
pub use suite::run_validation_suite;

fn uniform_spins() -> DiscreteMeasure {
    DiscreteMeasure::rademacher(0.5).expect("valid measure")
}

fn origin() -> MeasurePair {
    MeasurePair::dirac(0.0, 0.0).expect("valid measure")
}

fn default_disorder() -> usize {
    1000
}

fn default_order() -> usize {
    crate::quadrature::DEFAULT_ORDER
}

fn default_k_opt() -> usize {
    4
}

fn default_restarts() -> usize {
    crate::hj::DEFAULT_RESTARTS
}

fn bipartite() -> HamiltonianSpec {
    HamiltonianSpec::Bipartite
}

/// Everything a run needs. Only `name` and `seed` are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "uniform_spins")]
    pub pi1: DiscreteMeasure,
    #[serde(default = "uniform_spins")]
    pub pi2: DiscreteMeasure,
    #[serde(default = "origin")]
    pub mu: MeasurePair,
    /// used by estimate-free-energy; N and t are swept when n_values/t_values are set
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "bipartite")]
    pub hamiltonian: HamiltonianSpec,
    #[serde(default)]
    pub t_values: Vec<f64>,
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default = "default_disorder")]
    pub n_disorder: usize,
    #[serde(default)]
    pub truncation: CascadeTruncation,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    /// P[σ = 1] values for the χ probes
    #[serde(default)]
    pub p_values: Vec<f64>,
    #[serde(default)]
    pub h_values: Vec<f64>,
    #[serde(default = "default_k_opt")]
    pub k_opt: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// dev mode: one suite tolerance is deliberately broken
    #[serde(default)]
    pub negative_control: bool,
}

impl ExperimentConfig {
    pub fn new(name: &str, seed: u64) -> Self {
        ExperimentConfig {
            name: name.into(),
            seed,
            pi1: uniform_spins(),
            pi2: uniform_spins(),
            mu: origin(),
            model: None,
            grid: None,
            hamiltonian: bipartite(),
            t_values: vec![],
            n_values: vec![],
            n_disorder: default_disorder(),
            truncation: CascadeTruncation::default(),
            quadrature_order: default_order(),
            p_values: vec![],
            h_values: vec![],
            k_opt: default_k_opt(),
            restarts: default_restarts(),
            output_dir: None,
            negative_control: false,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.t_values.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Config(format!("time {t} must be finite and nonnegative")));
        }
        if self.n_values.contains(&0) {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.n_disorder < 2 {
            return Err(Error::Config("need at least two disorder samples for a standard error".into()));
        }
        if self.k_opt == 0 {
            return Err(Error::Config("k_opt must be at least 1".into()));
        }
        Ok(())
    }
}

/// Declared before the estimate exists; `pass` follows mechanically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum Criterion {
    AtLeast(f64),
    AtMost(f64),
    Near(f64),
    Report,
}

impl Criterion {
    pub fn target(&self) -> Option<f64> {
        match *self {
            Criterion::AtLeast(b) | Criterion::AtMost(b) | Criterion::Near(b) => Some(b),
            Criterion::Report => None,
        }
    }

    /// slack = deterministic tolerance + sigmas·stderr
    pub fn judge(&self, estimate: f64, slack: f64) -> Option<bool> {
        if !estimate.is_finite() {
            return self.target().map(|_| false);
        }
        match *self {
            Criterion::AtLeast(b) => Some(estimate >= b - slack),
            Criterion::AtMost(b) => Some(estimate <= b + slack),
            Criterion::Near(b) => Some((estimate - b).abs() <= slack),
            Criterion::Report => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub params: BTreeMap<String, f64>,
    pub criterion: Criterion,
    pub estimate: f64,
    pub stderr: f64,
    pub n: u64,
    pub tolerance: f64,
    /// multiple of stderr added to the tolerance
    pub sigmas: f64,
    /// None for report-only records
    pub pass: Option<bool>,
    pub wall_time_s: f64,
}

impl ResultRecord {
    pub fn assess(
        experiment: &str,
        params: &[(&str, f64)],
        criterion: Criterion,
        estimate: Estimate,
        tolerance: f64,
        sigmas: f64,
    ) -> Self {
        let pass = criterion.judge(estimate.mean, tolerance + sigmas * estimate.stderr);
        ResultRecord {
            experiment: experiment.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            criterion,
            estimate: estimate.mean,
            stderr: estimate.stderr,
            n: estimate.n,
            tolerance,
            sigmas,
            pass,
            wall_time_s: 0.0,
        }
    }

    /// Deterministic quantity: stderr 0, one evaluation.
    pub fn exact(experiment: &str, params: &[(&str, f64)], criterion: Criterion, value: f64, tolerance: f64) -> Self {
        Self::assess(experiment, params, criterion, Estimate { mean: value, stderr: 0.0, n: 1 }, tolerance, 0.0)
    }

    pub fn timed(mut self, start: Instant) -> Self {
        self.wall_time_s = start.elapsed().as_secs_f64();
        self
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }

    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "REPORT",
        }
    }

    /// "k=v;k=v" in key order.
    pub fn params_string(&self) -> String {
        self.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }
}

pub fn any_failed(records: &[ResultRecord]) -> bool {
    records.iter().any(ResultRecord::failed)
}
