//! The bipartite model at finite N: energies, enriched free energy, Gibbs
//! replica statistics, the initial condition ψ and the appendix validators.

mod appendix;
mod ensemble;
mod model;
mod overlaps;
mod psi;
mod quenched;

pub use appendix::{gibp_check, perturbation_covariance_embed, CovarianceCertificate, GibpReport};
pub use ensemble::{GibbsEnsemble, ReplicaDraw};
pub use model::{
    compensated_energy, external_field_energy, interaction_energy, CascadeTruncation, DisorderSample, ModelSpec,
    SpinSpace, DEFAULT_ENUMERATION_BUDGET,
};
pub use overlaps::{
    conditional_variance_estimate, gibbs_overlap_stats, hj_residual_estimate, ConditionalVariance, OverlapStats,
    ResidualEstimate,
};
pub use psi::{chi_profile, initial_condition_psi, species_psi, ChiProfile};
pub use quenched::{
    free_energy_sample, quenched_free_energy, quenched_free_energy_recursive, quenched_free_energy_with,
    QuenchedSamples,
};
