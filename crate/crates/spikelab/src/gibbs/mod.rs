//! Gibbs sampling over the posterior and the estimators built on it.

pub mod chain;
pub mod estimate;
pub mod vmf;

pub use chain::GibbsChain;
pub use estimate::{
    chain_overlap_histogram, estimate_matrix_mmse, exact_overlap_histogram_2x2,
    interpolation_overlap_oracle, overlap_variance_diagnostic, thermo_integration_mi,
    total_variation, GibbsParams, MmseEstimate, ThermoPoint, VarianceDiagnostic,
};
pub use vmf::sample_vmf;
